use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Above this many states the Gauss-Seidel path is used under
/// [`SolverKind::Auto`].
pub const DENSE_LIMIT: usize = 4096;

const RESIDUAL_TARGET: f64 = 1e-13;
const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SolverKind {
    #[default]
    Auto,
    Dense,
    Sparse,
}

/// Square sparse matrix in compressed rows, columns ascending within a row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub(crate) fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in rows {
            offsets.push(cols.len());
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
        }
        offsets.push(cols.len());
        Self { n, offsets, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.offsets[r]..self.offsets[r + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (r, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n];
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                rows[c].push((r, v));
            }
        }
        Self::from_rows(self.n, rows)
    }

    /// `y = M x`
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }
}

/// Solves `(I - gamma P) x = b` and its transpose for a fixed policy chain.
pub struct PolicySolver {
    gamma: f64,
    p: SparseMatrix,
    pt: SparseMatrix,
    dense: Option<DenseFactors>,
}

struct DenseFactors {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_t: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl PolicySolver {
    pub fn new(p: &SparseMatrix, gamma: f64, kind: SolverKind) -> Self {
        let n = p.dim();
        let use_dense = match kind {
            SolverKind::Dense => true,
            SolverKind::Sparse => false,
            SolverKind::Auto => n <= DENSE_LIMIT,
        };
        let dense = use_dense.then(|| {
            let mut a = DMatrix::<f64>::identity(n, n);
            for r in 0..n {
                let (cols, vals) = p.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    a[(r, c)] -= gamma * v;
                }
            }
            let at = a.transpose();
            DenseFactors {
                lu: a.lu(),
                lu_t: at.lu(),
            }
        });
        Self {
            gamma,
            p: p.clone(),
            pt: p.transpose(),
            dense,
        }
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    /// `(I - gamma P) x = b`
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_with(b, false)
    }

    /// `(I - gamma P)^T x = b`
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_with(b, true)
    }

    fn solve_with(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let m = if transpose { &self.pt } else { &self.p };
        let mut x = match &self.dense {
            Some(f) => {
                let lu = if transpose { &f.lu_t } else { &f.lu };
                let sol = lu
                    .solve(&DVector::from_column_slice(b))
                    .ok_or_else(|| Error::Solver("singular system".into()))?;
                sol.as_slice().to_vec()
            }
            None => gauss_seidel(m, self.gamma, b, vec![0.0; b.len()])?,
        };
        // Iterative refinement on the residual.
        for _ in 0..3 {
            let r = self.residual(m, &x, b);
            let scale = b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
            if r.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) <= RESIDUAL_TARGET * scale {
                break;
            }
            let dx = match &self.dense {
                Some(f) => {
                    let lu = if transpose { &f.lu_t } else { &f.lu };
                    lu.solve(&DVector::from_vec(r))
                        .ok_or_else(|| Error::Solver("singular system".into()))?
                        .as_slice()
                        .to_vec()
                }
                None => gauss_seidel(m, self.gamma, &r, vec![0.0; r.len()])?,
            };
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        Ok(x)
    }

    fn residual(&self, m: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mx = m.mul(x);
        b.iter()
            .zip(x)
            .zip(mx)
            .map(|((bi, xi), mxi)| bi - (xi - self.gamma * mxi))
            .collect()
    }

    /// Infinity norm of `b - (I - gamma P) x`.
    pub fn residual_norm(&self, x: &[f64], b: &[f64], transpose: bool) -> f64 {
        let m = if transpose { &self.pt } else { &self.p };
        self.residual(m, x, b).iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

fn gauss_seidel(m: &SparseMatrix, gamma: f64, b: &[f64], mut x: Vec<f64>) -> Result<Vec<f64>> {
    for _ in 0..MAX_SWEEPS {
        let mut delta = 0.0f64;
        let mut size = 1.0f64;
        for s in 0..m.dim() {
            let (cols, vals) = m.row(s);
            let mut acc = b[s];
            let mut diag = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                if c == s {
                    diag += v;
                } else {
                    acc += gamma * v * x[c];
                }
            }
            let next = acc / (1.0 - gamma * diag);
            delta = delta.max((next - x[s]).abs());
            size = size.max(next.abs());
            x[s] = next;
        }
        if delta <= 1e-15 * size {
            return Ok(x);
        }
    }
    Err(Error::Solver(format!("Gauss-Seidel did not converge in {MAX_SWEEPS} sweeps")))
}
