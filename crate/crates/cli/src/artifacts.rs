//! On-disk artifacts: per-run trace CSVs, policy snapshots and the run summary.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use mpg_core::{ActionLayout, JointPolicy};

/// Version of the CSV layouts below, written to `manifest.toml`.
pub const SCHEMA_VERSION: u32 = 1;

pub const TRACE_HEADER: [&str; 6] = ["run_id", "algorithm", "iteration", "max_policy_step_l1", "potential", "nash_gap"];
pub const ACCURACY_HEADER: [&str; 4] = ["run_id", "algorithm", "iteration", "l1_accuracy"];
pub const SUMMARY_HEADER: [&str; 8] = [
    "run_id",
    "algorithm",
    "seed",
    "status",
    "iterations",
    "iterations_to_convergence",
    "final_potential",
    "final_nash_gap",
];

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"MPGSNAP1";

/// Shortest round-trip decimal; scientific outside `[1e-4, 1e15)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".into()
    } else if (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        Ok(Some(s.parse().with_context(|| format!("bad number `{s}`"))?))
    }
}

/// File stem shared by a run's artifacts, e.g. `inpg_003`.
pub fn run_stem(algorithm: &str, run_id: usize) -> String {
    format!("{algorithm}_{run_id:03}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub run_id: usize,
    pub algorithm: String,
    pub iteration: usize,
    pub max_policy_step_l1: f64,
    pub potential: Option<f64>,
    pub nash_gap: Option<f64>,
}

impl TraceRow {
    fn fields(&self) -> [String; 6] {
        [
            self.run_id.to_string(),
            self.algorithm.clone(),
            self.iteration.to_string(),
            fmt_f64(self.max_policy_step_l1),
            fmt_opt(self.potential),
            fmt_opt(self.nash_gap),
        ]
    }
}

pub struct TraceWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner.write_record(TRACE_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &TraceRow) -> Result<()> {
        self.inner.write_record(row.fields())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

fn check_header(reader: &mut csv::Reader<File>, expected: &[&str], path: &Path) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        bail!("{}: unexpected header {:?}", path.display(), header);
    }
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    check_header(&mut reader, &TRACE_HEADER, path)?;
    reader
        .records()
        .map(|r| {
            let r = r?;
            Ok(TraceRow {
                run_id: r[0].parse()?,
                algorithm: r[1].to_owned(),
                iteration: r[2].parse()?,
                max_policy_step_l1: r[3].parse()?,
                potential: parse_opt(&r[4])?,
                nash_gap: parse_opt(&r[5])?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub run_id: usize,
    pub algorithm: String,
    pub iteration: usize,
    pub l1_accuracy: f64,
}

pub fn write_accuracy(path: &Path, rows: &[AccuracyRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(ACCURACY_HEADER)?;
    for r in rows {
        w.write_record([r.run_id.to_string(), r.algorithm.clone(), r.iteration.to_string(), fmt_f64(r.l1_accuracy)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_accuracy(path: &Path) -> Result<Vec<AccuracyRow>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    check_header(&mut reader, &ACCURACY_HEADER, path)?;
    reader
        .records()
        .map(|r| {
            let r = r?;
            Ok(AccuracyRow {
                run_id: r[0].parse()?,
                algorithm: r[1].to_owned(),
                iteration: r[2].parse()?,
                l1_accuracy: r[3].parse()?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub run_id: usize,
    pub algorithm: String,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub final_potential: Option<f64>,
    pub final_nash_gap: Option<f64>,
}

impl SummaryRow {
    pub fn iterations_to_convergence(&self) -> Option<usize> {
        self.converged.then_some(self.iterations)
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.run_id.to_string(),
            r.algorithm.clone(),
            r.seed.to_string(),
            if r.converged { "converged" } else { "max_iters" }.to_string(),
            r.iterations.to_string(),
            r.iterations_to_convergence().map(|k| k.to_string()).unwrap_or_default(),
            fmt_opt(r.final_potential),
            fmt_opt(r.final_nash_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    check_header(&mut reader, &SUMMARY_HEADER, path)?;
    reader
        .records()
        .map(|r| {
            let r = r?;
            let converged = match &r[3] {
                "converged" => true,
                "max_iters" => false,
                other => bail!("unknown status `{other}`"),
            };
            Ok(SummaryRow {
                run_id: r[0].parse()?,
                algorithm: r[1].to_owned(),
                seed: r[2].parse()?,
                converged,
                iterations: r[4].parse()?,
                final_potential: parse_opt(&r[6])?,
                final_nash_gap: parse_opt(&r[7])?,
            })
        })
        .collect()
}

/// Snapshot file: magic, agent and state counts, the action count of every
/// `(state, agent)` pair, then `(iteration, probabilities)` records until
/// end of file. All integers are little-endian `u64`, probabilities `f64`.
pub struct SnapshotWriter {
    out: BufWriter<File>,
    len: usize,
    last: Option<usize>,
}

impl SnapshotWriter {
    pub fn create(path: &Path, layout: &ActionLayout) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        out.write_all(SNAPSHOT_MAGIC)?;
        out.write_all(&(layout.n_agents() as u64).to_le_bytes())?;
        out.write_all(&(layout.n_states() as u64).to_le_bytes())?;
        for s in 0..layout.n_states() {
            for &k in layout.counts_at(s) {
                out.write_all(&(k as u64).to_le_bytes())?;
            }
        }
        Ok(Self {
            out,
            len: layout.len(),
            last: None,
        })
    }

    pub fn write(&mut self, iteration: usize, policy: &JointPolicy) -> Result<()> {
        debug_assert_eq!(policy.as_slice().len(), self.len);
        self.out.write_all(&(iteration as u64).to_le_bytes())?;
        for p in policy.as_slice() {
            self.out.write_all(&p.to_le_bytes())?;
        }
        self.last = Some(iteration);
        Ok(())
    }

    pub fn last_iteration(&self) -> Option<usize> {
        self.last
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Snapshots {
    pub layout: Arc<ActionLayout>,
    pub policies: Vec<(usize, JointPolicy)>,
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_snapshots(path: &Path) -> Result<Snapshots> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).context("truncated snapshot header")?;
    if &magic != SNAPSHOT_MAGIC {
        bail!("{} is not a policy snapshot file", path.display());
    }
    let n = read_u64(&mut r)? as usize;
    let ns = read_u64(&mut r)? as usize;
    let mut counts = Vec::with_capacity(ns);
    for _ in 0..ns {
        counts.push((0..n).map(|_| read_u64(&mut r).map(|k| k as usize)).collect::<std::io::Result<Vec<_>>>()?);
    }
    let layout = Arc::new(ActionLayout::new(n, &counts));
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    let record = 8 * (1 + layout.len());
    if rest.len() % record != 0 {
        bail!("{}: truncated snapshot record", path.display());
    }
    let mut policies = Vec::with_capacity(rest.len() / record);
    for chunk in rest.chunks_exact(record) {
        let iteration = u64::from_le_bytes(chunk[..8].try_into().unwrap()) as usize;
        let probs = chunk[8..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        policies.push((iteration, JointPolicy::new(layout.clone(), probs)?));
    }
    Ok(Snapshots { layout, policies })
}

/// Paths under an output directory.
#[derive(Debug, Clone)]
pub struct OutDir {
    pub root: PathBuf,
}

impl OutDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }
    pub fn trace(&self, stem: &str) -> PathBuf {
        self.runs().join(format!("{stem}.csv"))
    }
    pub fn snapshot(&self, stem: &str) -> PathBuf {
        self.runs().join(format!("{stem}.snap"))
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.csv")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.toml")
    }
    pub fn accuracy(&self) -> PathBuf {
        self.root.join("accuracy")
    }
    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting_round_trips() {
        for x in [0.0, 1.0, -2.5, 1e-20, 3.25e-5, 0.1 + 0.2, 12345.678, 1e300, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(1e-20), "1e-20");
        assert_eq!(fmt_f64(0.5), "0.5");
    }

    #[test]
    fn trace_and_summary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![
            TraceRow { run_id: 3, algorithm: "inpg".into(), iteration: 0, max_policy_step_l1: 0.25, potential: Some(1.5), nash_gap: None },
            TraceRow { run_id: 3, algorithm: "inpg".into(), iteration: 1, max_policy_step_l1: 1e-17, potential: None, nash_gap: Some(0.0) },
        ];
        let mut w = TraceWriter::create(&path).unwrap();
        for r in &rows {
            w.write(r).unwrap();
        }
        w.finish().unwrap();
        assert_eq!(read_trace(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("run_id,algorithm,iteration,max_policy_step_l1,potential,nash_gap\n"));

        let s = vec![SummaryRow { run_id: 0, algorithm: "ipg".into(), seed: 7, converged: false, iterations: 3000, final_potential: None, final_nash_gap: Some(0.1) }];
        let p = dir.path().join("s.csv");
        write_summary(&p, &s).unwrap();
        assert_eq!(read_summary(&p).unwrap(), s);
    }

    #[test]
    fn snapshots_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let layout = Arc::new(ActionLayout::new(2, &[vec![2, 3], vec![1, 2]]));
        let a = JointPolicy::uniform(layout.clone());
        let b = JointPolicy::deterministic(layout.clone(), |_, _| 0);
        let path = dir.path().join("x.snap");
        let mut w = SnapshotWriter::create(&path, &layout).unwrap();
        w.write(0, &a).unwrap();
        w.write(5, &b).unwrap();
        assert_eq!(w.last_iteration(), Some(5));
        w.finish().unwrap();
        let back = read_snapshots(&path).unwrap();
        assert_eq!(*back.layout, *layout);
        assert_eq!(back.policies, vec![(0, a), (5, b)]);

        std::fs::write(&path, b"NOTSNAP!").unwrap();
        assert!(read_snapshots(&path).is_err());
    }
}
