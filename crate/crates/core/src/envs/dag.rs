//! Line-oriented DAG description for congestion games.
//!
//! ```text
//! # comment
//! source=s
//! sink=t
//! agents=4
//! s -> a cost=inverse_load(1.0)
//! a -> t cost=linear(0.9, 0.2)
//! ```
//!
//! Vertices are numbered in order of first appearance. Parallel edges are
//! allowed and become distinct actions.

use std::collections::HashMap;
use std::fmt;

use crate::{Error, Result};

/// Per-agent reward of an edge as a function of its load `l >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum CostDescriptor {
    /// `base / l`
    InverseLoad { base: f64 },
    /// `a - b (l - 1)`
    Linear { a: f64, b: f64 },
    /// `values[l - 1]`
    Table(Vec<f64>),
}

impl std::str::FromStr for CostDescriptor {
    type Err = Error;
    /// Parses `inverse_load(b)`, `linear(a, b)` or `table(c1, c2, ...)`.
    fn from_str(text: &str) -> Result<Self> {
        Self::parse(text.trim()).map_err(|message| Error::Parse { line: 0, message })
    }
}

impl CostDescriptor {
    pub fn eval(&self, load: usize) -> f64 {
        assert!(load >= 1, "cost evaluated at zero load");
        match self {
            Self::InverseLoad { base } => base / load as f64,
            Self::Linear { a, b } => a - b * (load as f64 - 1.0),
            Self::Table(v) => v.get(load - 1).copied().unwrap_or(f64::NAN),
        }
    }

    /// `sum_{k=1}^{load} c(k)`
    pub fn rosenthal(&self, load: usize) -> f64 {
        (1..=load).map(|k| self.eval(k)).sum()
    }

    /// Checks `c(l)` is in `[0, 1]` for `l = 1..=max_load`; `edge` is used in the error.
    pub fn check_range(&self, edge: usize, max_load: usize) -> Result<()> {
        for l in 1..=max_load {
            let v = self.eval(l);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::CostOutOfRange { edge, load: l, value: v });
            }
        }
        Ok(())
    }

    fn parse(text: &str) -> std::result::Result<Self, String> {
        let open = text.find('(').ok_or("expected `kind(params)`")?;
        if !text.ends_with(')') {
            return Err("missing closing parenthesis".into());
        }
        let kind = &text[..open];
        let inner = &text[open + 1..text.len() - 1];
        let params: Vec<f64> = if inner.trim().is_empty() {
            Vec::new()
        } else {
            inner
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number `{}`", p.trim())))
                .collect::<std::result::Result<_, _>>()?
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err("parameters must be finite".into());
        }
        match (kind, params.as_slice()) {
            ("inverse_load", [base]) => Ok(Self::InverseLoad { base: *base }),
            ("linear", [a, b]) => Ok(Self::Linear { a: *a, b: *b }),
            ("table", v) if !v.is_empty() => Ok(Self::Table(v.to_vec())),
            ("inverse_load", _) => Err("inverse_load takes one parameter".into()),
            ("linear", _) => Err("linear takes two parameters".into()),
            ("table", _) => Err("table needs at least one value".into()),
            _ => Err(format!("unknown cost kind `{kind}`")),
        }
    }
}

impl fmt::Display for CostDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InverseLoad { base } => write!(f, "inverse_load({base:?})"),
            Self::Linear { a, b } => write!(f, "linear({a:?}, {b:?})"),
            Self::Table(v) => {
                let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                write!(f, "table({})", parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DagEdge {
    pub from: usize,
    pub to: usize,
    pub cost: CostDescriptor,
    /// 1-based source line, 0 for programmatically built specs.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DagSpec {
    pub vertices: Vec<String>,
    pub source: usize,
    pub sink: usize,
    pub edges: Vec<DagEdge>,
    /// Optional `agents=` header.
    pub agents: Option<usize>,
}

impl DagSpec {
    /// Outgoing edge indices of `v`, in declaration order.
    pub fn out_edges(&self, v: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].from == v).collect()
    }

    pub fn vertex(&self, name: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v == name)
    }

    /// Number of vertices at each longest-path distance from the source.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let order = self.topological_order().expect("validated spec is acyclic");
        let mut depth = vec![0usize; self.vertices.len()];
        for &v in &order {
            for e in self.out_edges(v) {
                let t = self.edges[e].to;
                depth[t] = depth[t].max(depth[v] + 1);
            }
        }
        let layers = depth.iter().max().map_or(0, |d| d + 1);
        let mut sizes = vec![0; layers];
        for d in depth {
            sizes[d] += 1;
        }
        sizes
    }

    /// Layered DAG `source -> L1 -> ... -> Lk -> sink` with every layer
    /// fully connected to the next and the same cost on every edge.
    pub fn layered(layers: &[usize], cost: CostDescriptor) -> Self {
        let mut vertices = vec!["s".to_string()];
        let mut prev = vec![0usize];
        let mut edges = Vec::new();
        for (k, &size) in layers.iter().enumerate() {
            let ids: Vec<usize> = (0..size)
                .map(|j| {
                    vertices.push(format!("v{}_{}", k + 1, j + 1));
                    vertices.len() - 1
                })
                .collect();
            for &f in &prev {
                for &t in &ids {
                    edges.push(DagEdge { from: f, to: t, cost: cost.clone(), line: 0 });
                }
            }
            prev = ids;
        }
        vertices.push("t".into());
        let sink = vertices.len() - 1;
        for &f in &prev {
            edges.push(DagEdge { from: f, to: sink, cost: cost.clone(), line: 0 });
        }
        Self {
            vertices,
            source: 0,
            sink,
            edges,
            agents: None,
        }
    }

    /// Writes the graph in the text format accepted by [`parse_dag_spec`].
    pub fn to_text(&self) -> String {
        let mut out = format!("source={}\nsink={}\n", self.vertices[self.source], self.vertices[self.sink]);
        if let Some(n) = self.agents {
            out.push_str(&format!("agents={n}\n"));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "{} -> {} cost={}\n",
                self.vertices[e.from], self.vertices[e.to], e.cost
            ));
        }
        out
    }

    fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.vertices.len();
        let mut indeg = vec![0usize; n];
        for e in &self.edges {
            indeg[e.to] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for e in self.out_edges(v).into_iter().rev() {
                let t = self.edges[e].to;
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    ready.push(t);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Checks acyclicity, that every vertex lies on a source-sink path and
    /// that only the sink has no outgoing edge.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.source == self.sink {
            return Err(parse_err(0, "source and sink must differ"));
        }
        if let Some(e) = self.back_edge() {
            let ed = &self.edges[e];
            return Err(parse_err(
                ed.line,
                format!(
                    "edge {} -> {} closes a cycle",
                    self.vertices[ed.from], self.vertices[ed.to]
                ),
            ));
        }
        let fwd = self.reach(self.source, false);
        let bwd = self.reach(self.sink, true);
        for v in 0..n {
            if !fwd[v] || !bwd[v] {
                let why = if !fwd[v] {
                    "is not reachable from the source"
                } else {
                    "cannot reach the sink"
                };
                return Err(parse_err(self.first_line(v), format!("vertex `{}` {why}", self.vertices[v])));
            }
        }
        if let Some(e) = self.edges.iter().find(|e| e.from == self.sink) {
            return Err(parse_err(e.line, "the sink cannot have outgoing edges"));
        }
        Ok(())
    }

    fn first_line(&self, v: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.from == v || e.to == v)
            .map(|e| e.line)
            .min()
            .unwrap_or(0)
    }

    fn reach(&self, start: usize, reverse: bool) -> Vec<bool> {
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for e in &self.edges {
                let (a, b) = if reverse { (e.to, e.from) } else { (e.from, e.to) };
                if a == v && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen
    }

    /// First edge (in declaration order of discovery) that closes a cycle in a DFS.
    fn back_edge(&self) -> Option<usize> {
        let n = self.vertices.len();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut colour = vec![0u8; n];
        let mut roots: Vec<usize> = vec![self.source];
        roots.extend(0..n);
        for root in roots {
            if colour[root] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            colour[root] = 1;
            while let Some(&mut (v, ref mut k)) = stack.last_mut() {
                let outs = self.out_edges(v);
                if *k < outs.len() {
                    let e = outs[*k];
                    *k += 1;
                    let t = self.edges[e].to;
                    match colour[t] {
                        0 => {
                            colour[t] = 1;
                            stack.push((t, 0));
                        }
                        1 => return Some(e),
                        _ => {}
                    }
                } else {
                    colour[v] = 2;
                    stack.pop();
                }
            }
        }
        None
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses the DAG text format. Errors carry the 1-based line number.
pub fn parse_dag_spec(text: &str) -> Result<DagSpec> {
    let mut vertices: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut intern = |name: &str| -> usize {
        if let Some(&i) = index.get(name) {
            return i;
        }
        vertices.push(name.to_string());
        index.insert(name.to_string(), vertices.len() - 1);
        vertices.len() - 1
    };
    let mut source: Option<(String, usize)> = None;
    let mut sink: Option<(String, usize)> = None;
    let mut agents = None;
    let mut raw_edges: Vec<(usize, usize, CostDescriptor, usize)> = Vec::new();

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some((lhs, rhs)) = content.split_once("->") {
            let from = lhs.trim();
            let mut parts = rhs.split_whitespace();
            let to = parts.next().ok_or_else(|| parse_err(line, "missing target vertex"))?;
            let rest: Vec<&str> = parts.collect();
            let rest = rest.join(" ");
            let cost = if rest.is_empty() {
                CostDescriptor::InverseLoad { base: 1.0 }
            } else {
                let spec = rest
                    .strip_prefix("cost=")
                    .ok_or_else(|| parse_err(line, format!("expected `cost=...`, found `{rest}`")))?;
                CostDescriptor::parse(spec.trim()).map_err(|m| parse_err(line, m))?
            };
            check_name(from, line)?;
            check_name(to, line)?;
            let f = intern(from);
            let t = intern(to);
            raw_edges.push((f, t, cost, line));
        } else if let Some((key, value)) = content.split_once('=') {
            let value = value.trim();
            match key.trim() {
                "source" => {
                    check_name(value, line)?;
                    source = Some((value.to_string(), line));
                }
                "sink" => {
                    check_name(value, line)?;
                    sink = Some((value.to_string(), line));
                }
                "agents" => {
                    let n: usize = value
                        .parse()
                        .map_err(|_| parse_err(line, format!("bad agent count `{value}`")))?;
                    if n == 0 {
                        return Err(parse_err(line, "agents must be at least 1"));
                    }
                    agents = Some(n);
                }
                other => return Err(parse_err(line, format!("unknown header `{other}`"))),
            }
        } else {
            return Err(parse_err(line, format!("cannot parse `{content}`")));
        }
    }
    let (src_name, src_line) = source.ok_or_else(|| parse_err(0, "missing `source=` header"))?;
    let (snk_name, snk_line) = sink.ok_or_else(|| parse_err(0, "missing `sink=` header"))?;
    let source = index
        .get(&src_name)
        .copied()
        .ok_or_else(|| parse_err(src_line, format!("source `{src_name}` has no edges")))?;
    let sink = index
        .get(&snk_name)
        .copied()
        .ok_or_else(|| parse_err(snk_line, format!("sink `{snk_name}` has no edges")))?;
    let spec = DagSpec {
        vertices,
        source,
        sink,
        edges: raw_edges
            .into_iter()
            .map(|(from, to, cost, line)| DagEdge { from, to, cost, line })
            .collect(),
        agents,
    };
    spec.validate()?;
    Ok(spec)
}

fn check_name(name: &str, line: usize) -> Result<()> {
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.') {
        return Err(parse_err(line, format!("invalid vertex name `{name}`")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIX_VERTEX: &str = "\
source=s
sink=t
agents=4
s -> a1 cost=inverse_load(1.0)
s -> a2 cost=inverse_load(1.0)
a1 -> b1 cost=inverse_load(1.0)
a1 -> b2 cost=inverse_load(1.0)
a2 -> b1 cost=inverse_load(1.0)
a2 -> b2 cost=inverse_load(1.0)
b1 -> t cost=inverse_load(1.0)
b2 -> t cost=inverse_load(1.0)
";

    #[test]
    fn minimal_document() {
        let d = parse_dag_spec("source=s\nsink=t\ns -> t").unwrap();
        assert_eq!(d.vertices, vec!["s", "t"]);
        assert_eq!(d.edges.len(), 1);
        assert_eq!(d.edges[0].cost, CostDescriptor::InverseLoad { base: 1.0 });
        assert_eq!(d.layer_sizes(), vec![1, 1]);
    }

    #[test]
    fn back_edge_is_named() {
        let err = parse_dag_spec("source=s\nsink=t\ns -> t\nt -> s\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("t -> s"), "{message}");
                assert!(message.contains("cycle"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn six_vertex_layered_graph() {
        let d = parse_dag_spec(SIX_VERTEX).unwrap();
        assert_eq!(d.vertices.len(), 6);
        assert_eq!(d.layer_sizes(), vec![1, 2, 2, 1]);
        assert_eq!(d.agents, Some(4));
        assert_eq!(d, {
            let mut l = DagSpec::layered(&[2, 2], CostDescriptor::InverseLoad { base: 1.0 });
            l.agents = Some(4);
            for (e, k) in l.edges.iter_mut().zip(4..) {
                e.line = k;
            }
            l.vertices = vec!["s", "a1", "a2", "b1", "b2", "t"].into_iter().map(String::from).collect();
            l
        });
    }

    #[test]
    fn dangling_vertices_are_rejected() {
        let err = parse_dag_spec("source=s\nsink=t\ns -> t\ns -> x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, ref message } if message.contains("`x` cannot reach")));
        let err = parse_dag_spec("source=s\nsink=t\ns -> t\ny -> t\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, ref message } if message.contains("`y` is not reachable")));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        for (doc, line) in [
            ("source=s\nsink=t\ns -> t cost=cubic(1)\n", 3),
            ("source=s\nsink=t\n\ns -> t cost=linear(1)\n", 4),
            ("source=s\nsink=t\ns => t\n", 3),
            ("source=s\nsink=t\nagents=x\ns -> t\n", 3),
            ("source=s\ncolour=red\n", 2),
            ("source=s\nsink=t\ns -> t cost=inverse_load(abc)\n", 3),
        ] {
            match parse_dag_spec(doc) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{doc}"),
                other => panic!("{doc}: {other:?}"),
            }
        }
        assert!(matches!(parse_dag_spec("s -> t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn parallel_edges_and_comments() {
        let d = parse_dag_spec("# two routes\nsource=s\nsink=t\ns -> t cost=table(1, 0.5)  # fast\ns -> t cost=linear(0.8, 0.1)\n").unwrap();
        assert_eq!(d.out_edges(0), vec![0, 1]);
        assert_eq!(d.edges[0].cost.eval(2), 0.5);
        assert!((d.edges[1].cost.eval(3) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn text_roundtrip() {
        let d = parse_dag_spec(SIX_VERTEX).unwrap();
        let again = parse_dag_spec(&d.to_text()).unwrap();
        assert_eq!(again.to_text(), d.to_text());
        assert_eq!(again.vertices, d.vertices);
    }

    #[test]
    fn cost_range_and_rosenthal() {
        let c = CostDescriptor::InverseLoad { base: 1.0 };
        assert!((c.rosenthal(3) - (1.0 + 0.5 + 1.0 / 3.0)).abs() < 1e-15);
        assert!(c.check_range(0, 8).is_ok());
        let bad = CostDescriptor::Linear { a: 1.0, b: 0.5 };
        assert!(matches!(bad.check_range(2, 4), Err(Error::CostOutOfRange { edge: 2, load: 4, .. })));
        assert!(matches!(
            CostDescriptor::Table(vec![1.0]).check_range(0, 2),
            Err(Error::CostOutOfRange { load: 2, .. })
        ));
    }
}
