//! Weighted undirected simple graphs, their Laplacian/adjacency/degree
//! matrices, generators (worked-example fixture, three-cluster random graph,
//! pixel lattice), and multiplicative edge-weight perturbation.
//!
//! Nodes are indexed 0..n-1 everywhere, including in the text format. Each
//! undirected edge is stored once with i < j; construction canonicalizes and
//! validates, so a `Graph` in hand always satisfies the invariants.

use crate::linalg::SymMatrix;
use ndarray::Array1;
use rand::Rng;
use std::collections::HashSet;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("self-loop at node {node}")]
    SelfLoop { node: usize },
    #[error("duplicate edge ({i}, {j})")]
    DuplicateEdge { i: usize, j: usize },
    #[error("non-positive weight {w} on edge ({i}, {j})")]
    NonPositiveWeight { i: usize, j: usize, w: f64 },
    #[error("edge ({i}, {j}) references a node outside 0..{n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("perturbation half-width {0} outside [0, 1)")]
    InvalidDelta(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no connected graph after {0} attempts")]
    Disconnected(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// One undirected edge, stored with i < j.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Weighted undirected simple graph with strictly positive edge weights.
/// Edges are kept sorted by (i, j), which fixes the iteration order used by
/// the perturbation sampler and the text writer.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
}

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut canon: Vec<Edge> = Vec::new();
        for (a, b, w) in edges {
            if a == b {
                return Err(GraphError::SelfLoop { node: a });
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if j >= n {
                return Err(GraphError::IndexOutOfRange { i, j, n });
            }
            if w <= 0.0 || w.is_nan() {
                return Err(GraphError::NonPositiveWeight { i, j, w });
            }
            canon.push(Edge { i, j, w });
        }
        canon.sort_by_key(|e| (e.i, e.j));
        for pair in canon.windows(2) {
            if pair[0].i == pair[1].i && pair[0].j == pair[1].j {
                return Err(GraphError::DuplicateEdge { i: pair[0].i, j: pair[0].j });
            }
        }
        Ok(Graph { n, edges: canon })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn adjacency(&self) -> SymMatrix {
        let mut a = SymMatrix::zeros(self.n);
        for e in &self.edges {
            a.set(e.i, e.j, e.w);
        }
        a
    }

    pub fn degree(&self) -> SymMatrix {
        let mut d = SymMatrix::zeros(self.n);
        for e in &self.edges {
            let di = d.get(e.i, e.i) + e.w;
            d.set(e.i, e.i, di);
            let dj = d.get(e.j, e.j) + e.w;
            d.set(e.j, e.j, dj);
        }
        d
    }

    /// Laplacian L = D - A: row and column sums are zero and the matrix is
    /// positive semidefinite.
    pub fn laplacian(&self) -> SymMatrix {
        let mut l = SymMatrix::zeros(self.n);
        for e in &self.edges {
            l.set(e.i, e.j, -e.w);
            let di = l.get(e.i, e.i) + e.w;
            l.set(e.i, e.i, di);
            let dj = l.get(e.j, e.j) + e.w;
            l.set(e.j, e.j, dj);
        }
        l
    }

    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Multiplies every edge weight by an independent uniform draw from
    /// [1-delta, 1+delta], in canonical edge order. Returns the perturbed
    /// graph (identical topology) together with E = L(g') - L(g).
    pub fn perturb(&self, cfg: &PerturbationConfig, rng: &mut impl Rng) -> (Graph, SymMatrix) {
        let delta = cfg.delta();
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let u = rng.random_range(1.0 - delta..=1.0 + delta);
                Edge { i: e.i, j: e.j, w: e.w * u }
            })
            .collect();
        let perturbed = Graph { n: self.n, edges };
        let e = perturbed.laplacian().sub(&self.laplacian());
        (perturbed, e)
    }

    /// Text form: `n m` on the first line, then one `i j w` line per edge in
    /// canonical order. `#` lines are comments on input.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n, self.edges.len());
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {}", e.i, e.j, e.w);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize)> = None;
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            match header {
                None => {
                    if fields.len() != 2 {
                        return Err(GraphError::Parse {
                            line,
                            msg: format!("expected `n m`, got {content:?}"),
                        });
                    }
                    let n = parse_field(fields[0], line, "node count")?;
                    let m = parse_field(fields[1], line, "edge count")?;
                    header = Some((n, m));
                }
                Some((_, m)) => {
                    if edges.len() == m {
                        return Err(GraphError::Parse {
                            line,
                            msg: format!("more than {m} edge lines"),
                        });
                    }
                    if fields.len() != 3 {
                        return Err(GraphError::Parse {
                            line,
                            msg: format!("expected `i j w`, got {content:?}"),
                        });
                    }
                    let i = parse_field(fields[0], line, "node index")?;
                    let j = parse_field(fields[1], line, "node index")?;
                    let w: f64 = fields[2].parse().map_err(|_| GraphError::Parse {
                        line,
                        msg: format!("bad weight {:?}", fields[2]),
                    })?;
                    edges.push((i, j, w));
                }
            }
        }
        let (n, m) = header.ok_or(GraphError::Parse { line: 0, msg: "empty graph file".into() })?;
        if edges.len() != m {
            return Err(GraphError::Parse {
                line: 0,
                msg: format!("expected {m} edges, found {}", edges.len()),
            });
        }
        Graph::new(n, edges)
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| GraphError::Parse { line, msg: format!("bad {what} {s:?}") })
}

/// Multiplicative edge-weight perturbation: each weight is scaled by an
/// independent uniform draw from [1-delta, 1+delta].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationConfig {
    delta: f64,
    seed: u64,
}

impl PerturbationConfig {
    pub fn new(delta: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(GraphError::InvalidDelta(delta));
        }
        Ok(PerturbationConfig { delta, seed })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// The ten-node worked-example graph with unit weights, plus its three
/// one-hot signals (r, g, y).
pub fn figure1() -> (Graph, [Array1<f64>; 3]) {
    let edges =
        [(0, 1), (1, 2), (0, 3), (1, 3), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (7, 9)];
    let g = Graph::new(10, edges.iter().map(|&(i, j)| (i, j, 1.0))).expect("fixture is valid");
    let one_hot = |k: usize| {
        let mut v = Array1::zeros(10);
        v[k] = 1.0;
        v
    };
    (g, [one_hot(0), one_hot(5), one_hot(6)])
}

const CONNECTIVITY_ATTEMPTS: usize = 100;

/// Random clustered graph: within each cluster, every node pair gets an edge
/// with probability `p_intra` and weight uniform in [w_lo, w_hi]; exactly
/// `bridges` unit-weight edges connect uniformly sampled node pairs from
/// distinct clusters (resampled on collision). Generation is retried from
/// scratch until the graph is connected. Returns the graph and the per-node
/// cluster labels.
pub fn three_cluster(
    sizes: &[usize],
    p_intra: f64,
    w_lo: f64,
    w_hi: f64,
    bridges: usize,
    rng: &mut impl Rng,
) -> Result<(Graph, Vec<usize>)> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(GraphError::InvalidParameter(format!(
            "cluster sizes must be nonempty and positive, got {sizes:?}"
        )));
    }
    if !(p_intra > 0.0 && p_intra <= 1.0) {
        return Err(GraphError::InvalidParameter(format!("p_intra {p_intra} outside (0, 1]")));
    }
    if !(w_lo > 0.0 && w_lo <= w_hi) {
        return Err(GraphError::InvalidParameter(format!(
            "weight range [{w_lo}, {w_hi}] needs 0 < lo <= hi"
        )));
    }
    let n: usize = sizes.iter().sum();
    let cross_pairs = (n * n - sizes.iter().map(|s| s * s).sum::<usize>()) / 2;
    if bridges == 0 || bridges > cross_pairs {
        return Err(GraphError::InvalidParameter(format!(
            "bridge count {bridges} outside 1..={cross_pairs}"
        )));
    }

    let mut labels = Vec::with_capacity(n);
    for (c, &s) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat_n(c, s));
    }

    for _ in 0..CONNECTIVITY_ATTEMPTS {
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        let mut present: HashSet<(usize, usize)> = HashSet::new();
        let mut start = 0;
        for &s in sizes {
            for i in start..start + s {
                for j in (i + 1)..start + s {
                    if rng.random::<f64>() < p_intra {
                        edges.push((i, j, rng.random_range(w_lo..=w_hi)));
                        present.insert((i, j));
                    }
                }
            }
            start += s;
        }
        let mut placed = 0;
        while placed < bridges {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b || labels[a] == labels[b] {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if present.contains(&key) {
                continue;
            }
            present.insert(key);
            edges.push((key.0, key.1, 1.0));
            placed += 1;
        }
        let g = Graph::new(n, edges)?;
        if g.is_connected() {
            return Ok((g, labels));
        }
    }
    Err(GraphError::Disconnected(CONNECTIVITY_ATTEMPTS))
}

/// rows x cols pixel lattice: unit-weight edges between 4-neighborhood
/// (left/right/up/down) pixel pairs, nodes numbered row-major.
pub fn lattice(rows: usize, cols: usize) -> Result<Graph> {
    if rows == 0 || cols == 0 {
        return Err(GraphError::InvalidParameter(format!(
            "lattice dimensions {rows}x{cols} must be positive"
        )));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1), 1.0));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c), 1.0));
            }
        }
    }
    Graph::new(rows * cols, edges)
}

/// One integer label per line.
pub fn format_labels(labels: &[usize]) -> String {
    let mut out = String::new();
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        labels.push(parse_field(content, idx + 1, "label")?);
    }
    Ok(labels)
}
