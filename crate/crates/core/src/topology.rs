//! Communication graphs, mixing matrices and their spectra.
//!
//! A [`MixingMatrix`] is a symmetric, row-stochastic, nonnegative weight
//! matrix whose sparsity pattern matches a connected [`Graph`]. Spectral
//! data (eigenvalues, an orthonormal eigenbasis whose first vector is
//! `1/√n`, the consensus contraction `λ = ‖W − 11ᵀ/n‖₂`) is computed once on
//! first use and cached.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{spectral_function, sym_eigen_desc, Mat};

const STOCHASTIC_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphKind {
    Ring,
    Grid { rows: usize, cols: usize },
    Complete,
    Star,
    Custom,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Ring => write!(f, "ring"),
            GraphKind::Grid { rows, cols } => write!(f, "grid:{rows}x{cols}"),
            GraphKind::Complete => write!(f, "complete"),
            GraphKind::Star => write!(f, "star"),
            GraphKind::Custom => write!(f, "custom"),
        }
    }
}

/// Undirected connected graph; self-loops are implicit on every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    kind: GraphKind,
}

impl Graph {
    /// Builds a graph from an explicit edge list. Self-loops are dropped
    /// (they are implicit); duplicate and reversed pairs collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::with_kind(n, edges.iter().copied(), GraphKind::Custom)
    }

    fn with_kind(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        kind: GraphKind,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        let g = Graph { n, edges: set, kind };
        g.check_connected()?;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &GraphKind {
        &self.kind
    }

    /// Unordered edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i == j || self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// Neighbor lists excluding the implicit self-loop.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors().iter().map(Vec::len).collect()
    }

    fn check_connected(&self) -> Result<()> {
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        let unreached: Vec<usize> = (0..self.n).filter(|&i| !seen[i]).collect();
        if unreached.is_empty() {
            Ok(())
        } else {
            let shown: Vec<String> = unreached.iter().take(8).map(|i| i.to_string()).collect();
            Err(Error::Disconnected(format!(
                "{} of {} nodes unreachable from node 0 (e.g. {})",
                unreached.len(),
                self.n,
                shown.join(", ")
            )))
        }
    }
}

/// Builds one of the standard topologies.
pub fn build_graph(kind: &GraphKind, n: usize) -> Result<Graph> {
    match kind {
        GraphKind::Ring => {
            let edges: Vec<(usize, usize)> = match n {
                0 | 1 => vec![],
                2 => vec![(0, 1)],
                _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
            };
            Graph::with_kind(n, edges, GraphKind::Ring)
        }
        GraphKind::Grid { rows, cols } => {
            if rows * cols != n {
                return Err(Error::InvalidGraph(format!(
                    "grid {rows}x{cols} has {} nodes, requested n = {n}",
                    rows * cols
                )));
            }
            let idx = |r: usize, c: usize| r * cols + c;
            let mut edges = Vec::new();
            for r in 0..*rows {
                for c in 0..*cols {
                    if c + 1 < *cols {
                        edges.push((idx(r, c), idx(r, c + 1)));
                    }
                    if r + 1 < *rows {
                        edges.push((idx(r, c), idx(r + 1, c)));
                    }
                }
            }
            Graph::with_kind(n, edges, kind.clone())
        }
        GraphKind::Complete => {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    edges.push((i, j));
                }
            }
            Graph::with_kind(n, edges, GraphKind::Complete)
        }
        GraphKind::Star => Graph::with_kind(n, (1..n).map(|i| (0, i)), GraphKind::Star),
        GraphKind::Custom => Err(Error::InvalidGraph(
            "custom graphs are built from an edge list".into(),
        )),
    }
}

/// Reads a whitespace-separated `i j` edge list (0-indexed, one pair per
/// line, `#` comments allowed). `n` is one past the largest index seen.
pub fn load_edge_file(path: &Path) -> Result<Graph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut edges = Vec::new();
    let mut n = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| {
                Error::InvalidGraph(format!("{}:{}: bad node index {s:?}", path.display(), lineno + 1))
            })
        };
        if parts.len() != 2 {
            return Err(Error::InvalidGraph(format!(
                "{}:{}: expected `i j`, got {line:?}",
                path.display(),
                lineno + 1
            )));
        }
        let (a, b) = (parse(parts[0])?, parse(parts[1])?);
        n = n.max(a + 1).max(b + 1);
        edges.push((a, b));
    }
    Graph::from_edges(n.max(1), &edges)
}

/// Topology selector as written on the command line:
/// `ring | grid:RxC | complete | star | custom:<edge-file>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphSpec {
    Ring,
    Grid { rows: usize, cols: usize },
    Complete,
    Star,
    Custom(String),
}

impl GraphSpec {
    /// Materializes the graph; `n` is ignored for grids and edge files.
    pub fn build(&self, n: usize) -> Result<Graph> {
        match self {
            GraphSpec::Ring => build_graph(&GraphKind::Ring, n),
            GraphSpec::Grid { rows, cols } => build_graph(
                &GraphKind::Grid {
                    rows: *rows,
                    cols: *cols,
                },
                rows * cols,
            ),
            GraphSpec::Complete => build_graph(&GraphKind::Complete, n),
            GraphSpec::Star => build_graph(&GraphKind::Star, n),
            GraphSpec::Custom(path) => load_edge_file(Path::new(path)),
        }
    }
}

impl FromStr for GraphSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "ring" => return Ok(GraphSpec::Ring),
            "complete" => return Ok(GraphSpec::Complete),
            "star" => return Ok(GraphSpec::Star),
            _ => {}
        }
        if let Some(dims) = s.strip_prefix("grid:") {
            let (r, c) = dims
                .split_once(['x', 'X'])
                .ok_or_else(|| Error::Config(format!("grid spec {s:?} must look like grid:RxC")))?;
            let rows = r
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad grid rows in {s:?}")))?;
            let cols = c
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad grid cols in {s:?}")))?;
            return Ok(GraphSpec::Grid { rows, cols });
        }
        if let Some(path) = s.strip_prefix("custom:") {
            return Ok(GraphSpec::Custom(path.to_string()));
        }
        Err(Error::Config(format!(
            "unknown graph {s:?} (expected ring | grid:RxC | complete | star | custom:<file>)"
        )))
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Ring => write!(f, "ring"),
            GraphSpec::Grid { rows, cols } => write!(f, "grid:{rows}x{cols}"),
            GraphSpec::Complete => write!(f, "complete"),
            GraphSpec::Star => write!(f, "star"),
            GraphSpec::Custom(p) => write!(f, "custom:{p}"),
        }
    }
}

/// Eigen-data of a mixing matrix.
#[derive(Debug, Clone)]
pub struct SpectralInfo {
    /// `λ₁ = 1 ≥ λ₂ ≥ … ≥ λ_n`.
    pub eigenvalues: Vec<f64>,
    /// `‖W − 11ᵀ/n‖₂ = max(|λ₂|, |λ_n|)`; zero for a single agent.
    pub lambda: f64,
    /// `1 − lambda`.
    pub gap: f64,
    /// Smallest eigenvalue `λ_n`.
    pub lambda_min: f64,
    /// Smallest strictly positive eigenvalue among `λ₂..λ_n` (`None` when
    /// there is none).
    pub lambda_min_pos: Option<f64>,
    /// Orthonormal eigenbasis; column 0 is `1/√n`, columns are ordered like
    /// `eigenvalues`.
    pub eigvecs: Mat,
}

impl SpectralInfo {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Û`: the eigenvectors orthogonal to `1` (an `n x (n-1)` matrix).
    pub fn u_hat(&self) -> Mat {
        let n = self.n();
        self.eigvecs.columns(1, n - 1).into_owned()
    }

    /// `λ₂..λ_n`.
    pub fn nonconsensus_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[1..]
    }
}

/// Full eigendecomposition of a symmetric matrix with `1/√n` as the first
/// eigenvector.
pub fn spectral_info(w: &Mat) -> Result<SpectralInfo> {
    let n = w.nrows();
    if n == 0 || w.ncols() != n {
        return Err(Error::InvalidMixing("matrix must be square and non-empty".into()));
    }
    let asym = asymmetry(w);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let (mut values, mut vecs) = sym_eigen_desc(w);

    // Put the eigenvector most aligned with 1 first and make it exactly 1/√n.
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let align = |k: usize| vecs.column(k).iter().sum::<f64>().abs() * inv_sqrt_n;
    let lead = (0..n)
        .max_by(|&a, &b| align(a).total_cmp(&align(b)))
        .unwrap_or(0);
    if lead != 0 {
        let col = vecs.column(lead).into_owned();
        for k in (0..lead).rev() {
            let c = vecs.column(k).into_owned();
            vecs.set_column(k + 1, &c);
        }
        vecs.set_column(0, &col);
        let v = values.remove(lead);
        values.insert(0, v);
    }
    vecs.column_mut(0).fill(inv_sqrt_n);
    for k in 1..n {
        let proj = vecs.column(k).iter().sum::<f64>() * inv_sqrt_n;
        let mut col = vecs.column(k).into_owned();
        col.add_scalar_mut(-proj * inv_sqrt_n);
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        vecs.set_column(k, &col);
    }

    let rest = &values[1..];
    let lambda = rest.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let lambda_min = *values.last().unwrap_or(&1.0);
    let lambda_min_pos = rest
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    Ok(SpectralInfo {
        eigenvalues: values,
        lambda,
        gap: 1.0 - lambda,
        lambda_min,
        lambda_min_pos,
        eigvecs: vecs,
    })
}

fn asymmetry(w: &Mat) -> f64 {
    let n = w.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((w[(i, j)] - w[(j, i)]).abs());
        }
    }
    worst
}

pub const PD_TOL: f64 = 1e-10;

/// Symmetric doubly stochastic weight matrix with cached spectral data.
#[derive(Debug)]
pub struct MixingMatrix {
    w: Mat,
    spectral: OnceLock<SpectralInfo>,
}

impl Clone for MixingMatrix {
    fn clone(&self) -> Self {
        let spectral = OnceLock::new();
        if let Some(s) = self.spectral.get() {
            let _ = spectral.set(s.clone());
        }
        MixingMatrix {
            w: self.w.clone(),
            spectral,
        }
    }
}

impl MixingMatrix {
    /// Validates and wraps a weight matrix: symmetric to 1e-12, rows summing
    /// to one within 1e-12, nonnegative, and with a connected support.
    pub fn from_matrix(w: Mat) -> Result<Self> {
        let n = w.nrows();
        if n == 0 || w.ncols() != n {
            return Err(Error::InvalidMixing("matrix must be square and non-empty".into()));
        }
        let asym = asymmetry(&w);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        for i in 0..n {
            let row_sum: f64 = w.row(i).iter().sum();
            if (row_sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidMixing(format!(
                    "row {i} sums to {row_sum:.17}, not 1"
                )));
            }
            if let Some(j) = (0..n).find(|&j| w[(i, j)] < 0.0) {
                return Err(Error::InvalidMixing(format!("negative entry w[{i}][{j}]")));
            }
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if w[(i, j)] > 0.0 {
                    edges.push((i, j));
                }
            }
        }
        Graph::from_edges(n, &edges)?;
        Ok(MixingMatrix {
            w,
            spectral: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.w
    }

    pub fn spectral(&self) -> &SpectralInfo {
        self.spectral.get_or_init(|| {
            spectral_info(&self.w).expect("mixing matrix validated as symmetric at construction")
        })
    }

    /// Eigenvalues at or below [`PD_TOL`] count as zero.
    pub fn is_positive_definite(&self) -> bool {
        self.spectral().lambda_min > PD_TOL
    }

    /// Fails with a pointer to [`lazify`] unless every eigenvalue is positive.
    pub fn require_positive_definite(&self) -> Result<()> {
        if self.is_positive_definite() {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite(self.spectral().lambda_min))
        }
    }

    /// `(I − W)^{1/2}` through the cached eigenbasis.
    pub fn sqrt_laplacian(&self) -> Mat {
        let s = self.spectral();
        spectral_function(&s.eigvecs, &s.eigenvalues, |v| (1.0 - v).max(0.0).sqrt())
    }

    /// Evaluates `Σ_d c_d W^d` by Horner's rule.
    pub fn polynomial(&self, coeffs: &[f64]) -> Mat {
        let n = self.n();
        let mut acc = Mat::zeros(n, n);
        for &c in coeffs.iter().rev() {
            acc = &self.w * acc;
            for i in 0..n {
                acc[(i, i)] += c;
            }
        }
        acc
    }
}

/// Metropolis–Hastings weights: `w_ij = 1 / (1 + max(deg_i, deg_j))` on
/// edges, the residual on the diagonal.
pub fn metropolis_weights(g: &Graph) -> MixingMatrix {
    let n = g.n();
    let deg = g.degrees();
    let mut w = Mat::zeros(n, n);
    for (i, j) in g.edges() {
        let v = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix {
        w,
        spectral: OnceLock::new(),
    }
}

/// `(1 − τ) W + τ I`; eigenvalues map as `λ ↦ (1 − τ) λ + τ`.
pub fn lazify(w: &MixingMatrix, tau: f64) -> Result<MixingMatrix> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidLaziness(tau));
    }
    let n = w.n();
    let mut m = w.matrix() * (1.0 - tau);
    for i in 0..n {
        m[(i, i)] += tau;
    }
    Ok(MixingMatrix {
        w: m,
        spectral: OnceLock::new(),
    })
}
