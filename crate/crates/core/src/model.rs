//! Coupling graphs, external fields and model specifications.
//!
//! Couplings are stored as one scale factor plus an adjacency structure:
//! the complete graph is implicit, every other family uses a sorted CSR
//! neighbor list. A plus boundary is a ghost site clamped to `+1`; it is not
//! part of the spin vector, each real site just records how many bonds it has
//! to the ghost.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Free,
    Plus,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Free => write!(f, "free"),
            Boundary::Plus => write!(f, "plus"),
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" | "f" => Ok(Boundary::Free),
            "plus" | "+" => Ok(Boundary::Plus),
            other => Err(Error::InvalidParameter(format!("unknown boundary condition `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GraphKind {
    Complete,
    ErdosRenyi { p: f64 },
    RandomRegular { degree: usize },
    Lattice { side: usize, dim: usize, boundary: Boundary },
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Complete => write!(f, "complete"),
            GraphKind::ErdosRenyi { p } => write!(f, "erdos_renyi {p}"),
            GraphKind::RandomRegular { degree } => write!(f, "random_regular {degree}"),
            GraphKind::Lattice { side, dim, boundary } => write!(f, "lattice {side} {dim} {boundary}"),
        }
    }
}

/// Row-major geometry of a `side^dim` box. The last coordinate varies fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeShape {
    pub side: usize,
    pub dim: usize,
}

impl LatticeShape {
    pub fn new(side: usize, dim: usize) -> Result<Self> {
        if side == 0 || dim == 0 {
            return Err(Error::InvalidSize(format!("lattice side {side} and dim {dim} must be positive")));
        }
        Self::checked_volume(side, dim)?;
        Ok(Self { side, dim })
    }

    fn checked_volume(side: usize, dim: usize) -> Result<usize> {
        let d = u32::try_from(dim).map_err(|_| Error::InvalidSize(format!("dimension {dim} too large")))?;
        side.checked_pow(d)
            .filter(|&v| v <= u32::MAX as usize)
            .ok_or_else(|| Error::InvalidSize(format!("{side}^{dim} sites overflows the site index")))
    }

    pub fn volume(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        coords.iter().fold(0, |acc, &c| acc * self.side + c)
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for slot in out.iter_mut().rev() {
            *slot = index % self.side;
            index /= self.side;
        }
        out
    }

    /// L1 distance from `coords` to the nearest site outside the box.
    pub fn distance_to_exterior(&self, coords: &[usize]) -> usize {
        coords.iter().map(|&c| (c + 1).min(self.side - c)).min().unwrap_or(0)
    }
}

/// Symmetric, hollow, nonnegative coupling matrix `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingGraph {
    n: usize,
    kind: GraphKind,
    scale: f64,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    ghost_bonds: Vec<u8>,
}

impl CouplingGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// Weight carried by every present edge.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.kind, GraphKind::Complete)
    }

    pub fn lattice_shape(&self) -> Option<LatticeShape> {
        match self.kind {
            GraphKind::Lattice { side, dim, .. } => Some(LatticeShape { side, dim }),
            _ => None,
        }
    }

    pub fn boundary(&self) -> Boundary {
        match self.kind {
            GraphKind::Lattice { boundary, .. } => boundary,
            _ => Boundary::Free,
        }
    }

    pub fn has_ghost(&self) -> bool {
        !self.ghost_bonds.is_empty()
    }

    /// Neighbors of `i` among real sites. Empty slice for the implicit complete graph.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        if self.is_complete() {
            return &[];
        }
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        if self.is_complete() {
            self.n - 1
        } else {
            self.offsets[i + 1] - self.offsets[i]
        }
    }

    /// Number of unit bonds between site `i` and the plus ghost.
    pub fn ghost_bonds(&self, i: usize) -> u8 {
        self.ghost_bonds.get(i).copied().unwrap_or(0)
    }

    pub fn ghost_degree(&self) -> usize {
        self.ghost_bonds.iter().map(|&b| b as usize).sum()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        if self.is_complete() {
            return self.scale;
        }
        match self.neighbors(i).binary_search(&(j as u32)) {
            Ok(_) => self.scale,
            Err(_) => 0.0,
        }
    }

    pub fn ghost_weight(&self, i: usize) -> f64 {
        self.ghost_bonds(i) as f64 * self.scale
    }

    pub fn edge_count(&self) -> usize {
        if self.is_complete() {
            self.n * (self.n - 1) / 2
        } else {
            self.neighbors.len() / 2
        }
    }

    /// Max absolute row sum, ghost bonds included.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|i| self.degree(i) as f64 * self.scale + self.ghost_weight(i))
            .fold(0.0, f64::max)
    }

    /// `sum_j Q_ij x_j` including the ghost's `+1` contribution. `O(n)` for the complete graph.
    pub fn coupling_sum(&self, i: usize, spins: &[i8]) -> f64 {
        if self.is_complete() {
            let total: i64 = spins.iter().map(|&s| s as i64).sum();
            return (total - spins[i] as i64) as f64 * self.scale;
        }
        let s: i64 = self.neighbors(i).iter().map(|&j| spins[j as usize] as i64).sum();
        s as f64 * self.scale + self.ghost_weight(i)
    }

    /// Every edge once as `(i, j, weight)` with `i < j`; ghost edges use `j == n`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.n {
            if self.is_complete() {
                out.extend((i + 1..self.n).map(|j| (i, j, self.scale)));
            } else {
                out.extend(self.neighbors(i).iter().filter(|&&j| j as usize > i).map(|&j| (i, j as usize, self.scale)));
            }
        }
        for i in 0..self.n {
            if self.ghost_bonds(i) > 0 {
                out.push((i, self.n, self.ghost_weight(i)));
            }
        }
        out
    }

    fn from_adjacency(n: usize, kind: GraphKind, scale: f64, adj: Vec<Vec<u32>>, ghost_bonds: Vec<u8>) -> Self {
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(adj.iter().map(Vec::len).sum());
        offsets.push(0);
        for mut row in adj {
            row.sort_unstable();
            neighbors.extend_from_slice(&row);
            offsets.push(neighbors.len());
        }
        Self { n, kind, scale, offsets, neighbors, ghost_bonds }
    }
}

/// `Q_ij = 1(i != j) / n`.
pub fn build_complete(n: usize) -> Result<CouplingGraph> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("complete graph needs n >= 2, got {n}")));
    }
    Ok(CouplingGraph {
        n,
        kind: GraphKind::Complete,
        scale: 1.0 / n as f64,
        offsets: Vec::new(),
        neighbors: Vec::new(),
        ghost_bonds: Vec::new(),
    })
}

/// Dense Erdős–Rényi graph with edges scaled by `1/(np)`.
pub fn build_erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<CouplingGraph> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("edge probability must lie in (0,1), got {p}")));
    }
    if n < 2 {
        return Err(Error::InvalidSize(format!("graph needs n >= 2, got {n}")));
    }
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                adj[i].push(j as u32);
                adj[j].push(i as u32);
            }
        }
    }
    Ok(CouplingGraph::from_adjacency(n, GraphKind::ErdosRenyi { p }, 1.0 / (n as f64 * p), adj, Vec::new()))
}

/// Simple `d`-regular graph from the pairing model, edges scaled by `1/d`.
///
/// Stubs are paired one random pair at a time; a pair that would create a
/// loop or a multi-edge is redrawn, and a pairing that gets stuck restarts.
/// At most `10 n` restarts are attempted.
pub fn build_random_regular<R: Rng + ?Sized>(n: usize, degree: usize, rng: &mut R) -> Result<CouplingGraph> {
    if degree == 0 || degree >= n {
        return Err(Error::InvalidParameter(format!("degree must satisfy 0 < d < n, got d={degree}, n={n}")));
    }
    if (n * degree) % 2 != 0 {
        return Err(Error::InvalidParameter(format!("n*d must be even, got n={n}, d={degree}")));
    }
    let budget = 10 * n;
    for _ in 0..budget {
        if let Some(adj) = try_pairing(n, degree, rng) {
            return Ok(CouplingGraph::from_adjacency(
                n,
                GraphKind::RandomRegular { degree },
                1.0 / degree as f64,
                adj,
                Vec::new(),
            ));
        }
    }
    Err(Error::Generation(format!("no simple {degree}-regular pairing on {n} vertices after {budget} attempts")))
}

fn try_pairing<R: Rng + ?Sized>(n: usize, degree: usize, rng: &mut R) -> Option<Vec<Vec<u32>>> {
    let mut stubs: Vec<u32> = (0..n as u32).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
    let mut adj: Vec<Vec<u32>> = vec![Vec::with_capacity(degree); n];
    let mut misses = 0usize;
    while !stubs.is_empty() {
        let len = stubs.len();
        let a = rng.random_range(0..len);
        let b = rng.random_range(0..len);
        let (u, v) = (stubs[a], stubs[b]);
        if a != b && u != v && !adj[u as usize].contains(&v) {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
            let (hi, lo) = if a > b { (a, b) } else { (b, a) };
            stubs.swap_remove(hi);
            stubs.swap_remove(lo);
            misses = 0;
            continue;
        }
        misses += 1;
        if misses > 4 * len + 16 {
            // Stuck unless some admissible pair remains.
            let admissible = (0..len).any(|x| {
                (x + 1..len).any(|y| {
                    let (u, v) = (stubs[x], stubs[y]);
                    u != v && !adj[u as usize].contains(&v)
                })
            });
            if !admissible {
                return None;
            }
            misses = 0;
        }
    }
    Some(adj)
}

/// Nearest-neighbor lattice `{0..side}^dim` with unit couplings.
pub fn build_lattice(side: usize, dim: usize, boundary: Boundary) -> Result<CouplingGraph> {
    if side < 2 {
        return Err(Error::InvalidSize(format!("lattice side must be >= 2, got {side}")));
    }
    let shape = LatticeShape::new(side, dim)?;
    let n = shape.volume();
    let mut adj = vec![Vec::with_capacity(2 * dim); n];
    let mut ghost = if boundary == Boundary::Plus { vec![0u8; n] } else { Vec::new() };
    let mut stride = 1usize;
    let mut strides = vec![0usize; dim];
    for k in (0..dim).rev() {
        strides[k] = stride;
        stride *= side;
    }
    for i in 0..n {
        let coords = shape.coords(i);
        for (k, &c) in coords.iter().enumerate() {
            if c > 0 {
                adj[i].push((i - strides[k]) as u32);
            } else if boundary == Boundary::Plus {
                ghost[i] += 1;
            }
            if c + 1 < side {
                adj[i].push((i + strides[k]) as u32);
            } else if boundary == Boundary::Plus {
                ghost[i] += 1;
            }
        }
    }
    Ok(CouplingGraph::from_adjacency(n, GraphKind::Lattice { side, dim, boundary }, 1.0, adj, ghost))
}

/// External field `mu`: nonnegative, supported on `support`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    n: usize,
    support: Vec<usize>,
    strengths: Vec<f64>,
}

impl SignalSpec {
    pub fn null(n: usize) -> Self {
        Self { n, support: Vec::new(), strengths: Vec::new() }
    }

    /// Strength `a` on every site of `support`.
    pub fn uniform(n: usize, support: &[usize], a: f64) -> Result<Self> {
        Self::with_strengths(n, support, &vec![a; support.len()])
    }

    pub fn with_strengths(n: usize, support: &[usize], strengths: &[f64]) -> Result<Self> {
        if support.len() != strengths.len() {
            return Err(Error::InvalidParameter("support and strengths differ in length".into()));
        }
        let mut pairs: Vec<(usize, f64)> = support.iter().copied().zip(strengths.iter().copied()).collect();
        pairs.sort_by_key(|p| p.0);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidParameter(format!("duplicate support index {}", w[0].0)));
            }
        }
        for &(i, a) in &pairs {
            if i >= n {
                return Err(Error::InvalidParameter(format!("support index {i} out of range for n={n}")));
            }
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::InvalidParameter(format!("field entries must be finite and >= 0, got {a}")));
            }
        }
        let (support, strengths) = pairs.into_iter().unzip();
        Ok(Self { n, support, strengths })
    }

    /// Field from a dense vector; its support is the set of nonzero entries.
    pub fn from_vector(mu: &[f64]) -> Result<Self> {
        let (support, strengths): (Vec<usize>, Vec<f64>) =
            mu.iter().enumerate().filter(|(_, &a)| a != 0.0).map(|(i, &a)| (i, a)).unzip();
        Self::with_strengths(mu.len(), &support, &strengths)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn is_null(&self) -> bool {
        self.strengths.iter().all(|&a| a == 0.0)
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.n];
        for (&i, &a) in self.support.iter().zip(&self.strengths) {
            mu[i] = a;
        }
        mu
    }
}

/// `P(x) ∝ exp((beta/2) x'Qx + mu'x)`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    graph: Arc<CouplingGraph>,
    beta: f64,
    field: SignalSpec,
    mu: Vec<f64>,
}

impl ModelSpec {
    pub fn new(graph: Arc<CouplingGraph>, beta: f64, field: SignalSpec) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be finite and >= 0, got {beta}")));
        }
        if field.n() != graph.n() {
            return Err(Error::Shape { expected: graph.n(), got: field.n() });
        }
        let mu = field.to_vector();
        Ok(Self { graph, beta, field, mu })
    }

    pub fn null(graph: Arc<CouplingGraph>, beta: f64) -> Result<Self> {
        let n = graph.n();
        Self::new(graph, beta, SignalSpec::null(n))
    }

    /// Same graph and beta with a different field.
    pub fn with_field(&self, field: SignalSpec) -> Result<Self> {
        Self::new(self.graph.clone(), self.beta, field)
    }

    pub fn graph(&self) -> &CouplingGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<CouplingGraph> {
        &self.graph
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn field(&self) -> &SignalSpec {
        &self.field
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    fn check(&self, x: &SpinConfiguration) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Shape { expected: self.n(), got: x.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    spins: Vec<i8>,
}

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter(format!("spin value {bad} is not +1 or -1")));
        }
        Ok(Self { spins })
    }

    pub fn all_plus(n: usize) -> Self {
        Self { spins: vec![1; n] }
    }

    pub fn all_minus(n: usize) -> Self {
        Self { spins: vec![-1; n] }
    }

    /// Bit `i` of `code` set means site `i` is `+1`.
    pub fn from_bits(n: usize, code: u64) -> Self {
        Self { spins: (0..n).map(|i| if code >> i & 1 == 1 { 1 } else { -1 }).collect() }
    }

    pub(crate) fn from_raw(spins: Vec<i8>) -> Self {
        Self { spins }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }


    pub fn get(&self, i: usize) -> i8 {
        self.spins[i]
    }

    pub fn set(&mut self, i: usize, value: i8) {
        assert!(value == 1 || value == -1);
        self.spins[i] = value;
    }

    pub fn flip(&mut self, i: usize) {
        self.spins[i] = -self.spins[i];
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.flip(i);
        out
    }

    pub fn sum(&self) -> i64 {
        self.spins.iter().map(|&s| s as i64).sum()
    }

    pub fn plus_count(&self) -> usize {
        self.spins.iter().filter(|&&s| s == 1).count()
    }

    pub fn mean(&self) -> f64 {
        self.sum() as f64 / self.len() as f64
    }
}

/// Log of the unnormalized weight: `(beta/2) x'Qx + mu'x`, ghost spin at `+1`.
pub fn hamiltonian(model: &ModelSpec, x: &SpinConfiguration) -> Result<f64> {
    model.check(x)?;
    let g = model.graph();
    let spins = x.spins();
    let field: f64 = model.mu().iter().zip(spins).map(|(&m, &s)| m * s as f64).sum();
    let pair = if g.is_complete() {
        let total = x.sum() as f64;
        // sum_{i != j} x_i x_j = (sum x)^2 - n
        (total * total - g.n() as f64) * g.scale() / 2.0
    } else {
        let mut acc = 0i64;
        for i in 0..g.n() {
            let si = spins[i] as i64;
            acc += g.neighbors(i).iter().filter(|&&j| j as usize > i).map(|&j| si * spins[j as usize] as i64).sum::<i64>();
        }
        let ghost: f64 = (0..g.n()).map(|i| g.ghost_weight(i) * spins[i] as f64).sum();
        acc as f64 * g.scale() + ghost
    };
    Ok(model.beta() * pair + field)
}

/// Conditional field at site `i`: `beta * sum_j Q_ij x_j + mu_i`.
pub fn local_field(model: &ModelSpec, x: &SpinConfiguration, i: usize) -> Result<f64> {
    model.check(x)?;
    if i >= model.n() {
        return Err(Error::InvalidParameter(format!("site {i} out of range for n={}", model.n())));
    }
    Ok(model.beta() * model.graph().coupling_sum(i, x.spins()) + model.mu()[i])
}

/// Writes the line-oriented graph format: `n`, the kind line, then `i j weight` per edge.
pub fn write_graph<W: Write>(graph: &CouplingGraph, mut w: W) -> Result<()> {
    writeln!(w, "{}", graph.n())?;
    writeln!(w, "{}", graph.kind())?;
    for (i, j, wt) in graph.edges() {
        writeln!(w, "{i} {j} {wt}")?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn read_graph<R: BufRead>(r: R) -> Result<CouplingGraph> {
    let mut lines = r.lines().enumerate().map(|(k, l)| l.map(|l| (k + 1, l)));
    let (ln, first) = lines.next().ok_or_else(|| parse_err(1, "missing site count"))??;
    let n: usize = first.trim().parse().map_err(|_| parse_err(ln, "site count is not an integer"))?;
    let (ln, kind_line) = lines.next().ok_or_else(|| parse_err(2, "missing kind line"))??;
    let tokens: Vec<&str> = kind_line.split_whitespace().collect();
    let num = |k: usize| -> Result<&str> { tokens.get(k).copied().ok_or_else(|| parse_err(ln, "truncated kind line")) };
    let kind = match tokens.first().copied() {
        Some("complete") => GraphKind::Complete,
        Some("erdos_renyi") => GraphKind::ErdosRenyi { p: num(1)?.parse().map_err(|_| parse_err(ln, "bad p"))? },
        Some("random_regular") => {
            GraphKind::RandomRegular { degree: num(1)?.parse().map_err(|_| parse_err(ln, "bad degree"))? }
        }
        Some("lattice") => GraphKind::Lattice {
            side: num(1)?.parse().map_err(|_| parse_err(ln, "bad side"))?,
            dim: num(2)?.parse().map_err(|_| parse_err(ln, "bad dim"))?,
            boundary: num(3)?.parse().map_err(|_| parse_err(ln, "bad boundary"))?,
        },
        _ => return Err(parse_err(ln, format!("unknown graph kind `{kind_line}`"))),
    };

    let mut adj = vec![Vec::new(); n];
    let mut ghost = vec![0u8; n];
    let mut scale: Option<f64> = None;
    let mut edge_count = 0usize;
    for item in lines {
        let (ln, line) = item?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(ln, "expected `i j weight`"));
        }
        let i: usize = parts[0].parse().map_err(|_| parse_err(ln, "bad i"))?;
        let j: usize = parts[1].parse().map_err(|_| parse_err(ln, "bad j"))?;
        let wt: f64 = parts[2].parse().map_err(|_| parse_err(ln, "bad weight"))?;
        if i >= j || j > n {
            return Err(parse_err(ln, "edges must satisfy i < j <= n"));
        }
        if j == n {
            let unit = scale.unwrap_or(1.0);
            let bonds = (wt / unit).round();
            if bonds < 1.0 || bonds > 255.0 {
                return Err(parse_err(ln, "ghost weight is not a small multiple of the edge scale"));
            }
            ghost[i] = bonds as u8;
            continue;
        }
        match scale {
            None => scale = Some(wt),
            Some(s) if s != wt => return Err(parse_err(ln, "edge weights differ")),
            _ => {}
        }
        adj[i].push(j as u32);
        adj[j].push(i as u32);
        edge_count += 1;
    }
    let expected_scale = match kind {
        GraphKind::Complete => 1.0 / n as f64,
        GraphKind::ErdosRenyi { p } => 1.0 / (n as f64 * p),
        GraphKind::RandomRegular { degree } => 1.0 / degree as f64,
        GraphKind::Lattice { .. } => 1.0,
    };
    if let Some(s) = scale {
        if (s - expected_scale).abs() > 1e-12 * expected_scale {
            return Err(parse_err(0, format!("edge weight {s} does not match {kind} scale {expected_scale}")));
        }
    }
    match kind {
        GraphKind::Complete => {
            if edge_count != n * (n.saturating_sub(1)) / 2 {
                return Err(parse_err(0, "complete graph is missing edges"));
            }
            build_complete(n)
        }
        GraphKind::Lattice { side, dim, boundary } => {
            let rebuilt = build_lattice(side, dim, boundary)?;
            let has_ghost = ghost.iter().any(|&g| g > 0);
            let read = CouplingGraph::from_adjacency(n, kind, 1.0, adj, if has_ghost { ghost } else { Vec::new() });
            if read != rebuilt {
                return Err(parse_err(0, "lattice edges do not match the declared geometry"));
            }
            Ok(rebuilt)
        }
        _ => Ok(CouplingGraph::from_adjacency(n, kind, expected_scale, adj, Vec::new())),
    }
}
