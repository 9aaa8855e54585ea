//! Candidate-support families for scan tests.
//!
//! Candidates are sorted site lists of a common size `s`. Cube classes on a
//! lattice also keep their anchors so statistics can use a summed-area table.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatticeShape, SignalSpec};

/// `sqrt(2) (1 - |S1 ∩ S2| / sqrt(|S1| |S2|))` for sorted, duplicate-free sets.
pub fn gamma_distance(a: &[u32], b: &[u32]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("distance between empty supports is undefined".into()));
    }
    Ok(gamma_from_overlap(sorted_overlap(a, b), a.len(), b.len()))
}

fn gamma_from_overlap(overlap: usize, la: usize, lb: usize) -> f64 {
    std::f64::consts::SQRT_2 * (1.0 - overlap as f64 / ((la * lb) as f64).sqrt())
}

pub fn sorted_overlap(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                k += 1;
                i += 1;
                j += 1;
            }
        }
    }
    k
}

/// Smallest `k` with `k^d >= s`.
pub fn cube_side(s: usize, d: usize) -> usize {
    let mut k = (s as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
    while k.pow(d as u32) < s {
        k += 1;
    }
    while k > 1 && (k - 1).pow(d as u32) >= s {
        k -= 1;
    }
    k
}

/// `k` with `k^d = n`, if it exists.
pub fn exact_root(n: usize, d: usize) -> Option<usize> {
    let k = cube_side(n, d);
    (k.pow(d as u32) == n).then_some(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Explicit,
    RectangleFull { side: usize, dim: usize, cube_side: usize },
    RectangleGrid { side: usize, dim: usize, cube_side: usize, eta: f64, pitch: usize },
    DisjointBlocks { side: usize, dim: usize, cube_side: usize },
    ContiguousBlocks { n: usize, s: usize },
    GreedyCover { eps: f64, from: Box<Provenance> },
}

/// Axis-aligned cubes of side `k`, identified by their lowest corner.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeLayout {
    pub shape: LatticeShape,
    pub k: usize,
    pub anchors: Vec<Vec<usize>>,
}

impl CubeLayout {
    fn overlap(&self, a: usize, b: usize) -> usize {
        self.anchors[a].iter().zip(&self.anchors[b]).map(|(&x, &y)| self.k.saturating_sub(x.abs_diff(y))).product()
    }
}

/// Sorted sites of the cube of side `k` with lowest corner `anchor`.
pub fn cube_sites(shape: &LatticeShape, k: usize, anchor: &[usize]) -> Vec<u32> {
    let d = shape.dim;
    let mut out = Vec::with_capacity(k.pow(d as u32));
    let mut offset = vec![0usize; d];
    let mut coords = vec![0usize; d];
    loop {
        for a in 0..d {
            coords[a] = anchor[a] + offset[a];
        }
        out.push(shape.index(&coords) as u32);
        // Odometer over the offsets, last axis fastest, which keeps `out` sorted.
        let mut axis = d;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            offset[axis] += 1;
            if offset[axis] < k {
                break;
            }
            offset[axis] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanClass {
    n_sites: usize,
    s: usize,
    candidates: Vec<Vec<u32>>,
    provenance: Provenance,
    cubes: Option<CubeLayout>,
}

impl ScanClass {
    /// Validates sizes, ranges and distinctness; candidates are sorted on entry.
    pub fn explicit(n_sites: usize, mut candidates: Vec<Vec<u32>>) -> Result<Self> {
        let s = candidates.first().map(Vec::len).ok_or_else(|| Error::InvalidSize("empty class".into()))?;
        if s == 0 {
            return Err(Error::InvalidSize("candidates must be nonempty".into()));
        }
        let mut seen = HashSet::with_capacity(candidates.len());
        for c in candidates.iter_mut() {
            c.sort_unstable();
            if c.len() != s {
                return Err(Error::InvalidSize(format!("candidate sizes differ: {} vs {s}", c.len())));
            }
            if c.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter("candidate contains a repeated site".into()));
            }
            if c.last().is_some_and(|&i| i as usize >= n_sites) {
                return Err(Error::InvalidParameter(format!("candidate site out of range for n={n_sites}")));
            }
            if !seen.insert(c.clone()) {
                return Err(Error::InvalidParameter("duplicate candidate".into()));
            }
        }
        Ok(Self { n_sites, s, candidates, provenance: Provenance::Explicit, cubes: None })
    }

    fn from_cubes(layout: CubeLayout, provenance: Provenance) -> Result<Self> {
        if layout.anchors.is_empty() {
            return Err(Error::InvalidSize("cube class is empty".into()));
        }
        let candidates = layout.anchors.iter().map(|a| cube_sites(&layout.shape, layout.k, a)).collect();
        Ok(Self {
            n_sites: layout.shape.volume(),
            s: layout.k.pow(layout.shape.dim as u32),
            candidates,
            provenance,
            cubes: Some(layout),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn log_size(&self) -> f64 {
        (self.len() as f64).ln()
    }

    pub fn candidates(&self) -> &[Vec<u32>] {
        &self.candidates
    }

    pub fn candidate(&self, k: usize) -> &[u32] {
        &self.candidates[k]
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn cubes(&self) -> Option<&CubeLayout> {
        self.cubes.as_ref()
    }

    fn overlap(&self, a: usize, b: usize) -> usize {
        match &self.cubes {
            Some(layout) => layout.overlap(a, b),
            None => sorted_overlap(&self.candidates[a], &self.candidates[b]),
        }
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        gamma_from_overlap(self.overlap(a, b), self.s, self.s)
    }

    fn subset(&self, keep: &[usize], provenance: Provenance) -> Self {
        Self {
            n_sites: self.n_sites,
            s: self.s,
            candidates: keep.iter().map(|&k| self.candidates[k].clone()).collect(),
            provenance,
            cubes: self.cubes.as_ref().map(|l| CubeLayout {
                shape: l.shape,
                k: l.k,
                anchors: keep.iter().map(|&k| l.anchors[k].clone()).collect(),
            }),
        }
    }

    /// One candidate per line, space-separated site indices.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for c in &self.candidates {
            let line: Vec<String> = c.iter().map(u32::to_string).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(n_sites: usize, r: R) -> Result<Self> {
        let mut candidates = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let c = line
                .split_whitespace()
                .map(|t| t.parse::<u32>().map_err(|e| Error::Parse { line: k + 1, msg: format!("`{t}`: {e}") }))
                .collect::<Result<Vec<u32>>>()?;
            candidates.push(c);
        }
        Self::explicit(n_sites, candidates)
    }
}

/// Greedy farthest-point `eps`-cover of `class` under `gamma_distance`.
pub fn greedy_cover(class: &ScanClass, eps: f64) -> Result<ScanClass> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    let n = class.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut chosen = Vec::new();
    let mut next = 0;
    loop {
        chosen.push(next);
        dist[next] = 0.0;
        let mut far = (0.0, next);
        for k in 0..n {
            if dist[k] > 0.0 {
                dist[k] = dist[k].min(class.distance(next, k));
            }
            if dist[k] > far.0 {
                far = (dist[k], k);
            }
        }
        if far.0 <= eps {
            break;
        }
        next = far.1;
    }
    chosen.sort_unstable();
    Ok(class.subset(&chosen, Provenance::GreedyCover { eps, from: Box::new(class.provenance.clone()) }))
}

/// Largest pairwise-over-cover distance, for checking covers.
pub fn cover_radius(class: &ScanClass, cover: &ScanClass) -> f64 {
    class
        .candidates()
        .iter()
        .map(|c| {
            cover.candidates().iter().map(|m| gamma_from_overlap(sorted_overlap(c, m), c.len(), m.len())).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// All axis-aligned cubes of side `ceil(s^(1/d))` inside a `side^d` box, enumerated lazily.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectangleClass {
    shape: LatticeShape,
    k: usize,
}

impl RectangleClass {
    pub fn new(n_sites: usize, dim: usize, s: usize) -> Result<Self> {
        let side = exact_root(n_sites, dim)
            .ok_or_else(|| Error::InvalidSize(format!("{n_sites} sites is not a {dim}-dimensional box")))?;
        let shape = LatticeShape::new(side, dim)?;
        if s == 0 {
            return Err(Error::InvalidSize("sparsity must be positive".into()));
        }
        let k = cube_side(s, dim);
        if k > side {
            return Err(Error::InvalidSize(format!("cube side {k} exceeds box side {side}")));
        }
        Ok(Self { shape, k })
    }

    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    pub fn cube_side(&self) -> usize {
        self.k
    }

    /// Sites per cube, `k^d`.
    pub fn s(&self) -> usize {
        self.k.pow(self.shape.dim as u32)
    }

    pub fn count(&self) -> usize {
        (self.shape.side - self.k + 1).pow(self.shape.dim as u32)
    }

    pub fn anchors(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let per_axis = self.shape.side - self.k + 1;
        let grid = LatticeShape { side: per_axis, dim: self.shape.dim };
        (0..self.count()).map(move |i| grid.coords(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<u32>> + '_ {
        self.anchors().map(|a| cube_sites(&self.shape, self.k, &a))
    }

    pub fn materialize(&self) -> Result<ScanClass> {
        let layout = CubeLayout { shape: self.shape, k: self.k, anchors: self.anchors().collect() };
        ScanClass::from_cubes(layout, Provenance::RectangleFull { side: self.shape.side, dim: self.shape.dim, cube_side: self.k })
    }
}

pub fn build_rectangle_class(n_sites: usize, dim: usize, s: usize) -> Result<RectangleClass> {
    RectangleClass::new(n_sites, dim, s)
}

/// `min(1/2, 1/sqrt(log(n/s)))`.
pub fn default_eta(n_sites: usize, s: usize) -> f64 {
    (1.0 / (n_sites as f64 / s as f64).ln().sqrt()).min(0.5)
}

/// `1/sqrt(log n)`.
pub fn default_epsilon(n_sites: usize) -> f64 {
    1.0 / (n_sites as f64).ln().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectangleGridParams {
    pub n_sites: usize,
    pub dim: usize,
    pub s: usize,
    pub eta: f64,
}

impl RectangleGridParams {
    pub fn new(n_sites: usize, dim: usize, s: usize, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0, 1], got {eta}")));
        }
        Ok(Self { n_sites, dim, s, eta })
    }

    pub fn with_default_eta(n_sites: usize, dim: usize, s: usize) -> Result<Self> {
        Self::new(n_sites, dim, s, default_eta(n_sites, s))
    }
}

/// Cubes anchored every `floor(eta k)` sites along each axis.
pub fn build_scan_grid(params: &RectangleGridParams) -> Result<ScanClass> {
    let full = RectangleClass::new(params.n_sites, params.dim, params.s)?;
    let k = full.k;
    let pitch = (params.eta * k as f64).floor() as usize;
    if pitch == 0 {
        return Err(Error::InvalidParameter(format!("grid pitch eta*k = {}*{k} rounds to 0", params.eta)));
    }
    let axis: Vec<usize> = (0..).map(|j| j * pitch).take_while(|&a| a + k <= full.shape.side).collect();
    let grid = LatticeShape { side: axis.len(), dim: params.dim };
    let anchors = (0..grid.volume()).map(|i| grid.coords(i).into_iter().map(|c| axis[c]).collect()).collect();
    ScanClass::from_cubes(
        CubeLayout { shape: full.shape, k, anchors },
        Provenance::RectangleGrid { side: full.shape.side, dim: params.dim, cube_side: k, eta: params.eta, pitch },
    )
}

/// Centre cubes of side `k` in tiles of side `3k`; trailing partial tiles are dropped.
pub fn build_disjoint_class(n_sites: usize, dim: usize, s: usize) -> Result<ScanClass> {
    let full = RectangleClass::new(n_sites, dim, s)?;
    let (side, k) = (full.shape.side, full.k);
    let tiles = side / (3 * k);
    if tiles == 0 {
        return Err(Error::InvalidSize(format!("box side {side} is smaller than one tile of side {}", 3 * k)));
    }
    let grid = LatticeShape { side: tiles, dim };
    let anchors = (0..grid.volume()).map(|i| grid.coords(i).into_iter().map(|t| 3 * k * t + k).collect()).collect();
    ScanClass::from_cubes(CubeLayout { shape: full.shape, k, anchors }, Provenance::DisjointBlocks { side, dim, cube_side: k })
}

/// `count` consecutive blocks `[j s, (j+1) s)` on sites `0..n`.
pub fn build_contiguous_blocks(n_sites: usize, s: usize, count: usize) -> Result<ScanClass> {
    if s == 0 || count == 0 {
        return Err(Error::InvalidSize("block size and count must be positive".into()));
    }
    if s.checked_mul(count).is_none_or(|need| need > n_sites) {
        return Err(Error::InvalidSize(format!("{count} blocks of {s} sites do not fit in {n_sites}")));
    }
    let candidates = (0..count).map(|j| ((j * s) as u32..((j + 1) * s) as u32).collect()).collect();
    Ok(ScanClass {
        n_sites,
        s,
        candidates,
        provenance: Provenance::ContiguousBlocks { n: n_sites, s },
        cubes: None,
    })
}

/// Field equal to `a` on `support` and zero elsewhere.
pub fn apply_signal(n_sites: usize, support: &[u32], a: f64) -> Result<SignalSpec> {
    if a == 0.0 {
        return Ok(SignalSpec::null(n_sites));
    }
    let support: Vec<usize> = support.iter().map(|&i| i as usize).collect();
    SignalSpec::uniform(n_sites, &support, a)
}
