//! Samplers for `P(beta, Q, mu)`.
//!
//! * Glauber (heat-bath) dynamics for any coupling graph.
//! * Exact draws for the Curie–Weiss model through the auxiliary variable `W`.
//! * Swendsen–Wang cluster moves for lattices, with the plus ghost kept at `+1`
//!   and an external field handled by per-cluster sign weights.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auxiliary::AuxiliaryDensity;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, SpinConfiguration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    AllPlus,
    AllMinus,
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    /// Sites `0..n` in order.
    Sequential,
    /// `n` uniformly chosen sites per sweep.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in_sweeps: usize,
    pub thinning_sweeps: usize,
    pub initial_state: InitialState,
    pub order: SweepOrder,
}

impl ChainConfig {
    pub fn new(burn_in_sweeps: usize, thinning_sweeps: usize, initial_state: InitialState) -> Result<Self> {
        let c = Self { burn_in_sweeps, thinning_sweeps, initial_state, order: SweepOrder::Sequential };
        c.validate()?;
        Ok(c)
    }

    pub fn glauber_default() -> Self {
        Self { burn_in_sweeps: 200, thinning_sweeps: 5, initial_state: InitialState::UniformRandom, order: SweepOrder::Sequential }
    }

    pub fn swendsen_wang_default() -> Self {
        Self { burn_in_sweeps: 50, thinning_sweeps: 5, initial_state: InitialState::UniformRandom, order: SweepOrder::Sequential }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thinning_sweeps == 0 {
            return Err(Error::InvalidParameter("thinning must be at least one sweep".into()));
        }
        Ok(())
    }
}

pub fn initial_spins<R: Rng + ?Sized>(n: usize, init: InitialState, rng: &mut R) -> Vec<i8> {
    match init {
        InitialState::AllPlus => vec![1; n],
        InitialState::AllMinus => vec![-1; n],
        InitialState::UniformRandom => (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(),
    }
}

#[inline]
fn heat_bath_spin<R: Rng + ?Sized>(field: f64, rng: &mut R) -> i8 {
    let p_plus = 0.5 * (1.0 + field.tanh());
    if rng.random::<f64>() < p_plus {
        1
    } else {
        -1
    }
}

/// Single-site heat-bath chain.
pub struct GlauberChain<'a> {
    model: &'a ModelSpec,
    spins: Vec<i8>,
    total: i64,
    order: SweepOrder,
}

impl<'a> GlauberChain<'a> {
    pub fn new<R: Rng + ?Sized>(model: &'a ModelSpec, init: InitialState, order: SweepOrder, rng: &mut R) -> Self {
        let spins = initial_spins(model.n(), init, rng);
        Self::from_state(model, spins, order)
    }

    pub fn from_state(model: &'a ModelSpec, spins: Vec<i8>, order: SweepOrder) -> Self {
        let total = spins.iter().map(|&s| s as i64).sum();
        Self { model, spins, total, order }
    }

    fn update<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        let g = self.model.graph();
        let coupling = if g.is_complete() {
            (self.total - self.spins[i] as i64) as f64 * g.scale()
        } else {
            let s: i64 = g.neighbors(i).iter().map(|&j| self.spins[j as usize] as i64).sum();
            s as f64 * g.scale() + g.ghost_weight(i)
        };
        let new = heat_bath_spin(self.model.beta() * coupling + self.model.mu()[i], rng);
        self.total += (new - self.spins[i]) as i64;
        self.spins[i] = new;
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.spins.len();
        match self.order {
            SweepOrder::Sequential => (0..n).for_each(|i| self.update(i, rng)),
            SweepOrder::Random => (0..n).for_each(|_| {
                let i = rng.random_range(0..n);
                self.update(i, rng)
            }),
        }
    }

    pub fn state(&self) -> SpinConfiguration {
        SpinConfiguration::from_raw(self.spins.clone())
    }
}

/// `count` configurations: `burn_in` sweeps, then one record every `thinning` sweeps.
pub fn glauber_sample<R: Rng + ?Sized>(
    model: &ModelSpec,
    chain: &ChainConfig,
    count: usize,
    rng: &mut R,
) -> Result<Vec<SpinConfiguration>> {
    chain.validate()?;
    let mut state = GlauberChain::new(model, chain.initial_state, chain.order, rng);
    for _ in 0..chain.burn_in_sweeps {
        state.sweep(rng);
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..chain.thinning_sweeps {
            state.sweep(rng);
        }
        out.push(state.state());
    }
    Ok(out)
}

/// Rejection sampler for `W` with a piecewise-constant envelope on fine cells.
#[derive(Debug, Clone)]
struct AuxiliaryTable {
    density: AuxiliaryDensity,
    starts: Vec<f64>,
    widths: Vec<f64>,
    env_log: Vec<f64>,
    cdf: Vec<f64>,
}

impl AuxiliaryTable {
    fn build(density: AuxiliaryDensity) -> Result<Self> {
        let peak = density.max_log_density();
        if !peak.is_finite() {
            return Err(Error::Numerical("auxiliary density has no finite maximum".into()));
        }
        let radius = density.outer_radius();
        let lip = density.lipschitz(radius);
        let coarse = (0.25 * density.min_width()).min(0.01);
        let n_coarse = (2.0 * radius / coarse).ceil() as usize;
        let coarse = 2.0 * radius / n_coarse as f64;
        let fine_per_coarse = ((coarse * lip / 0.5).ceil() as usize).max(1);
        let fine = coarse / fine_per_coarse as f64;

        let (mut starts, mut widths, mut env_log) = (Vec::new(), Vec::new(), Vec::new());
        let mut left = density.log_density(-radius);
        for k in 0..n_coarse {
            let a = -radius + k as f64 * coarse;
            let right = density.log_density(a + coarse);
            // Drop coarse cells whose envelope is below exp(-40) of the peak.
            if (left + right) / 2.0 + lip * coarse / 2.0 - peak < -40.0 {
                left = right;
                continue;
            }
            let mut fl = left;
            for m in 0..fine_per_coarse {
                let fa = a + m as f64 * fine;
                let fr = if m + 1 == fine_per_coarse { right } else { density.log_density(fa + fine) };
                starts.push(fa);
                widths.push(fine);
                env_log.push((fl + fr) / 2.0 + lip * fine / 2.0 - peak);
                fl = fr;
            }
            left = right;
        }
        if starts.is_empty() {
            return Err(Error::Numerical("auxiliary density table is empty".into()));
        }
        let mut cdf = Vec::with_capacity(starts.len());
        let mut acc = 0.0;
        for (w, e) in widths.iter().zip(&env_log) {
            acc += w * e.exp();
            cdf.push(acc);
        }
        let env_log = env_log.into_iter().map(|e| e + peak).collect();
        Ok(Self { density, starts, widths, env_log, cdf })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cdf.last().expect("nonempty table");
        loop {
            let u = rng.random::<f64>() * total;
            let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
            let w = self.starts[k] + self.widths[k] * rng.random::<f64>();
            let accept = self.density.log_density(w) - self.env_log[k];
            debug_assert!(accept <= 1e-9, "envelope violated by {accept}");
            if rng.random::<f64>().ln() < accept {
                return w;
            }
        }
    }
}

/// Exact Curie–Weiss sampler. Construction tabulates the law of `W` once; draws are cheap.
#[derive(Debug, Clone)]
pub struct CurieWeissSampler {
    beta: f64,
    field: Vec<f64>,
    table: Option<AuxiliaryTable>,
}

impl CurieWeissSampler {
    pub fn new(n: usize, beta: f64, field: &[f64]) -> Result<Self> {
        if field.len() != n {
            return Err(Error::Shape { expected: n, got: field.len() });
        }
        if !(beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
        }
        let table = if beta > 0.0 { Some(AuxiliaryTable::build(AuxiliaryDensity::new(n, beta, field)?)?) } else { None };
        Ok(Self { beta, field: field.to_vec(), table })
    }

    pub fn for_model(model: &ModelSpec) -> Result<Self> {
        if !model.graph().is_complete() {
            return Err(Error::Contract("the exact sampler only applies to the complete graph".into()));
        }
        Self::new(model.n(), model.beta(), model.mu())
    }

    /// One draw of the auxiliary variable (0 when `beta = 0`).
    pub fn sample_w<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.table.as_ref().map_or(0.0, |t| t.sample(rng))
    }

    /// Spins given `W = w`: independent with fields `beta w + mu_i`.
    pub fn sample_given_w<R: Rng + ?Sized>(&self, w: f64, rng: &mut R) -> SpinConfiguration {
        let bw = self.beta * w;
        SpinConfiguration::from_raw(self.field.iter().map(|&mu| heat_bath_spin(bw + mu, rng)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpinConfiguration {
        let w = self.sample_w(rng);
        self.sample_given_w(w, rng)
    }
}

pub fn curie_weiss_exact_sample<R: Rng + ?Sized>(n: usize, beta: f64, field: &[f64], rng: &mut R) -> Result<SpinConfiguration> {
    Ok(CurieWeissSampler::new(n, beta, field)?.sample(rng))
}

/// Open/closed state of every unit bond; ghost bonds use `j == n`, one entry per unit bond.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BondConfiguration {
    pub edges: Vec<(u32, u32)>,
    pub open: Vec<bool>,
}

impl BondConfiguration {
    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }
}

fn require_lattice(model: &ModelSpec) -> Result<()> {
    if model.graph().lattice_shape().is_none() {
        return Err(Error::Contract("Swendsen–Wang is only implemented for lattice models".into()));
    }
    Ok(())
}

fn unit_bonds(model: &ModelSpec) -> Vec<(u32, u32)> {
    let g = model.graph();
    let n = g.n() as u32;
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(g.edge_count() + g.ghost_degree());
    for i in 0..g.n() {
        edges.extend(g.neighbors(i).iter().filter(|&&j| j as usize > i).map(|&j| (i as u32, j)));
    }
    for i in 0..g.n() {
        edges.extend(std::iter::repeat_n((i as u32, n), g.ghost_bonds(i) as usize));
    }
    edges
}

/// Edwards–Sokal half-step: each satisfied bond opens with probability `1 - exp(-2 beta)`.
pub fn fk_ising_bond_sample<R: Rng + ?Sized>(model: &ModelSpec, x: &SpinConfiguration, rng: &mut R) -> Result<BondConfiguration> {
    require_lattice(model)?;
    if x.len() != model.n() {
        return Err(Error::Shape { expected: model.n(), got: x.len() });
    }
    let p = 1.0 - (-2.0 * model.beta()).exp();
    let edges = unit_bonds(model);
    let spins = x.spins();
    let n = model.n();
    let spin_of = |k: u32| if k as usize == n { 1 } else { spins[k as usize] };
    let open = edges.iter().map(|&(i, j)| spin_of(i) == spin_of(j) && rng.random::<f64>() < p).collect();
    Ok(BondConfiguration { edges, open })
}

/// Union–find with path halving and union by size.
#[derive(Debug, Clone)]
pub(crate) struct DisjointSets {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    fn reset(&mut self) {
        self.parent.iter_mut().enumerate().for_each(|(i, p)| *p = i as u32);
        self.size.iter_mut().for_each(|s| *s = 1);
    }

    pub(crate) fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    pub(crate) fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] { (ra, rb) } else { (rb, ra) };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
    }
}

/// Reusable Swendsen–Wang state for one lattice model.
pub struct SwendsenWang<'a> {
    model: &'a ModelSpec,
    edges: Vec<(u32, u32)>,
    p_open: f64,
    sets: DisjointSets,
    cluster_field: Vec<f64>,
    cluster_sign: Vec<i8>,
}

impl<'a> SwendsenWang<'a> {
    pub fn new(model: &'a ModelSpec) -> Result<Self> {
        require_lattice(model)?;
        let n = model.n();
        Ok(Self {
            model,
            edges: unit_bonds(model),
            p_open: 1.0 - (-2.0 * model.beta()).exp(),
            sets: DisjointSets::new(n + 1),
            cluster_field: vec![0.0; n + 1],
            cluster_sign: vec![0; n + 1],
        })
    }

    /// One full update: open bonds, find clusters, resample cluster signs.
    pub fn step<R: Rng + ?Sized>(&mut self, spins: &mut [i8], rng: &mut R) {
        let n = self.model.n();
        let ghost = n as u32;
        self.sets.reset();
        for &(i, j) in &self.edges {
            let si = spins[i as usize];
            let sj = if j == ghost { 1 } else { spins[j as usize] };
            if si == sj && rng.random::<f64>() < self.p_open {
                self.sets.union(i, j);
            }
        }
        let mu = self.model.mu();
        self.cluster_field.iter_mut().for_each(|v| *v = 0.0);
        self.cluster_sign.iter_mut().for_each(|v| *v = 0);
        for (i, &m) in mu.iter().enumerate() {
            if m != 0.0 {
                let r = self.sets.find(i as u32) as usize;
                self.cluster_field[r] += m;
            }
        }
        let ghost_root = self.sets.find(ghost) as usize;
        self.cluster_sign[ghost_root] = 1;
        for (i, spin) in spins.iter_mut().enumerate() {
            let r = self.sets.find(i as u32) as usize;
            if self.cluster_sign[r] == 0 {
                self.cluster_sign[r] = heat_bath_spin(self.cluster_field[r], rng);
            }
            *spin = self.cluster_sign[r];
        }
    }
}

pub fn swendsen_wang_sample<R: Rng + ?Sized>(
    model: &ModelSpec,
    chain: &ChainConfig,
    count: usize,
    rng: &mut R,
) -> Result<Vec<SpinConfiguration>> {
    chain.validate()?;
    let mut sw = SwendsenWang::new(model)?;
    let mut spins = initial_spins(model.n(), chain.initial_state, rng);
    for _ in 0..chain.burn_in_sweeps {
        sw.step(&mut spins, rng);
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..chain.thinning_sweeps {
            sw.step(&mut spins, rng);
        }
        out.push(SpinConfiguration::from_raw(spins.clone()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Exact for the complete graph, Swendsen–Wang for lattices, Glauber otherwise.
    Auto,
    Glauber,
    SwendsenWang,
    CurieWeissExact,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SamplerKind::Auto),
            "glauber" => Ok(SamplerKind::Glauber),
            "sw" | "swendsen_wang" | "swendsen-wang" => Ok(SamplerKind::SwendsenWang),
            "exact" | "curie_weiss_exact" => Ok(SamplerKind::CurieWeissExact),
            other => Err(Error::InvalidParameter(format!("unknown sampler `{other}`"))),
        }
    }
}

impl SamplerKind {
    pub fn resolve(self, model: &ModelSpec) -> SamplerKind {
        match self {
            SamplerKind::Auto if model.graph().is_complete() => SamplerKind::CurieWeissExact,
            SamplerKind::Auto if model.graph().lattice_shape().is_some() => SamplerKind::SwendsenWang,
            SamplerKind::Auto => SamplerKind::Glauber,
            other => other,
        }
    }

    pub fn default_chain(self) -> ChainConfig {
        match self {
            SamplerKind::SwendsenWang => ChainConfig::swendsen_wang_default(),
            _ => ChainConfig::glauber_default(),
        }
    }
}

/// Dispatches to the requested sampler.
pub fn sample_model<R: Rng + ?Sized>(
    model: &ModelSpec,
    kind: SamplerKind,
    chain: &ChainConfig,
    count: usize,
    rng: &mut R,
) -> Result<Vec<SpinConfiguration>> {
    match kind.resolve(model) {
        SamplerKind::Glauber => glauber_sample(model, chain, count, rng),
        SamplerKind::SwendsenWang => swendsen_wang_sample(model, chain, count, rng),
        SamplerKind::CurieWeissExact => {
            let s = CurieWeissSampler::for_model(model)?;
            Ok((0..count).map(|_| s.sample(rng)).collect())
        }
        SamplerKind::Auto => unreachable!("resolved above"),
    }
}

/// One configuration per line, comma-separated `1` / `-1` entries.
pub fn write_samples_csv<W: Write>(samples: &[SpinConfiguration], mut w: W) -> Result<()> {
    for x in samples {
        let line: Vec<&str> = x.spins().iter().map(|&s| if s == 1 { "1" } else { "-1" }).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_samples_csv<R: BufRead>(r: R) -> Result<Vec<SpinConfiguration>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let spins = line
            .split(',')
            .map(|t| match t.trim() {
                "1" | "+1" => Ok(1i8),
                "-1" => Ok(-1i8),
                other => Err(Error::Parse { line: k + 1, msg: format!("`{other}` is not a spin") }),
            })
            .collect::<Result<Vec<i8>>>()?;
        if let Some(first) = out.first().map(SpinConfiguration::len) {
            if first != spins.len() {
                return Err(Error::Parse { line: k + 1, msg: format!("expected {first} spins, got {}", spins.len()) });
            }
        }
        out.push(SpinConfiguration::from_raw(spins));
    }
    Ok(out)
}

/// Total-variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Empirical law of the number of `+1` spins, indexed `0..=n`.
pub fn empirical_plus_count_pmf(samples: &[SpinConfiguration], n: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n + 1];
    for x in samples {
        counts[x.plus_count()] += 1.0;
    }
    let total = samples.len().max(1) as f64;
    counts.iter_mut().for_each(|c| *c /= total);
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_complete, build_lattice, Boundary, SignalSpec};
    use crate::oracle;
    use crate::rng;
    use std::sync::Arc;

    fn cw(n: usize, beta: f64) -> ModelSpec {
        ModelSpec::null(Arc::new(build_complete(n).unwrap()), beta).unwrap()
    }

    #[test]
    fn glauber_independent_sites_at_beta_zero() {
        let mu = [0.0, 0.5, 1.0, 0.2];
        let m = cw(4, 0.0).with_field(SignalSpec::from_vector(&mu).unwrap()).unwrap();
        let chain = ChainConfig::new(5, 1, InitialState::AllMinus).unwrap();
        let draws = glauber_sample(&m, &chain, 20_000, &mut rng::from_seed(1)).unwrap();
        for (i, &a) in mu.iter().enumerate() {
            let p = 0.5 * (1.0 + a.tanh());
            let freq = draws.iter().filter(|x| x.get(i) == 1).count() as f64 / draws.len() as f64;
            let sd = (p * (1.0 - p) / draws.len() as f64).sqrt();
            assert!((freq - p).abs() < 3.0 * sd, "site {i}: {freq} vs {p}");
        }
    }

    #[test]
    fn glauber_matches_exact_magnetization_law() {
        let m = cw(10, 0.5);
        let exact = oracle::plus_count_pmf(&m).unwrap();
        let chain = ChainConfig::new(200, 2, InitialState::UniformRandom).unwrap();
        let draws = glauber_sample(&m, &chain, 50_000, &mut rng::from_seed(2)).unwrap();
        let tv = total_variation(&empirical_plus_count_pmf(&draws, 10), &exact);
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn glauber_is_seed_deterministic() {
        let m = cw(12, 1.2);
        let chain = ChainConfig::glauber_default();
        let a = glauber_sample(&m, &chain, 5, &mut rng::from_seed(9)).unwrap();
        let b = glauber_sample(&m, &chain, 5, &mut rng::from_seed(9)).unwrap();
        assert_eq!(a, b);
        let mut random = chain;
        random.order = SweepOrder::Random;
        let c = glauber_sample(&m, &random, 5, &mut rng::from_seed(9)).unwrap();
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn exact_cw_matches_oracle() {
        let m = cw(10, 0.5);
        let exact = oracle::plus_count_pmf(&m).unwrap();
        let s = CurieWeissSampler::for_model(&m).unwrap();
        let mut r = rng::from_seed(3);
        let draws: Vec<_> = (0..100_000).map(|_| s.sample(&mut r)).collect();
        let tv = total_variation(&empirical_plus_count_pmf(&draws, 10), &exact);
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn exact_cw_with_field_matches_oracle_means() {
        let mu = [0.8, 0.8, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0];
        let m = cw(8, 1.4).with_field(SignalSpec::from_vector(&mu).unwrap()).unwrap();
        let exact = oracle::exact_summary(&m).unwrap();
        let s = CurieWeissSampler::for_model(&m).unwrap();
        let mut r = rng::from_seed(4);
        let reps = 100_000;
        let mut sums = [0.0; 8];
        for _ in 0..reps {
            let x = s.sample(&mut r);
            for i in 0..8 {
                sums[i] += x.get(i) as f64;
            }
        }
        for i in 0..8 {
            let mean = sums[i] / reps as f64;
            let sd = ((1.0 - exact.means[i].powi(2)) / reps as f64).sqrt();
            assert!((mean - exact.means[i]).abs() < 4.0 * sd, "site {i}: {mean} vs {}", exact.means[i]);
        }
    }

    #[test]
    fn exact_cw_low_temperature_concentrates() {
        // m(2) = 0.957504 from the fixed-point solver
        let s = CurieWeissSampler::new(1000, 2.0, &vec![0.0; 1000]).unwrap();
        let mut r = rng::from_seed(5);
        let reps = 2000;
        let near_zero = (0..reps).filter(|_| s.sample(&mut r).mean().abs() < 0.5).count();
        assert!((near_zero as f64 / reps as f64) < 0.01);
        let mean_abs: f64 = (0..reps).map(|_| s.sample(&mut r).mean().abs()).sum::<f64>() / reps as f64;
        assert!((mean_abs - 0.957504).abs() < 0.01, "{mean_abs}");
    }

    #[test]
    fn exact_cw_beta_zero_is_fair_coins() {
        let s = CurieWeissSampler::new(200, 0.0, &vec![0.0; 200]).unwrap();
        let mut r = rng::from_seed(6);
        let reps = 4000;
        let mean: f64 = (0..reps).map(|_| s.sample(&mut r).mean()).sum::<f64>() / reps as f64;
        let sd = (1.0 / (200.0 * reps as f64)).sqrt();
        assert!(mean.abs() < 3.0 * sd);
    }

    #[test]
    fn exact_cw_spins_conditionally_uncorrelated() {
        // Within a narrow W bin, spin pairs are independent draws.
        let s = CurieWeissSampler::new(50, 1.5, &vec![0.0; 50]).unwrap();
        let mut r = rng::from_seed(7);
        let (mut n_bin, mut s01, mut s0, mut s1) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..200_000 {
            let w = s.sample_w(&mut r);
            if (0.80..0.82).contains(&w) {
                let x = s.sample_given_w(w, &mut r);
                n_bin += 1.0;
                s01 += (x.get(0) * x.get(1)) as f64;
                s0 += x.get(0) as f64;
                s1 += x.get(1) as f64;
            }
        }
        let cov = s01 / n_bin - (s0 / n_bin) * (s1 / n_bin);
        assert!(n_bin > 1000.0);
        assert!(cov.abs() < 4.0 / n_bin.sqrt(), "cov {cov} over {n_bin}");
    }

    #[test]
    fn exact_sampler_rejects_non_complete() {
        let g = Arc::new(build_lattice(3, 2, Boundary::Free).unwrap());
        let m = ModelSpec::null(g, 0.3).unwrap();
        assert!(matches!(CurieWeissSampler::for_model(&m), Err(Error::Contract(_))));
        assert!(matches!(swendsen_wang_sample(&cw(5, 0.3), &ChainConfig::swendsen_wang_default(), 1, &mut rng::from_seed(1)), Err(Error::Contract(_))));
    }

    #[test]
    fn swendsen_wang_beta_zero_is_iid() {
        let g = Arc::new(build_lattice(4, 2, Boundary::Free).unwrap());
        let m = ModelSpec::null(g, 0.0).unwrap();
        let x = SpinConfiguration::all_plus(16);
        let bonds = fk_ising_bond_sample(&m, &x, &mut rng::from_seed(1)).unwrap();
        assert_eq!(bonds.open_count(), 0);
        let draws = swendsen_wang_sample(&m, &ChainConfig::new(0, 1, InitialState::AllPlus).unwrap(), 20_000, &mut rng::from_seed(2)).unwrap();
        let freq = draws.iter().map(|x| x.plus_count()).sum::<usize>() as f64 / (16.0 * 20_000.0);
        assert!((freq - 0.5).abs() < 3.0 * (0.25f64 / 320_000.0).sqrt());
    }

    #[test]
    fn bonds_saturate_at_large_beta() {
        let g = Arc::new(build_lattice(4, 2, Boundary::Plus).unwrap());
        let m = ModelSpec::null(g, 40.0).unwrap();
        let x = SpinConfiguration::all_plus(16);
        let bonds = fk_ising_bond_sample(&m, &x, &mut rng::from_seed(1)).unwrap();
        assert_eq!(bonds.open_count(), bonds.edges.len());
        assert_eq!(bonds.edges.len(), 24 + 16);
    }

    #[test]
    fn swendsen_wang_matches_oracle_free_and_plus() {
        for bc in [Boundary::Free, Boundary::Plus] {
            let g = Arc::new(build_lattice(3, 2, bc).unwrap());
            let m = ModelSpec::null(g, 0.3).unwrap();
            let exact = oracle::plus_count_pmf(&m).unwrap();
            let chain = ChainConfig::new(20, 1, InitialState::UniformRandom).unwrap();
            let draws = swendsen_wang_sample(&m, &chain, 100_000, &mut rng::from_seed(8)).unwrap();
            let tv = total_variation(&empirical_plus_count_pmf(&draws, 9), &exact);
            assert!(tv < 0.02, "{bc}: tv = {tv}");
        }
    }

    #[test]
    fn swendsen_wang_plus_means_match_oracle() {
        let g = Arc::new(build_lattice(3, 2, Boundary::Plus).unwrap());
        let m = ModelSpec::null(g, 0.3).unwrap();
        let exact = oracle::exact_summary(&m).unwrap();
        let chain = ChainConfig::new(20, 1, InitialState::AllMinus).unwrap();
        let draws = swendsen_wang_sample(&m, &chain, 60_000, &mut rng::from_seed(10)).unwrap();
        for i in 0..9 {
            let mean = draws.iter().map(|x| x.get(i) as f64).sum::<f64>() / draws.len() as f64;
            // Successive SW states are correlated; allow 3 sigma at a doubled variance.
            let sd = (2.0 * exact.covariances[i][i] / draws.len() as f64).sqrt();
            assert!((mean - exact.means[i]).abs() < 3.0 * sd, "site {i}: {mean} vs {}", exact.means[i]);
        }
    }

    #[test]
    fn swendsen_wang_with_field_matches_oracle() {
        let g = Arc::new(build_lattice(3, 2, Boundary::Free).unwrap());
        let field = SignalSpec::uniform(9, &[0, 1, 3, 4], 0.6).unwrap();
        let m = ModelSpec::new(g, 0.35, field).unwrap();
        let exact = oracle::plus_count_pmf(&m).unwrap();
        let chain = ChainConfig::new(20, 1, InitialState::AllMinus).unwrap();
        let draws = swendsen_wang_sample(&m, &chain, 100_000, &mut rng::from_seed(12)).unwrap();
        let tv = total_variation(&empirical_plus_count_pmf(&draws, 9), &exact);
        assert!(tv < 0.02, "tv = {tv}");
    }

    fn draw_from_pmf<R: Rng + ?Sized>(cdf: &[f64], n: usize, rng: &mut R) -> SpinConfiguration {
        let u = rng.random::<f64>() * cdf[cdf.len() - 1];
        let code = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        SpinConfiguration::from_bits(n, code as u64)
    }

    fn chi_square_p_value(observed: &[f64], expected_prob: &[f64], total: f64) -> f64 {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let (mut stat, mut cells) = (0.0, 0usize);
        for (o, p) in observed.iter().zip(expected_prob) {
            let e = p * total;
            if e > 0.0 {
                stat += (o - e).powi(2) / e;
                cells += 1;
            }
        }
        1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
    }

    #[test]
    fn heat_bath_kernel_is_reversible() {
        let field = SignalSpec::from_vector(&[0.3, 0.2, 0.0, 0.5, 0.0, 0.1, 0.0, 0.4]).unwrap();
        let plus = Arc::new(build_lattice(2, 2, Boundary::Plus).unwrap());
        let models = [
            cw(8, 1.3).with_field(field).unwrap(),
            ModelSpec::new(plus, 0.7, SignalSpec::uniform(4, &[1], 0.4).unwrap()).unwrap(),
        ];
        for m in &models {
            let pi = oracle::exact_summary(m).unwrap().pmf.unwrap();
            let k = oracle::heat_bath_kernel(m).unwrap();
            for x in 0..pi.len() {
                assert!((k[x].iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for y in 0..pi.len() {
                    assert!((pi[x] * k[x][y] - pi[y] * k[y][x]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn one_swendsen_wang_step_preserves_law() {
        for bc in [Boundary::Free, Boundary::Plus] {
            let g = Arc::new(build_lattice(3, 2, bc).unwrap());
            let m = ModelSpec::new(g, 0.4, SignalSpec::uniform(9, &[4], 0.3).unwrap()).unwrap();
            let pi = oracle::exact_summary(&m).unwrap().pmf.unwrap();
            let cdf: Vec<f64> = pi.iter().scan(0.0, |acc, p| { *acc += p; Some(*acc) }).collect();
            let exact = oracle::plus_count_pmf(&m).unwrap();
            let mut sw = SwendsenWang::new(&m).unwrap();
            let mut r = rng::from_seed(21);
            let reps = 100_000;
            let mut counts = vec![0.0; 10];
            for _ in 0..reps {
                let mut x = draw_from_pmf(&cdf, 9, &mut r).spins().to_vec();
                sw.step(&mut x, &mut r);
                counts[x.iter().filter(|&&s| s == 1).count()] += 1.0;
            }
            let p = chi_square_p_value(&counts, &exact, reps as f64);
            assert!(p > 0.01, "{bc}: p = {p}");
        }
    }

    /// Number of connected components of the 2x2 free lattice with the given open edges.
    fn components_2x2(edges: &[(u32, u32)], open_mask: usize) -> u32 {
        let mut sets = DisjointSets::new(4);
        for (k, &(i, j)) in edges.iter().enumerate() {
            if open_mask >> k & 1 == 1 {
                sets.union(i, j);
            }
        }
        (0..4u32).filter(|&v| sets.find(v) == v).count() as u32
    }

    #[test]
    fn fk_bond_count_matches_random_cluster_law() {
        let g = Arc::new(build_lattice(2, 2, Boundary::Free).unwrap());
        let beta = 0.6;
        let m = ModelSpec::null(g, beta).unwrap();
        let p = 1.0 - (-2.0 * beta).exp();
        let edges = unit_bonds(&m);
        assert_eq!(edges.len(), 4);
        // phi(omega) ∝ p^|omega| (1-p)^(4-|omega|) 2^{k(omega)}
        let mut law = [0.0; 5];
        for mask in 0..16usize {
            let open = mask.count_ones() as i32;
            law[open as usize] += p.powi(open) * (1.0 - p).powi(4 - open) * 2f64.powi(components_2x2(&edges, mask) as i32);
        }
        let z: f64 = law.iter().sum();
        law.iter_mut().for_each(|v| *v /= z);

        let pi = oracle::exact_summary(&m).unwrap().pmf.unwrap();
        let cdf: Vec<f64> = pi.iter().scan(0.0, |acc, q| { *acc += q; Some(*acc) }).collect();
        let mut r = rng::from_seed(33);
        let reps = 100_000;
        let mut counts = [0.0; 5];
        for _ in 0..reps {
            let x = draw_from_pmf(&cdf, 4, &mut r);
            counts[fk_ising_bond_sample(&m, &x, &mut r).unwrap().open_count()] += 1.0;
        }
        let pv = chi_square_p_value(&counts, &law, reps as f64);
        assert!(pv > 0.01, "p = {pv}, counts {counts:?}, law {law:?}");
    }

    #[test]
    fn samples_csv_round_trip() {
        let m = cw(6, 0.7);
        let draws = glauber_sample(&m, &ChainConfig::glauber_default(), 4, &mut rng::from_seed(3)).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&draws, &mut buf).unwrap();
        assert_eq!(read_samples_csv(buf.as_slice()).unwrap(), draws);
        assert!(read_samples_csv("1,0\n".as_bytes()).is_err());
    }
}
