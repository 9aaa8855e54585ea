//! Monte Carlo risk of scan tests: Type I error plus the worst Type II error over a
//! finite set of signal placements, swept over a grid of `beta` and signal constants `c`.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{adaptive_test, AdaptiveFamily};
use crate::classes::{
    apply_signal, build_contiguous_blocks, build_disjoint_class, build_rectangle_class, build_scan_grid, cube_sites,
    greedy_cover, Provenance, RectangleGridParams, ScanClass,
};
use crate::detectors::{
    bonferroni_combine, centered_sum_test, estimate_site_means, high_temp_scan_test, lattice_scan_test,
    low_temp_randomized_scan_test, TestDecision, DEFAULT_SUM_MULTIPLIER,
};
use crate::error::{Error, Result};
use crate::mean_field::{signal_strength_for_constant, SignalFamily};
use crate::model::{build_complete, build_erdos_renyi, build_lattice, build_random_regular, Boundary, CouplingGraph, ModelSpec};
use crate::rng;
use crate::samplers::{sample_model, ChainConfig, CurieWeissSampler, SamplerKind};
use crate::susceptibility::{estimate_chi, ChiConfig};
use crate::SpinConfiguration;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    CurieWeiss,
    ErdosRenyi,
    RandomRegular,
    Lattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPlan {
    pub family: Family,
    /// Number of sites (all families except `lattice`).
    pub n: Option<usize>,
    pub p: Option<f64>,
    pub degree: Option<usize>,
    pub side: Option<usize>,
    pub dim: Option<usize>,
    pub boundary: Option<Boundary>,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerKind,
    pub burn_in: Option<usize>,
    pub thinning: Option<usize>,
}

fn default_sampler() -> SamplerKind {
    SamplerKind::Auto
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    ContiguousBlocks,
    Disjoint,
    ScanGrid,
    Rectangle,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassPlan {
    pub kind: ClassKind,
    #[serde(default)]
    pub s: usize,
    /// Block count for `contiguous_blocks`.
    pub count: Option<usize>,
    /// Grid spacing as a fraction of the cube side for `scan_grid`.
    pub eta: Option<f64>,
    /// Thin the class to a greedy cover of this radius.
    pub cover_eps: Option<f64>,
    /// Class file for `file`.
    pub path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestName {
    HighTempScan,
    LowTempRandomizedScan,
    LatticeScan,
    CenteredSum,
    /// Scan test for the regime of `beta` combined with the centered sum test.
    Bonferroni,
    AdaptiveMeanField,
}

impl TestName {
    pub fn as_str(self) -> &'static str {
        match self {
            TestName::HighTempScan => "high_temp_scan",
            TestName::LowTempRandomizedScan => "low_temp_randomized_scan",
            TestName::LatticeScan => "lattice_scan",
            TestName::CenteredSum => "centered_sum",
            TestName::Bonferroni => "bonferroni",
            TestName::AdaptiveMeanField => "adaptive_mean_field",
        }
    }
}

fn default_delta() -> f64 {
    0.2
}

fn default_centering_draws() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestPlan {
    pub name: TestName,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Susceptibility for the lattice scan; estimated per `beta` when absent.
    pub chi: Option<f64>,
    /// Centered sum multiplier.
    pub multiplier: Option<f64>,
    /// Null draws used to center plus-boundary lattice scans.
    #[serde(default = "default_centering_draws")]
    pub centering_draws: usize,
}

fn default_type1() -> usize {
    500
}

fn default_type2() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub constants: Vec<f64>,
    #[serde(default = "default_type1")]
    pub type1_replications: usize,
    #[serde(default = "default_type2")]
    pub type2_replications: usize,
    /// Explicit signal supports; by default one (CW, ER, RR) or two (lattice) are derived from the class.
    pub placements: Option<Vec<Vec<u32>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub model: ModelPlan,
    pub class: ClassPlan,
    pub test: TestPlan,
    pub sweep: SweepPlan,
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse { line, msg: e.message().to_string() }
        })?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let sw = &self.sweep;
        if sw.type1_replications == 0 || sw.type2_replications == 0 {
            return Err(Error::InvalidParameter("replications must be at least 1".into()));
        }
        if let Some(c) = sw.constants.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidParameter(format!("signal constant {c} is not a finite value >= 0")));
        }
        if let Some(b) = sw.betas.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta {b} is not a finite value >= 0")));
        }
        if !(self.test.delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be > 0, got {}", self.test.delta)));
        }
        if self.test.centering_draws == 0 {
            return Err(Error::InvalidParameter("centering_draws must be positive".into()));
        }
        let m = &self.model;
        let need = |field: Option<usize>, name: &str| {
            field.ok_or_else(|| Error::InvalidParameter(format!("model.{name} is required for {:?}", m.family)))
        };
        match m.family {
            Family::Lattice => {
                need(m.side, "side")?;
                need(m.dim, "dim")?;
            }
            Family::ErdosRenyi => {
                need(m.n, "n")?;
                m.p.ok_or_else(|| Error::InvalidParameter("model.p is required for erdos_renyi".into()))?;
            }
            Family::RandomRegular => {
                need(m.n, "n")?;
                need(m.degree, "degree")?;
            }
            Family::CurieWeiss => {
                need(m.n, "n")?;
            }
        }
        if self.class.kind != ClassKind::File && self.class.s == 0 {
            return Err(Error::InvalidParameter("class.s must be positive".into()));
        }
        Ok(())
    }

    pub fn family_label(&self) -> String {
        match self.model.family {
            Family::CurieWeiss => "curie_weiss".into(),
            Family::ErdosRenyi => "erdos_renyi".into(),
            Family::RandomRegular => "random_regular".into(),
            Family::Lattice => format!("lattice_{}", boundary_name(self.model.boundary.unwrap_or(Boundary::Free))),
        }
    }
}

fn boundary_name(b: Boundary) -> &'static str {
    match b {
        Boundary::Free => "free",
        Boundary::Plus => "plus",
    }
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub hits: usize,
    pub trials: usize,
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Fraction of `reps` replications where `trial` returns true, each with its own stream.
pub fn estimate_rate<F>(reps: usize, seed: u64, cell: &str, trial: F) -> Result<RateEstimate>
where
    F: Fn(&mut rng::SimRng) -> Result<bool> + Sync,
{
    let tag = rng::cell_tag(cell);
    let outcomes: Vec<bool> = (0..reps)
        .into_par_iter()
        .map(|r| trial(&mut rng::replication_stream(seed, tag, r as u64)))
        .collect::<Result<_>>()?;
    let hits = outcomes.iter().filter(|&&b| b).count();
    let (lo, hi) = wilson_interval(hits, reps, Z95);
    Ok(RateEstimate { hits, trials: reps, rate: hits as f64 / reps.max(1) as f64, lo, hi })
}

/// One independent draw per call: exact for Curie–Weiss, a fresh chain otherwise.
enum Drawer {
    Exact(CurieWeissSampler),
    Chain(SamplerKind, ChainConfig),
}

impl Drawer {
    fn new(model: &ModelSpec, plan: &ModelPlan) -> Result<Self> {
        let kind = plan.sampler.resolve(model);
        if kind == SamplerKind::CurieWeissExact {
            return Ok(Drawer::Exact(CurieWeissSampler::for_model(model)?));
        }
        let mut chain = kind.default_chain();
        if let Some(b) = plan.burn_in {
            chain.burn_in_sweeps = b;
        }
        if let Some(t) = plan.thinning {
            chain.thinning_sweeps = t;
        }
        chain.validate()?;
        Ok(Drawer::Chain(kind, chain))
    }

    fn draw<R: Rng + ?Sized>(&self, model: &ModelSpec, rng: &mut R) -> Result<SpinConfiguration> {
        match self {
            Drawer::Exact(s) => Ok(s.sample(rng)),
            Drawer::Chain(kind, chain) => {
                let mut out = sample_model(model, *kind, chain, 1, rng)?;
                Ok(out.pop().expect("one draw"))
            }
        }
    }
}

/// The decision rule at one `beta`, with any calibration it needs already computed.
#[derive(Debug, Clone)]
pub enum PreparedTest {
    HighTemp,
    LowTemp { beta: f64 },
    Lattice { chi: f64, centering: Option<Arc<Vec<f64>>> },
    CenteredSum { beta: f64, multiplier: f64 },
    Bonferroni { beta: f64, multiplier: f64 },
    Adaptive,
}

impl PreparedTest {
    /// Calibrates `test` against the null model; the lattice scan estimates `chi` (and
    /// plus-boundary site means) from simulation when the plan does not fix them.
    pub fn new(test: &TestPlan, model: &ModelPlan, null: &ModelSpec, class: &ScanClass, seed: u64) -> Result<Self> {
        let beta = null.beta();
        let multiplier = test.multiplier.unwrap_or(DEFAULT_SUM_MULTIPLIER);
        Ok(match test.name {
            TestName::HighTempScan => PreparedTest::HighTemp,
            TestName::LowTempRandomizedScan => {
                if !(beta > 1.0) {
                    return Err(Error::Contract(format!("the randomized scan test needs beta > 1, got {beta}")));
                }
                PreparedTest::LowTemp { beta }
            }
            TestName::CenteredSum => PreparedTest::CenteredSum { beta, multiplier },
            TestName::Bonferroni => PreparedTest::Bonferroni { beta, multiplier },
            TestName::AdaptiveMeanField => PreparedTest::Adaptive,
            TestName::LatticeScan => {
                let chi = match test.chi {
                    Some(chi) => chi,
                    None => estimate_chi(null, class.s(), &ChiConfig::default(), seed ^ rng::cell_tag(&format!("chi/{beta}")))?.chi_hat,
                };
                let centering = if null.graph().boundary() == Boundary::Plus {
                    let chain = match Drawer::new(null, model)? {
                        Drawer::Chain(_, chain) => chain,
                        Drawer::Exact(_) => ChainConfig::glauber_default(),
                    };
                    let mut gen = rng::replication_stream(seed, rng::cell_tag(&format!("centering/{beta}")), 0);
                    Some(Arc::new(estimate_site_means(null, &chain, test.centering_draws, &mut gen)?))
                } else {
                    None
                };
                PreparedTest::Lattice { chi, centering }
            }
        })
    }

    pub fn decide<R: Rng + ?Sized>(&self, x: &SpinConfiguration, class: &ScanClass, delta: f64, rng: &mut R) -> Result<TestDecision> {
        match self {
            PreparedTest::HighTemp => high_temp_scan_test(x, class, delta),
            PreparedTest::LowTemp { beta } => low_temp_randomized_scan_test(x, class, *beta, delta, rng),
            PreparedTest::Lattice { chi, centering } => lattice_scan_test(x, class, *chi, delta, centering.as_deref().map(|v| v.as_slice())),
            PreparedTest::CenteredSum { beta, multiplier } => centered_sum_test(x, *beta, *multiplier),
            PreparedTest::Bonferroni { beta, multiplier } => {
                let scan = if *beta > 1.0 {
                    low_temp_randomized_scan_test(x, class, *beta, delta, rng)?
                } else {
                    high_temp_scan_test(x, class, delta)?
                };
                Ok(bonferroni_combine(&scan, &centered_sum_test(x, *beta, *multiplier)?))
            }
            PreparedTest::Adaptive => Ok(adaptive_test(x, class, delta, rng, &AdaptiveFamily::MeanField)?.decision),
        }
    }

    /// Family whose constant sets the signal strength for a given `c`.
    pub fn signal_family(&self) -> SignalFamily {
        match self {
            PreparedTest::Lattice { chi, .. } => SignalFamily::Lattice { chi: *chi },
            _ => SignalFamily::MeanField,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementRate {
    pub placement: usize,
    pub type2: RateEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub beta: f64,
    pub c: f64,
    pub a: Option<f64>,
    pub type1: Option<RateEstimate>,
    pub placements: Vec<PlacementRate>,
    /// The failure recorded for this cell, if any.
    pub error: Option<String>,
}

impl RiskRow {
    /// Worst placement (the first among ties).
    pub fn worst(&self) -> Option<&PlacementRate> {
        self.placements.iter().fold(None, |best: Option<&PlacementRate>, p| match best {
            Some(b) if b.type2.rate >= p.type2.rate => Some(b),
            _ => Some(p),
        })
    }

    pub fn risk(&self) -> Option<f64> {
        Some(self.type1?.rate + self.worst()?.type2.rate)
    }

    /// Sum of the component interval endpoints.
    pub fn risk_interval(&self) -> Option<(f64, f64)> {
        let (t1, t2) = (self.type1?, self.worst()?.type2);
        Some((t1.lo + t2.lo, t1.hi + t2.hi))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub family: String,
    pub n: usize,
    pub s: usize,
    pub class_size: usize,
    pub test: String,
    pub delta: f64,
    pub seed: u64,
    pub rows: Vec<RiskRow>,
    pub runtime_secs: f64,
}

pub const CSV_HEADER: &str = "beta,family,n,s,class_size,c,A,test,delta,type1,type1_lo,type1_hi,type2,type2_lo,type2_hi,risk,seed";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl RiskReport {
    /// Rows are written in grid order; cells that failed carry `NA`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            let t2 = r.worst().map(|p| p.type2);
            writeln!(
                w,
                "{:.6},{},{},{},{},{:.6},{},{},{:.6},{},{},{},{},{},{},{},{}",
                r.beta,
                self.family,
                self.n,
                self.s,
                self.class_size,
                r.c,
                fmt_opt(r.a),
                self.test,
                self.delta,
                fmt_opt(r.type1.map(|t| t.rate)),
                fmt_opt(r.type1.map(|t| t.lo)),
                fmt_opt(r.type1.map(|t| t.hi)),
                fmt_opt(t2.map(|t| t.rate)),
                fmt_opt(t2.map(|t| t.lo)),
                fmt_opt(t2.map(|t| t.hi)),
                fmt_opt(r.risk()),
                self.seed,
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }

    pub fn row(&self, beta: f64, c: f64) -> Option<&RiskRow> {
        self.rows.iter().find(|r| r.beta == beta && r.c == c)
    }
}

pub fn build_graph(plan: &ModelPlan, seed: u64) -> Result<CouplingGraph> {
    let mut gen = rng::replication_stream(seed, rng::cell_tag("graph"), 0);
    let missing = |name: &str| Error::InvalidParameter(format!("model.{name} is missing"));
    match plan.family {
        Family::CurieWeiss => build_complete(plan.n.ok_or_else(|| missing("n"))?),
        Family::ErdosRenyi => build_erdos_renyi(plan.n.ok_or_else(|| missing("n"))?, plan.p.ok_or_else(|| missing("p"))?, &mut gen),
        Family::RandomRegular => {
            build_random_regular(plan.n.ok_or_else(|| missing("n"))?, plan.degree.ok_or_else(|| missing("degree"))?, &mut gen)
        }
        Family::Lattice => build_lattice(
            plan.side.ok_or_else(|| missing("side"))?,
            plan.dim.ok_or_else(|| missing("dim"))?,
            plan.boundary.unwrap_or(Boundary::Free),
        ),
    }
}

pub fn build_class(plan: &ClassPlan, graph: &CouplingGraph) -> Result<ScanClass> {
    let n = graph.n();
    let dim = graph.lattice_shape().map_or(1, |s| s.dim);
    let class = match plan.kind {
        ClassKind::ContiguousBlocks => {
            let count = plan.count.unwrap_or(n / plan.s.max(1));
            build_contiguous_blocks(n, plan.s, count)?
        }
        ClassKind::Disjoint => build_disjoint_class(n, dim, plan.s)?,
        ClassKind::ScanGrid => {
            let params = match plan.eta {
                Some(eta) => RectangleGridParams::new(n, dim, plan.s, eta)?,
                None => RectangleGridParams::with_default_eta(n, dim, plan.s)?,
            };
            build_scan_grid(&params)?
        }
        ClassKind::Rectangle => build_rectangle_class(n, dim, plan.s)?.materialize()?,
        ClassKind::File => {
            let path = plan.path.as_deref().ok_or_else(|| Error::InvalidParameter("class.path is required for kind = file".into()))?;
            let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
            ScanClass::read(n, std::io::BufReader::new(file))?
        }
    };
    match plan.cover_eps {
        Some(eps) => greedy_cover(&class, eps),
        None => Ok(class),
    }
}

/// Signal supports to maximise Type II over.
///
/// The complete graph is exchangeable, so one support suffices there. Lattices get the
/// cube closest to the centre plus a copy shifted by half the grid pitch, which sits
/// between scanned cubes.
pub fn default_placements(class: &ScanClass) -> Vec<Vec<u32>> {
    let Some(layout) = class.cubes() else {
        return vec![class.candidate(0).to_vec()];
    };
    let side = layout.shape.side as f64;
    let k = layout.k;
    let off_centre = |a: &Vec<usize>| a.iter().map(|&c| (c as f64 + k as f64 / 2.0 - side / 2.0).abs()).sum::<f64>();
    let mut best = 0;
    for (i, a) in layout.anchors.iter().enumerate() {
        if off_centre(a) < off_centre(&layout.anchors[best]) {
            best = i;
        }
    }
    let anchor = &layout.anchors[best];
    let mut out = vec![cube_sites(&layout.shape, k, anchor)];
    let pitch = match class.provenance() {
        Provenance::RectangleGrid { pitch, .. } => *pitch,
        Provenance::GreedyCover { from, .. } => match from.as_ref() {
            Provenance::RectangleGrid { pitch, .. } => *pitch,
            _ => 3 * k,
        },
        _ => 3 * k,
    };
    let shift = pitch / 2;
    if shift > 0 && anchor.iter().all(|&c| c + shift + k <= layout.shape.side) {
        let moved: Vec<usize> = anchor.iter().map(|&c| c + shift).collect();
        out.push(cube_sites(&layout.shape, k, &moved));
    }
    out
}

/// Risk at every `(beta, c)` of the plan's grid; failed cells are recorded and the sweep continues.
pub fn run_risk(plan: &ExperimentPlan, seed: u64) -> Result<RiskReport> {
    plan.validate()?;
    let started = Instant::now();
    let graph = Arc::new(build_graph(&plan.model, seed)?);
    let class = build_class(&plan.class, &graph)?;
    let placements = match &plan.sweep.placements {
        Some(p) if p.is_empty() => return Err(Error::InvalidParameter("placements must not be empty".into())),
        Some(p) => p.clone(),
        None => default_placements(&class),
    };
    let n = graph.n();
    if let Some(bad) = placements.iter().find(|p| p.iter().any(|&i| i as usize >= n)) {
        return Err(Error::Placement(format!("placement {bad:?} leaves the {n} sites")));
    }
    let delta = plan.test.delta;
    let mut rows = Vec::new();
    for (bi, &beta) in plan.sweep.betas.iter().enumerate() {
        let cell = |null: &ModelSpec| -> Result<(PreparedTest, RateEstimate)> {
            let drawer = Drawer::new(null, &plan.model)?;
            let test = PreparedTest::new(&plan.test, &plan.model, null, &class, seed)?;
            let type1 = estimate_rate(plan.sweep.type1_replications, seed, &format!("null/{bi}"), |r| {
                let x = drawer.draw(null, r)?;
                Ok(test.decide(&x, &class, delta, r)?.reject)
            })?;
            Ok((test, type1))
        };
        let null = ModelSpec::null(graph.clone(), beta);
        let prepared = null.and_then(|null| cell(&null));
        let (test, type1) = match prepared {
            Ok(p) => p,
            Err(e) => {
                for &c in &plan.sweep.constants {
                    rows.push(RiskRow { beta, c, a: None, type1: None, placements: Vec::new(), error: Some(e.to_string()) });
                }
                continue;
            }
        };
        for (ci, &c) in plan.sweep.constants.iter().enumerate() {
            let mut row = RiskRow { beta, c, a: None, type1: Some(type1), placements: Vec::new(), error: None };
            let a = match signal_strength_for_constant(c, class.s(), class.log_size(), beta, test.signal_family()) {
                Ok(a) => a,
                Err(e) => {
                    row.error = Some(e.to_string());
                    rows.push(row);
                    continue;
                }
            };
            row.a = Some(a);
            for (pi, support) in placements.iter().enumerate() {
                let outcome = apply_signal(n, support, a)
                    .and_then(|field| ModelSpec::new(graph.clone(), beta, field))
                    .and_then(|alt| {
                        let drawer = Drawer::new(&alt, &plan.model)?;
                        estimate_rate(plan.sweep.type2_replications, seed, &format!("alt/{bi}/{ci}/{pi}"), |r| {
                            let x = drawer.draw(&alt, r)?;
                            Ok(!test.decide(&x, &class, delta, r)?.reject)
                        })
                    });
                match outcome {
                    Ok(type2) => row.placements.push(PlacementRate { placement: pi, type2 }),
                    Err(e) => {
                        row.placements.clear();
                        row.error = Some(e.to_string());
                        break;
                    }
                }
            }
            rows.push(row);
        }
    }
    Ok(RiskReport {
        family: plan.family_label(),
        n,
        s: class.s(),
        class_size: class.len(),
        test: plan.test.name.as_str().to_string(),
        delta,
        seed,
        rows,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}

/// A drop in risk between consecutive `beta > 1` grid points at a fixed `c` that the intervals cannot explain.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendFlag {
    pub c: f64,
    pub beta_from: f64,
    pub beta_to: f64,
    pub risk_from: f64,
    pub risk_to: f64,
}

/// Risk should not fall as `beta` grows above 1, since the sharp constant grows there.
pub fn trend_flags(report: &RiskReport) -> Vec<TrendFlag> {
    let mut constants: Vec<f64> = report.rows.iter().map(|r| r.c).collect();
    constants.sort_by(f64::total_cmp);
    constants.dedup();
    let mut flags = Vec::new();
    for c in constants {
        let mut column: Vec<&RiskRow> = report.rows.iter().filter(|r| r.c == c && r.beta > 1.0 && r.risk().is_some()).collect();
        column.sort_by(|a, b| a.beta.total_cmp(&b.beta));
        for pair in column.windows(2) {
            let (lo_prev, _) = pair[0].risk_interval().expect("risk present");
            let (_, hi_next) = pair[1].risk_interval().expect("risk present");
            if hi_next < lo_prev {
                flags.push(TrendFlag {
                    c,
                    beta_from: pair[0].beta,
                    beta_to: pair[1].beta,
                    risk_from: pair[0].risk().expect("risk present"),
                    risk_to: pair[1].risk().expect("risk present"),
                });
            }
        }
    }
    flags
}

/// Runs the plan's `(beta, c)` grid and writes the CSV table; returns the report and its trend flags.
pub fn sweep_phase_diagram<W: Write>(plan: &ExperimentPlan, seed: u64, out: W) -> Result<(RiskReport, Vec<TrendFlag>)> {
    let report = run_risk(plan, seed)?;
    report.write_csv(out)?;
    let flags = trend_flags(&report);
    Ok((report, flags))
}
