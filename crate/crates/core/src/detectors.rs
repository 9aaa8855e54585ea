//! Scan statistics and the decision rules built on them.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::classes::{CubeLayout, ScanClass};
use crate::error::{Error, Result};
use crate::mean_field::{gaussian_max_cutoff, solve_m};
use crate::model::{LatticeShape, ModelSpec, SpinConfiguration};
use crate::samplers::{sample_model, ChainConfig, SamplerKind};

/// Default multiplier of the centered-sum test.
pub const DEFAULT_SUM_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ScanStatistics {
    pub per_candidate: Vec<f64>,
    pub z_max: f64,
    /// Lowest index attaining `z_max`.
    pub argmax: usize,
}

/// d-dimensional integer prefix sums over a `side^d` box.
struct SummedArea {
    stride: Vec<usize>,
    table: Vec<i64>,
}

impl SummedArea {
    fn new(shape: &LatticeShape, spins: &[i8]) -> Self {
        let (side, d) = (shape.side, shape.dim);
        let w = side + 1;
        let mut stride = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            stride[a] = stride[a + 1] * w;
        }
        let mut table = vec![0i64; w.pow(d as u32)];
        for (i, &x) in spins.iter().enumerate() {
            let shifted: usize = shape.coords(i).iter().zip(&stride).map(|(&c, &st)| (c + 1) * st).sum();
            table[shifted] = x as i64;
        }
        for &st in &stride {
            for idx in 0..table.len() {
                if (idx / st) % w >= 1 {
                    table[idx] += table[idx - st];
                }
            }
        }
        Self { stride, table }
    }

    fn cube_sum(&self, anchor: &[usize], k: usize) -> i64 {
        let d = anchor.len();
        let mut total = 0i64;
        for mask in 0u32..(1 << d) {
            let idx: usize = (0..d).map(|a| if mask >> a & 1 == 1 { anchor[a] } else { anchor[a] + k } * self.stride[a]).sum();
            if mask.count_ones() % 2 == 0 {
                total += self.table[idx];
            } else {
                total -= self.table[idx];
            }
        }
        total
    }
}

fn check_inputs(x: &SpinConfiguration, class: &ScanClass, centering: Option<&[f64]>) -> Result<()> {
    if class.is_empty() {
        return Err(Error::InvalidSize("scan class is empty".into()));
    }
    if x.len() != class.n_sites() {
        return Err(Error::Shape { expected: class.n_sites(), got: x.len() });
    }
    if let Some(c) = centering {
        if c.len() != x.len() {
            return Err(Error::Shape { expected: x.len(), got: c.len() });
        }
    }
    Ok(())
}

fn finish(per_candidate: Vec<f64>) -> ScanStatistics {
    let (mut argmax, mut z_max) = (0, f64::NEG_INFINITY);
    for (k, &z) in per_candidate.iter().enumerate() {
        if z > z_max {
            z_max = z;
            argmax = k;
        }
    }
    ScanStatistics { per_candidate, z_max, argmax }
}

fn centering_sum(centering: Option<&[f64]>, support: &[u32]) -> f64 {
    centering.map_or(0.0, |c| support.iter().map(|&i| c[i as usize]).sum())
}

/// `Z_S = sum_{i in S} (x_i - c_i) / sqrt(s)` for every candidate; cube classes use a summed-area table.
pub fn scan_statistics(x: &SpinConfiguration, class: &ScanClass, centering: Option<&[f64]>) -> Result<ScanStatistics> {
    check_inputs(x, class, centering)?;
    let Some(CubeLayout { shape, k, anchors }) = class.cubes() else {
        return naive_scan_statistics(x, class, centering);
    };
    let sat = SummedArea::new(shape, x.spins());
    let root = (class.s() as f64).sqrt();
    let per = anchors
        .iter()
        .zip(class.candidates())
        .map(|(a, c)| (sat.cube_sum(a, *k) as f64 - centering_sum(centering, c)) / root)
        .collect();
    Ok(finish(per))
}

/// Direct summation over each candidate.
pub fn naive_scan_statistics(x: &SpinConfiguration, class: &ScanClass, centering: Option<&[f64]>) -> Result<ScanStatistics> {
    check_inputs(x, class, centering)?;
    let root = (class.s() as f64).sqrt();
    let spins = x.spins();
    let per = class
        .candidates()
        .iter()
        .map(|c| {
            let sum: i64 = c.iter().map(|&i| spins[i as usize] as i64).sum();
            (sum as f64 - centering_sum(centering, c)) / root
        })
        .collect();
    Ok(finish(per))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Positive,
    Negative,
    None,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Positive => "positive",
            Branch::Negative => "negative",
            Branch::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestDecision {
    pub test: String,
    pub reject: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub aux_w: Option<f64>,
    pub branch: Branch,
}

impl TestDecision {
    fn new(test: &str, statistic: f64, threshold: f64, aux_w: Option<f64>, branch: Branch) -> Self {
        // Equality accepts.
        Self { test: test.to_string(), reject: statistic > threshold, statistic, threshold, aux_w, branch }
    }

    pub const CSV_HEADER: &'static str = "test,statistic,threshold,branch,reject";

    pub fn csv_row(&self) -> String {
        format!("{},{:.6},{:.6},{},{}", self.test, self.statistic, self.threshold, self.branch, self.reject as u8)
    }
}

/// Rejects when `Z_max > sqrt(2 (1 + delta) log|class|)`.
pub fn high_temp_scan_test(x: &SpinConfiguration, class: &ScanClass, delta: f64) -> Result<TestDecision> {
    check_delta(delta)?;
    let stats = scan_statistics(x, class, None)?;
    Ok(TestDecision::new("high_temp_scan", stats.z_max, gaussian_max_cutoff(delta, 1.0, class.log_size()), None, Branch::None))
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("delta must be > 0, got {delta}")));
    }
    Ok(())
}

/// Randomized low-temperature rule for a given magnetization `m` and auxiliary draw `w`.
pub fn randomized_scan_decision(stats: &ScanStatistics, class: &ScanClass, m: f64, w: f64, delta: f64) -> Result<TestDecision> {
    check_delta(delta)?;
    let shift = m * (class.s() as f64).sqrt();
    let offset = gaussian_max_cutoff(delta, 1.0 - m * m, class.log_size());
    let (threshold, branch) = if w > 0.0 { (shift + offset, Branch::Positive) } else { (offset - shift, Branch::Negative) };
    Ok(TestDecision::new("low_temp_randomized_scan", stats.z_max, threshold, Some(w), branch))
}

/// Draws `W ~ N(mean(x), 1/(n beta))`, then applies the branch cutoff `±m sqrt(s) + t_n`.
pub fn low_temp_randomized_scan_test<R: Rng + ?Sized>(
    x: &SpinConfiguration,
    class: &ScanClass,
    beta: f64,
    delta: f64,
    rng: &mut R,
) -> Result<TestDecision> {
    if !(beta > 1.0) {
        return Err(Error::Contract(format!("the randomized scan test needs beta > 1, got {beta}")));
    }
    let stats = scan_statistics(x, class, None)?;
    let m = solve_m(beta)?.m;
    let z: f64 = rng.sample(StandardNormal);
    let w = x.mean() + z / (x.len() as f64 * beta).sqrt();
    randomized_scan_decision(&stats, class, m, w, delta)
}

/// Rejects when the (centered) `Z_max > sqrt(2 (1 + delta) chi log|class|)`.
pub fn lattice_scan_test(
    x: &SpinConfiguration,
    class: &ScanClass,
    chi: f64,
    delta: f64,
    centering: Option<&[f64]>,
) -> Result<TestDecision> {
    if !(chi > 0.0) || !chi.is_finite() {
        return Err(Error::Contract(format!("susceptibility must be > 0, got {chi}")));
    }
    check_delta(delta)?;
    let stats = scan_statistics(x, class, centering)?;
    Ok(TestDecision::new("lattice_scan", stats.z_max, gaussian_max_cutoff(delta, chi, class.log_size()), None, Branch::None))
}

/// Statistic `sum x - n m sign(mean x)` against `multiplier sqrt(n (1 - m^2))`; `sign(0) = +1`.
pub fn centered_sum_test(x: &SpinConfiguration, beta: f64, multiplier: f64) -> Result<TestDecision> {
    if !(multiplier > 0.0) {
        return Err(Error::InvalidParameter(format!("multiplier must be > 0, got {multiplier}")));
    }
    let m = solve_m(beta)?.m;
    let n = x.len() as f64;
    let sum = x.sum() as f64;
    let (sign, branch) = if sum >= 0.0 { (1.0, Branch::Positive) } else { (-1.0, Branch::Negative) };
    let statistic = sum - n * m * sign;
    let threshold = multiplier * (n * (1.0 - m * m)).sqrt();
    Ok(TestDecision::new("centered_sum", statistic, threshold, None, if m > 0.0 { branch } else { Branch::None }))
}

/// Multiplier giving asymptotic level `alpha` from the Gaussian limit of the conditionally centered sum.
pub fn multiplier_for_level(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let m = solve_m(beta)?.m;
    let denom = 1.0 - beta * (1.0 - m * m);
    if !(denom > 0.0) {
        return Err(Error::InvalidParameter(format!("no Gaussian limit at beta = {beta}")));
    }
    let z = Normal::standard().inverse_cdf(1.0 - alpha);
    Ok(z / denom.sqrt())
}

/// Rejects when either decision rejects; the statistic is the larger margin over its threshold.
pub fn bonferroni_combine(d1: &TestDecision, d2: &TestDecision) -> TestDecision {
    let margin = (d1.statistic - d1.threshold).max(d2.statistic - d2.threshold);
    TestDecision {
        test: format!("bonferroni({}+{})", d1.test, d2.test),
        reject: d1.reject || d2.reject,
        statistic: margin,
        threshold: 0.0,
        aux_w: d1.aux_w.or(d2.aux_w),
        branch: if d1.branch != Branch::None { d1.branch } else { d2.branch },
    }
}

/// Per-site null means from `draws` configurations of `model` (used to center plus-boundary scans).
pub fn estimate_site_means<R: Rng + ?Sized>(
    model: &ModelSpec,
    chain: &ChainConfig,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if draws == 0 {
        return Err(Error::InvalidParameter("need at least one draw".into()));
    }
    let samples = sample_model(model, SamplerKind::Auto, chain, draws, rng)?;
    let mut means = vec![0.0; model.n()];
    for x in &samples {
        for (m, &s) in means.iter_mut().zip(x.spins()) {
            *m += s as f64;
        }
    }
    means.iter_mut().for_each(|m| *m /= draws as f64);
    Ok(means)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CenteringKey {
    graph: String,
    beta_bits: u64,
    burn_in: usize,
    thinning: usize,
    draws: usize,
    seed: u64,
}

/// Memoized site means keyed by model geometry, `beta`, chain settings and seed.
#[derive(Debug, Default)]
pub struct CenteringCache {
    entries: Mutex<HashMap<CenteringKey, Arc<Vec<f64>>>>,
}

impl CenteringCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_estimate(&self, model: &ModelSpec, chain: &ChainConfig, draws: usize, seed: u64) -> Result<Arc<Vec<f64>>> {
        let key = CenteringKey {
            graph: format!("{} {}", model.n(), model.graph().kind()),
            beta_bits: model.beta().to_bits(),
            burn_in: chain.burn_in_sweeps,
            thinning: chain.thinning_sweeps,
            draws,
            seed,
        };
        if let Some(v) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(v));
        }
        let means = Arc::new(estimate_site_means(model, chain, draws, &mut crate::rng::from_seed(seed))?);
        self.entries.lock().expect("cache lock").insert(key, Arc::clone(&means));
        Ok(means)
    }
}
