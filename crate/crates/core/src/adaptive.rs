//! Tests for unknown `beta`: a magnetization-based regime classifier, the
//! pseudo-likelihood estimate of `beta` under the null, and their composition
//! with the fixed-`beta` scan tests.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::ScanClass;
use crate::detectors::{estimate_site_means, high_temp_scan_test, lattice_scan_test, low_temp_randomized_scan_test, TestDecision};
use crate::error::{Error, Result};
use crate::model::{build_complete, Boundary, CouplingGraph, ModelSpec, SpinConfiguration};
use crate::rng;
use crate::susceptibility::{estimate_chi, ChiConfig};

/// Upper end of the pseudo-likelihood search interval.
pub const BETA_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependenceRegime {
    LowOrCritical,
    HighDependence,
}

/// High dependence iff `|mean(x)| >= 1 / log n`.
pub fn regime_classifier(x: &SpinConfiguration) -> Result<DependenceRegime> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidSize(format!("classifier needs n >= 3, got {n}")));
    }
    Ok(if x.mean().abs() >= 1.0 / (n as f64).ln() { DependenceRegime::HighDependence } else { DependenceRegime::LowOrCritical })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clamp {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLikelihoodFit {
    pub beta_hat: f64,
    /// `|S(beta_hat)|`.
    pub residual: f64,
    pub mean_abs_local_field: f64,
    pub mean_sq_local_field: f64,
    pub iterations: usize,
    /// Set when the root lies outside `[0, BETA_MAX]` and the estimate sits on an end point.
    pub clamp: Option<Clamp>,
}

/// Local fields `m_i = sum_j Q_ij x_j` (ghost included) with pinned sites set to `+1` and left out.
fn local_fields(x: &SpinConfiguration, graph: &CouplingGraph, pinned: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != graph.n() {
        return Err(Error::Shape { expected: graph.n(), got: x.len() });
    }
    let mut spins = x.spins().to_vec();
    let mut keep = vec![true; spins.len()];
    for &i in pinned {
        if i >= spins.len() {
            return Err(Error::InvalidParameter(format!("pinned site {i} out of range")));
        }
        spins[i] = 1;
        keep[i] = false;
    }
    let (mut m, mut s) = (Vec::with_capacity(spins.len()), Vec::with_capacity(spins.len()));
    if graph.is_complete() {
        let total: i64 = spins.iter().map(|&v| v as i64).sum();
        for (i, &v) in spins.iter().enumerate() {
            if keep[i] {
                m.push((total - v as i64) as f64 * graph.scale());
                s.push(v as f64);
            }
        }
    } else {
        for (i, &v) in spins.iter().enumerate() {
            if keep[i] {
                m.push(graph.coupling_sum(i, &spins));
                s.push(v as f64);
            }
        }
    }
    Ok((m, s))
}

/// `S(beta) = (1/n) sum_i m_i (x_i - tanh(beta m_i))`.
pub fn pseudo_score(m: &[f64], x: &[f64], beta: f64) -> f64 {
    m.iter().zip(x).map(|(&mi, &xi)| mi * (xi - (beta * mi).tanh())).sum::<f64>() / m.len() as f64
}

/// Derivative of `pseudo_score` in `beta`; never positive.
pub fn pseudo_score_slope(m: &[f64], beta: f64) -> f64 {
    -m.iter().map(|&mi| mi * mi / (beta * mi).cosh().powi(2)).sum::<f64>() / m.len() as f64
}

/// Root of the pseudo-likelihood score under the null field, by bisection on `[0, BETA_MAX]`.
pub fn fit_beta_pseudolikelihood(x: &SpinConfiguration, graph: &CouplingGraph, pinned: &[usize]) -> Result<PseudoLikelihoodFit> {
    let (m, s) = local_fields(x, graph, pinned)?;
    let sq: f64 = m.iter().map(|v| v * v).sum();
    if m.is_empty() || sq == 0.0 {
        return Err(Error::Estimation("all local fields vanish; beta is not identifiable".into()));
    }
    let k = m.len() as f64;
    let summary = |beta_hat: f64, iterations: usize, clamp: Option<Clamp>| PseudoLikelihoodFit {
        beta_hat,
        residual: pseudo_score(&m, &s, beta_hat).abs(),
        mean_abs_local_field: m.iter().map(|v| v.abs()).sum::<f64>() / k,
        mean_sq_local_field: sq / k,
        iterations,
        clamp,
    };
    if pseudo_score(&m, &s, 0.0) <= 0.0 {
        return Ok(summary(0.0, 0, Some(Clamp::Lower)));
    }
    if pseudo_score(&m, &s, BETA_MAX) >= 0.0 {
        return Ok(summary(BETA_MAX, 0, Some(Clamp::Upper)));
    }
    let (mut lo, mut hi) = (0.0, BETA_MAX);
    let mut iterations = 0;
    while iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = pseudo_score(&m, &s, mid);
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(summary(0.5 * (lo + hi), iterations, None))
}

/// Susceptibility (and, under the plus boundary, site means) on a grid of `beta` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiTable {
    pub boundary: Boundary,
    pub betas: Vec<f64>,
    pub chis: Vec<f64>,
    pub site_means: Option<Vec<Vec<f64>>>,
}

impl ChiTable {
    pub const DEFAULT_POINTS: usize = 20;

    pub fn from_values(boundary: Boundary, betas: Vec<f64>, chis: Vec<f64>, site_means: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if betas.len() < 2 || betas.len() != chis.len() || betas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("table needs at least two increasing beta values, one chi each".into()));
        }
        if site_means.as_ref().is_some_and(|m| m.len() != betas.len()) {
            return Err(Error::InvalidParameter("site means must be given at every grid point".into()));
        }
        Ok(Self { boundary, betas, chis, site_means })
    }

    /// Estimates the table on `points` equally spaced values of `beta` in `[lo, hi]`.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        graph: Arc<CouplingGraph>,
        lo: f64,
        hi: f64,
        points: usize,
        s: usize,
        config: &ChiConfig,
        mean_draws: usize,
        seed: u64,
    ) -> Result<Self> {
        if points < 2 || !(hi > lo) || lo < 0.0 {
            return Err(Error::InvalidParameter(format!("bad grid [{lo}, {hi}] x {points}")));
        }
        let boundary = graph.boundary();
        let betas: Vec<f64> = (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect();
        let rows: Vec<(f64, Option<Vec<f64>>)> = betas
            .par_iter()
            .enumerate()
            .map(|(k, &beta)| -> Result<_> {
                let model = ModelSpec::null(graph.clone(), beta)?;
                let chi = estimate_chi(&model, s, config, seed ^ k as u64)?.chi_hat;
                let means = if boundary == Boundary::Plus {
                    let mut gen = rng::replication_stream(seed, rng::cell_tag("chi-table-means"), k as u64);
                    Some(estimate_site_means(&model, &config.chain, mean_draws, &mut gen)?)
                } else {
                    None
                };
                Ok((chi, means))
            })
            .collect::<Result<_>>()?;
        let (chis, means): (Vec<f64>, Vec<Option<Vec<f64>>>) = rows.into_iter().unzip();
        let site_means = if boundary == Boundary::Plus { Some(means.into_iter().map(Option::unwrap_or_default).collect()) } else { None };
        Self::from_values(boundary, betas, chis, site_means)
    }

    fn bracket(&self, beta: f64) -> Result<(usize, f64)> {
        let (lo, hi) = (self.betas[0], *self.betas.last().expect("nonempty"));
        if !(beta >= lo && beta <= hi) {
            return Err(Error::Estimation(format!("beta {beta} lies outside the table range [{lo}, {hi}]")));
        }
        let k = self.betas.partition_point(|&b| b <= beta).clamp(1, self.betas.len() - 1);
        let t = (beta - self.betas[k - 1]) / (self.betas[k] - self.betas[k - 1]);
        Ok((k, t))
    }

    /// Linear interpolation of `chi`.
    pub fn chi(&self, beta: f64) -> Result<f64> {
        let (k, t) = self.bracket(beta)?;
        Ok(self.chis[k - 1] + t * (self.chis[k] - self.chis[k - 1]))
    }

    /// Linearly interpolated site means (plus boundary only).
    pub fn site_means(&self, beta: f64) -> Result<Option<Vec<f64>>> {
        let Some(table) = &self.site_means else { return Ok(None) };
        let (k, t) = self.bracket(beta)?;
        Ok(Some(table[k - 1].iter().zip(&table[k]).map(|(a, b)| a + t * (b - a)).collect()))
    }
}

#[derive(Debug, Clone)]
pub enum AdaptiveFamily {
    MeanField,
    Lattice {
        graph: Arc<CouplingGraph>,
        table: Arc<ChiTable>,
        beta_c: f64,
        /// Estimates within this distance of `beta_c` are refused.
        guard: f64,
        pinned: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveDecision {
    pub decision: TestDecision,
    pub regime: Option<DependenceRegime>,
    pub fit: Option<PseudoLikelihoodFit>,
}

pub fn adaptive_test<R: Rng + ?Sized>(
    x: &SpinConfiguration,
    class: &ScanClass,
    delta: f64,
    rng: &mut R,
    family: &AdaptiveFamily,
) -> Result<AdaptiveDecision> {
    adaptive_test_with_regime(x, class, delta, rng, family, None)
}

/// As `adaptive_test`, with the mean-field classifier optionally overridden.
///
/// On the high-dependence branch an estimate `beta_hat <= 1` has no low-temperature
/// test, so the high-temperature scan is used instead.
pub fn adaptive_test_with_regime<R: Rng + ?Sized>(
    x: &SpinConfiguration,
    class: &ScanClass,
    delta: f64,
    rng: &mut R,
    family: &AdaptiveFamily,
    forced: Option<DependenceRegime>,
) -> Result<AdaptiveDecision> {
    match family {
        AdaptiveFamily::MeanField => {
            let regime = match forced {
                Some(r) => r,
                None => regime_classifier(x)?,
            };
            match regime {
                DependenceRegime::LowOrCritical => {
                    Ok(AdaptiveDecision { decision: high_temp_scan_test(x, class, delta)?, regime: Some(regime), fit: None })
                }
                DependenceRegime::HighDependence => {
                    let graph = build_complete(x.len())?;
                    let fit = fit_beta_pseudolikelihood(x, &graph, &[])?;
                    let decision = if fit.beta_hat > 1.0 {
                        low_temp_randomized_scan_test(x, class, fit.beta_hat, delta, rng)?
                    } else {
                        high_temp_scan_test(x, class, delta)?
                    };
                    Ok(AdaptiveDecision { decision, regime: Some(regime), fit: Some(fit) })
                }
            }
        }
        AdaptiveFamily::Lattice { graph, table, beta_c, guard, pinned } => {
            let fit = fit_beta_pseudolikelihood(x, graph, pinned)?;
            if (fit.beta_hat - beta_c).abs() < *guard {
                return Err(Error::Estimation(format!("beta_hat = {} is within {guard} of the critical point", fit.beta_hat)));
            }
            let chi = table.chi(fit.beta_hat)?;
            let centering = table.site_means(fit.beta_hat)?;
            let decision = lattice_scan_test(x, class, chi, delta, centering.as_deref())?;
            Ok(AdaptiveDecision { decision, regime: None, fit: Some(fit) })
        }
    }
}
