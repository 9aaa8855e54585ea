//! Susceptibility `chi(beta)` of lattice models, estimated as `Var(Z_S)` for an interior cube.

use std::io::Write;

use rayon::prelude::*;

use crate::classes::cube_side;
use crate::error::{Error, Result};
use crate::model::{Boundary, LatticeShape, ModelSpec};
use crate::rng;
use crate::samplers::{ChainConfig, SwendsenWang};

/// Critical inverse temperature of the square lattice, `log(1 + sqrt 2) / 2`.
pub fn beta_c_2d() -> f64 {
    0.5 * (1.0 + std::f64::consts::SQRT_2).ln()
}

/// `ceil(log(side)^2)`.
pub fn required_margin(side: usize) -> usize {
    ((side as f64).ln().powi(2)).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockPlacement {
    Centered,
    /// Lowest corner of the cube.
    Anchor(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiConfig {
    pub chain: ChainConfig,
    /// Independent chains.
    pub replications: usize,
    /// Recorded draws per chain, spaced by the chain's thinning.
    pub draws_per_replication: usize,
    pub placement: BlockPlacement,
}

impl Default for ChiConfig {
    fn default() -> Self {
        Self {
            chain: ChainConfig::swendsen_wang_default(),
            replications: 20,
            draws_per_replication: 100,
            placement: BlockPlacement::Centered,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SusceptibilityEstimate {
    pub beta: f64,
    pub boundary: Boundary,
    pub chi_hat: f64,
    pub std_error: f64,
    pub block_size: usize,
    pub interior_margin: usize,
    pub replications: usize,
}

/// Cube of side `k` at `anchor`: its sites and L1 distance to the outside of the box.
fn place_block(shape: &LatticeShape, k: usize, placement: &BlockPlacement) -> Result<(Vec<usize>, usize)> {
    let anchor = match placement {
        BlockPlacement::Centered => vec![(shape.side - k) / 2; shape.dim],
        BlockPlacement::Anchor(a) => {
            if a.len() != shape.dim || a.iter().any(|&c| c + k > shape.side) {
                return Err(Error::Placement(format!("anchor {a:?} does not fit a cube of side {k}")));
            }
            a.clone()
        }
    };
    let margin = anchor.iter().map(|&a| (a + 1).min(shape.side - (a + k - 1))).min().unwrap_or(0);
    let mut sites = Vec::with_capacity(k.pow(shape.dim as u32));
    for off in 0..k.pow(shape.dim as u32) {
        let local = LatticeShape { side: k, dim: shape.dim }.coords(off);
        let coords: Vec<usize> = local.iter().zip(&anchor).map(|(l, a)| l + a).collect();
        sites.push(shape.index(&coords));
    }
    Ok((sites, margin))
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Sample variance of `Z_S` over independent Swendsen–Wang chains, with a jackknife over chains.
///
/// The sample variance centers `Z_S` at its empirical mean, which is the plus-boundary
/// centering by estimated site means and is harmless under the free boundary.
pub fn estimate_chi(model: &ModelSpec, s: usize, config: &ChiConfig, seed: u64) -> Result<SusceptibilityEstimate> {
    let shape = model
        .graph()
        .lattice_shape()
        .ok_or_else(|| Error::Contract("susceptibility needs a lattice model".into()))?;
    if !model.field().is_null() {
        return Err(Error::Contract("susceptibility is defined under the null field".into()));
    }
    if config.replications < 2 || config.draws_per_replication == 0 {
        return Err(Error::InvalidParameter("need at least two replications and one draw each".into()));
    }
    config.chain.validate()?;
    let k = cube_side(s.max(1), shape.dim);
    if k > shape.side {
        return Err(Error::Placement(format!("cube side {k} exceeds box side {}", shape.side)));
    }
    let (sites, margin) = place_block(&shape, k, &config.placement)?;
    let need = required_margin(shape.side);
    if margin < need {
        return Err(Error::Placement(format!("block margin {margin} is below the required {need}")));
    }
    let block = sites.len();
    let root = (block as f64).sqrt();
    let cell = rng::cell_tag(&format!("chi/{}/{}/{}", shape.side, shape.dim, model.beta()));
    let per_rep: Vec<Vec<f64>> = (0..config.replications)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut gen = rng::replication_stream(seed, cell, r as u64);
            let mut sw = SwendsenWang::new(model)?;
            let mut spins = crate::samplers::initial_spins(model.n(), config.chain.initial_state, &mut gen);
            for _ in 0..config.chain.burn_in_sweeps {
                sw.step(&mut spins, &mut gen);
            }
            let mut z = Vec::with_capacity(config.draws_per_replication);
            for _ in 0..config.draws_per_replication {
                for _ in 0..config.chain.thinning_sweeps {
                    sw.step(&mut spins, &mut gen);
                }
                z.push(sites.iter().map(|&i| spins[i] as f64).sum::<f64>() / root);
            }
            Ok(z)
        })
        .collect::<Result<_>>()?;

    let all: Vec<f64> = per_rep.iter().flatten().copied().collect();
    let chi_hat = variance(&all);
    let reps = per_rep.len() as f64;
    let leave_out: Vec<f64> = (0..per_rep.len())
        .map(|skip| {
            let rest: Vec<f64> = per_rep.iter().enumerate().filter(|(r, _)| *r != skip).flat_map(|(_, v)| v.iter().copied()).collect();
            variance(&rest)
        })
        .collect();
    let mean_lo = leave_out.iter().sum::<f64>() / reps;
    let std_error = ((reps - 1.0) / reps * leave_out.iter().map(|v| (v - mean_lo).powi(2)).sum::<f64>()).sqrt();
    if !(chi_hat > 0.0) {
        return Err(Error::Estimation(format!("degenerate block variance {chi_hat}")));
    }
    Ok(SusceptibilityEstimate {
        beta: model.beta(),
        boundary: model.graph().boundary(),
        chi_hat,
        std_error,
        block_size: block,
        interior_margin: margin,
        replications: config.replications,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub estimate: SusceptibilityEstimate,
    /// Set when this point falls below the previous one by more than twice the summed standard errors.
    pub violation: bool,
}

/// Estimates `chi` at each `beta` (all below the critical value) on a `side^dim` lattice.
///
/// `beta_c` is required for `dim != 2`.
pub fn chi_monotonicity_sweep(
    side: usize,
    dim: usize,
    boundary: Boundary,
    betas: &[f64],
    s: usize,
    config: &ChiConfig,
    seed: u64,
    beta_c: Option<f64>,
) -> Result<Vec<SweepRow>> {
    let critical = match (dim, beta_c) {
        (_, Some(b)) => b,
        (2, None) => beta_c_2d(),
        _ => return Err(Error::InvalidParameter(format!("no closed-form critical point for d = {dim}; supply one"))),
    };
    if let Some(&b) = betas.iter().find(|&&b| !(b >= 0.0 && b < critical)) {
        return Err(Error::InvalidParameter(format!("beta {b} is not in [0, {critical})")));
    }
    let graph = std::sync::Arc::new(crate::model::build_lattice(side, dim, boundary)?);
    let mut rows: Vec<SweepRow> = Vec::with_capacity(betas.len());
    for &beta in betas {
        let model = ModelSpec::null(graph.clone(), beta)?;
        let estimate = estimate_chi(&model, s, config, seed)?;
        let violation = rows.last().is_some_and(|prev| {
            estimate.chi_hat <= prev.estimate.chi_hat - 2.0 * (prev.estimate.std_error + estimate.std_error)
        });
        rows.push(SweepRow { estimate, violation });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "beta,chi_hat,std_error,replications")?;
    for r in rows {
        let e = &r.estimate;
        writeln!(w, "{:.6},{:.6},{:.6},{}", e.beta, e.chi_hat, e.std_error, e.replications)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_lattice;
    use crate::oracle;
    use std::sync::Arc;

    fn lattice(side: usize, bc: Boundary, beta: f64) -> ModelSpec {
        ModelSpec::null(Arc::new(build_lattice(side, 2, bc).unwrap()), beta).unwrap()
    }

    #[test]
    fn critical_point() {
        assert!((beta_c_2d() - 0.440_686_793_509_771_5).abs() < 1e-15);
    }

    #[test]
    fn independent_spins_have_unit_chi() {
        let est = estimate_chi(&lattice(20, Boundary::Free, 0.0), 16, &ChiConfig::default(), 1).unwrap();
        assert!((est.chi_hat - 1.0).abs() < 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn small_box_matches_exact_variance() {
        let m = lattice(4, Boundary::Free, 0.2);
        let exact = oracle::exact_summary(&m).unwrap();
        let config = ChiConfig { replications: 40, draws_per_replication: 500, ..ChiConfig::default() };
        let est = estimate_chi(&m, 4, &config, 2).unwrap();
        // centered 2x2 block: sites 5, 6, 9, 10
        let target = exact.block_variance(&[5, 6, 9, 10]);
        assert!((est.chi_hat - target).abs() < 3.0 * est.std_error, "{} vs {target} (se {})", est.chi_hat, est.std_error);
    }

    #[test]
    fn infeasible_margin_is_rejected() {
        let m = lattice(8, Boundary::Free, 0.2);
        assert!(matches!(estimate_chi(&m, 16, &ChiConfig::default(), 1), Err(Error::Placement(_))));
        let config = ChiConfig { placement: BlockPlacement::Anchor(vec![0, 0]), ..ChiConfig::default() };
        assert!(matches!(estimate_chi(&lattice(16, Boundary::Free, 0.2), 4, &config, 1), Err(Error::Placement(_))));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let m = lattice(16, Boundary::Plus, 0.3);
        let a = estimate_chi(&m, 4, &ChiConfig::default(), 5).unwrap();
        let b = estimate_chi(&m, 4, &ChiConfig::default(), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_rejects_supercritical_and_single_point_is_clean() {
        assert!(chi_monotonicity_sweep(16, 2, Boundary::Free, &[0.5], 4, &ChiConfig::default(), 1, None).is_err());
        assert!(chi_monotonicity_sweep(8, 3, Boundary::Free, &[0.1], 1, &ChiConfig::default(), 1, None).is_err());
        let rows = chi_monotonicity_sweep(16, 2, Boundary::Free, &[0.0], 4, &ChiConfig::default(), 1, None).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(!rows[0].violation);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("beta,chi_hat,std_error,replications\n0.000000,"));
    }
}
