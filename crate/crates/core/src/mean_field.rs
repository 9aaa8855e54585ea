//! Curie–Weiss fixed point, sharp detection constants and scan cutoffs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default slack in every scan cutoff.
pub const DEFAULT_DELTA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldSolution {
    pub beta: f64,
    /// Nonnegative root of `m = tanh(beta m)`.
    pub m: f64,
    pub residual: f64,
}

/// Largest root of `m = tanh(beta m)` by bisection; zero for `beta <= 1`.
pub fn solve_m(beta: f64) -> Result<MeanFieldSolution> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("beta must be finite and >= 0, got {beta}")));
    }
    if beta <= 1.0 {
        return Ok(MeanFieldSolution { beta, m: 0.0, residual: 0.0 });
    }
    // g(m) = tanh(beta m) - m is positive on (0, m*) and negative on (m*, 1].
    let g = |m: f64| (beta * m).tanh() - m;
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0);
    // Near criticality the root is small; start lo where g is clearly positive.
    let mut start = 0.5;
    while g(start) <= 0.0 && start > 1e-300 {
        hi = start;
        start *= 0.5;
    }
    lo = lo.max(start);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    Ok(MeanFieldSolution { beta, m, residual: g(m).abs() })
}

/// `sqrt(2)` for `beta <= 1`, otherwise `sqrt(2) cosh(beta m(beta))`.
pub fn sharp_constant(beta: f64) -> Result<f64> {
    let sol = solve_m(beta)?;
    Ok(std::f64::consts::SQRT_2 * (beta * sol.m).cosh())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    HighOrCritical,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    pub delta: f64,
    pub log_class_size: f64,
    pub s: usize,
    pub regime: Regime,
}

impl CutoffSpec {
    pub fn new(delta: f64, log_class_size: f64, s: usize, regime: Regime) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be > 0, got {delta}")));
        }
        if !(log_class_size > 0.0) || !log_class_size.is_finite() {
            return Err(Error::InvalidParameter(format!("log class size must be > 0, got {log_class_size}")));
        }
        if s == 0 {
            return Err(Error::InvalidParameter("sparsity must be positive".into()));
        }
        Ok(Self { delta, log_class_size, s, regime })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cutoff {
    /// Reject when `Z_max` exceeds this value.
    Single(f64),
    /// Reject when `Z_max > ±shift + offset`, sign chosen by the test.
    Shifted { shift: f64, offset: f64 },
}

/// `sqrt(2 (1 + delta) scale log_size)`.
pub fn gaussian_max_cutoff(delta: f64, scale: f64, log_size: f64) -> f64 {
    (2.0 * (1.0 + delta) * scale * log_size).sqrt()
}

pub fn scan_cutoff(spec: &CutoffSpec, beta: f64) -> Result<Cutoff> {
    match spec.regime {
        Regime::HighOrCritical => Ok(Cutoff::Single(gaussian_max_cutoff(spec.delta, 1.0, spec.log_class_size))),
        Regime::Low => {
            if beta <= 1.0 {
                return Err(Error::Contract(format!("low-temperature cutoff needs beta > 1, got {beta}")));
            }
            Ok(shifted_cutoff(spec, solve_m(beta)?.m))
        }
    }
}

/// Low-temperature cutoff for a given magnetization `m`; `m = 0` gives the high-temperature value.
pub fn shifted_cutoff(spec: &CutoffSpec, m: f64) -> Cutoff {
    Cutoff::Shifted {
        shift: m * (spec.s as f64).sqrt(),
        offset: gaussian_max_cutoff(spec.delta, 1.0 - m * m, spec.log_class_size),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalFamily {
    MeanField,
    Lattice { chi: f64 },
}

/// The constant that `sqrt(s) tanh(A) / sqrt(log|class|)` must exceed.
pub fn threshold_constant(beta: f64, family: SignalFamily) -> Result<f64> {
    match family {
        SignalFamily::MeanField => sharp_constant(beta),
        SignalFamily::Lattice { chi } => {
            if !(chi > 0.0) || !chi.is_finite() {
                return Err(Error::InvalidParameter(format!("susceptibility must be > 0, got {chi}")));
            }
            Ok((2.0 * chi).sqrt())
        }
    }
}

/// `A = artanh(c * constant * sqrt(log_class_size / s))`; `c = 1` sits on the detection boundary.
pub fn signal_strength_for_constant(c: f64, s: usize, log_class_size: f64, beta: f64, family: SignalFamily) -> Result<f64> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("c must be finite and >= 0, got {c}")));
    }
    if s == 0 {
        return Err(Error::InvalidParameter("sparsity must be positive".into()));
    }
    if !(log_class_size >= 0.0) {
        return Err(Error::InvalidParameter(format!("log class size must be >= 0, got {log_class_size}")));
    }
    let t = c * threshold_constant(beta, family)? * (log_class_size / s as f64).sqrt();
    if t >= 1.0 {
        return Err(Error::InfeasibleSignal(t));
    }
    Ok(t.atanh())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Figure1Row {
    pub beta: f64,
    pub m: f64,
    pub constant: f64,
}

/// `(beta, m(beta), sharp constant)` on `points` equally spaced values in `[lo, hi]`.
pub fn figure1_table(lo: f64, hi: f64, points: usize) -> Result<Vec<Figure1Row>> {
    if points < 2 || !(hi > lo) || lo < 0.0 {
        return Err(Error::InvalidParameter(format!("need 0 <= lo < hi and points >= 2, got [{lo}, {hi}] x {points}")));
    }
    (0..points)
        .map(|k| {
            let beta = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let m = solve_m(beta)?.m;
            Ok(Figure1Row { beta, m, constant: sharp_constant(beta)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn m_is_zero_at_high_temperature() {
        assert_eq!(solve_m(0.7).unwrap().m, 0.0);
        assert_eq!(solve_m(1.0).unwrap().m, 0.0);
        assert_eq!(solve_m(0.0).unwrap().m, 0.0);
    }

    #[test]
    fn m_at_beta_two() {
        let sol = solve_m(2.0).unwrap();
        assert!(sol.residual <= 1e-12);
        // frozen from an independent bisection of tanh(2m) = m
        assert!((sol.m - 0.957_504_024_077_268_7).abs() < 1e-12, "{}", sol.m);
    }

    #[test]
    fn m_saturates() {
        // 1 - m(50) is about 2e-44, so the root rounds to 1 in double precision.
        let m = solve_m(50.0).unwrap().m;
        assert!(m >= 1.0 - 1e-20 && m <= 1.0);
    }

    #[test]
    fn m_near_criticality_is_small_and_accurate() {
        let sol = solve_m(1.0 + 1e-6).unwrap();
        assert!(sol.m > 0.0 && sol.m < 0.01);
        assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn sharp_constants() {
        assert!((sharp_constant(1.0).unwrap() - SQRT_2).abs() < 1e-15);
        assert!((sharp_constant(0.3).unwrap() - SQRT_2).abs() < 1e-15);
        assert!((sharp_constant(1.0 + 1e-6).unwrap() - SQRT_2).abs() < 1e-3);
        let c2 = sharp_constant(2.0).unwrap();
        assert!((c2 - SQRT_2 * (2.0 * 0.957_504_024_077_268_7f64).cosh()).abs() < 1e-10);
        assert!((c2 - 4.90).abs() < 0.01, "{c2}");
    }

    #[test]
    fn high_cutoff_arithmetic() {
        let spec = CutoffSpec::new(1.0, 100f64.ln(), 10, Regime::HighOrCritical).unwrap();
        match scan_cutoff(&spec, 0.5).unwrap() {
            Cutoff::Single(t) => assert!((t - 4.292).abs() < 1e-3, "{t}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn low_cutoff_collapses_at_zero_m() {
        let spec = CutoffSpec::new(0.2, 30f64.ln(), 9, Regime::Low).unwrap();
        let Cutoff::Shifted { shift, offset } = shifted_cutoff(&spec, 0.0) else { panic!() };
        assert_eq!(shift, 0.0);
        assert!((offset - gaussian_max_cutoff(0.2, 1.0, 30f64.ln())).abs() < 1e-15);
        assert!(matches!(scan_cutoff(&spec, 0.9), Err(Error::Contract(_))));
        let Cutoff::Shifted { shift, .. } = scan_cutoff(&spec, 2.0).unwrap() else { panic!() };
        assert!((shift - 3.0 * 0.957_504_024_077_268_7).abs() < 1e-10);
    }

    #[test]
    fn cutoff_small_delta_limit() {
        let t = gaussian_max_cutoff(1e-12, 1.0, 50f64.ln());
        assert!((t - (2.0 * 50f64.ln()).sqrt()).abs() < 1e-10);
        assert!(CutoffSpec::new(0.0, 1.0, 1, Regime::HighOrCritical).is_err());
    }

    #[test]
    fn signal_strength_examples() {
        let a = signal_strength_for_constant(1.0, 100, 30f64.ln(), 0.5, SignalFamily::MeanField).unwrap();
        assert!((a.tanh() - 0.2608).abs() < 1e-4);
        assert!((a - 0.2670).abs() < 1e-4, "{a}");
        assert_eq!(signal_strength_for_constant(0.0, 100, 30f64.ln(), 0.5, SignalFamily::MeanField).unwrap(), 0.0);
        // Boundary: tanh(A) = sqrt(2 log L / s) at c = 1.
        let a = signal_strength_for_constant(1.0, 50, 7f64.ln(), 1.0, SignalFamily::MeanField).unwrap();
        assert!((a.tanh() - (2.0 * 7f64.ln() / 50.0).sqrt()).abs() < 1e-14);
        assert!(matches!(
            signal_strength_for_constant(10.0, 4, 30f64.ln(), 0.5, SignalFamily::MeanField),
            Err(Error::InfeasibleSignal(_))
        ));
        let lat = signal_strength_for_constant(1.0, 64, 100f64.ln(), 0.3, SignalFamily::Lattice { chi: 2.0 }).unwrap();
        assert!((lat.tanh() - 2.0 * (100f64.ln() / 64.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn figure1_shape() {
        let rows = figure1_table(0.0, 3.0, 31).unwrap();
        assert_eq!(rows.len(), 31);
        assert!(rows.iter().filter(|r| r.beta <= 1.0).all(|r| r.m == 0.0 && (r.constant - SQRT_2).abs() < 1e-15));
    }
}
