//! Auxiliary-variable representation of the Curie–Weiss model.
//!
//! Adding `W | X ~ N(mean(X), 1/(n beta))` makes the spins conditionally
//! independent with fields `beta W + mu_i`, and `W` has marginal density
//! proportional to `exp(-n f(w))` with
//! `f(w) = beta w^2 / 2 - (1/n) sum_i log cosh(beta w + mu_i)`.

use crate::error::{Error, Result};

/// `log cosh(x)` without overflow.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

#[derive(Debug, Clone)]
pub struct AuxiliaryDensity {
    n: usize,
    beta: f64,
    /// Distinct field values with multiplicities.
    groups: Vec<(f64, usize)>,
}

impl AuxiliaryDensity {
    pub fn new(n: usize, beta: f64, field: &[f64]) -> Result<Self> {
        if field.len() != n {
            return Err(Error::Shape { expected: n, got: field.len() });
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("auxiliary density needs beta > 0, got {beta}")));
        }
        let mut sorted: Vec<f64> = field.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut groups: Vec<(f64, usize)> = Vec::new();
        for v in sorted {
            match groups.last_mut() {
                Some((g, c)) if *g == v => *c += 1,
                _ => groups.push((v, 1)),
            }
        }
        Ok(Self { n, beta, groups })
    }

    /// Density for `s` sites at strength `a` and `n - s` sites at zero.
    pub fn block(n: usize, beta: f64, s: usize, a: f64) -> Result<Self> {
        if s > n {
            return Err(Error::InvalidParameter(format!("s={s} exceeds n={n}")));
        }
        let mut field = vec![0.0; n];
        field[..s].iter_mut().for_each(|v| *v = a);
        Self::new(n, beta, &field)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn f(&self, w: f64) -> f64 {
        -self.log_density(w) / self.n as f64
    }

    /// `-n f(w)`, unnormalized.
    pub fn log_density(&self, w: f64) -> f64 {
        let bw = self.beta * w;
        let lc: f64 = self.groups.iter().map(|&(mu, c)| c as f64 * log_cosh(bw + mu)).sum();
        -(self.n as f64) * self.beta * w * w / 2.0 + lc
    }

    /// Bound on `|d/dw log_density|` over `|w| <= r`.
    pub fn lipschitz(&self, r: f64) -> f64 {
        self.n as f64 * self.beta * (r + 1.0)
    }

    /// Conservative scale of the density's width, never larger than the true one.
    pub fn min_width(&self) -> f64 {
        1.0 / (self.n as f64 * self.beta).sqrt()
    }

    /// Outer limit beyond which the density is below `exp(-60)` of any mode.
    pub fn outer_radius(&self) -> f64 {
        1.0 + 12.0 * self.min_width()
    }

    /// Local maxima of the log density, located on a grid then refined by golden section.
    pub fn modes(&self) -> Vec<f64> {
        let r = self.outer_radius();
        let h = (0.25 * self.min_width()).min(0.01);
        let steps = (2.0 * r / h).ceil() as usize;
        let grid: Vec<f64> = (0..=steps).map(|k| -r + k as f64 * h).collect();
        let vals: Vec<f64> = grid.iter().map(|&w| self.log_density(w)).collect();
        let mut modes = Vec::new();
        for k in 1..steps {
            if vals[k] >= vals[k - 1] && vals[k] > vals[k + 1] {
                modes.push(self.golden_max(grid[k - 1], grid[k + 1]));
            }
        }
        if modes.is_empty() {
            let k = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap_or(0);
            modes.push(grid[k]);
        }
        modes
    }

    fn golden_max(&self, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (self.log_density(c), self.log_density(d));
        for _ in 0..200 {
            if (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
                break;
            }
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = self.log_density(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = self.log_density(d);
            }
        }
        (a + b) / 2.0
    }

    pub fn max_log_density(&self) -> f64 {
        self.modes().into_iter().map(|w| self.log_density(w)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `log ∫ exp(log_density(w)) dw` by panel-wise adaptive Simpson with relative tolerance `rel_tol`.
    pub fn log_integral(&self, rel_tol: f64) -> Result<f64> {
        let peak = self.max_log_density();
        let g = |w: f64| (self.log_density(w) - peak).exp();
        // Expand the domain until the integrand at the edges is negligible.
        let mut radius = 3.0f64;
        let edge_tol = 1e-14 * self.min_width();
        let mut expansions = 0;
        while g(radius) > edge_tol || g(-radius) > edge_tol {
            radius *= 2.0;
            expansions += 1;
            if expansions > 30 {
                return Err(Error::Numerical(format!("integrand does not decay; edge values {} / {}", g(-radius), g(radius))));
            }
        }
        let h = (0.25 * self.min_width()).min(0.05);
        let panels = (2.0 * radius / h).ceil() as usize;
        let h = 2.0 * radius / panels as f64;
        // The integral is at least of order min_width (peak value is 1).
        let abs_tol = rel_tol * self.min_width() * 0.1 / panels as f64;
        let mut total = 0.0;
        for k in 0..panels {
            let a = -radius + k as f64 * h;
            let b = a + h;
            let (fa, fm, fb) = (g(a), g((a + b) / 2.0), g(b));
            if fa.max(fm).max(fb) < 1e-300 {
                continue;
            }
            let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            total += adaptive_simpson(&g, a, b, fa, fm, fb, whole, abs_tol, 48).map_err(|depth_at| {
                Error::Numerical(format!("adaptive Simpson did not converge on panel [{a}, {b}] (reached w={depth_at})"))
            })?;
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numerical(format!("integral estimate {total} is not positive and finite")));
        }
        Ok(peak + total.ln())
    }
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F: Fn(f64) -> f64>(
    g: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> std::result::Result<f64, f64> {
    let m = (a + b) / 2.0;
    let (lm, rm) = ((a + m) / 2.0, (m + b) / 2.0);
    let (flm, frm) = (g(lm), g(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(m);
    }
    Ok(adaptive_simpson(g, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + adaptive_simpson(g, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_cosh_is_stable() {
        assert!((log_cosh(0.3) - 0.3f64.cosh().ln()).abs() < 1e-15);
        assert!((log_cosh(-2.0) - 2.0f64.cosh().ln()).abs() < 1e-14);
        assert!((log_cosh(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_limit_integral() {
        // beta tiny: log cosh(beta w) ~ 0, density ~ exp(-n beta w^2 / 2).
        let d = AuxiliaryDensity::new(10, 1e-6, &[0.0; 10]).unwrap();
        let li = d.log_integral(1e-10).unwrap();
        let expect = (2.0 * std::f64::consts::PI / (10.0 * 1e-6)).sqrt().ln();
        assert!((li - expect).abs() < 1e-4, "{li} vs {expect}");
    }

    #[test]
    fn modes_are_symmetric_in_low_temperature() {
        let d = AuxiliaryDensity::new(500, 2.0, &vec![0.0; 500]).unwrap();
        let modes = d.modes();
        assert_eq!(modes.len(), 2);
        assert!((modes[0] + modes[1]).abs() < 1e-6);
        assert!(modes[1] > 0.9 && modes[1] < 1.0);
        let d = AuxiliaryDensity::new(500, 0.5, &vec![0.0; 500]).unwrap();
        let modes = d.modes();
        assert_eq!(modes.len(), 1);
        assert!(modes[0].abs() < 1e-6);
    }
}
