//! Brute-force ground truth for small systems.
//!
//! Every quantity here is a sum over all `2^n` spin states, visited in Gray
//! code order so that each step flips one spin. Pair energies are tracked in
//! integer units of the coupling scale, which keeps them exact. Sums of
//! weights go through a streaming log-sum-exp.

use crate::auxiliary::{log_cosh, AuxiliaryDensity};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, SpinConfiguration};

pub const DEFAULT_MAX_SITES: usize = 22;

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Hard cap on the site count.
    pub max_sites: usize,
    /// Keep the full table of `2^n` state probabilities.
    pub with_pmf: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { max_sites: DEFAULT_MAX_SITES, with_pmf: false }
    }
}

#[derive(Debug, Clone)]
pub struct ExactSummary {
    pub log_partition: f64,
    pub means: Vec<f64>,
    pub covariances: Vec<Vec<f64>>,
    /// Indexed by state code: bit `i` set means site `i` is `+1`.
    pub pmf: Option<Vec<f64>>,
}

impl ExactSummary {
    /// `Var(sum_{i in S} X_i / sqrt(|S|))`.
    pub fn block_variance(&self, support: &[usize]) -> f64 {
        let s = support.len() as f64;
        support.iter().flat_map(|&i| support.iter().map(move |&j| (i, j))).map(|(i, j)| self.covariances[i][j]).sum::<f64>() / s
    }
}

/// Streaming `log(sum exp(v))`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    pub(crate) fn new() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    pub(crate) fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    pub(crate) fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

fn check_size(model: &ModelSpec, cap: usize) -> Result<()> {
    let n = model.n();
    if n > cap || n > 62 {
        return Err(Error::InvalidSize(format!("exact enumeration over 2^{n} states exceeds the cap of n <= {cap}")));
    }
    Ok(())
}

/// Visits every state with `(spins, state code, log weight)`.
fn enumerate<F: FnMut(&[i8], u64, f64)>(model: &ModelSpec, cap: usize, mut visit: F) -> Result<()> {
    check_size(model, cap)?;
    let g = model.graph();
    let n = g.n();
    let beta = model.beta();
    let mu = model.mu();
    let scale = g.scale();
    let complete = g.is_complete();

    let mut x = vec![-1i8; n];
    // Integer coupling sums c_i = sum_j A_ij x_j + ghost_i, in units of `scale`.
    let mut c: Vec<i64> = (0..n)
        .map(|i| {
            if complete {
                -(n as i64 - 1)
            } else {
                -(g.degree(i) as i64) + g.ghost_bonds(i) as i64
            }
        })
        .collect();
    // Pair energy in units of `scale`: sum over edges x_i x_j plus ghost terms.
    let mut pair: i64 = if complete {
        (n as i64 * n as i64 - n as i64) / 2
    } else {
        let edges = g.edge_count() as i64;
        let ghost: i64 = (0..n).map(|i| g.ghost_bonds(i) as i64).sum();
        edges - ghost
    };
    let mut field: f64 = -mu.iter().sum::<f64>();
    let mut code = 0u64;

    visit(&x, code, beta * scale * pair as f64 + field);
    for k in 1u64..(1u64 << n) {
        let b = k.trailing_zeros() as usize;
        let old = x[b] as i64;
        pair -= 2 * old * c[b];
        field -= 2.0 * old as f64 * mu[b];
        x[b] = -x[b];
        code ^= 1 << b;
        if complete {
            for (j, cj) in c.iter_mut().enumerate() {
                if j != b {
                    *cj -= 2 * old;
                }
            }
        } else {
            for &j in g.neighbors(b) {
                c[j as usize] -= 2 * old;
            }
        }
        visit(&x, code, beta * scale * pair as f64 + field);
    }
    Ok(())
}

pub fn log_partition(model: &ModelSpec) -> Result<f64> {
    log_partition_with(model, DEFAULT_MAX_SITES)
}

pub fn log_partition_with(model: &ModelSpec, cap: usize) -> Result<f64> {
    let mut acc = LogSumExp::new();
    enumerate(model, cap, |_, _, lw| acc.push(lw))?;
    Ok(acc.value())
}

pub fn exact_summary(model: &ModelSpec) -> Result<ExactSummary> {
    exact_summary_with(model, &OracleOptions { with_pmf: model.n() <= 16, ..OracleOptions::default() })
}

pub fn exact_summary_with(model: &ModelSpec, opts: &OracleOptions) -> Result<ExactSummary> {
    let n = model.n();
    let log_z = log_partition_with(model, opts.max_sites)?;
    let mut means = vec![0.0; n];
    let mut second = vec![vec![0.0; n]; n];
    let mut pmf = if opts.with_pmf { Some(vec![0.0; 1usize << n]) } else { None };
    enumerate(model, opts.max_sites, |x, code, lw| {
        let p = (lw - log_z).exp();
        if let Some(table) = pmf.as_mut() {
            table[code as usize] = p;
        }
        for i in 0..n {
            let pi = p * x[i] as f64;
            means[i] += pi;
            let row = &mut second[i];
            for j in i + 1..n {
                row[j] += pi * x[j] as f64;
            }
        }
    })?;
    let mut cov = vec![vec![0.0; n]; n];
    for i in 0..n {
        cov[i][i] = 1.0 - means[i] * means[i];
        for j in i + 1..n {
            let v = second[i][j] - means[i] * means[j];
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    Ok(ExactSummary { log_partition: log_z, means, covariances: cov, pmf })
}

/// `P(sum_{i in S} X_i / sqrt(|S|) > t)` by enumeration.
pub fn exact_tail(model: &ModelSpec, support: &[usize], t: f64) -> Result<f64> {
    if support.is_empty() {
        return Err(Error::Contract("tail probability needs a nonempty support".into()));
    }
    if let Some(&bad) = support.iter().find(|&&i| i >= model.n()) {
        return Err(Error::InvalidParameter(format!("support index {bad} out of range")));
    }
    let root = (support.len() as f64).sqrt();
    let (mut all, mut tail) = (LogSumExp::new(), LogSumExp::new());
    enumerate(model, DEFAULT_MAX_SITES, |x, _, lw| {
        all.push(lw);
        let z = support.iter().map(|&i| x[i] as i64).sum::<i64>() as f64 / root;
        if z > t {
            tail.push(lw);
        }
    })?;
    Ok((tail.value() - all.value()).exp())
}

/// `Z(beta, Q, mu) / Z(beta, Q, 0)` by enumeration.
pub fn exact_ratio(with_field: &ModelSpec, null: &ModelSpec) -> Result<f64> {
    if with_field.graph() != null.graph() || with_field.beta() != null.beta() {
        return Err(Error::Contract("partition ratio needs the same graph and beta".into()));
    }
    Ok((log_partition(with_field)? - log_partition(null)?).exp())
}

/// Law of the number of `+1` spins, indexed `0..=n`.
pub fn plus_count_pmf(model: &ModelSpec) -> Result<Vec<f64>> {
    let n = model.n();
    let mut acc = vec![LogSumExp::new(); n + 1];
    enumerate(model, DEFAULT_MAX_SITES, |_, code, lw| acc[code.count_ones() as usize].push(lw))?;
    let mut total = LogSumExp::new();
    acc.iter().for_each(|a| total.push(a.value()));
    let log_z = total.value();
    Ok(acc.iter().map(|a| (a.value() - log_z).exp()).collect())
}

/// Expectation of an arbitrary state functional.
pub fn exact_expectation<F: FnMut(&[i8]) -> f64>(model: &ModelSpec, mut h: F) -> Result<f64> {
    let log_z = log_partition(model)?;
    let mut acc = 0.0;
    enumerate(model, DEFAULT_MAX_SITES, |x, _, lw| acc += (lw - log_z).exp() * h(x))?;
    Ok(acc)
}

/// The Curie–Weiss ratio `Z(beta, Q, mu_S(A)) / Z(beta, Q, 0)` as a one-dimensional integral.
///
/// Works for any `n`; the integrand is the auxiliary density of the model with
/// and without the block field.
pub fn auxiliary_ratio_integral(n: usize, beta: f64, s: usize, a: f64) -> Result<f64> {
    if !(beta >= 0.0) || !(a >= 0.0) || s > n || n == 0 {
        return Err(Error::InvalidParameter(format!("need beta >= 0, A >= 0, s <= n; got beta={beta}, A={a}, s={s}, n={n}")));
    }
    if a == 0.0 || s == 0 {
        return Ok(1.0);
    }
    if beta == 0.0 {
        return Ok((s as f64 * log_cosh(a)).exp());
    }
    const REL_TOL: f64 = 1e-8;
    let with_field = AuxiliaryDensity::block(n, beta, s, a)?;
    let null = AuxiliaryDensity::block(n, beta, 0, 0.0)?;
    let log_ratio = with_field.log_integral(REL_TOL)? - null.log_integral(REL_TOL)?;
    Ok(log_ratio.exp())
}

/// Metropolis-free heat-bath kernel for a small model, as a dense `2^n x 2^n` matrix.
///
/// One step picks a site uniformly and resamples it from its conditional law.
pub fn heat_bath_kernel(model: &ModelSpec) -> Result<Vec<Vec<f64>>> {
    let n = model.n();
    if n > 12 {
        return Err(Error::InvalidSize(format!("dense kernel limited to n <= 12, got {n}")));
    }
    let states = 1usize << n;
    let mut k = vec![vec![0.0; states]; states];
    for (code, row) in k.iter_mut().enumerate() {
        let x = SpinConfiguration::from_bits(n, code as u64);
        for i in 0..n {
            let h = crate::model::local_field(model, &x, i)?;
            let p_plus = 0.5 * (1.0 + h.tanh());
            let plus = code | (1 << i);
            let minus = code & !(1 << i);
            row[plus] += p_plus / n as f64;
            row[minus] += (1.0 - p_plus) / n as f64;
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub instances: usize,
    /// Largest amount by which the inequality failed (0 when it always held).
    pub worst_violation: f64,
    pub tolerance: f64,
}

impl InvariantCheck {
    pub fn passed(&self) -> bool {
        self.worst_violation <= self.tolerance
    }
}

fn random_instance_graph<R: rand::Rng + ?Sized>(max_n: usize, rng: &mut R) -> Result<crate::model::CouplingGraph> {
    use crate::model::{build_complete, build_erdos_renyi, build_lattice, build_random_regular, Boundary};
    let n = rng.random_range(2..=max_n.max(2));
    let bc = if rng.random::<bool>() { Boundary::Plus } else { Boundary::Free };
    match rng.random_range(0..4) {
        0 => build_complete(n),
        1 => build_erdos_renyi(n, rng.random_range(0.2..0.9), rng),
        2 => {
            let shapes: Vec<(usize, usize)> =
                [(2usize, 1usize), (3, 1), (2, 2), (2, 3), (3, 2)].into_iter().filter(|&(side, dim)| side.pow(dim as u32) <= max_n).collect();
            let (side, dim) = shapes[rng.random_range(0..shapes.len())];
            build_lattice(side, dim, bc)
        }
        _ => {
            let n = if n % 2 == 1 { n - 1 } else { n }.max(4).min(max_n - max_n % 2);
            build_random_regular(n, if n > 4 { 3 } else { 2 }, rng)
        }
    }
}

/// Correlation inequalities and identities checked on `instances` random ferromagnets with at most `max_n` sites.
///
/// * means and pair covariances are nonnegative for nonnegative fields;
/// * covariances do not increase when the field increases coordinate-wise;
/// * `E X_i >= (1 - tanh(beta max_row_sum)) tanh(mu_i)`;
/// * `E X_i = E tanh(local field at i)`;
/// * the state probabilities sum to one.
pub fn invariant_suite(max_n: usize, instances: usize, seed: u64) -> Result<Vec<InvariantCheck>> {
    use rand::Rng;
    if !(4..=16).contains(&max_n) {
        return Err(Error::InvalidSize(format!("suite supports 4 <= max_n <= 16, got {max_n}")));
    }
    let cell = crate::rng::cell_tag("oracle-invariants");
    let names = ["gks_means", "gks_covariances", "ghs_covariance_ordering", "mean_lower_bound", "conditional_mean_identity", "pmf_normalization"];
    let tolerances = [1e-12, 1e-12, 1e-12, 1e-12, 1e-10, 1e-12];
    let mut worst = [0.0f64; 6];
    for k in 0..instances {
        let mut r = crate::rng::replication_stream(seed, cell, k as u64);
        let graph = std::sync::Arc::new(random_instance_graph(max_n, &mut r)?);
        let n = graph.n();
        let beta = r.random_range(0.0..2.0);
        let low: Vec<f64> = (0..n).map(|_| if r.random::<bool>() { r.random_range(0.0..1.0) } else { 0.0 }).collect();
        let high: Vec<f64> = low.iter().map(|&a| if r.random::<bool>() { a + r.random_range(0.0..1.0) } else { a }).collect();
        let m_low = ModelSpec::new(graph.clone(), beta, crate::model::SignalSpec::from_vector(&low)?)?;
        let m_high = ModelSpec::new(graph.clone(), beta, crate::model::SignalSpec::from_vector(&high)?)?;
        let opts = OracleOptions { with_pmf: true, ..OracleOptions::default() };
        let lo = exact_summary_with(&m_low, &opts)?;
        let hi = exact_summary_with(&m_high, &opts)?;
        let factor = 1.0 - (beta * graph.max_row_sum()).tanh();
        for summary in [&lo, &hi] {
            for i in 0..n {
                worst[0] = worst[0].max(-summary.means[i]);
                for j in 0..n {
                    worst[1] = worst[1].max(-summary.covariances[i][j]);
                }
            }
            let total: f64 = summary.pmf.as_ref().map_or(1.0, |p| p.iter().sum());
            worst[5] = worst[5].max((total - 1.0).abs());
        }
        for i in 0..n {
            for j in 0..n {
                worst[2] = worst[2].max(hi.covariances[i][j] - lo.covariances[i][j]);
            }
            worst[3] = worst[3].max(factor * low[i].tanh() - lo.means[i]);
            let x_mean = exact_expectation(&m_low, |x| x[i] as f64)?;
            let tanh_mean = exact_expectation(&m_low, |x| {
                let field = beta * graph.coupling_sum(i, x) + low[i];
                field.tanh()
            })?;
            worst[4] = worst[4].max((x_mean - tanh_mean).abs());
        }
    }
    Ok(names
        .iter()
        .zip(tolerances)
        .zip(worst)
        .map(|((&name, tolerance), w)| InvariantCheck { name, instances, worst_violation: w.max(0.0), tolerance })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_complete, build_lattice, Boundary, SignalSpec};
    use std::sync::Arc;

    fn cw(n: usize, beta: f64) -> ModelSpec {
        ModelSpec::null(Arc::new(build_complete(n).unwrap()), beta).unwrap()
    }

    /// Naive enumeration: recompute the Hamiltonian from scratch for every state.
    fn naive_log_z(model: &ModelSpec) -> f64 {
        let n = model.n();
        let mut acc = LogSumExp::new();
        for code in 0..(1u64 << n) {
            acc.push(crate::model::hamiltonian(model, &SpinConfiguration::from_bits(n, code)).unwrap());
        }
        acc.value()
    }

    #[test]
    fn two_site_partition_function() {
        for beta in [0.0, 0.4, 1.0, 3.0] {
            let z = log_partition(&cw(2, beta)).unwrap().exp();
            assert!((z - 4.0 * (beta / 2.0).cosh()).abs() < 1e-12 * z);
        }
    }

    #[test]
    fn gray_code_matches_naive_enumeration() {
        let lattice = Arc::new(build_lattice(3, 2, Boundary::Plus).unwrap());
        let mu: Vec<f64> = (0..9).map(|i| 0.05 * i as f64).collect();
        let m = ModelSpec::new(lattice, 0.6, SignalSpec::from_vector(&mu).unwrap()).unwrap();
        assert!((log_partition(&m).unwrap() - naive_log_z(&m)).abs() < 1e-12);
        let c = cw(9, 1.7).with_field(SignalSpec::uniform(9, &[0, 3], 0.4).unwrap()).unwrap();
        assert!((log_partition(&c).unwrap() - naive_log_z(&c)).abs() < 1e-12);
    }

    #[test]
    fn independent_sites_at_beta_zero() {
        let mu = [0.1, 0.0, 0.7, 0.3, 1.2];
        let m = cw(5, 0.0).with_field(SignalSpec::from_vector(&mu).unwrap()).unwrap();
        let expect: f64 = mu.iter().map(|&a| (2.0 * a.cosh()).ln()).sum();
        let s = exact_summary(&m).unwrap();
        assert!((s.log_partition - expect).abs() < 1e-12);
        for (i, &a) in mu.iter().enumerate() {
            assert!((s.means[i] - a.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_invariants() {
        let m = cw(8, 1.2);
        let s = exact_summary(&m).unwrap();
        assert!(s.means.iter().all(|v| v.abs() < 1e-12));
        let total: f64 = s.pmf.as_ref().unwrap().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for i in 0..8 {
            assert!((s.covariances[i][i] - (1.0 - s.means[i].powi(2))).abs() < 1e-15);
            for j in 0..8 {
                assert_eq!(s.covariances[i][j], s.covariances[j][i]);
            }
        }
    }

    #[test]
    fn size_cap() {
        let m = cw(23, 0.5);
        assert!(matches!(log_partition(&m), Err(Error::InvalidSize(_))));
        assert!(matches!(exact_summary(&m), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn tail_edge_cases() {
        let m = cw(8, 0.5);
        let s = [0, 1, 2, 3];
        assert!((exact_tail(&m, &s, -2.0 - 1e-9).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(exact_tail(&m, &s, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn tail_regression_fixture() {
        // Frozen from enumeration: n=8 complete, beta=0.5, S = first 4 sites, t = 1.
        // Z_S > 1 iff all four spins in S are +1 (Z_S = 2); the fixture comes from
        // the closed form over the magnetization of the remaining four sites.
        let m = cw(8, 0.5);
        let p = exact_tail(&m, &[0, 1, 2, 3], 1.0).unwrap();
        let direct = exact_expectation(&m, |x| if x[..4].iter().all(|&v| v == 1) { 1.0 } else { 0.0 }).unwrap();
        assert!((p - direct).abs() < 1e-14);
        assert!((p - TAIL_FIXTURE).abs() < 1e-12, "{p:.15}");
    }

    const TAIL_FIXTURE: f64 = 0.099_446_890_463_222;

    #[test]
    fn ratio_edge_cases() {
        let null = cw(6, 0.0);
        let alt = null.with_field(SignalSpec::uniform(6, &[0, 1, 2], 0.4).unwrap()).unwrap();
        let r = exact_ratio(&alt, &null).unwrap();
        assert!((r - 0.4f64.cosh().powi(3)).abs() < 1e-12);
        let null = cw(6, 0.8);
        let zero = null.with_field(SignalSpec::uniform(6, &[0, 1], 0.0).unwrap()).unwrap();
        assert!((exact_ratio(&zero, &null).unwrap() - 1.0).abs() < 1e-14);
        let other = cw(6, 0.9);
        assert!(matches!(exact_ratio(&zero, &other), Err(Error::Contract(_))));
    }

    #[test]
    fn auxiliary_integral_matches_enumeration() {
        let (n, beta, s, a) = (12, 0.5, 3, 0.4);
        let null = cw(n, beta);
        let alt = null.with_field(SignalSpec::uniform(n, &[0, 1, 2], a).unwrap()).unwrap();
        let exact = exact_ratio(&alt, &null).unwrap();
        let integral = auxiliary_ratio_integral(n, beta, s, a).unwrap();
        assert!((exact - integral).abs() < 1e-6, "{exact} vs {integral}");
        assert_eq!(auxiliary_ratio_integral(n, beta, s, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn auxiliary_integral_low_temperature_small_n() {
        let (n, beta) = (10, 1.6);
        let null = cw(n, beta);
        let alt = null.with_field(SignalSpec::uniform(n, &[0, 1, 2, 3], 0.7).unwrap()).unwrap();
        let exact = exact_ratio(&alt, &null).unwrap();
        let integral = auxiliary_ratio_integral(n, beta, 4, 0.7).unwrap();
        assert!((exact - integral).abs() < 1e-6 * exact);
    }

    #[test]
    fn invariant_suite_holds() {
        let checks = invariant_suite(8, 60, 11).unwrap();
        assert_eq!(checks.len(), 6);
        for c in &checks {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn heat_bath_kernel_rows_sum_to_one() {
        let k = heat_bath_kernel(&cw(4, 0.9)).unwrap();
        for row in &k {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }
}
