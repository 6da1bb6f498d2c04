//! Synthetic data with known truth.
//!
//! [`generate`] follows the Dirichlet-multinomial recipe used to benchmark
//! the method; [`generate_zinb`] draws directly from the fitted model and is
//! meant for parameter-recovery checks.

use ndarray::Array2;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};

use crate::data::{standardize_covariates, CountMatrix, CovariateMatrix, GroupAssignment};
use crate::error::{Error, Result};
use crate::normalization::SizeFactors;

/// Number of columns of the built-in standard-normal covariate pool.
pub const SYNTHETIC_POOL_COVARIATES: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// even; half the samples per group
    pub n: usize,
    pub p: usize,
    pub n_disc: usize,
    pub sigma_e: f64,
    pub pi0: f64,
    pub n_covariates: usize,
    pub m_active: usize,
    pub total_min: u64,
    pub total_max: u64,
    pub mu0_range: (f64, f64),
    pub mu2_abs: f64,
    pub beta_range: (f64, f64),
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 60,
            p: 300,
            n_disc: 20,
            sigma_e: 1.0,
            pi0: 0.4,
            n_covariates: SYNTHETIC_POOL_COVARIATES,
            m_active: 4,
            total_min: 20_000_000,
            total_max: 60_000_000,
            mu0_range: (8.0, 10.0),
            mu2_abs: 2.0,
            beta_range: (0.5, 1.0),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || self.n % 2 != 0 {
            return Err(Error::InvalidInput(format!("n must be even and at least 4, got {}", self.n)));
        }
        if self.p == 0 || self.n_disc > self.p {
            return Err(Error::InvalidInput(format!("need 0 <= n_disc <= p, got {} and {}", self.n_disc, self.p)));
        }
        if self.m_active > self.n_covariates {
            return Err(Error::InvalidInput(format!(
                "m_active {} exceeds the {} covariates",
                self.m_active, self.n_covariates
            )));
        }
        if !(0.0..1.0).contains(&self.pi0) {
            return Err(Error::InvalidInput(format!("pi0 must lie in [0, 1), got {}", self.pi0)));
        }
        if !(self.sigma_e >= 0.0 && self.sigma_e.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma_e must be finite and >= 0, got {}", self.sigma_e)));
        }
        if self.total_min == 0 || self.total_min > self.total_max {
            return Err(Error::InvalidInput("total-count range must satisfy 0 < min <= max".into()));
        }
        if !(self.mu0_range.0 <= self.mu0_range.1 && self.beta_range.0 <= self.beta_range.1) {
            return Err(Error::InvalidInput("empty parameter range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub gamma_true: Vec<bool>,
    /// `R × p`
    pub delta_true: Array2<bool>,
    pub mu0_true: Vec<f64>,
    pub mu2_true: Vec<f64>,
    /// `R × p`
    pub beta_true: Array2<f64>,
    /// `n × p`
    pub structural_zero_mask: Array2<bool>,
    /// per-sample totals before structural zeros were applied
    pub library_sizes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub counts: CountMatrix,
    pub covariates: CovariateMatrix,
    pub groups: GroupAssignment,
    pub truth: SimTruth,
}

/// A covariate pool with group labels, from which rows are drawn per group.
#[derive(Debug, Clone, Copy)]
pub struct CovariatePool<'a> {
    pub covariates: &'a CovariateMatrix,
    pub groups: &'a GroupAssignment,
}

/// Normalised independent `Gamma(a_j, 1)` draws.
pub fn dirichlet_draw<R: Rng>(a: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::Domain("empty Dirichlet parameter".into()));
    }
    let mut out = Vec::with_capacity(a.len());
    for &v in a {
        let g = Gamma::new(v, 1.0).map_err(|_| Error::Domain(format!("Dirichlet parameter {v} must be positive")))?;
        out.push(g.sample(rng));
    }
    let total: f64 = out.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Domain("Dirichlet draw underflowed".into()));
    }
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Multinomial draw by sequential binomials; the result sums to `total`.
pub fn multinomial_draw<R: Rng>(total: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut remaining = total;
    let mut mass: f64 = probs.iter().sum();
    for (j, &pj) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j + 1 == probs.len() {
            out[j] = remaining;
            break;
        }
        let q = if mass > 0.0 { (pj / mass).clamp(0.0, 1.0) } else { 0.0 };
        let x = Binomial::new(remaining, q).expect("probability clamped to [0, 1]").sample(rng);
        out[j] = x;
        remaining -= x;
        mass -= pj;
    }
    out
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Discriminators, covariate effects and baselines shared by both generators.
struct Effects {
    gamma: Vec<bool>,
    mu0: Vec<f64>,
    mu2: Vec<f64>,
    delta: Array2<bool>,
    beta: Array2<f64>,
}

fn draw_effects<R: Rng>(
    rng: &mut R,
    p: usize,
    n_disc: usize,
    r: usize,
    m_active: usize,
    mu0_range: (f64, f64),
    mu2_abs: f64,
    beta_range: (f64, f64),
) -> Effects {
    let mut gamma = vec![false; p];
    for j in sample_indices(rng, p, n_disc) {
        gamma[j] = true;
    }
    let mu0 = (0..p).map(|_| uniform(rng, mu0_range)).collect();
    let mu2 = gamma.iter().map(|&g| if g { sign(rng) * mu2_abs } else { 0.0 }).collect();
    let mut delta = Array2::from_elem((r, p), false);
    let mut beta = Array2::zeros((r, p));
    for j in 0..p {
        for c in sample_indices(rng, r, m_active) {
            delta[[c, j]] = true;
            beta[[c, j]] = sign(rng) * uniform(rng, beta_range);
        }
    }
    Effects { gamma, mu0, mu2, delta, beta }
}

fn covariate_ids(r: usize) -> Vec<String> {
    (1..=r).map(|c| format!("x{c}")).collect()
}

/// Standard-normal covariates, standardized.
fn synthetic_covariates<R: Rng>(rng: &mut R, n: usize, r: usize) -> Result<CovariateMatrix> {
    let values = Array2::from_shape_simple_fn((n, r), || rng.sample(StandardNormal));
    standardize_covariates(&CovariateMatrix::new(values, covariate_ids(r))?)
}

fn pooled_covariates<R: Rng>(rng: &mut R, pool: CovariatePool<'_>, per_group: usize, r: usize) -> Result<CovariateMatrix> {
    if pool.covariates.n_covariates() < r {
        return Err(Error::InvalidInput(format!(
            "covariate pool has {} columns, {r} requested",
            pool.covariates.n_covariates()
        )));
    }
    if pool.groups.len() != pool.covariates.n_samples() {
        return Err(Error::DimensionMismatch("pool labels do not match pool rows".into()));
    }
    let mut rows = Vec::with_capacity(2 * per_group);
    for g in 1..=2 {
        let members: Vec<usize> = (0..pool.groups.len()).filter(|&i| pool.groups.labels()[i] == g).collect();
        if members.len() < per_group {
            return Err(Error::PoolTooSmall { group: g, needed: per_group, found: members.len() });
        }
        rows.extend(sample_indices(rng, members.len(), per_group).into_iter().map(|k| members[k]));
    }
    let values = Array2::from_shape_fn((rows.len(), r), |(i, c)| pool.covariates.values()[[rows[i], c]]);
    let ids = pool.covariates.covariate_ids()[..r].to_vec();
    standardize_covariates(&CovariateMatrix::new(values, ids)?)
}

fn two_groups(n: usize) -> Result<GroupAssignment> {
    GroupAssignment::new((0..n).map(|i| if i < n / 2 { 1 } else { 2 }).collect())
}

fn ids(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("{prefix}{i}")).collect()
}

/// Dirichlet-multinomial data set with two equal groups (group 1 is the
/// reference), `n_disc` shifted features and `m_active` active covariates per
/// feature. Without a pool, covariates are standard normal.
pub fn generate(config: &SimConfig, pool: Option<CovariatePool<'_>>) -> Result<SimData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (n, p, r) = (config.n, config.p, config.n_covariates);
    let fx = draw_effects(
        &mut rng,
        p,
        config.n_disc,
        r,
        config.m_active,
        config.mu0_range,
        config.mu2_abs,
        config.beta_range,
    );
    let covariates = match pool {
        Some(pool) => pooled_covariates(&mut rng, pool, n / 2, r)?,
        None => synthetic_covariates(&mut rng, n, r)?,
    };
    let groups = two_groups(n)?;
    let x = covariates.values();

    let mut counts = Array2::<u64>::zeros((n, p));
    let mut library_sizes = Vec::with_capacity(n);
    let mut a = vec![0.0; p];
    for i in 0..n {
        let shift = groups.labels()[i] == 2;
        for j in 0..p {
            let mut m = fx.mu0[j] + if shift { fx.mu2[j] } else { 0.0 };
            for c in 0..r {
                m += x[[i, c]] * fx.beta[[c, j]];
            }
            let noise: f64 = rng.sample(StandardNormal);
            a[j] = (m + config.sigma_e * noise).exp();
        }
        let probs = dirichlet_draw(&a, &mut rng)?;
        let total = rng.gen_range(config.total_min..=config.total_max);
        library_sizes.push(total);
        for (j, v) in multinomial_draw(total, &probs, &mut rng).into_iter().enumerate() {
            counts[[i, j]] = v;
        }
    }

    let mut mask = Array2::from_elem((n, p), false);
    let n_zero = (config.pi0 * (n * p) as f64).round() as usize;
    for cell in sample_indices(&mut rng, n * p, n_zero) {
        let (i, j) = (cell / p, cell % p);
        mask[[i, j]] = true;
        counts[[i, j]] = 0;
    }

    Ok(SimData {
        counts: CountMatrix::new(counts, ids("s", n), ids("f", p))?,
        covariates,
        groups,
        truth: SimTruth {
            gamma_true: fx.gamma,
            delta_true: fx.delta,
            mu0_true: fx.mu0,
            mu2_true: fx.mu2,
            beta_true: fx.beta,
            structural_zero_mask: mask,
            library_sizes,
        },
    })
}

/// Settings for drawing counts from the ZINB model itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ZinbSimConfig {
    pub n: usize,
    pub p: usize,
    pub n_disc: usize,
    pub n_covariates: usize,
    pub m_active: usize,
    pub mu0_range: (f64, f64),
    pub mu2_abs: f64,
    pub beta_range: (f64, f64),
    pub phi: f64,
    /// probability of an extra zero
    pub pi: f64,
    /// standard deviation of the log size factors
    pub log_sf_sd: f64,
    pub seed: u64,
}

impl Default for ZinbSimConfig {
    fn default() -> Self {
        Self {
            n: 200,
            p: 20,
            n_disc: 5,
            n_covariates: 3,
            m_active: 1,
            mu0_range: (3.0, 6.0),
            mu2_abs: 2.0,
            beta_range: (0.5, 1.0),
            phi: 5.0,
            pi: 0.2,
            log_sf_sd: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZinbSimData {
    pub data: SimData,
    pub size_factors: SizeFactors,
}

/// Two equal groups; counts are Gamma-Poisson mixtures with mean
/// `s_i exp(μ₀ + μ₂ + xβ)`, replaced by an extra zero with probability `pi`.
pub fn generate_zinb(config: &ZinbSimConfig) -> Result<ZinbSimData> {
    let base = SimConfig {
        n: config.n,
        p: config.p,
        n_disc: config.n_disc,
        n_covariates: config.n_covariates,
        m_active: config.m_active,
        ..SimConfig::default()
    };
    base.validate()?;
    if !(config.phi > 0.0 && (0.0..1.0).contains(&config.pi) && config.log_sf_sd >= 0.0) {
        return Err(Error::InvalidInput("need phi > 0, pi in [0, 1) and log_sf_sd >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (n, p, r) = (config.n, config.p, config.n_covariates);
    let fx = draw_effects(
        &mut rng,
        p,
        config.n_disc,
        r,
        config.m_active,
        config.mu0_range,
        config.mu2_abs,
        config.beta_range,
    );
    let covariates = synthetic_covariates(&mut rng, n, r)?;
    let groups = two_groups(n)?;
    let raw: Vec<f64> = (0..n)
        .map(|_| (config.log_sf_sd * rng.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let size_factors = SizeFactors::from_raw(&raw, None)?;
    let x = covariates.values();

    let mut counts = Array2::<u64>::zeros((n, p));
    let mut mask = Array2::from_elem((n, p), false);
    for i in 0..n {
        let shift = groups.labels()[i] == 2;
        for j in 0..p {
            let mut m = fx.mu0[j] + if shift { fx.mu2[j] } else { 0.0 };
            for c in 0..r {
                m += x[[i, c]] * fx.beta[[c, j]];
            }
            let lambda = size_factors.values()[i] * m.exp();
            let extra = rng.gen_bool(config.pi);
            let rate = Gamma::new(config.phi, lambda / config.phi)
                .map_err(|e| Error::Domain(e.to_string()))?
                .sample(&mut rng);
            let y = if rate > 0.0 {
                Poisson::new(rate).map_err(|e| Error::Domain(e.to_string()))?.sample(&mut rng) as u64
            } else {
                0
            };
            mask[[i, j]] = extra;
            counts[[i, j]] = if extra { 0 } else { y };
        }
    }
    let library_sizes = counts.rows().into_iter().map(|row| row.sum()).collect();
    Ok(ZinbSimData {
        data: SimData {
            counts: CountMatrix::new(counts, ids("s", n), ids("f", p))?,
            covariates,
            groups,
            truth: SimTruth {
                gamma_true: fx.gamma,
                delta_true: fx.delta,
                mu0_true: fx.mu0,
                mu2_true: fx.mu2,
                beta_true: fx.beta,
                structural_zero_mask: mask,
                library_sizes,
            },
        },
        size_factors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig { n: 20, p: 30, n_disc: 5, seed: 3, ..SimConfig::default() }
    }

    #[test]
    fn no_structural_zeros_when_pi0_is_zero() {
        let d = generate(&SimConfig { pi0: 0.0, ..small() }, None).unwrap();
        assert!(d.truth.structural_zero_mask.iter().all(|&m| !m));
        for (row, &total) in d.counts.counts().rows().into_iter().zip(&d.truth.library_sizes) {
            assert_eq!(row.sum(), total);
        }
    }

    #[test]
    fn zero_fraction_at_least_pi0() {
        let cfg = SimConfig { n: 60, p: 300, seed: 11, ..SimConfig::default() };
        let d = generate(&cfg, None).unwrap();
        let zeros = d.counts.counts().iter().filter(|&&v| v == 0).count();
        assert!(zeros as f64 / (60.0 * 300.0) >= 0.4);
        assert_eq!(d.truth.structural_zero_mask.iter().filter(|&&m| m).count(), 7200);
    }

    #[test]
    fn truth_has_requested_structure() {
        let d = generate(&small(), None).unwrap();
        assert_eq!(d.truth.gamma_true.iter().filter(|&&g| g).count(), 5);
        for col in d.truth.delta_true.columns() {
            assert_eq!(col.iter().filter(|&&v| v).count(), 4);
        }
        for (&g, &m) in d.truth.gamma_true.iter().zip(&d.truth.mu2_true) {
            assert_eq!(g, m != 0.0);
            assert!(m == 0.0 || m.abs() == 2.0);
        }
        assert_eq!(d.groups.group_sizes(), vec![10, 10]);
        assert!(d.covariates.is_standardized());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small(), None).unwrap();
        let b = generate(&small(), None).unwrap();
        assert_eq!(a, b);
        let c = generate(&SimConfig { seed: 4, ..small() }, None).unwrap();
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn pool_too_small() {
        let cov = CovariateMatrix::new(Array2::from_shape_fn((6, 7), |(i, c)| (i * 7 + c) as f64), covariate_ids(7)).unwrap();
        let groups = GroupAssignment::new(vec![1, 1, 1, 1, 2, 2]).unwrap();
        let pool = CovariatePool { covariates: &cov, groups: &groups };
        let err = generate(&SimConfig { n: 6, ..small() }, Some(pool)).unwrap_err();
        assert_eq!(err, Error::PoolTooSmall { group: 2, needed: 3, found: 2 });
    }

    #[test]
    fn dirichlet_sums_to_one_and_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let v = dirichlet_draw(&[1e6, 1e6], &mut rng).unwrap();
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((v[0] - 0.5).abs() < 1e-2);
        }
        assert!(dirichlet_draw(&[1.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn dirichlet_mean_matches_moment_oracle() {
        let a = [0.5, 2.0, 3.5];
        let a0: f64 = a.iter().sum();
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut sum = [0.0; 3];
        for _ in 0..draws {
            for (s, v) in sum.iter_mut().zip(dirichlet_draw(&a, &mut rng).unwrap()) {
                *s += v;
            }
        }
        for k in 0..3 {
            let m = a[k] / a0;
            let var = m * (1.0 - m) / (a0 + 1.0);
            let se = (var / draws as f64).sqrt();
            assert!((sum[k] / draws as f64 - m).abs() < 3.0 * se, "component {k}");
        }
    }

    #[test]
    fn multinomial_preserves_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = multinomial_draw(60_000_000, &[0.1, 0.0, 0.6, 0.3], &mut rng);
        assert_eq!(v.iter().sum::<u64>(), 60_000_000);
        assert_eq!(v[1], 0);
    }

    #[test]
    fn zinb_generator_shapes() {
        let d = generate_zinb(&ZinbSimConfig { seed: 9, ..ZinbSimConfig::default() }).unwrap();
        assert_eq!(d.data.counts.n_samples(), 200);
        assert_eq!(d.size_factors.len(), 200);
        for ((i, j), &m) in d.data.truth.structural_zero_mask.indexed_iter() {
            if m {
                assert_eq!(d.data.counts.counts()[[i, j]], 0);
            }
        }
    }
}
