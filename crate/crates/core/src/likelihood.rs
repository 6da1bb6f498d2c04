//! Zero-inflated negative binomial kernel and per-feature densities.
//!
//! The NB is parameterised by its mean `λ` and dispersion `φ`, so that the
//! variance is `λ + λ²/φ`. Everything is evaluated in log space through
//! `ln Γ`; no factorial tables are used.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use crate::data::{CovariateMatrix, GroupAssignment, Hyperparameters};
use crate::error::{Error, Result};
use crate::normalization::SizeFactors;

/// Parameters of one feature.
///
/// `mu_k` holds one entry per group (index `k - 1`); the reference group's
/// entry is always zero, and all entries are zero when `gamma` is false.
/// `beta[r]` is zero whenever `delta[r]` is false.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxonParams {
    pub(crate) mu0: f64,
    pub(crate) mu_k: Vec<f64>,
    pub(crate) beta: Vec<f64>,
    pub(crate) phi: f64,
    pub(crate) gamma: bool,
    pub(crate) delta: Vec<bool>,
    pub(crate) reference: usize,
}

impl TaxonParams {
    pub fn new(
        mu0: f64,
        mu_k: Vec<f64>,
        beta: Vec<f64>,
        phi: f64,
        gamma: bool,
        delta: Vec<bool>,
        reference: usize,
    ) -> Result<Self> {
        let p = Self { mu0, mu_k, beta, phi, gamma, delta, reference };
        p.check()?;
        Ok(p)
    }

    /// Feature with every shift and effect switched off.
    pub fn null(mu0: f64, phi: f64, n_groups: usize, n_covariates: usize, reference: usize) -> Result<Self> {
        Self::new(
            mu0,
            vec![0.0; n_groups],
            vec![0.0; n_covariates],
            phi,
            false,
            vec![false; n_covariates],
            reference,
        )
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.reference == 0 || self.reference > self.mu_k.len() {
            return Err(Error::Invariant(format!(
                "reference group {} outside 1..={}",
                self.reference,
                self.mu_k.len()
            )));
        }
        if self.mu_k[self.reference - 1] != 0.0 {
            return Err(Error::Invariant("reference group shift must be zero".into()));
        }
        if !self.gamma && self.mu_k.iter().any(|&m| m != 0.0) {
            return Err(Error::Invariant("group shifts must be zero when gamma = 0".into()));
        }
        if self.beta.len() != self.delta.len() {
            return Err(Error::Invariant("beta and delta lengths differ".into()));
        }
        if self.beta.iter().zip(&self.delta).any(|(&b, &d)| !d && b != 0.0) {
            return Err(Error::Invariant("covariate effect must be zero when delta = 0".into()));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::Invariant(format!("dispersion must be positive, got {}", self.phi)));
        }
        if !self.mu0.is_finite() || self.mu_k.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(Error::Invariant("non-finite location parameter".into()));
        }
        Ok(())
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn mu_k(&self) -> &[f64] {
        &self.mu_k
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn gamma(&self) -> bool {
        self.gamma
    }

    pub fn delta(&self) -> &[bool] {
        &self.delta
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    /// Linear predictor `log α` for a sample in `group` (1-based).
    pub fn log_alpha(&self, x_row: &[f64], group: usize) -> f64 {
        let shift = if self.gamma { self.mu_k[group - 1] } else { 0.0 };
        let xb: f64 = x_row.iter().zip(&self.beta).map(|(x, b)| x * b).sum();
        self.mu0 + shift + xb
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `log NB(y; λ, φ)`.
pub fn nb_log_pmf(y: u64, lambda: f64, phi: f64) -> Result<f64> {
    check_positive("lambda", lambda)?;
    check_positive("phi", phi)?;
    Ok(nb_log_pmf_unchecked(y, lambda, phi))
}

pub(crate) fn nb_log_pmf_unchecked(y: u64, lambda: f64, phi: f64) -> f64 {
    let yf = y as f64;
    let log_zero_mass = -phi * (lambda / phi).ln_1p();
    let tail = if y == 0 {
        0.0
    } else {
        ln_gamma(yf + phi) - ln_gamma(phi) - ln_gamma(yf + 1.0) - yf * (phi / lambda).ln_1p()
    };
    log_zero_mass + tail
}

/// `log[π·I(y = 0) + (1 − π)·NB(y; λ, φ)]`.
pub fn zinb_log_pmf(y: u64, pi: f64, lambda: f64, phi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::Domain(format!("pi must be in [0, 1], got {pi}")));
    }
    let nb = nb_log_pmf(y, lambda, phi)?;
    Ok(if y == 0 {
        if pi == 0.0 {
            nb
        } else {
            // log(π + (1-π) e^nb) computed without leaving log space
            let (a, b) = (pi.ln(), (-pi).ln_1p() + nb);
            let m = a.max(b);
            m + ((a - m).exp() + (b - m).exp()).ln()
        }
    } else {
        (-pi).ln_1p() + nb
    })
}

/// Normalised abundance `α = exp(μ₀ + γ·μ_k + x·β)`; the NB mean of a sample
/// is its size factor times `α`.
pub fn mean_alpha(params: &TaxonParams, x_row: &[f64], group: usize) -> f64 {
    params.log_alpha(x_row, group).exp()
}

/// Log-likelihood of one feature's counts, summed over samples whose
/// zero-inflation indicator is off.
pub fn taxon_log_lik(
    y_col: &[u64],
    r_col: &[bool],
    params: &TaxonParams,
    size_factors: &SizeFactors,
    covariates: &CovariateMatrix,
    groups: &GroupAssignment,
) -> Result<f64> {
    let n = y_col.len();
    if r_col.len() != n || size_factors.len() != n || covariates.n_samples() != n || groups.len() != n {
        return Err(Error::DimensionMismatch("taxon_log_lik inputs disagree on n".into()));
    }
    if covariates.n_covariates() != params.beta.len() {
        return Err(Error::DimensionMismatch("covariate count differs from beta length".into()));
    }
    let x = covariates.values();
    let mut total = 0.0;
    for i in 0..n {
        if r_col[i] {
            if y_col[i] != 0 {
                return Err(Error::InconsistentZeroIndicator { sample: i });
            }
            continue;
        }
        let row = x.row(i);
        let log_alpha = params.log_alpha(row.as_slice().expect("standard layout"), groups.labels()[i]);
        let lambda = size_factors.values()[i] * log_alpha.exp();
        total += nb_log_pmf(y_col[i], lambda, params.phi)?;
    }
    Ok(total)
}

/// Normal log density with the given variance.
pub fn log_normal_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean).powi(2) / var)
}

/// Gamma(shape, rate) log density.
pub fn log_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Marginal prior of a slab coefficient after integrating its normal variance
/// against `IG(a, b)`: a Student-t with `2a` degrees of freedom and squared
/// scale `b / a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabPrior {
    a: f64,
    b: f64,
    log_norm: f64,
}

impl SlabPrior {
    pub fn new(a: f64, b: f64) -> Self {
        let log_norm = ln_gamma(a + 0.5) - ln_gamma(a) - 0.5 * (2.0 * PI * b).ln();
        Self { a, b, log_norm }
    }

    pub fn from_hyper(hp: &Hyperparameters) -> Self {
        Self::new(hp.a_t, hp.b_t)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.log_norm - (self.a + 0.5) * (x * x / (2.0 * self.b)).ln_1p()
    }

    pub fn dof(&self) -> f64 {
        2.0 * self.a
    }

    pub fn scale(&self) -> f64 {
        (self.b / self.a).sqrt()
    }
}

/// Log prior contributions of one feature, split by parameter block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorTerms {
    pub mu0: f64,
    pub mu_k: f64,
    pub beta: f64,
    pub phi: f64,
}

impl PriorTerms {
    pub fn total(&self) -> f64 {
        self.mu0 + self.mu_k + self.beta + self.phi
    }
}

pub fn log_prior_terms(params: &TaxonParams, hp: &Hyperparameters) -> PriorTerms {
    let slab = SlabPrior::from_hyper(hp);
    let mu_k = if params.gamma {
        params
            .mu_k
            .iter()
            .enumerate()
            .filter(|&(k, _)| k + 1 != params.reference)
            .map(|(_, &m)| slab.ln_pdf(m))
            .sum()
    } else {
        0.0
    };
    let beta = params
        .beta
        .iter()
        .zip(&params.delta)
        .filter(|(_, &d)| d)
        .map(|(&b, _)| slab.ln_pdf(b))
        .sum();
    PriorTerms {
        mu0: log_normal_density(params.mu0, 0.0, hp.sigma0_sq),
        mu_k,
        beta,
        phi: log_gamma_density(params.phi, hp.a_phi, hp.b_phi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    /// log NB via the pmf recurrence P(y) = P(y-1)·(y-1+φ)/y·λ/(λ+φ),
    /// which never touches the Gamma function.
    fn nb_recurrence(y: u64, lambda: f64, phi: f64) -> f64 {
        let mut lp = phi * (phi / (lambda + phi)).ln();
        let step = (lambda / (lambda + phi)).ln();
        for m in 1..=y {
            lp += ((m - 1) as f64 + phi).ln() - (m as f64).ln() + step;
        }
        lp
    }

    #[test]
    fn nb_small_values() {
        assert!((nb_log_pmf(0, 1.0, 1.0).unwrap() - 0.5f64.ln()).abs() < 1e-14);
        assert!((nb_log_pmf(2, 1.0, 1.0).unwrap() - 0.125f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn nb_matches_recurrence_up_to_170() {
        for &(lambda, phi) in &[(0.3, 0.5), (5.0, 1.0), (40.0, 3.5), (150.0, 20.0), (2.0, 1000.0)] {
            for y in 0..=170 {
                let got = nb_log_pmf(y, lambda, phi).unwrap();
                let want = nb_recurrence(y, lambda, phi);
                assert!((got - want).abs() < 1e-10, "y={y} λ={lambda} φ={phi}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn nb_huge_counts_stay_finite() {
        for &y in &[1_000_000u64, 60_000_000, 1_000_000_000] {
            let lp = nb_log_pmf(y, y as f64, 0.7).unwrap();
            assert!(lp.is_finite() && lp < 0.0);
        }
    }

    #[test]
    fn nb_variance_matches_parameterisation() {
        let (lambda, phi) = (6.0, 2.5);
        let (mut m1, mut m2) = (0.0, 0.0);
        for y in 0..2000u64 {
            let p = nb_log_pmf(y, lambda, phi).unwrap().exp();
            m1 += p * y as f64;
            m2 += p * (y * y) as f64;
        }
        assert!((m1 - lambda).abs() < 1e-9);
        assert!((m2 - m1 * m1 - (lambda + lambda * lambda / phi)).abs() < 1e-7);
    }

    #[test]
    fn nb_domain_errors() {
        assert!(nb_log_pmf(1, 0.0, 1.0).is_err());
        assert!(nb_log_pmf(1, 1.0, -2.0).is_err());
        assert!(zinb_log_pmf(0, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn zinb_examples() {
        assert!((zinb_log_pmf(0, 0.5, 1.0, 1.0).unwrap() - 0.75f64.ln()).abs() < 1e-14);
        let got = zinb_log_pmf(3, 0.3, 2.0, 1.5).unwrap();
        let want = 0.7f64.ln() + nb_log_pmf(3, 2.0, 1.5).unwrap();
        assert!((got - want).abs() < 1e-14);
        assert_eq!(zinb_log_pmf(0, 1.0, 2.0, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn log_alpha_arithmetic() {
        let p = TaxonParams::null(0.0, 1.0, 2, 1, 1).unwrap();
        assert_eq!(mean_alpha(&p, &[0.0], 2), 1.0);
        let p = TaxonParams::new(1.0, vec![0.0, 2.0], vec![-0.5], 1.0, true, vec![true], 1).unwrap();
        assert!((mean_alpha(&p, &[1.0], 2) - 2.5f64.exp()).abs() < 1e-12);
        assert!((mean_alpha(&p, &[1.0], 1) - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn invariant_violations_rejected() {
        assert!(TaxonParams::new(0.0, vec![0.0, 2.0], vec![], 1.0, false, vec![], 1).is_err());
        assert!(TaxonParams::new(0.0, vec![1.0, 2.0], vec![], 1.0, true, vec![], 1).is_err());
        assert!(TaxonParams::new(0.0, vec![0.0], vec![0.3], 1.0, false, vec![false], 1).is_err());
        assert!(TaxonParams::new(0.0, vec![0.0], vec![], 0.0, false, vec![], 1).is_err());
    }

    #[test]
    fn gamma_off_ignores_group() {
        let p = TaxonParams::new(0.7, vec![0.0, 0.0, 0.0], vec![0.2], 3.0, false, vec![true], 1).unwrap();
        let a: Vec<f64> = (1..=3).map(|g| mean_alpha(&p, &[1.5], g)).collect();
        assert!(a.iter().all(|&v| v == a[0]));
    }

    fn one_sample_inputs(n: usize) -> (SizeFactors, CovariateMatrix, GroupAssignment) {
        (
            SizeFactors::from_raw(&vec![1.0; n], None).unwrap(),
            CovariateMatrix::empty(n),
            GroupAssignment::new(vec![1; n]).unwrap(),
        )
    }

    #[test]
    fn taxon_log_lik_trivial_cases() {
        let p = TaxonParams::null(0.0, 1.0, 1, 0, 1).unwrap();
        let (s, x, g) = one_sample_inputs(1);
        let ll = taxon_log_lik(&[0], &[false], &p, &s, &x, &g).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-14);
        let (s, x, g) = one_sample_inputs(3);
        assert_eq!(taxon_log_lik(&[0, 0, 0], &[true; 3], &p, &s, &x, &g).unwrap(), 0.0);
        assert_eq!(
            taxon_log_lik(&[0, 4, 0], &[true; 3], &p, &s, &x, &g),
            Err(Error::InconsistentZeroIndicator { sample: 1 })
        );
    }

    #[test]
    fn taxon_log_lik_matches_naive_product() {
        let y = [0u64, 3, 11, 0, 7, 1];
        let r = [true, false, false, false, false, false];
        let xv = Array2::from_shape_vec((6, 2), vec![0.1, -1.0, 0.4, 0.3, -0.2, 1.2, 0.9, 0.0, -1.1, 0.5, 0.6, -0.4]).unwrap();
        let x = CovariateMatrix::new(xv.clone(), vec!["a".into(), "b".into()]).unwrap();
        let g = GroupAssignment::new(vec![1, 2, 1, 2, 1, 2]).unwrap();
        let s = SizeFactors::from_raw(&[0.8, 1.3, 1.0, 0.9, 1.1, 1.2], None).unwrap();
        let p = TaxonParams::new(1.2, vec![0.0, -0.7], vec![0.4, 0.0], 2.2, true, vec![true, false], 1).unwrap();
        let ll = taxon_log_lik(&y, &r, &p, &s, &x, &g).unwrap();

        let mut prod = 1.0;
        for i in 0..6 {
            if r[i] {
                continue;
            }
            let shift = if g.labels()[i] == 2 { -0.7 } else { 0.0 };
            let lambda = s.values()[i] * (1.2 + shift + 0.4 * xv[[i, 0]]).exp();
            prod *= nb_recurrence(y[i], lambda, 2.2).exp();
        }
        assert!((ll - prod.ln()).abs() < 1e-10);
    }

    #[test]
    fn taxon_log_lik_is_additive() {
        let y = [2u64, 0, 5, 9];
        let r = [false, true, false, false];
        let p = TaxonParams::null(1.0, 1.5, 1, 0, 1).unwrap();
        let (s, x, g) = one_sample_inputs(4);
        let all = taxon_log_lik(&y, &r, &p, &s, &x, &g).unwrap();
        let (s2, x2, g2) = one_sample_inputs(2);
        let head = taxon_log_lik(&y[..2], &r[..2], &p, &s2, &x2, &g2).unwrap();
        let tail = taxon_log_lik(&y[2..], &r[2..], &p, &s2, &x2, &g2).unwrap();
        assert!((all - head - tail).abs() < 1e-12);
    }

    #[test]
    fn gamma_prior_rate_parameterisation() {
        let v = log_gamma_density(100.0, 1.0, 0.01);
        assert!((v - (0.01f64.ln() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn prior_terms_zero_for_inactive_blocks() {
        let hp = Hyperparameters::default();
        let p = TaxonParams::null(0.0, 100.0, 2, 3, 1).unwrap();
        let t = log_prior_terms(&p, &hp);
        assert_eq!(t.mu_k, 0.0);
        assert_eq!(t.beta, 0.0);
        assert!((t.mu0 - log_normal_density(0.0, 0.0, 100.0)).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn nb_matches_recurrence(y in 0u64..300, lambda in 0.01f64..200.0, phi in 0.05f64..500.0) {
            let got = nb_log_pmf(y, lambda, phi).unwrap();
            let want = nb_recurrence(y, lambda, phi);
            proptest::prop_assert!((got - want).abs() < 1e-8 * want.abs().max(1.0), "{got} vs {want}");
        }

        #[test]
        fn zero_inflation_only_moves_mass_to_zero(y in 1u64..100, pi in 0.0f64..0.99, lambda in 0.1f64..50.0, phi in 0.1f64..50.0) {
            let nb = nb_log_pmf(y, lambda, phi).unwrap();
            let zinb = zinb_log_pmf(y, pi, lambda, phi).unwrap();
            proptest::prop_assert!((zinb - nb - (1.0 - pi).ln()).abs() < 1e-10);
            proptest::prop_assert!(zinb_log_pmf(0, pi, lambda, phi).unwrap() >= nb_log_pmf(0, lambda, phi).unwrap() + (1.0 - pi).ln() - 1e-12);
        }
    }
}
