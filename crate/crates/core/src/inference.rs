//! Posterior summaries: inclusion probabilities, Bayesian FDR selection,
//! credible intervals and cross-chain agreement.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sampler::{ChainTrace, Moments};
use crate::stats::{pearson, quantile_sorted};

pub const DEFAULT_FDR: f64 = 0.05;
pub const DEFAULT_CONCORDANCE_FLOOR: f64 = 0.95;

/// Outcome of thresholding one PPI vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FdrSelection {
    /// Cutoff on `1 − PPI`; a feature is selected when its rounded
    /// `1 − PPI` is strictly below it.
    pub cutoff: f64,
    /// Smallest selected PPI, `+∞` when nothing is selected.
    pub threshold: f64,
    pub selected: Vec<bool>,
    /// Estimated FDR of the selection (0 when empty).
    pub estimated_fdr: f64,
    /// Set when not even the best feature meets the target.
    pub empty: bool,
}

impl FdrSelection {
    pub fn n_selected(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Largest selection `{j : 1 − PPI_j < c}` whose estimated FDR, the mean of
/// `1 − PPI` over the selection, does not exceed `target`.
pub fn bayesian_fdr_threshold(ppis: &[f64], target: f64) -> Result<FdrSelection> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!("FDR target must lie in (0, 1), got {target}")));
    }
    if let Some(bad) = ppis.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("PPI {bad} outside [0, 1]")));
    }
    let q: Vec<f64> = ppis.iter().map(|&v| round12(1.0 - v)).collect();
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| q[a].total_cmp(&q[b]));

    // scan tie blocks; a selection must contain a whole block
    let (mut sum, mut best_len, mut best_fdr) = (0.0, 0usize, 0.0);
    let mut pos = 0;
    while pos < order.len() {
        let v = q[order[pos]];
        let mut end = pos;
        while end < order.len() && q[order[end]] == v {
            sum += v;
            end += 1;
        }
        let fdr = sum / end as f64;
        if fdr <= target {
            best_len = end;
            best_fdr = fdr;
        }
        pos = end;
    }

    let mut selected = vec![false; ppis.len()];
    for &j in &order[..best_len] {
        selected[j] = true;
    }
    let cutoff = order.get(best_len).map_or(f64::INFINITY, |&j| q[j]);
    let threshold = order[..best_len].iter().map(|&j| ppis[j]).fold(f64::INFINITY, f64::min);
    Ok(FdrSelection { cutoff, threshold, selected, estimated_fdr: best_fdr, empty: best_len == 0 })
}

fn check_compatible(traces: &[ChainTrace]) -> Result<&ChainTrace> {
    let first = traces.first().ok_or(Error::EmptyTrace)?;
    for t in traces {
        if t.n_features() != first.n_features()
            || t.n_covariates() != first.n_covariates()
            || t.n_groups() != first.n_groups()
            || t.reference() != first.reference()
        {
            return Err(Error::DimensionMismatch("chain traces come from different models".into()));
        }
    }
    if traces.iter().all(|t| t.n_draws() == 0) {
        return Err(Error::EmptyTrace);
    }
    Ok(first)
}

/// PPIs pooled over every recorded draw of every chain.
pub fn compute_ppi(traces: &[ChainTrace]) -> Result<(Vec<f64>, Array2<f64>)> {
    let first = check_compatible(traces)?;
    let total: usize = traces.iter().map(|t| t.n_draws()).sum();
    let mut gamma = vec![0u64; first.n_features()];
    let mut delta = Array2::<u64>::zeros(first.delta_sums().dim());
    for t in traces {
        for (g, s) in gamma.iter_mut().zip(t.gamma_sums()) {
            *g += s;
        }
        delta += t.delta_sums();
    }
    let n = total as f64;
    Ok((gamma.iter().map(|&s| s as f64 / n).collect(), delta.mapv(|s| s as f64 / n)))
}

/// γ PPIs of a single chain.
pub fn chain_ppi_gamma(trace: &ChainTrace) -> Vec<f64> {
    let n = trace.n_draws() as f64;
    trace.gamma_sums().iter().map(|&s| s as f64 / n).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub feature_ids: Vec<String>,
    pub covariate_ids: Vec<String>,
    pub reference: usize,
    pub n_draws: usize,
    pub ppi_gamma: Vec<f64>,
    /// `R × p`
    pub ppi_delta: Array2<f64>,
    pub selected_gamma: Vec<bool>,
    pub selected_delta: Array2<bool>,
    pub mu0_mean: Vec<f64>,
    pub mu0_sd: Vec<f64>,
    /// `K × p`; rows follow the 1-based group labels
    pub mu_k_mean: Array2<f64>,
    pub mu_k_lower: Array2<f64>,
    pub mu_k_upper: Array2<f64>,
    pub beta_mean: Array2<f64>,
    pub beta_sd: Array2<f64>,
    pub phi_mean: Vec<f64>,
    pub phi_sd: Vec<f64>,
    pub fdr_target: f64,
    pub threshold_gamma: f64,
    pub threshold_delta: f64,
    pub empty_gamma: bool,
    pub empty_delta: bool,
}

fn pooled_moments(traces: &[ChainTrace], get: fn(&ChainTrace) -> &Moments) -> (Array2<f64>, Array2<f64>) {
    let mut acc = get(&traces[0]).clone();
    for t in &traces[1..] {
        acc.merge(get(t));
    }
    let n = traces.iter().map(|t| t.n_draws()).sum::<usize>() as f64;
    let mean = acc.sum() / n;
    let sd = ndarray::Zip::from(acc.sum_sq())
        .and(&mean)
        .map_collect(|&ss, &m| (ss / n - m * m).max(0.0).sqrt());
    (mean, sd)
}

/// Posterior summary with γ and δ thresholded separately at `fdr_target`.
///
/// Shift means are model-averaged (draws with `γ = 0` count as 0) and the
/// 95% equal-tailed intervals come from the same pooled draws. Bounds are
/// widened to contain the mean when the averaging pushes it outside.
pub fn summarize(
    traces: &[ChainTrace],
    fdr_target: f64,
    feature_ids: &[String],
    covariate_ids: &[String],
) -> Result<PosteriorSummary> {
    let first = check_compatible(traces)?;
    let (p, r, k) = (first.n_features(), first.n_covariates(), first.n_groups());
    if feature_ids.len() != p || covariate_ids.len() != r {
        return Err(Error::DimensionMismatch("identifier lists do not match the traces".into()));
    }
    let (ppi_gamma, ppi_delta) = compute_ppi(traces)?;
    let sel_gamma = bayesian_fdr_threshold(&ppi_gamma, fdr_target)?;
    let flat: Vec<f64> = ppi_delta.iter().copied().collect();
    let sel_delta = bayesian_fdr_threshold(&flat, fdr_target)?;
    let selected_delta = Array2::from_shape_vec((r, p), sel_delta.selected.clone())
        .map_err(|e| Error::Invariant(e.to_string()))?;

    let (mu0_mean, mu0_sd) = pooled_moments(traces, ChainTrace::mu0_moments);
    let (phi_mean, phi_sd) = pooled_moments(traces, ChainTrace::phi_moments);
    let (beta_mean, beta_sd) = pooled_moments(traces, ChainTrace::beta_moments);
    let (mu_k_mean, _) = pooled_moments(traces, ChainTrace::mu_k_moments);

    let mut mu_k_lower = Array2::zeros((k, p));
    let mut mu_k_upper = Array2::zeros((k, p));
    for g in first.shift_groups() {
        for j in 0..p {
            let mut draws: Vec<f64> = traces.iter().flat_map(|t| t.mu_k_draws(g, j)).collect();
            draws.sort_by(f64::total_cmp);
            let m = mu_k_mean[[g - 1, j]];
            mu_k_lower[[g - 1, j]] = quantile_sorted(&draws, 0.025).min(m);
            mu_k_upper[[g - 1, j]] = quantile_sorted(&draws, 0.975).max(m);
        }
    }

    Ok(PosteriorSummary {
        feature_ids: feature_ids.to_vec(),
        covariate_ids: covariate_ids.to_vec(),
        reference: first.reference(),
        n_draws: traces.iter().map(|t| t.n_draws()).sum(),
        ppi_gamma,
        ppi_delta,
        selected_gamma: sel_gamma.selected,
        selected_delta,
        mu0_mean: mu0_mean.row(0).to_vec(),
        mu0_sd: mu0_sd.row(0).to_vec(),
        mu_k_mean,
        mu_k_lower,
        mu_k_upper,
        beta_mean,
        beta_sd,
        phi_mean: phi_mean.row(0).to_vec(),
        phi_sd: phi_sd.row(0).to_vec(),
        fdr_target,
        threshold_gamma: sel_gamma.threshold,
        threshold_delta: sel_delta.threshold,
        empty_gamma: sel_gamma.empty,
        empty_delta: sel_delta.empty,
    })
}

/// Pairwise PPI correlations between chains.
#[derive(Debug, Clone, PartialEq)]
pub struct Concordance {
    /// `m × m`, NaN where a chain's PPI vector is constant
    pub gamma: Array2<f64>,
    pub delta: Array2<f64>,
    /// chains whose γ-PPI vector has zero variance
    pub degenerate: Vec<usize>,
    pub floor: f64,
    /// every pairwise γ correlation is defined and at least `floor`
    pub converged: bool,
}

impl Concordance {
    /// Smallest off-diagonal γ correlation (NaN if any is undefined).
    pub fn min_gamma(&self) -> f64 {
        let m = self.gamma.nrows();
        let mut out = f64::INFINITY;
        for a in 0..m {
            for b in a + 1..m {
                let v = self.gamma[[a, b]];
                if v.is_nan() {
                    return f64::NAN;
                }
                out = out.min(v);
            }
        }
        out
    }
}

fn correlation_matrix(vectors: &[Vec<f64>]) -> Array2<f64> {
    let m = vectors.len();
    Array2::from_shape_fn((m, m), |(a, b)| {
        if a == b {
            1.0
        } else {
            pearson(&vectors[a], &vectors[b]).unwrap_or(f64::NAN)
        }
    })
}

/// Pearson correlations of per-chain PPI vectors. The verdict uses the γ
/// correlations only.
pub fn chain_concordance(traces: &[ChainTrace], floor: f64) -> Result<Concordance> {
    if traces.len() < 2 {
        return Err(Error::InvalidInput("concordance needs at least two chains".into()));
    }
    check_compatible(traces)?;
    if traces.iter().any(|t| t.n_draws() == 0) {
        return Err(Error::EmptyTrace);
    }
    let gamma_vecs: Vec<Vec<f64>> = traces.iter().map(chain_ppi_gamma).collect();
    let delta_vecs: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| {
            let n = t.n_draws() as f64;
            t.delta_sums().iter().map(|&s| s as f64 / n).collect()
        })
        .collect();
    let degenerate = gamma_vecs
        .iter()
        .enumerate()
        .filter(|(_, v)| v.iter().all(|&x| x == v[0]))
        .map(|(i, _)| i)
        .collect::<Vec<_>>();
    let gamma = correlation_matrix(&gamma_vecs);
    let delta = correlation_matrix(&delta_vecs);
    let converged = degenerate.is_empty() && gamma.iter().all(|&c| c >= floor);
    Ok(Concordance { gamma, delta, degenerate, floor, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Evaluates the FDR formula at every candidate cutoff and keeps the
    /// largest admissible one.
    fn brute_force(ppis: &[f64], target: f64) -> Vec<bool> {
        let q: Vec<f64> = ppis.iter().map(|&v| round12(1.0 - v)).collect();
        let mut cands: Vec<f64> = q.clone();
        cands.push(f64::INFINITY);
        let mut best: Option<(usize, f64)> = None;
        for &c in &cands {
            let sel: Vec<f64> = q.iter().copied().filter(|&x| x < c).collect();
            if sel.is_empty() {
                continue;
            }
            let fdr = sel.iter().sum::<f64>() / sel.len() as f64;
            if fdr <= target && best.map_or(true, |(n, _)| sel.len() > n) {
                best = Some((sel.len(), c));
            }
        }
        match best {
            Some((_, c)) => q.iter().map(|&x| x < c).collect(),
            None => vec![false; ppis.len()],
        }
    }

    #[test]
    fn worked_example_selects_top_two() {
        let s = bayesian_fdr_threshold(&[0.99, 0.98, 0.50], 0.05).unwrap();
        assert_eq!(s.selected, vec![true, true, false]);
        assert!((s.estimated_fdr - 0.015).abs() < 1e-12);
        assert_eq!(s.threshold, 0.98);
    }

    #[test]
    fn all_one_and_all_zero() {
        let s = bayesian_fdr_threshold(&[1.0; 5], 0.05).unwrap();
        assert!(s.selected.iter().all(|&v| v));
        assert_eq!(s.estimated_fdr, 0.0);
        let s = bayesian_fdr_threshold(&[0.0; 5], 0.05).unwrap();
        assert!(s.empty);
        assert_eq!(s.threshold, f64::INFINITY);
    }

    #[test]
    fn ties_are_kept_together() {
        // adding the tied pair at 0.9 pushes the mean to 0.0667
        let s = bayesian_fdr_threshold(&[1.0, 0.9, 0.9], 0.05).unwrap();
        assert_eq!(s.selected, vec![true, false, false]);
    }

    #[test]
    fn bad_target_rejected() {
        assert!(bayesian_fdr_threshold(&[0.5], 0.0).is_err());
        assert!(bayesian_fdr_threshold(&[1.5], 0.05).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(ppis in prop::collection::vec(prop_oneof![0.0f64..=1.0, Just(1.0), Just(0.95)], 0..40),
                               target in 0.01f64..0.5) {
            let s = bayesian_fdr_threshold(&ppis, target).unwrap();
            prop_assert_eq!(s.selected, brute_force(&ppis, target));
        }

        #[test]
        fn monotone_in_target(ppis in prop::collection::vec(0.0f64..=1.0, 1..40), t1 in 0.01f64..0.5, t2 in 0.01f64..0.5) {
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let a = bayesian_fdr_threshold(&ppis, lo).unwrap();
            let b = bayesian_fdr_threshold(&ppis, hi).unwrap();
            for (x, y) in a.selected.iter().zip(&b.selected) {
                prop_assert!(!x || *y);
            }
        }

        #[test]
        fn selection_is_ppi_at_or_above_threshold(ppis in prop::collection::vec(0.0f64..=1.0, 1..40)) {
            let s = bayesian_fdr_threshold(&ppis, 0.1).unwrap();
            for (v, sel) in ppis.iter().zip(&s.selected) {
                prop_assert_eq!(*sel, *v >= s.threshold);
            }
        }
    }
}
