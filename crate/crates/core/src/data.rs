//! Immutable data containers shared by every stage of the pipeline.
//!
//! Counts are `n × p` (samples in rows), covariates `n × R`, and group labels
//! are 1-based. A [`Dataset`] can only be obtained through [`validate_inputs`],
//! so downstream code may rely on aligned dimensions and on every feature
//! carrying at least one nonzero count.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate {what} id `{id}`")));
        }
    }
    Ok(())
}

/// Observed counts, samples in rows and features in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    counts: Array2<u64>,
    sample_ids: Vec<String>,
    feature_ids: Vec<String>,
}

impl CountMatrix {
    pub fn new(counts: Array2<u64>, sample_ids: Vec<String>, feature_ids: Vec<String>) -> Result<Self> {
        let (n, p) = counts.dim();
        if sample_ids.len() != n || feature_ids.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "count matrix is {n}x{p} but {} sample ids and {} feature ids were given",
                sample_ids.len(),
                feature_ids.len()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 samples, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidInput("count matrix has no features".into()));
        }
        check_unique(&sample_ids, "sample")?;
        check_unique(&feature_ids, "feature")?;
        Ok(Self { counts, sample_ids, feature_ids })
    }

    /// Build from row-major nested vectors with generated ids (`s1..`, `f1..`).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch("ragged count rows".into()));
        }
        let flat: Vec<u64> = rows.iter().flatten().copied().collect();
        let counts = Array2::from_shape_vec((n, p), flat).expect("shape checked");
        Self::new(
            counts,
            (1..=n).map(|i| format!("s{i}")).collect(),
            (1..=p).map(|j| format!("f{j}")).collect(),
        )
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn n_samples(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.counts.ncols()
    }

    pub fn sample(&self, i: usize) -> ArrayView1<'_, u64> {
        self.counts.row(i)
    }

    pub fn feature(&self, j: usize) -> ArrayView1<'_, u64> {
        self.counts.column(j)
    }

    /// Keep the listed feature columns, in the given order. May yield zero
    /// features; such a matrix is rejected later by [`validate_inputs`].
    pub fn select_features(&self, keep: &[usize]) -> Self {
        Self {
            counts: self.counts.select(Axis(1), keep),
            sample_ids: self.sample_ids.clone(),
            feature_ids: keep.iter().map(|&j| self.feature_ids[j].clone()).collect(),
        }
    }
}

/// Real-valued sample covariates, `n × R`. `R = 0` is allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    values: Array2<f64>,
    covariate_ids: Vec<String>,
    standardized: bool,
}

impl CovariateMatrix {
    pub fn new(values: Array2<f64>, covariate_ids: Vec<String>) -> Result<Self> {
        if covariate_ids.len() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "covariate matrix has {} columns but {} ids",
                values.ncols(),
                covariate_ids.len()
            )));
        }
        if let Some(((i, r), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "covariate `{}` has a missing or non-finite value in row {}",
                covariate_ids[r],
                i + 1
            )));
        }
        check_unique(&covariate_ids, "covariate")?;
        Ok(Self { values, covariate_ids, standardized: false })
    }

    /// An `n × 0` matrix for fits without covariates.
    pub fn empty(n: usize) -> Self {
        Self { values: Array2::zeros((n, 0)), covariate_ids: Vec::new(), standardized: true }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn covariate_ids(&self) -> &[String] {
        &self.covariate_ids
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), rows),
            covariate_ids: self.covariate_ids.clone(),
            standardized: false,
        }
    }
}

/// 1-based group labels with a designated reference group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignment {
    labels: Vec<usize>,
    n_groups: usize,
    reference: usize,
}

impl GroupAssignment {
    /// Groups are `1..=max(labels)`; every one of them must be populated.
    /// The reference group defaults to 1.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let n_groups = labels.iter().copied().max().unwrap_or(0);
        if labels.contains(&0) {
            return Err(Error::InvalidInput("group labels must be >= 1".into()));
        }
        if n_groups == 0 {
            return Err(Error::InvalidInput("no group labels".into()));
        }
        let mut sizes = vec![0usize; n_groups];
        for &l in &labels {
            sizes[l - 1] += 1;
        }
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInput(format!("group {} has no samples", k + 1)));
        }
        Ok(Self { labels, n_groups, reference: 1 })
    }

    pub fn with_reference(mut self, reference: usize) -> Result<Self> {
        if reference == 0 || reference > self.n_groups {
            return Err(Error::InvalidInput(format!(
                "reference group {reference} outside 1..={}",
                self.n_groups
            )));
        }
        self.reference = reference;
        Ok(self)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_groups];
        for &l in &self.labels {
            sizes[l - 1] += 1;
        }
        sizes
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::new(rows.iter().map(|&i| self.labels[i]).collect())?.with_reference(self.reference)
    }
}

/// Prior hyperparameters. Gamma priors use the shape–rate convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    /// Beta prior on the zero-inflation probability.
    pub a_pi: f64,
    pub b_pi: f64,
    /// Beta prior on the discriminating-feature rate (γ).
    pub a_omega: f64,
    pub b_omega: f64,
    /// Beta prior on the association rate (δ).
    pub a_p: f64,
    pub b_p: f64,
    /// Gamma(shape, rate) prior on the dispersion φ.
    pub a_phi: f64,
    pub b_phi: f64,
    /// Variance of the normal prior on the feature baseline μ₀.
    pub sigma0_sq: f64,
    /// Inverse-gamma shape/scale shared by the group-shift and covariate-effect
    /// variances; both are integrated out into Student-t priors.
    pub a_t: f64,
    pub b_t: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            a_pi: 1.0,
            b_pi: 1.0,
            a_omega: 0.2,
            b_omega: 1.8,
            a_p: 0.4,
            b_p: 0.6,
            a_phi: 1.0,
            b_phi: 0.01,
            sigma0_sq: 100.0,
            a_t: 2.0,
            b_t: 10.0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("a_pi", self.a_pi),
            ("b_pi", self.b_pi),
            ("a_omega", self.a_omega),
            ("b_omega", self.b_omega),
            ("a_p", self.a_p),
            ("b_p", self.b_p),
            ("a_phi", self.a_phi),
            ("b_phi", self.b_phi),
            ("sigma0_sq", self.sigma0_sq),
            ("a_t", self.a_t),
            ("b_t", self.b_t),
        ];
        positive_fields(&fields)
    }
}

/// Random-walk standard deviations for the Metropolis–Hastings moves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalScales {
    pub tau_mu0: f64,
    /// Add-move proposal s.d. for group shifts; within-model walks use half.
    pub tau_mu: f64,
    /// Add-move proposal s.d. for covariate effects; within-model walks use half.
    pub tau_beta: f64,
    pub tau_phi: f64,
}

impl Default for ProposalScales {
    fn default() -> Self {
        Self { tau_mu0: 0.5, tau_mu: 1.0, tau_beta: 1.0, tau_phi: 1.0 }
    }
}

impl ProposalScales {
    pub fn validate(&self) -> Result<()> {
        positive_fields(&[
            ("tau_mu0", self.tau_mu0),
            ("tau_mu", self.tau_mu),
            ("tau_beta", self.tau_beta),
            ("tau_phi", self.tau_phi),
        ])
    }
}

fn positive_fields(fields: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in fields {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok(())
}

/// Counts, covariates and groups that passed [`validate_inputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    counts: CountMatrix,
    covariates: CovariateMatrix,
    groups: GroupAssignment,
}

impl Dataset {
    pub fn counts(&self) -> &CountMatrix {
        &self.counts
    }

    pub fn covariates(&self) -> &CovariateMatrix {
        &self.covariates
    }

    pub fn groups(&self) -> &GroupAssignment {
        &self.groups
    }

    pub fn n_samples(&self) -> usize {
        self.counts.n_samples()
    }

    pub fn n_features(&self) -> usize {
        self.counts.n_features()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.n_covariates()
    }

    /// Replace the covariates by their standardized version.
    pub fn standardized(self) -> Result<Self> {
        let covariates = standardize_covariates(&self.covariates)?;
        Ok(Self { covariates, ..self })
    }
}

pub fn validate_inputs(
    counts: CountMatrix,
    covariates: CovariateMatrix,
    groups: GroupAssignment,
) -> Result<Dataset> {
    let n = counts.n_samples();
    if covariates.n_samples() != n || groups.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "counts have {n} samples, covariates {}, groups {}",
            covariates.n_samples(),
            groups.len()
        )));
    }
    if counts.n_features() == 0 {
        return Err(Error::InvalidInput("no features left to analyse".into()));
    }
    for (r, col) in covariates.values().columns().into_iter().enumerate() {
        if column_sd(col).1 <= constant_tolerance(col) {
            return Err(Error::ConstantCovariate(covariates.covariate_ids()[r].clone()));
        }
    }
    for (j, col) in counts.counts().columns().into_iter().enumerate() {
        if col.iter().all(|&y| y == 0) {
            return Err(Error::AllZeroFeature(counts.feature_ids()[j].clone()));
        }
    }
    Ok(Dataset { counts, covariates, groups })
}

fn column_sd(col: ArrayView1<'_, f64>) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn constant_tolerance(col: ArrayView1<'_, f64>) -> f64 {
    let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-12 * scale.max(1.0)
}

/// Centre each column and scale it to unit sample standard deviation.
pub fn standardize_covariates(covariates: &CovariateMatrix) -> Result<CovariateMatrix> {
    let mut values = covariates.values.clone();
    for (r, mut col) in values.columns_mut().into_iter().enumerate() {
        let (mean, sd) = column_sd(col.view());
        if sd <= constant_tolerance(col.view()) {
            return Err(Error::ConstantCovariate(covariates.covariate_ids[r].clone()));
        }
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    Ok(CovariateMatrix {
        values,
        covariate_ids: covariates.covariate_ids.clone(),
        standardized: true,
    })
}

/// Keep feature `j` iff at least `min_groups` groups each contain at least
/// `min_count` samples with a nonzero count for `j`. Column order is kept.
pub fn filter_low_abundance(
    counts: &CountMatrix,
    groups: &GroupAssignment,
    min_count: usize,
    min_groups: usize,
) -> Result<CountMatrix> {
    if groups.len() != counts.n_samples() {
        return Err(Error::DimensionMismatch(format!(
            "counts have {} samples but {} group labels",
            counts.n_samples(),
            groups.len()
        )));
    }
    if min_count == 0 || min_groups == 0 || min_groups > groups.n_groups() {
        return Err(Error::InvalidInput(format!(
            "filter needs min_count >= 1 and min_groups in 1..={}",
            groups.n_groups()
        )));
    }
    let keep: Vec<usize> = (0..counts.n_features())
        .filter(|&j| {
            let mut nonzero = vec![0usize; groups.n_groups()];
            for (y, &g) in counts.feature(j).iter().zip(groups.labels()) {
                if *y > 0 {
                    nonzero[g - 1] += 1;
                }
            }
            nonzero.iter().filter(|&&c| c >= min_count).count() >= min_groups
        })
        .collect();
    Ok(counts.select_features(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cov(values: Array2<f64>) -> CovariateMatrix {
        let ids = (1..=values.ncols()).map(|r| format!("x{r}")).collect();
        CovariateMatrix::new(values, ids).unwrap()
    }

    #[test]
    fn accepts_consistent_bundle() {
        let counts = CountMatrix::from_rows(&[vec![1, 0], vec![0, 3], vec![4, 5]]).unwrap();
        let x = cov(array![[0.1], [0.5], [-0.3]]);
        let g = GroupAssignment::new(vec![1, 1, 2]).unwrap();
        let d = validate_inputs(counts, x, g).unwrap();
        assert_eq!((d.n_samples(), d.n_features(), d.n_covariates()), (3, 2, 1));
    }

    #[test]
    fn rejects_row_mismatch() {
        let counts = CountMatrix::from_rows(&[vec![1, 0], vec![0, 3], vec![4, 5]]).unwrap();
        let x = cov(array![[0.1], [0.5], [-0.3], [1.0]]);
        let g = GroupAssignment::new(vec![1, 1, 2]).unwrap();
        assert!(matches!(validate_inputs(counts, x, g), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rejects_all_zero_feature_by_name() {
        let counts = CountMatrix::from_rows(&[vec![1, 0], vec![2, 0], vec![4, 0]]).unwrap();
        let x = cov(array![[0.1], [0.5], [-0.3]]);
        let g = GroupAssignment::new(vec![1, 1, 2]).unwrap();
        assert_eq!(validate_inputs(counts, x, g), Err(Error::AllZeroFeature("f2".into())));
    }

    #[test]
    fn rejects_constant_covariate() {
        let counts = CountMatrix::from_rows(&[vec![1, 1], vec![2, 1], vec![4, 1]]).unwrap();
        let x = cov(array![[5.0], [5.0], [5.0]]);
        let g = GroupAssignment::new(vec![1, 1, 2]).unwrap();
        assert_eq!(validate_inputs(counts, x, g), Err(Error::ConstantCovariate("x1".into())));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let c = CountMatrix::new(
            Array2::zeros((2, 1)),
            vec!["a".into(), "a".into()],
            vec!["f".into()],
        );
        assert!(c.is_err());
    }

    #[test]
    fn group_invariants() {
        assert!(GroupAssignment::new(vec![1, 3, 3]).is_err());
        assert!(GroupAssignment::new(vec![0, 1]).is_err());
        let g = GroupAssignment::new(vec![2, 1, 2]).unwrap();
        assert_eq!(g.n_groups(), 2);
        assert_eq!(g.reference(), 1);
        assert!(g.clone().with_reference(3).is_err());
        assert_eq!(g.with_reference(2).unwrap().reference(), 2);
    }

    #[test]
    fn standardize_simple_column() {
        let s = standardize_covariates(&cov(array![[1.0], [2.0], [3.0]])).unwrap();
        assert!(s.is_standardized());
        for (got, want) in s.values().iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn standardize_is_idempotent() {
        let x = cov(array![[0.3, 10.0], [2.1, -4.0], [7.5, 3.3], [-1.0, 0.2]]);
        let once = standardize_covariates(&x).unwrap();
        let twice = standardize_covariates(&once).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_rejects_constant() {
        let err = standardize_covariates(&cov(array![[5.0], [5.0], [5.0]])).unwrap_err();
        assert_eq!(err, Error::ConstantCovariate("x1".into()));
    }

    #[test]
    fn filter_keeps_feature_present_in_both_groups() {
        // 10 samples, 5 per group; f1 nonzero everywhere, f2 only in group 1.
        let rows: Vec<Vec<u64>> = (0..10).map(|i| vec![3, if i < 5 { 7 } else { 0 }]).collect();
        let counts = CountMatrix::from_rows(&rows).unwrap();
        let g = GroupAssignment::new((0..10).map(|i| if i < 5 { 1 } else { 2 }).collect()).unwrap();
        let kept = filter_low_abundance(&counts, &g, 2, 2).unwrap();
        assert_eq!(kept.feature_ids(), &["f1".to_string()]);
        let kept = filter_low_abundance(&counts, &g, 2, 1).unwrap();
        assert_eq!(kept.n_features(), 2);
    }

    #[test]
    fn filter_counts_nonzero_samples_not_totals() {
        // One huge count in each group is still only one observation.
        let rows = vec![vec![1000], vec![0], vec![1000], vec![0]];
        let counts = CountMatrix::from_rows(&rows).unwrap();
        let g = GroupAssignment::new(vec![1, 1, 2, 2]).unwrap();
        assert_eq!(filter_low_abundance(&counts, &g, 2, 2).unwrap().n_features(), 0);
    }

    #[test]
    fn filter_argument_checks() {
        let counts = CountMatrix::from_rows(&[vec![1], vec![2]]).unwrap();
        let g = GroupAssignment::new(vec![1, 2]).unwrap();
        assert!(filter_low_abundance(&counts, &g, 0, 1).is_err());
        assert!(filter_low_abundance(&counts, &g, 1, 3).is_err());
    }
}
