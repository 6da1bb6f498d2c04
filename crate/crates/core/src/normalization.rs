//! Plug-in size-factor estimators.
//!
//! Every estimator produces a raw per-sample scale which is then rescaled so
//! that the log size factors sum to zero. Percentiles use linear
//! interpolation between order statistics (type 7) on the nonzero counts of a
//! sample; medians use the midpoint for even lengths.

use std::fmt;
use std::str::FromStr;

use crate::data::CountMatrix;
use crate::error::{Error, Result};
use crate::stats::{median, midranks, quantile, quantile_sorted};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NormMethod {
    #[default]
    Css,
    Gmpr,
    Q75,
    Tmm,
    Rle,
}

impl NormMethod {
    pub const ALL: [NormMethod; 5] = [Self::Css, Self::Gmpr, Self::Q75, Self::Tmm, Self::Rle];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Css => "css",
            Self::Gmpr => "gmpr",
            Self::Q75 => "q75",
            Self::Tmm => "tmm",
            Self::Rle => "rle",
        }
    }
}

impl fmt::Display for NormMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown normalization method `{s}`")))
    }
}

/// Tuning knobs for the estimators; defaults follow common practice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormOptions {
    /// Percentile (0–100) used by CSS.
    pub l_css: f64,
    /// Fraction trimmed from each tail of the log ratios (TMM).
    pub trim_m: f64,
    /// Fraction trimmed from each tail of the average log abundance (TMM).
    pub trim_a: f64,
    /// Pseudo-count added before RLE.
    pub pseudo: f64,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self { l_css: 50.0, trim_m: 0.30, trim_a: 0.05, pseudo: 1.0 }
    }
}

/// Per-sample size factors whose logs sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeFactors {
    values: Vec<f64>,
    method: Option<NormMethod>,
}

impl SizeFactors {
    /// Rescale positive raw factors to satisfy the log-sum-zero constraint.
    pub fn from_raw(raw: &[f64], method: Option<NormMethod>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidInput("no size factors".into()));
        }
        if let Some(v) = raw.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain(format!("size factor {v} is not positive and finite")));
        }
        let logs: Vec<f64> = raw.iter().map(|v| v.ln()).collect();
        let centre = logs.iter().sum::<f64>() / logs.len() as f64;
        let values = logs.iter().map(|l| (l - centre).exp()).collect();
        Ok(Self { values, method })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn method(&self) -> Option<NormMethod> {
        self.method
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn log_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.ln()).collect()
    }
}

pub fn estimate(counts: &CountMatrix, method: NormMethod, opts: &NormOptions) -> Result<SizeFactors> {
    match method {
        NormMethod::Css => estimate_css(counts, opts.l_css),
        NormMethod::Gmpr => estimate_gmpr(counts),
        NormMethod::Q75 => estimate_q75(counts),
        NormMethod::Tmm => estimate_tmm(counts, opts.trim_m, opts.trim_a),
        NormMethod::Rle => estimate_rle(counts, opts.pseudo),
    }
}

fn sorted_nonzero(counts: &CountMatrix, i: usize) -> Result<Vec<f64>> {
    let mut nz: Vec<f64> = counts.sample(i).iter().filter(|&&y| y > 0).map(|&y| y as f64).collect();
    if nz.is_empty() {
        return Err(Error::EmptySample(counts.sample_ids()[i].clone()));
    }
    nz.sort_by(f64::total_cmp);
    Ok(nz)
}

/// Cumulative sum scaling: sum of a sample's counts up to its `l_css`-th
/// percentile of nonzero counts.
pub fn estimate_css(counts: &CountMatrix, l_css: f64) -> Result<SizeFactors> {
    if !(0.0..=100.0).contains(&l_css) {
        return Err(Error::InvalidInput(format!("l_css must be in [0, 100], got {l_css}")));
    }
    let raw = (0..counts.n_samples())
        .map(|i| {
            let nz = sorted_nonzero(counts, i)?;
            let q = quantile_sorted(&nz, l_css / 100.0);
            Ok(nz.iter().take_while(|&&y| y <= q).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    SizeFactors::from_raw(&raw, Some(NormMethod::Css))
}

/// Upper-quartile scaling on nonzero counts.
pub fn estimate_q75(counts: &CountMatrix) -> Result<SizeFactors> {
    let raw = (0..counts.n_samples())
        .map(|i| Ok(quantile_sorted(&sorted_nonzero(counts, i)?, 0.75)))
        .collect::<Result<Vec<f64>>>()?;
    SizeFactors::from_raw(&raw, Some(NormMethod::Q75))
}

/// Geometric mean of pairwise median count ratios. The self-ratio (1) is part
/// of the geometric mean, so the log factor is the pairwise log-median sum
/// divided by `n`.
pub fn estimate_gmpr(counts: &CountMatrix) -> Result<SizeFactors> {
    let n = counts.n_samples();
    let mut log_ratio = vec![vec![0.0; n]; n];
    let mut ratios = Vec::with_capacity(counts.n_features());
    // each direction separately: with an even number of shared features the
    // median of reciprocals is not the reciprocal of the median
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            ratios.clear();
            for (&ya, &yb) in counts.sample(a).iter().zip(counts.sample(b).iter()) {
                if ya > 0 && yb > 0 {
                    ratios.push(ya as f64 / yb as f64);
                }
            }
            if ratios.is_empty() {
                let ids = counts.sample_ids();
                return Err(Error::NoSharedFeatures(ids[a].clone(), ids[b].clone()));
            }
            log_ratio[a][b] = median(&mut ratios).ln();
        }
    }
    let raw: Vec<f64> = log_ratio.iter().map(|row| (row.iter().sum::<f64>() / n as f64).exp()).collect();
    SizeFactors::from_raw(&raw, Some(NormMethod::Gmpr))
}

/// Trimmed mean of M-values against a reference sample, folded into the
/// library size (the effective library size of edgeR).
pub fn estimate_tmm(counts: &CountMatrix, trim_m: f64, trim_a: f64) -> Result<SizeFactors> {
    if !(0.0..0.5).contains(&trim_m) || !(0.0..0.5).contains(&trim_a) {
        return Err(Error::InvalidInput("TMM trim fractions must be in [0, 0.5)".into()));
    }
    let n = counts.n_samples();
    let lib: Vec<f64> = (0..n).map(|i| counts.sample(i).iter().map(|&y| y as f64).sum()).collect();
    if let Some(i) = lib.iter().position(|&l| l == 0.0) {
        return Err(Error::EmptySample(counts.sample_ids()[i].clone()));
    }
    let reference = tmm_reference(counts, &lib);
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let f = if i == reference {
            1.0
        } else {
            tmm_factor(counts, i, reference, &lib, trim_m, trim_a)?
        };
        raw.push(lib[i] * f);
    }
    SizeFactors::from_raw(&raw, Some(NormMethod::Tmm))
}

/// Sample whose upper quartile of proportions is closest to the mean upper
/// quartile; the first one wins ties.
pub(crate) fn tmm_reference(counts: &CountMatrix, lib: &[f64]) -> usize {
    let uq: Vec<f64> = (0..counts.n_samples())
        .map(|i| {
            let props: Vec<f64> = counts.sample(i).iter().map(|&y| y as f64 / lib[i]).collect();
            quantile(&props, 0.75)
        })
        .collect();
    let avg = uq.iter().sum::<f64>() / uq.len() as f64;
    let mut best = 0;
    for (i, q) in uq.iter().enumerate() {
        if (q - avg).abs() < (uq[best] - avg).abs() {
            best = i;
        }
    }
    best
}

fn tmm_factor(
    counts: &CountMatrix,
    obs: usize,
    reference: usize,
    lib: &[f64],
    trim_m: f64,
    trim_a: f64,
) -> Result<f64> {
    let (n_o, n_r) = (lib[obs], lib[reference]);
    let mut m_vals = Vec::new();
    let mut a_vals = Vec::new();
    let mut var = Vec::new();
    for (&yo, &yr) in counts.sample(obs).iter().zip(counts.sample(reference).iter()) {
        if yo == 0 || yr == 0 {
            continue;
        }
        let (po, pr) = (yo as f64 / n_o, yr as f64 / n_r);
        m_vals.push((po / pr).log2());
        a_vals.push(0.5 * (po.log2() + pr.log2()));
        var.push((n_o - yo as f64) / n_o / yo as f64 + (n_r - yr as f64) / n_r / yr as f64);
    }
    if m_vals.is_empty() {
        let ids = counts.sample_ids();
        return Err(Error::NoSharedFeatures(ids[obs].clone(), ids[reference].clone()));
    }
    if m_vals.iter().all(|m| m.abs() < 1e-6) {
        return Ok(1.0);
    }
    let m = m_vals.len() as f64;
    let lo_m = (m * trim_m).floor() + 1.0;
    let hi_m = m + 1.0 - lo_m;
    let lo_a = (m * trim_a).floor() + 1.0;
    let hi_a = m + 1.0 - lo_a;
    let rank_m = midranks(&m_vals);
    let rank_a = midranks(&a_vals);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..m_vals.len() {
        if rank_m[k] >= lo_m && rank_m[k] <= hi_m && rank_a[k] >= lo_a && rank_a[k] <= hi_a {
            num += m_vals[k] / var[k];
            den += 1.0 / var[k];
        }
    }
    let f = num / den;
    Ok(if f.is_finite() { f.exp2() } else { 1.0 })
}

/// Median ratio to the per-feature geometric mean, after adding `pseudo`.
pub fn estimate_rle(counts: &CountMatrix, pseudo: f64) -> Result<SizeFactors> {
    if !(pseudo > 0.0 && pseudo.is_finite()) {
        return Err(Error::InvalidInput(format!("RLE pseudo-count must be positive, got {pseudo}")));
    }
    let n = counts.n_samples();
    let log_ref: Vec<f64> = (0..counts.n_features())
        .map(|j| counts.feature(j).iter().map(|&y| (y as f64 + pseudo).ln()).sum::<f64>() / n as f64)
        .collect();
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let mut ratios: Vec<f64> = counts
                .sample(i)
                .iter()
                .zip(&log_ref)
                .map(|(&y, lr)| ((y as f64 + pseudo).ln() - lr).exp())
                .collect();
            median(&mut ratios)
        })
        .collect();
    SizeFactors::from_raw(&raw, Some(NormMethod::Rle))
}
