//! Scoring posterior selections against simulation truth.

use crate::error::{Error, Result};
use crate::inference::PosteriorSummary;
use crate::simgen::SimTruth;
use crate::stats::midranks;

/// Mann-Whitney AUC with midranks for tied scores.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!("{} scores for {} labels", scores.len(), truth.len())));
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassTruth);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score".into()));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(truth).filter(|(_, &t)| t).map(|(r, _)| r).sum();
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// ROC coordinates `(fpr, tpr)` from the highest threshold down, one point
/// per distinct score, starting at `(0, 0)`.
pub fn roc_curve(scores: &[f64], truth: &[bool]) -> Result<Vec<(f64, f64)>> {
    roc_auc(scores, truth)?;
    let n_pos = truth.iter().filter(|&&t| t).count() as f64;
    let n_neg = truth.len() as f64 - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push((fp / n_neg, tp / n_pos));
    }
    Ok(points)
}

/// Confusion counts and derived rates for one selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionScore {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    /// false discoveries over selections, 0 when nothing is selected
    pub fdr: f64,
    pub fpr: f64,
    pub mcc: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

impl SelectionScore {
    pub fn new(selected: &[bool], truth: &[bool]) -> Result<Self> {
        if selected.len() != truth.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} selections for {} labels",
                selected.len(),
                truth.len()
            )));
        }
        let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
        for (&s, &t) in selected.iter().zip(truth) {
            match (s, t) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
            }
        }
        Ok(Self {
            tp,
            tn,
            fp,
            fn_,
            sensitivity: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            fdr: if tp + fp == 0 { 0.0 } else { ratio(fp, tp + fp) },
            fpr: ratio(fp, fp + tn),
            mcc: mcc_from_counts(tp, tn, fp, fn_),
        })
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

fn mcc_from_counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> f64 {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den.sqrt()
    }
}

/// Matthews correlation coefficient; 0 when any margin is empty.
pub fn mcc(selected: &[bool], truth: &[bool]) -> Result<f64> {
    Ok(SelectionScore::new(selected, truth)?.mcc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub gamma: SelectionScore,
    pub delta: SelectionScore,
    /// `None` when the truth has a single class
    pub auc_gamma: Option<f64>,
    pub auc_delta: Option<f64>,
    /// Fraction of δ selected; reported when no association is real.
    pub null_delta_fpr: Option<f64>,
}

fn auc_or_none(scores: &[f64], truth: &[bool]) -> Result<Option<f64>> {
    match roc_auc(scores, truth) {
        Ok(v) => Ok(Some(v)),
        Err(Error::SingleClassTruth) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn score_run(summary: &PosteriorSummary, truth: &SimTruth) -> Result<ScoreReport> {
    if summary.ppi_gamma.len() != truth.gamma_true.len() || summary.ppi_delta.dim() != truth.delta_true.dim() {
        return Err(Error::DimensionMismatch("summary and truth disagree in shape".into()));
    }
    score_vectors(
        &summary.ppi_gamma,
        &summary.selected_gamma,
        &truth.gamma_true,
        &summary.ppi_delta.iter().copied().collect::<Vec<_>>(),
        &summary.selected_delta.iter().copied().collect::<Vec<_>>(),
        &truth.delta_true.iter().copied().collect::<Vec<_>>(),
    )
}

/// Same as [`score_run`] on flat vectors (δ entries in any consistent order).
pub fn score_vectors(
    ppi_gamma: &[f64],
    selected_gamma: &[bool],
    gamma_true: &[bool],
    ppi_delta: &[f64],
    selected_delta: &[bool],
    delta_true: &[bool],
) -> Result<ScoreReport> {
    if ppi_gamma.len() != gamma_true.len() || ppi_delta.len() != delta_true.len() {
        return Err(Error::DimensionMismatch("scores and truth disagree in length".into()));
    }
    let delta = SelectionScore::new(selected_delta, delta_true)?;
    let null = !delta_true.is_empty() && delta_true.iter().all(|&t| !t);
    Ok(ScoreReport {
        gamma: SelectionScore::new(selected_gamma, gamma_true)?,
        auc_gamma: auc_or_none(ppi_gamma, gamma_true)?,
        auc_delta: auc_or_none(ppi_delta, delta_true)?,
        null_delta_fpr: null.then(|| delta.fp as f64 / delta_true.len() as f64),
        delta,
    })
}
