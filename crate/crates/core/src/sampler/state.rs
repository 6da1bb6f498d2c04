use crate::data::{Dataset, ProposalScales};
use crate::error::{Error, Result};
use crate::likelihood::TaxonParams;
use crate::normalization::SizeFactors;

use super::trace::AcceptanceCounters;

/// Column-oriented copy of the data laid out for the sweep loops.
#[derive(Debug, Clone)]
pub(crate) struct ChainData {
    pub n: usize,
    pub p: usize,
    pub r: usize,
    pub k: usize,
    /// 1-based reference group
    pub reference: usize,
    /// per feature, per sample
    pub y: Vec<Vec<u64>>,
    pub yf: Vec<Vec<f64>>,
    /// per feature, samples with a zero count
    pub zeros: Vec<Vec<usize>>,
    /// per feature, samples with a nonzero count
    pub nonzeros: Vec<Vec<usize>>,
    /// row-major `n × R`
    pub x: Vec<f64>,
    /// per covariate, per sample
    pub x_col: Vec<Vec<f64>>,
    /// 0-based group index per sample
    pub group: Vec<usize>,
    /// sample indices per 0-based group
    pub members: Vec<Vec<usize>>,
    pub log_s: Vec<f64>,
    pub size_factors: Vec<f64>,
}

impl ChainData {
    pub fn new(data: &Dataset, sf: &SizeFactors) -> Result<Self> {
        let (n, p, r) = (data.n_samples(), data.n_features(), data.n_covariates());
        if sf.len() != n {
            return Err(Error::DimensionMismatch(format!("{} size factors for {n} samples", sf.len())));
        }
        let counts = data.counts().counts();
        let y: Vec<Vec<u64>> = (0..p).map(|j| counts.column(j).to_vec()).collect();
        let yf = y.iter().map(|c| c.iter().map(|&v| v as f64).collect()).collect();
        let zeros = y.iter().map(|c| (0..n).filter(|&i| c[i] == 0).collect()).collect();
        let nonzeros = y.iter().map(|c| (0..n).filter(|&i| c[i] > 0).collect()).collect();
        let xv = data.covariates().values();
        let x = xv.iter().copied().collect();
        let x_col = (0..r).map(|c| xv.column(c).to_vec()).collect();
        let groups = data.groups();
        let k = groups.n_groups();
        let group: Vec<usize> = groups.labels().iter().map(|&g| g - 1).collect();
        let mut members = vec![Vec::new(); k];
        for (i, &g) in group.iter().enumerate() {
            members[g].push(i);
        }
        Ok(Self {
            n,
            p,
            r,
            k,
            reference: groups.reference(),
            y,
            yf,
            zeros,
            nonzeros,
            x,
            x_col,
            group,
            members,
            log_s: sf.log_values(),
            size_factors: sf.values().to_vec(),
        })
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.r..(i + 1) * self.r]
    }

    /// Non-reference groups as 0-based indices.
    pub fn shift_groups(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(move |&g| g + 1 != self.reference)
    }
}

/// Per-feature latent state plus caches of the log NB mean and of the
/// `φ`-dependent part of the log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TaxonState {
    pub params: TaxonParams,
    /// extra-zero indicators, one per sample
    pub r: Vec<bool>,
    /// `log(s_i α_ij)`
    pub loglam: Vec<f64>,
    /// `y log λ − (y + φ) log(λ + φ)`; fresh for samples with `r = 0`
    pub kern: Vec<f64>,
    /// `Σ_{y>0} [ln Γ(y + φ) − ln Γ(φ)]` at the current `φ`
    pub lgamma_part: f64,
}

/// Full configuration of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub(crate) taxa: Vec<TaxonState>,
    pub(crate) n_gamma: usize,
    pub(crate) scales: ProposalScales,
    pub(crate) counters: AcceptanceCounters,
    pub(crate) iteration: usize,
    pub(crate) scratch: Vec<f64>,
    /// feature visiting order of the current sweep
    pub(crate) order: Vec<usize>,
}

impl ModelState {
    pub fn params(&self, j: usize) -> &TaxonParams {
        &self.taxa[j].params
    }

    pub fn n_features(&self) -> usize {
        self.taxa.len()
    }

    /// Extra-zero indicators of feature `j`, one per sample.
    pub fn r(&self, j: usize) -> &[bool] {
        &self.taxa[j].r
    }

    pub fn n_gamma(&self) -> usize {
        self.n_gamma
    }

    pub fn scales(&self) -> &ProposalScales {
        &self.scales
    }

    pub fn counters(&self) -> &AcceptanceCounters {
        &self.counters
    }

    /// Checks every structural invariant against the data the chain runs on.
    pub fn check_invariants(&self, data: &Dataset) -> Result<()> {
        let counts = data.counts().counts();
        let mut n_gamma = 0;
        for (j, t) in self.taxa.iter().enumerate() {
            t.params.check()?;
            n_gamma += usize::from(t.params.gamma);
            for (i, &r) in t.r.iter().enumerate() {
                if r && counts[[i, j]] != 0 {
                    return Err(Error::InconsistentZeroIndicator { sample: i });
                }
            }
        }
        if n_gamma != self.n_gamma {
            return Err(Error::Invariant("cached gamma count is stale".into()));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn kernel(y: f64, loglam: f64, phi: f64) -> f64 {
    y * loglam - (y + phi) * (loglam.exp() + phi).ln()
}
