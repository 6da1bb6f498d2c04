use ndarray::Array2;

/// Running first and second moments over recorded draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    sum: Array2<f64>,
    sum_sq: Array2<f64>,
}

impl Moments {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { sum: Array2::zeros((rows, cols)), sum_sq: Array2::zeros((rows, cols)) }
    }

    #[inline]
    pub(crate) fn push(&mut self, row: usize, col: usize, v: f64) {
        self.sum[[row, col]] += v;
        self.sum_sq[[row, col]] += v * v;
    }

    pub fn sum(&self) -> &Array2<f64> {
        &self.sum
    }

    pub fn sum_sq(&self) -> &Array2<f64> {
        &self.sum_sq
    }

    pub(crate) fn merge(&mut self, other: &Moments) {
        self.sum += &other.sum;
        self.sum_sq += &other.sum_sq;
    }
}

/// Proposal/acceptance tallies for one move type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MoveStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveStats {
    #[inline]
    pub(crate) fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcceptanceCounters {
    pub mu0: MoveStats,
    pub gamma_add: MoveStats,
    pub gamma_delete: MoveStats,
    pub mu_k: MoveStats,
    pub delta_add: MoveStats,
    pub delta_delete: MoveStats,
    pub beta: MoveStats,
    pub phi: MoveStats,
}

/// One row of the optional per-iteration debugging log.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub log_posterior: f64,
    pub n_gamma: usize,
    pub n_delta: usize,
    pub acceptance: AcceptanceCounters,
}

/// Everything a chain keeps after burn-in: indicator sums for PPIs, running
/// moments of the continuous parameters, and the group-shift draws needed for
/// credible intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub(crate) seed: u64,
    pub(crate) n_draws: usize,
    pub(crate) n_features: usize,
    pub(crate) n_covariates: usize,
    pub(crate) n_groups: usize,
    pub(crate) reference: usize,
    pub(crate) gamma_sums: Vec<u64>,
    /// `R × p`
    pub(crate) delta_sums: Array2<u64>,
    /// `1 × p`
    pub(crate) mu0: Moments,
    /// `K × p`, reference row stays zero
    pub(crate) mu_k: Moments,
    /// `R × p`
    pub(crate) beta: Moments,
    /// `1 × p`
    pub(crate) phi: Moments,
    /// Draws of the non-reference shifts, laid out `[draw][group][feature]`.
    pub(crate) mu_k_draws: Vec<f64>,
    pub(crate) r_ones: u64,
    pub(crate) r_zero_cells: u64,
    pub(crate) acceptance: AcceptanceCounters,
    pub(crate) final_scales: crate::data::ProposalScales,
    pub(crate) log: Vec<TraceRow>,
}

impl ChainTrace {
    pub(crate) fn new(seed: u64, p: usize, r: usize, k: usize, reference: usize, scales: crate::data::ProposalScales) -> Self {
        Self {
            seed,
            n_draws: 0,
            n_features: p,
            n_covariates: r,
            n_groups: k,
            reference,
            gamma_sums: vec![0; p],
            delta_sums: Array2::zeros((r, p)),
            mu0: Moments::zeros(1, p),
            mu_k: Moments::zeros(k, p),
            beta: Moments::zeros(r, p),
            phi: Moments::zeros(1, p),
            mu_k_draws: Vec::new(),
            r_ones: 0,
            r_zero_cells: 0,
            acceptance: AcceptanceCounters::default(),
            final_scales: scales,
            log: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn gamma_sums(&self) -> &[u64] {
        &self.gamma_sums
    }

    pub fn delta_sums(&self) -> &Array2<u64> {
        &self.delta_sums
    }

    pub fn mu0_moments(&self) -> &Moments {
        &self.mu0
    }

    pub fn mu_k_moments(&self) -> &Moments {
        &self.mu_k
    }

    pub fn beta_moments(&self) -> &Moments {
        &self.beta
    }

    pub fn phi_moments(&self) -> &Moments {
        &self.phi
    }

    /// Non-reference groups in storage order (1-based labels).
    pub fn shift_groups(&self) -> Vec<usize> {
        (1..=self.n_groups).filter(|&k| k != self.reference).collect()
    }

    /// Recorded draws of `μ_kj` for group `k` (1-based, non-reference).
    pub fn mu_k_draws(&self, k: usize, j: usize) -> Vec<f64> {
        let groups = self.shift_groups();
        let slot = groups.iter().position(|&g| g == k).expect("non-reference group");
        let stride = groups.len() * self.n_features;
        (0..self.n_draws).map(|t| self.mu_k_draws[t * stride + slot * self.n_features + j]).collect()
    }

    /// Posterior mean of the extra-zero indicator over zero-count cells.
    pub fn mean_r_given_zero(&self) -> f64 {
        self.r_ones as f64 / self.r_zero_cells as f64
    }

    pub fn acceptance(&self) -> &AcceptanceCounters {
        &self.acceptance
    }

    pub fn final_scales(&self) -> &crate::data::ProposalScales {
        &self.final_scales
    }

    pub fn log(&self) -> &[TraceRow] {
        &self.log
    }
}
