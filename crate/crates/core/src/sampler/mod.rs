//! MCMC over the ZINB model: chain configuration, the per-sweep kernel and
//! trace recording.

mod moves;
mod state;
mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Dataset, Hyperparameters, ProposalScales};
use crate::error::{Error, Result};
use crate::normalization::SizeFactors;

pub use moves::Sampler;
pub use state::ModelState;
pub use trace::{AcceptanceCounters, ChainTrace, Moments, MoveStats, TraceRow};

/// Target acceptance rate of the optional burn-in adaptation.
pub const ADAPT_TARGET: f64 = 0.3;
/// Sweeps between adaptation steps.
pub const ADAPT_INTERVAL: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub thin: usize,
    pub prior_only: bool,
    /// Robbins-Monro scale adaptation during burn-in.
    pub adapt: bool,
    /// Keep a per-sweep [`TraceRow`] log.
    pub record_log: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::new(20_000, 0)
    }
}

impl ChainConfig {
    /// `burn_in` defaults to half of `n_iter`.
    pub fn new(n_iter: usize, seed: u64) -> Self {
        Self {
            n_iter,
            burn_in: n_iter / 2,
            seed,
            thin: 1,
            prior_only: false,
            adapt: false,
            record_log: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidInput("thin must be at least 1".into()));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::InvalidInput(format!(
                "burn_in ({}) must be smaller than n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        Ok(())
    }

    /// Number of draws the chain will record.
    pub fn n_draws(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }
}

fn record(trace: &mut ChainTrace, state: &ModelState) {
    trace.n_draws += 1;
    for (j, t) in state.taxa.iter().enumerate() {
        let p = &t.params;
        trace.gamma_sums[j] += u64::from(p.gamma);
        trace.mu0.push(0, j, p.mu0);
        trace.phi.push(0, j, p.phi);
        for (g, &m) in p.mu_k.iter().enumerate() {
            trace.mu_k.push(g, j, m);
        }
        for (r, (&d, &b)) in p.delta.iter().zip(&p.beta).enumerate() {
            trace.delta_sums[[r, j]] += u64::from(d);
            trace.beta.push(r, j, b);
        }
    }
    for g in 1..=trace.n_groups {
        if g == trace.reference {
            continue;
        }
        trace.mu_k_draws.extend(state.taxa.iter().map(|t| t.params.mu_k[g - 1]));
    }
}

fn record_r(trace: &mut ChainTrace, sampler: &Sampler, state: &ModelState) {
    for (j, t) in state.taxa.iter().enumerate() {
        for &i in &sampler.data.zeros[j] {
            trace.r_zero_cells += 1;
            trace.r_ones += u64::from(t.r[i]);
        }
    }
}

fn adapt_scales(state: &mut ModelState, last: &AcceptanceCounters, batch: usize) {
    let step = (1.0 / (batch as f64).sqrt()).min(0.5);
    let now = state.counters;
    let tune = |scale: &mut f64, cur: MoveStats, prev: MoveStats| {
        let proposed = cur.proposed - prev.proposed;
        if proposed > 0 {
            let rate = (cur.accepted - prev.accepted) as f64 / proposed as f64;
            *scale *= ((rate - ADAPT_TARGET) * step).exp();
        }
    };
    tune(&mut state.scales.tau_mu0, now.mu0, last.mu0);
    tune(&mut state.scales.tau_mu, now.mu_k, last.mu_k);
    tune(&mut state.scales.tau_beta, now.beta, last.beta);
    tune(&mut state.scales.tau_phi, now.phi, last.phi);
}

/// Runs one chain: initialisation, `n_iter` sweeps, and post-burn-in
/// recording every `thin` sweeps. A pure function of its arguments.
pub fn run_chain(
    data: &Dataset,
    size_factors: &SizeFactors,
    hp: &Hyperparameters,
    scales: &ProposalScales,
    config: &ChainConfig,
) -> Result<ChainTrace> {
    config.validate()?;
    let sampler = Sampler::new(data, size_factors, *hp, *scales, config.prior_only)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = sampler.init_state(&mut rng);
    let d = &sampler.data;
    let mut trace = ChainTrace::new(config.seed, d.p, d.r, d.k, d.reference, *scales);
    let mut last = AcceptanceCounters::default();
    let mut batch = 0;
    for t in 0..config.n_iter {
        state.iteration = t;
        sampler.sweep(&mut state, &mut rng)?;
        if config.adapt && t < config.burn_in && (t + 1) % ADAPT_INTERVAL == 0 {
            batch += 1;
            adapt_scales(&mut state, &last, batch);
            last = state.counters;
        }
        if t >= config.burn_in && (t - config.burn_in) % config.thin == 0 {
            record(&mut trace, &state);
            record_r(&mut trace, &sampler, &state);
        }
        if config.record_log {
            trace.log.push(TraceRow {
                iteration: t,
                log_posterior: sampler.log_posterior(&state),
                n_gamma: state.n_gamma,
                n_delta: state.taxa.iter().map(|x| x.params.delta.iter().filter(|&&v| v).count()).sum(),
                acceptance: state.counters,
            });
        }
    }
    trace.acceptance = state.counters;
    trace.final_scales = state.scales;
    Ok(trace)
}

/// Runs several chains concurrently. Each chain owns its RNG stream, so the
/// result equals running them one after another.
pub fn run_chains_parallel(
    data: &Dataset,
    size_factors: &SizeFactors,
    hp: &Hyperparameters,
    scales: &ProposalScales,
    configs: &[ChainConfig],
) -> Result<Vec<ChainTrace>> {
    let mut seeds: Vec<u64> = configs.iter().map(|c| c.seed).collect();
    seeds.sort_unstable();
    if seeds.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("chain seeds must be distinct".into()));
    }
    configs.par_iter().map(|c| run_chain(data, size_factors, hp, scales, c)).collect()
}

#[cfg(test)]
mod tests;
