//! The five Metropolis-within-Gibbs steps of a sweep.
//!
//! Mean-structure moves (`μ₀`, `μ_k`, `β`) only change `log λ`, so their
//! likelihood ratios use the cached kernel `y log λ − (y + φ) log(λ + φ)`;
//! the `ln Γ` terms cancel. Only the dispersion move touches `ln Γ`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::beta::ln_beta;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::data::{Dataset, Hyperparameters, ProposalScales};
use crate::error::{Error, Result};
use crate::likelihood::{log_gamma_density, log_normal_density, log_prior_terms, nb_log_pmf_unchecked, SlabPrior, TaxonParams};
use crate::normalization::SizeFactors;

use super::state::{kernel, ChainData, ModelState, TaxonState};
use super::trace::AcceptanceCounters;

/// Standard normal log CDF.
fn ln_std_normal_cdf(x: f64) -> f64 {
    (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
}

/// Holds the data and fixed settings of one chain; the mutable part lives in
/// [`ModelState`].
#[derive(Debug, Clone)]
pub struct Sampler {
    pub(crate) data: ChainData,
    all_samples: Vec<usize>,
    nonref_samples: Vec<usize>,
    hp: Hyperparameters,
    slab: SlabPrior,
    scales: ProposalScales,
    prior_only: bool,
}

impl Sampler {
    pub fn new(
        dataset: &Dataset,
        size_factors: &SizeFactors,
        hp: Hyperparameters,
        scales: ProposalScales,
        prior_only: bool,
    ) -> Result<Self> {
        hp.validate()?;
        scales.validate()?;
        let data = ChainData::new(dataset, size_factors)?;
        let all_samples = (0..data.n).collect();
        let nonref_samples = (0..data.n).filter(|&i| data.group[i] + 1 != data.reference).collect();
        Ok(Self {
            data,
            all_samples,
            nonref_samples,
            hp,
            slab: SlabPrior::from_hyper(&hp),
            scales,
            prior_only,
        })
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    pub fn prior_only(&self) -> bool {
        self.prior_only
    }

    /// Random starting point: indicators are fair coins, active shifts and
    /// effects standard normal, `φ = 10`, and `μ₀` the log of the size-factor
    /// normalised mean count (plus 0.01).
    pub fn init_state<R: Rng>(&self, rng: &mut R) -> ModelState {
        let d = &self.data;
        let mut taxa = Vec::with_capacity(d.p);
        let mut n_gamma = 0;
        for j in 0..d.p {
            let gamma = rng.gen_bool(0.5);
            let mut mu_k = vec![0.0; d.k];
            if gamma {
                for g in d.shift_groups() {
                    mu_k[g] = rng.sample(StandardNormal);
                }
            }
            let mut delta = vec![false; d.r];
            let mut beta = vec![0.0; d.r];
            for r in 0..d.r {
                delta[r] = rng.gen_bool(0.5);
                if delta[r] {
                    beta[r] = rng.sample(StandardNormal);
                }
            }
            let norm_mean =
                d.yf[j].iter().zip(&d.size_factors).map(|(y, s)| y / s).sum::<f64>() / d.n as f64;
            let mut r_ind = vec![false; d.n];
            for &i in &d.zeros[j] {
                r_ind[i] = rng.gen_bool(0.5);
            }
            n_gamma += usize::from(gamma);
            let params = TaxonParams {
                mu0: (norm_mean + 0.01).ln(),
                mu_k,
                beta,
                phi: 10.0,
                gamma,
                delta,
                reference: d.reference,
            };
            let mut t = TaxonState {
                params,
                r: r_ind,
                loglam: vec![0.0; d.n],
                kern: vec![0.0; d.n],
                lgamma_part: 0.0,
            };
            self.refresh(j, &mut t);
            t.lgamma_part = self.lgamma_part(j, t.params.phi);
            taxa.push(t);
        }
        ModelState {
            taxa,
            n_gamma,
            scales: self.scales,
            counters: AcceptanceCounters::default(),
            iteration: 0,
            scratch: vec![0.0; d.n],
            order: (0..d.p).collect(),
        }
    }

    /// Recompute `log λ` from the parameters and the kernel cache for all samples.
    pub(crate) fn refresh(&self, j: usize, t: &mut TaxonState) {
        let d = &self.data;
        let phi = t.params.phi;
        for i in 0..d.n {
            let ll = d.log_s[i] + t.params.log_alpha(d.x_row(i), d.group[i] + 1);
            t.loglam[i] = ll;
            t.kern[i] = kernel(d.yf[j][i], ll, phi);
        }
    }

    pub(crate) fn lgamma_part(&self, j: usize, phi: f64) -> f64 {
        let lg_phi = ln_gamma(phi);
        self.data.nonzeros[j].iter().map(|&i| ln_gamma(self.data.yf[j][i] + phi) - lg_phi).sum()
    }

    /// Change in log-likelihood when `log λ_i` moves by `shift(i)` for the
    /// listed samples; new kernel values are left in `scratch`.
    #[inline]
    pub(crate) fn shift_delta(
        &self,
        j: usize,
        t: &TaxonState,
        scratch: &mut [f64],
        samples: &[usize],
        shift: impl Fn(usize) -> f64,
    ) -> f64 {
        if self.prior_only {
            return 0.0;
        }
        let y = &self.data.yf[j];
        let phi = t.params.phi;
        let mut delta = 0.0;
        for &i in samples {
            if t.r[i] {
                continue;
            }
            let k = kernel(y[i], t.loglam[i] + shift(i), phi);
            scratch[i] = k;
            delta += k - t.kern[i];
        }
        delta
    }

    #[inline]
    fn apply_shift(&self, t: &mut TaxonState, scratch: &[f64], samples: &[usize], shift: impl Fn(usize) -> f64) {
        for &i in samples {
            t.loglam[i] += shift(i);
            if !self.prior_only && !t.r[i] {
                t.kern[i] = scratch[i];
            }
        }
    }

    pub(crate) fn accept<R: Rng>(rng: &mut R, log_ratio: f64, iteration: usize, feature: usize) -> Result<bool> {
        let u: f64 = rng.gen();
        if log_ratio.is_nan() {
            return Err(Error::NumericalFailure { iteration, feature });
        }
        Ok(u.ln() < log_ratio)
    }

    /// Step 1: redraw the extra-zero indicator of every zero count.
    pub fn update_r<R: Rng>(&self, state: &mut ModelState, rng: &mut R) {
        let d = &self.data;
        let (a, b) = (self.hp.a_pi, self.hp.b_pi);
        let prior_p1 = a / (a + b);
        let odds = b / a;
        for j in 0..d.p {
            let t = &mut state.taxa[j];
            self.refresh(j, t);
            let phi = t.params.phi;
            let phi_ln_phi = phi * phi.ln();
            for &i in &d.zeros[j] {
                let p1 = if self.prior_only {
                    prior_p1
                } else {
                    // NB mass at zero is (φ / (λ + φ))^φ = exp(φ ln φ + kern)
                    1.0 / (1.0 + odds * (phi_ln_phi + t.kern[i]).exp())
                };
                t.r[i] = rng.gen::<f64>() < p1;
            }
        }
    }

    /// Step 2: random-walk update of each feature baseline.
    pub fn update_mu0<R: Rng>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let tau = state.scales.tau_mu0;
        let var0 = self.hp.sigma0_sq;
        for idx in 0..self.data.p {
            let j = state.order[idx];
            let t = &mut state.taxa[j];
            let cur = t.params.mu0;
            let prop = cur + tau * rng.sample::<f64, _>(StandardNormal);
            let step = prop - cur;
            let dl = self.shift_delta(j, t, &mut state.scratch, &self.all_samples, |_| step);
            let lr = dl + log_normal_density(prop, 0.0, var0) - log_normal_density(cur, 0.0, var0);
            let ok = Self::accept(rng, lr, state.iteration, j)?;
            if ok {
                t.params.mu0 = prop;
                self.apply_shift(t, &state.scratch, &self.all_samples, |_| step);
            }
            state.counters.mu0.record(ok);
        }
        Ok(())
    }

    /// log of slab density over add-proposal density for one coefficient.
    #[inline]
    fn slab_over_proposal(&self, v: f64, tau: f64) -> f64 {
        self.slab.ln_pdf(v) - log_normal_density(v, 0.0, tau * tau)
    }

    /// Step 3: add/delete move on `γ_j` with its group shifts, for every
    /// feature in random order, then within-model walks on active shifts.
    pub fn update_gamma_mu<R: Rng>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let d = &self.data;
        let tau = state.scales.tau_mu;
        let (aw, bw, p) = (self.hp.a_omega, self.hp.b_omega, d.p as f64);
        let mut proposal = vec![0.0; d.k];
        for idx in 0..d.p {
            let j = state.order[idx];
            let s = state.n_gamma as f64;
            let t = &mut state.taxa[j];
            if !t.params.gamma {
                let mut lr = (aw + s).ln() - (bw + p - s - 1.0).ln();
                for g in d.shift_groups() {
                    let v = tau * rng.sample::<f64, _>(StandardNormal);
                    proposal[g] = v;
                    lr += self.slab_over_proposal(v, tau);
                }
                let shift = |i: usize| proposal[d.group[i]];
                lr += self.shift_delta(j, t, &mut state.scratch, &self.nonref_samples, shift);
                let ok = Self::accept(rng, lr, state.iteration, j)?;
                if ok {
                    self.apply_shift(t, &state.scratch, &self.nonref_samples, shift);
                    t.params.gamma = true;
                    for g in d.shift_groups() {
                        t.params.mu_k[g] = proposal[g];
                    }
                    state.n_gamma += 1;
                }
                state.counters.gamma_add.record(ok);
            } else {
                let mut lr = (bw + p - s).ln() - (aw + s - 1.0).ln();
                for g in d.shift_groups() {
                    lr -= self.slab_over_proposal(t.params.mu_k[g], tau);
                }
                let current = t.params.mu_k.clone();
                let shift = |i: usize| -current[d.group[i]];
                lr += self.shift_delta(j, t, &mut state.scratch, &self.nonref_samples, shift);
                let ok = Self::accept(rng, lr, state.iteration, j)?;
                if ok {
                    self.apply_shift(t, &state.scratch, &self.nonref_samples, shift);
                    t.params.gamma = false;
                    t.params.mu_k.iter_mut().for_each(|m| *m = 0.0);
                    state.n_gamma -= 1;
                }
                state.counters.gamma_delete.record(ok);
            }
        }

        let half = tau / 2.0;
        for idx in 0..d.p {
            let j = state.order[idx];
            let t = &mut state.taxa[j];
            if !t.params.gamma {
                continue;
            }
            for g in d.shift_groups() {
                let cur = t.params.mu_k[g];
                let prop = cur + half * rng.sample::<f64, _>(StandardNormal);
                let step = prop - cur;
                let members = &d.members[g];
                let dl = self.shift_delta(j, t, &mut state.scratch, members, |_| step);
                let lr = dl + self.slab.ln_pdf(prop) - self.slab.ln_pdf(cur);
                let ok = Self::accept(rng, lr, state.iteration, j)?;
                if ok {
                    t.params.mu_k[g] = prop;
                    self.apply_shift(t, &state.scratch, members, |_| step);
                }
                state.counters.mu_k.record(ok);
            }
        }
        Ok(())
    }

    /// Step 4: for each feature flip one randomly chosen `δ_rj` (add/delete),
    /// then within-model walks on every active `β_rj`.
    pub fn update_delta_beta<R: Rng>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let d = &self.data;
        if d.r == 0 {
            return Ok(());
        }
        let tau = state.scales.tau_beta;
        let (ap, bp, rr) = (self.hp.a_p, self.hp.b_p, d.r as f64);
        for idx in 0..d.p {
            let j = state.order[idx];
            let t = &mut state.taxa[j];
            let r = rng.gen_range(0..d.r);
            let s = t.params.delta.iter().filter(|&&v| v).count() as f64;
            let x = &d.x_col[r];
            if !t.params.delta[r] {
                let v = tau * rng.sample::<f64, _>(StandardNormal);
                let shift = |i: usize| x[i] * v;
                let dl = self.shift_delta(j, t, &mut state.scratch, &self.all_samples, shift);
                let lr = dl + self.slab_over_proposal(v, tau) + (ap + s).ln() - (bp + rr - s - 1.0).ln();
                let ok = Self::accept(rng, lr, state.iteration, j)?;
                if ok {
                    self.apply_shift(t, &state.scratch, &self.all_samples, shift);
                    t.params.delta[r] = true;
                    t.params.beta[r] = v;
                }
                state.counters.delta_add.record(ok);
            } else {
                let v = t.params.beta[r];
                let shift = |i: usize| -x[i] * v;
                let dl = self.shift_delta(j, t, &mut state.scratch, &self.all_samples, shift);
                let lr = dl - self.slab_over_proposal(v, tau) + (bp + rr - s).ln() - (ap + s - 1.0).ln();
                let ok = Self::accept(rng, lr, state.iteration, j)?;
                if ok {
                    self.apply_shift(t, &state.scratch, &self.all_samples, shift);
                    t.params.delta[r] = false;
                    t.params.beta[r] = 0.0;
                }
                state.counters.delta_delete.record(ok);
            }
        }

        let half = tau / 2.0;
        for idx in 0..d.p {
            let j = state.order[idx];
            let t = &mut state.taxa[j];
            for r in 0..d.r {
                if !t.params.delta[r] {
                    continue;
                }
                let cur = t.params.beta[r];
                let prop = cur + half * rng.sample::<f64, _>(StandardNormal);
                let step = prop - cur;
                let x = &d.x_col[r];
                let shift = |i: usize| x[i] * step;
                let dl = self.shift_delta(j, t, &mut state.scratch, &self.all_samples, shift);
                let lr = dl + self.slab.ln_pdf(prop) - self.slab.ln_pdf(cur);
                let ok = Self::accept(rng, lr, state.iteration, j)?;
                if ok {
                    t.params.beta[r] = prop;
                    self.apply_shift(t, &state.scratch, &self.all_samples, shift);
                }
                state.counters.beta.record(ok);
            }
        }
        Ok(())
    }

    /// Step 5: dispersion update with a zero-truncated normal random walk,
    /// including the truncation correction `Φ(φ/τ) / Φ(φ*/τ)`.
    pub fn update_phi<R: Rng>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let d = &self.data;
        let tau = state.scales.tau_phi;
        let (a_phi, b_phi) = (self.hp.a_phi, self.hp.b_phi);
        for idx in 0..d.p {
            let j = state.order[idx];
            let t = &mut state.taxa[j];
            let cur = t.params.phi;
            let prop = loop {
                let v = cur + tau * rng.sample::<f64, _>(StandardNormal);
                if v > 0.0 {
                    break v;
                }
            };
            let mut lr = log_gamma_density(prop, a_phi, b_phi) - log_gamma_density(cur, a_phi, b_phi)
                + ln_std_normal_cdf(cur / tau)
                - ln_std_normal_cdf(prop / tau);
            let mut new_lgamma = 0.0;
            if !self.prior_only {
                new_lgamma = self.lgamma_part(j, prop);
                let y = &d.yf[j];
                let (mut dk, mut active) = (0.0, 0.0);
                for i in 0..d.n {
                    if t.r[i] {
                        continue;
                    }
                    let k = kernel(y[i], t.loglam[i], prop);
                    state.scratch[i] = k;
                    dk += k - t.kern[i];
                    active += 1.0;
                }
                lr += new_lgamma - t.lgamma_part + active * (prop * prop.ln() - cur * cur.ln()) + dk;
            }
            let ok = Self::accept(rng, lr, state.iteration, j)?;
            if ok {
                t.params.phi = prop;
                if !self.prior_only {
                    t.lgamma_part = new_lgamma;
                    for i in 0..d.n {
                        if !t.r[i] {
                            t.kern[i] = state.scratch[i];
                        }
                    }
                }
            }
            state.counters.phi.record(ok);
        }
        Ok(())
    }

    /// One full sweep: steps 1 to 5 in order, with features visited in a
    /// fresh random permutation.
    pub fn sweep<R: Rng>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        state.order.shuffle(rng);
        self.update_r(state, rng);
        self.update_mu0(state, rng)?;
        self.update_gamma_mu(state, rng)?;
        self.update_delta_beta(state, rng)?;
        self.update_phi(state, rng)?;
        Ok(())
    }

    /// Unnormalised log posterior of the current state, with the Beta priors
    /// on the inclusion rates integrated out. Used for trace dumps only.
    pub fn log_posterior(&self, state: &ModelState) -> f64 {
        let d = &self.data;
        let mut total = 0.0;
        let (api, bpi) = (self.hp.a_pi, self.hp.b_pi);
        let (l1, l0) = ((api / (api + bpi)).ln(), (bpi / (api + bpi)).ln());
        for (j, t) in state.taxa.iter().enumerate() {
            if !self.prior_only {
                for i in 0..d.n {
                    if !t.r[i] {
                        total += nb_log_pmf_unchecked(d.y[j][i], t.loglam[i].exp(), t.params.phi);
                    }
                }
            }
            total += log_prior_terms(&t.params, &self.hp).total();
            let ones = t.r.iter().filter(|&&v| v).count() as f64;
            total += ones * l1 + (d.n as f64 - ones) * l0;
            if d.r > 0 {
                let s = t.params.delta.iter().filter(|&&v| v).count() as f64;
                total += ln_beta(self.hp.a_p + s, self.hp.b_p + d.r as f64 - s) - ln_beta(self.hp.a_p, self.hp.b_p);
            }
        }
        let s = state.n_gamma as f64;
        total += ln_beta(self.hp.a_omega + s, self.hp.b_omega + d.p as f64 - s)
            - ln_beta(self.hp.a_omega, self.hp.b_omega);
        total
    }
}
