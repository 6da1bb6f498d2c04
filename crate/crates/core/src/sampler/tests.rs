use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use super::*;
use crate::data::{validate_inputs, CountMatrix, CovariateMatrix, GroupAssignment};
use crate::simgen::{generate_zinb, ZinbSimConfig};

fn dataset(rows: &[Vec<u64>], labels: Vec<usize>, x: Option<Array2<f64>>) -> Dataset {
    let counts = CountMatrix::from_rows(rows).unwrap();
    let n = counts.n_samples();
    let cov = match x {
        Some(v) => {
            let ids = (1..=v.ncols()).map(|c| format!("x{c}")).collect();
            CovariateMatrix::new(v, ids).unwrap()
        }
        None => CovariateMatrix::empty(n),
    };
    validate_inputs(counts, cov, GroupAssignment::new(labels).unwrap()).unwrap()
}

fn unit_sf(n: usize) -> SizeFactors {
    SizeFactors::from_raw(&vec![1.0; n], None).unwrap()
}

fn small_dataset() -> Dataset {
    let rows = vec![
        vec![0, 3, 10, 1],
        vec![2, 0, 8, 0],
        vec![5, 1, 0, 2],
        vec![0, 4, 12, 0],
        vec![9, 0, 15, 3],
        vec![1, 2, 0, 1],
    ];
    let x = Array2::from_shape_vec((6, 2), vec![0.1, 1.0, -0.5, 0.2, 1.2, -1.0, -0.3, 0.4, 0.8, -0.2, -1.3, -0.4]).unwrap();
    dataset(&rows, vec![1, 1, 1, 2, 2, 2], Some(x))
}

#[test]
fn r_update_matches_two_point_oracle() {
    // one zero cell with λ = 1, φ = 1, a_π = b_π = 1
    let data = dataset(&[vec![0], vec![4]], vec![1, 2], None);
    let hp = Hyperparameters { a_pi: 1.0, b_pi: 1.0, ..Hyperparameters::default() };
    let sampler = Sampler::new(&data, &unit_sf(2), hp, ProposalScales::default(), false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut state = sampler.init_state(&mut rng);
    {
        let p = &mut state.taxa[0].params;
        p.mu0 = 0.0;
        p.phi = 1.0;
        p.gamma = false;
        p.mu_k.iter_mut().for_each(|m| *m = 0.0);
    }
    // weights: r=1 → Be(2,1)/Be(1,1) = 1/2; r=0 → Be(1,2)/Be(1,1) · NB(0) = 1/2 · 1/2
    let w1: f64 = 0.5;
    let w0 = 0.5 * 0.5;
    let oracle = w1 / (w1 + w0);
    assert!((oracle - 2.0 / 3.0).abs() < 1e-15);
    let draws = 200_000;
    let mut ones = 0;
    for _ in 0..draws {
        sampler.update_r(&mut state, &mut rng);
        ones += usize::from(state.taxa[0].r[0]);
    }
    let freq = ones as f64 / draws as f64;
    let se = (oracle * (1.0 - oracle) / draws as f64).sqrt();
    assert!((freq - oracle).abs() < 4.0 * se, "freq {freq}");
    assert!(!state.taxa[0].r[1]);
}

#[test]
fn r_update_prior_only_is_beta_mean() {
    let data = dataset(&[vec![0], vec![4]], vec![1, 2], None);
    let hp = Hyperparameters { a_pi: 1.0, b_pi: 3.0, ..Hyperparameters::default() };
    let sampler = Sampler::new(&data, &unit_sf(2), hp, ProposalScales::default(), true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut state = sampler.init_state(&mut rng);
    let draws = 100_000;
    let mut ones = 0;
    for _ in 0..draws {
        sampler.update_r(&mut state, &mut rng);
        ones += usize::from(state.taxa[0].r[0]);
    }
    assert!((ones as f64 / draws as f64 - 0.25).abs() < 0.01);
}

#[test]
fn init_respects_invariants() {
    let data = small_dataset();
    let sampler = Sampler::new(&data, &unit_sf(6), Hyperparameters::default(), ProposalScales::default(), false).unwrap();
    for seed in 0..20 {
        let state = sampler.init_state(&mut ChaCha8Rng::seed_from_u64(seed));
        state.check_invariants(&data).unwrap();
        for t in &state.taxa {
            assert_eq!(t.params.phi, 10.0);
            assert_eq!(t.params.mu_k[0], 0.0);
        }
    }
    let a = sampler.init_state(&mut ChaCha8Rng::seed_from_u64(1));
    let b = sampler.init_state(&mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(a, b);
}

#[test]
fn invariants_hold_after_every_sweep() {
    let data = small_dataset();
    let sampler = Sampler::new(&data, &unit_sf(6), Hyperparameters::default(), ProposalScales::default(), false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = sampler.init_state(&mut rng);
    for _ in 0..300 {
        sampler.sweep(&mut state, &mut rng).unwrap();
        state.check_invariants(&data).unwrap();
    }
}

#[test]
fn cached_kernel_matches_fresh_computation() {
    let data = small_dataset();
    let sampler = Sampler::new(&data, &unit_sf(6), Hyperparameters::default(), ProposalScales::default(), false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut state = sampler.init_state(&mut rng);
    for _ in 0..50 {
        sampler.update_r(&mut state, &mut rng);
        sampler.update_mu0(&mut state, &mut rng).unwrap();
        sampler.update_gamma_mu(&mut state, &mut rng).unwrap();
        sampler.update_delta_beta(&mut state, &mut rng).unwrap();
        sampler.update_phi(&mut state, &mut rng).unwrap();
        let mut fresh = state.clone();
        for j in 0..fresh.taxa.len() {
            sampler.refresh(j, &mut fresh.taxa[j]);
            let t = &state.taxa[j];
            for i in 0..6 {
                assert!((fresh.taxa[j].loglam[i] - t.loglam[i]).abs() < 1e-9);
                if !t.r[i] {
                    assert!((fresh.taxa[j].kern[i] - t.kern[i]).abs() < 1e-9);
                }
            }
            let lg = sampler.lgamma_part(j, t.params.phi);
            assert!((lg - t.lgamma_part).abs() < 1e-8);
        }
    }
}

#[test]
fn zero_shift_has_zero_likelihood_change() {
    let data = small_dataset();
    let sampler = Sampler::new(&data, &unit_sf(6), Hyperparameters::default(), ProposalScales::default(), false).unwrap();
    let mut state = sampler.init_state(&mut ChaCha8Rng::seed_from_u64(2));
    let all: Vec<usize> = (0..6).collect();
    let t = state.taxa[0].clone();
    assert_eq!(sampler.shift_delta(0, &t, &mut state.scratch, &all, |_| 0.0), 0.0);
}

#[test]
fn nan_ratio_is_numerical_failure() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(
        Sampler::accept(&mut rng, f64::NAN, 12, 3),
        Err(Error::NumericalFailure { iteration: 12, feature: 3 })
    );
    assert_eq!(Sampler::accept(&mut rng, f64::NEG_INFINITY, 0, 0), Ok(false));
    assert_eq!(Sampler::accept(&mut rng, 0.0, 0, 0), Ok(true));
}

#[test]
fn config_validation_and_draw_count() {
    assert!(ChainConfig { burn_in: 10, ..ChainConfig::new(10, 0) }.validate().is_err());
    assert!(ChainConfig { thin: 0, ..ChainConfig::new(10, 0) }.validate().is_err());
    let c = ChainConfig::default();
    assert_eq!((c.n_iter, c.burn_in, c.thin), (20_000, 10_000, 1));
    assert_eq!(ChainConfig { thin: 3, ..ChainConfig::new(10, 0) }.n_draws(), 2);

    let data = small_dataset();
    let cfg = ChainConfig { burn_in: 20, ..ChainConfig::new(21, 5) };
    let trace = run_chain(&data, &unit_sf(6), &Hyperparameters::default(), &ProposalScales::default(), &cfg).unwrap();
    assert_eq!(trace.n_draws(), 1);
    let cfg = ChainConfig { thin: 3, ..ChainConfig::new(40, 5) };
    let trace = run_chain(&data, &unit_sf(6), &Hyperparameters::default(), &ProposalScales::default(), &cfg).unwrap();
    assert_eq!(trace.n_draws(), cfg.n_draws());
    assert_eq!(trace.mu_k_draws(2, 0).len(), cfg.n_draws());
    assert!(trace.gamma_sums().iter().all(|&s| s <= cfg.n_draws() as u64));
}

#[test]
fn chains_are_deterministic_and_schedule_free() {
    let data = small_dataset();
    let hp = Hyperparameters::default();
    let sc = ProposalScales::default();
    let sf = unit_sf(6);
    let configs: Vec<ChainConfig> = (0..3).map(|s| ChainConfig { record_log: true, ..ChainConfig::new(200, s) }).collect();
    let seq: Vec<ChainTrace> = configs.iter().map(|c| run_chain(&data, &sf, &hp, &sc, c).unwrap()).collect();
    let par = run_chains_parallel(&data, &sf, &hp, &sc, &configs).unwrap();
    assert_eq!(seq, par);
    assert_eq!(run_chain(&data, &sf, &hp, &sc, &configs[0]).unwrap(), seq[0]);
    assert_ne!(seq[0].gamma_sums(), seq[1].gamma_sums());
    assert_eq!(seq[0].log().len(), 200);
    assert!(seq[0].log().iter().all(|row| row.log_posterior.is_finite()));
}

#[test]
fn duplicate_seeds_rejected() {
    let data = small_dataset();
    let configs = [ChainConfig::new(10, 1), ChainConfig::new(10, 1)];
    let err = run_chains_parallel(&data, &unit_sf(6), &Hyperparameters::default(), &ProposalScales::default(), &configs);
    assert!(matches!(err, Err(Error::InvalidInput(_))));
}

#[test]
fn adaptation_only_moves_scales_when_enabled() {
    let data = small_dataset();
    let sf = unit_sf(6);
    let hp = Hyperparameters::default();
    let sc = ProposalScales { tau_phi: 0.001, ..ProposalScales::default() };
    let fixed = run_chain(&data, &sf, &hp, &sc, &ChainConfig::new(400, 1)).unwrap();
    assert_eq!(*fixed.final_scales(), sc);
    let tuned = run_chain(&data, &sf, &hp, &sc, &ChainConfig { adapt: true, ..ChainConfig::new(4000, 1) }).unwrap();
    assert!(tuned.final_scales().tau_phi > 10.0 * sc.tau_phi);
}

fn one_taxon_nb(n: usize, mu0: f64, phi: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = mu0.exp();
    let rows: Vec<Vec<u64>> = (0..n)
        .map(|_| {
            let rate = Gamma::new(phi, lambda / phi).unwrap().sample(&mut rng);
            vec![Poisson::new(rate.max(1e-300)).unwrap().sample(&mut rng) as u64]
        })
        .collect();
    let labels = (0..n).map(|i| 1 + i % 2).collect();
    dataset(&rows, labels, None)
}

#[test]
fn recovers_baseline_and_dispersion_of_one_taxon() {
    let data = one_taxon_nb(50, 9.0, 10.0, 21);
    let trace = run_chain(&data, &unit_sf(50), &Hyperparameters::default(), &ProposalScales::default(), &ChainConfig::new(4000, 1)).unwrap();
    let mu0 = trace.mu0_moments().sum()[[0, 0]] / trace.n_draws() as f64;
    assert!((mu0 - 9.0).abs() < 0.5, "mu0 {mu0}");

    let data = one_taxon_nb(200, 3.0, 10.0, 22);
    let trace = run_chain(&data, &unit_sf(200), &Hyperparameters::default(), &ProposalScales::default(), &ChainConfig::new(4000, 2)).unwrap();
    let phi = trace.phi_moments().sum()[[0, 0]] / trace.n_draws() as f64;
    assert!((5.0..=20.0).contains(&phi), "phi {phi}");
}

#[test]
fn short_prior_only_run_is_calibrated() {
    let rows: Vec<Vec<u64>> = (0..6).map(|i| (0..6).map(|j| ((i * 7 + j * 3) % 5) as u64).collect()).collect();
    let x = Array2::from_shape_fn((6, 2), |(i, c)| ((i + 2 * c) % 4) as f64 - 1.5);
    let data = dataset(&rows, vec![1, 2, 1, 2, 1, 2], Some(x));
    let sc = ProposalScales { tau_mu0: 10.0, tau_mu: 1.0, tau_beta: 1.0, tau_phi: 100.0 };
    let cfg = ChainConfig { prior_only: true, ..ChainConfig::new(40_000, 9) };
    let trace = run_chain(&data, &unit_sf(6), &Hyperparameters::default(), &sc, &cfg).unwrap();
    let t = trace.n_draws() as f64;
    let p = trace.n_features() as f64;
    let gamma = trace.gamma_sums().iter().sum::<u64>() as f64 / (t * p);
    let delta = trace.delta_sums().sum() as f64 / (t * p * 2.0);
    assert!((gamma - 0.1).abs() < 0.03, "gamma {gamma}");
    assert!((delta - 0.4).abs() < 0.03, "delta {delta}");
    assert!((trace.mean_r_given_zero() - 0.5).abs() < 0.03);
}

#[test]
fn swapping_non_reference_labels_permutes_shifts() {
    // three groups; group 2 up, group 3 down for feature 1
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..90 {
        let g = 1 + i % 3;
        let shifts: [[f64; 3]; 2] = [[0.0, 2.0, -2.0], [0.0, 0.0, 0.0]];
        let row = (0..2)
            .map(|j| {
                let lambda = (4.0 + shifts[j][g - 1]).exp();
                let rate = Gamma::new(20.0, lambda / 20.0).unwrap().sample(&mut rng);
                Poisson::new(rate).unwrap().sample(&mut rng) as u64
            })
            .collect();
        rows.push(row);
        labels.push(g);
    }
    let swapped: Vec<usize> = labels.iter().map(|&g| [1, 3, 2][g - 1]).collect();
    let sf = unit_sf(90);
    let hp = Hyperparameters::default();
    let sc = ProposalScales::default();
    let cfg = ChainConfig::new(3000, 4);
    let a = run_chain(&dataset(&rows, labels, None), &sf, &hp, &sc, &cfg).unwrap();
    let b = run_chain(&dataset(&rows, swapped, None), &sf, &hp, &sc, &cfg).unwrap();
    let mean = |t: &ChainTrace, k: usize| t.mu_k_moments().sum()[[k - 1, 0]] / t.n_draws() as f64;
    assert!((mean(&a, 2) - 2.0).abs() < 0.3);
    assert!((mean(&a, 2) - mean(&b, 3)).abs() < 0.15);
    assert!((mean(&a, 3) - mean(&b, 2)).abs() < 0.15);
}

#[test]
fn recovers_strong_signal_from_model_data() {
    let sim = generate_zinb(&ZinbSimConfig { p: 8, n_disc: 3, seed: 5, ..ZinbSimConfig::default() }).unwrap();
    let d = &sim.data;
    let data = validate_inputs(d.counts.clone(), d.covariates.clone(), d.groups.clone()).unwrap();
    let trace = run_chain(&data, &sim.size_factors, &Hyperparameters::default(), &ProposalScales::default(), &ChainConfig::new(2000, 3)).unwrap();
    let n = trace.n_draws() as f64;
    for j in 0..8 {
        let ppi = trace.gamma_sums()[j] as f64 / n;
        if d.truth.gamma_true[j] {
            assert!(ppi > 0.9, "feature {j} ppi {ppi}");
            let m = trace.mu_k_moments().sum()[[1, j]] / n;
            assert!((m - d.truth.mu2_true[j]).abs() < 0.5);
        }
    }
    let acc = trace.acceptance();
    for stats in [acc.mu0, acc.mu_k, acc.beta, acc.phi] {
        let rate = stats.rate();
        assert!(rate > 0.05 && rate < 0.95, "acceptance {rate}");
    }
}
