//! The four subcommands and the fit pipeline they share.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;

use crate::data::{
    filter_low_abundance, validate_inputs, CountMatrix, CovariateMatrix, Dataset, GroupAssignment, Hyperparameters,
    ProposalScales,
};
use crate::evaluation::{roc_curve, score_vectors, ScoreReport};
use crate::inference::{chain_concordance, summarize, Concordance, PosteriorSummary};
use crate::normalization::{estimate, NormMethod, NormOptions, SizeFactors};
use crate::sampler::{run_chains_parallel, ChainConfig, ChainTrace};
use crate::simgen::{generate, CovariatePool, SimConfig, SimData};

use super::io::{self, num, CsvOut};
use super::{CliError, Outcome, RunConfig};

/// Abundance filter thresholds; `min_groups = None` means every group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSettings {
    pub min_count: usize,
    pub min_groups: Option<usize>,
}

/// Everything needed to go from a raw bundle to posterior summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub norm: NormMethod,
    pub norm_opts: NormOptions,
    pub filter: Option<FilterSettings>,
    pub standardize: bool,
    pub chains: Vec<ChainConfig>,
    pub hp: Hyperparameters,
    pub scales: ProposalScales,
    pub fdr: f64,
    pub floor: f64,
}

impl FitSettings {
    /// Settings from a resolved config; chain seeds default to
    /// `base_seed, base_seed + 1, …` unless `seeds` lists them.
    pub fn from_config(cfg: &RunConfig, base_seed: u64) -> Result<Self, CliError> {
        let n_chains: usize = cfg.get("chains")?;
        if n_chains == 0 {
            return Err(CliError::InvalidValue { key: "chains".into(), value: "0".into() });
        }
        let iterations: usize = cfg.get("iterations")?;
        let burn_in = match cfg.raw("burn_in") {
            None | Some("auto") => iterations / 2,
            Some(_) => cfg.get("burn_in")?,
        };
        let seeds: Vec<u64> = match cfg.raw("seeds") {
            Some(list) => {
                let parsed = list
                    .split(',')
                    .map(|s| s.trim().parse::<u64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| CliError::InvalidValue { key: "seeds".into(), value: list.into() })?;
                if parsed.len() != n_chains {
                    return Err(CliError::InvalidValue { key: "seeds".into(), value: list.into() });
                }
                parsed
            }
            None => (0..n_chains as u64).map(|c| base_seed.wrapping_add(c)).collect(),
        };
        let prior_only = bool_or(cfg, "prior_only", false)?;
        let record_log = bool_or(cfg, "trace", false)?;
        let thin: usize = cfg.get("thin")?;
        let adapt = cfg.get_bool("adapt")?;
        let chains: Vec<ChainConfig> = seeds
            .iter()
            .map(|&seed| ChainConfig { n_iter: iterations, burn_in, seed, thin, prior_only, adapt, record_log })
            .collect();
        for c in &chains {
            c.validate()?;
        }
        let filter = if cfg.get_bool("filter")? {
            let min_groups = match cfg.raw("min_groups") {
                None | Some("all") => None,
                Some(_) => Some(cfg.get("min_groups")?),
            };
            Some(FilterSettings { min_count: cfg.get("min_count")?, min_groups })
        } else {
            None
        };
        let hp = Hyperparameters {
            a_pi: cfg.get("a_pi")?,
            b_pi: cfg.get("b_pi")?,
            a_omega: cfg.get("a_omega")?,
            b_omega: cfg.get("b_omega")?,
            a_p: cfg.get("a_p")?,
            b_p: cfg.get("b_p")?,
            a_phi: cfg.get("a_phi")?,
            b_phi: cfg.get("b_phi")?,
            sigma0_sq: cfg.get("sigma0_sq")?,
            a_t: cfg.get("a_t")?,
            b_t: cfg.get("b_t")?,
        };
        hp.validate()?;
        let scales = ProposalScales {
            tau_mu0: cfg.get("tau_mu0")?,
            tau_mu: cfg.get("tau_mu")?,
            tau_beta: cfg.get("tau_beta")?,
            tau_phi: cfg.get("tau_phi")?,
        };
        scales.validate()?;
        let norm_opts = NormOptions {
            l_css: cfg.get("l_css")?,
            trim_m: cfg.get("trim_m")?,
            trim_a: cfg.get("trim_a")?,
            ..NormOptions::default()
        };
        Ok(Self {
            norm: cfg.get("norm")?,
            norm_opts,
            filter,
            standardize: bool_or(cfg, "standardize", true)?,
            chains,
            hp,
            scales,
            fdr: cfg.get("fdr")?,
            floor: cfg.get("concordance_floor")?,
        })
    }
}

/// A switch that the current subcommand may not expose.
fn bool_or(cfg: &RunConfig, key: &str, default: bool) -> Result<bool, CliError> {
    match cfg.source(key) {
        Some(_) => cfg.get_bool(key),
        None => Ok(default),
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub dataset: Dataset,
    /// indices of the input features that survived filtering
    pub kept: Vec<usize>,
    pub size_factors: SizeFactors,
    pub traces: Vec<ChainTrace>,
    pub summary: PosteriorSummary,
    pub concordance: Option<Concordance>,
}

fn kept_indices(all: &CountMatrix, kept: &CountMatrix) -> Vec<usize> {
    let pos: HashMap<&str, usize> = all.feature_ids().iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();
    kept.feature_ids().iter().map(|s| pos[s.as_str()]).collect()
}

/// Filter, validate, normalise, run the chains and summarise.
pub fn fit_bundle(
    counts: CountMatrix,
    covariates: CovariateMatrix,
    groups: GroupAssignment,
    settings: &FitSettings,
) -> Result<FitResult, CliError> {
    let (counts, kept) = match settings.filter {
        Some(f) => {
            let min_groups = f.min_groups.unwrap_or(groups.n_groups());
            let filtered = filter_low_abundance(&counts, &groups, f.min_count, min_groups)?;
            let kept = kept_indices(&counts, &filtered);
            (filtered, kept)
        }
        None => {
            let p = counts.n_features();
            (counts, (0..p).collect())
        }
    };
    let mut dataset = validate_inputs(counts, covariates, groups)?;
    if settings.standardize && dataset.n_covariates() > 0 {
        dataset = dataset.standardized()?;
    }
    let size_factors = estimate(dataset.counts(), settings.norm, &settings.norm_opts)?;
    let traces = run_chains_parallel(&dataset, &size_factors, &settings.hp, &settings.scales, &settings.chains)?;
    let summary = summarize(
        &traces,
        settings.fdr,
        dataset.counts().feature_ids(),
        dataset.covariates().covariate_ids(),
    )?;
    let concordance = if traces.len() >= 2 { Some(chain_concordance(&traces, settings.floor)?) } else { None };
    Ok(FitResult { dataset, kept, size_factors, traces, summary, concordance })
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(cfg.raw("out").unwrap_or("zinb_out"));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_fit_outputs(dir: &Path, fit: &FitResult) -> Result<(), CliError> {
    let s = &fit.summary;
    let mut w = CsvOut::create(&dir.join("ppi_gamma.csv"))?;
    w.row(["feature_id", "ppi", "selected"])?;
    for (j, id) in s.feature_ids.iter().enumerate() {
        w.row([id.as_str(), &num(s.ppi_gamma[j]), flag(s.selected_gamma[j])])?;
    }
    w.finish()?;

    let mut w = CsvOut::create(&dir.join("ppi_delta.csv"))?;
    w.row(["feature_id", "covariate_id", "ppi", "selected", "beta_mean"])?;
    for (j, id) in s.feature_ids.iter().enumerate() {
        for (r, cov) in s.covariate_ids.iter().enumerate() {
            w.row([
                id.as_str(),
                cov.as_str(),
                &num(s.ppi_delta[[r, j]]),
                flag(s.selected_delta[[r, j]]),
                &num(s.beta_mean[[r, j]]),
            ])?;
        }
    }
    w.finish()?;

    let shift_groups: Vec<usize> = (1..=s.mu_k_mean.nrows()).filter(|&k| k != s.reference).collect();
    let mut w = CsvOut::create(&dir.join("posterior_summary.csv"))?;
    let mut header = vec!["feature_id".to_string(), "mu0_mean".into()];
    for k in &shift_groups {
        header.extend([format!("mu{k}_mean"), format!("mu{k}_lower"), format!("mu{k}_upper")]);
    }
    header.push("phi_mean".into());
    w.row(&header)?;
    for (j, id) in s.feature_ids.iter().enumerate() {
        let mut row = vec![id.clone(), num(s.mu0_mean[j])];
        for &k in &shift_groups {
            row.extend([num(s.mu_k_mean[[k - 1, j]]), num(s.mu_k_lower[[k - 1, j]]), num(s.mu_k_upper[[k - 1, j]])]);
        }
        row.push(num(s.phi_mean[j]));
        w.row(&row)?;
    }
    w.finish()?;

    let mut w = CsvOut::create(&dir.join("convergence.csv"))?;
    w.row(["chain_a", "chain_b", "gamma_correlation", "delta_correlation", "floor", "pass"])?;
    if let Some(c) = &fit.concordance {
        let m = c.gamma.nrows();
        for a in 0..m {
            for b in a + 1..m {
                let g = c.gamma[[a, b]];
                w.row([
                    (a + 1).to_string(),
                    (b + 1).to_string(),
                    num(g),
                    num(c.delta[[a, b]]),
                    num(c.floor),
                    flag(g >= c.floor).to_string(),
                ])?;
            }
        }
        let min_delta = c.delta.iter().copied().fold(f64::INFINITY, f64::min);
        w.row(["all", "all", &num(c.min_gamma()), &num(min_delta), &num(c.floor), flag(c.converged)])?;
    }
    w.finish()?;

    let mut w = CsvOut::create(&dir.join("size_factors.csv"))?;
    w.row(["sample_id", "size_factor", "method"])?;
    let method = fit.size_factors.method().map_or("given", NormMethod::as_str);
    for (id, v) in fit.dataset.counts().sample_ids().iter().zip(fit.size_factors.values()) {
        w.row([id.as_str(), &num(*v), method])?;
    }
    w.finish()
}

fn write_trace_logs(dir: &Path, traces: &[ChainTrace]) -> Result<(), CliError> {
    for (c, t) in traces.iter().enumerate() {
        if t.log().is_empty() {
            continue;
        }
        let mut w = CsvOut::create(&dir.join(format!("trace_chain{}.csv", c + 1)))?;
        let moves = ["mu0", "gamma_add", "gamma_delete", "mu_k", "delta_add", "delta_delete", "beta", "phi"];
        let mut header = vec!["iteration".to_string(), "log_posterior".into(), "n_gamma".into(), "n_delta".into()];
        for m in moves {
            header.extend([format!("{m}_accepted"), format!("{m}_proposed")]);
        }
        w.row(&header)?;
        for row in t.log() {
            let a = row.acceptance;
            let stats = [a.mu0, a.gamma_add, a.gamma_delete, a.mu_k, a.delta_add, a.delta_delete, a.beta, a.phi];
            let mut out = vec![row.iteration.to_string(), num(row.log_posterior), row.n_gamma.to_string(), row.n_delta.to_string()];
            for s in stats {
                out.extend([s.accepted.to_string(), s.proposed.to_string()]);
            }
            w.row(&out)?;
        }
        w.finish()?;
    }
    Ok(())
}

pub fn fit_command(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let settings = FitSettings::from_config(cfg, cfg.get("seed")?)?;
    let counts_path = PathBuf::from(cfg.raw("counts").unwrap_or_default());
    let groups_path = PathBuf::from(cfg.raw("groups").unwrap_or_default());
    let cov_path = cfg.raw("covariates").map(PathBuf::from);
    let (counts, cov, groups) = io::read_bundle(&counts_path, cov_path.as_deref(), &groups_path, cfg.get("reference")?)?;
    let fit = fit_bundle(counts, cov, groups, &settings)?;
    let dir = out_dir(cfg)?;
    write_fit_outputs(&dir, &fit)?;
    write_trace_logs(&dir, &fit.traces)?;
    cfg.write_resolved(&dir)?;
    Ok(match &fit.concordance {
        Some(c) if !c.converged => Outcome::ConvergenceWarning,
        _ => Outcome::Success,
    })
}

pub fn sim_config(cfg: &RunConfig, seed: u64) -> Result<SimConfig, CliError> {
    Ok(SimConfig {
        n: cfg.get("n")?,
        p: cfg.get("p")?,
        n_disc: cfg.get("n_disc")?,
        sigma_e: cfg.get("sigma_e")?,
        pi0: cfg.get("pi0")?,
        n_covariates: cfg.get("n_covariates")?,
        m_active: cfg.get("m_active")?,
        total_min: cfg.get("total_min")?,
        total_max: cfg.get("total_max")?,
        seed,
        ..SimConfig::default()
    })
}

fn read_pool(cfg: &RunConfig) -> Result<Option<(CovariateMatrix, GroupAssignment)>, CliError> {
    match (cfg.raw("pool_covariates"), cfg.raw("pool_groups")) {
        (None, None) => Ok(None),
        (Some(c), Some(g)) => {
            let (ids, cov) = io::read_covariates(Path::new(c))?;
            let (gids, labels) = io::read_groups(Path::new(g))?;
            let order = io::align(&ids, &gids, "pool groups")?;
            let groups = GroupAssignment::new(order.iter().map(|&i| labels[i]).collect())?;
            Ok(Some((cov, groups)))
        }
        _ => Err(CliError::Usage("pool_covariates and pool_groups must be given together".into())),
    }
}

fn write_truth(dir: &Path, sim: &SimData) -> Result<(), CliError> {
    let t = &sim.truth;
    let mut w = CsvOut::create(&dir.join("truth_gamma.csv"))?;
    w.row(["feature_id", "gamma_true", "mu0_true", "mu2_true"])?;
    for (j, id) in sim.counts.feature_ids().iter().enumerate() {
        w.row([id.as_str(), flag(t.gamma_true[j]), &num(t.mu0_true[j]), &num(t.mu2_true[j])])?;
    }
    w.finish()?;
    let mut w = CsvOut::create(&dir.join("truth_delta.csv"))?;
    w.row(["feature_id", "covariate_id", "delta_true", "beta_true"])?;
    for (j, id) in sim.counts.feature_ids().iter().enumerate() {
        for (r, cov) in sim.covariates.covariate_ids().iter().enumerate() {
            w.row([id.as_str(), cov.as_str(), flag(t.delta_true[[r, j]]), &num(t.beta_true[[r, j]])])?;
        }
    }
    w.finish()
}

pub fn simulate_command(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let config = sim_config(cfg, cfg.get("seed")?)?;
    let pool = read_pool(cfg)?;
    let sim = generate(&config, pool.as_ref().map(|(c, g)| CovariatePool { covariates: c, groups: g }))?;
    let dir = out_dir(cfg)?;
    let ids = sim.counts.sample_ids().to_vec();
    io::write_counts(&dir.join("counts.csv"), &sim.counts)?;
    io::write_covariates(&dir.join("covariates.csv"), &ids, &sim.covariates)?;
    io::write_groups(&dir.join("groups.csv"), &ids, &sim.groups)?;
    write_truth(&dir, &sim)?;
    cfg.write_resolved(&dir)?;
    Ok(Outcome::Success)
}

pub const SCORE_HEADER: [&str; 20] = [
    "auc_gamma",
    "auc_delta",
    "gamma_tp",
    "gamma_tn",
    "gamma_fp",
    "gamma_fn",
    "gamma_sensitivity",
    "gamma_specificity",
    "gamma_fdr",
    "gamma_mcc",
    "delta_tp",
    "delta_tn",
    "delta_fp",
    "delta_fn",
    "delta_sensitivity",
    "delta_specificity",
    "delta_fdr",
    "delta_fpr",
    "delta_mcc",
    "null_delta_fpr",
];

/// Report values in [`SCORE_HEADER`] order, NaN where undefined.
pub fn score_values(r: &ScoreReport) -> [f64; 20] {
    let (g, d) = (&r.gamma, &r.delta);
    [
        r.auc_gamma.unwrap_or(f64::NAN),
        r.auc_delta.unwrap_or(f64::NAN),
        g.tp as f64,
        g.tn as f64,
        g.fp as f64,
        g.fn_ as f64,
        g.sensitivity,
        g.specificity,
        g.fdr,
        g.mcc,
        d.tp as f64,
        d.tn as f64,
        d.fp as f64,
        d.fn_ as f64,
        d.sensitivity,
        d.specificity,
        d.fdr,
        d.fpr,
        d.mcc,
        r.null_delta_fpr.unwrap_or(f64::NAN),
    ]
}

fn bool_cell(path: &str, line: usize, v: &str) -> Result<bool, CliError> {
    match v {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        _ => Err(CliError::Parse { path: path.into(), line, column: 0, message: format!("expected 0 or 1, found {v:?}") }),
    }
}

fn num_cell(path: &str, line: usize, v: &str) -> Result<f64, CliError> {
    v.parse()
        .map_err(|_| CliError::Parse { path: path.into(), line, column: 0, message: format!("expected a number, found {v:?}") })
}

/// `key -> (line, row)` for a table whose key spans the first `width` columns.
fn keyed(path: &Path, width: usize, min_cols: usize) -> Result<(String, HashMap<String, (usize, Vec<String>)>), CliError> {
    let display = path.display().to_string();
    let table = io::read_table(path)?;
    if table.header.len() < min_cols {
        return Err(CliError::Parse { path: display, line: 1, column: 1, message: format!("expected {min_cols} columns") });
    }
    let mut map = HashMap::new();
    for (line, row) in table.rows {
        map.insert(row[..width].join("\u{1f}"), (line, row));
    }
    Ok((display, map))
}

pub fn evaluate_command(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fit_dir = PathBuf::from(cfg.raw("fit_dir").unwrap_or_default());
    let truth_dir = PathBuf::from(cfg.raw("truth_dir").unwrap_or_default());
    let gamma_fit = io::read_table(&fit_dir.join("ppi_gamma.csv"))?;
    let (tg_path, truth_gamma) = keyed(&truth_dir.join("truth_gamma.csv"), 1, 2)?;
    let (fd_path, delta_fit) = keyed(&fit_dir.join("ppi_delta.csv"), 2, 4)?;
    let (td_path, truth_delta) = keyed(&truth_dir.join("truth_delta.csv"), 2, 3)?;
    let fg_path = fit_dir.join("ppi_gamma.csv").display().to_string();

    let (mut ppi_g, mut sel_g, mut true_g) = (Vec::new(), Vec::new(), Vec::new());
    let (mut ppi_d, mut sel_d, mut true_d) = (Vec::new(), Vec::new(), Vec::new());
    let mut delta_keys: Vec<&String> = delta_fit.keys().collect();
    delta_keys.sort();
    for (line, row) in &gamma_fit.rows {
        let (tline, trow) = truth_gamma
            .get(&row[0])
            .ok_or_else(|| CliError::UnalignedSampleIds(format!("feature {} has no truth", row[0])))?;
        ppi_g.push(num_cell(&fg_path, *line, &row[1])?);
        sel_g.push(bool_cell(&fg_path, *line, &row[2])?);
        true_g.push(bool_cell(&tg_path, *tline, &trow[1])?);
    }
    for k in delta_keys {
        let (line, row) = &delta_fit[k];
        let (tline, trow) = truth_delta
            .get(k)
            .ok_or_else(|| CliError::UnalignedSampleIds(format!("feature {} / covariate {} has no truth", row[0], row[1])))?;
        ppi_d.push(num_cell(&fd_path, *line, &row[2])?);
        sel_d.push(bool_cell(&fd_path, *line, &row[3])?);
        true_d.push(bool_cell(&td_path, *tline, &trow[2])?);
    }
    let report = score_vectors(&ppi_g, &sel_g, &true_g, &ppi_d, &sel_d, &true_d)?;
    let dir = out_dir(cfg)?;
    let mut w = CsvOut::create(&dir.join("scores.csv"))?;
    w.row(SCORE_HEADER)?;
    w.row(score_values(&report).map(num))?;
    w.finish()?;
    write_roc(&dir.join("roc_gamma.csv"), &ppi_g, &true_g)?;
    write_roc(&dir.join("roc_delta.csv"), &ppi_d, &true_d)?;
    cfg.write_resolved(&dir)?;
    Ok(Outcome::Success)
}

fn write_roc(path: &Path, scores: &[f64], truth: &[bool]) -> Result<(), CliError> {
    let mut w = CsvOut::create(path)?;
    w.row(["fpr", "tpr"])?;
    // single-class truth has no curve; the header alone is written
    if let Ok(points) = roc_curve(scores, truth) {
        for (f, t) in points {
            w.row([num(f), num(t)])?;
        }
    }
    w.finish()
}

/// Scores and ROC inputs of one simulate-fit-score replicate.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub report: ScoreReport,
    pub ppi_gamma: Vec<f64>,
    pub gamma_true: Vec<bool>,
    pub ppi_delta: Vec<f64>,
    pub delta_true: Vec<bool>,
    pub concordance: Option<Concordance>,
}

/// Generate one data set, fit it and score against the retained truth.
pub fn run_replicate(sim: &SimConfig, pool: Option<CovariatePool<'_>>, settings: &FitSettings) -> Result<Replicate, CliError> {
    let data = generate(sim, pool)?;
    let truth = data.truth.clone();
    let fit = fit_bundle(data.counts, data.covariates, data.groups, settings)?;
    let gamma_true: Vec<bool> = fit.kept.iter().map(|&j| truth.gamma_true[j]).collect();
    let r = truth.delta_true.nrows();
    let delta_true = Array2::from_shape_fn((r, fit.kept.len()), |(c, j)| truth.delta_true[[c, fit.kept[j]]]);
    let s = &fit.summary;
    let ppi_delta: Vec<f64> = s.ppi_delta.iter().copied().collect();
    let delta_flat: Vec<bool> = delta_true.iter().copied().collect();
    let report = score_vectors(
        &s.ppi_gamma,
        &s.selected_gamma,
        &gamma_true,
        &ppi_delta,
        &s.selected_delta.iter().copied().collect::<Vec<_>>(),
        &delta_flat,
    )?;
    Ok(Replicate {
        report,
        ppi_gamma: s.ppi_gamma.clone(),
        gamma_true,
        ppi_delta,
        delta_true: delta_flat,
        concordance: fit.concordance,
    })
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    (m, sd)
}

pub fn sim_study_command(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let reps: usize = cfg.get("reps")?;
    let seed: u64 = cfg.get("seed")?;
    let pool = read_pool(cfg)?;
    // validate settings up front so a typo fails once, not per replicate
    FitSettings::from_config(cfg, seed)?;
    sim_config(cfg, seed)?.validate()?;

    let results: Vec<(u64, Result<Replicate, CliError>)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let data_seed = seed.wrapping_add(r);
            let run = (|| {
                let settings = FitSettings::from_config(cfg, data_seed.wrapping_mul(1000).wrapping_add(1))?;
                let sim = sim_config(cfg, data_seed)?;
                run_replicate(&sim, pool.as_ref().map(|(c, g)| CovariatePool { covariates: c, groups: g }), &settings)
            })();
            (data_seed, run)
        })
        .collect();

    let dir = out_dir(cfg)?;
    let roc_dir = dir.join("roc");
    std::fs::create_dir_all(&roc_dir).map_err(|e| CliError::Io(e.to_string()))?;
    let mut w = CsvOut::create(&dir.join("scores.csv"))?;
    let mut header = vec!["replicate", "seed", "status"];
    header.extend(SCORE_HEADER);
    w.row(&header)?;
    let mut ok_values: Vec<[f64; 20]> = Vec::new();
    for (r, (data_seed, res)) in results.iter().enumerate() {
        let mut row = vec![(r + 1).to_string(), data_seed.to_string()];
        match res {
            Ok(rep) => {
                let v = score_values(&rep.report);
                ok_values.push(v);
                row.push("ok".into());
                row.extend(v.iter().map(|&x| num(x)));
                write_roc(&roc_dir.join(format!("rep{}_gamma.csv", r + 1)), &rep.ppi_gamma, &rep.gamma_true)?;
                write_roc(&roc_dir.join(format!("rep{}_delta.csv", r + 1)), &rep.ppi_delta, &rep.delta_true)?;
            }
            Err(e) => {
                eprintln!("replicate {} (seed {data_seed}) failed: {e}", r + 1);
                row.push(format!("failed: {e}"));
                row.extend(std::iter::repeat("NA".to_string()).take(SCORE_HEADER.len()));
            }
        }
        w.row(&row)?;
    }
    w.finish()?;

    let mut w = CsvOut::create(&dir.join("aggregate.csv"))?;
    let mut header = vec!["statistic", "n_ok"];
    header.extend(SCORE_HEADER);
    w.row(&header)?;
    let cols: Vec<(f64, f64)> =
        (0..SCORE_HEADER.len()).map(|k| mean_sd(&ok_values.iter().map(|v| v[k]).collect::<Vec<_>>())).collect();
    for (name, pick) in [("mean", 0usize), ("sd", 1)] {
        let mut row = vec![name.to_string(), ok_values.len().to_string()];
        row.extend(cols.iter().map(|c| num(if pick == 0 { c.0 } else { c.1 })));
        w.row(&row)?;
    }
    w.finish()?;
    cfg.write_resolved(&dir)?;
    Ok(Outcome::Success)
}
