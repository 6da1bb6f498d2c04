//! Settings resolution: command-line flag, then config file, then default.
//!
//! Every setting is declared once in [`KEYS`]; the table drives the clap
//! flags, the accepted config-file keys and the `run_config.resolved` dump.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Fit,
    Simulate,
    Evaluate,
    SimStudy,
}

impl Subcommand {
    pub const ALL: [Subcommand; 4] = [Self::Fit, Self::Simulate, Self::Evaluate, Self::SimStudy];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fit => "fit",
            Self::Simulate => "simulate",
            Self::Evaluate => "evaluate",
            Self::SimStudy => "sim-study",
        }
    }

    fn about(self) -> &'static str {
        match self {
            Self::Fit => "Fit the model to a count matrix and write posterior summaries",
            Self::Simulate => "Write a synthetic Dirichlet-multinomial data set with its truth",
            Self::Evaluate => "Score a fit directory against a simulation truth directory",
            Self::SimStudy => "Repeat simulate, fit and evaluate over several seeds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Value,
    /// boolean; `--flag` alone means true
    Switch,
}

const FIT: u8 = 1;
const SIM: u8 = 2;
const EVAL: u8 = 4;
const STUDY: u8 = 8;

fn bit(cmd: Subcommand) -> u8 {
    match cmd {
        Subcommand::Fit => FIT,
        Subcommand::Simulate => SIM,
        Subcommand::Evaluate => EVAL,
        Subcommand::SimStudy => STUDY,
    }
}

struct Key {
    name: &'static str,
    default: &'static str,
    kind: Kind,
    commands: u8,
    help: &'static str,
}

const fn key(name: &'static str, default: &'static str, commands: u8, help: &'static str) -> Key {
    Key { name, default, kind: Kind::Value, commands, help }
}

const fn switch(name: &'static str, default: &'static str, commands: u8, help: &'static str) -> Key {
    Key { name, default, kind: Kind::Switch, commands, help }
}

/// Empty default means "unset".
const KEYS: &[Key] = &[
    key("out", "zinb_out", FIT | SIM | EVAL | STUDY, "output directory"),
    key("counts", "", FIT, "count matrix: sample_id then one column per feature"),
    key("covariates", "", FIT, "covariate table: sample_id then one column per covariate"),
    key("groups", "", FIT, "group table: sample_id, group (labels 1..K)"),
    key("reference", "1", FIT, "reference group label"),
    key("norm", "css", FIT | STUDY, "size factors: css, gmpr, q75, tmm or rle"),
    key("l_css", "50", FIT | STUDY, "CSS percentile"),
    key("trim_m", "0.3", FIT | STUDY, "TMM trim on log ratios"),
    key("trim_a", "0.05", FIT | STUDY, "TMM trim on average log abundance"),
    switch("filter", "true", FIT | STUDY, "apply the abundance filter"),
    key("min_count", "2", FIT | STUDY, "nonzero samples required per group"),
    key("min_groups", "all", FIT | STUDY, "groups that must pass min_count ('all' or a number)"),
    switch("standardize", "true", FIT, "centre and scale covariates"),
    key("chains", "4", FIT | STUDY, "number of chains"),
    key("iterations", "20000", FIT | STUDY, "sweeps per chain"),
    key("burn_in", "auto", FIT | STUDY, "discarded sweeps ('auto' = half)"),
    key("thin", "1", FIT | STUDY, "keep every thin-th sweep"),
    key("seed", "1", FIT | SIM | STUDY, "base seed"),
    key("seeds", "", FIT, "explicit comma-separated chain seeds"),
    key("fdr", "0.05", FIT | EVAL | STUDY, "Bayesian FDR target"),
    key("concordance_floor", "0.95", FIT | STUDY, "minimum pairwise PPI correlation"),
    switch("prior_only", "false", FIT, "drop the likelihood (prior calibration)"),
    switch("adapt", "false", FIT | STUDY, "tune proposal scales during burn-in"),
    switch("trace", "false", FIT, "write a per-sweep trace for each chain"),
    key("a_pi", "1", FIT | STUDY, "Beta prior on the extra-zero rate"),
    key("b_pi", "1", FIT | STUDY, "Beta prior on the extra-zero rate"),
    key("a_omega", "0.2", FIT | STUDY, "Beta prior on the discriminator rate"),
    key("b_omega", "1.8", FIT | STUDY, "Beta prior on the discriminator rate"),
    key("a_p", "0.4", FIT | STUDY, "Beta prior on the covariate inclusion rate"),
    key("b_p", "0.6", FIT | STUDY, "Beta prior on the covariate inclusion rate"),
    key("a_phi", "1", FIT | STUDY, "Gamma shape of the dispersion prior"),
    key("b_phi", "0.01", FIT | STUDY, "Gamma rate of the dispersion prior"),
    key("sigma0_sq", "100", FIT | STUDY, "variance of the baseline prior"),
    key("a_t", "2", FIT | STUDY, "inverse-gamma shape of the slab variance"),
    key("b_t", "10", FIT | STUDY, "inverse-gamma scale of the slab variance"),
    key("tau_mu0", "0.5", FIT | STUDY, "baseline random-walk scale"),
    key("tau_mu", "1", FIT | STUDY, "group-shift proposal scale"),
    key("tau_beta", "1", FIT | STUDY, "covariate-effect proposal scale"),
    key("tau_phi", "1", FIT | STUDY, "dispersion random-walk scale"),
    key("n", "60", SIM | STUDY, "simulated samples (even)"),
    key("p", "300", SIM | STUDY, "simulated features"),
    key("n_disc", "20", SIM | STUDY, "true discriminators"),
    key("sigma_e", "1", SIM | STUDY, "log-scale noise s.d."),
    key("pi0", "0.4", SIM | STUDY, "structural-zero fraction"),
    key("n_covariates", "7", SIM | STUDY, "covariates drawn per sample"),
    key("m_active", "4", SIM | STUDY, "active covariates per feature"),
    key("total_min", "20000000", SIM | STUDY, "smallest library size"),
    key("total_max", "60000000", SIM | STUDY, "largest library size"),
    key("pool_covariates", "", SIM | STUDY, "covariate pool to sample rows from"),
    key("pool_groups", "", SIM | STUDY, "group labels of the pool rows"),
    key("fit_dir", "", EVAL, "directory written by fit"),
    key("truth_dir", "", EVAL, "directory written by simulate"),
    key("reps", "10", STUDY, "replicates"),
];

fn required(cmd: Subcommand) -> &'static [&'static str] {
    match cmd {
        Subcommand::Fit => &["counts", "groups"],
        Subcommand::Evaluate => &["fit_dir", "truth_dir"],
        Subcommand::Simulate | Subcommand::SimStudy => &[],
    }
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

pub fn command() -> Command {
    let mut root = Command::new("zinb")
        .about("Bayesian zero-inflated negative binomial regression for count data")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for cmd in Subcommand::ALL {
        let mut sub = Command::new(cmd.name()).about(cmd.about()).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key = value settings file; flags take precedence"),
        );
        for k in KEYS.iter().filter(|k| k.commands & bit(cmd) != 0) {
            let help = if k.default.is_empty() { k.help.to_string() } else { format!("{} [default: {}]", k.help, k.default) };
            let mut arg = Arg::new(k.name).long(flag_name(k.name)).help(help);
            arg = match k.kind {
                Kind::Value => arg.value_name("VALUE").action(ArgAction::Set),
                Kind::Switch => arg
                    .value_name("BOOL")
                    .num_args(0..=1)
                    .default_missing_value("true")
                    .action(ArgAction::Set),
            };
            sub = sub.arg(arg);
        }
        root = root.subcommand(sub);
    }
    root
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Flag,
    File,
    Default,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Flag => "flag",
            Source::File => "file",
            Source::Default => "default",
        })
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub config_file: Option<String>,
    values: BTreeMap<&'static str, (String, Source)>,
}

/// Parse a flat `key = value` file; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", no + 1)))?;
        out.push((k.trim().replace('-', "_"), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Resolve from parsed arguments of one subcommand.
    pub fn from_matches(cmd: Subcommand, m: &ArgMatches) -> Result<Self, CliError> {
        let config_file = m.get_one::<String>("config").cloned();
        let file_values = match &config_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
                parse_config_file(&text)?
            }
            None => Vec::new(),
        };
        let mut values = BTreeMap::new();
        for k in KEYS.iter().filter(|k| k.commands & bit(cmd) != 0) {
            values.insert(k.name, (k.default.to_string(), Source::Default));
        }
        for (k, v) in file_values {
            let known = KEYS.iter().find(|key| key.name == k).ok_or_else(|| CliError::UnknownKey(k.clone()))?;
            if known.commands & bit(cmd) == 0 {
                return Err(CliError::UnknownKey(format!("{k} (not used by {})", cmd.name())));
            }
            values.insert(known.name, (v, Source::File));
        }
        for k in KEYS.iter().filter(|k| k.commands & bit(cmd) != 0) {
            if m.value_source(k.name) == Some(ValueSource::CommandLine) {
                let v = m.get_one::<String>(k.name).cloned().unwrap_or_default();
                values.insert(k.name, (v, Source::Flag));
            }
        }
        let missing: Vec<String> = required(cmd)
            .iter()
            .filter(|k| values.get(*k).map_or(true, |(v, _)| v.is_empty()))
            .map(|k| format!("--{}", flag_name(k)))
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Usage(format!("{} requires {}", cmd.name(), missing.join(", "))));
        }
        Ok(Self { subcommand: cmd, config_file, values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str()).filter(|v| !v.is_empty())
    }

    pub fn source(&self, key: &str) -> Option<Source> {
        self.values.get(key).map(|(_, s)| *s)
    }

    /// Override a value programmatically (recorded as a flag).
    pub fn set(&mut self, key: &'static str, value: impl Into<String>) {
        self.values.insert(key, (value.into(), Source::Flag));
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.raw(key).ok_or_else(|| CliError::InvalidValue { key: key.into(), value: String::new() })?;
        v.parse().map_err(|_| CliError::InvalidValue { key: key.into(), value: v.into() })
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(_) => self.get(key).map(Some),
        }
    }

    pub fn get_bool(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key).map(str::to_ascii_lowercase).as_deref() {
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            other => Err(CliError::InvalidValue { key: key.into(), value: other.unwrap_or("").into() }),
        }
    }

    /// `key = value  # source` lines in key order.
    pub fn resolved(&self) -> String {
        let mut out = format!("# zinb {}\n", self.subcommand.name());
        if let Some(f) = &self.config_file {
            out.push_str(&format!("# config file: {f}\n"));
        }
        for (k, (v, s)) in &self.values {
            out.push_str(&format!("{k} = {v}  # {s}\n"));
        }
        out
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::write(dir.join("run_config.resolved"), self.resolved()).map_err(|e| CliError::Io(e.to_string()))
    }
}
