use std::path::Path;
use std::process::{Command, Output};

fn zinb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zinb")).args(args).env("ZINB_THREADS", "2").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--n", "24", "--p", "40", "--n-disc", "6", "--seed", "3", "--out", s(dir)];
    args.extend_from_slice(extra);
    let out = zinb(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_fit_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let fit = tmp.path().join("fit");
    let eval = tmp.path().join("eval");
    simulate(&sim, &[]);
    for f in ["counts.csv", "covariates.csv", "groups.csv", "truth_gamma.csv", "truth_delta.csv", "run_config.resolved"] {
        assert!(sim.join(f).exists(), "{f}");
    }

    let out = zinb(&[
        "fit",
        "--counts",
        s(&sim.join("counts.csv")),
        "--covariates",
        s(&sim.join("covariates.csv")),
        "--groups",
        s(&sim.join("groups.csv")),
        "--chains",
        "2",
        "--iterations",
        "1000",
        "--out",
        s(&fit),
    ]);
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 3, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["ppi_gamma.csv", "ppi_delta.csv", "posterior_summary.csv", "convergence.csv", "size_factors.csv", "run_config.resolved"] {
        assert!(fit.join(f).exists(), "{f}");
    }
    for v in column(&fit.join("ppi_gamma.csv"), "ppi") {
        let v: f64 = v.parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    let verdict = column(&fit.join("convergence.csv"), "pass");
    assert_eq!(verdict.last().map(String::as_str), Some(if code == 0 { "1" } else { "0" }));

    let out = zinb(&["evaluate", "--fit-dir", s(&fit), "--truth-dir", s(&sim), "--out", s(&eval)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let auc: f64 = column(&eval.join("scores.csv"), "auc_gamma")[0].parse().unwrap();
    assert!(auc > 0.5, "auc {auc}");
    assert!(eval.join("roc_gamma.csv").exists() && eval.join("roc_delta.csv").exists());
}

#[test]
fn prior_only_fit_recovers_prior_inclusion_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let fit = tmp.path().join("fit");
    simulate(&sim, &[]);
    let out = zinb(&[
        "fit",
        "--counts",
        s(&sim.join("counts.csv")),
        "--groups",
        s(&sim.join("groups.csv")),
        "--prior-only",
        "--filter=false",
        "--chains",
        "2",
        "--iterations",
        "20000",
        "--tau-mu0",
        "10",
        "--tau-phi",
        "100",
        "--out",
        s(&fit),
    ]);
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 3, "{}", String::from_utf8_lossy(&out.stderr));
    let ppi: Vec<f64> = column(&fit.join("ppi_gamma.csv"), "ppi").iter().map(|v| v.parse().unwrap()).collect();
    let mean = ppi.iter().sum::<f64>() / ppi.len() as f64;
    assert!((mean - 0.1).abs() < 0.03, "mean prior PPI {mean}");
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nn = 12\np = 30\nseed = 5\n").unwrap();
    let out_dir = tmp.path().join("sim");
    let out = zinb(&["simulate", "--config", s(&cfg), "--seed", "8", "--n-disc", "4", "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = std::fs::read_to_string(out_dir.join("run_config.resolved")).unwrap();
    assert!(resolved.contains("n = 12  # file"), "{resolved}");
    assert!(resolved.contains("seed = 8  # flag"), "{resolved}");
    assert!(resolved.contains("sigma_e = 1  # default"), "{resolved}");
    assert_eq!(column(&out_dir.join("groups.csv"), "group").len(), 12);

    std::fs::write(&cfg, "n = 12\nwobble = 3\n").unwrap();
    let out = zinb(&["simulate", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wobble"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(zinb(&["fit"]).status.code(), Some(1));
    assert_eq!(zinb(&["fit", "--chains"]).status.code(), Some(1));
    assert_eq!(zinb(&["launch"]).status.code(), Some(1));
    assert_eq!(zinb(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let counts = tmp.path().join("counts.csv");
    let groups = tmp.path().join("groups.csv");
    std::fs::write(&counts, "sample_id,f1,f2\ns1,3,4\ns2,2.5,1\n").unwrap();
    std::fs::write(&groups, "sample_id,group\ns1,1\ns2,2\n").unwrap();
    let out_dir = tmp.path().join("out");
    let out = zinb(&["fit", "--counts", s(&counts), "--groups", s(&groups), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":3:2:") && err.contains("2.5"), "{err}");

    std::fs::write(&counts, "sample_id,f1,f2\ns1,3,4\ns2,2,1\n").unwrap();
    std::fs::write(&groups, "sample_id,group\ns1,1\ns3,2\n").unwrap();
    let out = zinb(&["fit", "--counts", s(&counts), "--groups", s(&groups), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("s2"));
}

#[test]
fn sim_study_writes_per_replicate_and_aggregate_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("study");
    let out = zinb(&[
        "sim-study", "--n", "20", "--p", "30", "--n-disc", "5", "--reps", "2", "--chains", "2", "--iterations", "400", "--out",
        s(&dir),
    ]);
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(column(&dir.join("scores.csv"), "replicate"), vec!["1", "2"]);
    assert_eq!(column(&dir.join("aggregate.csv"), "statistic"), vec!["mean", "sd"]);
    assert!(dir.join("roc").join("rep1_gamma.csv").exists());
}
