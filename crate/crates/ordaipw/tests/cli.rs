//! End-to-end checks of the command-line interface: subcommand behavior,
//! config-file merging, output formats, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ordaipw"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn binary")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn small_simulate(extra: &[&str]) -> Vec<String> {
    let mut args = vec![
        "simulate",
        "--scenario",
        "1",
        "--reps",
        "12",
        "--n",
        "300",
        "--seed",
        "2",
        "--workers",
        "1",
    ];
    args.extend_from_slice(extra);
    args.into_iter().map(String::from).collect()
}

#[test]
fn simulate_is_deterministic_and_worker_count_invariant() {
    let args = small_simulate(&["--format", "csv"]);
    let a = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let b = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));

    let mut four = small_simulate(&["--format", "csv"]);
    let pos = four.iter().position(|s| s == "--workers").unwrap();
    four[pos + 1] = "4".into();
    let c = run(&four.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(c.status.success(), "{}", stderr(&c));
    let strip = |s: String| {
        s.lines()
            .filter(|l| !l.starts_with("# workers"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(stdout(&a)), strip(stdout(&c)));
}

#[test]
fn simulate_json_is_machine_readable() {
    let args = small_simulate(&["--format", "json", "--estimators", "ipw,aipw2"]);
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["reference"], "aipw2");
    assert!(v["rows"][0]["mc_mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.txt");
    let mut args = small_simulate(&["--out"]);
    args.push(path.to_string_lossy().into_owned());
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("MC mean"));
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("exp.conf");
    std::fs::write(&conf, "scenario = 1\nreps = 30\nn = 300\nseed = 2\nestimators = aipw2\nformat = csv\nworkers = 1\n").unwrap();
    let out = run(&["simulate", "--config", conf.to_str().unwrap(), "--reps", "9"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("# reps = 9"), "flag must override file:\n{text}");
    assert!(text.contains("# n = 300"), "file values must survive:\n{text}");
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("aipw2,")).collect();
    assert_eq!(rows.len(), 1);
}

#[test]
fn empty_estimator_list_gives_header_only() {
    let args = small_simulate(&["--format", "csv", "--estimators", ""]);
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0].starts_with("estimator,"));
}

#[test]
fn config_errors_exit_2() {
    for args in [
        vec!["simulate", "--scenario", "9"],
        vec!["simulate", "--scenario", "1", "--estimators", "bogus"],
        vec!["simulate", "--scenario", "1", "--or", "1.5", "--or1", "1.2"],
        vec!["simulate", "--scenario", "1", "--or1", "1.2"],
        vec!["simulate"],
        vec!["fit", "--subjects", "x.csv", "--method", "mystery"],
        vec!["simulate", "--scenario", "1", "--reps", "0"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "args {args:?}: {}", stderr(&out));
    }
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "scenario = 1\nmystery_key = 2\n").unwrap();
    let out = run(&["simulate", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mystery_key"));
}

#[test]
fn data_errors_exit_3() {
    let out = run(&["fit", "--subjects", "/nonexistent/subjects.csv", "--method", "ipw"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    let dir = tempfile::tempdir().unwrap();
    let subjects = dir.path().join("subjects.csv");
    std::fs::write(
        &subjects,
        "id,arm,u,delta,cat,x1\n1,0,90,1,2,0.1\n2,1,90,1,1,-0.3\n3,0,40,0,,0.5\n4,1,90,1,3,0.2\n",
    )
    .unwrap();
    let out = run(&["fit", "--subjects", subjects.to_str().unwrap(), "--method", "ninety"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("censoring time unavailable"), "{}", stderr(&out));

    let out = run(&["fit", "--subjects", subjects.to_str().unwrap(), "--method", "full_adj"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("dataset is censored"), "{}", stderr(&out));
}

#[test]
fn excess_estimation_failures_exit_4() {
    let out = run(&[
        "simulate",
        "--scenario",
        "1",
        "--reps",
        "40",
        "--n",
        "60",
        "--seed",
        "1",
        "--workers",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("abort threshold"), "{}", stderr(&out));
}

fn export(dir: &Path, scenario: &str, seed: &str, n: &str) -> PathBuf {
    let prefix = dir.join(format!("sc{scenario}"));
    let out = run(&[
        "export-scenario",
        "--scenario",
        scenario,
        "--seed",
        seed,
        "--n",
        n,
        "--out-prefix",
        prefix.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    prefix
}

#[test]
fn export_then_fit_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = export(dir.path(), "1", "7", "500");
    let subjects = format!("{}_subjects.csv", prefix.display());
    let tdc = format!("{}_tdc.csv", prefix.display());
    for method in ["naive", "ninety", "ipw", "aipw1", "aipw2"] {
        let out = run(&[
            "fit",
            "--subjects",
            &subjects,
            "--tdc",
            &tdc,
            "--method",
            method,
            "--format",
            "json",
        ]);
        assert!(out.status.success(), "{method}: {}", stderr(&out));
        let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(v["method"], method);
        let or = v["or_point"][0].as_f64().unwrap();
        assert!(or.is_finite() && or > 0.0);
    }
    let out = run(&[
        "fit", "--subjects", &subjects, "--tdc", &tdc, "--method", "aipw2", "--pi", "0.5,0.5",
        "--basis", "f=x1;h=x1,l1,l2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("method: aipw2"));
    // Without the covariate file every path is empty and l terms are
    // rejected at parse time.
    let out = run(&["fit", "--subjects", &subjects, "--method", "aipw2", "--basis", "h=l1"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn fit_rejects_mismatched_basis_and_pi() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = export(dir.path(), "1", "3", "400");
    let subjects = format!("{}_subjects.csv", prefix.display());
    let out = run(&["fit", "--subjects", &subjects, "--method", "aipw2", "--basis", "f=x2"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = run(&["fit", "--subjects", &subjects, "--method", "ipw", "--pi", "0.9,0.2"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("sum to 1"), "{}", stderr(&out));
}

#[test]
fn k3_flags_set_two_odds_ratios() {
    let out = run(&[
        "simulate",
        "--scenario",
        "k3",
        "--reps",
        "6",
        "--n",
        "450",
        "--seed",
        "5",
        "--workers",
        "1",
        "--or1",
        "1.4",
        "--or2",
        "1.1",
        "--format",
        "csv",
        "--estimators",
        "aipw2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("# ors = 1.4,1.1"), "{text}");
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("aipw2,")).collect();
    assert_eq!(rows.len(), 2);
}
