use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lorenz_ssm::io::{load_grouped_csv, Table};

const BIN: &str = env!("CARGO_BIN_EXE_lorenz-ssm");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "lorenz-ssm {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, periods: usize) -> std::path::PathBuf {
    let cfg = dir.join("sim.txt");
    fs::write(&cfg, format!("periods = {periods}\n")).unwrap();
    ok(&["simulate", "--config", p(&cfg), "--out", p(&dir.join("sim")), "--seed", "11"]);
    dir.join("sim/data.csv")
}

const SHORT: [&str; 4] = ["--burnin", "200", "--draws", "1000"];

#[test]
fn simulate_writes_data_and_truth() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), 30);
    let data = load_grouped_csv(tmp.path().join("sim/data.csv")).unwrap();
    assert_eq!(data.periods(), 30);
    let truth = Table::read(tmp.path().join("sim/truth.csv")).unwrap();
    assert_eq!(truth.rows.len(), 30);
    let g = truth.column("gini").unwrap();
    assert!(g.iter().all(|&x| x > 0.0 && x < 1.0));
    assert!(tmp.path().join("sim/config.txt").exists());
}

#[test]
fn fit_report_and_compare_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 30);
    let fits = tmp.path().join("fits");
    let mut args = vec!["fit", "--data", p(&data), "--family", "sm,ln", "--process", "ar,rw", "--out", p(&fits)];
    args.extend(SHORT);
    ok(&args);
    let sep = tmp.path().join("sep");
    let mut args = vec!["fit-separate", "--data", p(&data), "--family", "sm", "--out", p(&sep)];
    args.extend(SHORT);
    ok(&args);

    for model in ["sm-ar", "sm-rw", "ln-ar", "ln-rw"] {
        let dir = fits.join(model);
        for f in ["draws.csv", "latent.csv", "summary.csv", "gini.csv", "params.csv", "lorenz.csv", "lambda.csv", "ppl.csv", "predictive.csv", "data.csv", "run.txt"] {
            assert!(dir.join(f).exists(), "{model}/{f} missing");
        }
        let gini = Table::read(dir.join("gini.csv")).unwrap();
        assert_eq!(gini.rows.len(), 30);
        let (m, lo, hi) = (gini.column("gini").unwrap(), gini.column("gini_lo").unwrap(), gini.column("gini_hi").unwrap());
        for t in 0..30 {
            assert!(lo[t] <= m[t] && m[t] <= hi[t]);
        }
    }
    let summary = Table::read(fits.join("sm-rw/summary.csv")).unwrap();
    assert_eq!(summary.labels, ["psi", "tau2_1", "tau2_2"]);
    let summary = Table::read(fits.join("sm-ar/summary.csv")).unwrap();
    assert_eq!(summary.labels.len(), 7);

    let cmp = tmp.path().join("compare.csv");
    let dirs: Vec<_> = ["sm-ar", "sm-rw", "ln-ar", "ln-rw"].iter().map(|m| fits.join(m)).collect();
    let mut args = vec!["compare", "--out", p(&cmp), "--runs"];
    args.extend(dirs.iter().map(|d| p(d)));
    args.push(p(&sep));
    let stdout = ok(&args);
    assert!(stdout.contains("SM-DIR"));
    let table = Table::read(&cmp).unwrap();
    assert_eq!(table.rows.len(), 5);
    let r1 = table.column("r1").unwrap();
    assert!(r1.windows(2).all(|w| w[0] <= w[1]), "compare output is sorted");
    // the data come from the SM family
    assert!(table.labels[0].starts_with("SM-"), "best model {}", table.labels[0]);

    let report = tmp.path().join("report");
    ok(&["report", "--run", p(&fits.join("sm-ar")), "--truth", p(&tmp.path().join("sim/truth.csv")), "--out", p(&report)]);
    for f in ["ci_length.csv", "shares.csv", "lambda.csv", "relbias.csv"] {
        let t = Table::read(report.join(f)).unwrap();
        assert!(!t.rows.is_empty(), "{f} is empty");
    }
}

#[test]
fn same_seed_same_output() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 12);
    let fit = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let mut args = vec!["fit", "--data", p(&data), "--family", "ln", "--seed", seed, "--threads", "1", "--out", p(&out)];
        args.extend(SHORT);
        ok(&args);
        fs::read(out.join("draws.csv")).unwrap()
    };
    let a = fit("a", "5");
    assert_eq!(a, fit("b", "5"));
    assert_ne!(a, fit("c", "6"));
}

#[test]
fn bad_input_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let missing = run(&["fit", "--data", "/nonexistent/data.csv", "--family", "sm", "--out", p(&out)]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error"));

    let data = simulate(tmp.path(), 5);
    let few = run(&["fit", "--data", p(&data), "--family", "sm", "--draws", "500", "--out", p(&out)]);
    assert!(String::from_utf8_lossy(&few.stderr).contains("latent paths"));

    let family = run(&["fit", "--data", p(&data), "--family", "zz", "--out", p(&out)]);
    assert!(!family.status.success());

    let not_run = run(&["compare", "--runs", p(tmp.path())]);
    assert!(!not_run.status.success());

    let broken = tmp.path().join("broken.csv");
    fs::write(&broken, "period,n,q1,q2\n1,100,0.7,0.7\n").unwrap();
    let bad = run(&["fit-separate", "--data", p(&broken), "--family", "ln", "--out", p(&out)]);
    assert!(!bad.status.success());
}
