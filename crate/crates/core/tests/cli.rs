use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn quotes() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/futures_quotes.csv")
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sptlab"));
    cmd.args(args).env_remove("RUST_LOG");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn sptlab(args: &[&str]) -> Output {
    run(args, &[])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "{}", stderr(o));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate_into(dir: &Path, seed: &str) -> Output {
    sptlab(&[
        "simulate",
        "--g=-0.04,-0.02,0,0.02,0.04",
        "--sigma",
        "0.2",
        "--steps",
        "500",
        "--seed",
        seed,
        "--out",
        s(dir),
    ])
}

#[test]
fn simulate_is_reproducible_and_has_every_asset() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&simulate_into(&a, "7"));
    ok(&simulate_into(&b, "7"));
    ok(&simulate_into(&c, "8"));
    let read = |d: &Path| std::fs::read_to_string(d.join("panel.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let assets: BTreeSet<String> = read(&a)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(assets.len(), 5);
    assert!(a.join("simulation.json").exists());
}

#[test]
fn simulate_batches_write_one_file_per_path() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&sptlab(&["simulate", "--g=-0.1,0.1", "--sigma", "0.2", "--steps", "10", "--paths", "3", "--out", s(tmp.path())]));
    for p in 0..3 {
        assert!(tmp.path().join(format!("panel_{p:05}.csv")).exists());
    }
}

#[test]
fn invalid_growth_rates_exit_with_constraint_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sptlab(&["simulate", "--g", "0.1,0.1", "--sigma", "0.2", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("sum to 0.2"), "{}", stderr(&out));
    assert!(!tmp.path().join("panel.csv").exists());
}

#[test]
fn missing_required_setting_is_a_usage_error() {
    let out = sptlab(&["simulate", "--sigma", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("'g'"));
}

#[test]
fn config_file_supplies_settings_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "g = [-0.1, 0.1]\nsigma = [0.2]\nsteps = 20\nseed = 1\n").unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&sptlab(&["--config", s(&cfg), "simulate", "--out", s(&a)]));
    ok(&sptlab(&["simulate", "--config", s(&cfg), "--seed", "2", "--out", s(&b)]));
    let meta = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(d.join("simulation.json")).unwrap()).unwrap()
    };
    assert_eq!(meta(&a)["seed"], 1);
    assert_eq!(meta(&b)["seed"], 2);
    assert_eq!(meta(&b)["steps"], 20);

    std::fs::write(&cfg, "colour = 1\n").unwrap();
    assert_eq!(sptlab(&["--config", s(&cfg), "simulate"]).status.code(), Some(2));
}

#[test]
fn zero_bandwidth_leaves_estimates_unsmoothed() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    ok(&simulate_into(&sim, "3"));
    let est = tmp.path().join("est");
    ok(&sptlab(&[
        "estimate",
        "--panel",
        s(&sim.join("panel.csv")),
        "--dt",
        "0.003968253968253968",
        "--bandwidth",
        "0",
        "--out",
        s(&est),
    ]));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(est.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(doc["g"], doc["g_smoothed"]);
    assert_eq!(doc["sigma"], doc["sigma_smoothed"]);
    assert_eq!(doc["n"], 5);
    let csv = std::fs::read_to_string(est.join("estimate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn estimate_on_a_ragged_window_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&sptlab(&["ingest", "--quotes", s(&quotes()), "--out", s(tmp.path())]));
    let panel = tmp.path().join("implied_panel.csv");
    let out = sptlab(&["estimate", "--panel", s(&panel), "--out", s(&tmp.path().join("e"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("varying asset count"), "{}", stderr(&out));
    // after the last entry the set is fixed
    ok(&sptlab(&["estimate", "--panel", s(&panel), "--from", "1994-07", "--out", s(&tmp.path().join("e"))]));
}

#[test]
fn unknown_policy_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sptlab(&["backtest", "--quotes", s(&quotes()), "--policies", "market;momentum", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("momentum"));
}

#[test]
fn early_start_is_moved_to_first_eligible_month() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&sptlab(&["backtest", "--quotes", s(&quotes()), "--out", s(&a)]));
    let out = sptlab(&["backtest", "--quotes", s(&quotes()), "--start", "1990-01", "--out", s(&b)]);
    ok(&out);
    assert!(stderr(&out).contains("clipped to 1997-07"), "{}", stderr(&out));
    let read = |d: &Path| std::fs::read(d.join("returns.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert!(String::from_utf8_lossy(&out.stdout).contains("reverse"));
}

#[test]
fn missing_quotes_file_names_the_path() {
    let out = sptlab(&["ingest", "--quotes", "/no/such/quotes.csv", "--out", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("/no/such/quotes.csv"));
}

#[test]
fn bad_thread_cap_is_a_usage_error() {
    let out = run(&["ingest", "--quotes", s(&quotes())], &[("SPTLAB_THREADS", "0")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reproduce_writes_every_series_independent_of_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let q = quotes();
    let args = |d: &Path| ["reproduce", "--quotes", s(&q), "--sims", "20", "--out", s(d)].map(String::from);
    let (va, vb) = (args(&a), args(&b));
    ok(&run(&va.each_ref().map(String::as_str), &[("SPTLAB_THREADS", "1")]));
    ok(&run(&vb.each_ref().map(String::as_str), &[("SPTLAB_THREADS", "4")]));
    let names = [
        "relative_prices.csv",
        "cumulative_returns.csv",
        "relative_returns.csv",
        "gamma_star.csv",
        "carry.csv",
        "g_k.csv",
        "sigma_k.csv",
        "rank_size.csv",
    ];
    for n in names {
        let x = std::fs::read(a.join(n)).unwrap_or_else(|e| panic!("{n}: {e}"));
        assert_eq!(x, std::fs::read(b.join(n)).unwrap(), "{n}");
        assert!(x.len() > 20, "{n} is empty");
    }
}
