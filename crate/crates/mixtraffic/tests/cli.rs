use std::path::Path;
use std::process::{Command, Output};

use mixtraffic::sweep::read_runs;

const SMALL: &[&str] = &["--grid", "1x1", "--horizon", "300", "--window-start", "100", "--window-end", "300"];

fn mixtraffic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixtraffic")).args(args).env_remove("MIXTRAFFIC_OUTPUT").output().expect("spawn mixtraffic")
}

fn ok(args: &[&str]) -> String {
    let out = mixtraffic(args);
    assert!(
        out.status.success(),
        "mixtraffic {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn with<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(SMALL).chain(tail).copied().collect()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn run_writes_metrics_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let args = with(
        &["run"],
        &["--seed", "3", "--out", d, "--trajectories", "--control-log", "--routing-log", "--rewards", "--cost-maps"],
    );
    ok(&args);
    let m: serde_json::Value = serde_json::from_str(&read(&dir.path().join("metrics.json"))).unwrap();
    for key in ["w_avg", "theta_int", "theta_net", "d_avg", "w_max", "w_p99", "c_rate", "f_avg"] {
        assert!(m.get(key).is_some(), "metrics.json lacks {key}: {m}");
    }
    for f in ["trajectories.csv", "control_log.csv", "routing_log.csv", "rewards.csv", "cost_maps.csv", "scenario.toml"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let first = read(&dir.path().join("metrics.json"));
    ok(&args);
    assert_eq!(first, read(&dir.path().join("metrics.json")));
}

#[test]
fn run_reads_a_scenario_file_and_output_env() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(
        &scenario,
        "rv_rate = 0.5\nhorizon = 200.0\nwindow = [100.0, 200.0]\n\n[network]\nkind = \"grid\"\nrows = 1\ncols = 2\n\n[params]\nrho = 0.3\n",
    )
    .unwrap();
    let out = dir.path().join("env_out");
    let res = Command::new(env!("CARGO_BIN_EXE_mixtraffic"))
        .args(["run", "--scenario", scenario.to_str().unwrap()])
        .env("MIXTRAFFIC_OUTPUT", &out)
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let echoed = read(&out.join("scenario.toml"));
    assert!(echoed.contains("rho = 0.3"), "{echoed}");
    assert!(echoed.contains("rv_rate = 0.5"), "{echoed}");
}

#[test]
fn sweep_and_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&with(&["sweep"], &["--seeds", "2", "--out", d]));
    let agg = read(&dir.path().join("aggregate.csv"));
    let header = agg.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 2 + 6, "expected 6 rate columns: {header}");
    let rows = read_runs(&dir.path().join("runs.csv")).unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!(std::fs::read_dir(dir.path().join("cells")).unwrap().count(), 12);

    let runs = dir.path().join("runs.csv");
    let printed = ok(&["report", runs.to_str().unwrap()]);
    assert_eq!(printed, agg);
}

#[test]
fn sweep_records_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    // alpha * p_target reaches 1 at the higher rate only.
    let stdout = ok(&with(&["sweep"], &["--seeds", "1", "--rv-rates", "0.5,0.95", "--alpha", "1.2", "--out", d]));
    assert!(stdout.contains("1 failed"), "{stdout}");
    let rows = read_runs(&dir.path().join("runs.csv")).unwrap();
    assert_eq!(rows.iter().filter(|r| r.is_ok()).count(), 1);
    let failed = rows.iter().find(|r| !r.is_ok()).unwrap();
    assert!((failed.rv_rate - 0.95).abs() < 1e-12);
    assert!(failed.error.contains("alpha"), "{}", failed.error);
}

#[test]
fn train_then_run_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&with(&["train"], &["--iterations", "3", "--out", d]));
    let curve = read(&dir.path().join("learning_curve.csv"));
    assert_eq!(curve.lines().next().unwrap(), "iteration,epsilon,mean_return,decisions,vehicles");
    assert_eq!(curve.lines().count(), 4);
    let ck = dir.path().join("checkpoint.json");
    let run_dir = dir.path().join("eval");
    ok(&with(&["run"], &["--checkpoint", ck.to_str().unwrap(), "--out", run_dir.to_str().unwrap()]));
    assert!(run_dir.join("metrics.json").is_file());

    let bad =
        mixtraffic(&with(&["run"], &["--checkpoint", ck.to_str().unwrap(), "--c0", "2", "--out", run_dir.to_str().unwrap()]));
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("c0"));
}

#[test]
fn rejects_bad_input() {
    let unknown = mixtraffic(&["run", "--no-such-flag"]);
    assert!(!unknown.status.success());
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("--no-such-flag"));

    let rate = mixtraffic(&["run", "--rv-rate", "1.5"]);
    assert!(!rate.status.success());
    assert!(String::from_utf8_lossy(&rate.stderr).starts_with("error:"));

    let grid = mixtraffic(&["run", "--grid", "3by3"]);
    assert!(!grid.status.success());

    let train_sweep = mixtraffic(&["sweep", "--policy", "train"]);
    assert!(!train_sweep.status.success());
}

#[test]
fn help_lists_every_knob_with_its_default() {
    let help = ok(&["run", "--help"]);
    for (flag, default) in [
        ("--lr", "5e-4"),
        ("--gamma", "0.99"),
        ("--lambda-parity", "0.2"),
        ("--lambda-threat", "0.5"),
        ("--conflict-penalty", "-1"),
        ("--c0", "3"),
        ("--cell-weight", "1"),
        ("--z-norm", "5"),
        ("--rho", "0.15"),
        ("--delta", "1.2"),
        ("--alpha", "1.0"),
        ("--commitment-distance", "50"),
        ("--cooldown", "60"),
        ("--p-target", "rv_rate - 0.05"),
        ("--update-interval", "60"),
        ("--history", "5"),
        ("--prediction-horizon", "60"),
        ("--zone-radius", "30"),
    ] {
        let line = help.lines().skip_while(|l| !l.contains(&format!("{flag} "))).take(3).collect::<Vec<_>>().join(" ");
        assert!(line.contains(&format!("[default: {default}]")), "{flag}: {line}");
    }
}
