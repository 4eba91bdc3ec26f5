use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn latentmv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latentmv"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn synth(dir: &Path) {
    let out = latentmv(
        dir,
        &["synth", "--assets", "8", "--dates", "60", "--k", "2", "--seed", "11", "--out", "panel.csv", "--factors-out", "factors.csv"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

const MINIMAL: &str = r#"
panel = "panel.csv"
seed = 3
strategies = ["ew", "sample/long_only"]
window_length = 36
window_step = 2
min_price = 0.0
top_n_by_cap = 8
bootstrap_resamples = 200
"#;

fn minimal_run(dir: &Path) -> std::path::PathBuf {
    synth(dir);
    fs::write(dir.join("run.toml"), MINIMAL).unwrap();
    let out = latentmv(dir, &["backtest", "--config", "run.toml", "--out-dir", "res"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("res")
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let first = fs::read(dir.path().join("panel.csv")).unwrap();
    let stdout = latentmv(
        dir.path(),
        &["synth", "--assets", "8", "--dates", "60", "--k", "2", "--seed", "11", "--out", "again.csv"],
    );
    assert_eq!(code(&stdout), 0);
    assert_eq!(first, fs::read(dir.path().join("again.csv")).unwrap());
    assert!(String::from_utf8_lossy(&stdout.stdout).contains("again.csv"));
}

#[test]
fn synth_without_output_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&latentmv(dir.path(), &["synth", "--assets", "5"])), 2);
}

#[test]
fn minimal_backtest_writes_a_row_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let res = minimal_run(dir.path());
    let summary = fs::read_to_string(res.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("ew,"));
    assert!(lines[2].starts_with("sample/long_only,"));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(res.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["strategies"].as_array().unwrap().len(), 2);
}

#[test]
fn reruns_and_thread_counts_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let res = minimal_run(dir.path());
    let out = latentmv(dir.path(), &["backtest", "--config", "run.toml", "--out-dir", "res2", "--jobs", "1"]);
    assert_eq!(code(&out), 0);
    for name in ["summary.csv", "weights.csv", "returns.csv", "turnover.csv", "manifest.json"] {
        assert_eq!(
            fs::read(res.join(name)).unwrap(),
            fs::read(dir.path().join("res2").join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn missing_factor_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let cfg = MINIMAL.replace("\"sample/long_only\"]", "\"ff3/static/long_only\"]");
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = latentmv(dir.path(), &["backtest", "--config", "run.toml"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ff3"));

    let cfg = format!("{MINIMAL}factors = \"nowhere.csv\"\n");
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    assert_eq!(code(&latentmv(dir.path(), &["backtest", "--config", "run.toml"])), 2);
}

#[test]
fn every_config_problem_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "panel = \"absent.csv\"\nstrategies = [\"bogus\"]\nwindow_lenght = 10\n",
    )
    .unwrap();
    let out = latentmv(dir.path(), &["backtest", "--config", "run.toml"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["absent.csv", "bogus", "window_lenght", "seed"] {
        assert!(err.contains(needle), "missing '{needle}' in:\n{err}");
    }
}

#[test]
fn backtest_without_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&latentmv(dir.path(), &["backtest"])), 2);
}

#[test]
fn report_tables_and_cost_variants() {
    let dir = tempfile::tempdir().unwrap();
    let res = minimal_run(dir.path());
    let out = latentmv(dir.path(), &["report", "res", "--costs", "5,20"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = res.join("report");
    let perf = fs::read_to_string(report.join("performance.csv")).unwrap();
    let header = perf.lines().next().unwrap();
    for col in ["mean", "sd", "sr", "mad", "var", "cvar", "cer_g2", "cer_g5", "cer_g10", "to", "max", "sd_w", "mad_ew", "c_ew_bps", "p_sd", "p_sr", "p_cer"] {
        assert!(header.split(',').any(|c| c == col), "no column {col} in {header}");
    }
    for name in ["performance_net_5bps.csv", "performance_net_20bps.csv", "weight_table.csv", "breakeven.csv", "cumulative_returns.csv"] {
        assert!(report.join(name).is_file(), "{name} missing");
    }

    // Costs lower the mean of a strategy that trades.
    let mean = |name: &str| -> f64 {
        let text = fs::read_to_string(report.join(name)).unwrap();
        let row = text.lines().find(|l| l.starts_with("sample/long_only,")).unwrap().to_string();
        row.split(',').nth(1).unwrap().parse().unwrap()
    };
    assert!(mean("performance_net_20bps.csv") < mean("performance_net_5bps.csv"));
    assert!(mean("performance_net_5bps.csv") < mean("performance.csv"));
}

#[test]
fn volatility_subperiods_need_a_market_series() {
    let dir = tempfile::tempdir().unwrap();
    minimal_run(dir.path());
    let out = latentmv(dir.path(), &["report", "res", "--subperiods", "volatility"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn report_on_a_missing_directory_fails_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&latentmv(dir.path(), &["report", "nothing_here"])), 1);
}
