//! End-to-end runs of the `mpemba-wsd` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpemba_wsd::config::ExperimentConfig;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpemba-wsd"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &TempDir, text: &str) -> String {
    let path = dir.path().join("experiment.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

const SMALL_SIMULATION: &str = r#"
[landscape]
preset = "ou"

[sim]
n_particles = 500
dt = 0.01
t_end = 1.0
seed = 3
histogram_bins = 8
sample_interval = 0.1
init = { kind = "point", x = 0.5, y = 1.0 }

[simulate]
dynamics = "valley-river-2d"
protocol = { kind = "constant", eta = 0.5 }
"#;

#[test]
fn shipped_configs_parse() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.landscape_spec().unwrap();
    }
}

#[test]
fn analyze_writes_requested_formats_only() {
    let out = TempDir::new().unwrap();
    let config = configs().join("symmetric_double_well.toml");
    let o = run(&[
        "analyze",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--format",
        "csv,json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        listing(out.path()),
        ["amplitude.csv", "eigenpairs.csv", "mpemba_report.json"]
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("mpemba_report.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "none");
    for key in ["eta_b", "samples", "strong_points", "optimal_plateau"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let sample = &report["samples"][0];
    for key in ["eta", "a2", "d_exact", "d_boxed"] {
        assert!(sample.get(key).is_some(), "sample lacks {key}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL_SIMULATION);
    let outputs: Vec<Vec<(String, Vec<u8>)>> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("run{i}"));
            let o = run(&["simulate", "--config", &config, "--out", out.to_str().unwrap(), "--format", "csv,json,svg"]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            listing(&out)
                .into_iter()
                .map(|name| {
                    let bytes = fs::read(out.join(&name)).unwrap();
                    (name, bytes)
                })
                .collect()
        })
        .collect();
    assert_eq!(outputs[0].len(), 3);
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn schedule_with_failing_validation_still_succeeds() {
    let out = TempDir::new().unwrap();
    let config = configs().join("custom_decay.toml");
    let o = run(&["schedule", "--config", config.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("schedule_validation.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    let steps = fs::read_to_string(out.path().join("schedule_steps.csv")).unwrap();
    assert!(steps.starts_with("step,lr\n0,0"));
    // 15.5 time units at the default 100 steps per unit.
    assert_eq!(steps.lines().count(), 1 + 1551);
}

#[test]
fn steps_per_unit_time_scales_the_table() {
    let out = TempDir::new().unwrap();
    let config = configs().join("custom_decay.toml");
    let o = run(&[
        "schedule",
        "--steps-per-unit-time",
        "10",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(o.status.success());
    let steps = fs::read_to_string(out.path().join("schedule_steps.csv")).unwrap();
    assert_eq!(steps.lines().count(), 1 + 156);
}

#[test]
fn missing_schedule_table_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL_SIMULATION);
    let o = run(&["schedule", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schedule"));
}

#[test]
fn unknown_keys_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &format!("{SMALL_SIMULATION}\n[grid]\nn_pionts = 11\n"));
    let o = run(&["simulate", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_pionts"));
}

#[test]
fn scan_starting_at_the_bath_rate_is_rejected() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "eta_b = 0.3\n[landscape]\npreset = \"double-well\"\n[scan]\neta_min = 0.3\neta_max = 3.0\n",
    );
    let o = run(&["analyze", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta_min"));
}

#[test]
fn unresolvable_barrier_is_a_numerical_failure() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "eta_b = 0.02\n[landscape]\npreset = \"double-well\"\ndouble_well = { h = 4.0 }\n[scan]\neta_min = 0.04\neta_max = 1.0\n",
    );
    let o = run(&["analyze", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn command_line_misuse_exits_with_two() {
    assert_eq!(run(&["analyze"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn presets_are_listed_without_a_config() {
    let o = run(&["presets", "list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["ou", "tilted-river", "double-well"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn quiet_suppresses_the_summary() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL_SIMULATION);
    let o = run(&["simulate", "-q", "--config", &config, "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
}
