use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn dyad(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyad"))
        .args(args)
        .env("DYAD_OUTPUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn assert_clean_failure(o: &Output) {
    assert_eq!(code(o), 1, "stderr: {}", stderr(o));
    assert!(!stderr(o).contains("panicked"), "{}", stderr(o));
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn classify_default_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let o = dyad(dir.path(), &["classify", "--k", "36"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict: stable"));
}

#[test]
fn classify_identical_robots_below_critical_is_delay_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"robots": {"x": {"robot1": {"mass_kg": 0.8334, "damping_Nsm": 7.7257},
                              "robot2": {"mass_kg": 0.8334, "damping_Nsm": 7.7257}}}}"#,
    );
    let cfg = cfg.to_str().unwrap();
    let o = dyad(
        dir.path(),
        &["--config", cfg, "classify", "--k", "35", "--json"],
    );
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["aggregate"]["kind"], "DelayIndependent");
    let km = v["report"]["aggregate"]["critical_stiffness"]
        .as_f64()
        .unwrap();
    assert!((km - 35.81).abs() < 0.005, "{km}");
}

#[test]
fn classify_unstable_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = dyad(dir.path(), &["classify", "--k", "71", "--delay-ms", "334"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("verdict: unstable"));
}

#[test]
fn invalid_stiffness_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = dyad(dir.path(), &["classify", "--k", "-5"]);
    assert_clean_failure(&o);
    assert!(stderr(&o).contains("--k"));
}

#[test]
fn classify_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = dyad(
        dir.path(),
        &["classify", "--k", "71", "--delay-ms", "84", "--json"],
    );
    assert_eq!(code(&first), 0);
    let v: Value = serde_json::from_str(&stdout(&first)).unwrap();
    let k = v["stiffness_Nm"].as_f64().unwrap().to_string();
    let d = v["delay_ms"].as_f64().unwrap().to_string();
    let second = dyad(
        dir.path(),
        &["classify", "--k", &k, "--delay-ms", &d, "--json"],
    );
    assert_eq!(stdout(&first), stdout(&second));
}

#[test]
fn malformed_config_reports_schema_path() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"coupling": {"stiffness": 3}}"#, "coupling.stiffness"),
        (
            r#"{"simulation": {"t_end_s": "long"}}"#,
            "simulation.t_end_s",
        ),
        (
            r#"{"coupling": {"stiffness_Nm": -1}}"#,
            "coupling.stiffness_Nm",
        ),
        (r#"{"extra": 1}"#, "extra"),
    ];
    for (text, path) in cases {
        let cfg = write_config(dir.path(), text);
        let o = dyad(dir.path(), &["--config", cfg.to_str().unwrap(), "classify"]);
        assert_clean_failure(&o);
        assert!(stderr(&o).contains(path), "{path}: {}", stderr(&o));
    }
    for text in ["", "{", "[]", "{} trailing"] {
        let cfg = write_config(dir.path(), text);
        assert_clean_failure(&dyad(
            dir.path(),
            &["--config", cfg.to_str().unwrap(), "classify"],
        ));
    }
}

#[test]
fn sweep_rejects_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    assert_clean_failure(&dyad(dir.path(), &["sweep", "--cells", "1"]));
    assert_clean_failure(&dyad(dir.path(), &["sweep", "--k-range", "5:1"]));
    assert_clean_failure(&dyad(dir.path(), &["sweep", "--k-values", "10,-1"]));
}

#[test]
fn sweep_reproduces_delayed_condition_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let o = dyad(
        dir.path(),
        &[
            "sweep",
            "--k-values",
            "18,36,71,142",
            "--delay-values",
            "0,84,167,334",
            "--simulate",
            "--svg",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(
        stdout(&o).contains("0 outside the 5% boundary band"),
        "{}",
        stdout(&o)
    );
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (sx, sy) = (col("simulated_x"), col("simulated_y"));
    let delayed: Vec<(String, String)> = lines
        .map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>())
        .filter(|f| f[1] != "0")
        .map(|f| (f[sx].clone(), f[sy].clone()))
        .collect();
    assert_eq!(delayed.len(), 12);
    for (i, (x, y)) in delayed.iter().enumerate() {
        let panel = (b'a' + i as u8) as char;
        match panel {
            'a'..='g' => assert!(x == "stable" && y == "stable", "{panel}: {x} {y}"),
            'h' => {
                let mut pair = [x.as_str(), y.as_str()];
                pair.sort();
                assert_eq!(pair, ["marginal", "stable"], "{panel}");
            }
            'i' => assert!(x == "unstable" && y == "unstable", "{panel}: {x} {y}"),
            _ => assert!(x == "unstable" || y == "unstable", "{panel}: {x} {y}"),
        }
    }
    let svg = std::fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn nyquist_batch_emits_nine_panels() {
    let dir = tempfile::tempdir().unwrap();
    let o = dyad(dir.path(), &["nyquist", "--batch", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let panels: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let panels = panels.as_array().unwrap();
    assert_eq!(panels.len(), 9);
    for p in panels {
        let name = p["name"].as_str().unwrap();
        let winding = p["result"]["winding"].as_i64().unwrap();
        assert_eq!(winding != 0, name == "x_k2_d2", "{name}: {winding}");
        if name == "x_k2_d1" {
            assert!(p["result"]["min_distance"].as_f64().unwrap() < 0.05);
        }
        assert!(dir.path().join(format!("nyquist_{name}.csv")).exists());
        let svg = std::fs::read_to_string(dir.path().join(format!("nyquist_{name}.svg"))).unwrap();
        assert!(svg.contains("(-1, 0)"));
    }
}

#[test]
fn frequency_commands_reject_empty_grid() {
    let dir = tempfile::tempdir().unwrap();
    assert_clean_failure(&dyad(dir.path(), &["nyquist", "--points", "0"]));
    assert_clean_failure(&dyad(dir.path(), &["bode", "--points", "1"]));
    assert_clean_failure(&dyad(dir.path(), &["bode", "--axis", "z"]));
}

#[test]
fn delay_leaves_bode_magnitude_unchanged() {
    let column = |delay: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = dyad(dir.path(), &["bode", "--k", "71", "--delay-ms", delay]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let csv = std::fs::read_to_string(dir.path().join("bode_x.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "omega,re,im,mag_db,phase_deg");
        lines
            .map(|l| l.split(',').nth(3).unwrap().to_string())
            .collect::<Vec<_>>()
    };
    let (a, b) = (column("0"), column("167"));
    assert_eq!(a.len(), 4096);
    assert_eq!(a, b);
}

fn identify(args: &[&str]) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let o = dyad(dir.path(), args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    serde_json::from_str(&stdout(&o)).unwrap()
}

fn rel(v: &Value, key: &str, truth: f64) -> f64 {
    (v[key].as_f64().unwrap() - truth).abs() / truth
}

#[test]
fn identify_synthetic_records() {
    let v = identify(&["identify", "--synthetic", "0.8334", "7.7257", "0", "1"]);
    assert!(rel(&v, "mass_hat", 0.8334) < 1e-9);
    assert!(rel(&v, "damping_hat", 7.7257) < 1e-9);

    let v = identify(&["identify", "--synthetic", "1.3407", "9.3496", "0.1", "7"]);
    assert!(rel(&v, "mass_hat", 1.3407) < 0.02);
    assert!(rel(&v, "damping_hat", 9.3496) < 0.02);
    assert_eq!(v["estimator"], "wls");
}

#[test]
fn identify_reads_saved_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = dyad(
        dir.path(),
        &[
            "identify",
            "--synthetic",
            "1.0",
            "5.0",
            "0",
            "3",
            "--save-record",
            "--estimator",
            "ols",
        ],
    );
    assert_eq!(code(&o), 0);
    let from_synthetic: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let record = dir.path().join("identify_record.csv");
    let o = dyad(
        dir.path(),
        &["identify", record.to_str().unwrap(), "--estimator", "ols"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let from_file: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(rel(&from_file, "mass_hat", 1.0) < 1e-9);
    assert_eq!(from_file["samples"], from_synthetic["samples"]);
}

#[test]
fn identify_malformed_csv_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "t,x,v,a,f\n0,0,0,0,0\n0.1,zz,0,0,0\n").unwrap();
    let o = dyad(dir.path(), &["identify", path.to_str().unwrap()]);
    assert_clean_failure(&o);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    assert_clean_failure(&dyad(
        dir.path(),
        &["identify", "--synthetic", "1", "2", "x", "3"],
    ));
    assert_clean_failure(&dyad(
        dir.path(),
        &["identify", "--synthetic", "-1", "2", "0", "3"],
    ));
    assert_clean_failure(&dyad(dir.path(), &["identify", "missing.csv"]));
}

#[test]
fn experiment_standard_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = dyad(
        dir.path(),
        &["experiment", "--grid", "paper", "--trials", "20"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("experiment.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "condition,stiffness_Nm,delay_ms,trial,te1_mm,te2_mm"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 17 * 20);
    let conditions: std::collections::BTreeSet<&str> =
        rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(conditions.len(), 17);
    let summary = std::fs::read_to_string(dir.path().join("experiment_summary.txt")).unwrap();
    assert_eq!(summary, stdout(&o));
    assert!(summary.contains('±'));
    assert!(summary.contains('↑') || summary.contains('↓'));
}

#[test]
fn experiment_is_deterministic_per_seed() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = dyad(
            dir.path(),
            &[
                "experiment",
                "--grid",
                "reference",
                "--trials",
                "2",
                "--seed",
                seed,
            ],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(dir.path().join("experiment.csv")).unwrap()
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn experiment_argument_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_clean_failure(&dyad(dir.path(), &["experiment", "--trials", "0"]));
    assert_clean_failure(&dyad(dir.path(), &["experiment", "--grid", "custom"]));
}

#[test]
fn experiment_custom_grid_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"experiment": {"grid": [{"stiffness_Nm": 71, "delay_ms": 84}], "trials": 2, "periods": 2},
            "output": {"formats": ["csv", "json"]}}"#,
    );
    let o = dyad(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "experiment",
            "--grid",
            "custom",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("experiment.json")).unwrap())
            .unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[1]["condition"], "CM-71-84");
}

#[test]
fn out_dir_flag_overrides_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = dyad(
        env_dir.path(),
        &[
            "--out-dir",
            flag_dir.path().to_str().unwrap(),
            "bode",
            "--points",
            "16",
        ],
    );
    assert_eq!(code(&o), 0);
    assert!(flag_dir.path().join("bode_x.csv").exists());
    assert!(!env_dir.path().join("bode_x.csv").exists());
}

#[test]
fn config_views() {
    let dir = tempfile::tempdir().unwrap();
    let bundled: Value =
        serde_json::from_str(&stdout(&dyad(dir.path(), &["config", "default"]))).unwrap();
    let effective: Value = serde_json::from_str(&stdout(&dyad(dir.path(), &["config"]))).unwrap();
    assert_eq!(bundled, effective);
    let schema: Value =
        serde_json::from_str(&stdout(&dyad(dir.path(), &["config", "schema"]))).unwrap();
    assert_eq!(schema["additionalProperties"], false);
}
