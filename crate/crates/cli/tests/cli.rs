use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mmn-predict"));
    c.env_remove("MMN_PREDICT_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn skew_model(d: usize) -> String {
    let a = vec!["1"; d].join(",");
    format!(
        r#"{{"model": {{"a": [{a}], "sigma2_x": 1, "sigma2_y": 2, "law_x": {{"type": "sqrt_chisq", "dof": 1}}}}"#
    )
}

const SWEEP: &str = r#"{
  "model": {"a": [1, 1, 1, 1, 1], "sigma2_x": 1, "sigma2_y": 2, "law_x": {"type": "sqrt_chisq", "dof": 1}},
  "estimators": [{"kind": "mre"}, {"kind": "harmonic_bayes"}, {"kind": "plugin_js"}],
  "t_grid": [0, 1, 4],
  "n": 5000,
  "seed": 11
}"#;

#[test]
fn mre_risk_prints_the_constant() {
    let dir = tempfile::tempdir().unwrap();
    let skew = write_config(dir.path(), "skew.json", &format!("{}}}", skew_model(5)));
    let o = run(&["mre-risk", "--config", &skew]);
    assert!(o.status.success());
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - 1.0954).abs() < 2e-3, "{v}");

    let normal = r#"{"model": {"a": [0, 0, 0, 0, 0, 0, 0], "sigma2_x": 1, "sigma2_y": 2, "law_x": {"type": "trunc_normal"}}}"#;
    let normal = write_config(dir.path(), "normal.json", normal);
    let v: f64 = stdout(&run(&["mre-risk", "--config", &normal]))
        .trim()
        .parse()
        .unwrap();
    assert!((v - 3.5 * 1.5f64.ln()).abs() < 1e-12);
}

#[test]
fn density_grid_matches_normal_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"a": [0, 0], "sigma2_x": 1, "sigma2_y": 2, "law_x": {"type": "gamma", "shape": 1}}}"#;
    let cfg = write_config(dir.path(), "m.json", cfg);
    let o = run(&[
        "density",
        "--estimator",
        "mre",
        "--config",
        &cfg,
        "--x",
        "0.5,-0.25",
        "--grid",
        "-3:3:0.5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("y1,y2,log_density"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 169);
    for r in &rows {
        let q = (r[0] - 0.5).powi(2) + (r[1] + 0.25).powi(2);
        let want = -(2.0 * PI * 3.0).ln() - q / 6.0;
        assert!((r[2] - want).abs() < 1e-12);
    }
}

#[test]
fn bad_configs_exit_with_code_two_and_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let broken = write_config(dir.path(), "broken.json", r#"{"model": {"a": [1, 1]"#);
    let extra = write_config(
        dir.path(),
        "extra.json",
        &format!(r#"{}, "colour": "blue"}}"#, skew_model(2)),
    );
    let bad_law = write_config(
        dir.path(),
        "law.json",
        r#"{"model": {"a": [1], "sigma2_x": 1, "sigma2_y": 2, "law_x": {"type": "gamma", "shape": -1}}}"#,
    );
    for cfg in [&broken, &extra, &bad_law] {
        let o = run(&[
            "density",
            "--estimator",
            "mre",
            "--config",
            cfg,
            "--x",
            "0,0",
            "--grid",
            "-1:1:1",
        ]);
        assert_eq!(o.status.code(), Some(2));
        assert!(o.stdout.is_empty());
    }
    let good = write_config(dir.path(), "good.json", &format!("{}}}", skew_model(2)));
    let o = run(&[
        "density",
        "--estimator",
        "mre",
        "--config",
        &good,
        "--x",
        "0,0,0",
        "--grid",
        "-1:1:1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn density_only_estimators_cannot_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.json", &format!("{}}}", skew_model(5)));
    let o = run(&[
        "sample",
        "--config",
        &cfg,
        "--estimator",
        "harmonic_bayes",
        "--x",
        "0,0,0,0,0",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(o.stdout.is_empty());
    let o = run(&[
        "sample",
        "--config",
        &cfg,
        "--estimator",
        "mre",
        "--x",
        "0,0,0,0,0",
        "--n",
        "3",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 4);
}

#[test]
fn sampling_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.json", &format!("{}}}", skew_model(3)));
    let first = run(&["sample", "--config", &cfg, "--n", "5", "--seed", "7"]);
    let second = run(&["sample", "--config", &cfg, "--n", "5", "--seed", "7"]);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(stdout(&first).lines().count(), 6);
    assert!(stdout(&first).starts_with("x1,x2,x3\n"));
    let from_env = bin()
        .args(["sample", "--config", &cfg, "--n", "5"])
        .env("MMN_PREDICT_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(first.stdout, from_env.stdout);
    let other = run(&["sample", "--config", &cfg, "--n", "5", "--seed", "8"]);
    assert_ne!(first.stdout, other.stdout);
}

#[test]
fn uniform_posterior_echoes_the_observation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"a": [1, 2], "sigma2_x": 1, "sigma2_y": 2, "law_x": {"type": "trunc_normal"}},
                  "prior": {"type": "uniform"}}"#;
    let cfg = write_config(dir.path(), "m.json", cfg);
    let o = run(&["posterior", "--config", &cfg, "--x", "0.5,-1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["location"], serde_json::json!([0.5, -1.0]));
    assert_eq!(v["a_star"], serde_json::json!([-1.0, -2.0]));
    assert_eq!(v["A"], serde_json::json!(0.0));
    assert!(v["posterior_mean"].as_array().unwrap().len() == 2);
}

#[test]
fn sweep_headers_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.json", SWEEP);
    let out = dir.path().join("out");
    let o = run(&[
        "risk-sweep",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for name in ["risks", "differences"] {
        let text = std::fs::read_to_string(out.join(format!("{name}.csv"))).unwrap();
        let header = std::fs::read_to_string(golden.join(format!("{name}_header.csv"))).unwrap();
        assert!(text.starts_with(&header), "{name}");
    }
    let risks = std::fs::read_to_string(out.join("risks.csv")).unwrap();
    assert_eq!(risks.lines().count(), 1 + 3 * 3);
    let diffs = std::fs::read_to_string(out.join("differences.csv")).unwrap();
    assert_eq!(diffs.lines().count(), 1 + 3 * 2);
    assert!(diffs
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("0,mre,harmonic_bayes,"));
}

#[test]
fn sweep_output_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.json", SWEEP);
    let outs: Vec<_> = [("a", "1"), ("b", "1"), ("c", "3")]
        .iter()
        .map(|(name, workers)| {
            let out = dir.path().join(name);
            let o = run(&[
                "risk-sweep",
                "--config",
                &cfg,
                "--n",
                "9000",
                "--workers",
                workers,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert!(o.status.success());
            out
        })
        .collect();
    for file in ["risks.csv", "differences.csv"] {
        let first = std::fs::read(outs[0].join(file)).unwrap();
        for other in &outs[1..] {
            assert_eq!(first, std::fs::read(other.join(file)).unwrap(), "{file}");
        }
    }
}

#[test]
fn c_sweep_writes_one_pair_per_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SWEEP.replace(
        r#""t_grid": [0, 1, 4],"#,
        r#""t_grid": [0, 2], "c_values": [2, 3, 4, 5],"#,
    );
    let cfg = write_config(dir.path(), "c.json", &cfg);
    let out = dir.path().join("out");
    let o = run(&[
        "risk-sweep",
        "--config",
        &cfg,
        "--n",
        "2000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for c in 2..=5 {
        assert!(out.join(format!("risks_c{c}.csv")).exists());
        assert!(out.join(format!("differences_c{c}.csv")).exists());
    }
    let table = stdout(&o);
    assert!(table.contains("c = 5"));
}

#[test]
fn failed_points_are_recorded_in_the_errors_column() {
    let dir = tempfile::tempdir().unwrap();
    // interval restriction needs d = 2, so every point fails
    let cfg = SWEEP.replace(
        r#"{"kind": "plugin_js"}"#,
        r#"{"kind": "restricted_interval", "c_lo": -1, "c_hi": 1}"#,
    );
    let cfg = write_config(dir.path(), "bad.json", &cfg);
    let out = dir.path().join("out");
    let o = run(&[
        "risk-sweep",
        "--config",
        &cfg,
        "--n",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ne!(o.status.code(), Some(0));
    let risks = std::fs::read_to_string(out.join("risks.csv")).unwrap();
    assert_eq!(risks.lines().count(), 1 + 3 * 3);
    assert!(risks.lines().skip(1).all(|l| !l.ends_with(',')));
}
