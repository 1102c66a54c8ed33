use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_type1-weyl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("type1-weyl-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn schedule_reports_run_time() {
    let out = run(&["schedule", "--N", "64", "--delta", "0.1"]);
    assert!(out.status.success());
    let v = json_stdout(&out);
    // (1/0.1) (64/sqrt 63) arctan(sqrt 63), evaluated independently.
    let expected = 116.551_624_149_554_29;
    assert!((v["t_run"].as_f64().unwrap() - expected).abs() / expected < 1e-12);
    let table = v["table"].as_array().unwrap();
    let s: Vec<f64> = table.iter().map(|r| r["s"].as_f64().unwrap()).collect();
    assert_eq!(s[0], 0.0);
    assert!((s[s.len() - 1] - 1.0).abs() < 1e-12);
    assert!(s.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn schedule_csv_keeps_stdout_clean() {
    let out = run(&["schedule", "--N", "16", "--points", "5", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t,s,ds_dt\n"));
    assert_eq!(text.lines().count(), 6);
    assert!(String::from_utf8(out.stderr).unwrap().contains("t_run"));
}

#[test]
fn verify_weyl_passes() {
    let out = run(&["verify", "weyl", "--sizes", "2,4,8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_stdout(&out);
    assert_eq!(v["passed"], true);
}

#[test]
fn verify_is_deterministic() {
    let a = run(&["verify", "type1", "--sizes", "5", "--seed", "7"]);
    let b = run(&["verify", "type1", "--sizes", "5", "--seed", "7"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_detects_corrupted_operator() {
    let out = run(&[
        "verify",
        "all",
        "--sizes",
        "4",
        "--draws",
        "3",
        "--inject-fault",
        "flip-k2-sign",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_stdout(&out)["passed"], false);
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
}

#[test]
fn verify_rejects_bad_sizes_and_keys() {
    assert_eq!(run(&["verify", "--sizes", "1"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--set", "bogus=1"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "nonsense"]).status.code(), Some(2));
}

#[test]
fn spectra_two_level_quadratic() {
    let dir = scratch("spectra2");
    let path = dir.join("p.json");
    let h = std::f64::consts::FRAC_1_SQRT_2;
    fs::write(
        &path,
        format!(r#"{{"x": 0.5, "epsilon": [0.0, 1.0], "gamma": [{h}, {h}]}}"#),
    )
    .unwrap();
    let out = run(&["spectra", path.to_str().unwrap(), "--n-max", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_stdout(&out);
    let l: Vec<f64> = v["lambdas"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    // lambda^2 - (1 + x) lambda + x/2 = 0 at x = 1/2.
    let disc = (1.25f64).sqrt();
    let expected = [(1.5 - disc) / 2.0, (1.5 + disc) / 2.0];
    assert!((l[0] - expected[0]).abs() < 1e-14 && (l[1] - expected[1]).abs() < 1e-14);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn spectra_rejects_zero_coupling() {
    let dir = scratch("spectra0");
    let path = dir.join("p.json");
    fs::write(&path, r#"{"x": 0.0, "epsilon": [0.0, 1.0, 2.0]}"#).unwrap();
    let out = run(&["spectra", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-zero"));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn spectra_random_parameters_match_dense() {
    let dir = scratch("spectra5");
    let path = dir.join("p.json");
    fs::write(
        &path,
        r#"{"x": -0.8, "epsilon": [-0.4, 0.1, 0.35, 0.9, 1.7, 2.2], "gamma": [0.3, 0.5, 0.2, 0.6, 0.4, 0.3]}"#,
    )
    .unwrap();
    let out = run(&["spectra", path.to_str().unwrap(), "--n-max", "5"]);
    // gamma above is not normalised, so the library refuses it.
    assert_eq!(out.status.code(), Some(2));
    let g: Vec<f64> = [0.3f64, 0.5, 0.2, 0.6, 0.4, 0.3].to_vec();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let g: Vec<String> = g.iter().map(|v| (v / norm).to_string()).collect();
    fs::write(
        &path,
        format!(
            r#"{{"x": -0.8, "epsilon": [-0.4, 0.1, 0.35, 0.9, 1.7, 2.2], "gamma": [{}]}}"#,
            g.join(",")
        ),
    )
    .unwrap();
    let out = run(&["spectra", path.to_str().unwrap(), "--n-max", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_stdout(&out);
    for r in v["residuals"].as_array().unwrap() {
        assert!(r["eta_vs_dense"].as_f64().unwrap() <= 1e-9);
        assert!(r["kappa_vs_dense"].as_f64().unwrap() <= 1e-9);
    }
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn spectra_degenerate_needs_reduction() {
    let dir = scratch("spectra-deg");
    let path = dir.join("p.json");
    fs::write(&path, r#"{"x": 0.7, "epsilon": [0.0, 1.0, 1.0, 1.0]}"#).unwrap();
    let p = path.to_str().unwrap();
    assert_eq!(run(&["spectra", p]).status.code(), Some(2));
    let out = run(&["spectra", p, "--reduce", "--n-max", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_stdout(&out);
    assert_eq!(v["classes"].as_array().unwrap().len(), 2);
    assert_eq!(v["eta_full"]["3"].as_array().unwrap().len(), 4);
    let csv = run(&["spectra", p, "--reduce", "--n-max", "1", "--format", "csv"]);
    assert!(String::from_utf8(csv.stdout)
        .unwrap()
        .starts_with("quantity,n,index,value\n"));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn evolve_small_grover_within_bound() {
    let out = run(&[
        "evolve", "--N", "16", "--n", "1", "--delta", "0.1", "--deps", "0", "--steps", "16384",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_stdout(&out);
    assert!(v["fidelity_deficit"].as_f64().unwrap() <= 0.01);
    assert_eq!(v["converged"], true);
    assert!((v["min_gap"]["gap"].as_f64().unwrap() - 0.25).abs() < 1e-10);
}

#[test]
fn evolve_full_size_grover() {
    let out = run(&["evolve", "--N", "64", "--n", "1", "--delta", "0.1", "--deps", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json_stdout(&out)["fidelity_deficit"].as_f64().unwrap() <= 0.01);
}

#[test]
fn evolve_config_layers_and_target() {
    let dir = scratch("evolve");
    let cfg = dir.join("cfg.json");
    fs::write(
        &cfg,
        r#"{"N": 8, "n": 3, "delta": 0.3, "delta_eps": 0.1, "steps": 500, "convergence_tol": null}"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let base = run(&["evolve", "--config", c]);
    assert!(base.status.success());
    let v = json_stdout(&base);
    assert_eq!(v["config"]["n"], 3);
    // --set overrides the file, explicit flags override --set.
    let layered = run(&[
        "evolve",
        "--config",
        c,
        "--set",
        "n=2",
        "--set",
        "steps=400",
        "--steps",
        "300",
    ]);
    let w = json_stdout(&layered);
    assert_eq!(w["config"]["n"], 2);
    assert_eq!(w["config"]["steps"], 300);
    // Moving the marked item is a relabelling: same fidelity.
    let moved = json_stdout(&run(&["evolve", "--config", c, "--target", "5"]));
    let (f0, f5) = (
        v["final_fidelity"].as_f64().unwrap(),
        moved["final_fidelity"].as_f64().unwrap(),
    );
    assert!((f0 - f5).abs() < 1e-10, "{f0} vs {f5}");
    assert_eq!(
        run(&["evolve", "--config", c, "--set", "unknown=1"]).status.code(),
        Some(2)
    );
    let trace = run(&["evolve", "--config", c, "--format", "csv"]);
    assert!(String::from_utf8(trace.stdout)
        .unwrap()
        .starts_with("t,s,gap,norm_drift\n"));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bench_writes_one_row_per_seed_and_operator() {
    let dir = scratch("bench");
    let cfg = dir.join("fig1.json");
    fs::write(
        &cfg,
        r#"{"N": 8, "n_list": [1, 3], "delta": 0.3, "delta_eps": 0.1, "seeds": [1, 2, 3], "steps": 400, "convergence_tol": null}"#,
    )
    .unwrap();
    let out = run(&["bench", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    // Header, Grover baseline, then 3 seeds x 2 operators.
    assert_eq!(text.lines().count(), 1 + 1 + 6);
    let again = run(&["bench", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(text.as_bytes(), &again.stdout[..]);

    let results = dir.join("results");
    let out = run(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--traces",
        "--output",
        results.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(results.join("results.csv").exists());
    assert!(results.join("summary.json").exists());
    assert_eq!(fs::read_dir(results.join("gaps")).unwrap().count(), 7);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn help_documents_flags() {
    let out = run(&["evolve", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in [
        "--N", "--n", "--delta", "--deps", "--steps", "--config", "--seed", "--output", "--format", "--set",
    ] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}
