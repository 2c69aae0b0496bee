use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfsmc-bench")).args(args).env_remove("PFSMC_WORKERS").output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn gen_metabolic(dir: &Path) -> String {
    let data = dir.join("obs.csv").display().to_string();
    ok(&bench(&["gen", "--problem", "metabolic", "--seed", "3", "--data", &data]));
    data
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_metabolic(dir.path());
    let first = fs::read(&a).unwrap();
    gen_metabolic(dir.path());
    assert_eq!(first, fs::read(&a).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 51);
    assert!(text.starts_with("t,y1,y2,y3\n"));
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("obs.json")).unwrap()).unwrap();
    assert_eq!(side["problem"], "metabolic");
    assert_eq!(side["truth"].as_array().unwrap().len(), 4);
}

#[test]
fn gen_rejects_vanishing_noise() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("obs.csv").display().to_string();
    let out = bench(&["gen", "--sigma", "1e-300", "--data", &data]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("obs.csv").exists());
}

#[test]
fn run_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_metabolic(dir.path());
    let out_dir = dir.path().join("run");
    let o = out_dir.display().to_string();
    ok(&bench(&["run", "--data", &data, "--out", &o, "--particles", "40", "--integrator", "bdf1", "--warmup"]));
    let trace = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 52);
    assert_eq!(
        lines[0],
        "j,t,theta_mean_V1,theta_mean_k1,theta_mean_V2,theta_mean_k2,theta_var_V1,theta_var_k1,theta_var_V2,theta_var_k2,ess"
    );
    assert!(!trace.contains("NaN"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["integrator"], "bdf1");
    assert_eq!(report["config"]["particles"], 40);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);

    ok(&bench(&["run", "--data", &data, "--out", &o, "--particles", "40", "--integrator", "bdf1"]));
    assert_eq!(trace, fs::read_to_string(out_dir.join("trace.csv")).unwrap());
}

#[test]
fn workers_default_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_metabolic(dir.path());
    let o = dir.path().join("run").display().to_string();
    let out = Command::new(env!("CARGO_BIN_EXE_pfsmc-bench"))
        .args(["run", "--data", &data, "--out", &o, "--particles", "12", "--backend", "par", "--integrator", "ab1"])
        .env("PFSMC_WORKERS", "3")
        .output()
        .unwrap();
    ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["workers"], 3);
    assert_eq!(report["busy_s"].as_array().unwrap().len(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv").display().to_string();
    assert_eq!(bench(&["run", "--data", &missing, "--particles", "5"]).status.code(), Some(4));
    let data = gen_metabolic(dir.path());
    let o = dir.path().join("x").display().to_string();
    let wrong = bench(&["run", "--data", &data, "--out", &o, "--problem", "advdiff"]);
    assert_eq!(wrong.status.code(), Some(2));
    let bad_step = bench(&["run", "--data", &data, "--out", &o, "--step", "0.03", "--particles", "5"]);
    assert_eq!(bad_step.status.code(), Some(2));
    assert_eq!(bench(&["run", "--data", &data, "--integrator", "rk4"]).status.code(), Some(2));
    assert_eq!(bench(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bench_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_metabolic(dir.path());
    let out_dir = dir.path().join("sweep");
    let o = out_dir.display().to_string();
    let out = bench(&[
        "bench",
        "--data",
        &data,
        "--out",
        &o,
        "--particles",
        "24",
        "--integrator",
        "ab1,bdf2",
        "--backends",
        "par,batch",
        "--workers",
        "2",
    ]);
    ok(&out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("integrator"));
    let csv = fs::read_to_string(out_dir.join("speedup.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "integrator,sequential_s,parallel_s,batched_s,S_P,E_P");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("ab1,") && lines[2].starts_with("bdf2,"));
    for combo in ["ab1-seq", "ab1-par", "ab1-batch", "bdf2-seq", "bdf2-par", "bdf2-batch"] {
        assert!(out_dir.join(combo).join("report.json").is_file(), "{combo}");
        assert_eq!(fs::read_dir(out_dir.join("plots").join(combo)).unwrap().count(), 4);
    }
    let par: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("ab1-par/report.json")).unwrap()).unwrap();
    let s = par["speedup"].as_f64().unwrap();
    assert!((par["efficiency"].as_f64().unwrap() - s / 2.0).abs() < 1e-12);
    // identical traces across backends
    assert_eq!(
        fs::read(out_dir.join("bdf2-seq/trace.csv")).unwrap(),
        fs::read(out_dir.join("bdf2-batch/trace.csv")).unwrap()
    );

    let again = dir.path().join("again").display().to_string();
    ok(&bench(&["report", "--input", &o, "--out", &again]));
    assert!(Path::new(&again).join("summary.json").is_file());
    assert_eq!(fs::read_to_string(Path::new(&again).join("speedup.csv")).unwrap().lines().count(), 3);
}
