use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
    "problem": {"kind": "spectral", "seed": 3, "components": 16, "spectrum": [1, 2, 3], "halfspaces": 2, "noise": 0.3},
    "algorithm": {"name": "ssqp", "schedule": {"mode": "strongly_convex"}},
    "gamma": {"mode": "certified"},
    "reference": {"mode": "enumerate"},
    "seeds": [1],
    "stop": {"iterations": 400},
    "checkpoint_stride": 10
}"#;

fn bench(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ssqp-bench"));
    cmd.args(args).env_remove("SSQP_OUTPUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("SSQP_OUTPUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn traces_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn run_writes_one_trace_per_seed_and_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SMALL);
    let out = tmp.path().join("out");
    let o = bench(&["run", &cfg, "--seed", "1..3,7", "--output", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(traces_in(&out), ["trace_seed_1.csv", "trace_seed_2.csv", "trace_seed_3.csv", "trace_seed_7.csv"]);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["seeds"], serde_json::json!([1, 2, 3, 7]));
    assert!(meta["penalty"]["gamma"].as_f64().unwrap() > 0.0);
    assert!(meta["library_version"].is_string());
}

#[test]
fn env_var_overrides_config_but_not_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SMALL);
    let env_dir = tmp.path().join("env");
    let o = bench(&["run", &cfg, "--iterations", "20"], Some(&env_dir));
    assert!(o.status.success());
    assert_eq!(traces_in(&env_dir).len(), 1);
    let flag_dir = tmp.path().join("flag");
    let o = bench(&["run", &cfg, "--iterations", "20", "--output", flag_dir.to_str().unwrap()], Some(&env_dir));
    assert!(o.status.success());
    assert_eq!(traces_in(&flag_dir).len(), 1);
}

#[test]
fn zero_horizon_gives_header_only_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SMALL);
    let o = bench(&["run", &cfg, "--iterations", "0"], Some(tmp.path()));
    assert!(o.status.success());
    let text = std::fs::read_to_string(tmp.path().join("trace_seed_1.csv")).unwrap();
    assert_eq!(text, "iter,sfo,qmo,gap,rel_gap,max_viol,sum_viol,dist_sq,wall\n");
    assert!(tmp.path().join("metadata.json").exists());
}

#[test]
fn metadata_file_reruns_to_identical_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(bench(&["run", &cfg, "--output", a.to_str().unwrap()], None).status.success());
    let meta = a.join("metadata.json");
    assert!(bench(&["run", meta.to_str().unwrap(), "--output", b.to_str().unwrap()], None).status.success());
    let ta = std::fs::read(a.join("trace_seed_1.csv")).unwrap();
    let tb = std::fs::read(b.join("trace_seed_1.csv")).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.json", r#"{"problem": {"kind": "nope"}}"#);
    assert_eq!(bench(&["run", &bad], Some(tmp.path())).status.code(), Some(2));
    let unknown = write(tmp.path(), "u.json", &SMALL.replace("\"seeds\"", "\"colour\": 1, \"seeds\""));
    assert_eq!(bench(&["run", &unknown], Some(tmp.path())).status.code(), Some(2));
    let cfg = write(tmp.path(), "c.json", SMALL);
    assert_eq!(bench(&["run", &cfg, "--epochs", "3"], Some(tmp.path())).status.code(), Some(2));
    let missing = tmp.path().join("missing.json");
    assert_eq!(bench(&["run", missing.to_str().unwrap()], Some(tmp.path())).status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace(
        r#"{"name": "ssqp", "schedule": {"mode": "strongly_convex"}}"#,
        r#"{"name": "primal-dual", "rule": {"rule": "constant", "eta_x": 1e3, "eta_lambda": 1.0}}"#,
    );
    let cfg = write(tmp.path(), "c.json", &text);
    let o = bench(&["run", &cfg], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let meta = std::fs::read_to_string(tmp.path().join("metadata.json")).unwrap();
    assert!(meta.contains("diverged"));
}

#[test]
fn reference_prints_point_and_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SMALL);
    let o = bench(&["reference", &cfg], None);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["reference"]["x_star"].as_array().unwrap().len(), 3);
    assert!(v["reference"]["f_star"].as_f64().is_some());
}

#[test]
fn reference_failure_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace(r#""halfspaces": 2"#, r#""halfspaces": 20"#);
    let cfg = write(tmp.path(), "c.json", &text);
    let o = bench(&["run", &cfg], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn report_and_slope_read_the_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SMALL);
    let out = tmp.path().join("out");
    assert!(bench(&["run", &cfg, "--seed", "1,2", "--iterations", "4000", "--output", out.to_str().unwrap()], None)
        .status
        .success());
    let o = bench(&["report", out.to_str().unwrap(), "--threshold", "1e-2", "--threshold", "1e-30", "--m", "5"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["traces"], 2);
    let first = &v["thresholds"][0];
    assert_eq!(first["crossed"], 2);
    let (s, q) = (first["mean_sfo"].as_f64().unwrap(), first["mean_qmo"].as_f64().unwrap());
    assert_eq!(first["model_time"].as_f64().unwrap(), s + 5.0 * q);
    assert_eq!(v["thresholds"][1]["censored"], 2);
    assert!(v["thresholds"][1]["mean_sfo"].is_null());

    let trace = out.join("trace_seed_1.csv");
    let o = bench(&["slope", trace.to_str().unwrap(), "--metric", "dist_sq"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let slope = v["fit"]["slope"].as_f64().unwrap();
    assert!(slope < 0.0, "slope {slope}");
}

#[test]
fn report_defaults_m_from_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("\"seeds\"", "\"cost_model_m\": 7, \"seeds\"");
    let cfg = write(tmp.path(), "c.json", &text);
    assert!(bench(&["run", &cfg], Some(tmp.path())).status.success());
    let o = bench(&["report", tmp.path().to_str().unwrap(), "--threshold", "1"], None);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["m"], 7.0);
}
