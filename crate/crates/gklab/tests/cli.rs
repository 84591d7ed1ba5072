use std::fs;
use std::path::Path;
use std::process::Command;

fn gklab(dir: &Path, args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_gklab")).current_dir(dir).args(args).output().expect("binary runs");
    out.status.code().expect("exit code")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn verify_default_profile_passes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(gklab(tmp.path(), &["verify", "--out", "v"]), 0);
    let m = manifest(&tmp.path().join("v"));
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config"]["grid"]["n"], 2048);
    let csv = fs::read_to_string(tmp.path().join("v/state.csv")).unwrap();
    assert!(csv.starts_with("t,p,f,det_i_plus_j,det_i_minus_j,psi_plus,psi_minus,angle,res_"));
    assert_eq!(csv.lines().count(), 2049);
}

#[test]
fn zero_tolerance_is_a_breach() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(gklab(tmp.path(), &["verify", "--tol", "0", "--grid-n", "256", "--out", "v"]), 1);
    assert_eq!(manifest(&tmp.path().join("v"))["exit_code"], 1);
}

#[test]
fn config_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.csv"), "t,p\n0,zero\n").unwrap();
    fs::write(d.join("bad.json"), r#"{"profile": {"kind": "csv", "path": "bad.csv"}}"#).unwrap();
    assert_eq!(gklab(d, &["verify", "--config", "bad.json"]), 2);
    fs::write(d.join("typo.json"), r#"{"alpha": 0.3}"#).unwrap();
    assert_eq!(gklab(d, &["verify", "--config", "typo.json"]), 2);
    assert_eq!(gklab(d, &["solve", "--beta", "1.0"]), 2);
    assert_eq!(gklab(d, &["solve", "--alpha", "0.5", "--beta", "0.4"]), 2);
    assert_eq!(gklab(d, &["verify", "--grid-n", "1000"]), 2);
    assert_eq!(gklab(d, &["verify", "--grid-n", "16"]), 2);
    assert_eq!(gklab(d, &["verify", "--config", "missing.json"]), 2);
    assert_eq!(gklab(d, &["bogus"]), 2);
    assert!(!d.join("gklab-out").exists());
}

#[test]
fn csv_profile_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let n = 512;
    let mut s = String::from("t,p\n");
    for k in 0..n {
        let t = -10.0 + 20.0 * k as f64 / (n - 1) as f64;
        s.push_str(&format!("{t:.17e},{:.17e}\n", 0.5 * t.tanh()));
    }
    fs::write(d.join("p.csv"), s).unwrap();
    fs::write(d.join("c.json"), r#"{"profile": {"kind": "csv", "path": "p.csv"}}"#).unwrap();
    assert_eq!(gklab(d, &["verify", "--config", "c.json", "--tol", "1e-5", "--out", "v"]), 0);
    let m = manifest(&d.join("v"));
    assert_eq!(m["config"]["grid"]["n"], 512);
    assert_eq!(m["config"]["grid"]["t_max"], 10.0);
    // The configured grid must agree with the file.
    assert_eq!(gklab(d, &["verify", "--config", "c.json", "--grid-n", "1024"]), 2);
}

#[test]
fn solve_writes_soliton_and_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let beta = format!("{}", (-0.7f64).exp());
    assert_eq!(gklab(tmp.path(), &["solve", "--beta", &beta, "--grid-n", "1024", "--out", "s"]), 0);
    let s = tmp.path().join("s");
    let sol: serde_json::Value = serde_json::from_str(&fs::read_to_string(s.join("soliton.json")).unwrap()).unwrap();
    assert_eq!(sol["kappa_i"], serde_json::json!([-1.0, -1.0, 0.0]));
    assert!(sol["residuals"].as_array().unwrap().iter().all(|r| r["pass"] == true));
    assert!(sol["tail_rates"]["fitted"]["lambda_minus"].as_f64().unwrap() > 1.0);
    for f in ["profile.csv", "profile.json", "soliton_state.csv"] {
        assert!(s.join(f).exists(), "{f}");
    }
    let m = manifest(&s);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 4);
}

#[test]
fn solver_failure_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let beta = format!("{}", (-0.7f64).exp());
    fs::write(d.join("c.json"), r#"{"solver": {"max_iterations": 1, "tolerance": 1e-13, "fd_step": 1e-7, "armijo": 1e-4, "min_damping": 0.0009765625}}"#)
        .unwrap();
    assert_eq!(gklab(d, &["solve", "--config", "c.json", "--beta", &beta, "--grid-n", "512", "--out", "s"]), 1);
    let m = manifest(&d.join("s"));
    assert!(m["message"].as_str().unwrap().contains("iteration"));
}

#[test]
fn flow_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let small = ["--t-max", "10", "--grid-n", "1024"];

    fs::write(d.join("zero.json"), r#"{"flow": {"potential": "zero", "t_end": 0.01, "dt": 0.001}}"#).unwrap();
    let mut a = vec!["flow", "--config", "zero.json", "--out", "z"];
    a.extend(small);
    assert_eq!(gklab(d, &a), 0);
    let trace = fs::read_to_string(d.join("z/flow_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 12);
    for line in trace.lines().skip(1) {
        let v: Vec<&str> = line.split(',').collect();
        assert_eq!(&v[1..4], ["0.0000000000000000e0"; 3]);
        assert_eq!(v[5], "0.0000000000000000e0");
    }

    fs::write(d.join("big.json"), r#"{"flow": {"t_end": 0.1, "dt": 0.05}}"#).unwrap();
    let mut a = vec!["flow", "--config", "big.json", "--out", "b"];
    a.extend(small);
    assert_eq!(gklab(d, &a), 1);
    assert!(manifest(&d.join("b"))["message"].as_str().unwrap().contains("watchdog"));

    fs::write(d.join("odd.json"), r#"{"flow": {"t_end": 0.01, "dt": 0.003}}"#).unwrap();
    assert_eq!(gklab(d, &["flow", "--config", "odd.json"]), 2);

    fs::write(d.join("rig.json"), r#"{"rigidity": {"t_end": 0.02, "dt": 0.005, "sample_every": 1}}"#).unwrap();
    let mut a = vec!["rigidity", "--config", "rig.json", "--out", "r"];
    a.extend(small);
    assert_eq!(gklab(d, &a), 0);
    let j: Vec<f64> = fs::read_to_string(d.join("r/rigidity_trace.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(j.len(), 9);
    assert!(j.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] > 0.0));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("f.json"), r#"{"functional": {"count": 2, "t_end": 0.002, "dt": 0.001}, "grid": {"t_max": 10.0, "n": 512}}"#)
        .unwrap();
    for out in ["a", "b"] {
        assert_eq!(gklab(d, &["functional", "--config", "f.json", "--seed", "11", "--out", out]), 0);
    }
    for f in ["functional.csv", "functional_samples.csv"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let (ma, mb) = (manifest(&d.join("a")), manifest(&d.join("b")));
    assert_eq!(ma["content_hash"], mb["content_hash"]);
    assert_eq!(ma["seed"], 11);
    assert_eq!(gklab(d, &["functional", "--config", "f.json", "--seed", "12", "--out", "c"]), 0);
    assert_ne!(fs::read(d.join("a/functional_samples.csv")).unwrap(), fs::read(d.join("c/functional_samples.csv")).unwrap());
}
