use std::path::PathBuf;
use std::process::{Command, Output};

fn convlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convlab"))
        .args(args)
        .env_remove("CONVLAB_OUT")
        .output()
        .expect("spawn convlab")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("convlab-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn example(name: &str) -> String {
    format!("{}/examples/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn every_example_config_validates() {
    for name in [
        "toy.json",
        "spde.json",
        "contraction.json",
        "moments.json",
        "invariant.json",
    ] {
        let out = convlab(&["validate-config", "--config", &example(name)]);
        assert!(
            out.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let echoed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(echoed["dt"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = scratch("bad");
    let path = dir.join("bad.json");
    std::fs::write(&path, r#"{"system":"toy","epz_grid":[0.1]}"#).unwrap();
    let out = convlab(&["validate-config", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epz_grid"));
    std::fs::write(&path, r#"{"system":"toy","toy":{"m1":2,"m2":2,"n_forced":2,"ra":1},"eps_grid":[0.1],"n_replicas":2}"#).unwrap();
    let out = convlab(&[
        "toy-converge",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_replicas"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(convlab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(convlab(&[]).status.code(), Some(2));
}

#[test]
fn dry_run_writes_only_the_manifest() {
    let dir = scratch("dry");
    let out = convlab(&[
        "spde-converge",
        "--dry-run",
        "--seed",
        "7",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(files, vec!["spde_converge_manifest.json"]);
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("spde_converge_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["dry_run"], true);
    assert_eq!(m["command"], "spde-converge");
    assert_eq!(m["config"]["seed"], 7);
    assert_eq!(m["config"]["spde"]["nx"], 32);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 0);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn env_out_dir_takes_precedence() {
    let env_dir = scratch("env");
    let flag_dir = scratch("flag");
    let out = Command::new(env!("CARGO_BIN_EXE_convlab"))
        .args(["moments", "--dry-run", "--out", flag_dir.to_str().unwrap()])
        .env("CONVLAB_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_dir.join("moments_manifest.json").exists());
    assert!(!flag_dir.join("moments_manifest.json").exists());
    std::fs::remove_dir_all(&env_dir).unwrap();
    std::fs::remove_dir_all(&flag_dir).unwrap();
}

#[test]
fn run_and_rerun_detects_tampering() {
    let dir = scratch("rerun");
    let cfg = dir.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"system":"toy","toy":{"m1":3,"m2":3,"n_forced":3,"ra":1},"eps_grid":[0.1,0.01],"n_replicas":16,"dt":0.01,"burn_in":0.2}"#,
    )
    .unwrap();
    let a = dir.join("a");
    let out = convlab(&[
        "toy-converge",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "toy_converge.csv",
        "toy_converge.json",
        "toy_converge_plot.py",
        "toy_converge_manifest.json",
    ] {
        assert!(a.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(a.join("toy_converge.csv")).unwrap();
    assert!(csv.starts_with("eps,metric,estimate,halfwidth3s,n\n"));

    let manifest = a.join("toy_converge_manifest.json");
    let b = dir.join("b");
    let out = convlab(&[
        "rerun",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );

    // A manifest whose recorded hash no longer matches the study output.
    let mut m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    for o in m["outputs"].as_array_mut().unwrap() {
        if o["path"] == "toy_converge.csv" {
            o["sha256"] = "0".repeat(64).into();
        }
    }
    std::fs::write(&manifest, serde_json::to_vec(&m).unwrap()).unwrap();
    let c = dir.join("c");
    let out = convlab(&[
        "rerun",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("DIFFERS toy_converge.csv"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn params_reports_dimensionless_numbers() {
    let out = convlab(&[
        "params", "--nu", "1e-2", "--kappa", "1e-6", "--g", "9.8", "--alpha", "2e-4", "--gamma",
        "1", "--h", "1", "--t1", "1",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["Pr"].as_f64().unwrap() - 1e4).abs() < 1e-8);
    assert!((v["eps"].as_f64().unwrap() - 1e-4).abs() < 1e-16);
    let out = convlab(&[
        "params", "--nu", "-1", "--kappa", "1e-6", "--g", "9.8", "--alpha", "2e-4", "--gamma", "1",
        "--h", "1", "--t1", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
