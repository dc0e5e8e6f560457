use std::path::Path;
use std::process::{Command, Output};

use wakelink::config::Preset;
use wakelink::experiment::PARAMS_FILE;
use wakelink::{dataset, params};
use wakelink_core::pipeline::random_models;
use wakelink_core::{derive_stream, Purpose, Split};

fn wakelink(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wakelink"))
        .current_dir(dir)
        .args(args)
        .env_remove("WAKELINK_SIM__ALPHA")
        .output()
        .expect("spawn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_untrained(dir: &Path) {
    let cfg = Preset::Desk.config();
    let n = &cfg.network;
    let m = random_models(
        &cfg.sim,
        n.enc_hidden,
        n.dec_hidden,
        n.hyper_hidden,
        n.beta,
        n.threshold,
        &mut derive_stream(1, Purpose::Init, 0),
    );
    params::write(&dir.join(PARAMS_FILE), &m).unwrap();
}

#[test]
fn gen_data_is_tagged_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = wakelink(dir.path(), &["--out", out, "--seed", "5", "gen-data", "--split", "pt", "--count", "200", "--classes", "4"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for ext in ["bin", "json", "csv"] {
        let a = std::fs::read(dir.path().join(format!("a/PT-r0.{ext}"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b/PT-r0.{ext}"))).unwrap();
        assert_eq!(a, b, "{ext}");
    }
    let (ds, rep) = dataset::read(&dir.path().join("a/PT-r0.bin")).unwrap();
    assert_eq!((ds.len(), ds.split, rep), (200, Split::Pt, 0));
    assert!(ds.examples.iter().all(|e| e.label < 4));
    assert!(dir.path().join("a/manifest.json").exists());
}

#[test]
fn invalid_configuration_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let gen = ["gen-data", "--split", "dt", "--count", "1"];
    for extra in [
        &["--alpha", "1.5"][..],
        &["--set", "sim.l_max"][..],
        &["--set", "sim.unknown=1"][..],
        &["--set", "grid.values_d=[3, 1]"][..],
        &["--workers", "0"][..],
    ] {
        let o = wakelink(dir.path(), &[extra, &gen[..]].concat());
        assert_eq!(code(&o), 2, "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    std::fs::write(dir.path().join("bad.toml"), "[sim\nalpha = ").unwrap();
    let o = wakelink(dir.path(), &[&["--config", "bad.toml"][..], &gen[..]].concat());
    assert_eq!(code(&o), 2);
}

#[test]
fn environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_wakelink"))
        .current_dir(dir.path())
        .args(["gen-data", "--split", "dt", "--count", "1"])
        .env("WAKELINK_SIM__ALPHA", "2.0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_values_reach_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[sim]\nseed = 99\n\n[data]\nn_pt = 321\n").unwrap();
    let o = wakelink(dir.path(), &["--config", "c.toml", "gen-data", "--split", "dt", "--count", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = wakelink::manifest::RunManifest::read(&dir.path().join("out/manifest.json")).unwrap();
    assert_eq!(m.seed, 99);
    assert_eq!(m.config.data.n_pt, 321);
}

#[test]
fn file_problems_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = wakelink(dir.path(), &["calibrate", "--params", "missing.wlnp"]);
    assert_eq!(code(&o), 3);
    std::fs::write(dir.path().join("junk.wlnp"), b"not a parameter file").unwrap();
    let o = wakelink(dir.path(), &["calibrate", "--params", "junk.wlnp"]);
    assert_eq!(code(&o), 3);
    let o = wakelink(dir.path(), &["--config", "nope.toml", "gen-data", "--split", "dt", "--count", "1"]);
    assert_eq!(code(&o), 3);
    let o = wakelink(dir.path(), &["rerun", "--manifest", "nope.json"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn negative_psi_is_secure_success() {
    let dir = tempfile::tempdir().unwrap();
    write_untrained(dir.path());
    let o = wakelink(
        dir.path(),
        &[
            "--alpha", "0.05", "--delta", "0.05", "--set", "data.n_pt=20", "--set", "data.n_dt=40",
            "calibrate", "--params", PARAMS_FILE, "--mode", "dtltt",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/calibration-dtltt-r0.json")).unwrap()).unwrap();
    assert_eq!(r["result"]["secure"], true);
    assert_eq!(r["result"]["lambda_star"]["secure"], true);
    assert!(r["result"]["psi"].as_f64().unwrap() < 0.0);
}

#[test]
fn rerun_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    write_untrained(dir.path());
    let args = [
        "--set", "data.n_pt=30", "--set", "data.n_dt=30", "--set", "data.n_test=30",
        "validate-coverage", "--params", PARAMS_FILE, "--reps", "3", "--mode", "always-on",
    ];
    let o = wakelink(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = wakelink(dir.path(), &["rerun", "--manifest", "out/manifest.json"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("outputs match"));
    assert_eq!(
        std::fs::read(dir.path().join("out/coverage-always-on.json")).unwrap(),
        std::fs::read(dir.path().join("out/rerun/coverage-always-on.json")).unwrap()
    );
    let mut bytes = std::fs::read(dir.path().join(PARAMS_FILE)).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 0x40;
    std::fs::write(dir.path().join(PARAMS_FILE), bytes).unwrap();
    let o = wakelink(dir.path(), &["rerun", "--manifest", "out/manifest.json"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn sweep_writes_one_row_per_mode_and_alpha() {
    let dir = tempfile::tempdir().unwrap();
    write_untrained(dir.path());
    let o = wakelink(
        dir.path(),
        &[
            "--set", "data.n_pt=20", "--set", "data.n_dt=20", "--set", "data.n_test=20",
            "sweep", "--params", PARAMS_FILE, "--reps", "2", "--alphas", "0.2,0.3", "--modes", "conventional,always-on",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("method,alpha,mean_loss,mean_energy"));
    for r in &rows[1..] {
        let size: f64 = r.split(',').nth(5).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&size));
    }
}
