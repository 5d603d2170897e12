use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TWO_PUMPS: &str = r#"{
  "schema_version": 1,
  "level_system": { "intermediates": [{ "energy": 0.86 }, { "energy": 1.67 }] },
  "pumps": [{ "wavelength_nm": 405.0 }, { "wavelength_nm": 455.9 }],
  "source": { "delta_omega_ev": 0.0074 }
}"#;

fn etpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etpa"))
        .args(args)
        .env_remove("ETPA_LOG")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

fn hash_of(stdout: &[u8]) -> String {
    let text = String::from_utf8_lossy(stdout);
    let at = text.find("config_hash=").unwrap() + "config_hash=".len();
    text[at..at + 16].to_string()
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for path in files(&dir).iter().filter(|p| !p.ends_with("sweep.json")) {
        let out = etpa(&["validate-config", "--config", path.to_str().unwrap()]);
        assert!(
            out.status.success(),
            "{}: {}",
            path.display(),
            String::from_utf8_lossy(&out.stderr)
        );
        n += 1;
    }
    assert!(n >= 4);
}

#[test]
fn extract_writes_hashed_reproducible_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TWO_PUMPS);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let out = etpa(&["extract", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let hash = hash_of(&out.stdout);
    assert!(etpa(&["extract", "--config", &cfg, "--out", b.to_str().unwrap()])
        .status
        .success());

    let fa = files(&a);
    assert!(fa.len() >= 12);
    for path in &fa {
        let bytes = std::fs::read(path).unwrap();
        assert!(
            String::from_utf8_lossy(&bytes).contains(&hash),
            "{} lacks the hash",
            path.display()
        );
        let twin = b.join(path.strip_prefix(&a).unwrap());
        assert_eq!(bytes, std::fs::read(twin).unwrap(), "{} differs", path.display());
    }

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("match_report.json")).unwrap()).unwrap();
    let energies: Vec<f64> = report["energies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["epsilon"].as_f64().unwrap())
        .collect();
    assert_eq!(energies.len(), 2);
    assert!((energies[0] - 0.86).abs() < 2.4e-3 && (energies[1] - 1.67).abs() < 2.4e-3);

    let table = etpa::output::read_two_columns(&std::fs::read_to_string(a.join("pump_0/trace.csv")).unwrap()).unwrap();
    assert_eq!(table.get("config_hash"), Some(hash.as_str()));
    assert_eq!(table.columns.0, "tau_fs");
}

#[test]
fn seed_flag_changes_hash_and_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let noisy = TWO_PUMPS.replace(
        "\"source\"",
        "\"noise\": { \"counts_budget\": 1e5, \"seed\": 1 }, \"source\"",
    );
    let cfg = write_config(tmp.path(), "c.json", &noisy);
    let run = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let o = etpa(&[
            "simulate",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert!(o.status.success());
        (hash_of(&o.stdout), std::fs::read(out.join("pump_0/trace.csv")).unwrap())
    };
    let (h1, t1) = run("1", "x");
    let (h2, t2) = run("2", "y");
    assert_ne!(h1, h2);
    assert_ne!(t1, t2);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let code = |args: &[&str]| etpa(args).status.code().unwrap();

    let bad_json = write_config(tmp.path(), "bad.json", "{ \"schema_version\": 1,");
    assert_eq!(code(&["validate-config", "--config", &bad_json]), 2);
    let o = etpa(&["validate-config", "--config", &bad_json]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    assert_eq!(code(&["simulate", "--config", "/no/such/file.json", "--out", out]), 2);

    let unknown = write_config(
        tmp.path(),
        "u.json",
        &TWO_PUMPS.replace("\"source\"", "\"sorce\": {}, \"source\""),
    );
    assert_eq!(code(&["validate-config", "--config", &unknown]), 2);

    let one_pump = write_config(
        tmp.path(),
        "one.json",
        &TWO_PUMPS.replace(", { \"wavelength_nm\": 455.9 }", ""),
    );
    assert_eq!(code(&["simulate", "--config", &one_pump, "--out", out]), 0);
    assert_eq!(code(&["extract", "--config", &one_pump, "--out", out]), 2);

    let same = write_config(tmp.path(), "same.json", &TWO_PUMPS.replace("455.9", "405.0"));
    assert_eq!(code(&["extract", "--config", &same, "--out", out]), 2);

    let coarse = write_config(
        tmp.path(),
        "coarse.json",
        &TWO_PUMPS.replace(
            "\"delta_omega_ev\": 0.0074",
            "\"delta_omega_ev\": 0.0074, \"convention\": \"reduced_planck\"",
        ),
    );
    assert_eq!(code(&["validate-config", "--config", &coarse]), 2);
    assert_eq!(
        code(&["validate-config", "--config", &coarse, "--override-resolution-check"]),
        0
    );

    let good = write_config(tmp.path(), "good.json", TWO_PUMPS);
    let blocker = tmp.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let blocked = blocker.join("sub");
    assert_eq!(
        code(&["simulate", "--config", &good, "--out", blocked.to_str().unwrap()]),
        3
    );

    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn single_cell_sweep_agrees_with_extract() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TWO_PUMPS);
    let ex = tmp.path().join("ex");
    let sw = tmp.path().join("sw");
    assert!(etpa(&["extract", "--config", &cfg, "--out", ex.to_str().unwrap()])
        .status
        .success());
    assert!(etpa(&["sweep", "--config", &cfg, "--out", sw.to_str().unwrap()])
        .status
        .success());

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ex.join("match_report.json")).unwrap()).unwrap();
    let truth: Vec<f64> = report["true_energies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let found: Vec<f64> = report["energies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["epsilon"].as_f64().unwrap())
        .collect();
    let max_error = truth
        .iter()
        .map(|t| found.iter().map(|f| (f - t).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);

    let csv = std::fs::read_to_string(sw.join("sweep.csv")).unwrap();
    let mut rows = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let row: Vec<&str> = rows.next().unwrap().split(',').collect();
    assert!(rows.next().is_none());
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("recovery_rate"), "1");
    assert_eq!(col("false_energies"), "0");
    let err: f64 = col("mean_abs_error_ev").parse().unwrap();
    assert!((err - max_error).abs() < 1e-15, "{err} vs {max_error}");
    assert!(sw.join("sweep_timing.csv").exists());
}

#[test]
fn sweep_grid_is_capped_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TWO_PUMPS);
    let capped = write_config(
        tmp.path(),
        "cap.json",
        r#"{ "schema_version": 1, "delta_tau_fs": [0.2, 0.3], "counts_budget": [null, 1e6], "max_cells": 3 }"#,
    );
    let out = tmp.path().join("o");
    let o = etpa(&[
        "sweep",
        "--config",
        &cfg,
        "--sweep",
        &capped,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("max_cells"));

    let spec = write_config(
        tmp.path(),
        "grid.json",
        r#"{ "schema_version": 1, "counts_budget": [1e6], "n_states": [1, 2], "n_pumps": [3], "trials": 4 }"#,
    );
    let run = |dir: &str| {
        let out = tmp.path().join(dir);
        assert!(etpa(&[
            "sweep",
            "--config",
            &cfg,
            "--sweep",
            &spec,
            "--out",
            out.to_str().unwrap()
        ])
        .status
        .success());
        std::fs::read(out.join("sweep.csv")).unwrap()
    };
    let a = run("s1");
    assert_eq!(a, run("s2"));
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn log_level_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TWO_PUMPS);
    let quiet = etpa(&["validate-config", "--config", &cfg]);
    assert!(quiet.stderr.is_empty());
    let loud = Command::new(env!("CARGO_BIN_EXE_etpa"))
        .args(["validate-config", "--config", &cfg])
        .env("ETPA_LOG", "info")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&loud.stderr).contains("hash"));
}
