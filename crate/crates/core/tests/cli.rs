use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_porovisco"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn zero_scenario_writes_zero_csvs() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "run",
        scenario("zero.toml").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["trajectory.csv", "ledger.csv", "identities.csv"] {
        let (header, rows) = read_csv(&out.path().join(name));
        assert!(!rows.is_empty(), "{name} has rows");
        for row in rows {
            for (h, v) in header.iter().zip(&row) {
                if h != "t" && h != "identity" {
                    assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{name}: {row:?}");
                }
            }
        }
    }
    assert!(out.path().join("manifest.json").exists());
}

#[test]
fn adjusted_content_mismatch_exits_with_config_error() {
    let o = run(&[
        "run",
        scenario("bad_delta2.toml").to_str().unwrap(),
        "--out",
        "/nonexistent/never-written",
    ]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("δ₂ = α δ₁"), "{err}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("zero.toml"))
        .unwrap()
        .replace("n = 16", "n = 16\nrefine = 2");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("refine"));
}

#[test]
fn outputs_are_deterministic_and_manifest_reproduces_them() {
    let root = tempfile::tempdir().unwrap();
    let (a, b, c) = (root.path().join("a"), root.path().join("b"), root.path().join("c"));
    let cfg = scenario("forced_2d.toml");
    for d in [&a, &b] {
        assert_eq!(
            code(&run(&["run", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()])),
            0
        );
    }
    let manifest = a.join("manifest.json");
    assert_eq!(
        code(&run(&["run", manifest.to_str().unwrap(), "--out", c.to_str().unwrap()])),
        0
    );
    for name in ["trajectory.csv", "ledger.csv", "identities.csv", "manifest.json"] {
        let ref_bytes = std::fs::read(a.join(name)).unwrap();
        assert_eq!(
            ref_bytes,
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs between runs"
        );
        if name != "manifest.json" {
            assert_eq!(
                ref_bytes,
                std::fs::read(c.join(name)).unwrap(),
                "{name} differs after manifest rerun"
            );
        }
    }
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(m["regime"], "ViscoStandardContent/Compressible");
    let traj = std::fs::read(a.join("trajectory.csv")).unwrap();
    assert_eq!(m["files"][0]["hash"], porovisco::cli::blob_hash(&traj));
}

#[test]
fn oracle_scenario_passes_strict() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "run",
        "--strict",
        scenario("oracle_mode1.toml").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.path().join("identities.csv"));
    let rel = header.iter().position(|h| h == "relative").unwrap();
    let worst = rows
        .iter()
        .map(|r| r[rel].parse::<f64>().unwrap().abs())
        .fold(0.0, f64::max);
    assert!(worst > 0.0 && worst <= 5e-3, "{worst}");
    let idents: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert!(idents.contains("energyest") && idents.contains("eed1c0"));
}

#[test]
fn strict_failure_exits_four_but_still_writes_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "run",
        "--strict",
        scenario("adjusted_content.toml").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("finest"));
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["strict_failures"].as_array().unwrap().len(), 1);
}

#[test]
fn spectrum_without_dense_mode_is_a_solver_failure() {
    let out = tempfile::tempdir().unwrap();
    let cfg = scenario("damped_wave_2d.toml");
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--dense-mode",
        "off",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    let o = run(&["run", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.path().join("spectrum.json")).unwrap()).unwrap();
    assert!(s["spectral_abscissa"].as_f64().unwrap() < 0.0);
}

#[test]
fn verify_quick_passes_and_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = run(&[
        "--threads",
        "2",
        "verify",
        "--level",
        "quick",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    let ids: Vec<u64> = r["criteria"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["id"].as_u64().unwrap())
        .collect();
    assert_eq!(ids, [1, 2, 3, 8, 12]);
    for c in r["criteria"].as_array().unwrap() {
        for m in c["measurements"].as_array().unwrap() {
            assert!(m["value"].is_number() && m["threshold"].is_string());
        }
    }
}

#[test]
fn verify_full_with_broken_symmetry_names_the_criterion() {
    let o = run(&["verify", "--level", "full", "--inject-fault", "break-b-symmetry"]);
    assert_eq!(code(&o), 4);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let crit = r["criteria"].as_array().unwrap();
    assert_eq!(crit.len(), 12);
    let failed: Vec<u64> = crit
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["id"].as_u64().unwrap())
        .collect();
    assert_eq!(failed, [1]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("criterion  1 [FAIL]"));
}
