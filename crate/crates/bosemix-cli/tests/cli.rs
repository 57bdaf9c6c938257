use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bosemix::fock::{build_hamiltonian, ground_state};
use bosemix::models::random_toy_model;
use nalgebra::DMatrix;
use serde_json::{json, Value};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn bosemix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bosemix"))
        .args(args)
        .env_remove("BOSEMIX_OUT")
        .env_remove("BOSEMIX_THREADS")
        .output()
        .unwrap()
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    bosemix(&args)
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn result(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice::<Value>(&o.stdout).unwrap()["result"].clone()
}

#[test]
fn schema_file_is_current() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("config.schema.json");
    let generated = serde_json::to_string_pretty(&bosemix_cli::config::schema()).unwrap() + "\n";
    if std::env::var_os("BOSEMIX_BLESS").is_some() {
        fs::write(&path, &generated).unwrap();
    }
    let committed = fs::read_to_string(&path).unwrap();
    assert!(committed == generated, "config.schema.json is stale; rerun with BOSEMIX_BLESS=1");
}

#[test]
fn shipped_configs_validate() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let cfg: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        let cmd = cfg["command"].as_str().unwrap();
        let o = bosemix(&[cmd, "--config", path.to_str().unwrap(), "--validate-only"]);
        assert!(o.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn validate_only_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run("scatter", &configs().join("scatter_zero.json"), &out, &["--validate-only"]);
    assert!(o.status.success());
    assert!(!out.exists());
}

#[test]
fn unknown_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in [
        json!({"command": "scatter", "model": {"potential": {"kind": "zero"}}, "extra": 1}),
        json!({"command": "scatter", "model": {"potential": {"kind": "zero", "height": 2}}}),
        json!({"command": "scatter", "model": {"potential": {"kind": "zero"}}, "numerics": {"sede": 1}}),
    ] {
        let p = write_config(dir.path(), &cfg);
        let o = run("scatter", &p, &dir.path().join("out"), &[]);
        assert_eq!(o.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
    }
}

#[test]
fn missing_potential_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(
        dir.path(),
        &json!({"command": "scatter", "model": {"potential": {"kind": "csv", "path": "nowhere.csv"}}}),
    );
    let o = run("scatter", &p, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
}

#[test]
fn command_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("minimize", &configs().join("scatter_zero.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn iteration_cap_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(configs().join("minimize_harmonic_1d.json")).unwrap()).unwrap();
    cfg["numerics"]["minimize"] = json!({"max_iterations": 2});
    let p = write_config(dir.path(), &cfg);
    let o = run("minimize", &p, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zero_potential_has_zero_length() {
    let dir = tempfile::tempdir().unwrap();
    let r = result(&run("scatter", &configs().join("scatter_zero.json"), dir.path(), &[]));
    assert_eq!(r["a"], json!(0.0));
}

#[test]
fn csv_potential_is_loaded_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("v.csv"), "r,V\n0,0\n0.5,0\n1,0\n").unwrap();
    let p = write_config(
        dir.path(),
        &json!({"command": "scatter", "model": {"potential": {"kind": "csv", "path": "v.csv"}}}),
    );
    let r = result(&run("scatter", &p, &dir.path().join("out"), &[]));
    assert_eq!(r["a"], json!(0.0));
}

#[test]
fn hard_sphere_length_is_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let r = result(&run("scatter", &configs().join("scatter_barrier.json"), dir.path(), &[]));
    let a = r["a"].as_f64().unwrap();
    assert!((a - 1.0).abs() < 2e-3, "{a}");
}

#[test]
fn exactdiag_two_particles_matches_dense_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let toy = json!({"kind": "random", "modes": [3, 2], "n1": 1, "n2": 1, "strength": 0.8, "seed": 5});
    let p = write_config(dir.path(), &json!({"command": "exactdiag", "model": {"toy": toy}}));
    let r = result(&run("exactdiag", &p, &dir.path().join("out"), &[]));
    // One particle per species: H = T¹ ⊗ 1 + 1 ⊗ T² + V¹²/2 on C³ ⊗ C².
    let m = random_toy_model([3, 2], 1, 1, 0.8, 5).unwrap();
    let h = DMatrix::from_fn(6, 6, |row, col| {
        let (a, b) = (row / 2, row % 2);
        let (c, d) = (col / 2, col % 2);
        let mut x = m.v12.get(a, b, c, d) / 2.0;
        if b == d {
            x += m.t1[(a, c)];
        }
        if a == c {
            x += m.t2[(b, d)];
        }
        x
    });
    let oracle = h.symmetric_eigenvalues().min();
    let e = r["ground_energy"].as_f64().unwrap();
    assert!((e - oracle).abs() < 1e-10, "{e} vs {oracle}");
}

#[test]
fn convergence_without_interactions_has_zero_second_order_error() {
    let dir = tempfile::tempdir().unwrap();
    let zero = |d: [usize; 4]| json!({"dims": d, "data": vec![0.0; d.iter().product()]});
    let toy = json!({
        "kind": "explicit",
        "t1": [[0.0, 0.2], [0.2, 1.0]],
        "t2": [[0.5, 0.0], [0.0, 1.5]],
        "v1": zero([2; 4]), "v2": zero([2; 4]), "v12": zero([2; 4]),
        "n1": 1, "n2": 1
    });
    let p = write_config(dir.path(), &json!({"command": "convergence", "model": {"toy": toy}, "numerics": {"sizes": [2, 4, 6]}}));
    let r = result(&run("convergence", &p, &dir.path().join("out"), &[]));
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert!(row["second_order_error"].as_f64().unwrap().abs() < 1e-10, "{row}");
    }
}

#[test]
fn check_passes_on_a_miscible_model() {
    let dir = tempfile::tempdir().unwrap();
    let r = result(&run("check", &configs().join("check_miscible.json"), dir.path(), &[]));
    assert_eq!(r["all_pass"], json!(true), "{r}");
    let names: Vec<&str> = r["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for want in ["miscibility", "fourier_positivity", "convexity", "relations", "split_residual"] {
        assert!(names.contains(&want), "{want} missing");
    }
}

#[test]
fn mode_truncation_flag() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(configs().join("bogoliubov_1d.json")).unwrap()).unwrap();
    cfg["numerics"]["mode_tolerance"] = json!(0.0);
    let p = write_config(dir.path(), &cfg);
    let o = run("bogoliubov", &p, &dir.path().join("out"), &[]);
    let r = result(&o);
    assert_eq!(r["mode_convergence"]["converged"], json!(false));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn outputs_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run("exactdiag", &configs().join("exactdiag_toy.json"), &out, &[]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("exactdiag.json")).unwrap()).unwrap();
    let hash = doc["provenance"]["config_sha256"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert_eq!(doc["provenance"]["version"], json!(env!("CARGO_PKG_VERSION")));
    let csv = fs::read_to_string(out.join("levels.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains(&hash));
    let meta = bosemix::io::load(&out.join("state.bin"), bosemix::io::read_metadata).unwrap();
    assert!(meta.contains(&hash));
    let state = bosemix::io::load(&out.join("state.bin"), bosemix::io::read_state).unwrap();
    let m = random_toy_model([3, 3], 4, 4, 0.5, 7).unwrap();
    let (_, psi) = ground_state(&build_hamiltonian(&m).unwrap()).unwrap();
    assert_eq!(state.coefficients(), psi.coefficients());
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("exactdiag", &configs().join("exactdiag_toy.json"), dir.path(), &["--seed", "99", "--validate-only"]);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["provenance"]["seed"], json!(99));
}

#[test]
fn environment_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-env");
    let cfg = configs().join("scatter_zero.json");
    let o = Command::new(env!("CARGO_BIN_EXE_bosemix"))
        .args(["scatter", "--config", cfg.to_str().unwrap()])
        .env("BOSEMIX_OUT", &out)
        .env("BOSEMIX_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("scatter.json").is_file());
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, cfg) in [("definetti", "definetti_condensate.json"), ("exactdiag", "exactdiag_toy.json")] {
        let a = dir.path().join(format!("{cmd}-a"));
        let b = dir.path().join(format!("{cmd}-b"));
        assert!(run(cmd, &configs().join(cfg), &a, &["--threads", "1"]).status.success());
        assert!(run(cmd, &configs().join(cfg), &b, &[]).status.success());
        assert_eq!(tree(&a), tree(&b), "{cmd}");
    }
}
