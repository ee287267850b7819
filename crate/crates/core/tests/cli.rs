use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gibbsline::cli_io::{fmt_num, RunStore};
use gibbsline::limits::SweepResult;
use gibbsline::potential::MarkovPotential;
use gibbsline::rpf_finite::pressure;
use gibbsline::shift_model::{build_truncation, ShiftModel};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gibbsline"));
    c.env_remove("GIBBSLINE_OUT");
    c
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// The single run directory under `root`.
fn only_run(root: &Path) -> PathBuf {
    let runs: Vec<PathBuf> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1, "{runs:?}");
    runs.into_iter().next().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const LQ: &str = "[model]\nkind = full\n[potential]\nfamily = log_quadratic\n";

#[test]
fn pressure_single_grid_point_is_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "m.cfg", LQ);
    let out = dir.path().join("out");
    let o = bin()
        .args(["pressure", "--config"])
        .arg(&cfg)
        .args(["--t", "2", "--k", "8", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(only_run(&out).join("pressure.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,t,quantity,value,gap,flag");
    assert_eq!(lines.len(), 2);
    let trunc = build_truncation(&ShiftModel::full(), 8).unwrap();
    let p = pressure(&trunc, &MarkovPotential::log_quadratic(), 2.0).unwrap();
    assert_eq!(lines[1], format!("8,2,pressure,{},,ok", fmt_num(p)));
}

#[test]
fn json_output_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "m.cfg", LQ);
    let out = dir.path().join("out");
    let o = bin()
        .args(["pressure", "--format", "json", "--k", "1..4", "--t", "2,3", "--words", "0,0.1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = only_run(&out);
    assert!(!run.join("pressure.csv").exists());
    let r: SweepResult = serde_json::from_str(&fs::read_to_string(run.join("pressure.json")).unwrap()).unwrap();
    assert_eq!(r.ks, vec![1, 2, 3, 4]);
    assert_eq!(r.words, vec![vec![0], vec![0, 1]]);
    assert!(r.is_monotone());
    assert_eq!(r.estimates.len(), 2);
}

#[test]
fn zerotemp_writes_trajectories_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "tie.cfg",
        "[model]\nkind = full\n[potential]\nfamily = tie_two_loops\n[sweep]\nwords = 0, 1\n",
    );
    let out = dir.path().join("out");
    let o = bin().arg("zerotemp").arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = only_run(&out);
    let traj = fs::read_to_string(run.join("trajectories.csv")).unwrap();
    assert!(traj.lines().any(|l| l.ends_with(",1024,mass[0],0.5,,ok")), "{traj}");
    let z: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("mu_infty.json")).unwrap()).unwrap();
    let comps = z["components"].as_array().unwrap();
    assert_eq!(comps.len(), 1);
    assert!((comps[0]["gamma"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(z["beta"].as_f64(), Some(0.0));
    assert!(!run.join("trajectories.json").exists());
}

#[test]
fn non_summable_table_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "bad.cfg",
        "[model]\nkind = renewal\n[potential]\nfamily = table\nedge = 0 0 0\nedge = 0 1 0\nedge = 1 0 0\ntail = geometric 1 1\n",
    );
    let out = dir.path().join("out");
    let o = bin().arg("certify-summability").arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("series diverges"), "{}", stderr(&o));
    let run = only_run(&out);
    assert!(!run.join("certificate.csv").exists());
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write_cfg(dir.path(), "k.cfg", "[model]\nkind = full\ncolour = red\n");
    let out = dir.path().join("out");
    let cases: Vec<Vec<String>> = vec![
        vec!["pressure".into(), "--config".into(), bad_key.display().to_string()],
        vec!["pressure".into(), "--config".into(), dir.path().join("missing.cfg").display().to_string()],
        vec!["pressure".into(), "--t".into(), "0".into()],
        vec!["pressure".into(), "--t".into(), "two".into()],
        vec!["pressure".into(), "--format".into(), "xml".into()],
        vec!["frobnicate".into()],
    ];
    for args in cases {
        let o = bin().args(&args).arg("--out").arg(&out).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn slow_convergence_exits_3_with_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "m.cfg", LQ);
    let out = dir.path().join("out");
    let o = bin()
        .args(["equilibrium", "--t", "1", "--k", "1..6", "--tol", "1e-9", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let run = only_run(&out);
    let csv = fs::read_to_string(run.join("equilibrium.csv")).unwrap();
    assert!(csv.contains(",not_converged\n"));
    let m = RunStore::new(&out).manifest(run.file_name().unwrap().to_str().unwrap()).unwrap();
    assert_eq!(m.commands[0].exit_code, 3);
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let from_cfg = dir.path().join("cfg_out");
    let cfg = write_cfg(
        dir.path(),
        "m.cfg",
        &format!("{LQ}[sweep]\nks = [2]\nts = [2]\n[output]\ndir = {}\n", from_cfg.display()),
    );
    let env_out = dir.path().join("env_out");
    let flag_out = dir.path().join("flag_out");

    let o = bin().arg("pressure").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    only_run(&from_cfg);

    let o = bin().env("GIBBSLINE_OUT", &env_out).arg("pressure").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    only_run(&env_out);

    let o = bin()
        .env("GIBBSLINE_OUT", &env_out)
        .arg("pressure")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&flag_out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    only_run(&flag_out);
    assert_eq!(fs::read_dir(&env_out).unwrap().count(), 1);
    assert_eq!(fs::read_dir(&from_cfg).unwrap().count(), 1);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "m.cfg",
        "[model]\nkind = renewal\n[potential]\nfamily = renewal_weighted\n[sweep]\nks = [1..5]\nts = [1.5, 3]\nwords = 0, 1.0\n[output]\nformats = csv, json\n",
    );
    let mut runs = Vec::new();
    for cmd in ["pressure", "equilibrium", "zerotemp", "entropy-limit", "diagnose", "certify-summability"] {
        let out = dir.path().join(cmd);
        for _ in 0..2 {
            let o = bin().arg(cmd).arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
            assert!(matches!(o.status.code(), Some(0 | 3)), "{cmd}: {}", stderr(&o));
        }
        let mut ids: Vec<PathBuf> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
        ids.sort();
        assert_eq!(ids.len(), 2);
        let store = RunStore::new(&out);
        let a = store.manifest(ids[0].file_name().unwrap().to_str().unwrap()).unwrap();
        let b = store.manifest(ids[1].file_name().unwrap().to_str().unwrap()).unwrap();
        assert_ne!(a.run_id, b.run_id);
        assert_eq!(a.config_hash, b.config_hash);
        assert_eq!(a.files, b.files, "{cmd}");
        store.verify(&a.run_id).unwrap();
        runs.push(a);
    }
    assert!(runs.iter().all(|m| m.config_hash == runs[0].config_hash));
}

#[test]
fn corrupted_output_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "m.cfg", LQ);
    let out = dir.path().join("out");
    let o = bin().arg("pressure").arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let run = only_run(&out);
    let id = run.file_name().unwrap().to_str().unwrap().to_string();
    let store = RunStore::new(&out);
    store.verify(&id).unwrap();
    let csv = run.join("pressure.csv");
    let mut text = fs::read_to_string(&csv).unwrap();
    text.push_str("9,9,pressure,0,,ok\n");
    fs::write(&csv, text).unwrap();
    assert!(matches!(
        store.get(&id, "pressure.csv"),
        Err(gibbsline::cli_io::StoreError::DigestMismatch { .. })
    ));
}
