use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn bandperm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bandperm"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .env_remove("BANDPERM_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("error is printed as JSON")
}

/// Hash of every file in a directory, in name order.
fn dir_digest(dir: &Path) -> Vec<(String, String)> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let bytes = fs::read(dir.join(&n)).unwrap();
            let h = Sha256::digest(&bytes);
            let hex = h.iter().map(|b| format!("{b:02x}")).collect();
            (n, hex)
        })
        .collect()
}

#[test]
fn exact_uniform_three_points() {
    let dir = tempfile::tempdir().unwrap();
    let o = bandperm(&["exact", "--p", "inf", "-W", "1", "-n", "1", "--lambda-grid", "0,1,2"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let mut rdr = csv::Reader::from_path(dir.path().join("exact_pinf_W1_n1.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["lambda", "tail_probability"]);
    let rows: Vec<(u64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0], (0, 1.0));
    assert!((rows[1].1 - 2.0 / 3.0).abs() < 1e-12);
    // the cycle of 0 spans at most 2 on three points, so diam >= 2 never happens
    assert_eq!(rows[2], (2, 0.0));

    let side = read_json(&dir.path().join("exact_pinf_W1_n1.json"));
    assert_eq!(side["support_size"], 3);
    assert_eq!(side["partition_value"], 3.0);
    assert_eq!(side["manifest"]["format_version"], "bandperm-artifacts/1");
}

#[test]
fn uncross_verify_small_instance_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let o = bandperm(&["uncross-verify", "-n", "3", "-W", "2", "--p-list", "inf,1,2"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cert = read_json(&dir.path().join("uncross_verify_W2_n3.json"));
    assert_eq!(cert["certificate"]["total_violations"], 0);
    let reports = cert["certificate"]["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[0]["p"], "inf");
    assert!(reports[0]["preimage_cardinality"]["checked"].as_u64().unwrap() > 0);
    assert!(reports[1]["crossing_ratio"]["checked"].as_u64().unwrap() > 0);
}

#[test]
fn identical_runs_write_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "sweep", "--p", "inf", "--w-grid", "1,2", "--seeds", "3,4", "--n-per-w", "8", "--steps", "50000",
        "--lambda-grid", "0,1,2,3,4,5,6", "--workers", "3",
    ];
    assert!(bandperm(&args, a.path()).status.success());
    // a different worker count must not change anything
    let mut args_b = args.to_vec();
    *args_b.last_mut().unwrap() = "1";
    assert!(bandperm(&args_b, b.path()).status.success());
    let (da, db) = (dir_digest(a.path()), dir_digest(b.path()));
    assert_eq!(da.len(), 7);
    // manifests record the worker count, everything else must match
    for ((na, ha), (nb, hb)) in da.iter().zip(&db) {
        assert_eq!(na, nb);
        if !na.starts_with("manifest") && !na.starts_with("sweep_pinf.json") {
            assert_eq!(ha, hb, "{na} differs");
        }
    }

    let c = tempfile::tempdir().unwrap();
    assert!(bandperm(&args, c.path()).status.success());
    assert_eq!(dir_digest(a.path()), dir_digest(c.path()));
}

#[test]
fn sample_is_reproducible_and_seed_sensitive() {
    let run = |seed: &str| {
        let d = tempfile::tempdir().unwrap();
        let o = bandperm(&["sample", "--p", "2", "-W", "2", "-n", "6", "--steps", "20000", "--seed", seed], d.path());
        assert!(o.status.success());
        let name = format!("sample_p2_W2_n6_seed{seed}.csv");
        fs::read(d.path().join(name)).unwrap()
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = bandperm(&["sample", "--p", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["key"], "p");
    assert_eq!(e["exit_code"], 2);

    let o = bandperm(&["tail", "--steps", "10", "--burn-in", "10"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["key"], "burn_in");

    let o = bandperm(&["recurrence", "--p", "inf"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["key"], "p");

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"W": 2, "bogus": 1}"#).unwrap();
    let o = bandperm(&["sample", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["key"], "bogus");
}

#[test]
fn oversized_exact_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = bandperm(&["exact", "--p", "1", "-n", "10"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["exit_code"], 3);
}

#[test]
fn manifest_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let o = bandperm(
        &["tail", "--p", "1.5", "-W", "2", "-n", "10", "--steps", "40000", "--seed", "9", "--lambda-grid", "0,2,4,6,8"],
        a.path(),
    );
    assert!(o.status.success());
    let manifest = a.path().join("manifest.json");
    let listed = read_json(&manifest);
    assert_eq!(listed["artifacts"].as_array().unwrap().len(), 2);

    let b = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bandperm"))
        .args(["tail", "--config"])
        .arg(&manifest)
        .arg("--output-dir")
        .arg(b.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(dir_digest(a.path()), dir_digest(b.path()));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_bandperm"))
        .args(["exact", "--p", "inf", "-n", "2"])
        .env("BANDPERM_OUTPUT_DIR", &target)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(target.join("exact_pinf_W1_n2.csv").exists());
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn recurrence_negative_control() {
    let dir = tempfile::tempdir().unwrap();
    let o = bandperm(&["recurrence", "--p", "1", "--w-grid", "1,2,3", "--c0", "10"], dir.path());
    assert!(o.status.success());
    let v = read_json(&dir.path().join("recurrence_p1.json"));
    for row in v["rows"].as_array().unwrap() {
        let c = row["c0_star"].as_f64().unwrap();
        assert!((0.1..10.0).contains(&c), "{row}");
        assert_eq!(row["at_c0"]["propagated"], false);
    }
}
