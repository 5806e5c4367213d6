//! The command-line binary: exit codes and output files.

use std::path::Path;
use std::process::Command;

use gtnn::io::{CsvTable, CONVERGENCE_SCHEMA, GRAPHON_SEEDS_SCHEMA};

fn gtnn() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gtnn"));
    c.env_remove("GTNN_THREADS").env_remove("GTNN_MOVIELENS");
    c
}

fn code(c: &mut Command) -> i32 {
    let out = c.output().unwrap();
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn graphon_sample_writes_schema_checked_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"graphon_sample": {"sizes": [4, 8], "seeds": 3}}"#);
    let out = dir.path().join("run");
    let st = gtnn().args(["graphon-sample", "--config"]).arg(&cfg).arg("--out").arg(&out).args(["--seed", "5"]).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let conv = CsvTable::read(&out.join("convergence.csv"), CONVERGENCE_SCHEMA).unwrap();
    assert_eq!(conv.column("n").unwrap(), vec!["4", "8"]);
    let seeds = CsvTable::read(&out.join("samples.csv"), GRAPHON_SEEDS_SCHEMA).unwrap();
    assert_eq!(seeds.rows.len(), 6);
    assert!(seeds.column_f64("er_hs").unwrap().iter().all(|&v| v == 0.5));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    // Reading with the wrong schema is rejected.
    assert!(CsvTable::read(&out.join("samples.csv"), CONVERGENCE_SCHEMA).is_err());
}

#[test]
fn same_seed_gives_identical_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"graphon_sample": {"graphon": {"family": "product"}, "sizes": [6], "seeds": 2}}"#);
    for run in ["a", "b"] {
        assert_eq!(code(gtnn().args(["graphon-sample", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join(run))), 0);
    }
    let read = |r: &str| std::fs::read_to_string(dir.path().join(r).join("samples.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let bad_json = write(dir.path(), "bad.json", "{ not json");
    assert_eq!(code(gtnn().args(["graphon-sample", "--config"]).arg(&bad_json).arg("--out").arg(&out)), 2);
    let unknown = write(dir.path(), "unknown.json", r#"{"graphon_sample": {"sizez": [4]}}"#);
    assert_eq!(code(gtnn().args(["graphon-sample", "--config"]).arg(&unknown).arg("--out").arg(&out)), 2);
    let wrong_kind = write(dir.path(), "kind.json", r#"{"kind": "movielens"}"#);
    assert_eq!(code(gtnn().args(["graphon-sample", "--config"]).arg(&wrong_kind).arg("--out").arg(&out)), 2);
    assert_eq!(code(gtnn().args(["graphon-sample", "--out"]).arg(&out).env("GTNN_THREADS", "zero")), 2);
    assert_eq!(code(gtnn().args(["bounds-report", "--out"]).arg(&out)), 2);
}

#[test]
fn data_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let missing = dir.path().join("missing.json");
    assert_eq!(code(gtnn().args(["bounds-report", "--model"]).arg(&missing).arg("--graphs").arg(&missing).arg("--out").arg(&out)), 3);
    let ratings = write(dir.path(), "u.data", "1\t2\t5\t881250949\n1\tx\t3\t1\n");
    let cfg = write(dir.path(), "ml.json", &format!(r#"{{"movielens": {{"data_path": {:?}}}}}"#, ratings));
    assert_eq!(code(gtnn().args(["movielens", "--config"]).arg(&cfg).arg("--out").arg(&out)), 3);
    let csv = write(dir.path(), "t.csv", "a,b\n1,x\n");
    assert_eq!(code(gtnn().arg("plot").arg(&csv).args(["--x", "a", "--y", "b"])), 3);
}

#[test]
fn numeric_failures_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"transfer_sweep": {"n": 12, "l2": 3, "n_train": 4, "n_test": 2, "sizes": [12], "epochs": 3, "init_scale": 1e300}}"#,
    );
    assert_eq!(code(gtnn().args(["transfer-sweep", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("run"))), 4);
}

#[test]
fn plot_renders_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "t.csv", "m,epoch,test_mse\n100,0,1.0\n100,1,0.5\n300,0,0.8\n300,1,0.2\n");
    let svg = dir.path().join("t.svg");
    assert_eq!(code(gtnn().arg("plot").arg(&csv).args(["--x", "epoch", "--y", "test_mse", "--group", "m", "--log-y", "--out"]).arg(&svg)), 0);
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}
