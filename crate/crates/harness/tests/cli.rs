use std::path::Path;
use std::process::{Command, Output};

fn pairshot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairshot"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ingest_fixtures() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../ingest/fixtures"))
}

#[test]
fn pet_sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pet");
    let o = pairshot(&[
        "sweep",
        "--task",
        "so_duplicate",
        "--method",
        "pet",
        "--backend",
        "toy",
        "--sizes",
        "20,40",
        "--replicates",
        "2",
        "--test-size",
        "200",
        "--unlabeled-size",
        "100",
        "--steps",
        "10",
        "--distill-steps",
        "60",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("so_duplicate/pet/toy"), "{table}");
    assert_eq!(table.lines().skip(2).filter(|l| l.contains('±')).count(), 2, "{table}");
    for f in [
        "result.json",
        "config.toml",
        "timings.json",
        "manifest.json",
        "table_macro_f1.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");

    let result = out.join("result.json");
    let o = pairshot(&["report", "--result", result.to_str().unwrap(), "--metric", "macro_f1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("macro_f1 (mean±std"), "{}", stdout(&o));

    let csv = dir.path().join("t.csv");
    let o = pairshot(&[
        "report",
        "--result",
        result.to_str().unwrap(),
        "--result",
        result.to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 5);
    assert!(dir.path().join("t.csv.run.json").is_file());
}

#[test]
fn train_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairshot(&[
        "train",
        "--method",
        "setfit",
        "--epochs",
        "1",
        "--size",
        "30",
        "--test-size",
        "200",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("size 30 replicate 0: accuracy"));
    for f in ["setfit_model.json", "eval_report.json", "config.toml", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let o = pairshot(&["sweep", "--data", "/no/such/file.jsonl"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = pairshot(&["report", "--result", "whatever.json", "--metric", "bleu"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = pairshot(&["sweep", "--sizes", "0"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = pairshot(&["sweep", "--task", "nope"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = pairshot(&["train", "--method", "magic", "--size", "10", "--out-dir", "x"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"format\": \"other\"}").unwrap();
    let o = pairshot(&["report", "--result", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));
}

#[test]
fn ingest_stackoverflow_and_srs() {
    let dir = tempfile::tempdir().unwrap();
    let fx = ingest_fixtures();
    let so = dir.path().join("so.jsonl");
    let o = pairshot(&[
        "ingest",
        "stackoverflow",
        "--duplicates",
        fx.join("so_duplicates.csv").to_str().unwrap(),
        "--neutral",
        fx.join("so_neutral.csv").to_str().unwrap(),
        "--out",
        so.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&so).unwrap();
    assert!(text.contains("IMAP4: How to correctly decode UTF-8 encoded message body?"));
    assert!(dir.path().join("so.report.json").is_file());

    let srs = dir.path().join("srs.jsonl");
    let o = pairshot(&[
        "ingest",
        "srs",
        "--input",
        fx.join("srs_pairs.jsonl").to_str().unwrap(),
        "--out",
        srs.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(&srs).unwrap().contains("Conflict"));
    assert!(dir.path().join("srs.jsonl.run.json").is_file());

    // The ingested dataset is usable as sweep input.
    let o = pairshot(&[
        "split",
        "--data",
        so.to_str().unwrap(),
        "--train-pool-size",
        "1",
        "--test-size",
        "1",
        "--out-dir",
        dir.path().join("split").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}
