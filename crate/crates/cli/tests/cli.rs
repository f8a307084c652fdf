use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cbnr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbnr")).args(args).env_remove("CBNR_DATA").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cbnr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_dataset(dir: &Path) {
    ok(&["generate", "--out", p(dir), "--num-train", "48", "--num-val", "16", "--num-test", "16", "--seed", "4", "--image-size", "32"]);
}

fn train_tiny(data: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["train", "--data", p(data), "--out", p(out), "--preset", "tiny", "--set", "train.max_epochs=2", "--set", "train.batch_size=16"];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn generate_is_reproducible_and_validates_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    small_dataset(&a);
    small_dataset(&b);
    for f in ["manifest.json", "train/images.bin", "val/questions.jsonl", "test/scenes.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let out = cbnr(&["generate", "--out", p(&dir.path().join("c")), "--num-train", "0"]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());
    // refuses to overwrite without --force
    let out = cbnr(&["generate", "--out", p(&a), "--num-train", "4", "--num-val", "2", "--num-test", "2", "--image-size", "32"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&cbnr(&["analyze", "cluster"])), 2);
    assert_eq!(code(&cbnr(&["frobnicate"])), 2);
    assert_eq!(code(&cbnr(&["train", "--out", "/tmp/x"])), 2);
}

#[test]
fn train_writes_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_dataset(&data);
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    let stdout = train_tiny(&data, &r1, &["--seed", "5"]);
    assert!(stdout.contains("best val accuracy"));
    train_tiny(&data, &r2, &["--seed", "5"]);
    for f in ["best.ckpt", "last.ckpt", "history.csv", "effective_config.json"] {
        assert!(r1.join(f).exists(), "{f}");
    }
    let strip = |p: &Path| -> Vec<String> {
        fs::read_to_string(p).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
    };
    assert_eq!(strip(&r1.join("history.csv")), strip(&r2.join("history.csv")));
    assert_eq!(fs::read(r1.join("last.ckpt")).unwrap(), fs::read(r2.join("last.ckpt")).unwrap());

    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(r1.join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(cfg["seed"], 5);
    assert_eq!(cfg["preset"], "tiny");
    assert_eq!(cfg["train.max_epochs"], 2);
    assert_eq!(cfg["model.image_size"], 32);

    // the effective config reproduces the run
    let r3 = dir.path().join("r3");
    ok(&["train", "--data", p(&data), "--out", p(&r3), "--config", p(&r1.join("effective_config.json"))]);
    assert_eq!(fs::read(r1.join("last.ckpt")).unwrap(), fs::read(r3.join("last.ckpt")).unwrap());
}

#[test]
fn resuming_continues_epochs_and_steps() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_dataset(&data);
    let run = dir.path().join("run");
    train_tiny(&data, &run, &[]);
    let resumed = train_tiny(&data, &run, &["--from-checkpoint", p(&run.join("last.ckpt"))]);
    // 48 samples in batches of 16: 3 steps per epoch, 4 epochs in total
    assert!(resumed.contains("12 optimizer steps"), "{resumed}");
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    let epochs: Vec<&str> = history.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["1", "2", "3", "4"]);

    let out = cbnr(&[
        "train", "--data", p(&data), "--out", p(&dir.path().join("x")), "--preset", "desk",
        "--from-checkpoint", p(&run.join("last.ckpt")),
    ]);
    assert_eq!(code(&out), 5);
}

#[test]
fn config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_dataset(&data);
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"model.nonsense": 3}"#).unwrap();
    let out = cbnr(&["train", "--data", p(&data), "--out", p(&dir.path().join("o")), "--config", p(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.nonsense"));
    let out = cbnr(&["train", "--data", p(&data), "--out", p(&dir.path().join("o")), "--set", "train.batch_size=0"]);
    assert_eq!(code(&out), 2);
    let out = cbnr(&["train", "--data", p(&dir.path().join("missing")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn eval_and_analyses_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_dataset(&data);
    let run = dir.path().join("run");
    train_tiny(&data, &run, &[]);
    let ckpt = run.join("best.ckpt");

    let a = ok(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--split", "test", "--by-length"]);
    let b = ok(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--split", "test", "--by-length"]);
    assert_eq!(a, b);
    let report: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(report["total"], 16);
    assert!(report["by_length"].is_array());

    // data root from the environment
    let out = Command::new(env!("CARGO_BIN_EXE_cbnr"))
        .args(["eval", "--ckpt", p(&ckpt), "--out", p(&dir.path().join("ev"))])
        .env("CBNR_DATA", &data)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("ev/families.csv").exists());
    assert_eq!(code(&cbnr(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--split", "dev"])), 2);

    let an = dir.path().join("an");
    let dumped = ok(&["analyze", "cbn-dump", "--ckpt", p(&ckpt), "--data", p(&data), "--n", "12", "--out", p(&an)]);
    assert!(dumped.starts_with("24 rows"), "{dumped}");
    let csv = fs::read_to_string(an.join("cbn_dump.csv")).unwrap();
    assert_eq!(csv.lines().count(), 25);

    ok(&["analyze", "purity", "--dump", p(&an.join("cbn_dump.csv")), "--k", "3", "--out", p(&an)]);
    let purity: serde_json::Value = serde_json::from_str(&fs::read_to_string(an.join("purity.json")).unwrap()).unwrap();
    assert_eq!(purity["entries"].as_array().unwrap().len(), 4);

    ok(&["analyze", "count-errors", "--ckpt", p(&ckpt), "--data", p(&data), "--out", p(&an)]);
    ok(&["analyze", "length", "--ckpt", p(&ckpt), "--data", p(&data), "--out", p(&an)]);
    ok(&["analyze", "consistency", "--ckpt", p(&ckpt), "--scenes", "20", "--out", p(&an)]);
    for f in ["count_errors.json", "count_errors.csv", "length_error.csv", "length_error.json", "consistency.json"] {
        assert!(an.join(f).exists(), "{f}");
    }
    let cons: serde_json::Value = serde_json::from_str(&fs::read_to_string(an.join("consistency.json")).unwrap()).unwrap();
    assert_eq!(cons["scenes"], 20);

    // a dump without label columns is rejected with an explanation
    let bare = dir.path().join("bare.csv");
    let stripped: String = csv.lines().map(|l| l.splitn(3, ',').nth(2).unwrap().to_string() + "\n").collect();
    fs::write(&bare, stripped).unwrap();
    let out = cbnr(&["analyze", "purity", "--dump", p(&bare), "--out", p(&an)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing column"));
}

#[test]
fn checkpoint_for_another_dataset_is_a_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_dataset(&data);
    let run = dir.path().join("run");
    train_tiny(&data, &run, &[]);
    let other = dir.path().join("other");
    ok(&["generate", "--out", p(&other), "--num-train", "4", "--num-val", "4", "--num-test", "4", "--image-size", "40"]);
    let out = cbnr(&["eval", "--ckpt", p(&run.join("best.ckpt")), "--data", p(&other)]);
    assert_eq!(code(&out), 5);
    fs::write(dir.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
    let out = cbnr(&["eval", "--ckpt", p(&dir.path().join("junk.ckpt")), "--data", p(&data)]);
    assert_eq!(code(&out), 5);
}
