use std::path::Path;
use std::process::{Command, Output};

fn mgtd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgtd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mgtd(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = mgtd(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("mgtd: error:") || err.starts_with("error:"), "{err}");
    err
}

const CONFIG: &str = "\
learning_rate = 1e-3
max_epochs = 3
embed_dim = 8
hidden_dim = 8
vocab_buckets = 1024
max_tokens = 128
";

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("cfg.txt"), CONFIG).unwrap();
    ok(d, &["synth", "--n", "120", "--seed", "3", "--out", "data"]);
    ok(d, &["augment", "--in", "data/train.jsonl", "--out", "aug.jsonl", "--paraphraser", "noise", "--seed", "3"]);
    let aug = std::fs::read_to_string(d.join("aug.jsonl")).unwrap();
    assert_eq!(aug.lines().count(), 96);
    let first: serde_json::Value = serde_json::from_str(aug.lines().next().unwrap()).unwrap();
    let y = first["y"].as_i64().unwrap();
    assert_eq!(y, if first["anchor_label"] == 1 { 1 } else { -1 });

    ok(d, &["train", "--train", "aug.jsonl", "--val", "data/val.jsonl", "--config", "cfg.txt", "--out", "run", "--seed", "4"]);
    for f in ["model.safetensors", "metrics.jsonl", "steps.jsonl", "config.txt", "run.json"] {
        assert!(d.join("run").join(f).exists(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(d.join("run/metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    let epoch: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    for key in ["epoch", "train_loss", "L_con", "L_cls_pos", "L_cls_neg", "val_accuracy", "val_macro_f1", "val_micro_f1"] {
        assert!(epoch.get(key).is_some(), "metrics line lacks {key}");
    }
    let steps = std::fs::read_to_string(d.join("run/steps.jsonl")).unwrap();
    let step: serde_json::Value = serde_json::from_str(steps.lines().next().unwrap()).unwrap();
    for key in ["step", "L_con", "L_cls_pos", "L_cls_neg", "L_total"] {
        assert!(step.get(key).is_some(), "step line lacks {key}");
    }
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("run/run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 4);

    let eval: serde_json::Value =
        serde_json::from_str(&ok(d, &["evaluate", "--ckpt", "run/model.safetensors", "--in", "data/test.jsonl"])).unwrap();
    assert_eq!(eval["n"], 12);
    assert_eq!(eval["accuracy"], eval["micro_f1"]);

    // Predict works on unlabeled input.
    let unlabeled: String = std::fs::read_to_string(d.join("data/test.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("label");
            format!("{v}\n")
        })
        .collect();
    std::fs::write(d.join("unlabeled.jsonl"), unlabeled).unwrap();
    ok(d, &["predict", "--ckpt", "run/model.safetensors", "--in", "unlabeled.jsonl", "--out", "preds.jsonl"]);
    let preds = std::fs::read_to_string(d.join("preds.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 12);
    for line in preds.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["id"].is_string());
        assert!(v["label"] == 0 || v["label"] == 1);
    }

    let table = ok(
        d,
        &[
            "sweep", "--axis", "dropout_p", "--values", "0,0.6", "--config", "cfg.txt", "--seeds", "0,1", "--out", "sweep",
            "--train", "aug.jsonl", "--val", "data/val.jsonl", "--test", "data/test.jsonl", "--workers", "2",
        ],
    );
    assert_eq!(table.lines().count(), 4);
    assert!(table.lines().next().unwrap().contains("Macro-f1"));
    assert_eq!(std::fs::read_to_string(d.join("sweep/sweep_dropout_p.txt")).unwrap(), table);
    assert!(d.join("sweep/sweep_dropout_p.jsonl").exists());
}

#[test]
fn training_is_reproducible_from_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("cfg.txt"), CONFIG).unwrap();
    ok(d, &["synth", "--n", "60", "--out", "data"]);
    ok(d, &["augment", "--in", "data/train.jsonl", "--out", "aug.jsonl", "--paraphraser", "noise"]);
    for out in ["a", "b"] {
        ok(d, &["train", "--train", "aug.jsonl", "--val", "data/val.jsonl", "--config", "cfg.txt", "--out", out]);
    }
    // Checkpoints differ only in the recorded wall-clock time.
    for out in ["a", "b"] {
        let ckpt = format!("{out}/model.safetensors");
        let preds = format!("{out}/preds.jsonl");
        ok(d, &["predict", "--ckpt", &ckpt, "--in", "data/test.jsonl", "--out", &preds]);
    }
    for f in ["metrics.jsonl", "steps.jsonl", "preds.jsonl"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let (a, _) = mgtd::checkpoint::load(d.join("a/model.safetensors")).unwrap();
    let (b, _) = mgtd::checkpoint::load(d.join("b/model.safetensors")).unwrap();
    assert_eq!(a.params.slices(), b.params.slices());
}

#[test]
fn augment_rerun_reuses_existing_output() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--n", "50", "--out", "data"]);
    let args = ["augment", "--in", "data/train.jsonl", "--out", "aug.jsonl", "--paraphraser", "noise", "--workers", "3"];
    ok(d, &args);
    let first = std::fs::read(d.join("aug.jsonl")).unwrap();
    let out = mgtd(d, &args);
    assert!(String::from_utf8_lossy(&out.stderr).contains("40 reused"));
    assert_eq!(std::fs::read(d.join("aug.jsonl")).unwrap(), first);
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--n", "20", "--out", "data"]);
    fails(d, &["augment", "--in", "missing.jsonl", "--out", "x", "--paraphraser", "identity"]);
    let err = fails(d, &["augment", "--in", "data/train.jsonl", "--out", "x", "--paraphraser", "external"]);
    assert!(err.contains("--endpoint"));
    std::fs::write(d.join("bad.txt"), "learning_rate = 1e-3\nlerning_rate = 2\n").unwrap();
    let err = fails(d, &["train", "--train", "x", "--val", "data/val.jsonl", "--config", "bad.txt", "--out", "r"]);
    assert!(err.contains("lerning_rate"), "{err}");
    let err = fails(d, &["train", "--train", "data/train.jsonl", "--val", "data/val.jsonl", "--out", "r"]);
    assert!(err.contains("augment"), "{err}");
    std::fs::write(d.join("junk.safetensors"), "junk").unwrap();
    fails(d, &["evaluate", "--ckpt", "junk.safetensors", "--in", "data/val.jsonl"]);
    fails(d, &["sweep", "--axis", "width", "--out", "s", "--train", "a", "--val", "b", "--test", "c"]);
}
