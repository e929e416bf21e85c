use std::path::Path;
use std::process::{Command, Output};

fn privaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privaudit")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small enough to audit in a couple of seconds.
fn quick_config(dir: &Path) -> String {
    let json = r#"{
      "dataset": {"source": "synthetic", "kind": "classification", "n_classes": 2, "length_profile": "short",
                  "difficulty": 0.8, "size": 96, "vocab_size": 256, "canaries": 0},
      "partition": {"n_train": 64, "alpha": 0.25, "audit_test_per_role": 16},
      "model": {"vocab_size": 256, "d_model": 16, "n_heads": 2, "n_layers": 2, "max_seq_len": 64,
                "task": {"kind": "classification", "n_classes": 2}},
      "finetune": {"epochs": 2, "batch_size": 16, "lr": 0.001},
      "audit": {"epochs": 2, "batch_size": 8},
      "epoch_interval": 1,
      "attacks": ["parsing", "a_loss", "a_black"],
      "seeds": {"data": 0, "partition": 0, "target_init": 0, "finetune": 0, "audit": 0}
    }"#;
    let path = dir.join("quick.json");
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_config_exits_1_and_names_the_path() {
    let o = privaudit(&["audit", "--config", "/no/such/config.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/config.json"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(privaudit(&["audit", "--bogus"]).status.code(), Some(1));
    assert_eq!(privaudit(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(privaudit(&["audit", "--attacks", "nope"]).status.code(), Some(1));
    assert_eq!(privaudit(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("jsonl.json");
    let text = std::fs::read_to_string(quick_config(dir.path()))
        .unwrap()
        .replace(
            r#""source": "synthetic", "kind": "classification", "n_classes": 2, "length_profile": "short",
                  "difficulty": 0.8, "size": 96, "vocab_size": 256, "canaries": 0"#,
            r#""source": "jsonl", "path": "/no/such/pool.jsonl""#,
        );
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = privaudit(&["audit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn audit_then_report_reemits_the_same_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let out = dir.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_privaudit"))
        .args(["audit", "--config", &cfg, "--seed", "3"])
        .env("PRIVAUDIT_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.json", "summary.csv", "risk_summary.json", "timings.json", "roc_epoch2_parsing.csv", "roc_epoch2_parsing.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let summary = std::fs::read(out.join("summary.csv")).unwrap();
    std::fs::remove_file(out.join("summary.csv")).unwrap();
    let o = privaudit(&["report", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(out.join("summary.csv")).unwrap(), summary);
}

#[test]
fn gen_data_and_finetune_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let out = dir.path().join("data");
    let o = privaudit(&["gen-data", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = std::fs::read_to_string(out.join("dataset.jsonl")).unwrap().lines().count();
    assert_eq!(lines, 96);
    assert!(out.join("partition_manifest.json").exists());

    let o = privaudit(&["finetune", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("checkpoint_epoch1.json").exists());
    assert!(out.join("checkpoint_epoch2.json").exists());
    assert!(out.join("finetune_history.json").exists());
}
