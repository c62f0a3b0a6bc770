mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jay-repair"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "error").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A config with a tiny model and short training, rooted in `dir`.
fn write_config(dir: &Path, extra: serde_json::Value) -> PathBuf {
    let mut cfg = serde_json::json!({
        "corpus_dir": common::corpus_dir(),
        "run_dir": dir.join("run"),
        "seed": 3,
        "model": { "d_model": 16, "d_ff": 32, "n_heads": 2, "n_layers": 1, "dropout": 0.0 },
        "train": { "learning_rate": 0.003, "max_epochs": 2, "patience": 1 },
        "backtranslation": {
            "iterations": 1, "k_correct": 2, "buggy_seed_cap": 3, "location_cap": 20, "holdout_fraction": 0.1,
            "finetune": { "learning_rate": 0.001, "max_epochs": 1, "patience": 1 }
        },
        "mechanical": { "per_location_cap": 1 },
        "eval": { "beam": 3 }
    });
    if let (Some(base), Some(extra)) = (cfg.as_object_mut(), extra.as_object()) {
        for (k, v) in extra {
            base.insert(k.clone(), v.clone());
        }
    }
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), serde_json::json!({}));
    let o = run(&["--config", cfg.to_str().unwrap(), "--critic", "strict", "backtranslate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown critic"));
    let o = run(&["--config", cfg.to_str().unwrap(), "--beam", "0", "evaluate", "--model", "x.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), serde_json::json!({}));
    let c = cfg.to_str().unwrap();
    assert_eq!(run(&["--config", c, "init-train"]).status.code(), Some(2), "missing store");
    assert_eq!(run(&["--config", "/nonexistent/config.json", "gen-mechanical"]).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"seed\": \"x\"}").unwrap();
    assert_eq!(run(&["--config", bad.to_str().unwrap(), "gen-mechanical"]).status.code(), Some(2));
}

#[test]
fn empty_rule_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), serde_json::json!({ "mechanical": { "rules": [] } }));
    let o = run(&["--config", cfg.to_str().unwrap(), "gen-mechanical"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), serde_json::json!({}));
    let c = cfg.to_str().unwrap();
    let run_dir = dir.path().join("run");

    let o = run(&["--config", c, "gen-mechanical"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("Fix mechanical") && text.contains("Break mechanical"), "{text}");
    assert!(run_dir.join("mutants/summary.json").exists());
    assert!(std::fs::read_dir(run_dir.join("mutants")).unwrap().count() > 10);
    let o = run(&["--config", c, "gen-mechanical"]);
    assert!(stdout(&o).contains("store added 0 samples"), "rerun must not grow the store");

    let o = run(&["--config", c, "--jobs", "2", "init-train"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let init = run_dir.join("init");
    for f in ["fixer.ckpt", "breaker.ckpt", "curves.json", "config.json"] {
        assert!(init.join(f).exists(), "{f}");
    }

    let bt = dir.path().join("bt");
    let o = run(&["--config", c, "--critic", "compiler", "--out", bt.to_str().unwrap(), "backtranslate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("iteration 1:"));
    for f in ["iter1/fixer.ckpt", "iter1/breaker.ckpt", "iter1/log.json", "config.json", "store.jsonl"] {
        assert!(bt.join(f).exists(), "{f}");
    }
    let echoed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(bt.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["backtranslation"]["critic"], "compiler", "flags override the file");

    let fixer = bt.join("fixer.ckpt");
    let ev = dir.path().join("eval");
    let o = run(&["--config", c, "--out", ev.to_str().unwrap(), "evaluate", "--model", fixer.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("compilability"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["tasks"], 10);
    assert_eq!(report["beam"], 3);
    assert!(ev.join("report.csv").exists());

    let program = common::corpus_dir().join("sum_array_bug.jay");
    let reference = common::corpus_dir().join("fixes/sum_array_bug.jay");
    let rep = dir.path().join("repair");
    let o = run(&[
        "--config", c, "--beam", "1", "--out", rep.to_str().unwrap(), "repair",
        "--program", program.to_str().unwrap(), "--span", "3", "--model", fixer.to_str().unwrap(),
        "--reference", reference.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("rank   1"));
    let patches: Vec<_> = std::fs::read_dir(&rep).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "jay")).collect();
    assert_eq!(patches.len(), 1);
    let o = run(&["--config", c, "repair", "--program", program.to_str().unwrap(), "--span", "40-41", "--model", fixer.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "span outside the file");

    let bugs = dir.path().join("bugs");
    let breaker = bt.join("breaker.ckpt");
    let o = run(&["--config", c, "--critic", "none", "--out", bugs.to_str().unwrap(), "gen-bugs", "--model", breaker.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(bugs.join("summary.json")).unwrap()).unwrap();
    assert_eq!(
        summary["generated"].as_u64().unwrap() + summary["unrepresentable"].as_u64().unwrap(),
        summary["locations"].as_u64().unwrap()
    );

    let o = run(&["--config", c, "evaluate", "--model", dir.path().join("missing.ckpt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
