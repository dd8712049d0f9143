//! End-to-end runs of the `coopq` binary: train, eval, align, curves,
//! extract-rules, validate-config.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coopq"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("coopq_cli_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_tiny_config(dir: &Path, rules: Option<&Path>) -> PathBuf {
    let rules_line = match rules {
        Some(p) => format!("rules = \"{}\"\n", p.display()),
        None => String::new(),
    };
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        format!(
            "seed = 5\n\
             total_steps = 400\n\
             hidden_dim = 8\n\
             batch_size = 4\n\
             buffer_capacity = 32\n\
             test_interval = 200\n\
             test_episodes = 2\n\
             {rules_line}\
             [env]\n\
             name = \"skirmish\"\n\
             allies = 2\n\
             enemies = 2\n\
             horizon = 16\n\
             rows = 10\n\
             cols = 10\n"
        ),
    )
    .unwrap();
    path
}

fn write_rules(dir: &Path) -> PathBuf {
    let path = dir.join("skirmish.rules");
    std::fs::write(
        &path,
        "rule \"low_hp_retreat\" priority 10\n\
         when health < 15 or not available(attack)\n\
         prefer north:0.25 south:0.25 east:0.25 west:0.25\n",
    )
    .unwrap();
    path
}

#[test]
fn full_pipeline_train_eval_align_curves_extract() {
    let dir = temp_dir("pipeline");
    let rules = write_rules(&dir);
    let config = write_tiny_config(&dir, Some(&rules));
    let out = dir.join("run_out");

    // validate
    let status = bin()
        .args(["validate-config", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());

    // train
    let output = bin()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(out.join("metrics.jsonl").exists());
    assert!(out.join("checkpoint.txt").exists());
    assert!(out.join("config.toml").exists());

    // eval with a trajectory dump
    let traj = dir.join("traj.jsonl");
    let output = bin()
        .args(["eval", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(out.join("checkpoint.txt"))
        .args(["--episodes", "40", "--dump"])
        .arg(&traj)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("mean return"), "eval prints stats: {stdout}");
    assert!(traj.exists());

    // align: consistency must be a fraction
    let output = bin()
        .args(["align", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(out.join("checkpoint.txt"))
        .args(["--episodes", "10"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    if let Some(line) = stdout.lines().find(|l| l.starts_with("consistency ")) {
        let v: f64 = line.trim_start_matches("consistency ").trim().parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    // curves: row count is n_agents * episode_length
    let curves = dir.join("curves.csv");
    let output = bin()
        .args(["curves", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(out.join("checkpoint.txt"))
        .arg("--csv")
        .arg(&curves)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let text = std::fs::read_to_string(&curves).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).filter(|l| !l.is_empty()).collect();
    let n_agents = 2;
    assert!(rows.len() % n_agents == 0);
    let max_step: usize = rows
        .iter()
        .map(|r| r.split(',').next().unwrap().parse::<usize>().unwrap())
        .max()
        .unwrap();
    assert_eq!(rows.len(), (max_step + 1) * n_agents);

    // extract rules from the dump and parse the result back
    let extracted = dir.join("extracted.rules");
    let output = bin()
        .args(["extract-rules", "--data"])
        .arg(&traj)
        .arg("--out")
        .arg(&extracted)
        .args(["--min-leaf", "10", "--min-support", "20", "--min-purity", "0.3"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("coverage"), "prints coverage: {stdout}");
    assert!(extracted.exists());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = temp_dir("bad");
    // unknown key
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "learning_rate = 0.1\n[env]\nname = \"lbf\"\n").unwrap();
    let output = bin().args(["validate-config", "--config"]).arg(&bad).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("learning_rate"));

    // bad rule file: weight out of range, line-precise message
    let rules = dir.join("bad.rules");
    std::fs::write(
        &rules,
        "rule \"r\" priority 1\nwhen health < 15\nprefer north:1.3\n",
    )
    .unwrap();
    let config = write_tiny_config(&dir, Some(&rules));
    let output = bin().args(["validate-config", "--config"]).arg(&config).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "line-precise: {stderr}");

    // checkpoint/config mismatch
    let good_rules = write_rules(&dir);
    let config = write_tiny_config(&dir, Some(&good_rules));
    let out = dir.join("mismatch_out");
    let status = bin()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--set", "total_steps=60"])
        .status()
        .unwrap();
    assert!(status.success());
    let output = bin()
        .args(["eval", "--config"])
        .arg(&config)
        .args(["--set", "hidden_dim=16"])
        .arg("--checkpoint")
        .arg(out.join("checkpoint.txt"))
        .output()
        .unwrap();
    assert!(!output.status.success(), "checkpoint trained at hidden 8 must not load at 16");
}

#[test]
fn ablation_flag_and_out_root_env_var() {
    let dir = temp_dir("ablate");
    let rules = write_rules(&dir);
    let config = write_tiny_config(&dir, Some(&rules));
    let root = dir.join("root");
    std::fs::create_dir_all(&root).unwrap();
    let output = bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--ablate", "no_intrinsic", "--out", "nested/run1", "--seed", "9"])
        .env("COOPQ_OUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let snap = root.join("nested/run1/config.toml");
    assert!(snap.exists(), "out dir resolves under COOPQ_OUT_ROOT");
    let text = std::fs::read_to_string(&snap).unwrap();
    assert!(text.contains("no_intrinsic = true"));
    assert!(text.contains("seed = 9"));
}

#[test]
fn resolved_snapshot_reruns_bit_identically() {
    let dir = temp_dir("snapshot");
    let config = write_tiny_config(&dir, None);
    let out1 = dir.join("first");
    let status = bin()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out1)
        .status()
        .unwrap();
    assert!(status.success());

    // re-run from the resolved snapshot into a fresh directory
    let out2 = dir.join("second");
    let status = bin()
        .args(["train", "--config"])
        .arg(out1.join("config.toml"))
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap();
    assert!(status.success());
    let a = std::fs::read(out1.join("metrics.jsonl")).unwrap();
    let b = std::fs::read(out2.join("metrics.jsonl")).unwrap();
    assert_eq!(a, b);
}
