use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tutor-erl"))
        .args(args)
        .output()
        .expect("run tutor-erl")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn tiny_config(dir: &Path) -> PathBuf {
    let graph = configs().join("six_concept_graph.toml");
    let text = format!(
        r#"seed = 3
graph = "{}"
horizon = 8
eval_episodes = 2
steps_per_generation = 64
output_dir = "{}"
probes = 4

[filter]
particles = 16

[policy]
hidden = 8
ea_rank = 2
rl_rank = 2

[ppo]
k_update = 32
minibatch = 16
epochs = 1
critic_hidden = 8

[ea]
population = 3
generations = 2
"#,
        graph.display(),
        dir.join("run").display()
    );
    let path = dir.join("tiny.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_shipped_config() {
    let o = bin(&["validate", configs().join("example.toml").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("ok: 6 concepts"));
}

#[test]
fn validate_rejects_missing_graph() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "graph = \"nowhere.toml\"\n").unwrap();
    let o = bin(&["validate", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.toml"));
}

#[test]
fn unknown_ablation_flag_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = bin(&["ablate", cfg.to_str().unwrap(), "disable_everything"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown ablation flag"));
}

#[test]
fn train_eval_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let o = bin(&["train", cfg, "--serial"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("gen ")).count(), 2);
    let run = dir.path().join("run");
    for f in ["metrics.csv", "report.csv", "elites.jsonl", "best_policy.bin", "run_state.bin", "projection.csv"] {
        assert!(run.join(f).exists(), "missing {f}");
    }

    let o = bin(&["eval", run.join("best_policy.bin").to_str().unwrap(), cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(summary["fitness"].is_number());

    std::fs::remove_file(run.join("projection.csv")).unwrap();
    let o = bin(&["export-projection", run.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(run.join("projection.csv").exists());

    let o = bin(&["ablate", cfg, "disable_prm", "--output-dir", dir.path().join("abl").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("abl/metrics.csv").exists());
}
