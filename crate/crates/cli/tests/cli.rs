use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
n_env = 2
n_obj = 2
max_attempts = 30
detector_steps_per_success = 2
evaluator_steps_per_success = 1
detector_warmup_steps = 3
checkpoint_every = 1

[detector]
channels = [2, 3, 3, 2]
batch_size = 2

[evaluator]
pretrain_steps = 2
min_separation = 0.0
batch_size = 2
"#;

fn selfgrasp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfgrasp"))
        .args(args)
        .env_remove("SELFGRASP_CONFIG")
        .env_remove("SELFGRASP_SEED")
        .env_remove("SELFGRASP_MODE")
        .output()
        .expect("spawn selfgrasp")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn tiny_config(dir: &Path) -> String {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_config_is_a_config_error() {
    let out = selfgrasp(&["--config", "/nonexistent/run.toml", "pretrain", "--out", "/tmp/never"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "n_envs = 3\n").unwrap();
    let out = selfgrasp(&["--config", s(&p), "train", "--out", s(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn baseline_has_nothing_to_pretrain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = selfgrasp(&["--config", &cfg, "--mode", "baseline", "pretrain", "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn proposed_train_needs_a_pretrained_evaluator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = selfgrasp(&["--config", &cfg, "train", "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("selfgrasp pretrain"));
}

#[test]
fn failed_pretraining_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("strict.toml");
    std::fs::write(&p, TINY.replace("min_separation = 0.0", "min_separation = 1e9")).unwrap();
    let out = selfgrasp(&["--config", s(&p), "pretrain", "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn full_proposed_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    ok(&selfgrasp(&["--config", &cfg, "--optimum-offset", "right", "pretrain", "--out", s(&run)]));
    let pngs = std::fs::read_dir(run.join("presamples"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().to_string_lossy().ends_with("_side.png"))
        .count();
    assert_eq!(pngs, 30);
    let index = std::fs::read_to_string(run.join("presamples/index.csv")).unwrap();
    // right-side design: optimum pre-samples sit on the right of each object
    assert!(index.lines().nth(2).unwrap().contains(",optimum,"));
    assert!(std::fs::read_to_string(run.join("config.toml")).unwrap().contains("design = \"right\""));

    // the offset must match what the evaluator was pretrained with
    let out = selfgrasp(&["--config", &cfg, "train", "--out", s(&run)]);
    assert_eq!(out.status.code(), Some(2));
    ok(&selfgrasp(&["--config", &cfg, "--optimum-offset", "right", "train", "--out", s(&run)]));
    assert!(run.join("checkpoint/model.json").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["episodes"], 2);

    let table = ok(&selfgrasp(&["evaluate", "--run", s(&run), "--condition", "both"]));
    assert!(table.contains("condition1_rate") && table.contains("condition2_rate"));
    let csv = std::fs::read_to_string(run.join("eval.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# selfgrasp-eval v1");
    assert!(lines[7].starts_with("all,100,"));
    for l in &lines[2..] {
        let cells: Vec<f64> = l.split(',').skip(2).map(|c| c.parse().unwrap()).collect();
        assert!(cells[1] >= cells[0], "{l}");
    }

    let one = ok(&selfgrasp(&["evaluate", "--run", s(&run), "--condition", "1"]));
    assert!(!one.contains("condition2_rate"));

    ok(&selfgrasp(&["export-features", "--run", s(&run), "--probes", "30"]));
    let fcsv = std::fs::read_to_string(run.join("features.csv")).unwrap();
    assert_eq!(fcsv.lines().next(), Some("# selfgrasp-features v1"));
    assert_eq!(fcsv.lines().count(), 32);
    for l in fcsv.lines().skip(2) {
        let c: Vec<&str> = l.split(',').collect();
        let (v1, v2): (f64, f64) = (c[2].parse().unwrap(), c[3].parse().unwrap());
        assert!(v1.abs() <= 1.0 && v2.abs() <= 1.0);
    }
    let svg = std::fs::read_to_string(run.join("features.svg")).unwrap();
    for g in ["left", "center", "right"] {
        assert!(svg.contains(&format!("class=\"{g}\"")), "{g}");
    }

    let replay = ok(&selfgrasp(&["replay", "--run", s(&run)]));
    assert!(replay.contains("every pose matches"));
}

#[test]
fn untrained_checkpoint_still_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    ok(&selfgrasp(&["--config", &cfg, "pretrain", "--out", s(&run)]));
    let table = ok(&selfgrasp(&["evaluate", "--run", s(&run), "--checkpoint", s(&run.join("pretrain"))]));
    assert!(table.contains("all"));
}

#[test]
fn corrupt_checkpoint_is_a_state_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    ok(&selfgrasp(&["--config", &cfg, "--mode", "baseline", "train", "--out", s(&run)]));
    std::fs::write(run.join("checkpoint/model.json"), "{\"tensors\": 3").unwrap();
    let out = selfgrasp(&["evaluate", "--run", s(&run)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn baseline_run_reports_no_damping() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    ok(&selfgrasp(&["--config", &cfg, "--mode", "baseline", "train", "--out", s(&run)]));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["detector"]["damped_negatives"], 0);
    assert_eq!(summary["counters"]["grasp_score_calls"], 0);
}

#[test]
fn same_seed_gives_identical_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let mut dirs = Vec::new();
    for name in ["a", "b"] {
        let run = dir.path().join(name);
        ok(&selfgrasp(&["--config", &cfg, "--seed", "7", "pretrain", "--out", s(&run)]));
        ok(&selfgrasp(&["--config", &cfg, "--seed", "7", "train", "--out", s(&run)]));
        dirs.push(run);
    }
    for f in ["config.toml", "report.jsonl", "summary.json", "checkpoint/model.json", "checkpoint/state.json"] {
        let a = std::fs::read(dirs[0].join(f)).unwrap();
        let b = std::fs::read(dirs[1].join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn env_overrides_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    let out = Command::new(env!("CARGO_BIN_EXE_selfgrasp"))
        .args(["pretrain", "--out", s(&run), "--seed", "11"])
        .env("SELFGRASP_CONFIG", &cfg)
        .env("SELFGRASP_SEED", "5")
        .env("SELFGRASP_OPTIMUM_OFFSET", "left")
        .output()
        .unwrap();
    ok(&out);
    let echo = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(echo.contains("seed = 11"));
    assert!(echo.contains("design = \"left\""));
}

#[test]
fn resume_truncates_the_report_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let full = dir.path().join("full");
    ok(&selfgrasp(&["--config", &cfg, "--mode", "baseline", "train", "--out", s(&full)]));

    // a run killed after its first checkpoint: state from episode 1, report
    // with a half-written tail
    let cut = dir.path().join("cut");
    let one = dir.path().join("one.toml");
    std::fs::write(&one, TINY.replace("n_env = 2", "n_env = 1")).unwrap();
    ok(&selfgrasp(&["--config", s(&one), "--mode", "baseline", "train", "--out", s(&cut)]));
    let state_path = cut.join("checkpoint/state.json");
    let mut state: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&state_path).unwrap()).unwrap();
    state["config"]["n_env"] = 2.into();
    std::fs::write(&state_path, state.to_string()).unwrap();
    let mut report = std::fs::read_to_string(cut.join("report.jsonl")).unwrap();
    report.push_str("{\"type\":\"trial\",\"episode\":1,\"t\":");
    std::fs::write(cut.join("report.jsonl"), report).unwrap();

    ok(&selfgrasp(&["train", "--out", s(&cut), "--resume"]));
    assert_eq!(
        std::fs::read_to_string(cut.join("report.jsonl")).unwrap(),
        std::fs::read_to_string(full.join("report.jsonl")).unwrap()
    );
}
