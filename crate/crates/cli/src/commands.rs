use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use selfgrasp::detector::FeedbackMode;
use selfgrasp::evaluator::{feature_rows, probe_set, spearman, write_feature_csv, Scorer};
use selfgrasp::orchestrator::{RunConfig, Trainer, STATE_FILE};
use selfgrasp::simenv::write_png;
use selfgrasp::Error;

use crate::artifacts::{eval_csv, eval_text, feature_svg, Columns};
use crate::config::{self, CONFIG_ECHO};
use crate::{Cli, Command, ConditionArg, Overrides};

pub const PRETRAIN_DIR: &str = "pretrain";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const REPORT_FILE: &str = "report.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

/// CLI failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    Core(Error),
    /// Replay diverged from the recorded report.
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e {
                Error::Config(_) | Error::Shape { .. } | Error::Placement(_) => 2,
                Error::State(_) | Error::Checkpoint(_) | Error::Contract(_) => 3,
                Error::Numerical(_) => 4,
                Error::Pretraining(_) => 5,
                Error::Io(_) | Error::Json(_) => 1,
            },
            CliError::Mismatch(_) => 6,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Mismatch(m) => write!(f, "replay mismatch: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Config file (or defaults) with the command-line overrides applied.
fn effective_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(m) = o.mode {
        cfg.mode = m.into();
    }
    if let Some(d) = o.optimum_offset {
        cfg.design = d.into();
    }
    if let Some(k) = o.object_kind {
        cfg.object_kind = k.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn has_overrides(o: &Overrides) -> bool {
    o.config.is_some() || o.seed.is_some() || o.mode.is_some() || o.optimum_offset.is_some() || o.object_kind.is_some()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain { out } => pretrain(&effective_config(&cli.overrides)?, &out),
        Command::Train { out, resume } => train(&cli.overrides, &out, resume),
        Command::Evaluate { run, condition, checkpoint } => {
            let ck = checkpoint.unwrap_or_else(|| run.join(CHECKPOINT_DIR));
            evaluate(&run, &ck, condition)
        }
        Command::ExportFeatures { run, probes, probe_seed } => export_features(&run, probes, probe_seed),
        Command::Replay { run } => replay(&run),
    }
}

fn pretrain(cfg: &RunConfig, out: &Path) -> Result<()> {
    if cfg.mode == FeedbackMode::Baseline {
        return Err(Error::Config("baseline mode has no evaluator to pretrain".into()).into());
    }
    config::echo(cfg, out)?;
    let mut tr = Trainer::new(cfg.clone())?;
    let dir = out.join("presamples");
    std::fs::create_dir_all(&dir)?;
    let mut index = String::from("# selfgrasp-presamples v1\nid,class,x_cm,y_cm,theta_rad,along_error_cm,angle_error_deg,objects\n");
    for (i, p) in tr.presamples.samples.iter().enumerate() {
        let class = if p.optimum { "optimum" } else { "suboptimum" };
        write_png(&p.side, &dir.join(format!("{i:02}_{class}_side.png")))?;
        write_png(&p.top, &dir.join(format!("{i:02}_{class}_top.png")))?;
        index.push_str(&format!(
            "{i},{class},{},{},{},{},{},{}\n",
            p.pose.x,
            p.pose.y,
            p.pose.theta,
            p.errors.along_cm,
            p.errors.angle_rad.to_degrees(),
            p.object_count
        ));
    }
    std::fs::write(dir.join("index.csv"), index)?;
    let sep = tr.pretrain_evaluator()?.expect("proposed mode pretrains");
    tr.save_checkpoint(&out.join(PRETRAIN_DIR))?;
    std::fs::write(out.join("separation.json"), serde_json::to_string_pretty(&sep)?)?;
    println!(
        "pretrained on {} pre-samples: intra {:.4} inter {:.4} ratio {:.2}",
        tr.presamples.len(),
        sep.intra,
        sep.inter,
        sep.ratio
    );
    Ok(())
}

/// Keep the first `lines` lines of a report, dropping anything written
/// after the checkpoint it resumes from.
fn truncate_report(path: &Path, lines: u64) -> Result<()> {
    let mut kept = Vec::new();
    if path.exists() {
        let reader = BufReader::new(File::open(path)?);
        for line in reader.lines().take(lines as usize) {
            kept.push(line?);
        }
    }
    if (kept.len() as u64) < lines {
        return Err(Error::State(format!(
            "{} has {} lines but the checkpoint expects {lines}",
            path.display(),
            kept.len()
        ))
        .into());
    }
    let mut text = kept.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn train(o: &Overrides, out: &Path, resume: bool) -> Result<()> {
    let report = out.join(REPORT_FILE);
    let ck_dir = out.join(CHECKPOINT_DIR);
    let mut tr = if resume {
        if !ck_dir.join(STATE_FILE).exists() {
            return Err(Error::State(format!("no checkpoint in {} to resume from", ck_dir.display())).into());
        }
        let tr = Trainer::resume(&ck_dir)?;
        if has_overrides(o) && effective_config(o)? != tr.config {
            return Err(Error::Config("config differs from the checkpoint being resumed".into()).into());
        }
        truncate_report(&report, tr.report_lines())?;
        tr
    } else {
        let cfg = effective_config(o)?;
        let tr = match cfg.mode {
            FeedbackMode::Proposed => {
                let pre = out.join(PRETRAIN_DIR);
                if !pre.join(STATE_FILE).exists() {
                    return Err(Error::State(format!(
                        "no pretrained evaluator in {}; run `selfgrasp pretrain --out {}` with the same config first",
                        pre.display(),
                        out.display()
                    ))
                    .into());
                }
                let tr = Trainer::resume(&pre)?;
                if tr.config != cfg {
                    return Err(Error::Config(format!(
                        "config differs from the one {} was pretrained with",
                        pre.display()
                    ))
                    .into());
                }
                tr
            }
            FeedbackMode::Baseline => Trainer::new(cfg)?,
        };
        std::fs::create_dir_all(out)?;
        File::create(&report)?;
        tr
    };
    config::echo(&tr.config, out)?;
    let file = OpenOptions::new().append(true).create(true).open(&report)?;
    let mut sink = BufWriter::new(file);
    let summary = tr.run(&mut sink, Some(&ck_dir))?;
    sink.flush()?;
    std::fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{} episodes, {} trials, {} successes, {} detector steps, {} damped negatives",
        summary.episodes,
        summary.counters.trials,
        summary.counters.successes,
        summary.detector.steps,
        summary.detector.damped_negatives
    );
    Ok(())
}

fn evaluate(run: &Path, ck: &Path, condition: ConditionArg) -> Result<()> {
    let mut tr = Trainer::resume(ck)?;
    let table = tr.evaluate()?;
    let cols = match condition {
        ConditionArg::One => Columns { strict: true, any: false },
        ConditionArg::Two => Columns { strict: false, any: true },
        ConditionArg::Both => Columns { strict: true, any: true },
    };
    print!("{}", eval_text(&table, cols));
    std::fs::create_dir_all(run)?;
    std::fs::write(run.join("eval.csv"), eval_csv(&table, cols))?;
    Ok(())
}

fn export_features(run: &Path, n: usize, seed: u64) -> Result<()> {
    let mut tr = Trainer::resume(&run.join(CHECKPOINT_DIR))
        .or_else(|_| Trainer::resume(&run.join(PRETRAIN_DIR)))?;
    let cfg = tr.config.clone();
    let probes = probe_set(n, cfg.object_kind, cfg.design, 0.0, &cfg.sim, seed)?;
    let Some(embedder) = tr.embedder.as_mut() else {
        return Err(Error::State("the run has no evaluator (baseline mode)".into()).into());
    };
    let scorer = Scorer::calibrate(embedder, &tr.presamples)?;
    let rows = feature_rows(embedder, &scorer, &probes)?;
    let mut csv = Vec::new();
    write_feature_csv(&rows, &mut csv)?;
    std::fs::write(run.join("features.csv"), csv)?;
    std::fs::write(run.join("features.svg"), feature_svg(&rows, scorer.center))?;
    let dist: Vec<f64> = rows.iter().map(|r| scorer.distance(&[r.v1, r.v2])).collect();
    let err: Vec<f64> = rows.iter().map(|r| r.along_error_cm.abs()).collect();
    println!("{} probes, spearman(distance, |along error|) = {:.3}", rows.len(), spearman(&dist, &err));
    Ok(())
}

fn trial_records(lines: impl Iterator<Item = String>) -> Result<Vec<serde_json::Value>> {
    let mut out = Vec::new();
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(&line)?;
        if v["type"] == "trial" {
            out.push(serde_json::json!([v["episode"], v["t"], v["x"], v["y"], v["theta"], v["success"]]));
        }
    }
    Ok(out)
}

fn replay(run: &Path) -> Result<()> {
    let cfg = config::load(&run.join(CONFIG_ECHO))?;
    let recorded = {
        let reader = BufReader::new(File::open(run.join(REPORT_FILE))?);
        trial_records(reader.lines().map_while(std::io::Result::ok))?
    };
    let mut tr = Trainer::new(cfg)?;
    let mut buf = Vec::new();
    tr.run(&mut buf, None)?;
    let replayed = trial_records(String::from_utf8_lossy(&buf).lines().map(str::to_string))?;
    if let Some(i) = (0..recorded.len().min(replayed.len())).find(|&i| recorded[i] != replayed[i]) {
        return Err(CliError::Mismatch(format!("trial {i}: recorded {} replayed {}", recorded[i], replayed[i])));
    }
    if recorded.len() != replayed.len() {
        return Err(CliError::Mismatch(format!(
            "{} trials recorded, {} replayed",
            recorded.len(),
            replayed.len()
        )));
    }
    println!("replayed {} trials; every pose matches", replayed.len());
    Ok(())
}
