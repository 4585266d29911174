//! The online self-supervised loop: trial selection, grasp execution, dataset
//! growth, interleaved training, rescoring and evaluation.

mod dataset;
mod episode;
mod evaluate;
mod rng;
mod trainer;

pub use dataset::{FailedTrial, FailurePool, PairDataset, SampleOrigin, TrialRecipe, TrialSample};
pub use episode::{random_pose, run_episode, select_trial, EpisodeReport, OracleProposer, Proposer, TrialEvent, TrialSource};
pub use evaluate::{evaluate, EvalConfig, EvalRow, EvalTable};
pub use rng::RngState;
pub use trainer::{RunCounters, RunSummary, Trainer, TrainerState, MODEL_FILE, STATE_FILE};

use serde::{Deserialize, Serialize};

use crate::detector::{DetectorConfig, FeedbackMode};
use crate::error::{Error, Result};
use crate::evaluator::EvaluatorConfig;
use crate::simenv::{ObjectKind, OptimumDesign, SimConfig};

/// Complete configuration of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: FeedbackMode,
    /// Episodes (fresh scenes) per run.
    pub n_env: usize,
    /// Ranked candidates tried before falling back to random poses.
    pub n_trial: usize,
    /// Objects placed per episode.
    pub n_obj: usize,
    pub object_kind: ObjectKind,
    pub design: OptimumDesign,
    /// Attempts after which an episode is aborted.
    pub max_attempts: usize,
    pub detector_steps_per_success: usize,
    pub evaluator_steps_per_success: usize,
    /// Detector steps on the pre-sample entries before the first episode.
    pub detector_warmup_steps: usize,
    /// Random square symmetries and pixel noise on detector images.
    pub detector_augment: bool,
    /// Share of each detector batch drawn from failed trials.
    pub failure_fraction: f64,
    pub failure_pool_size: usize,
    /// Episodes between checkpoints (the final episode always checkpoints).
    pub checkpoint_every: usize,
    /// Log every detector step into the run report.
    pub log_steps: bool,
    pub eval: EvalConfig,
    pub sim: SimConfig,
    pub detector: DetectorConfig,
    pub evaluator: EvaluatorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: FeedbackMode::Proposed,
            n_env: 50,
            n_trial: 5,
            n_obj: 5,
            object_kind: ObjectKind::Cylinder,
            design: OptimumDesign::Center,
            max_attempts: 200,
            detector_steps_per_success: 16,
            evaluator_steps_per_success: 4,
            detector_warmup_steps: 1000,
            detector_augment: true,
            failure_fraction: 0.125,
            failure_pool_size: 400,
            checkpoint_every: 10,
            log_steps: true,
            eval: EvalConfig::default(),
            sim: SimConfig::default(),
            detector: DetectorConfig::default(),
            evaluator: EvaluatorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_env", self.n_env),
            ("n_trial", self.n_trial),
            ("n_obj", self.n_obj),
            ("max_attempts", self.max_attempts),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.failure_fraction) {
            return Err(Error::Config("failure_fraction must lie in [0, 1]".into()));
        }
        self.eval.validate()?;
        self.sim.validate()?;
        self.detector.validate()?;
        self.evaluator.validate()
    }
}
