//! Siamese side-view embedder, contrastive training, pixel-difference pair
//! labels and the grasp score.

mod contrastive;
mod embedder;
mod features;
mod presample;

pub use contrastive::{contrastive_grad, contrastive_loss, label_pair, ContrastiveForm};
pub use embedder::{Embedding, EmbedderNet, PairLoss, PairRef};
pub use features::{feature_rows, probe_set, spearman, write_feature_csv, FeatureRow, Probe, FEATURE_CSV_HEADER};
pub use presample::{
    generate_presamples, presample_label, pretrain, rescore_dataset, separation, PreSample, PreSampleSet, Rescorable, Scorer,
    Separation,
};

use serde::{Deserialize, Serialize};

use crate::diffnum::AdamConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluatorConfig {
    pub margin: f64,
    pub form: ContrastiveForm,
    /// Per-pixel max-channel difference counted as changed.
    pub pixel_threshold: f64,
    /// Fraction of changed pixels above which a pair is dissimilar.
    pub count_fraction: f64,
    pub score_floor: f64,
    pub sigma_floor: f64,
    pub optimum_presamples: usize,
    pub suboptimum_presamples: usize,
    /// Optimum pre-samples scatter uniformly within these half-widths.
    pub optimum_along_jitter_cm: f64,
    pub optimum_angle_jitter_deg: f64,
    /// Sub-optimum pre-samples take an along error or an angle error with a
    /// magnitude in these ranges.
    pub suboptimum_along_cm: (f64, f64),
    pub suboptimum_angle_deg: (f64, f64),
    pub pretrain_steps: usize,
    /// Inter/intra distance ratio pretraining must reach.
    pub min_separation: f64,
    pub batch_size: usize,
    /// Keep pre-sample pairs in the pair pool after pretraining.
    pub presamples_in_pairs: bool,
    pub augment: bool,
    pub adam: AdamConfig,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            form: ContrastiveForm::Literal,
            pixel_threshold: 0.1,
            count_fraction: 0.01,
            score_floor: 0.05,
            sigma_floor: 1e-3,
            optimum_presamples: 15,
            suboptimum_presamples: 15,
            optimum_along_jitter_cm: 1.0,
            optimum_angle_jitter_deg: 5.0,
            suboptimum_along_cm: (2.0, 4.0),
            suboptimum_angle_deg: (10.0, 20.0),
            pretrain_steps: 400,
            min_separation: 2.0,
            batch_size: 8,
            presamples_in_pairs: true,
            augment: true,
            adam: AdamConfig { lr: 3e-4, ..AdamConfig::default() },
        }
    }
}

impl EvaluatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config("evaluator.margin must be positive".into()));
        }
        if !(self.score_floor > 0.0 && self.score_floor <= 1.0) {
            return Err(Error::Config("evaluator.score_floor must lie in (0, 1]".into()));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::Config("evaluator.sigma_floor must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.count_fraction) || !(self.pixel_threshold >= 0.0) {
            return Err(Error::Config("evaluator pixel thresholds out of range".into()));
        }
        let (a0, a1) = self.suboptimum_along_cm;
        let (b0, b1) = self.suboptimum_angle_deg;
        if !(0.0 <= a0 && a0 <= a1 && 0.0 <= b0 && b0 <= b1) {
            return Err(Error::Config("evaluator sub-optimum ranges must be ordered and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("evaluator.batch_size must be at least 1".into()));
        }
        Ok(())
    }
}
