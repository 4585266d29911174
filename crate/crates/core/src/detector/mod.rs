//! Anchor-grid grasp detector trained with score-weighted positives and
//! damped negatives.

mod anchors;
mod boxes;
mod loss;
mod net;

pub use anchors::{decode, encode, grasp_box, Anchor, AnchorGrid, CENTER_VARIANCE, SIZE_VARIANCE};
pub use boxes::{nms, AaBox, RotatedBox};
pub use loss::{
    alpha_coefficient, match_failed_attempt, match_ground_truth, multibox_loss, AlphaRank, AnchorLabel, LossBreakdown, LossConfig,
    MatchAssignment, NegTerm, CH_CONF_BG, CH_CONF_GRASP, CH_LOC, CH_SCORE, CH_THETA, PRED_CHANNELS,
};
pub(crate) use net::{load_adam, push_adam};
pub use net::{BatchBreakdown, Candidate, DetectorCounters, DetectorNet, DetectorSample, FeedbackMode};

use serde::{Deserialize, Serialize};

use crate::diffnum::AdamConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// `(cells per side, default box size in px)` per feature map, fine first.
    pub grids: Vec<(usize, f64)>,
    /// Side of the square ground-truth grasp box.
    pub grasp_box_cm: f64,
    pub match_iou: f64,
    pub nms_iou: f64,
    /// Grasp-class probability a candidate needs to survive filtering.
    pub conf_min: f64,
    /// Channels of the three trunk convolutions and the coarse block.
    pub channels: [usize; 4],
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub batch_size: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            grids: vec![(12, 10.0), (6, 14.0)],
            grasp_box_cm: 4.0,
            match_iou: 0.5,
            nms_iou: 0.45,
            conf_min: 0.1,
            channels: [8, 16, 24, 24],
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            batch_size: 8,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grids.len() != 2 || self.grids[0].0 != 2 * self.grids[1].0 {
            return Err(Error::Config(
                "detector.grids must list a fine grid and a coarse grid with half as many cells".into(),
            ));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("detector.channels must be positive".into()));
        }
        if !(self.grasp_box_cm > 0.0) {
            return Err(Error::Config("detector.grasp_box_cm must be positive".into()));
        }
        for (name, v) in [("match_iou", self.match_iou), ("nms_iou", self.nms_iou), ("conf_min", self.conf_min)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("detector.{name} must lie in [0, 1]")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("detector.batch_size must be at least 1".into()));
        }
        Ok(())
    }
}
