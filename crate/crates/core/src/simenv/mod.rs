//! Deterministic 2-D picking cell: object placement, top and side cameras,
//! grasp execution and the evaluation oracle.
//!
//! All geometry lives in centimetres and is rasterized last, so image
//! resolution is only a config knob.

mod geometry;
mod grasp;
mod image_io;
mod render;
mod scene;
mod symmetry;

use serde::{Deserialize, Serialize};

pub use geometry::{axis_angle_diff, wrap_pi, Point};
pub use grasp::{execute_grasp, oracle_eval, Condition, GraspErrors, GraspOutcome};
pub use image_io::{write_pgm, write_png};
pub use symmetry::Dihedral;
pub use render::{augment, object_color, render_side, render_side_view, render_top, SIDE_BACKGROUND, TOP_BACKGROUND};
pub use scene::{
    axis_distance, clearance, reset_scene, GraspPose, ObjectKind, OptimumDesign, Scene, SceneInfo, SimObject, Workspace,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub workspace_width_cm: f64,
    pub workspace_height_cm: f64,
    pub object_length_cm: f64,
    pub object_radius_cm: f64,
    /// Distance of the left/right optimum from the object center.
    pub side_offset_cm: f64,
    pub edge_margin_cm: f64,
    pub min_clearance_cm: f64,
    pub max_placement_attempts: usize,
    /// Top camera resolution (square).
    pub top_resolution: usize,
    pub side_resolution: usize,
    pub side_px_per_cm: f64,
    /// Sample points per pixel edge for anti-aliased rasterization.
    pub supersample: usize,
    /// Largest distance from the axis that still closes on the object.
    pub position_tolerance_cm: f64,
    pub angle_tolerance_deg: f64,
    /// Condition-1 window.
    pub strict_position_cm: f64,
    pub strict_angle_deg: f64,
    pub augment_noise: f64,
    pub augment_jitter_px: i64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            workspace_width_cm: 40.0,
            workspace_height_cm: 40.0,
            object_length_cm: 12.0,
            object_radius_cm: 1.0,
            side_offset_cm: 3.0,
            edge_margin_cm: 1.0,
            min_clearance_cm: 0.5,
            max_placement_attempts: 10_000,
            top_resolution: 96,
            side_resolution: 96,
            side_px_per_cm: 4.0,
            supersample: 4,
            position_tolerance_cm: 0.5,
            angle_tolerance_deg: 20.0,
            strict_position_cm: 1.0,
            strict_angle_deg: 5.0,
            augment_noise: 0.03,
            augment_jitter_px: 1,
        }
    }
}

impl SimConfig {
    pub fn workspace(&self) -> Workspace {
        Workspace {
            width: self.workspace_width_cm,
            height: self.workspace_height_cm,
        }
    }

    pub fn px_per_cm(&self) -> f64 {
        self.top_resolution as f64 / self.workspace_width_cm
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::Config(m.into()));
        if self.workspace_width_cm <= 0.0 || self.workspace_height_cm <= 0.0 {
            return bad("workspace must have positive size");
        }
        if self.object_length_cm <= 2.0 * self.object_radius_cm || self.object_radius_cm <= 0.0 {
            return bad("object length must exceed its diameter");
        }
        if self.side_offset_cm.abs() > self.object_length_cm / 2.0 {
            return bad("side offset must lie on the object");
        }
        if self.top_resolution == 0 || self.side_resolution == 0 || self.supersample == 0 {
            return bad("resolutions must be positive");
        }
        if self.position_tolerance_cm <= 0.0 || self.angle_tolerance_deg <= 0.0 {
            return bad("grasp tolerances must be positive");
        }
        Ok(())
    }
}
