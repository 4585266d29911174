use serde::{Deserialize, Serialize};

use super::geometry::axis_angle_diff;
use super::scene::{GraspPose, Scene, SimObject};
use super::SimConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspErrors {
    /// Signed cm along the object axis from the optimum position.
    pub along_cm: f64,
    /// Signed cm across the axis.
    pub perpendicular_cm: f64,
    /// Signed radians from the optimum gripper angle, in `[-pi/2, pi/2)`.
    pub angle_rad: f64,
}

impl GraspErrors {
    pub fn positional_cm(&self) -> f64 {
        self.along_cm.hypot(self.perpendicular_cm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspOutcome {
    pub success: bool,
    pub grasped_object: Option<u32>,
    /// Copy of the grasped object, kept for side-view rendering.
    pub object: Option<SimObject>,
    pub errors: Option<GraspErrors>,
}

impl GraspOutcome {
    pub fn failure() -> Self {
        Self {
            success: false,
            grasped_object: None,
            object: None,
            errors: None,
        }
    }
}

/// Evaluation conditions: `1` is the strict angle/position window, `2` is any
/// successful pick.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    Strict = 1,
    AnySuccess = 2,
}

/// Attempt a grasp. Success requires the gripper center within `p_tol` of
/// some object's axis, its projection on the straight body, and the gripper
/// axis within `a_tol` of the object's normal. On success the object is
/// removed from the returned scene.
pub fn execute_grasp(scene: &Scene, pose: &GraspPose, cfg: &SimConfig) -> (GraspOutcome, Scene) {
    let p = pose.position();
    if !scene.workspace.contains(p) {
        return (GraspOutcome::failure(), scene.clone());
    }
    let a_tol = cfg.angle_tolerance_deg.to_radians();
    let mut best: Option<(f64, usize)> = None;
    for (i, o) in scene.objects.iter().enumerate() {
        let (along, across) = o.local(p);
        let angle = axis_angle_diff(pose.theta, o.optimum_pose().theta);
        if across.abs() <= cfg.position_tolerance_cm
            && along.abs() <= o.half_segment()
            && angle.abs() <= a_tol
            && best.map_or(true, |(d, _)| across.abs() < d)
        {
            best = Some((across.abs(), i));
        }
    }
    let Some((_, i)) = best else {
        return (GraspOutcome::failure(), scene.clone());
    };
    let o = scene.objects[i].clone();
    let (along, across) = o.local(p);
    let errors = GraspErrors {
        along_cm: along - o.optimum_offset,
        perpendicular_cm: across,
        angle_rad: axis_angle_diff(pose.theta, o.optimum_pose().theta),
    };
    let mut next = scene.clone();
    next.objects.remove(i);
    (
        GraspOutcome {
            success: true,
            grasped_object: Some(o.id),
            object: Some(o),
            errors: Some(errors),
        },
        next,
    )
}

pub fn oracle_eval(outcome: &GraspOutcome, condition: Condition, cfg: &SimConfig) -> bool {
    match (condition, outcome.errors) {
        (_, None) => false,
        (Condition::AnySuccess, Some(_)) => outcome.success,
        (Condition::Strict, Some(e)) => {
            outcome.success
                && e.angle_rad.abs() <= cfg.strict_angle_deg.to_radians()
                && e.positional_cm() <= cfg.strict_position_cm
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simenv::{reset_scene, ObjectKind, OptimumDesign};

    #[test]
    fn optimum_pose_succeeds_with_zero_error() {
        let cfg = SimConfig::default();
        let s = reset_scene(3, ObjectKind::Cylinder, OptimumDesign::Right, 5, &cfg).unwrap();
        let pose = s.objects[1].optimum_pose();
        let (out, next) = execute_grasp(&s, &pose, &cfg);
        assert!(out.success);
        assert_eq!(out.grasped_object, Some(1));
        let e = out.errors.unwrap();
        assert!(e.along_cm.abs() < 1e-9 && e.perpendicular_cm.abs() < 1e-9 && e.angle_rad.abs() < 1e-9);
        assert_eq!(next.objects.len(), 2);
        assert!(oracle_eval(&out, Condition::Strict, &cfg));
    }

    #[test]
    fn far_from_every_axis_fails() {
        let cfg = SimConfig::default();
        let s = reset_scene(1, ObjectKind::Cylinder, OptimumDesign::Center, 9, &cfg).unwrap();
        let o = &s.objects[0];
        let opt = o.optimum_pose();
        let n = o.normal();
        let pose = GraspPose::new(opt.x + 5.0 * n[0], opt.y + 5.0 * n[1], opt.theta);
        let (out, next) = execute_grasp(&s, &pose, &cfg);
        assert!(!out.success && out.errors.is_none());
        assert_eq!(next, s);
    }

    #[test]
    fn two_object_success_removes_one() {
        let cfg = SimConfig::default();
        let s = reset_scene(2, ObjectKind::Cylinder, OptimumDesign::Center, 2, &cfg).unwrap();
        let (out, next) = execute_grasp(&s, &s.objects[0].optimum_pose(), &cfg);
        assert!(out.success);
        assert_eq!(next.objects.len(), 1);
        assert_eq!(next.objects[0].id, s.objects[1].id);
    }

    fn success_with(along: f64, perp: f64, angle_deg: f64) -> GraspOutcome {
        GraspOutcome {
            success: true,
            grasped_object: Some(0),
            object: None,
            errors: Some(GraspErrors {
                along_cm: along,
                perpendicular_cm: perp,
                angle_rad: angle_deg.to_radians(),
            }),
        }
    }

    #[test]
    fn oracle_thresholds() {
        let cfg = SimConfig::default();
        let good = success_with(0.4, 0.0, 2.0);
        assert!(oracle_eval(&good, Condition::Strict, &cfg));
        assert!(oracle_eval(&good, Condition::AnySuccess, &cfg));
        let off = success_with(3.0, 0.0, 0.0);
        assert!(!oracle_eval(&off, Condition::Strict, &cfg));
        assert!(oracle_eval(&off, Condition::AnySuccess, &cfg));
        let tilted = success_with(0.0, 0.0, 6.0);
        assert!(!oracle_eval(&tilted, Condition::Strict, &cfg));
        let fail = GraspOutcome::failure();
        assert!(!oracle_eval(&fail, Condition::Strict, &cfg));
        assert!(!oracle_eval(&fail, Condition::AnySuccess, &cfg));
    }

    #[test]
    fn angle_tolerance_applies() {
        let cfg = SimConfig::default();
        let s = reset_scene(1, ObjectKind::Cylinder, OptimumDesign::Center, 1, &cfg).unwrap();
        let opt = s.objects[0].optimum_pose();
        let ok = GraspPose::new(opt.x, opt.y, opt.theta + 19f64.to_radians());
        let bad = GraspPose::new(opt.x, opt.y, opt.theta + 21f64.to_radians());
        assert!(execute_grasp(&s, &ok, &cfg).0.success);
        assert!(!execute_grasp(&s, &bad, &cfg).0.success);
    }
}
