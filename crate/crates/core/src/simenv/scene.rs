use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{dir, point_segment_distance, segment_distance, wrap_pi, Point};
use super::SimConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Cylinder,
    /// Capsule with a bulge toward its `+axis` end.
    Elongated,
}

/// Where the designed optimum grasp sits along an object's axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimumDesign {
    #[default]
    Center,
    /// Toward the `-axis` end.
    Left,
    /// Toward the `+axis` end.
    Right,
}

impl OptimumDesign {
    pub fn offset(self, side_offset_cm: f64) -> f64 {
        match self {
            OptimumDesign::Center => 0.0,
            OptimumDesign::Left => -side_offset_cm,
            OptimumDesign::Right => side_offset_cm,
        }
    }
}

impl std::str::FromStr for OptimumDesign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(Self::Center),
            "left" => Ok(Self::Left),
            "right" => Ok(Self::Right),
            other => Err(Error::Config(format!("unknown optimum design {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimObject {
    pub id: u32,
    pub kind: ObjectKind,
    /// Center in workspace cm.
    pub center: Point,
    /// Axis direction angle in `[0, pi)`.
    pub axis_angle: f64,
    pub length: f64,
    pub radius: f64,
    /// Signed cm along the axis from the center to the optimum grasp.
    pub optimum_offset: f64,
}

impl SimObject {
    pub fn axis(&self) -> Point {
        dir(self.axis_angle)
    }

    pub fn normal(&self) -> Point {
        dir(self.axis_angle + PI / 2.0)
    }

    /// Half-length of the straight body between the two caps.
    pub fn half_segment(&self) -> f64 {
        self.length / 2.0 - self.radius
    }

    pub fn segment(&self) -> (Point, Point) {
        let [ux, uy] = self.axis();
        let h = self.half_segment();
        let [cx, cy] = self.center;
        ([cx - h * ux, cy - h * uy], [cx + h * ux, cy + h * uy])
    }

    /// Bulge circle (center offset along the axis, radius) of the elongated
    /// variant.
    pub fn bulge(&self) -> Option<(f64, f64)> {
        match self.kind {
            ObjectKind::Cylinder => None,
            ObjectKind::Elongated => Some((0.3 * self.length, 1.6 * self.radius)),
        }
    }

    /// Radius of the thickest cross-section; used for clearance checks.
    pub fn footprint_radius(&self) -> f64 {
        self.bulge().map_or(self.radius, |(_, r)| r.max(self.radius))
    }

    /// Object-frame coordinates `(along, across)` of a workspace point.
    pub fn local(&self, p: Point) -> (f64, f64) {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let u = self.axis();
        let n = self.normal();
        (d[0] * u[0] + d[1] * u[1], d[0] * n[0] + d[1] * n[1])
    }

    /// Silhouette membership test in object-frame coordinates.
    pub fn contains_local(&self, along: f64, across: f64) -> bool {
        let h = self.half_segment();
        let a = along.clamp(-h, h);
        let body = (along - a).powi(2) + across * across <= self.radius * self.radius;
        body || self
            .bulge()
            .is_some_and(|(c, r)| (along - c).powi(2) + across * across <= r * r)
    }

    pub fn contains(&self, p: Point) -> bool {
        let (a, c) = self.local(p);
        self.contains_local(a, c)
    }

    /// Optimum grasp position and gripper angle.
    pub fn optimum_pose(&self) -> GraspPose {
        let u = self.axis();
        GraspPose {
            x: self.center[0] + self.optimum_offset * u[0],
            y: self.center[1] + self.optimum_offset * u[1],
            theta: wrap_pi(self.axis_angle + PI / 2.0),
        }
    }
}

/// Planar grasp attempt: gripper center in workspace cm and the gripper
/// closing-axis angle in `[0, pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl GraspPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_pi(theta),
        }
    }

    pub fn position(&self) -> Point {
        [self.x, self.y]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub width: f64,
    pub height: f64,
}

impl Workspace {
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= self.width && p[1] <= self.height
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub workspace: Workspace,
    pub objects: Vec<SimObject>,
    pub rng_seed: u64,
}

/// Object count visible to the detector's training step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneInfo {
    pub object_count: usize,
}

impl Scene {
    pub fn empty(workspace: Workspace, rng_seed: u64) -> Self {
        Self {
            workspace,
            objects: Vec::new(),
            rng_seed,
        }
    }

    pub fn info(&self) -> SceneInfo {
        SceneInfo {
            object_count: self.objects.len(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    /// Check containment and pairwise clearance.
    pub fn validate(&self) -> Result<()> {
        for o in &self.objects {
            if o.length <= 2.0 * o.radius {
                return Err(Error::Config(format!("object {} too short for its radius", o.id)));
            }
            if o.optimum_offset.abs() > o.length / 2.0 {
                return Err(Error::Config(format!("object {} optimum offset outside body", o.id)));
            }
            if !fits(&self.workspace, o, 0.0) {
                return Err(Error::Config(format!("object {} leaves the workspace", o.id)));
            }
        }
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                if clearance(a, b) <= 0.0 {
                    return Err(Error::Config(format!("objects {} and {} overlap", a.id, b.id)));
                }
            }
        }
        Ok(())
    }
}

fn fits(ws: &Workspace, o: &SimObject, margin: f64) -> bool {
    let (a, b) = o.segment();
    let r = o.footprint_radius() + margin;
    [a, b]
        .iter()
        .all(|p| p[0] >= r && p[1] >= r && p[0] <= ws.width - r && p[1] <= ws.height - r)
}

/// Axis-segment distance minus the sum of footprint radii.
pub fn clearance(a: &SimObject, b: &SimObject) -> f64 {
    let (a0, a1) = a.segment();
    let (b0, b1) = b.segment();
    segment_distance(a0, a1, b0, b1) - a.footprint_radius() - b.footprint_radius()
}

/// Distance from a point to an object's axis segment.
pub fn axis_distance(o: &SimObject, p: Point) -> f64 {
    let (a, b) = o.segment();
    point_segment_distance(p, a, b)
}

/// Place `n_objects` non-overlapping objects by rejection sampling.
pub fn reset_scene(
    n_objects: usize,
    kind: ObjectKind,
    design: OptimumDesign,
    seed: u64,
    cfg: &SimConfig,
) -> Result<Scene> {
    if n_objects == 0 {
        return Err(Error::Config("a scene needs at least one object".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws = cfg.workspace();
    let mut scene = Scene::empty(ws, seed);
    let mut attempts = 0;
    while scene.objects.len() < n_objects {
        attempts += 1;
        if attempts > cfg.max_placement_attempts {
            return Err(Error::Placement(format!(
                "placed {} of {n_objects} objects within {} attempts",
                scene.objects.len(),
                cfg.max_placement_attempts
            )));
        }
        let o = SimObject {
            id: scene.objects.len() as u32,
            kind,
            center: [rng.gen_range(0.0..ws.width), rng.gen_range(0.0..ws.height)],
            axis_angle: rng.gen_range(0.0..PI),
            length: cfg.object_length_cm,
            radius: cfg.object_radius_cm,
            optimum_offset: design.offset(cfg.side_offset_cm),
        };
        if !fits(&ws, &o, cfg.edge_margin_cm) {
            continue;
        }
        if scene
            .objects
            .iter()
            .all(|p| clearance(p, &o) > cfg.min_clearance_cm)
        {
            scene.objects.push(o);
        }
    }
    Ok(scene)
}
