use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::boxes::{AaBox, RotatedBox};
use crate::simenv::{wrap_pi, GraspPose};

/// Scale of the normalized center / size offsets.
pub const CENTER_VARIANCE: f64 = 0.1;
pub const SIZE_VARIANCE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub cx: f64,
    pub cy: f64,
    pub size: f64,
    /// 0 for the fine grid, 1 for the coarse grid.
    pub level: usize,
}

impl Anchor {
    pub fn aa_box(&self) -> AaBox {
        AaBox {
            cx: self.cx,
            cy: self.cy,
            w: self.size,
            h: self.size,
        }
    }
}

/// Default boxes for the two feature-map grids, fine grid first, each in
/// row-major cell order.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorGrid {
    pub image_px: usize,
    pub grids: Vec<(usize, f64)>,
    anchors: Vec<Anchor>,
}

impl AnchorGrid {
    /// `grids` pairs a cell count per side with the default box size in px.
    pub fn new(image_px: usize, grids: &[(usize, f64)]) -> Self {
        let mut anchors = Vec::new();
        for (level, &(cells, size)) in grids.iter().enumerate() {
            let step = image_px as f64 / cells as f64;
            for r in 0..cells {
                for c in 0..cells {
                    anchors.push(Anchor {
                        cx: (c as f64 + 0.5) * step,
                        cy: (r as f64 + 0.5) * step,
                        size,
                        level,
                    });
                }
            }
        }
        Self {
            image_px,
            grids: grids.to_vec(),
            anchors,
        }
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// First anchor index of each grid level.
    pub fn level_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.grids
            .iter()
            .map(|&(cells, _)| {
                let o = acc;
                acc += cells * cells;
                o
            })
            .collect()
    }
}

/// Ground-truth grasp rectangle in pixels: a square of side `box_px` turned
/// to the gripper angle.
pub fn grasp_box(pose: &GraspPose, px_per_cm: f64, box_px: f64) -> RotatedBox {
    RotatedBox {
        cx: pose.x * px_per_cm,
        cy: pose.y * px_per_cm,
        w: box_px,
        h: box_px,
        angle: pose.theta,
    }
}

/// Regression targets of a grasp relative to an anchor:
/// `[dx, dy, dw, dh]` and the doubled-angle embedding `[sin 2t, cos 2t]`.
pub fn encode(anchor: &Anchor, gt: &RotatedBox) -> ([f64; 4], [f64; 2]) {
    let a = anchor.size;
    (
        [
            (gt.cx - anchor.cx) / (a * CENTER_VARIANCE),
            (gt.cy - anchor.cy) / (a * CENTER_VARIANCE),
            (gt.w / a).ln() / SIZE_VARIANCE,
            (gt.h / a).ln() / SIZE_VARIANCE,
        ],
        [(2.0 * gt.angle).sin(), (2.0 * gt.angle).cos()],
    )
}

/// Inverse of [`encode`]. The angle comes back in `[0, pi)`.
pub fn decode(anchor: &Anchor, loc: &[f64], theta: &[f64]) -> RotatedBox {
    let a = anchor.size;
    let angle = wrap_pi(theta[0].atan2(theta[1]) / 2.0);
    RotatedBox {
        cx: anchor.cx + loc[0] * a * CENTER_VARIANCE,
        cy: anchor.cy + loc[1] * a * CENTER_VARIANCE,
        w: a * (loc[2] * SIZE_VARIANCE).exp(),
        h: a * (loc[3] * SIZE_VARIANCE).exp(),
        angle: if angle >= PI { 0.0 } else { angle },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_layout() {
        let g = AnchorGrid::new(96, &[(12, 10.0), (6, 14.0)]);
        assert_eq!(g.len(), 144 + 36);
        assert_eq!(g.level_offsets(), vec![0, 144]);
        assert_eq!(g.anchors()[0].cx, 4.0);
        assert_eq!(g.anchors()[144].cx, 8.0);
        // every pixel is within sqrt(2) * cell of an anchor center
        for y in 0..96 {
            for x in 0..96 {
                let d = g
                    .anchors()
                    .iter()
                    .map(|a| ((a.cx - x as f64).powi(2) + (a.cy - y as f64).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                assert!(d <= 2f64.sqrt() * 8.0);
            }
        }
    }

    #[test]
    fn angle_wrap_on_decode() {
        let a = Anchor { cx: 10.0, cy: 10.0, size: 10.0, level: 0 };
        // (sin 2t, cos 2t) = (0, -1)  =>  2t = pi  =>  t = pi / 2
        let b = decode(&a, &[0.0; 4], &[0.0, -1.0]);
        assert!((b.angle - PI / 2.0).abs() < 1e-12);
        let b = decode(&a, &[0.0; 4], &[-1e-9, 1.0]);
        assert!(b.angle >= 0.0 && b.angle < PI);
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(x in 0.0..40.0f64, y in 0.0..40.0f64, t in 0.0..PI, ai in 0usize..180) {
            let g = AnchorGrid::new(96, &[(12, 10.0), (6, 14.0)]);
            let anchor = g.anchors()[ai];
            let px = 2.4;
            let pose = GraspPose::new(x, y, t);
            let gt = grasp_box(&pose, px, 9.6);
            let (loc, th) = encode(&anchor, &gt);
            let back = decode(&anchor, &loc, &th);
            prop_assert!((back.cx / px - x).abs() < 1e-9);
            prop_assert!((back.cy / px - y).abs() < 1e-9);
            let dt = crate::simenv::axis_angle_diff(back.angle, pose.theta);
            prop_assert!(dt.abs() < 1e-9);
        }
    }
}
