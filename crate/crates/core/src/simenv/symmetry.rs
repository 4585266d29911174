use std::f64::consts::PI;

use super::scene::{GraspPose, Workspace};
use crate::diffnum::Tensor;

/// One of the eight symmetries of a square: transpose first, then mirror
/// x and/or y.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Dihedral {
    pub transpose: bool,
    pub flip_x: bool,
    pub flip_y: bool,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral {
        transpose: false,
        flip_x: false,
        flip_y: false,
    };

    /// The element numbered `k` in `0..8`.
    pub fn from_index(k: u8) -> Self {
        Self {
            transpose: k & 1 != 0,
            flip_x: k & 2 != 0,
            flip_y: k & 4 != 0,
        }
    }

    /// Map a `[C, N, N]` image.
    pub fn apply_image(&self, img: &Tensor) -> Tensor {
        let shape = img.shape();
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        assert_eq!(h, w, "dihedral maps need a square image");
        let n = h;
        let src = img.data();
        let mut out = vec![0.0; src.len()];
        for ch in 0..c {
            let plane = &src[ch * n * n..(ch + 1) * n * n];
            let dst = &mut out[ch * n * n..(ch + 1) * n * n];
            for i in 0..n {
                for j in 0..n {
                    let (mut r, mut col) = if self.transpose { (j, i) } else { (i, j) };
                    if self.flip_x {
                        col = n - 1 - col;
                    }
                    if self.flip_y {
                        r = n - 1 - r;
                    }
                    dst[r * n + col] = plane[i * n + j];
                }
            }
        }
        Tensor::from_vec(shape, out).expect("same shape")
    }

    /// Map a pose in a square workspace the same way.
    pub fn apply_pose(&self, pose: &GraspPose, ws: &Workspace) -> GraspPose {
        let (mut x, mut y, mut t) = (pose.x, pose.y, pose.theta);
        if self.transpose {
            (x, y, t) = (y, x, PI / 2.0 - t);
        }
        if self.flip_x {
            (x, t) = (ws.width - x, PI - t);
        }
        if self.flip_y {
            (y, t) = (ws.height - y, -t);
        }
        GraspPose::new(x, y, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simenv::{execute_grasp, render_top, reset_scene, ObjectKind, OptimumDesign, Scene, SimConfig};

    fn map_scene(s: &Scene, d: Dihedral) -> Scene {
        let mut out = s.clone();
        for o in &mut out.objects {
            let p = d.apply_pose(&GraspPose::new(o.center[0], o.center[1], o.axis_angle), &s.workspace);
            o.center = [p.x, p.y];
            o.axis_angle = p.theta;
        }
        out
    }

    #[test]
    fn image_map_matches_rendering_the_mapped_scene() {
        let cfg = SimConfig::default();
        let scene = reset_scene(3, ObjectKind::Cylinder, OptimumDesign::Center, 11, &cfg).unwrap();
        let img = render_top(&scene, &cfg);
        for k in 0..8 {
            let d = Dihedral::from_index(k);
            let a = d.apply_image(&img);
            let b = render_top(&map_scene(&scene, d), &cfg);
            let worst = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-9, "k={k}: {worst}");
        }
    }

    #[test]
    fn mapped_optimum_still_grasps() {
        let cfg = SimConfig::default();
        let scene = reset_scene(2, ObjectKind::Cylinder, OptimumDesign::Center, 5, &cfg).unwrap();
        for k in 0..8 {
            let d = Dihedral::from_index(k);
            let mapped = map_scene(&scene, d);
            let pose = d.apply_pose(&scene.objects[0].optimum_pose(), &scene.workspace);
            let (out, _) = execute_grasp(&mapped, &pose, &cfg);
            assert!(out.success, "k={k}");
            let e = out.errors.unwrap();
            assert!(e.positional_cm() < 1e-9 && e.angle_rad.abs() < 1e-9);
        }
    }

    #[test]
    fn identity_is_a_no_op() {
        let img = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(Dihedral::IDENTITY.apply_image(&img), img);
        let t = Dihedral::from_index(1).apply_image(&img);
        assert_eq!(t.data(), &[1.0, 3.0, 2.0, 4.0]);
    }
}
