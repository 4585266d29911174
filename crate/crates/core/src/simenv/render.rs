use rand::Rng;

use super::grasp::GraspOutcome;
use super::scene::{Scene, SimObject};
use super::SimConfig;
use crate::diffnum::Tensor;
use crate::error::{Error, Result};

pub const TOP_BACKGROUND: [f64; 3] = [0.15, 0.15, 0.15];
pub const SIDE_BACKGROUND: [f64; 3] = [0.9, 0.9, 0.9];
pub const GRIPPER_COLOR: [f64; 3] = [0.1, 0.1, 0.1];

pub fn object_color(o: &SimObject) -> [f64; 3] {
    match o.kind {
        super::ObjectKind::Cylinder => [0.85, 0.55, 0.25],
        super::ObjectKind::Elongated => [0.3, 0.65, 0.9],
    }
}

/// Sub-pixel sample offsets in `(0, 1)`, symmetric about 0.5.
fn subsamples(n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect()
}

fn blend(img: &mut [f64], plane: usize, idx: usize, color: [f64; 3], cover: f64) {
    for c in 0..3 {
        let v = &mut img[c * plane + idx];
        *v = *v * (1.0 - cover) + color[c] * cover;
    }
}

/// Orthographic top view `[3, H, W]`. Each pixel blends object color by the
/// fraction of its `supersample x supersample` sample points that fall
/// inside the object silhouette.
pub fn render_top(scene: &Scene, cfg: &SimConfig) -> Tensor {
    let (w, h) = (cfg.top_resolution, cfg.top_resolution);
    let sx = scene.workspace.width / w as f64;
    let sy = scene.workspace.height / h as f64;
    let plane = w * h;
    let mut img = vec![0.0; 3 * plane];
    for c in 0..3 {
        img[c * plane..(c + 1) * plane].fill(TOP_BACKGROUND[c]);
    }
    let subs = subsamples(cfg.supersample);
    let total = (subs.len() * subs.len()) as f64;
    for o in &scene.objects {
        let reach = o.length / 2.0 + o.footprint_radius();
        let j0 = (((o.center[0] - reach) / sx).floor().max(0.0)) as usize;
        let j1 = (((o.center[0] + reach) / sx).ceil() as usize).min(w);
        let i0 = (((o.center[1] - reach) / sy).floor().max(0.0)) as usize;
        let i1 = (((o.center[1] + reach) / sy).ceil() as usize).min(h);
        let color = object_color(o);
        for i in i0..i1 {
            for j in j0..j1 {
                let mut hits = 0usize;
                for &dy in &subs {
                    for &dx in &subs {
                        if o.contains([(j as f64 + dx) * sx, (i as f64 + dy) * sy]) {
                            hits += 1;
                        }
                    }
                }
                if hits > 0 {
                    blend(&mut img, plane, i * w + j, color, hits as f64 / total);
                }
            }
        }
    }
    Tensor::from_vec(&[3, h, w], img).expect("image shape")
}

/// Side view of the held object in the gripper frame.
///
/// The gripper sits at the image center. The object is drawn horizontally
/// with its center displaced by the grasp position along its axis and tilted
/// by the angle error, so the image depends only on the grasp-relative
/// errors (and the object's design), never on the scene pose.
pub fn render_side(outcome: &GraspOutcome, cfg: &SimConfig) -> Result<Tensor> {
    let (Some(obj), Some(err)) = (outcome.object.as_ref(), outcome.errors.as_ref()) else {
        return Err(Error::Contract("render_side needs a successful grasp".into()));
    };
    Ok(render_side_view(obj, err.along_cm, err.angle_rad, cfg))
}

/// Side view for an explicit object and error pair.
pub fn render_side_view(obj: &SimObject, along_cm: f64, angle_rad: f64, cfg: &SimConfig) -> Tensor {
    let n = cfg.side_resolution;
    let ppc = cfg.side_px_per_cm;
    let plane = n * n;
    let mut img = vec![0.0; 3 * plane];
    for c in 0..3 {
        img[c * plane..(c + 1) * plane].fill(SIDE_BACKGROUND[c]);
    }
    let grasp_along = obj.optimum_offset + along_cm;
    let (sin, cos) = angle_rad.sin_cos();
    let half = n as f64 / 2.0;
    let subs = subsamples(cfg.supersample);
    let total = (subs.len() * subs.len()) as f64;
    let color = object_color(obj);
    let finger_half = 0.6;
    let finger_end = -(obj.footprint_radius() + 0.3);
    for i in 0..n {
        for j in 0..n {
            let mut hits = 0usize;
            let mut grip = 0usize;
            for &dy in &subs {
                for &dx in &subs {
                    let x = (j as f64 + dx - half) / ppc;
                    let y = (i as f64 + dy - half) / ppc;
                    if x.abs() <= finger_half && y <= finger_end {
                        grip += 1;
                        continue;
                    }
                    // undo the tilt, then map image x to the object's axis
                    let xr = cos * x + sin * y;
                    let yr = -sin * x + cos * y;
                    if obj.contains_local(grasp_along - xr, yr) {
                        hits += 1;
                    }
                }
            }
            if hits > 0 {
                blend(&mut img, plane, i * n + j, color, hits as f64 / total);
            }
            if grip > 0 {
                blend(&mut img, plane, i * n + j, GRIPPER_COLOR, grip as f64 / total);
            }
        }
    }
    Tensor::from_vec(&[3, n, n], img).expect("image shape")
}

/// Training-time augmentation: integer jitter of up to `jitter_px` pixels
/// (edge-replicated) followed by additive uniform noise, clamped to [0, 1].
pub fn augment<R: Rng>(img: &Tensor, jitter_px: i64, noise: f64, rng: &mut R) -> Tensor {
    let shape = img.shape().to_vec();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (dy, dx) = if jitter_px > 0 {
        (rng.gen_range(-jitter_px..=jitter_px), rng.gen_range(-jitter_px..=jitter_px))
    } else {
        (0, 0)
    };
    let src = img.data();
    let mut out = vec![0.0; src.len()];
    for ch in 0..c {
        for i in 0..h {
            let si = (i as i64 - dy).clamp(0, h as i64 - 1) as usize;
            for j in 0..w {
                let sj = (j as i64 - dx).clamp(0, w as i64 - 1) as usize;
                let mut v = src[ch * h * w + si * w + sj];
                if noise > 0.0 {
                    v += rng.gen_range(-noise..noise);
                }
                out[ch * h * w + i * w + j] = v.clamp(0.0, 1.0);
            }
        }
    }
    Tensor::from_vec(&shape, out).expect("same shape")
}
