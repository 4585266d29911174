//! Axis-aligned and rotated box geometry in pixel coordinates.

use serde::{Deserialize, Serialize};

/// Axis-aligned box, center/size form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AaBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl AaBox {
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &AaBox) -> f64 {
        let ix = ((self.cx + self.w / 2.0).min(other.cx + other.w / 2.0)
            - (self.cx - self.w / 2.0).max(other.cx - other.w / 2.0))
        .max(0.0);
        let iy = ((self.cy + self.h / 2.0).min(other.cy + other.h / 2.0)
            - (self.cy - self.h / 2.0).max(other.cy - other.h / 2.0))
        .max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Rectangle of size `w x h` rotated by `angle` about its center; `w` runs
/// along the angle direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotatedBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub angle: f64,
}

impl RotatedBox {
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.angle.sin_cos();
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)].map(|(u, v)| {
            [self.cx + u * c - v * s, self.cy + u * s + v * c]
        })
    }

    /// Tight axis-aligned bounding box.
    pub fn bounds(&self) -> AaBox {
        let (s, c) = self.angle.sin_cos();
        AaBox {
            cx: self.cx,
            cy: self.cy,
            w: self.w * c.abs() + self.h * s.abs(),
            h: self.w * s.abs() + self.h * c.abs(),
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &RotatedBox) -> f64 {
        // cheap reject on bounding boxes
        if self.bounds().iou(&other.bounds()) == 0.0 {
            return 0.0;
        }
        let inter = polygon_area(&clip_convex(&self.corners(), &other.corners()));
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Sutherland-Hodgman clip of `subject` by the convex counter-clockwise
/// polygon `clip`.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let p = input[j];
            let q = input[(j + 1) % input.len()];
            let pin = cross(a, b, p) >= 0.0;
            let qin = cross(a, b, q) >= 0.0;
            if pin {
                out.push(p);
            }
            if pin != qin {
                let dp = cross(a, b, p);
                let dq = cross(a, b, q);
                let t = dp / (dp - dq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        s += p[0] * q[1] - q[0] * p[1];
    }
    (s / 2.0).abs()
}

/// Greedy non-maximum suppression. `order` lists candidate indices by
/// priority; a candidate is dropped when it overlaps an already kept one by
/// more than `threshold`. Returns kept indices in priority order.
pub fn nms(boxes: &[RotatedBox], order: &[usize], threshold: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for &i in order {
        if kept.iter().all(|&k| boxes[k].iou(&boxes[i]) <= threshold) {
            kept.push(i);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn identical_boxes_have_unit_iou() {
        let b = RotatedBox { cx: 3.0, cy: 4.0, w: 5.0, h: 2.0, angle: 0.7 };
        assert!((b.iou(&b) - 1.0).abs() < 1e-12);
        let a = AaBox { cx: 0.0, cy: 0.0, w: 2.0, h: 2.0 };
        assert_eq!(a.iou(&a), 1.0);
    }

    #[test]
    fn cross_shaped_overlap() {
        // 4x2 and its 90-degree rotation overlap in a 2x2 square: 4 / (8+8-4)
        let a = RotatedBox { cx: 0.0, cy: 0.0, w: 4.0, h: 2.0, angle: 0.0 };
        let b = RotatedBox { angle: PI / 2.0, ..a };
        assert!((a.iou(&b) - 4.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_boxes_have_zero_iou() {
        let a = RotatedBox { cx: 0.0, cy: 0.0, w: 2.0, h: 2.0, angle: 0.3 };
        let b = RotatedBox { cx: 10.0, ..a };
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn bounds_of_rotated_square() {
        let b = RotatedBox { cx: 0.0, cy: 0.0, w: 2.0, h: 2.0, angle: PI / 4.0 };
        let bb = b.bounds();
        assert!((bb.w - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }
}
