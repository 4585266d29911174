use std::f64::consts::PI;

pub type Point = [f64; 2];

/// Wrap an angle into `[0, pi)`.
pub fn wrap_pi(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Signed difference of two axis angles with period pi, in `[-pi/2, pi/2)`.
pub fn axis_angle_diff(a: f64, b: f64) -> f64 {
    (a - b + PI / 2.0).rem_euclid(PI) - PI / 2.0
}

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    dot(d, d).sqrt()
}

pub fn dir(angle: f64) -> Point {
    [angle.cos(), angle.sin()]
}

/// Distance from `p` to segment `a`-`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Minimum distance between two segments (zero when they cross).
pub fn segment_distance(a0: Point, a1: Point, b0: Point, b1: Point) -> f64 {
    let d1 = orient(a0, a1, b0);
    let d2 = orient(a0, a1, b1);
    let d3 = orient(b0, b1, a0);
    let d4 = orient(b0, b1, a1);
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return 0.0;
    }
    point_segment_distance(a0, b0, b1)
        .min(point_segment_distance(a1, b0, b1))
        .min(point_segment_distance(b0, a0, a1))
        .min(point_segment_distance(b1, a0, a1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_and_diff() {
        assert!((wrap_pi(-0.1) - (PI - 0.1)).abs() < 1e-12);
        assert_eq!(wrap_pi(0.0), 0.0);
        assert!(wrap_pi(PI) < 1e-12);
        assert!((axis_angle_diff(0.05, PI - 0.05) - 0.1).abs() < 1e-12);
        assert!((axis_angle_diff(1.0, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn crossing_segments_touch() {
        assert_eq!(segment_distance([0.0, 0.0], [2.0, 2.0], [0.0, 2.0], [2.0, 0.0]), 0.0);
        assert!((segment_distance([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]) - 1.0).abs() < 1e-12);
    }
}
