use serde::{Deserialize, Serialize};

use crate::diffnum::Tensor;

/// Dissimilar-pair penalty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveForm {
    /// `0.5 * max(0, margin - D^2)`.
    #[default]
    Literal,
    /// `0.5 * max(0, margin - D)^2`.
    Hinge,
}

/// Contrastive loss of one pair. `y = 0` marks a similar pair.
pub fn contrastive_loss(e1: &[f64], e2: &[f64], y: u8, margin: f64, form: ContrastiveForm) -> f64 {
    contrastive_grad(e1, e2, y, margin, form).0
}

/// Loss and its gradient w.r.t. `e1`; the gradient w.r.t. `e2` is the
/// negation.
pub fn contrastive_grad(e1: &[f64], e2: &[f64], y: u8, margin: f64, form: ContrastiveForm) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = e1.iter().zip(e2).map(|(a, b)| a - b).collect();
    let d2: f64 = diff.iter().map(|d| d * d).sum();
    if y == 0 {
        return (0.5 * d2, diff);
    }
    match form {
        ContrastiveForm::Literal => {
            let gap = margin - d2;
            if gap > 0.0 {
                (0.5 * gap, diff.iter().map(|d| -d).collect())
            } else {
                (0.0, vec![0.0; diff.len()])
            }
        }
        ContrastiveForm::Hinge => {
            let d = d2.sqrt();
            let gap = margin - d;
            if gap > 0.0 && d > 0.0 {
                (0.5 * gap * gap, diff.iter().map(|v| -gap * v / d).collect())
            } else if gap > 0.0 {
                (0.5 * gap * gap, vec![0.0; diff.len()])
            } else {
                (0.0, vec![0.0; diff.len()])
            }
        }
    }
}

/// Pixel-difference pair label: `1` when more than `count_fraction` of the
/// pixels differ by over `pixel_threshold` in some channel.
pub fn label_pair(a: &Tensor, b: &Tensor, pixel_threshold: f64, count_fraction: f64) -> u8 {
    debug_assert_eq!(a.shape(), b.shape());
    let shape = a.shape();
    let c = shape[0];
    let plane: usize = shape[1..].iter().product();
    let (da, db) = (a.data(), b.data());
    let changed = (0..plane)
        .filter(|&p| (0..c).any(|ch| (da[ch * plane + p] - db[ch * plane + p]).abs() > pixel_threshold))
        .count();
    u8::from(changed as f64 > count_fraction * plane as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn literal_values() {
        let z = [0.3, -0.2];
        assert_eq!(contrastive_loss(&z, &z, 0, 1.0, ContrastiveForm::Literal), 0.0);
        assert_eq!(contrastive_loss(&z, &z, 1, 1.0, ContrastiveForm::Literal), 0.5);
        assert_eq!(contrastive_loss(&[1.0, 0.0], &[0.0, 0.0], 1, 1.0, ContrastiveForm::Literal), 0.0);
        assert_eq!(contrastive_loss(&[1.0, 1.0], &[0.0, 0.0], 1, 1.0, ContrastiveForm::Literal), 0.0);
        assert_eq!(contrastive_loss(&[0.5, 0.0], &[0.0, 0.0], 1, 1.0, ContrastiveForm::Literal), 0.375);
    }

    #[test]
    fn hinge_values() {
        assert_eq!(contrastive_loss(&[0.5, 0.0], &[0.0, 0.0], 1, 1.0, ContrastiveForm::Hinge), 0.125);
        assert_eq!(contrastive_loss(&[0.0; 2], &[0.0; 2], 1, 1.0, ContrastiveForm::Hinge), 0.5);
    }

    #[test]
    fn gradient_steps_move_distance_the_right_way() {
        for form in [ContrastiveForm::Literal, ContrastiveForm::Hinge] {
            let (e1, e2) = ([0.2, 0.1], [-0.1, 0.3]);
            let d = |a: &[f64]| ((a[0] - e2[0]).powi(2) + (a[1] - e2[1]).powi(2)).sqrt();
            for (y, closer) in [(0u8, true), (1u8, false)] {
                let (_, g) = contrastive_grad(&e1, &e2, y, 1.0, form);
                let moved = [e1[0] - 0.01 * g[0], e1[1] - 0.01 * g[1]];
                assert_eq!(d(&moved) < d(&e1), closer, "{form:?} y={y}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        for form in [ContrastiveForm::Literal, ContrastiveForm::Hinge] {
            for y in [0u8, 1] {
                let e1 = [0.31, -0.12];
                let e2 = [-0.05, 0.2];
                let (_, g) = contrastive_grad(&e1, &e2, y, 1.0, form);
                for i in 0..2 {
                    let h = 1e-6;
                    let mut p = e1;
                    let mut m = e1;
                    p[i] += h;
                    m[i] -= h;
                    let fd = (contrastive_loss(&p, &e2, y, 1.0, form) - contrastive_loss(&m, &e2, y, 1.0, form))
                        / (2.0 * h);
                    assert!((fd - g[i]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn label_identity_and_background() {
        let bg = Tensor::full(&[3, 10, 10], 0.9);
        assert_eq!(label_pair(&bg, &bg, 0.1, 0.01), 0);
        let mut obj = bg.clone();
        for v in obj.data_mut()[..20].iter_mut() {
            *v = 0.2;
        }
        assert_eq!(label_pair(&obj, &bg, 0.1, 0.01), 1);
        // exactly at the count threshold stays similar
        let mut one = bg.clone();
        one.data_mut()[0] = 0.0;
        assert_eq!(label_pair(&one, &bg, 0.1, 0.01), 0);
    }

    proptest! {
        #[test]
        fn symmetric(a in proptest::collection::vec(-1.0f64..1.0, 2), b in proptest::collection::vec(-1.0f64..1.0, 2), y in 0u8..2) {
            for form in [ContrastiveForm::Literal, ContrastiveForm::Hinge] {
                prop_assert_eq!(contrastive_loss(&a, &b, y, 1.0, form), contrastive_loss(&b, &a, y, 1.0, form));
            }
        }

        #[test]
        fn label_symmetric(a in proptest::collection::vec(0.0f64..1.0, 48), b in proptest::collection::vec(0.0f64..1.0, 48)) {
            let ta = Tensor::from_vec(&[3, 4, 4], a).unwrap();
            let tb = Tensor::from_vec(&[3, 4, 4], b).unwrap();
            prop_assert_eq!(label_pair(&ta, &tb, 0.1, 0.01), label_pair(&tb, &ta, 0.1, 0.01));
        }
    }
}
