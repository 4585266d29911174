use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedder::EmbedderNet;
use super::presample::Scorer;
use crate::diffnum::Tensor;
use crate::error::Result;
use crate::simenv::{render_side_view, reset_scene, ObjectKind, OptimumDesign, SimConfig};

pub const FEATURE_CSV_HEADER: &str = "# selfgrasp-features v1";

/// One embedded side view for feature-space plots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub trial_id: String,
    pub group: String,
    pub v1: f64,
    pub v2: f64,
    pub along_error_cm: f64,
    pub angle_error_deg: f64,
    pub score: f64,
}

pub fn write_feature_csv<W: Write>(rows: &[FeatureRow], mut out: W) -> Result<()> {
    writeln!(out, "{FEATURE_CSV_HEADER}")?;
    writeln!(out, "trial_id,group,v1,v2,true_along_error_cm,true_angle_error_deg,score")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.trial_id, r.group, r.v1, r.v2, r.along_error_cm, r.angle_error_deg, r.score
        )?;
    }
    Ok(())
}

/// Side view of a successful grasp at a known position on the object.
#[derive(Clone, Debug)]
pub struct Probe {
    pub id: String,
    /// `left`, `center` or `right` third of the graspable extent.
    pub group: String,
    pub along_error_cm: f64,
    pub angle_error_deg: f64,
    pub image: Tensor,
}

/// Seeded probes with grasp positions uniform over the graspable extent of
/// the object and angle errors uniform in `+-angle_deg`.
pub fn probe_set(
    n: usize,
    kind: ObjectKind,
    design: OptimumDesign,
    angle_deg: f64,
    sim: &SimConfig,
    seed: u64,
) -> Result<Vec<Probe>> {
    let obj = reset_scene(1, kind, design, seed, sim)?.objects.remove(0);
    let half = obj.half_segment();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes = (0..n)
        .map(|i| {
            let u = rng.gen_range(-half..=half);
            let angle = if angle_deg > 0.0 { rng.gen_range(-angle_deg..=angle_deg) } else { 0.0 };
            let group = if u < -half / 3.0 {
                "left"
            } else if u > half / 3.0 {
                "right"
            } else {
                "center"
            };
            let along = u - obj.optimum_offset;
            Probe {
                id: format!("probe{i}"),
                group: group.into(),
                along_error_cm: along,
                angle_error_deg: angle,
                image: render_side_view(&obj, along, angle.to_radians(), sim),
            }
        })
        .collect();
    Ok(probes)
}

/// Embed and score probes against the current optimum center.
pub fn feature_rows(net: &mut EmbedderNet, scorer: &Scorer, probes: &[Probe]) -> Result<Vec<FeatureRow>> {
    let images: Vec<&Tensor> = probes.iter().map(|p| &p.image).collect();
    let embeddings = net.embed_batch(&images)?;
    Ok(probes
        .iter()
        .zip(embeddings)
        .map(|(p, e)| FeatureRow {
            trial_id: p.id.clone(),
            group: p.group.clone(),
            v1: e[0],
            v2: e[1],
            along_error_cm: p.along_error_cm,
            angle_error_deg: p.angle_error_deg,
            score: scorer.score(&e),
        })
        .collect())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // ties share their mean rank
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = mean;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman inputs differ in length");
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_known_values() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        // monotone but non-linear
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 8.0, 27.0, 64.0]) - 1.0).abs() < 1e-15);
        // ranks (1.5, 1.5, 3, 4) vs (1, 2, 3, 4): 4.5 / sqrt(4.5 * 5)
        assert!((spearman(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]) - 0.9486832980505138).abs() < 1e-12);
    }

    #[test]
    fn probes_are_seeded_and_grouped() {
        let sim = SimConfig::default();
        let a = probe_set(30, ObjectKind::Cylinder, OptimumDesign::Center, 0.0, &sim, 4).unwrap();
        let b = probe_set(30, ObjectKind::Cylinder, OptimumDesign::Center, 0.0, &sim, 4).unwrap();
        assert_eq!(a.len(), 30);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.along_error_cm, q.along_error_cm);
            assert_eq!(p.image.data(), q.image.data());
        }
        for g in ["left", "center", "right"] {
            assert!(a.iter().any(|p| p.group == g), "no {g} probe");
        }
        assert!(a.iter().filter(|p| p.group == "left").all(|p| p.along_error_cm < 0.0));
    }

    #[test]
    fn csv_layout() {
        let rows = [FeatureRow {
            trial_id: "p3".into(),
            group: "center".into(),
            v1: 0.5,
            v2: -0.25,
            along_error_cm: 1.0,
            angle_error_deg: -2.0,
            score: 0.75,
        }];
        let mut buf = Vec::new();
        write_feature_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], FEATURE_CSV_HEADER);
        assert_eq!(lines[2], "p3,center,0.5,-0.25,1,-2,0.75");
    }
}
