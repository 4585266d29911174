use serde::{Deserialize, Serialize};

use super::anchors::{encode, AnchorGrid};
use super::boxes::RotatedBox;
use crate::error::{Error, Result};

/// Raw prediction channels per anchor.
pub const PRED_CHANNELS: usize = 9;
pub const CH_LOC: usize = 0;
pub const CH_CONF_GRASP: usize = 4;
pub const CH_CONF_BG: usize = 5;
pub const CH_THETA: usize = 6;
pub const CH_SCORE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AnchorLabel {
    Positive,
    Negative,
    /// Covers a pose that was tried and failed: always a full-weight negative.
    Failed,
    Ignored,
}

/// Per-anchor labels plus regression targets for positives.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchAssignment {
    pub labels: Vec<AnchorLabel>,
    pub loc_targets: Vec<[f64; 4]>,
    pub theta_targets: Vec<[f64; 2]>,
    /// IoU of every anchor against the ground truth bounds.
    pub ious: Vec<f64>,
}

impl MatchAssignment {
    /// Assignment for an image without a ground truth: every anchor is a
    /// negative candidate.
    pub fn all_negative(n: usize) -> Self {
        Self {
            labels: vec![AnchorLabel::Negative; n],
            loc_targets: vec![[0.0; 4]; n],
            theta_targets: vec![[0.0; 2]; n],
            ious: vec![0.0; n],
        }
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == AnchorLabel::Positive)
            .map(|(i, _)| i)
    }

    pub fn positive_count(&self) -> usize {
        self.positives().count()
    }
}

/// Match one ground-truth grasp box to the anchor grid: IoU of the box's
/// axis-aligned bounds against each default box, positive at
/// `iou >= threshold`, and the best anchor (lowest index on ties) always
/// positive.
pub fn match_ground_truth(grid: &AnchorGrid, gt: &RotatedBox, threshold: f64) -> Result<MatchAssignment> {
    let limit = grid.image_px as f64;
    if !(0.0..=limit).contains(&gt.cx) || !(0.0..=limit).contains(&gt.cy) {
        return Err(Error::Contract(format!(
            "ground truth center ({:.2}, {:.2}) px lies outside the image",
            gt.cx, gt.cy
        )));
    }
    let bounds = gt.bounds();
    let n = grid.len();
    let mut m = MatchAssignment::all_negative(n);
    let mut best = 0;
    for (i, a) in grid.anchors().iter().enumerate() {
        let iou = a.aa_box().iou(&bounds);
        m.ious[i] = iou;
        if iou > m.ious[best] {
            best = i;
        }
        if iou >= threshold {
            m.labels[i] = AnchorLabel::Positive;
        }
    }
    m.labels[best] = AnchorLabel::Positive;
    for i in 0..n {
        if m.labels[i] == AnchorLabel::Positive {
            let (loc, th) = encode(&grid.anchors()[i], gt);
            m.loc_targets[i] = loc;
            m.theta_targets[i] = th;
        }
    }
    Ok(m)
}

/// Assignment for a failed attempt: anchors that would match the tried
/// pose become certain negatives, every other anchor a negative candidate.
pub fn match_failed_attempt(grid: &AnchorGrid, tried: &RotatedBox, threshold: f64) -> Result<MatchAssignment> {
    let mut m = match_ground_truth(grid, tried, threshold)?;
    for l in &mut m.labels {
        if *l == AnchorLabel::Positive {
            *l = AnchorLabel::Failed;
        }
    }
    m.loc_targets.iter_mut().for_each(|t| *t = [0.0; 4]);
    m.theta_targets.iter_mut().for_each(|t| *t = [0.0; 2]);
    Ok(m)
}

/// Negative-feedback weights for negatives already ranked by descending
/// `conf`: `0.5 * (1 - conf_k)^2` for the first `k_potential` ranks, `1`
/// after that.
pub fn alpha_coefficient(ranked_conf: &[f64], k_potential: usize) -> Vec<f64> {
    if k_potential > ranked_conf.len() {
        log::warn!(
            "K = {k_potential} exceeds the {} ranked negatives; damping all of them",
            ranked_conf.len()
        );
    }
    ranked_conf
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if i < k_potential {
                0.5 * (1.0 - c).powi(2)
            } else {
                1.0
            }
        })
        .collect()
}

/// Which probability ranks and weights the damped negatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRank {
    /// Grasp-position class probability (potential grasps rank first).
    #[default]
    ObjectClass,
    /// Background class probability.
    Background,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub loc_weight: f64,
    pub conf_weight: f64,
    pub theta_weight: f64,
    pub score_weight: f64,
    /// Hard-negative pool size relative to the positive count.
    pub neg_pos_ratio: usize,
    /// Pool size floor, used when an image has no positive.
    pub min_negatives: usize,
    pub alpha_rank: AlphaRank,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            loc_weight: 1.0,
            conf_weight: 1.0,
            theta_weight: 1.0,
            score_weight: 1.0,
            neg_pos_ratio: 3,
            min_negatives: 3,
            alpha_rank: AlphaRank::ObjectClass,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegTerm {
    pub anchor: usize,
    pub conf: f64,
    pub alpha: f64,
    /// `alpha * L_neg` after normalization.
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Positive term before the score weight.
    pub l_pos: f64,
    pub neg_terms: Vec<NegTerm>,
    /// `sum(alpha_k * L_neg_k)`.
    pub weighted_neg: f64,
    /// `S * l_pos + weighted_neg`.
    pub total: f64,
    pub score: f64,
    pub k: usize,
    pub positives: usize,
    pub zero_positives: bool,
}

impl LossBreakdown {
    /// Number of negatives whose weight was reduced below one.
    pub fn damped(&self) -> usize {
        self.neg_terms.iter().filter(|t| t.alpha < 1.0).count()
    }
}

fn smooth_l1(d: f64) -> (f64, f64) {
    if d.abs() < 1.0 {
        (0.5 * d * d, d)
    } else {
        (d.abs() - 0.5, d.signum())
    }
}

/// `(log p_grasp, log p_bg, p_grasp, p_bg)` of a two-logit softmax.
fn two_class(g: f64, b: f64) -> (f64, f64, f64, f64) {
    let m = g.max(b);
    let lse = m + ((g - m).exp() + (b - m).exp()).ln();
    let (lg, lb) = (g - lse, b - lse);
    (lg, lb, lg.exp(), lb.exp())
}

/// Score-weighted multibox loss with damped negatives for one image.
///
/// `pred` holds `PRED_CHANNELS` raw values per anchor. Returns the
/// breakdown and the gradient w.r.t. `pred`. Both `score` and the alpha
/// weights are constants of the step. Terms are normalized by the positive
/// count (at least one).
pub fn multibox_loss(
    pred: &[f64],
    assignment: &MatchAssignment,
    score: f64,
    k_potential: usize,
    cfg: &LossConfig,
) -> (LossBreakdown, Vec<f64>) {
    let n = assignment.labels.len();
    debug_assert_eq!(pred.len(), n * PRED_CHANNELS);
    let mut grad = vec![0.0; pred.len()];
    let positives: Vec<usize> = assignment.positives().collect();
    let norm = positives.len().max(1) as f64;

    let mut l_pos = 0.0;
    let pos_scale = score / norm;
    for &a in &positives {
        let p = &pred[a * PRED_CHANNELS..(a + 1) * PRED_CHANNELS];
        let g = &mut grad[a * PRED_CHANNELS..(a + 1) * PRED_CHANNELS];
        for j in 0..4 {
            let (v, d) = smooth_l1(p[CH_LOC + j] - assignment.loc_targets[a][j]);
            l_pos += cfg.loc_weight * v;
            g[CH_LOC + j] = pos_scale * cfg.loc_weight * d;
        }
        let (lg, _, pg, pb) = two_class(p[CH_CONF_GRASP], p[CH_CONF_BG]);
        l_pos += -cfg.conf_weight * lg;
        g[CH_CONF_GRASP] = pos_scale * cfg.conf_weight * (pg - 1.0);
        g[CH_CONF_BG] = pos_scale * cfg.conf_weight * pb;
        for j in 0..2 {
            let (v, d) = smooth_l1(p[CH_THETA + j] - assignment.theta_targets[a][j]);
            l_pos += cfg.theta_weight * v;
            g[CH_THETA + j] = pos_scale * cfg.theta_weight * d;
        }
        let s = crate::diffnum::sigmoid(p[CH_SCORE]);
        l_pos += cfg.score_weight * (s - score).powi(2);
        g[CH_SCORE] = pos_scale * cfg.score_weight * 2.0 * (s - score) * s * (1.0 - s);
    }
    l_pos /= norm;

    // hard-negative pool: the most grasp-like negatives
    let mut negs: Vec<(usize, f64, f64, f64)> = assignment
        .labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == AnchorLabel::Negative)
        .map(|(a, _)| {
            let p = &pred[a * PRED_CHANNELS..];
            let (_, lb, pg, pb) = two_class(p[CH_CONF_GRASP], p[CH_CONF_BG]);
            (a, pg, pb, lb)
        })
        .collect();
    negs.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let pool = (cfg.neg_pos_ratio * positives.len()).max(cfg.min_negatives).min(negs.len());
    negs.truncate(pool);
    if cfg.alpha_rank == AlphaRank::Background {
        negs.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)));
    }
    let ranked_conf: Vec<f64> = negs
        .iter()
        .map(|&(_, pg, pb, _)| match cfg.alpha_rank {
            AlphaRank::ObjectClass => pg,
            AlphaRank::Background => pb,
        })
        .collect();
    let alphas = alpha_coefficient(&ranked_conf, k_potential);

    // failed-attempt anchors join undamped, outside the pool and the ranking
    let mut terms: Vec<((usize, f64, f64, f64), f64, f64)> = assignment
        .labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == AnchorLabel::Failed)
        .map(|(a, _)| {
            let p = &pred[a * PRED_CHANNELS..];
            let (_, lb, pg, pb) = two_class(p[CH_CONF_GRASP], p[CH_CONF_BG]);
            let conf = match cfg.alpha_rank {
                AlphaRank::ObjectClass => pg,
                AlphaRank::Background => pb,
            };
            ((a, pg, pb, lb), conf, 1.0)
        })
        .collect();
    terms.extend(negs.iter().zip(ranked_conf.iter().zip(&alphas)).map(|(&n, (&c, &a))| (n, c, a)));

    let mut neg_terms = Vec::with_capacity(terms.len());
    let mut weighted_neg = 0.0;
    for &((a, pg, pb, lb), conf, alpha) in &terms {
        let contribution = alpha * cfg.conf_weight * -lb / norm;
        weighted_neg += contribution;
        let scale = alpha * cfg.conf_weight / norm;
        grad[a * PRED_CHANNELS + CH_CONF_GRASP] += scale * pg;
        grad[a * PRED_CHANNELS + CH_CONF_BG] += scale * (pb - 1.0);
        neg_terms.push(NegTerm {
            anchor: a,
            conf,
            alpha,
            contribution,
        });
    }

    let breakdown = LossBreakdown {
        l_pos,
        neg_terms,
        weighted_neg,
        total: score * l_pos + weighted_neg,
        score,
        k: k_potential,
        positives: positives.len(),
        zero_positives: positives.is_empty(),
    };
    (breakdown, grad)
}
