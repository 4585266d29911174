use rand::Rng;
use serde::{Deserialize, Serialize};

use super::anchors::{decode, grasp_box, AnchorGrid};
use super::boxes::{nms, RotatedBox};
use super::loss::{
    match_failed_attempt, match_ground_truth, multibox_loss, LossBreakdown, MatchAssignment, CH_CONF_BG, CH_CONF_GRASP, CH_LOC, CH_SCORE,
    CH_THETA, PRED_CHANNELS,
};
use super::DetectorConfig;
use crate::diffnum::{sigmoid, Adam, Checkpoint, LayerSpec, Sequential, Tensor};
use crate::error::{Error, Result};
use crate::simenv::GraspPose;

/// Which feedback weighting the detector trains with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// Positives weighted by the grasp score, top-K negatives damped.
    #[default]
    Proposed,
    /// Every positive weighted 1, no damping.
    Baseline,
}

impl std::str::FromStr for FeedbackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Self::Proposed),
            "baseline" => Ok(Self::Baseline),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// One training image for the detector.
#[derive(Clone, Copy, Debug)]
pub struct DetectorSample<'a> {
    pub image: &'a Tensor,
    /// Ground-truth grasp; `None` for a failed trial.
    pub pose: Option<GraspPose>,
    /// The pose a failed trial tried, if known.
    pub tried: Option<GraspPose>,
    pub score: f64,
    pub object_count: usize,
}

/// A decoded grasp proposal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub pose: GraspPose,
    /// Predicted grasp score in `[0, 1]`.
    pub s: f64,
    /// Grasp-class probability.
    pub conf: f64,
    pub anchor: usize,
}

/// Mean of the per-image breakdowns of one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchBreakdown {
    pub total: f64,
    pub l_pos: f64,
    pub weighted_neg: f64,
    pub score: f64,
    pub k: f64,
    pub damped: usize,
    pub skipped: bool,
    pub samples: Vec<LossBreakdown>,
}

/// Instrumentation of the feedback paths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorCounters {
    pub steps: u64,
    pub skipped_steps: u64,
    /// Images trained with `K > 0`.
    pub damping_calls: u64,
    /// Negatives whose weight was below one.
    pub damped_negatives: u64,
    /// Positive images trained with `S != 1`.
    pub weighted_positives: u64,
}

/// Trunk to a fine feature map, a fine prediction head, a pooled block and a
/// coarse prediction head.
#[derive(Clone, Debug)]
pub struct DetectorNet {
    pub config: DetectorConfig,
    pub px_per_cm: f64,
    grid: AnchorGrid,
    trunk: Sequential,
    head_fine: Sequential,
    block: Sequential,
    head_coarse: Sequential,
    adam: Adam,
    pub counters: DetectorCounters,
}

fn head(in_channels: usize) -> Vec<LayerSpec> {
    vec![LayerSpec::Conv2d {
        in_channels,
        out_channels: PRED_CHANNELS,
        kernel: 3,
        stride: 1,
        padding: 1,
    }]
}

impl DetectorNet {
    pub fn new<R: Rng>(config: DetectorConfig, image_px: usize, px_per_cm: f64, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let [c0, c1, c2, c3] = config.channels;
        let trunk = Sequential::new(
            &[3, image_px, image_px],
            &[
                LayerSpec::AvgPool { size: 2 },
                LayerSpec::conv_padded(3, c0, 2),
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::conv_padded(c0, c1, 2),
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::conv_padded(c1, c2, 2),
                LayerSpec::Relu,
            ],
            rng,
        )?;
        let fine = trunk.out_shape().to_vec();
        if fine[1] != config.grids[0].0 || fine[2] != config.grids[0].0 {
            return Err(Error::Config(format!(
                "a {image_px} px image gives a {}x{} feature map, but the fine grid has {} cells",
                fine[1], fine[2], config.grids[0].0
            )));
        }
        let head_fine = Sequential::new(&fine, &head(c2), rng)?;
        let block = Sequential::new(
            &fine,
            &[LayerSpec::MaxPool { size: 2 }, LayerSpec::conv_padded(c2, c3, 2), LayerSpec::Relu],
            rng,
        )?;
        let coarse = block.out_shape().to_vec();
        let head_coarse = Sequential::new(&coarse, &head(c3), rng)?;
        let grid = AnchorGrid::new(image_px, &config.grids);
        let adam = Adam::new(config.adam);
        Ok(Self {
            config,
            px_per_cm,
            grid,
            trunk,
            head_fine,
            block,
            head_coarse,
            adam,
            counters: DetectorCounters::default(),
        })
    }

    pub fn grid(&self) -> &AnchorGrid {
        &self.grid
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam.step_count()
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count()
            + self.head_fine.param_count()
            + self.block.param_count()
            + self.head_coarse.param_count()
    }

    /// Raw per-anchor outputs `[N, anchors * PRED_CHANNELS]` for a batch.
    pub fn forward_raw(&mut self, images: &Tensor, record: bool) -> Result<Vec<Vec<f64>>> {
        let f = self.trunk.forward(images, record)?;
        let fine = self.head_fine.forward(&f, record)?;
        let b = self.block.forward(&f, record)?;
        let coarse = self.head_coarse.forward(&b, record)?;
        let n = images.batch();
        let mut out = vec![vec![0.0; self.grid.len() * PRED_CHANNELS]; n];
        let offsets = self.grid.level_offsets();
        for (level, map) in [(0, &fine), (1, &coarse)] {
            let cells = map.shape()[2] * map.shape()[3];
            let item = map.item_len();
            for (i, o) in out.iter_mut().enumerate() {
                let d = &map.data()[i * item..(i + 1) * item];
                for cell in 0..cells {
                    let a = offsets[level] + cell;
                    for ch in 0..PRED_CHANNELS {
                        o[a * PRED_CHANNELS + ch] = d[ch * cells + cell];
                    }
                }
            }
        }
        Ok(out)
    }

    fn backward_raw(&mut self, grads: &[Vec<f64>]) -> Result<()> {
        let offsets = self.grid.level_offsets();
        let mut maps = Vec::new();
        for (level, shape) in [(0, self.head_fine.out_shape().to_vec()), (1, self.head_coarse.out_shape().to_vec())] {
            let cells = shape[1] * shape[2];
            let item = PRED_CHANNELS * cells;
            let mut data = vec![0.0; grads.len() * item];
            for (i, g) in grads.iter().enumerate() {
                for cell in 0..cells {
                    let a = offsets[level] + cell;
                    for ch in 0..PRED_CHANNELS {
                        data[i * item + ch * cells + cell] = g[a * PRED_CHANNELS + ch];
                    }
                }
            }
            let mut full = vec![grads.len()];
            full.extend_from_slice(&shape);
            maps.push(Tensor::from_vec(&full, data)?);
        }
        let g_fine = self.head_fine.backward(&maps[0])?;
        let g_block = self.head_coarse.backward(&maps[1])?;
        let mut g_f = self.block.backward(&g_block)?;
        for (a, b) in g_f.data_mut().iter_mut().zip(g_fine.data()) {
            *a += b;
        }
        self.trunk.backward(&g_f)?;
        Ok(())
    }

    fn zero_grad(&mut self) {
        self.trunk.zero_grad();
        self.head_fine.zero_grad();
        self.block.zero_grad();
        self.head_coarse.zero_grad();
    }

    fn clear_tape(&mut self) {
        self.trunk.clear_tape();
        self.head_fine.clear_tape();
        self.block.clear_tape();
        self.head_coarse.clear_tape();
    }

    fn apply_update(&mut self) -> Result<()> {
        let mut p = self.trunk.params_mut();
        p.extend(self.head_fine.params_mut());
        p.extend(self.block.params_mut());
        p.extend(self.head_coarse.params_mut());
        self.adam.update(&mut p)
    }

    /// Ground-truth box of a pose in image pixels.
    pub fn gt_box(&self, pose: &GraspPose) -> RotatedBox {
        grasp_box(pose, self.px_per_cm, self.config.grasp_box_cm * self.px_per_cm)
    }

    /// Anchor labels and targets for one sample.
    pub fn assign(&self, pose: Option<&GraspPose>, tried: Option<&GraspPose>) -> Result<MatchAssignment> {
        match (pose, tried) {
            (Some(p), _) => match_ground_truth(&self.grid, &self.gt_box(p), self.config.match_iou),
            (None, Some(t)) => match_failed_attempt(&self.grid, &self.gt_box(t), self.config.match_iou),
            (None, None) => Ok(MatchAssignment::all_negative(self.grid.len())),
        }
    }

    /// Loss and gradient w.r.t. the raw outputs of a batch, averaged over
    /// images. `(score, k)` per sample come from the feedback mode.
    pub fn batch_loss(
        &self,
        raw: &[Vec<f64>],
        assignments: &[MatchAssignment],
        weights: &[(f64, usize)],
    ) -> (BatchBreakdown, Vec<Vec<f64>>) {
        let n = raw.len() as f64;
        let mut agg = BatchBreakdown {
            total: 0.0,
            l_pos: 0.0,
            weighted_neg: 0.0,
            score: 0.0,
            k: 0.0,
            damped: 0,
            skipped: false,
            samples: Vec::with_capacity(raw.len()),
        };
        let mut grads = Vec::with_capacity(raw.len());
        for ((pred, m), &(score, k)) in raw.iter().zip(assignments).zip(weights) {
            let (b, mut g) = multibox_loss(pred, m, score, k, &self.config.loss);
            g.iter_mut().for_each(|v| *v /= n);
            agg.total += b.total / n;
            agg.l_pos += b.l_pos / n;
            agg.weighted_neg += b.weighted_neg / n;
            agg.score += b.score / n;
            agg.k += b.k as f64 / n;
            agg.damped += b.damped();
            agg.samples.push(b);
            grads.push(g);
        }
        (agg, grads)
    }

    /// Feedback weights of one sample under a mode: the trial's score and
    /// `K = objects - 1` for a success, `K = objects` for a failure.
    pub fn feedback(mode: FeedbackMode, sample: &DetectorSample) -> (f64, usize) {
        match mode {
            FeedbackMode::Baseline => (1.0, 0),
            FeedbackMode::Proposed => {
                let k = if sample.pose.is_some() {
                    sample.object_count.saturating_sub(1)
                } else {
                    sample.object_count
                };
                (sample.score, k)
            }
        }
    }

    /// One forward/backward/Adam step on a batch. A non-finite loss skips
    /// the update.
    pub fn train_step(&mut self, batch: &[DetectorSample], mode: FeedbackMode) -> Result<BatchBreakdown> {
        if batch.is_empty() {
            return Err(Error::State("empty detector batch".into()));
        }
        let images: Vec<&Tensor> = batch.iter().map(|s| s.image).collect();
        let x = Tensor::stack(&images)?;
        let assignments = batch
            .iter()
            .map(|s| self.assign(s.pose.as_ref(), s.tried.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let weights: Vec<(f64, usize)> = batch.iter().map(|s| Self::feedback(mode, s)).collect();
        self.zero_grad();
        let raw = self.forward_raw(&x, true)?;
        let (mut agg, grads) = self.batch_loss(&raw, &assignments, &weights);
        if !agg.total.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            log::warn!("non-finite detector loss {}; step skipped", agg.total);
            self.clear_tape();
            agg.skipped = true;
            self.counters.skipped_steps += 1;
            return Ok(agg);
        }
        self.backward_raw(&grads)?;
        if let Err(e) = self.apply_update() {
            log::warn!("detector update aborted: {e}");
            agg.skipped = true;
            self.counters.skipped_steps += 1;
            return Ok(agg);
        }
        self.counters.steps += 1;
        for (s, &(score, k)) in batch.iter().zip(&weights) {
            if k > 0 {
                self.counters.damping_calls += 1;
            }
            if s.pose.is_some() && score != 1.0 {
                self.counters.weighted_positives += 1;
            }
        }
        self.counters.damped_negatives += agg.damped as u64;
        Ok(agg)
    }

    /// Decode raw outputs of one image into ranked, suppressed candidates.
    pub fn candidates_from_raw(&self, raw: &[f64]) -> Vec<Candidate> {
        let mut all = Vec::new();
        let mut boxes = Vec::new();
        for (a, anchor) in self.grid.anchors().iter().enumerate() {
            let p = &raw[a * PRED_CHANNELS..(a + 1) * PRED_CHANNELS];
            let (g, b) = (p[CH_CONF_GRASP], p[CH_CONF_BG]);
            let conf = 1.0 / (1.0 + (b - g).exp());
            if !(conf > self.config.conf_min) {
                continue;
            }
            let bx = decode(anchor, &p[CH_LOC..CH_LOC + 4], &p[CH_THETA..CH_THETA + 2]);
            let s = sigmoid(p[CH_SCORE]).clamp(0.0, 1.0);
            all.push(Candidate {
                pose: GraspPose::new(bx.cx / self.px_per_cm, bx.cy / self.px_per_cm, bx.angle),
                s,
                conf,
                anchor: a,
            });
            boxes.push(bx);
        }
        let mut order: Vec<usize> = (0..all.len()).collect();
        order.sort_by(|&i, &j| all[j].s.total_cmp(&all[i].s).then(all[i].anchor.cmp(&all[j].anchor)));
        nms(&boxes, &order, self.config.nms_iou)
            .into_iter()
            .map(|i| all[i])
            .collect()
    }

    /// Ranked grasp candidates for one `[3, H, W]` image.
    pub fn predict(&mut self, image: &Tensor) -> Result<Vec<Candidate>> {
        let x = Tensor::stack(&[image])?;
        let raw = self.forward_raw(&x, false)?;
        Ok(self.candidates_from_raw(&raw[0]))
    }

    pub fn save_to(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.push_network(&format!("{prefix}.trunk"), &self.trunk);
        ck.push_network(&format!("{prefix}.head_fine"), &self.head_fine);
        ck.push_network(&format!("{prefix}.block"), &self.block);
        ck.push_network(&format!("{prefix}.head_coarse"), &self.head_coarse);
        push_adam(ck, &format!("{prefix}.adam"), &self.adam);
    }

    pub fn load_from(&mut self, ck: &Checkpoint, prefix: &str) -> Result<()> {
        ck.load_network(&format!("{prefix}.trunk"), &mut self.trunk)?;
        ck.load_network(&format!("{prefix}.head_fine"), &mut self.head_fine)?;
        ck.load_network(&format!("{prefix}.block"), &mut self.block)?;
        ck.load_network(&format!("{prefix}.head_coarse"), &mut self.head_coarse)?;
        load_adam(ck, &format!("{prefix}.adam"), &mut self.adam)
    }

    /// Test access to the sub-networks in forward order.
    pub fn networks_mut(&mut self) -> [&mut Sequential; 4] {
        [&mut self.trunk, &mut self.head_fine, &mut self.block, &mut self.head_coarse]
    }
}

pub(crate) fn push_adam(ck: &mut Checkpoint, prefix: &str, adam: &Adam) {
    ck.push_raw(format!("{prefix}.step"), &[adam.step_count() as f64]);
    let (m, v) = adam.moments();
    for (i, (m, v)) in m.iter().zip(v).enumerate() {
        ck.push_raw(format!("{prefix}.m.{i}"), m);
        ck.push_raw(format!("{prefix}.v.{i}"), v);
    }
}

pub(crate) fn load_adam(ck: &Checkpoint, prefix: &str, adam: &mut Adam) -> Result<()> {
    let step = ck
        .get(&format!("{prefix}.step"))
        .and_then(|t| t.values.first().copied())
        .ok_or_else(|| Error::Checkpoint(format!("missing {prefix}.step")))?;
    let (mut m, mut v) = (Vec::new(), Vec::new());
    let mut i = 0;
    while let (Some(a), Some(b)) = (ck.get(&format!("{prefix}.m.{i}")), ck.get(&format!("{prefix}.v.{i}"))) {
        m.push(a.values.clone());
        v.push(b.values.clone());
        i += 1;
    }
    adam.restore(step as u64, m, v);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simenv::{render_top, reset_scene, ObjectKind, OptimumDesign, SimConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> DetectorConfig {
        DetectorConfig {
            channels: [2, 3, 3, 2],
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn uniform_outputs_rank_by_anchor_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = DetectorNet::new(small(), 96, 2.4, &mut rng).unwrap();
        for n in net.networks_mut() {
            for p in n.params_mut() {
                p.data_mut().fill(0.0);
            }
        }
        let img = Tensor::full(&[3, 96, 96], 0.2);
        let c = net.predict(&img).unwrap();
        assert!(!c.is_empty());
        assert_eq!(c[0].anchor, 0);
        assert!(c.windows(2).all(|w| w[0].anchor < w[1].anchor));
        assert!(c.iter().all(|x| (x.s - 0.5).abs() < 1e-12 && (x.conf - 0.5).abs() < 1e-12));
        assert_eq!(net.predict(&img).unwrap(), c);
    }

    #[test]
    fn baseline_feedback_is_unweighted() {
        let img = Tensor::zeros(&[3, 96, 96]);
        let s = DetectorSample {
            image: &img,
            pose: Some(GraspPose::new(10.0, 10.0, 0.0)),
            tried: None,
            score: 0.3,
            object_count: 5,
        };
        assert_eq!(DetectorNet::feedback(FeedbackMode::Baseline, &s), (1.0, 0));
        assert_eq!(DetectorNet::feedback(FeedbackMode::Proposed, &s), (0.3, 4));
        let f = DetectorSample { pose: None, ..s };
        assert_eq!(DetectorNet::feedback(FeedbackMode::Proposed, &f).1, 5);
    }

    #[test]
    fn training_reduces_loss_on_a_fixed_batch() {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = DetectorNet::new(
            DetectorConfig {
                adam: crate::diffnum::AdamConfig { lr: 3e-3, ..Default::default() },
                ..small()
            },
            96,
            cfg.px_per_cm(),
            &mut rng,
        )
        .unwrap();
        let scenes: Vec<_> = (0..4)
            .map(|i| reset_scene(2, ObjectKind::Cylinder, OptimumDesign::Center, i, &cfg).unwrap())
            .collect();
        let images: Vec<_> = scenes.iter().map(|s| render_top(s, &cfg)).collect();
        let batch: Vec<_> = scenes
            .iter()
            .zip(&images)
            .map(|(s, img)| DetectorSample {
                image: img,
                pose: Some(s.objects[0].optimum_pose()),
                tried: None,
                score: 0.8,
                object_count: 2,
            })
            .collect();
        let first = net.train_step(&batch, FeedbackMode::Proposed).unwrap().total;
        let mut last = first;
        for _ in 0..60 {
            last = net.train_step(&batch, FeedbackMode::Proposed).unwrap().total;
        }
        assert!(last < 0.7 * first, "{first} -> {last}");
        assert_eq!(net.counters.steps, 61);
        assert_eq!(net.counters.damping_calls, 61 * 4);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = DetectorNet::new(small(), 96, 2.4, &mut rng).unwrap();
        let img = Tensor::full(&[3, 96, 96], 0.4);
        let batch = [DetectorSample {
            image: &img,
            pose: None,
            tried: None,
            score: 1.0,
            object_count: 1,
        }];
        a.train_step(&batch, FeedbackMode::Baseline).unwrap();
        let mut ck = Checkpoint::new();
        a.save_to(&mut ck, "det");
        let mut b = DetectorNet::new(small(), 96, 2.4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        b.load_from(&ck, "det").unwrap();
        assert_eq!(b.adam_steps(), 1);
        let x = Tensor::stack(&[&img]).unwrap();
        assert_eq!(a.forward_raw(&x, false).unwrap(), b.forward_raw(&x, false).unwrap());
    }

    #[test]
    #[ignore]
    fn bench_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = DetectorNet::new(DetectorConfig::default(), 96, 2.4, &mut rng).unwrap();
        let cfg = SimConfig::default();
        let scene = reset_scene(5, ObjectKind::Cylinder, OptimumDesign::Center, 1, &cfg).unwrap();
        let img = render_top(&scene, &cfg);
        let batch: Vec<_> = (0..8)
            .map(|_| DetectorSample {
                image: &img,
                pose: Some(scene.objects[0].optimum_pose()),
                tried: None,
                score: 0.8,
                object_count: 5,
            })
            .collect();
        let t = std::time::Instant::now();
        for _ in 0..20 {
            net.train_step(&batch, FeedbackMode::Proposed).unwrap();
        }
        eprintln!("step {:?}", t.elapsed() / 20);
        let t = std::time::Instant::now();
        for _ in 0..20 {
            net.predict(&img).unwrap();
        }
        eprintln!("predict {:?}", t.elapsed() / 20);
        let t = std::time::Instant::now();
        for _ in 0..20 {
            render_top(&scene, &cfg);
        }
        eprintln!("render {:?}", t.elapsed() / 20);
    }
}
