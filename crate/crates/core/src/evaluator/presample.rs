use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::contrastive::label_pair;
use super::embedder::{EmbedderNet, Embedding, PairRef};
use super::EvaluatorConfig;
use crate::diffnum::Tensor;
use crate::error::{Error, Result};
use crate::simenv::{
    execute_grasp, render_side, render_top, reset_scene, GraspErrors, GraspPose, ObjectKind, OptimumDesign, SimConfig,
};

/// One hand-designed grasp: the top view of its scene, the grasp pose on
/// the scene's first object, and the side view after lifting.
#[derive(Clone, Debug)]
pub struct PreSample {
    pub top: Tensor,
    pub side: Tensor,
    pub pose: GraspPose,
    pub errors: GraspErrors,
    pub optimum: bool,
    pub object_count: usize,
}

#[derive(Clone, Debug)]
pub struct PreSampleSet {
    pub samples: Vec<PreSample>,
    pub kind: ObjectKind,
    pub design: OptimumDesign,
}

impl PreSampleSet {
    pub fn optimum(&self) -> impl Iterator<Item = &PreSample> {
        self.samples.iter().filter(|s| s.optimum)
    }

    pub fn suboptimum(&self) -> impl Iterator<Item = &PreSample> {
        self.samples.iter().filter(|s| !s.optimum)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Render the pre-sample set: optimum grasps with a small scatter and
/// sub-optimum grasps displaced along the axis or turned, alternating. Each
/// grasp targets the first object of a fresh `objects`-object scene.
pub fn generate_presamples(
    objects: usize,
    kind: ObjectKind,
    design: OptimumDesign,
    sim: &SimConfig,
    cfg: &EvaluatorConfig,
    seed: u64,
) -> Result<PreSampleSet> {
    if cfg.optimum_presamples == 0 || cfg.suboptimum_presamples == 0 {
        return Err(Error::Config("pre-samples need both optimum and sub-optimum images".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    let total = cfg.optimum_presamples + cfg.suboptimum_presamples;
    for i in 0..total {
        let optimum = i < cfg.optimum_presamples;
        let mut made = None;
        for _ in 0..100 {
            let scene = reset_scene(objects, kind, design, rng.gen(), sim)?;
            let obj = &scene.objects[0];
            let (along, angle) = if optimum {
                let a = cfg.optimum_along_jitter_cm;
                let t = cfg.optimum_angle_jitter_deg;
                (
                    if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 },
                    if t > 0.0 { rng.gen_range(-t..=t).to_radians() } else { 0.0 },
                )
            } else {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let j = i - cfg.optimum_presamples;
                if j % 2 == 0 {
                    let (lo, hi) = cfg.suboptimum_along_cm;
                    (sign * rng.gen_range(lo..=hi), 0.0)
                } else {
                    let (lo, hi) = cfg.suboptimum_angle_deg;
                    (0.0, sign * rng.gen_range(lo..=hi).to_radians())
                }
            };
            let opt = obj.optimum_pose();
            let u = obj.axis();
            let pose = GraspPose::new(opt.x + along * u[0], opt.y + along * u[1], opt.theta + angle);
            let (outcome, _) = execute_grasp(&scene, &pose, sim);
            if !outcome.success || outcome.grasped_object != Some(obj.id) {
                continue;
            }
            let side = render_side(&outcome, sim)?;
            made = Some(PreSample {
                top: render_top(&scene, sim),
                side,
                pose,
                errors: outcome.errors.expect("successful grasp has errors"),
                optimum,
                object_count: scene.objects.len(),
            });
            break;
        }
        samples.push(made.ok_or_else(|| {
            Error::Config("could not place a graspable pre-sample; check the sub-optimum ranges".into())
        })?);
    }
    Ok(PreSampleSet { samples, kind, design })
}

fn distance(a: &Embedding, b: &Embedding) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mean distances within the optimum group and across the two groups.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub intra: f64,
    pub inter: f64,
    pub ratio: f64,
}

pub fn separation(net: &mut EmbedderNet, set: &PreSampleSet) -> Result<Separation> {
    let opt: Vec<&Tensor> = set.optimum().map(|s| &s.side).collect();
    let sub: Vec<&Tensor> = set.suboptimum().map(|s| &s.side).collect();
    let eo = net.embed_batch(&opt)?;
    let es = net.embed_batch(&sub)?;
    let intra = mean_pairwise(&eo);
    let mut inter = 0.0;
    for a in &eo {
        for b in &es {
            inter += distance(a, b);
        }
    }
    inter /= (eo.len() * es.len()).max(1) as f64;
    Ok(Separation {
        intra,
        inter,
        ratio: inter / intra.max(1e-12),
    })
}

fn mean_pairwise(e: &[Embedding]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            sum += distance(&e[i], &e[j]);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Label of a pre-sample pair: class identity when an optimum image is
/// involved, pixel difference between two sub-optimum images.
pub fn presample_label(a: &PreSample, b: &PreSample, cfg: &EvaluatorConfig) -> u8 {
    match (a.optimum, b.optimum) {
        (true, true) => 0,
        (true, false) | (false, true) => 1,
        (false, false) => label_pair(&a.side, &b.side, cfg.pixel_threshold, cfg.count_fraction),
    }
}

/// Pretrain on pre-sample pairs until the step budget is spent; fails when
/// the optimum group is not closer together than it is to the sub-optimum
/// group by `min_separation`.
pub fn pretrain<R: Rng>(net: &mut EmbedderNet, set: &PreSampleSet, steps: usize, rng: &mut R) -> Result<Separation> {
    if set.optimum().next().is_none() || set.suboptimum().next().is_none() {
        return Err(Error::Pretraining("pre-samples need both optimum and sub-optimum images".into()));
    }
    let n = set.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j, presample_label(&set.samples[i], &set.samples[j], &net.config)));
        }
    }
    let batch = net.config.batch_size;
    for _ in 0..steps {
        let chosen: Vec<PairRef> = pairs
            .choose_multiple(rng, batch)
            .map(|&(i, j, y)| PairRef {
                a: &set.samples[i].side,
                b: &set.samples[j].side,
                y,
            })
            .collect();
        net.train_pairs(&chosen, rng)?;
    }
    let sep = separation(net, set)?;
    if !(sep.ratio > net.config.min_separation) {
        return Err(Error::Pretraining(format!(
            "separation ratio {:.3} (inter {:.4}, intra {:.4}) did not exceed {}",
            sep.ratio, sep.inter, sep.intra, net.config.min_separation
        )));
    }
    Ok(sep)
}

/// Snapshot of the score map: mean optimum embedding and its scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scorer {
    pub center: Embedding,
    pub sigma: f64,
    pub floor: f64,
}

impl Scorer {
    /// Embed the optimum pre-samples with the current network.
    pub fn calibrate(net: &mut EmbedderNet, set: &PreSampleSet) -> Result<Self> {
        let opt: Vec<&Tensor> = set.optimum().map(|s| &s.side).collect();
        if opt.is_empty() {
            return Err(Error::Pretraining("no optimum pre-samples".into()));
        }
        let e = net.embed_batch(&opt)?;
        let k = e.len() as f64;
        let center = [e.iter().map(|v| v[0]).sum::<f64>() / k, e.iter().map(|v| v[1]).sum::<f64>() / k];
        Ok(Self {
            center,
            sigma: mean_pairwise(&e).max(net.config.sigma_floor),
            floor: net.config.score_floor,
        })
    }

    pub fn distance(&self, e: &Embedding) -> f64 {
        distance(e, &self.center)
    }

    /// `max(floor, exp(-dist / sigma))`.
    pub fn score_distance(&self, dist: f64) -> f64 {
        (-dist / self.sigma).exp().max(self.floor)
    }

    pub fn score(&self, e: &Embedding) -> f64 {
        self.score_distance(self.distance(e))
    }

    /// Grasp score of one side-view image.
    pub fn grasp_score(&self, net: &mut EmbedderNet, image: &Tensor) -> Result<f64> {
        Ok(self.score(&net.embed(image)?))
    }
}

/// A detector dataset entry whose score can be recomputed.
pub trait Rescorable {
    /// Side view of a successful trial, `None` for failures.
    fn side_image(&self) -> Option<&Tensor>;
    fn set_score(&mut self, score: f64);
}

/// Recompute every successful entry's score with the current embedder.
/// Returns the number of entries rescored.
pub fn rescore_dataset<T: Rescorable>(entries: &mut [T], scorer: &Scorer, net: &mut EmbedderNet) -> Result<usize> {
    let idx: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].side_image().is_some()).collect();
    let images: Vec<&Tensor> = idx.iter().map(|&i| entries[i].side_image().unwrap()).collect();
    let emb = net.embed_batch(&images)?;
    for (&i, e) in idx.iter().zip(&emb) {
        entries[i].set_score(scorer.score(e));
    }
    Ok(idx.len())
}
