use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::dataset::{FailurePool, PairDataset, SampleOrigin, TrialRecipe, TrialSample};
use super::episode::{run_episode, Proposer, TrialEvent, TrialSource};
use super::evaluate::{evaluate, EvalTable};
use super::rng::{stream, RngState};
use super::RunConfig;
use crate::detector::{Candidate, DetectorCounters, DetectorNet, DetectorSample, FeedbackMode};
use crate::diffnum::{Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::evaluator::{
    generate_presamples, label_pair, presample_label, pretrain, rescore_dataset, EmbedderNet, PairRef, PreSampleSet,
    Scorer, Separation,
};
use crate::simenv::{augment, render_side, render_top, reset_scene, Dihedral, GraspPose, Scene};

pub const MODEL_FILE: &str = "model.json";
pub const STATE_FILE: &str = "state.json";
const STATE_VERSION: u32 = 1;

const STREAM_INIT: u64 = 0;
const STREAM_SCENES: u64 = 1;
const STREAM_POLICY: u64 = 2;
const STREAM_DETECTOR: u64 = 3;
const STREAM_EVALUATOR: u64 = 4;
const STREAM_EMBEDDER_INIT: u64 = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounters {
    pub trials: u64,
    pub successes: u64,
    pub random_trials: u64,
    pub aborted_episodes: u64,
    /// Grasp scores computed (new successes and rescoring).
    pub grasp_score_calls: u64,
    pub rescore_calls: u64,
    pub evaluator_steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: FeedbackMode,
    pub seed: u64,
    pub episodes: usize,
    pub d1_len: usize,
    pub d2_len: usize,
    pub failures_seen: u64,
    pub counters: RunCounters,
    pub detector: DetectorCounters,
    pub separation: Option<Separation>,
}

/// Everything besides network weights that a resumed run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub version: u32,
    pub config: RunConfig,
    pub pretrained: bool,
    pub initialized: bool,
    pub episodes_done: usize,
    pub t: u64,
    pub report_lines: u64,
    pub rng_scenes: RngState,
    pub rng_policy: RngState,
    pub rng_detector: RngState,
    pub rng_evaluator: RngState,
    pub presample_scores: Vec<Option<f64>>,
    pub trials: Vec<TrialRecipe>,
    pub failures: FailurePool,
    pub counters: RunCounters,
    pub detector_counters: DetectorCounters,
    pub separation: Option<Separation>,
    pub scorer: Option<Scorer>,
}

/// Driver of one training run.
pub struct Trainer {
    pub config: RunConfig,
    pub detector: DetectorNet,
    /// Present in proposed mode only.
    pub embedder: Option<EmbedderNet>,
    pub presamples: PreSampleSet,
    pub scorer: Option<Scorer>,
    pub d1: Vec<TrialSample>,
    pub d2: PairDataset,
    pub failures: FailurePool,
    pub counters: RunCounters,
    pub separation: Option<Separation>,
    pretrained: bool,
    initialized: bool,
    episodes_done: usize,
    t: u64,
    report_lines: u64,
    rng_scenes: ChaCha8Rng,
    rng_policy: ChaCha8Rng,
    rng_detector: ChaCha8Rng,
    rng_evaluator: ChaCha8Rng,
}

impl Proposer for Trainer {
    fn propose(&mut self, _scene: &Scene, image: &Tensor) -> Result<Vec<Candidate>> {
        self.detector.predict(image)
    }
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let mut init = stream(config.seed, STREAM_INIT);
        let detector = DetectorNet::new(
            config.detector.clone(),
            config.sim.top_resolution,
            config.sim.px_per_cm(),
            &mut init,
        )?;
        let presample_seed: u64 = init.gen();
        let embedder = match config.mode {
            FeedbackMode::Proposed => {
                let mut e = EmbedderNet::new(
                    config.evaluator.clone(),
                    config.sim.side_resolution,
                    &mut stream(config.seed, STREAM_EMBEDDER_INIT),
                )?;
                e.augmentation = (config.sim.augment_jitter_px, config.sim.augment_noise);
                Some(e)
            }
            FeedbackMode::Baseline => None,
        };
        let presamples =
            generate_presamples(config.n_obj, config.object_kind, config.design, &config.sim, &config.evaluator, presample_seed)?;
        let d1: Vec<TrialSample> = presamples
            .samples
            .iter()
            .enumerate()
            .map(|(i, p)| TrialSample {
                origin: SampleOrigin::PreSample { index: i },
                pose: p.pose,
                success: true,
                score: Some(1.0),
                object_count: p.object_count,
                top_image: p.top.clone(),
                side_image: Some(p.side.clone()),
                optimum: Some(p.optimum),
                recipe: None,
            })
            .collect();
        let d2 = PairDataset {
            members: (0..d1.len()).collect(),
        };
        Ok(Self {
            failures: FailurePool::new(config.failure_pool_size),
            rng_scenes: stream(config.seed, STREAM_SCENES),
            rng_policy: stream(config.seed, STREAM_POLICY),
            rng_detector: stream(config.seed, STREAM_DETECTOR),
            rng_evaluator: stream(config.seed, STREAM_EVALUATOR),
            config,
            detector,
            embedder,
            presamples,
            scorer: None,
            d1,
            d2,
            counters: RunCounters::default(),
            separation: None,
            pretrained: false,
            initialized: false,
            episodes_done: 0,
            t: 0,
            report_lines: 0,
        })
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    pub fn report_lines(&self) -> u64 {
        self.report_lines
    }

    fn emit(&mut self, sink: &mut dyn Write, value: serde_json::Value) -> Result<()> {
        writeln!(sink, "{value}")?;
        self.report_lines += 1;
        Ok(())
    }

    /// Pretrain the evaluator and score the sub-optimum pre-samples. Runs at
    /// most once; later calls return the stored separation.
    pub fn pretrain_evaluator(&mut self) -> Result<Option<Separation>> {
        if self.pretrained {
            return Ok(self.separation);
        }
        if let Some(embedder) = self.embedder.as_mut() {
            let steps = self.config.evaluator.pretrain_steps;
            let sep = pretrain(embedder, &self.presamples, steps, &mut self.rng_evaluator)?;
            // optimum pre-samples define the target and keep S = 1
            let scorer = Scorer::calibrate(embedder, &self.presamples)?;
            for e in self.d1.iter_mut().filter(|e| e.optimum == Some(false)) {
                let side = e.side_image.as_ref().expect("pre-sample side view");
                e.score = Some(scorer.grasp_score(embedder, side)?);
                self.counters.grasp_score_calls += 1;
            }
            self.scorer = Some(scorer);
            self.separation = Some(sep);
        }
        self.pretrained = true;
        Ok(self.separation)
    }

    pub fn is_pretrained(&self) -> bool {
        self.pretrained
    }

    /// Pretrain the evaluator if needed and warm the detector up on the
    /// pre-samples.
    pub fn initialize(&mut self, sink: &mut dyn Write) -> Result<()> {
        if self.initialized {
            return Ok(());
        }
        let cfg = self.config.clone();
        self.emit(
            sink,
            json!({"type": "run", "mode": cfg.mode, "seed": cfg.seed, "object_kind": cfg.object_kind,
                   "design": cfg.design, "presamples": self.presamples.len()}),
        )?;
        if let Some(sep) = self.pretrain_evaluator()? {
            self.emit(sink, json!({"type": "pretrain", "intra": sep.intra, "inter": sep.inter, "ratio": sep.ratio}))?;
        }
        for _ in 0..cfg.detector_warmup_steps {
            self.detector_step(sink, true)?;
        }
        self.initialized = true;
        Ok(())
    }

    /// Run the remaining episodes. Checkpoints go to `checkpoint_dir` every
    /// `checkpoint_every` episodes and after the last one.
    pub fn run(&mut self, sink: &mut dyn Write, checkpoint_dir: Option<&Path>) -> Result<RunSummary> {
        self.initialize(sink)?;
        let cfg = self.config.clone();
        while self.episodes_done < cfg.n_env {
            let episode = self.episodes_done;
            let seed: u64 = self.rng_scenes.gen();
            let scene = reset_scene(cfg.n_obj, cfg.object_kind, cfg.design, seed, &cfg.sim)?;
            let mut rng = self.rng_policy.clone();
            let report = run_episode(scene, self, cfg.n_trial, cfg.max_attempts, &cfg.sim, &mut rng, |tr, ev| {
                tr.on_trial(sink, episode, ev)
            })?;
            self.rng_policy = rng;
            if report.aborted {
                self.counters.aborted_episodes += 1;
            }
            if self.embedder.is_some() {
                self.rescore()?;
            }
            self.episodes_done += 1;
            let dc = self.detector.counters;
            self.emit(
                sink,
                json!({"type": "episode", "episode": episode, "trials": report.trials, "successes": report.successes,
                       "random_trials": report.random_trials, "aborted": report.aborted, "d1": self.d1.len(),
                       "d2": self.d2.len(), "detector_steps": dc.steps, "evaluator_steps": self.counters.evaluator_steps}),
            )?;
            let due = cfg.checkpoint_every > 0 && self.episodes_done % cfg.checkpoint_every == 0;
            if let Some(dir) = checkpoint_dir {
                if due || self.episodes_done == cfg.n_env {
                    sink.flush()?;
                    self.save_checkpoint(dir)?;
                }
            }
        }
        let summary = self.summary();
        let mut line = serde_json::to_value(&summary)?;
        line["type"] = "summary".into();
        self.emit(sink, line)?;
        Ok(summary)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            mode: self.config.mode,
            seed: self.config.seed,
            episodes: self.episodes_done,
            d1_len: self.d1.len(),
            d2_len: self.d2.len(),
            failures_seen: self.failures.seen,
            counters: self.counters,
            detector: self.detector.counters,
            separation: self.separation,
        }
    }

    fn on_trial(&mut self, sink: &mut dyn Write, episode: usize, ev: TrialEvent) -> Result<()> {
        let t = self.t;
        self.t += 1;
        self.counters.trials += 1;
        if ev.source == TrialSource::Random {
            self.counters.random_trials += 1;
        }
        let errors = ev.outcome.errors;
        let mut score = None;
        if ev.outcome.success {
            self.counters.successes += 1;
            let side = render_side(ev.outcome, &self.config.sim)?;
            score = Some(match self.embedder.as_mut() {
                Some(embedder) => {
                    let scorer = Scorer::calibrate(embedder, &self.presamples)?;
                    self.counters.grasp_score_calls += 1;
                    scorer.grasp_score(embedder, &side)?
                }
                None => 1.0,
            });
            let origin = SampleOrigin::Trial { episode, t };
            self.d1.push(TrialSample {
                origin,
                pose: ev.pose,
                success: true,
                score,
                object_count: ev.scene.objects.len(),
                top_image: ev.top_image.clone(),
                side_image: Some(side),
                optimum: None,
                recipe: Some(TrialRecipe {
                    origin,
                    scene: ev.scene.clone(),
                    pose: ev.pose,
                    outcome: ev.outcome.clone(),
                    score,
                }),
            });
            self.d2.members.push(self.d1.len() - 1);
        } else {
            self.failures.offer(ev.scene, ev.pose, &mut self.rng_detector);
        }
        let (rank, random) = match ev.source {
            TrialSource::Predicted { rank } => (Some(rank), false),
            TrialSource::Random => (None, true),
        };
        self.emit(
            sink,
            json!({"type": "trial", "episode": episode, "t": t, "attempt": ev.attempt, "j": ev.j,
                   "random": random, "rank": rank, "x": ev.pose.x, "y": ev.pose.y, "theta": ev.pose.theta,
                   "objects": ev.scene.objects.len(), "success": ev.outcome.success, "score": score,
                   "along_cm": errors.map(|e| e.along_cm), "perp_cm": errors.map(|e| e.perpendicular_cm),
                   "angle_rad": errors.map(|e| e.angle_rad)}),
        )?;
        if ev.outcome.success {
            for _ in 0..self.config.detector_steps_per_success {
                self.detector_step(sink, false)?;
            }
            if self.embedder.is_some() {
                for _ in 0..self.config.evaluator_steps_per_success {
                    self.evaluator_step()?;
                }
            }
        }
        Ok(())
    }

    fn detector_step(&mut self, sink: &mut dyn Write, warmup: bool) -> Result<()> {
        let b = self.config.detector.batch_size;
        let n_fail = if self.failures.trials.is_empty() {
            0
        } else {
            ((b as f64 * self.config.failure_fraction).round() as usize).min(b)
        };
        let sim = &self.config.sim;
        let ws = sim.workspace();
        let augment_on = self.config.detector_augment;
        let rng = &mut self.rng_detector;
        let prep = |img: &Tensor, pose: Option<GraspPose>, rng: &mut ChaCha8Rng| {
            if !augment_on {
                return (img.clone(), pose);
            }
            let d = Dihedral::from_index(rng.gen_range(0..8));
            let out = augment(&d.apply_image(img), 0, sim.augment_noise, rng);
            (out, pose.map(|p| d.apply_pose(&p, &ws)))
        };
        let mut images = Vec::with_capacity(b);
        for _ in 0..b - n_fail {
            let e = &self.d1[rng.gen_range(0..self.d1.len())];
            let (img, pose) = prep(&e.top_image, Some(e.pose), rng);
            images.push((img, pose, None, e.score.unwrap_or(1.0), e.object_count));
        }
        for _ in 0..n_fail {
            let f = self.failures.trials.choose(rng).expect("non-empty pool");
            let (img, tried) = prep(&render_top(&f.scene, sim), Some(f.pose), rng);
            images.push((img, None, tried, 1.0, f.scene.objects.len()));
        }
        let batch: Vec<DetectorSample> = images
            .iter()
            .map(|(image, pose, tried, score, object_count)| DetectorSample {
                image,
                pose: *pose,
                tried: *tried,
                score: *score,
                object_count: *object_count,
            })
            .collect();
        let agg = self.detector.train_step(&batch, self.config.mode)?;
        if self.config.log_steps {
            let step = self.detector.counters.steps;
            self.emit(
                sink,
                json!({"type": "step", "step": step, "warmup": warmup, "total": agg.total, "l_pos": agg.l_pos,
                       "weighted_neg": agg.weighted_neg, "s": agg.score, "k": agg.k, "damped": agg.damped,
                       "skipped": agg.skipped}),
            )?;
        }
        Ok(())
    }

    fn evaluator_step(&mut self) -> Result<()> {
        let Some(embedder) = self.embedder.as_mut() else {
            return Ok(());
        };
        let cfg = &self.config.evaluator;
        let pool = if cfg.presamples_in_pairs {
            self.d2.clone()
        } else {
            PairDataset {
                members: self
                    .d2
                    .members
                    .iter()
                    .copied()
                    .filter(|&i| self.d1[i].optimum.is_none())
                    .collect(),
            }
        };
        let mut pairs = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let Some((i, j)) = pool.sample_pair(&mut self.rng_evaluator) else {
                break;
            };
            let (a, b) = (&self.d1[i], &self.d1[j]);
            let (sa, sb) = (a.side_image.as_ref().expect("pair member"), b.side_image.as_ref().expect("pair member"));
            let y = match (a.origin, b.origin) {
                (SampleOrigin::PreSample { index: p }, SampleOrigin::PreSample { index: q }) => {
                    presample_label(&self.presamples.samples[p], &self.presamples.samples[q], cfg)
                }
                _ => label_pair(sa, sb, cfg.pixel_threshold, cfg.count_fraction),
            };
            pairs.push(PairRef { a: sa, b: sb, y });
        }
        if pairs.is_empty() {
            return Ok(());
        }
        embedder.train_pairs(&pairs, &mut self.rng_evaluator)?;
        self.counters.evaluator_steps += 1;
        Ok(())
    }

    /// Recalibrate the score map and rescore every successful trial entry.
    /// Pre-sample entries keep the score they were given at pretraining.
    fn rescore(&mut self) -> Result<()> {
        let Some(embedder) = self.embedder.as_mut() else {
            return Ok(());
        };
        let scorer = Scorer::calibrate(embedder, &self.presamples)?;
        let n_pre = self.presamples.len();
        let n = rescore_dataset(&mut self.d1[n_pre..], &scorer, embedder)?;
        self.scorer = Some(scorer);
        self.counters.grasp_score_calls += n as u64;
        self.counters.rescore_calls += 1;
        Ok(())
    }

    /// Evaluate the current detector on the fixed evaluation scenes.
    pub fn evaluate(&mut self) -> Result<EvalTable> {
        let cfg = self.config.clone();
        evaluate(&mut self.detector, cfg.object_kind, cfg.design, &cfg.sim, &cfg.eval)
    }

    pub fn model_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        self.detector.save_to(&mut ck, "detector");
        if let Some(e) = &self.embedder {
            e.save_to(&mut ck, "embedder");
        }
        ck
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            version: STATE_VERSION,
            config: self.config.clone(),
            pretrained: self.pretrained,
            initialized: self.initialized,
            episodes_done: self.episodes_done,
            t: self.t,
            report_lines: self.report_lines,
            rng_scenes: RngState::capture(&self.rng_scenes),
            rng_policy: RngState::capture(&self.rng_policy),
            rng_detector: RngState::capture(&self.rng_detector),
            rng_evaluator: RngState::capture(&self.rng_evaluator),
            presample_scores: self
                .d1
                .iter()
                .filter(|e| matches!(e.origin, SampleOrigin::PreSample { .. }))
                .map(|e| e.score)
                .collect(),
            trials: self.d1.iter().filter_map(|e| e.recipe.clone()).collect(),
            failures: self.failures.clone(),
            counters: self.counters,
            detector_counters: self.detector.counters,
            separation: self.separation,
            scorer: self.scorer,
        }
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.model_checkpoint().save(&dir.join(MODEL_FILE))?;
        let tmp = dir.join(format!("{STATE_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec(&self.state())?)?;
        std::fs::rename(tmp, dir.join(STATE_FILE))?;
        Ok(())
    }

    /// Load network weights only (for evaluation and feature export).
    pub fn load_model(&mut self, ck: &Checkpoint) -> Result<()> {
        self.detector.load_from(ck, "detector")?;
        if let Some(e) = self.embedder.as_mut() {
            e.load_from(ck, "embedder")?;
        }
        Ok(())
    }

    /// Rebuild a trainer from a checkpoint directory written by
    /// [`Trainer::save_checkpoint`].
    pub fn resume(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(STATE_FILE))
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", dir.join(STATE_FILE).display())))?;
        let state: TrainerState =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("corrupt trainer state: {e}")))?;
        if state.version != STATE_VERSION {
            return Err(Error::Checkpoint(format!("unsupported trainer state version {}", state.version)));
        }
        let mut tr = Self::new(state.config.clone())?;
        tr.load_model(&Checkpoint::load(&dir.join(MODEL_FILE))?)?;
        let n_pre = tr.d1.len();
        if state.presample_scores.len() != n_pre {
            return Err(Error::Checkpoint("pre-sample count differs from the checkpoint".into()));
        }
        for (e, s) in tr.d1.iter_mut().zip(&state.presample_scores) {
            e.score = *s;
        }
        let sim = tr.config.sim.clone();
        for r in &state.trials {
            let side = render_side(&r.outcome, &sim)?;
            tr.d1.push(TrialSample {
                origin: r.origin,
                pose: r.pose,
                success: true,
                score: r.score,
                object_count: r.scene.objects.len(),
                top_image: render_top(&r.scene, &sim),
                side_image: Some(side),
                optimum: None,
                recipe: Some(r.clone()),
            });
            tr.d2.members.push(tr.d1.len() - 1);
        }
        tr.failures = state.failures;
        tr.counters = state.counters;
        tr.detector.counters = state.detector_counters;
        tr.separation = state.separation;
        tr.scorer = state.scorer;
        tr.pretrained = state.pretrained;
        tr.initialized = state.initialized;
        tr.episodes_done = state.episodes_done;
        tr.t = state.t;
        tr.report_lines = state.report_lines;
        tr.rng_scenes = state.rng_scenes.restore()?;
        tr.rng_policy = state.rng_policy.restore()?;
        tr.rng_detector = state.rng_detector.restore()?;
        tr.rng_evaluator = state.rng_evaluator.restore()?;
        Ok(tr)
    }
}
