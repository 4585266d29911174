use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{Candidate, DetectorNet};
use crate::diffnum::Tensor;
use crate::error::Result;
use crate::simenv::{execute_grasp, render_top, GraspOutcome, GraspPose, Scene, SimConfig, Workspace};

/// Anything that ranks grasp candidates for a top image.
pub trait Proposer {
    fn propose(&mut self, scene: &Scene, image: &Tensor) -> Result<Vec<Candidate>>;
}

impl Proposer for DetectorNet {
    fn propose(&mut self, _scene: &Scene, image: &Tensor) -> Result<Vec<Candidate>> {
        self.predict(image)
    }
}

/// Proposes the optimum grasp of every object, in scene order.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleProposer;

impl Proposer for OracleProposer {
    fn propose(&mut self, scene: &Scene, _image: &Tensor) -> Result<Vec<Candidate>> {
        Ok(scene
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| Candidate {
                pose: o.optimum_pose(),
                s: 1.0,
                conf: 1.0,
                anchor: i,
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialSource {
    Predicted { rank: usize },
    Random,
}

/// Uniform pose over the workspace.
pub fn random_pose<R: Rng>(ws: &Workspace, rng: &mut R) -> GraspPose {
    GraspPose::new(
        rng.gen_range(0.0..ws.width),
        rng.gen_range(0.0..ws.height),
        rng.gen_range(0.0..PI),
    )
}

/// The `j`-th ranked candidate while `j < n_trial` and the list lasts,
/// otherwise a random pose.
pub fn select_trial<R: Rng>(
    candidates: &[Candidate],
    j: usize,
    n_trial: usize,
    ws: &Workspace,
    rng: &mut R,
) -> (GraspPose, TrialSource) {
    if j < n_trial {
        if let Some(c) = candidates.get(j) {
            return (c.pose, TrialSource::Predicted { rank: j });
        }
    }
    (random_pose(ws, rng), TrialSource::Random)
}

/// One attempted grasp, as seen by the episode callback.
pub struct TrialEvent<'a> {
    /// Attempt index within the episode.
    pub attempt: usize,
    /// Consecutive failures before this attempt.
    pub j: usize,
    pub pose: GraspPose,
    pub source: TrialSource,
    pub scene: &'a Scene,
    pub top_image: &'a Tensor,
    pub outcome: &'a GraspOutcome,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub trials: usize,
    pub successes: usize,
    pub random_trials: usize,
    pub aborted: bool,
}

/// Pick until the scene is empty or the attempt cap is hit. The callback
/// sees every attempt (and may train the proposer) before the scene moves
/// on.
pub fn run_episode<P, R, F>(
    mut scene: Scene,
    proposer: &mut P,
    n_trial: usize,
    max_attempts: usize,
    sim: &SimConfig,
    rng: &mut R,
    mut on_trial: F,
) -> Result<EpisodeReport>
where
    P: Proposer,
    R: Rng,
    F: FnMut(&mut P, TrialEvent) -> Result<()>,
{
    let mut report = EpisodeReport::default();
    let mut j = 0;
    let ws = scene.workspace;
    while !scene.objects.is_empty() {
        if report.trials >= max_attempts {
            report.aborted = true;
            log::warn!("episode aborted after {max_attempts} attempts with {} objects left", scene.objects.len());
            break;
        }
        let image = render_top(&scene, sim);
        let candidates = if j < n_trial { proposer.propose(&scene, &image)? } else { Vec::new() };
        let (pose, source) = select_trial(&candidates, j, n_trial, &ws, rng);
        let (outcome, next) = execute_grasp(&scene, &pose, sim);
        on_trial(
            proposer,
            TrialEvent {
                attempt: report.trials,
                j,
                pose,
                source,
                scene: &scene,
                top_image: &image,
                outcome: &outcome,
            },
        )?;
        report.trials += 1;
        if source == TrialSource::Random {
            report.random_trials += 1;
        }
        if outcome.success {
            report.successes += 1;
            scene = next;
            j = 0;
        } else {
            j += 1;
        }
    }
    Ok(report)
}
