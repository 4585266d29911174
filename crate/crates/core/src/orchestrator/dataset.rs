use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffnum::Tensor;
use crate::evaluator::Rescorable;
use crate::simenv::{GraspOutcome, GraspPose, Scene};

/// Where a detector dataset entry came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleOrigin {
    PreSample { index: usize },
    Trial { episode: usize, t: u64 },
}

/// A recorded grasp: the scene it was tried in, the pose, its outcome and
/// (for successes) the grasp score, with the rendered camera images.
#[derive(Clone, Debug)]
pub struct TrialSample {
    pub origin: SampleOrigin,
    pub pose: GraspPose,
    pub success: bool,
    pub score: Option<f64>,
    pub object_count: usize,
    pub top_image: Tensor,
    pub side_image: Option<Tensor>,
    /// Only pre-samples carry a class.
    pub optimum: Option<bool>,
    pub recipe: Option<TrialRecipe>,
}

/// What is needed to re-render a trial entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecipe {
    pub origin: SampleOrigin,
    pub scene: Scene,
    pub pose: GraspPose,
    pub outcome: GraspOutcome,
    pub score: Option<f64>,
}

impl Rescorable for TrialSample {
    fn side_image(&self) -> Option<&Tensor> {
        self.side_image.as_ref()
    }

    fn set_score(&mut self, score: f64) {
        self.score = Some(score);
        if let Some(r) = self.recipe.as_mut() {
            r.score = Some(score);
        }
    }
}

/// Pair view over the detector dataset: every entry with a side image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairDataset {
    /// Indices into the detector dataset.
    pub members: Vec<usize>,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Two distinct members, chosen uniformly.
    pub fn sample_pair<R: Rng>(&self, rng: &mut R) -> Option<(usize, usize)> {
        let n = self.members.len();
        if n < 2 {
            return None;
        }
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        Some((self.members[i], self.members[j]))
    }
}

/// A failed trial: the scene it was tried on and the pose tried.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub scene: Scene,
    pub pose: GraspPose,
}

/// Bounded reservoir of failed trials; images are re-rendered on use.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FailurePool {
    pub capacity: usize,
    pub seen: u64,
    pub trials: Vec<FailedTrial>,
}

impl FailurePool {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            seen: 0,
            trials: Vec::new(),
        }
    }

    pub fn offer<R: Rng>(&mut self, scene: &Scene, pose: GraspPose, rng: &mut R) {
        self.seen += 1;
        if self.capacity == 0 {
            return;
        }
        let trial = FailedTrial {
            scene: scene.clone(),
            pose,
        };
        if self.trials.len() < self.capacity {
            self.trials.push(trial);
        } else {
            let k = rng.gen_range(0..self.seen);
            if (k as usize) < self.capacity {
                self.trials[k as usize] = trial;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simenv::Workspace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reservoir_stays_bounded() {
        let mut pool = FailurePool::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..50 {
            let s = Scene::empty(Workspace { width: 40.0, height: 40.0 }, i);
            pool.offer(&s, GraspPose::new(1.0, 1.0, 0.0), &mut rng);
        }
        assert_eq!(pool.trials.len(), 4);
        assert_eq!(pool.seen, 50);
    }

    #[test]
    fn pairs_are_distinct() {
        let d = PairDataset { members: vec![3, 8] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let (a, b) = d.sample_pair(&mut rng).unwrap();
            assert_ne!(a, b);
        }
        assert!(PairDataset { members: vec![1] }.sample_pair(&mut rng).is_none());
    }
}
