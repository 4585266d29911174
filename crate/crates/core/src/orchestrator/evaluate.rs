use serde::{Deserialize, Serialize};

use super::episode::Proposer;
use crate::error::{Error, Result};
use crate::simenv::{execute_grasp, oracle_eval, render_top, reset_scene, Condition, ObjectKind, OptimumDesign, SimConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub scenes_per_count: usize,
    pub max_objects: usize,
    /// Scene seeds do not depend on the training seed, so every run is
    /// evaluated on the same scenes.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scenes_per_count: 20,
            max_objects: 5,
            seed: 1_000_003,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenes_per_count == 0 || self.max_objects == 0 {
            return Err(Error::Config("eval counts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub objects: usize,
    pub trials: usize,
    pub strict_successes: usize,
    pub any_successes: usize,
}

impl EvalRow {
    pub fn strict_rate(&self) -> f64 {
        self.strict_successes as f64 / self.trials.max(1) as f64
    }

    pub fn any_rate(&self) -> f64 {
        self.any_successes as f64 / self.trials.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
}

impl EvalTable {
    pub fn total(&self) -> EvalRow {
        EvalRow {
            objects: 0,
            trials: self.rows.iter().map(|r| r.trials).sum(),
            strict_successes: self.rows.iter().map(|r| r.strict_successes).sum(),
            any_successes: self.rows.iter().map(|r| r.any_successes).sum(),
        }
    }

    /// Aggregate rate under a condition.
    pub fn rate(&self, condition: Condition) -> f64 {
        let t = self.total();
        match condition {
            Condition::Strict => t.strict_rate(),
            Condition::AnySuccess => t.any_rate(),
        }
    }
}

/// One grasp per fresh scene, taking the top-ranked candidate, for every
/// object count from 1 to `max_objects`. A scene with no candidate counts as
/// a failed grasp.
pub fn evaluate<P: Proposer>(
    proposer: &mut P,
    kind: ObjectKind,
    design: OptimumDesign,
    sim: &SimConfig,
    cfg: &EvalConfig,
) -> Result<EvalTable> {
    let mut rows = Vec::new();
    for objects in 1..=cfg.max_objects {
        let mut row = EvalRow {
            objects,
            trials: 0,
            strict_successes: 0,
            any_successes: 0,
        };
        for i in 0..cfg.scenes_per_count {
            let seed = cfg.seed.wrapping_add((objects * 100_000 + i) as u64);
            let scene = reset_scene(objects, kind, design, seed, sim)?;
            let image = render_top(&scene, sim);
            let candidates = proposer.propose(&scene, &image)?;
            row.trials += 1;
            let Some(top) = candidates.first() else {
                continue;
            };
            let (outcome, _) = execute_grasp(&scene, &top.pose, sim);
            row.strict_successes += usize::from(oracle_eval(&outcome, Condition::Strict, sim));
            row.any_successes += usize::from(oracle_eval(&outcome, Condition::AnySuccess, sim));
        }
        rows.push(row);
    }
    Ok(EvalTable { rows })
}
