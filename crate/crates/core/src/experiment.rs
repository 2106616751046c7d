//! Success detection and run statistics.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::env::Transcript;
use crate::error::{Error, Result};
use crate::llm::Sentence;
use crate::oracle::GaitCycle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuccessCriterion {
    pub cycles_required: usize,
    /// The required cycles must be complete by this step.
    pub step_budget: usize,
    /// Every step after acquisition must keep following the cycle to the end of the transcript.
    pub no_subsequent_failure: bool,
}

impl Default for SuccessCriterion {
    fn default() -> Self {
        Self { cycles_required: 3, step_budget: 50, no_subsequent_failure: true }
    }
}

/// Step (1-based) at which the required number of consecutive signature traversals
/// completes, or `None` if the transcript does not succeed.
///
/// A step is on-cycle when its action is what the signature prescribes for the shape
/// it was taken from, so any rotation of the cycle counts.
pub fn acquisition_step(t: &Transcript, signature: &GaitCycle, c: &SuccessCriterion) -> Option<usize> {
    let policy = signature.policy()?;
    let params = &t.config.params;
    let on: Vec<bool> = t
        .records
        .iter()
        .map(|r| r.state_before.shape(params).is_some_and(|s| policy[s.index()] == r.action))
        .collect();
    let need = c.cycles_required * signature.len();
    if need == 0 {
        return None;
    }
    let mut run = 0;
    for (i, &ok) in on.iter().enumerate() {
        run = if ok { run + 1 } else { 0 };
        if run == need {
            let done = i + 1;
            if done > c.step_budget {
                return None;
            }
            if !c.no_subsequent_failure || on[done..].iter().all(|&x| x) {
                return Some(done);
            }
            // Any later run would also complete past this step; keep scanning.
        }
    }
    None
}

pub fn detect_success(t: &Transcript, signature: &GaitCycle, c: &SuccessCriterion) -> bool {
    acquisition_step(t, signature, c).is_some()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub run_id: usize,
    pub seed: u64,
    /// Final displacement, signed so that motion toward the target is positive.
    #[serde(rename = "X_final")]
    pub x_final: f64,
    pub success: bool,
}

impl RunStats {
    pub fn from_transcript(run_id: usize, seed: u64, t: &Transcript, signature: &GaitCycle, c: &SuccessCriterion) -> Self {
        Self { run_id, seed, x_final: t.signed_final_x(), success: detect_success(t, signature, c) }
    }

    /// A run that never produced a usable transcript.
    pub fn failed(run_id: usize, seed: u64, x_final: f64) -> Self {
        Self { run_id, seed, x_final, success: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    /// Mean signed final displacement.
    pub mean_x: f64,
    /// Fraction of successful runs.
    pub p: f64,
}

/// Mean displacement and success rate; independent of run order. `None` for no runs.
pub fn aggregate(runs: &[RunStats]) -> Option<Aggregate> {
    if runs.is_empty() {
        return None;
    }
    let mut xs: Vec<f64> = runs.iter().map(|r| r.x_final).collect();
    xs.sort_by(f64::total_cmp);
    let n = runs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let wins = runs.iter().filter(|r| r.success).count();
    Some(Aggregate { runs: runs.len(), mean_x, p: wins as f64 / n })
}

/// Sentences to ablate, one at a time. The first entry of the result is the full-prompt
/// control (`None`).
pub fn ablation_plan(sentences: &[Sentence]) -> Result<Vec<Option<Sentence>>> {
    let mut out = Vec::with_capacity(sentences.len() + 1);
    out.push(None);
    for &s in sentences {
        if out.contains(&Some(s)) {
            return Err(Error::Usage(alloc::format!("sentence {s} listed twice")));
        }
        out.push(Some(s));
    }
    Ok(out)
}

/// Only single-sentence masks are studied.
pub fn validate_ablation_mask(mask: &[Sentence]) -> Result<()> {
    if mask.len() > 1 {
        return Err(Error::Usage(alloc::format!("ablation removes one sentence at a time, got {}", mask.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, Environment};
    use crate::oracle::signature_cycle;
    use crate::swimmer::{Action, ModelKind};
    use alloc::vec;

    fn setup(kind: ModelKind) -> (EnvConfig, GaitCycle) {
        let cfg = EnvConfig::new(kind);
        let sig = signature_cycle(kind, &cfg.params, cfg.target_direction, cfg.initial_state).unwrap();
        (cfg, sig)
    }

    fn play(cfg: EnvConfig, plan: &[Option<Action>]) -> Transcript {
        let mut env = Environment::new(cfg).unwrap();
        for a in plan {
            match a {
                Some(a) => {
                    env.step(*a).unwrap();
                }
                None => {
                    env.hold();
                }
            }
        }
        env.into_transcript()
    }

    fn cycles(sig: &GaitCycle, steps: usize) -> Vec<Option<Action>> {
        sig.actions.iter().cycle().take(steps).map(|a| Some(*a)).collect()
    }

    #[test]
    fn twelve_signature_steps() {
        for kind in [ModelKind::Purcell, ModelKind::Ng] {
            let (cfg, sig) = setup(kind);
            let t = play(cfg, &cycles(&sig, 12));
            assert_eq!(acquisition_step(&t, &sig, &SuccessCriterion::default()), Some(12));
            let t = play(cfg, &cycles(&sig, 11));
            assert!(!detect_success(&t, &sig, &SuccessCriterion::default()));
        }
    }

    #[test]
    fn two_cycles_then_divergence() {
        let (cfg, sig) = setup(ModelKind::Ng);
        let mut plan = cycles(&sig, 8);
        // Back-and-forth on DOF 1 from shape 0.
        let [a, _] = crate::swimmer::ShapeId::ALL[0].moves();
        plan.extend([Some(a), Some(a.inverse())].iter().cycle().take(10).cloned());
        let t = play(cfg, &plan);
        assert!(!detect_success(&t, &sig, &SuccessCriterion::default()));
    }

    #[test]
    fn later_failure_voids_success() {
        let (cfg, sig) = setup(ModelKind::Ng);
        let mut plan: Vec<Option<Action>> = vec![None; 37];
        plan.extend(cycles(&sig, 12));
        assert_eq!(plan.len(), 49);
        let t = play(cfg, &plan);
        assert_eq!(acquisition_step(&t, &sig, &SuccessCriterion::default()), Some(49));
        plan.extend(cycles(&sig, 10));
        plan.push(None);
        let t = play(cfg, &plan);
        assert_eq!(t.records.len(), 60);
        assert!(!detect_success(&t, &sig, &SuccessCriterion::default()));
        let lax = SuccessCriterion { no_subsequent_failure: false, ..SuccessCriterion::default() };
        assert!(detect_success(&t, &sig, &lax));
    }

    #[test]
    fn budget_is_enforced() {
        let (cfg, sig) = setup(ModelKind::Purcell);
        let mut plan: Vec<Option<Action>> = vec![None; 39];
        plan.extend(cycles(&sig, 12));
        let t = play(cfg, &plan);
        assert!(!detect_success(&t, &sig, &SuccessCriterion::default()));
    }

    #[test]
    fn rotation_invariant() {
        let (cfg, sig) = setup(ModelKind::Ng);
        let t = play(cfg, &cycles(&sig, 20));
        for k in 0..4 {
            assert!(detect_success(&t, &sig.rotated(k).unwrap(), &SuccessCriterion::default()));
        }
    }

    #[test]
    fn aggregate_is_order_free() {
        let runs = vec![
            RunStats { run_id: 0, seed: 0, x_final: 0.1, success: true },
            RunStats { run_id: 1, seed: 1, x_final: 0.7, success: false },
            RunStats { run_id: 2, seed: 2, x_final: -0.2, success: true },
            RunStats { run_id: 3, seed: 3, x_final: 1e-9, success: true },
        ];
        let a = aggregate(&runs).unwrap();
        let mut rev = runs.clone();
        rev.reverse();
        assert_eq!(aggregate(&rev).unwrap(), a);
        assert_eq!(a.p, 0.75);
        assert!(aggregate(&[]).is_none());
    }

    #[test]
    fn ablation_masks() {
        assert!(validate_ablation_mask(&[Sentence::S2]).is_ok());
        assert!(matches!(validate_ablation_mask(&[Sentence::S2, Sentence::S3]), Err(Error::Usage(_))));
        let plan = ablation_plan(&[Sentence::S1, Sentence::S5]).unwrap();
        assert_eq!(plan, vec![None, Some(Sentence::S1), Some(Sentence::S5)]);
        assert!(ablation_plan(&[Sentence::S1, Sentence::S1]).is_err());
    }
}
