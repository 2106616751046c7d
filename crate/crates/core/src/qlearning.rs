//! Tabular Q-learning over the four extreme shapes.
//!
//! Both swimmers are pose-equivariant, so the state is the shape id alone. Reward is
//! the per-step displacement signed toward the target direction (noisy displacement
//! when the environment has `zeta > 0`).

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Environment, Transcript};
use crate::error::{Error, Result};
use crate::oracle::signature_cycle;
use crate::rng::SimRng;
use crate::swimmer::{Action, ShapeId};

/// Consecutive greedy steps that must follow the signature cycle to count as locked.
pub const LOCK_HORIZON: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Multiplicative decay applied to epsilon after every step.
    pub epsilon_decay: f64,
    pub seed: u64,
    pub max_steps: usize,
    /// Let the agent choose the null action (only if the environment offers it).
    pub include_null: bool,
}

impl Default for QConfig {
    fn default() -> Self {
        Self { alpha: 0.5, gamma: 0.9, epsilon: 1.0, epsilon_decay: 0.99, seed: 0, max_steps: 400, include_null: false }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay) {
            return bad("epsilon_decay must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Q-values indexed by shape id and [`Action::id`]. Illegal pairs stay `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    values: [[Option<f64>; Action::COUNT]; 4],
}

impl QTable {
    /// Zero-initialised table over every legal `(shape, action)` pair.
    pub fn new(include_null: bool) -> Self {
        let mut values = [[None; Action::COUNT]; 4];
        for s in ShapeId::ALL {
            for a in s.moves() {
                values[s.index()][a.id()] = Some(0.0);
            }
            if include_null {
                values[s.index()][Action::NULL.id()] = Some(0.0);
            }
        }
        Self { values }
    }

    pub fn get(&self, s: ShapeId, a: Action) -> Option<f64> {
        self.values[s.index()][a.id()]
    }

    pub fn set(&mut self, s: ShapeId, a: Action, v: f64) {
        let slot = &mut self.values[s.index()][a.id()];
        assert!(slot.is_some(), "({s:?}, {a}) is not a legal pair");
        *slot = Some(v);
    }

    /// Legal actions at `s`, in id order.
    pub fn actions(&self, s: ShapeId) -> impl Iterator<Item = Action> + '_ {
        self.values[s.index()]
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_some())
            .filter_map(|(id, _)| Action::from_id(id))
    }

    pub fn max(&self, s: ShapeId) -> f64 {
        self.values[s.index()].iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Highest-valued legal action; ties go to the lowest action id.
    pub fn greedy(&self, s: ShapeId) -> Action {
        let mut best: Option<(usize, f64)> = None;
        for (id, v) in self.values[s.index()].iter().enumerate() {
            if let Some(v) = *v {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((id, v));
                }
            }
        }
        best.and_then(|(id, _)| Action::from_id(id)).expect("every shape has legal actions")
    }

    /// In-place temporal-difference update.
    pub fn update(&mut self, s: ShapeId, a: Action, reward: f64, next: ShapeId, alpha: f64, gamma: f64) {
        let q = self.get(s, a).expect("legal pair");
        let target = reward + gamma * self.max(next);
        self.set(s, a, q + alpha * (target - q));
    }
}

/// `Q(s,a) <- Q(s,a) + alpha (reward + gamma max Q(s',.) - Q(s,a))`, returning the new table.
pub fn q_update(q: &QTable, s: ShapeId, a: Action, reward: f64, next: ShapeId, alpha: f64, gamma: f64) -> QTable {
    let mut out = *q;
    out.update(s, a, reward, next, alpha, gamma);
    out
}

/// Epsilon-greedy choice among the table's legal actions at `s`.
pub fn select_action(q: &QTable, s: ShapeId, epsilon: f64, rng: &mut SimRng) -> Action {
    if epsilon > 0.0 && rng.unit() < epsilon {
        let n = q.actions(s).count();
        let k = rng.index(n);
        q.actions(s).nth(k).expect("index in range")
    } else {
        q.greedy(s)
    }
}

/// Whether the greedy policy, followed for [`LOCK_HORIZON`] steps from `from`,
/// reproduces `policy`.
pub fn greedy_locked(q: &QTable, policy: &[Action; 4], from: ShapeId) -> bool {
    let mut s = from;
    for _ in 0..LOCK_HORIZON {
        let a = q.greedy(s);
        if a != policy[s.index()] {
            return false;
        }
        match s.apply(a) {
            Some(n) => s = n,
            None => return false,
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub table: QTable,
    pub transcript: Transcript,
    /// First step after which the greedy policy stays locked on the signature cycle
    /// for the rest of training.
    pub acquisition_step: Option<usize>,
}

/// Run epsilon-greedy Q-learning for `q_cfg.max_steps` steps in one continuing episode.
pub fn train(env_cfg: &EnvConfig, q_cfg: &QConfig) -> Result<TrainOutcome> {
    q_cfg.validate()?;
    let mut env = Environment::new(*env_cfg)?;
    let signature = signature_cycle(env_cfg.model, &env_cfg.params, env_cfg.target_direction, env_cfg.initial_state)?;
    let policy = signature.policy().ok_or(Error::OpenCycle)?;
    let include_null = q_cfg.include_null && env_cfg.params.null_action;
    let mut q = QTable::new(include_null);
    let mut rng = SimRng::new(q_cfg.seed);
    let sign = env_cfg.target_direction.sign();
    let mut epsilon = q_cfg.epsilon;

    let mut lock_start = greedy_locked(&q, &policy, env.shape()).then_some(0);
    for n in 1..=q_cfg.max_steps {
        let s = env.shape();
        let a = select_action(&q, s, epsilon, &mut rng);
        let rec = env.step(a)?;
        let dx = if env_cfg.zeta > 0.0 { rec.dx_noisy } else { rec.dx_clean };
        let next = env.shape();
        q.update(s, a, sign * dx, next, q_cfg.alpha, q_cfg.gamma);
        epsilon *= q_cfg.epsilon_decay;

        if greedy_locked(&q, &policy, next) {
            lock_start.get_or_insert(n);
        } else {
            lock_start = None;
        }
    }
    let acquisition_step = lock_start.filter(|&n| q_cfg.max_steps - n >= LOCK_HORIZON);
    Ok(TrainOutcome { table: q, transcript: env.into_transcript(), acquisition_step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swimmer::{Dof, ModelKind, Roc};

    fn s0() -> ShapeId {
        ShapeId::ALL[0]
    }

    #[test]
    fn update_arithmetic() {
        let q = QTable::new(false);
        let a = Action::new(Dof::One, Roc::Plus);
        let next = s0().apply(a).unwrap();
        let q2 = q_update(&q, s0(), a, 1.0, next, 0.5, 0.9);
        assert_eq!(q2.get(s0(), a), Some(0.5));
        let q3 = q_update(&q, s0(), a, 0.0, next, 0.5, 0.9);
        assert_eq!(q3, q);
    }

    #[test]
    fn update_fixed_point() {
        let mut q = QTable::new(false);
        let a = Action::new(Dof::One, Roc::Plus);
        let next = s0().apply(a).unwrap();
        for b in next.moves() {
            q.set(next, b, 0.25);
        }
        let reward = 0.1;
        q.set(s0(), a, reward + 0.9 * 0.25);
        let q2 = q_update(&q, s0(), a, reward, next, 0.7, 0.9);
        assert!((q2.get(s0(), a).unwrap() - q.get(s0(), a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn greedy_and_ties() {
        let mut q = QTable::new(true);
        let [a, b] = s0().moves();
        assert_eq!(q.greedy(s0()), a);
        q.set(s0(), b, 0.2);
        let mut rng = SimRng::new(0);
        assert_eq!(select_action(&q, s0(), 0.0, &mut rng), b);
        q.set(s0(), a, 0.2);
        assert!(a.id() < b.id());
        assert_eq!(q.greedy(s0()), a);
    }

    #[test]
    fn greedy_invariant_under_shift() {
        let mut rng = SimRng::new(8);
        let mut q = QTable::new(true);
        for s in ShapeId::ALL {
            let acts: alloc::vec::Vec<Action> = q.actions(s).collect();
            for a in acts {
                q.set(s, a, rng.symmetric());
            }
        }
        let mut shifted = q;
        for s in ShapeId::ALL {
            let acts: alloc::vec::Vec<Action> = q.actions(s).collect();
            for a in acts {
                shifted.set(s, a, q.get(s, a).unwrap() + 3.75);
            }
        }
        for s in ShapeId::ALL {
            assert_eq!(q.greedy(s), shifted.greedy(s));
        }
    }

    #[test]
    fn uniform_exploration() {
        let q = QTable::new(true);
        let mut rng = SimRng::new(21);
        let mut counts = [0usize; Action::COUNT];
        let n = 10_000;
        for _ in 0..n {
            counts[select_action(&q, s0(), 1.0, &mut rng).id()] += 1;
        }
        let legal: alloc::vec::Vec<usize> = q.actions(s0()).map(|a| a.id()).collect();
        let expected = n as f64 / legal.len() as f64;
        let chi2: f64 = legal.iter().map(|&i| (counts[i] as f64 - expected).powi(2) / expected).sum();
        // 2 degrees of freedom, p = 0.001.
        assert!(chi2 < 13.82, "chi2 {chi2}, counts {counts:?}");
        assert_eq!(counts.iter().sum::<usize>(), n);
    }

    #[test]
    fn degenerate_gamma_returns_without_error() {
        let cfg = QConfig { gamma: 0.0, epsilon: 0.0, max_steps: 60, ..QConfig::default() };
        let out = train(&EnvConfig::new(ModelKind::Ng), &cfg).unwrap();
        assert_eq!(out.transcript.records.len(), 60);
        // Myopic greedy play cannot value the negative middle strokes.
        assert_eq!(out.acquisition_step, None);
    }

    #[test]
    fn config_validation() {
        assert!(QConfig::default().validate().is_ok());
        assert!(QConfig { alpha: 0.0, ..QConfig::default() }.validate().is_err());
        assert!(QConfig { gamma: 1.0, ..QConfig::default() }.validate().is_err());
        assert!(QConfig { epsilon: 1.5, ..QConfig::default() }.validate().is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let env = EnvConfig::new(ModelKind::Purcell);
        let cfg = QConfig { seed: 7, ..QConfig::default() };
        assert_eq!(train(&env, &cfg).unwrap(), train(&env, &cfg).unwrap());
    }
}
