//! Episodic environment around a single swimmer.
//!
//! Each step integrates one actuation with the clean dynamics, then perturbs the
//! reported displacement as `dx * (1 + zeta * Y)` with `Y ~ U[-1, 1)` drawn from the
//! environment's own [`SimRng`]. The swimmer's shape and pose are never perturbed.

use alloc::vec::Vec;
use libm::{pow, trunc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::swimmer::{integrate_step, valid_actions, Action, Direction, ModelKind, ModelParams, ShapeId, SwimmerState};

/// Version tag written at the head of every transcript file.
pub const TRANSCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub model: ModelKind,
    pub params: ModelParams,
    /// Starting shape, Gray-code id 0–3.
    pub initial_state: ShapeId,
    pub target_direction: Direction,
    pub zeta: f64,
    pub seed: u64,
    pub truncation_decimals: u32,
}

impl EnvConfig {
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            params: ModelParams::default_for(model),
            initial_state: ShapeId::ALL[0],
            target_direction: Direction::PlusX,
            zeta: 0.0,
            seed: 0,
            truncation_decimals: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate(self.model)?;
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::Config(alloc::format!("zeta must be a finite value >= 0, got {}", self.zeta)));
        }
        if self.truncation_decimals > 9 {
            return Err(Error::Config("truncation_decimals must be at most 9".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    /// 1-based step index.
    pub n: usize,
    pub state_before: SwimmerState,
    pub state_after: SwimmerState,
    pub action: Action,
    pub dx_clean: f64,
    pub dx_noisy: f64,
    /// Cumulative noisy displacement along `e_x`, untruncated.
    #[serde(rename = "X")]
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub config: EnvConfig,
    pub records: Vec<StepRecord>,
}

impl Transcript {
    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.records.iter().map(|r| r.action)
    }

    /// Final cumulative displacement, untruncated.
    pub fn final_x(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.x)
    }

    /// Final displacement signed so that motion toward the target is positive.
    pub fn signed_final_x(&self) -> f64 {
        self.config.target_direction.sign() * self.final_x()
    }

    /// Re-run the recorded actions from the stored config.
    pub fn replay(&self) -> Result<Transcript> {
        let mut env = Environment::new(self.config)?;
        for r in &self.records {
            if r.action.is_null() {
                env.hold();
            } else {
                env.step(r.action)?;
            }
        }
        Ok(env.into_transcript())
    }
}

/// Truncate toward zero to `decimals` places.
pub fn truncate_decimals(x: f64, decimals: u32) -> f64 {
    let scale = pow(10.0, decimals as f64);
    trunc(x * scale) / scale
}

#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    state: SwimmerState,
    x: f64,
    rng: SimRng,
    records: Vec<StepRecord>,
}

/// Fresh environment at the configured initial shape with `X = 0`.
pub fn env_reset(cfg: EnvConfig) -> Result<Environment> {
    Environment::new(cfg)
}

impl Environment {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            state: SwimmerState::at_shape(cfg.model, &cfg.params, cfg.initial_state),
            x: 0.0,
            rng: SimRng::new(cfg.seed),
            records: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SwimmerState {
        &self.state
    }

    pub fn shape(&self) -> ShapeId {
        self.state.shape(&self.cfg.params).expect("environment state stays on the boundary")
    }

    /// Cumulative displacement along `e_x`, untruncated.
    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn valid_actions(&self) -> Vec<Action> {
        valid_actions(&self.state, &self.cfg.params).expect("environment state stays on the boundary")
    }

    /// Apply a legal action, drawing the noise sample from the environment RNG.
    pub fn step(&mut self, a: Action) -> Result<StepRecord> {
        let y = self.rng.symmetric();
        self.step_with_noise(a, y)
    }

    /// Apply a legal action with an explicit noise sample `y` in `[-1, 1]`.
    /// The environment RNG is not advanced.
    pub fn step_with_noise(&mut self, a: Action, y: f64) -> Result<StepRecord> {
        let (next, dx_clean) = integrate_step(&self.state, a, &self.cfg.params)?;
        Ok(self.push(a, next, dx_clean, y))
    }

    /// Record a null step regardless of whether the null action is offered.
    /// Consumes one noise sample like any other step.
    pub fn hold(&mut self) -> StepRecord {
        let y = self.rng.symmetric();
        let s = self.state;
        self.push(Action::NULL, s, 0.0, y)
    }

    fn push(&mut self, a: Action, next: SwimmerState, dx_clean: f64, y: f64) -> StepRecord {
        let dx_noisy = if self.cfg.zeta == 0.0 { dx_clean } else { dx_clean * (1.0 + self.cfg.zeta * y) };
        self.x += dx_noisy;
        let rec = StepRecord {
            n: self.records.len() + 1,
            state_before: self.state,
            state_after: next,
            action: a,
            dx_clean,
            dx_noisy,
            x: self.x,
        };
        self.state = next;
        self.records.push(rec.clone());
        rec
    }

    /// `X` truncated toward zero to the configured number of decimals.
    pub fn reported_displacement(&self) -> f64 {
        truncate_decimals(self.x, self.cfg.truncation_decimals)
    }

    pub fn transcript(&self) -> Transcript {
        Transcript { config: self.cfg, records: self.records.clone() }
    }

    pub fn into_transcript(self) -> Transcript {
        Transcript { config: self.cfg, records: self.records }
    }
}
