//! Seeded runs on a bounded worker pool.

use std::sync::Arc;

use microswim_core::env::{EnvConfig, Environment};
use microswim_core::experiment::{RunStats, SuccessCriterion};
use microswim_core::llm::{run_llm_episode, signature_backend, ChatBackend, LlmEpisode, PromptConfig, ReplayBackend, ScriptedBackend};
use microswim_core::oracle::signature_cycle;
use microswim_core::qlearning::{train, QConfig, TrainOutcome};
use microswim_core::rng::SimRng;
use microswim_core::{Action, Result as CoreResult};
use rayon::prelude::*;

use crate::error::CliError;
use crate::http::{HttpBackend, HttpConfig, RateLimiter};
use crate::io::ReplayStore;

/// How each run obtains its chat session.
#[derive(Clone)]
pub enum BackendSpec {
    /// Always answers with the signature cycle.
    Scripted,
    /// Uniformly random actions, seeded per run.
    Random,
    Replay(Arc<ReplayStore>),
    Http(HttpConfig, Option<Arc<RateLimiter>>),
}

impl BackendSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BackendSpec::Scripted => "scripted",
            BackendSpec::Random => "random",
            BackendSpec::Replay(_) => "replay",
            BackendSpec::Http(..) => "http",
        }
    }

    fn session(&self, env: &EnvConfig, condition: &str, run_id: usize) -> CoreResult<Box<dyn ChatBackend>> {
        Ok(match self {
            BackendSpec::Scripted => {
                let sig = signature_cycle(env.model, &env.params, env.target_direction, env.initial_state)?;
                Box::new(signature_backend(&sig))
            }
            BackendSpec::Random => {
                let mut rng = SimRng::new(env.seed ^ 0x5241_4e44);
                Box::new(ScriptedBackend::new(move |_, _| {
                    Action::from_id(rng.index(4)).unwrap_or(Action::NULL).to_string()
                }))
            }
            BackendSpec::Replay(store) => Box::new(ReplayBackend::new(store.get(condition, run_id))),
            BackendSpec::Http(cfg, limiter) => Box::new(HttpBackend::new(cfg.clone(), limiter.clone())),
        })
    }
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    /// Value written in the condition column.
    pub key: String,
    pub env: EnvConfig,
    pub prompt: PromptConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmRun {
    pub condition: String,
    pub seed: u64,
    pub episode: LlmEpisode,
    pub stats: RunStats,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

/// Run `runs` seeded episodes per condition. Run `k` uses environment seed
/// `base_seed + k`. Output order is condition-major, then run id.
pub fn llm_sweep(
    conditions: &[Condition],
    runs: usize,
    steps: usize,
    base_seed: u64,
    backend: &BackendSpec,
    success: &SuccessCriterion,
    jobs: usize,
) -> Result<Vec<LlmRun>, CliError> {
    let tasks: Vec<(&Condition, usize)> = conditions.iter().flat_map(|c| (0..runs).map(move |k| (c, k))).collect();
    let results: Vec<CoreResult<LlmRun>> = pool(jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(c, k)| {
                let seed = base_seed.wrapping_add(k as u64);
                let env_cfg = EnvConfig { seed, ..c.env };
                let sig = signature_cycle(env_cfg.model, &env_cfg.params, env_cfg.target_direction, env_cfg.initial_state)?;
                let mut session = backend.session(&env_cfg, &c.key, k)?;
                let episode = run_llm_episode(Environment::new(env_cfg)?, &mut *session, &c.prompt, steps)?;
                let stats = if episode.aborted {
                    RunStats::failed(k, seed, episode.transcript.signed_final_x())
                } else {
                    RunStats::from_transcript(k, seed, &episode.transcript, &sig, success)
                };
                Ok(LlmRun { condition: c.key.clone(), seed, episode, stats })
            })
            .collect()
    });
    results.into_iter().map(|r| r.map_err(CliError::from)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QRun {
    pub run_id: usize,
    pub seed: u64,
    pub outcome: TrainOutcome,
}

/// Q-learning runs; run `k` seeds both the agent and the environment with `base_seed + k`.
pub fn q_runs(env: &EnvConfig, q: &QConfig, runs: usize, base_seed: u64, jobs: usize) -> Result<Vec<QRun>, CliError> {
    let results: Vec<CoreResult<QRun>> = pool(jobs)?.install(|| {
        (0..runs)
            .into_par_iter()
            .map(|k| {
                let seed = base_seed.wrapping_add(k as u64);
                let outcome = train(&EnvConfig { seed, ..*env }, &QConfig { seed, ..*q })?;
                Ok(QRun { run_id: k, seed, outcome })
            })
            .collect()
    });
    results.into_iter().map(|r| r.map_err(CliError::from)).collect()
}
