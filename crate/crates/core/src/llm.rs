//! Few-shot prompted control loop.
//!
//! Every step renders a five-sentence prompt (objective, DOF constraints, recent
//! history, long-term hint, action request), sends it to a [`ChatBackend`], parses
//! `DOF <1|2> ROC <-1|0|+1>` out of the reply and executes it. Displacements shown to
//! the model are shifted by `x_min` and scaled by 1000 so they are always
//! non-negative integers, and DOF positions are shown as 0 (lower limit) or 1
//! (upper limit).

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use libm::round;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, Transcript};
use crate::error::{Error, Result};
use crate::oracle::GaitCycle;
use crate::swimmer::{Action, Direction, Dof, ModelKind, Roc, ShapeId};

/// Prompt sentence slots, in rendering order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sentence {
    S1,
    S2,
    S3,
    S4,
    S5,
}

impl Sentence {
    pub const ALL: [Sentence; 5] = [Sentence::S1, Sentence::S2, Sentence::S3, Sentence::S4, Sentence::S5];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Sentence> {
        Sentence::ALL.into_iter().find(|x| x.name().eq_ignore_ascii_case(s.trim()))
    }

    pub fn name(self) -> &'static str {
        ["S1", "S2", "S3", "S4", "S5"][self.index()]
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Template version of [`DEFAULT_SENTENCES`]; bump when the wording changes.
pub const TEMPLATE_VERSION: u32 = 1;

/// Default sentence templates, written long-hand; [`DEFAULT_ALIASES`] shortens them.
pub const DEFAULT_SENTENCES: [&str; 5] = [
    "Find the rate of change sequence for both degrees of freedom that makes the swimmer move fastest over the long term in the {direction} direction, so the displacement should {trend} as quickly as possible.",
    "Each degree of freedom is either 0 or 1 and only one changes per action, where rate of change +1 moves it from 0 to 1, rate of change -1 moves it from 1 to 0 and rate of change 0 holds it, and currently degree of freedom 1 is {dof1} and degree of freedom 2 is {dof2}.",
    "The latest {count} records of action and resulting displacement are: {history}.",
    "An action that looks poor now can still lead to faster movement over later steps, so weigh the long-term impact of every action.",
    "Reply with only the next action written as DOF n ROC r, chosen from {choices}.",
];

pub const DEFAULT_ALIASES: [(&str, &str); 3] =
    [("degrees of freedom", "DOFs"), ("degree of freedom", "DOF"), ("rate of change", "ROC")];

/// Sentence appended when a reply cannot be used.
pub const CORRECTION: &str = "Your previous reply was not one of the allowed actions, so answer again with exactly one of them.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    pub sentences: [String; 5],
    /// Number of history entries shown in S3.
    pub n_ht: usize,
    /// Baseline subtracted from displacements before scaling.
    pub x_min: f64,
    /// Number of recent steps checked by the history-clearing rule.
    pub stall_window: usize,
    pub stall_threshold: f64,
    /// `(long form, alias)` pairs, applied in order.
    pub aliases: Vec<(String, String)>,
    pub ablation_mask: Vec<Sentence>,
    pub temperature: f64,
    /// Re-queries allowed per step before a null action is recorded.
    pub max_retries: usize,
}

impl PromptConfig {
    /// Defaults with the per-swimmer history length: Purcell 2, three-sphere 3 (+x) or 6 (-x).
    pub fn default_for(model: ModelKind, direction: Direction) -> Self {
        let n_ht = match (model, direction) {
            (ModelKind::Purcell, _) => 2,
            (ModelKind::Ng, Direction::PlusX) => 3,
            (ModelKind::Ng, Direction::MinusX) => 6,
        };
        Self {
            sentences: DEFAULT_SENTENCES.map(String::from),
            n_ht,
            x_min: -100.0,
            stall_window: 4,
            stall_threshold: 0.01,
            aliases: DEFAULT_ALIASES.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            ablation_mask: Vec::new(),
            temperature: 0.0,
            max_retries: 3,
        }
    }

    pub fn omits(&self, s: Sentence) -> bool {
        self.ablation_mask.contains(&s)
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.stall_threshold > 0.0) {
            return Err(Error::Config("stall_threshold must be positive".into()));
        }
        if !self.x_min.is_finite() {
            return Err(Error::Config("x_min must be finite".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Config("temperature must lie in [0, 2]".into()));
        }
        // Every template must render to a single sentence.
        let probe = EnvSummary {
            direction: Direction::PlusX,
            levels: (0, 1),
            choices: ShapeId::ALL[1].moves().to_vec(),
        };
        let buf = HistoryBuffer::new(1);
        for s in Sentence::ALL {
            let text = render_sentence(self, s, &buf, &probe)?;
            let periods = text.matches('.').count();
            if periods != 1 || !text.ends_with('.') {
                return Err(Error::Template(format!("{s} must render to exactly one sentence")));
            }
        }
        Ok(())
    }
}

/// Shift and scale a 3-decimal displacement to a non-negative integer.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn transform_displacement(x: f64, x_min: f64) -> Result<u64> {
    if !(x >= x_min) {
        return Err(Error::Range { x, x_min });
    }
    Ok(round((x - x_min) * 1000.0) as u64)
}

/// Inverse of [`transform_displacement`].
pub fn untransform_displacement(v: u64, x_min: f64) -> f64 {
    v as f64 / 1000.0 + x_min
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub action: Action,
    /// Transformed displacement after the action.
    pub displacement: u64,
}

/// Bounded chronological buffer of recent `(action, displacement)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HistoryBuffer {
    entries: VecDeque<HistoryEntry>,
    capacity: usize,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { entries: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn push(&mut self, e: HistoryEntry) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(e);
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.iter()
    }
}

/// What the prompt reveals about the environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvSummary {
    pub direction: Direction,
    /// DOF positions as 0 (lower limit) or 1 (upper limit).
    pub levels: (u8, u8),
    pub choices: Vec<Action>,
}

impl EnvSummary {
    pub fn from_env(env: &Environment) -> Self {
        let (h1, h2) = env.shape().levels();
        Self {
            direction: env.config().target_direction,
            levels: (h1 as u8, h2 as u8),
            choices: env.valid_actions(),
        }
    }
}

fn join_choices(choices: &[Action]) -> String {
    let items: Vec<String> = choices.iter().map(|a| a.to_string()).collect();
    match items.as_slice() {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} or {}", init.join(", "), last),
    }
}

fn render_sentence(cfg: &PromptConfig, s: Sentence, buf: &HistoryBuffer, env: &EnvSummary) -> Result<String> {
    let template = &cfg.sentences[s.index()];
    let history = if buf.is_empty() {
        String::from("none")
    } else {
        let items: Vec<String> =
            buf.iter().map(|e| format!("{} gave displacement {}", e.action, e.displacement)).collect();
        items.join("; ")
    };
    let (direction, trend) = match env.direction {
        Direction::PlusX => ("positive x", "increase"),
        Direction::MinusX => ("negative x", "decrease"),
    };
    let mut text = template.clone();
    for (key, value) in [
        ("{direction}", String::from(direction)),
        ("{trend}", String::from(trend)),
        ("{dof1}", env.levels.0.to_string()),
        ("{dof2}", env.levels.1.to_string()),
        ("{count}", buf.len().to_string()),
        ("{history}", history),
        ("{choices}", join_choices(&env.choices)),
    ] {
        text = text.replace(key, &value);
    }
    if let Some(start) = text.find('{') {
        let end = text[start..].find('}').map_or(text.len(), |e| start + e + 1);
        return Err(Error::Template(text[start..end].to_string()));
    }
    for (long, short) in &cfg.aliases {
        text = text.replace(long.as_str(), short);
    }
    Ok(text)
}

/// Render the prompt: the non-ablated sentences in order, separated by single spaces.
pub fn build_prompt(cfg: &PromptConfig, buf: &HistoryBuffer, env: &EnvSummary) -> Result<String> {
    let mut parts = Vec::with_capacity(5);
    for s in Sentence::ALL {
        if !cfg.omits(s) {
            parts.push(render_sentence(cfg, s, buf, env)?);
        }
    }
    Ok(parts.join(" "))
}

/// True if every number in `text` is a non-negative integer, ignoring the signed
/// rate tokens of the action grammar (`ROC -1`, `ROC +1`).
pub fn numeric_tokens_ok(text: &str) -> bool {
    let b = text.as_bytes();
    let mut i = 0;
    while i < b.len() {
        if b[i].is_ascii_digit() {
            let start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            // Fraction: digits '.' digits, or ',' used as a decimal mark.
            if i + 1 < b.len() && (b[i] == b'.' || b[i] == b',') && b[i + 1].is_ascii_digit() {
                return false;
            }
            if start > 0 && b[start - 1] == b'-' && !text[..start - 1].ends_with("ROC ") {
                return false;
            }
        } else {
            i += 1;
        }
    }
    true
}

fn is_sep(c: u8) -> bool {
    !(c.is_ascii_alphanumeric() || c == b'+' || c == b'-')
}

fn skip_seps(b: &[u8], mut i: usize) -> usize {
    while i < b.len() && is_sep(b[i]) {
        i += 1;
    }
    i
}

fn read_int(b: &[u8], mut i: usize) -> Option<(i64, usize)> {
    let neg = match b.get(i) {
        Some(b'-') => {
            i += 1;
            true
        }
        Some(b'+') => {
            i += 1;
            false
        }
        _ => false,
    };
    let start = i;
    let mut v: i64 = 0;
    while i < b.len() && b[i].is_ascii_digit() {
        v = v.saturating_mul(10).saturating_add((b[i] - b'0') as i64);
        i += 1;
    }
    if i == start {
        return None;
    }
    Some((if neg { -v } else { v }, i))
}

/// Extract the first `DOF <1|2> ROC <-1|0|+1>` from a reply, case-insensitively and
/// tolerating punctuation between the tokens.
pub fn parse_action(response: &str) -> Result<Action> {
    let lower = response.to_ascii_lowercase();
    let b = lower.as_bytes();
    let mut from = 0;
    while let Some(off) = lower[from..].find("dof") {
        let at = from + off;
        from = at + 3;
        if at > 0 && b[at - 1].is_ascii_alphanumeric() {
            continue;
        }
        let i = skip_seps(b, at + 3);
        let Some((dof, i)) = read_int(b, i) else { continue };
        let i = skip_seps(b, i);
        if !lower[i..].starts_with("roc") {
            continue;
        }
        let i = skip_seps(b, i + 3);
        let Some((roc, _)) = read_int(b, i) else { continue };
        let dof = u8::try_from(dof).ok().and_then(|d| Dof::try_from(d).ok());
        let roc = i8::try_from(roc).ok().and_then(|r| Roc::try_from(r).ok());
        return match (dof, roc) {
            (Some(d), Some(r)) => Ok(Action::new(d, r)),
            _ => Err(Error::Parse(response.to_string())),
        };
    }
    Err(Error::Parse(response.to_string()))
}

/// Clear `buf` if the last `window` step displacements are all in and their sum
/// is below the stall threshold in magnitude. Returns whether it cleared.
pub fn maybe_clear_history(buf: &mut HistoryBuffer, recent: &[f64], cfg: &PromptConfig) -> bool {
    let k = cfg.stall_window;
    if k == 0 || recent.len() < k {
        return false;
    }
    let sum: f64 = recent[recent.len() - k..].iter().sum();
    if sum.abs() < cfg.stall_threshold {
        buf.clear();
        true
    } else {
        false
    }
}

/// A text-completion service. One instance is one session.
pub trait ChatBackend {
    fn complete(&mut self, prompt: &str, temperature: f64) -> Result<String>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &mut B {
    fn complete(&mut self, prompt: &str, temperature: f64) -> Result<String> {
        (**self).complete(prompt, temperature)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for alloc::boxed::Box<B> {
    fn complete(&mut self, prompt: &str, temperature: f64) -> Result<String> {
        (**self).complete(prompt, temperature)
    }
}

/// Wraps a deterministic policy `(call index, prompt) -> reply`.
pub struct ScriptedBackend<F> {
    policy: F,
    calls: usize,
}

impl<F: FnMut(usize, &str) -> String> ScriptedBackend<F> {
    pub fn new(policy: F) -> Self {
        Self { policy, calls: 0 }
    }
}

impl<F: FnMut(usize, &str) -> String> ChatBackend for ScriptedBackend<F> {
    fn complete(&mut self, prompt: &str, _temperature: f64) -> Result<String> {
        let out = (self.policy)(self.calls, prompt);
        self.calls += 1;
        Ok(out)
    }
}

/// Scripted backend that replays `actions` cyclically, ignoring the prompt.
pub fn cyclic_backend(actions: Vec<Action>) -> ScriptedBackend<impl FnMut(usize, &str) -> String> {
    assert!(!actions.is_empty(), "cyclic script needs at least one action");
    ScriptedBackend::new(move |k, _| actions[k % actions.len()].to_string())
}

/// Scripted backend that traverses `cycle` from its start shape.
pub fn signature_backend(cycle: &GaitCycle) -> ScriptedBackend<impl FnMut(usize, &str) -> String> {
    cyclic_backend(cycle.actions.clone())
}

/// Returns recorded replies in order; errors once they run out.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    responses: Vec<String>,
    next: usize,
}

impl ReplayBackend {
    pub fn new(responses: Vec<String>) -> Self {
        Self { responses, next: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.responses.len() - self.next
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&mut self, _prompt: &str, _temperature: f64) -> Result<String> {
        let r = self.responses.get(self.next).cloned().ok_or(Error::ReplayExhausted(self.responses.len()))?;
        self.next += 1;
        Ok(r)
    }
}

/// Records every successful reply of the wrapped backend.
#[derive(Debug, Clone)]
pub struct Recorder<B> {
    inner: B,
    pub responses: Vec<String>,
}

impl<B> Recorder<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, responses: Vec::new() }
    }

    pub fn into_parts(self) -> (B, Vec<String>) {
        (self.inner, self.responses)
    }
}

impl<B: ChatBackend> ChatBackend for Recorder<B> {
    fn complete(&mut self, prompt: &str, temperature: f64) -> Result<String> {
        let r = self.inner.complete(prompt, temperature)?;
        self.responses.push(r.clone());
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmEpisode {
    pub transcript: Transcript,
    /// Set when the backend failed and the episode stopped early.
    pub aborted: bool,
    pub error: Option<String>,
    /// Every reply received, in order (retries included).
    pub responses: Vec<String>,
    /// Steps at which the history buffer was cleared.
    pub clears: Vec<usize>,
    /// Steps at which no usable action arrived and a null step was recorded.
    pub fallbacks: Vec<usize>,
}

/// Drive `env` with replies from `backend` for up to `max_steps` steps.
pub fn run_llm_episode(
    mut env: Environment,
    backend: &mut dyn ChatBackend,
    cfg: &PromptConfig,
    max_steps: usize,
) -> Result<LlmEpisode> {
    cfg.validate()?;
    let mut buf = HistoryBuffer::new(cfg.n_ht);
    let mut window: Vec<f64> = Vec::new();
    let mut responses = Vec::new();
    let mut clears = Vec::new();
    let mut fallbacks = Vec::new();

    for n in 1..=max_steps {
        let summary = EnvSummary::from_env(&env);
        let prompt = build_prompt(cfg, &buf, &summary)?;
        let mut chosen = None;
        for attempt in 0..=cfg.max_retries {
            let text = if attempt == 0 { prompt.clone() } else { format!("{prompt} {CORRECTION}") };
            let reply = match backend.complete(&text, cfg.temperature) {
                Ok(r) => r,
                Err(e) => {
                    return Ok(LlmEpisode {
                        transcript: env.into_transcript(),
                        aborted: true,
                        error: Some(e.to_string()),
                        responses,
                        clears,
                        fallbacks,
                    })
                }
            };
            let parsed = parse_action(&reply);
            responses.push(reply);
            if let Ok(a) = parsed {
                if summary.choices.contains(&a) {
                    chosen = Some(a);
                    break;
                }
            }
        }
        let rec = match chosen {
            Some(a) => env.step(a)?,
            None => {
                fallbacks.push(n);
                env.hold()
            }
        };
        let shown = transform_displacement(env.reported_displacement(), cfg.x_min)?;
        buf.push(HistoryEntry { action: rec.action, displacement: shown });
        window.push(rec.dx_noisy);
        if window.len() > cfg.stall_window {
            window.remove(0);
        }
        if maybe_clear_history(&mut buf, &window, cfg) {
            clears.push(n);
            window.clear();
        }
    }
    Ok(LlmEpisode { transcript: env.into_transcript(), aborted: false, error: None, responses, clears, fallbacks })
}
