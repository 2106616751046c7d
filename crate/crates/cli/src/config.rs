//! Run configuration: per-model defaults, overlaid by a TOML file, overlaid by flags.

use std::path::Path;

use microswim_core::env::EnvConfig;
use microswim_core::experiment::{validate_ablation_mask, SuccessCriterion};
use microswim_core::llm::PromptConfig;
use microswim_core::qlearning::QConfig;
use microswim_core::{Direction, ModelKind};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;
use crate::http::HttpConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub runs: usize,
    /// Steps per LLM episode.
    pub steps: usize,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { runs: 10, steps: 50, jobs: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub prompt: PromptConfig,
    pub q: QConfig,
    pub success: SuccessCriterion,
    pub sweep: SweepConfig,
    pub http: HttpConfig,
}

impl RunConfig {
    pub fn defaults(model: ModelKind, direction: Direction) -> Self {
        Self {
            env: EnvConfig { target_direction: direction, ..EnvConfig::new(model) },
            prompt: PromptConfig::default_for(model, direction),
            q: QConfig::default(),
            success: SuccessCriterion::default(),
            sweep: SweepConfig::default(),
            http: HttpConfig::default(),
        }
    }

    /// Build from defaults and an optional TOML document. `model` and `direction`
    /// take precedence over the document's `env` values.
    pub fn resolve(doc: Option<&str>, model: Option<ModelKind>, direction: Option<Direction>) -> Result<Self, CliError> {
        let file: Table = match doc {
            Some(text) => text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?,
            None => Table::new(),
        };
        let env = file.get("env").and_then(Value::as_table);
        let pick = |key: &str| env.and_then(|t| t.get(key)).cloned();
        let model = match (model, pick("model")) {
            (Some(m), _) => m,
            (None, Some(v)) => v.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?,
            (None, None) => ModelKind::Ng,
        };
        let direction = match (direction, pick("target_direction")) {
            (Some(d), _) => d,
            (None, Some(v)) => v.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?,
            (None, None) => Direction::PlusX,
        };
        let mut base = Value::try_from(Self::defaults(model, direction)).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut base, Value::Table(file));
        let mut cfg: Self = base.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.env.model = model;
        cfg.env.target_direction = direction;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, model: Option<ModelKind>, direction: Option<Direction>) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?),
            None => None,
        };
        Self::resolve(text.as_deref(), model, direction)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.env.validate()?;
        self.prompt.validate()?;
        self.q.validate()?;
        validate_ablation_mask(&self.prompt.ablation_mask)?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::defaults(ModelKind::Purcell, Direction::MinusX);
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::resolve(Some(&text), None, None).unwrap(), cfg);
    }

    #[test]
    fn partial_overlay() {
        let doc = "[env]\nmodel = \"purcell\"\nzeta = 1.5\n[prompt]\nn_ht = 5\n[q]\nalpha = 0.25\n";
        let cfg = RunConfig::resolve(Some(doc), None, None).unwrap();
        assert_eq!(cfg.env.model, ModelKind::Purcell);
        assert_eq!(cfg.env.params, microswim_core::ModelParams::purcell());
        assert_eq!(cfg.env.zeta, 1.5);
        assert_eq!(cfg.prompt.n_ht, 5);
        assert_eq!(cfg.q.alpha, 0.25);
        assert_eq!(cfg.q.gamma, QConfig::default().gamma);
    }

    #[test]
    fn flags_override_file_model() {
        let doc = "[env]\nmodel = \"purcell\"\n";
        let cfg = RunConfig::resolve(Some(doc), Some(ModelKind::Ng), Some(Direction::MinusX)).unwrap();
        assert_eq!(cfg.env.model, ModelKind::Ng);
        assert_eq!(cfg.prompt.n_ht, 6);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(RunConfig::resolve(Some("[env]\nzetta = 1.0\n"), None, None), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::resolve(Some("[[nonsense"), None, None), Err(CliError::Config(_))));
    }

    #[test]
    fn two_sentence_mask_is_usage_error() {
        let doc = "[prompt]\nablation_mask = [\"S2\", \"S3\"]\n";
        let cfg = RunConfig::resolve(Some(doc), None, None).unwrap();
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }
}
