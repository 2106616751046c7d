use std::cell::RefCell;
use std::fs;
use std::path::PathBuf;
use std::rc::Rc;

use microswim_core::env::{EnvConfig, Environment};
use microswim_core::llm::{numeric_tokens_ok, run_llm_episode, PromptConfig, ScriptedBackend};
use microswim_core::oracle::signature_cycle;
use microswim_core::{Direction, ModelKind};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/prompts")
}

/// Prompts seen by a signature-following controller: with an empty buffer, and with
/// a buffer holding `n_ht` entries.
fn prompts(model: ModelKind, direction: Direction) -> (PromptConfig, String, String) {
    let env_cfg = EnvConfig { target_direction: direction, ..EnvConfig::new(model) };
    let sig = signature_cycle(model, &env_cfg.params, direction, env_cfg.initial_state).unwrap();
    let cfg = PromptConfig::default_for(model, direction);
    let seen = Rc::new(RefCell::new(Vec::new()));
    let log = Rc::clone(&seen);
    let mut backend = ScriptedBackend::new(move |k, p: &str| {
        log.borrow_mut().push(p.to_string());
        sig.actions[k % sig.len()].to_string()
    });
    let ep = run_llm_episode(Environment::new(env_cfg).unwrap(), &mut backend, &cfg, cfg.n_ht + 1).unwrap();
    assert!(ep.clears.is_empty());
    let seen = seen.borrow();
    (cfg.clone(), seen[0].clone(), seen[cfg.n_ht].clone())
}

fn cases() -> Vec<(ModelKind, Direction)> {
    let mut v = Vec::new();
    for m in [ModelKind::Purcell, ModelKind::Ng] {
        for d in [Direction::PlusX, Direction::MinusX] {
            v.push((m, d));
        }
    }
    v
}

fn name(m: ModelKind, d: Direction, n_ht: usize, fill: &str) -> String {
    let dir = match d {
        Direction::PlusX => "px",
        Direction::MinusX => "mx",
    };
    format!("{}_{dir}_nht{n_ht}_{fill}.txt", m.name())
}

#[test]
fn golden_prompts() {
    let update = std::env::var_os("UPDATE_FIXTURES").is_some();
    for (m, d) in cases() {
        let (cfg, empty, full) = prompts(m, d);
        for (fill, text) in [("empty", empty), ("full", full)] {
            let path = fixture_dir().join(name(m, d, cfg.n_ht, fill));
            if update {
                fs::create_dir_all(fixture_dir()).unwrap();
                fs::write(&path, &text).unwrap();
            }
            let golden = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(text, golden, "{}", path.display());
            assert!(numeric_tokens_ok(&text));
        }
    }
}

#[test]
fn full_buffer_lists_every_entry() {
    for (m, d) in cases() {
        let (cfg, empty, full) = prompts(m, d);
        assert!(empty.contains("The latest 0 records"));
        assert!(full.contains(&format!("The latest {} records", cfg.n_ht)));
        assert_eq!(full.matches(" gave displacement ").count(), cfg.n_ht);
        assert!(full.len() > empty.len());
    }
}
