use microswim_core::env::{EnvConfig, Environment};
use microswim_core::experiment::{acquisition_step, SuccessCriterion};
use microswim_core::llm::{run_llm_episode, signature_backend, PromptConfig, Recorder, ReplayBackend};
use microswim_core::oracle::signature_cycle;
use microswim_core::{Direction, Error, ModelKind};

fn setups() -> Vec<(ModelKind, Direction)> {
    let mut v = Vec::new();
    for m in [ModelKind::Purcell, ModelKind::Ng] {
        for d in [Direction::PlusX, Direction::MinusX] {
            v.push((m, d));
        }
    }
    v
}

#[test]
fn scripted_signature_succeeds_and_matches_cycle_displacement() {
    for (m, d) in setups() {
        let cfg = EnvConfig { target_direction: d, ..EnvConfig::new(m) };
        let sig = signature_cycle(m, &cfg.params, d, cfg.initial_state).unwrap();
        let ep = run_llm_episode(
            Environment::new(cfg).unwrap(),
            &mut signature_backend(&sig),
            &PromptConfig::default_for(m, d),
            50,
        )
        .unwrap();
        let t = &ep.transcript;
        assert!(!ep.aborted);
        assert!(ep.fallbacks.is_empty());
        assert_eq!(acquisition_step(t, &sig, &SuccessCriterion::default()), Some(12));
        let expected = 12.5 * sig.dx_per_cycle;
        assert!((t.final_x() - expected).abs() <= 1e-6, "{m:?} {d:?}: {} vs {expected}", t.final_x());
        // Signed progress after every completed cycle.
        let sign = d.sign();
        for k in (4..=50).step_by(4) {
            let x = t.records[k - 1].x;
            assert!((sign * x - sign * (k / 4) as f64 * sig.dx_per_cycle).abs() < 1e-9);
        }
    }
}

#[test]
fn replay_reproduces_recorded_episode() {
    let m = ModelKind::Ng;
    let cfg = EnvConfig { zeta: 3.0, seed: 11, ..EnvConfig::new(m) };
    let sig = signature_cycle(m, &cfg.params, cfg.target_direction, cfg.initial_state).unwrap();
    let prompt = PromptConfig::default_for(m, cfg.target_direction);
    let mut rec = Recorder::new(signature_backend(&sig));
    let first = run_llm_episode(Environment::new(cfg).unwrap(), &mut rec, &prompt, 30).unwrap();
    let (_, responses) = rec.into_parts();
    assert_eq!(responses, first.responses);

    let mut replay = ReplayBackend::new(responses);
    let second = run_llm_episode(Environment::new(cfg).unwrap(), &mut replay, &prompt, 30).unwrap();
    assert_eq!(replay.remaining(), 0);
    let a = serde_json::to_string(&first.transcript).unwrap();
    let b = serde_json::to_string(&second.transcript).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exhausted_replay_aborts_with_partial_transcript() {
    let m = ModelKind::Purcell;
    let cfg = EnvConfig::new(m);
    let mut replay = ReplayBackend::new(vec!["DOF 2 ROC +1".into(), "DOF 1 ROC +1".into()]);
    let ep = run_llm_episode(Environment::new(cfg).unwrap(), &mut replay, &PromptConfig::default_for(m, Direction::PlusX), 10)
        .unwrap();
    assert!(ep.aborted);
    assert_eq!(ep.transcript.records.len(), 2);
    assert_eq!(ep.error, Some(Error::ReplayExhausted(2).to_string()));
}
