//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use microswim_core::env::{EnvConfig, Environment, TRANSCRIPT_SCHEMA_VERSION};
use microswim_core::experiment::{ablation_plan, validate_ablation_mask, RunStats};
use microswim_core::oracle::{calibrate_convention, enumerate_cycles, signature_cycle, Convention, RftConfig};
use microswim_core::{Action, Direction, ModelKind, ModelParams};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::http::RateLimiter;
use crate::io::{
    summarize, write_recordings, write_runs_csv, write_summary_csv, write_text, write_transcript, RecordedRun,
    ReplayStore, TranscriptHeader,
};
use crate::runner::{llm_sweep, q_runs, BackendSpec, Condition, LlmRun};
use crate::{BackendArg, BackendOpts, Cli, Command};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), cli.model.map(Into::into), cli.direction)?;
    if let Some(s) = cli.seed {
        cfg.env.seed = s;
        cfg.q.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.sweep.jobs = j;
    }
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Simulate { cycle, cycles, zeta } => {
            if let Some(z) = zeta {
                cfg.env.zeta = *z;
            }
            finish_config(&cfg, out)?;
            simulate(&cfg, out, cycle, *cycles)
        }
        Command::Oracle { max_len, segments } => {
            finish_config(&cfg, out)?;
            oracle(out, *max_len, *segments)
        }
        Command::TrainQ { runs } => {
            finish_config(&cfg, out)?;
            train_q(&cfg, out, *runs)
        }
        Command::TrainLlm { opts, omit } => {
            validate_ablation_mask(omit)?;
            if !omit.is_empty() {
                cfg.prompt.ablation_mask = omit.clone();
            }
            apply_opts(&mut cfg, opts);
            finish_config(&cfg, out)?;
            let key = cfg.prompt.ablation_mask.first().map_or("full".to_string(), |s| s.to_string());
            let cond = Condition { key, env: cfg.env, prompt: cfg.prompt.clone() };
            sweep(&cfg, out, opts, "condition", vec![cond])
        }
        Command::NoiseSweep { opts, levels } => {
            apply_opts(&mut cfg, opts);
            finish_config(&cfg, out)?;
            let levels: Vec<f64> = parse_list(levels, "levels")?;
            let mut conds = Vec::new();
            for z in levels {
                let env = EnvConfig { zeta: z, ..cfg.env };
                env.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                conds.push(Condition { key: z.to_string(), env, prompt: cfg.prompt.clone() });
            }
            sweep(&cfg, out, opts, "zeta", conds)
        }
        Command::Ablate { opts, sentences } => {
            apply_opts(&mut cfg, opts);
            finish_config(&cfg, out)?;
            let conds = ablation_plan(sentences)?
                .into_iter()
                .map(|s| {
                    let mut prompt = cfg.prompt.clone();
                    prompt.ablation_mask = s.into_iter().collect();
                    let key = s.map_or("none".to_string(), |s| s.to_string());
                    Condition { key, env: cfg.env, prompt }
                })
                .collect();
            sweep(&cfg, out, opts, "omitted_sentence", conds)
        }
        Command::NhtSweep { opts, values } => {
            apply_opts(&mut cfg, opts);
            finish_config(&cfg, out)?;
            let values: Vec<usize> = parse_list(values, "values")?;
            let conds = values
                .into_iter()
                .map(|n| {
                    let mut prompt = cfg.prompt.clone();
                    prompt.n_ht = n;
                    Condition { key: n.to_string(), env: cfg.env, prompt }
                })
                .collect();
            sweep(&cfg, out, opts, "n_ht", conds)
        }
    }
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Usage(format!("--{what}: cannot parse {s:?}"))))
        .collect()
}

fn apply_opts(cfg: &mut RunConfig, opts: &BackendOpts) {
    if let Some(r) = opts.runs {
        cfg.sweep.runs = r;
    }
    if let Some(s) = opts.steps {
        cfg.sweep.steps = s;
    }
    if let Some(z) = opts.zeta {
        cfg.env.zeta = z;
    }
}

fn finish_config(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    write_text(&out.join("config.resolved.toml"), &cfg.to_toml()?)
}

fn fmt_actions(actions: &[Action]) -> String {
    actions.iter().map(|a| a.to_string()).collect::<Vec<_>>().join("; ")
}

fn simulate(cfg: &RunConfig, out: &Path, cycle: &str, cycles: usize) -> Result<(), CliError> {
    let env_cfg = cfg.env;
    let sig = signature_cycle(env_cfg.model, &env_cfg.params, env_cfg.target_direction, env_cfg.initial_state)?;
    let actions: Vec<Action> = match cycle {
        "signature" => sig.actions.clone(),
        "reverse" => sig.reversed().actions,
        ids => parse_list::<usize>(ids, "cycle")?
            .into_iter()
            .map(|id| Action::from_id(id).ok_or_else(|| CliError::Usage(format!("--cycle: no action with id {id}"))))
            .collect::<Result<_, _>>()?,
    };
    if actions.is_empty() {
        return Err(CliError::Usage("--cycle: no actions given".into()));
    }
    let mut env = Environment::new(env_cfg)?;
    for a in actions.iter().cycle().take(actions.len() * cycles) {
        if a.is_null() {
            env.hold();
        } else {
            env.step(*a)?;
        }
    }
    let x = env.x();
    let reported = env.reported_displacement();
    let t = env.into_transcript();
    let stats = RunStats::from_transcript(0, env_cfg.seed, &t, &sig, &cfg.success);
    let header = header("simulate", 0, env_cfg.seed, false, env_cfg);
    write_transcript(&out.join("transcript.jsonl"), &header, &t)?;
    write_runs_csv(&out.join("stats.csv"), "condition", &[("simulate".into(), stats.clone())])?;
    println!("model {} direction {} steps {}", env_cfg.model.name(), env_cfg.target_direction.name(), t.records.len());
    println!("actions: {}", fmt_actions(&actions));
    println!("X = {x}");
    println!("X (reported) = {reported}");
    println!("signature dX per cycle = {}", sig.dx_per_cycle);
    println!("success = {}", stats.success);
    Ok(())
}

fn oracle(out: &Path, max_len: usize, segments: usize) -> Result<(), CliError> {
    let rft = RftConfig::with_segments(segments);
    let report = calibrate_convention(&rft)?;
    let conv_path = out.join("convention.csv");
    let mut w = csv::Writer::from_path(&conv_path)?;
    let mut head = vec!["probe".to_string(), "d1".into(), "d2".into(), "dc".into(), "dd1".into(), "dd2".into()];
    head.extend(Convention::ALL.iter().map(|c| format!("err_{}_{}", c.sign_d1, c.sign_d2)));
    head.push("discriminating".into());
    w.write_record(&head)?;
    for (i, r) in report.rows.iter().enumerate() {
        let mut rec = vec![
            i.to_string(),
            r.state.d1.to_string(),
            r.state.d2.to_string(),
            r.state.dc.to_string(),
            r.rates.dd1.to_string(),
            r.rates.dd2.to_string(),
        ];
        rec.extend(r.errors.iter().map(|e| e.to_string()));
        rec.push(r.discriminating.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(&conv_path, e))?;
    println!(
        "convention: sign_d1 {} sign_d2 {} (max errors {:?})",
        report.matched.sign_d1, report.matched.sign_d2, report.max_errors
    );

    let cyc_path = out.join("cycles.csv");
    let mut w = csv::Writer::from_path(&cyc_path)?;
    w.write_record(["model", "direction", "rank", "start", "len", "actions", "dx_per_cycle", "dx_per_step"])?;
    for model in [ModelKind::Purcell, ModelKind::Ng] {
        let params = ModelParams::default_for(model);
        for dir in [Direction::PlusX, Direction::MinusX] {
            let list = enumerate_cycles(model, &params, max_len, dir)?;
            if let Some(top) = list.first() {
                println!(
                    "{} {}: {} (dX per cycle {})",
                    model.name(),
                    dir.name(),
                    fmt_actions(&top.actions),
                    top.dx_per_cycle
                );
            }
            for (rank, c) in list.iter().enumerate() {
                w.write_record([
                    model.name().to_string(),
                    dir.name().to_string(),
                    (rank + 1).to_string(),
                    c.start.index().to_string(),
                    c.len().to_string(),
                    fmt_actions(&c.actions),
                    c.dx_per_cycle.to_string(),
                    (c.dx_per_cycle / c.len() as f64).to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(&cyc_path, e))
}

fn header(condition: &str, run_id: usize, seed: u64, aborted: bool, config: EnvConfig) -> TranscriptHeader {
    TranscriptHeader { schema_version: TRANSCRIPT_SCHEMA_VERSION, condition: condition.into(), run_id, seed, aborted, config }
}

fn train_q(cfg: &RunConfig, out: &Path, runs: usize) -> Result<(), CliError> {
    let results = q_runs(&cfg.env, &cfg.q, runs, cfg.q.seed, cfg.sweep.jobs)?;
    let csv_path = out.join("q_runs.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["run_id", "seed", "acquisition_step", "X_final"])?;
    let mut tables = Vec::new();
    for r in &results {
        let acq = r.outcome.acquisition_step.map_or(String::new(), |n| n.to_string());
        w.write_record([r.run_id.to_string(), r.seed.to_string(), acq, r.outcome.transcript.signed_final_x().to_string()])?;
        let path = out.join("transcripts").join("q").join(format!("run{}.jsonl", r.run_id));
        write_transcript(&path, &header("q", r.run_id, r.seed, false, r.outcome.transcript.config), &r.outcome.transcript)?;
        tables.push(serde_json::json!({ "run_id": r.run_id, "seed": r.seed, "table": r.outcome.table }));
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;
    write_text(&out.join("q_tables.json"), &serde_json::to_string_pretty(&tables)?)?;

    let mut steps: Vec<usize> = results.iter().filter_map(|r| r.outcome.acquisition_step).collect();
    steps.sort_unstable();
    let acquired = steps.len();
    println!("{} of {} runs locked onto the signature gait", acquired, results.len());
    if acquired > 0 {
        println!("median acquisition step among them: {}", steps[acquired / 2]);
    }
    Ok(())
}

fn backend_spec(cfg: &RunConfig, opts: &BackendOpts) -> Result<BackendSpec, CliError> {
    Ok(match opts.backend {
        BackendArg::Scripted => BackendSpec::Scripted,
        BackendArg::Random => BackendSpec::Random,
        BackendArg::Replay => {
            let path = opts.replay.as_ref().ok_or_else(|| CliError::Usage("--backend replay needs --replay <file>".into()))?;
            BackendSpec::Replay(Arc::new(ReplayStore::load(path)?))
        }
        BackendArg::Http => {
            let limiter = cfg.http.requests_per_minute.map(|n| Arc::new(RateLimiter::per_minute(n)));
            BackendSpec::Http(cfg.http.clone(), limiter)
        }
    })
}

pub fn transcript_path(out: &Path, column: &str, key: &str, run_id: usize) -> PathBuf {
    out.join("transcripts").join(format!("{column}={key}")).join(format!("run{run_id}.jsonl"))
}

fn sweep(cfg: &RunConfig, out: &Path, opts: &BackendOpts, column: &str, conds: Vec<Condition>) -> Result<(), CliError> {
    let spec = backend_spec(cfg, opts)?;
    let runs: Vec<LlmRun> =
        llm_sweep(&conds, cfg.sweep.runs, cfg.sweep.steps, cfg.env.seed, &spec, &cfg.success, cfg.sweep.jobs)?;
    let mut rows = Vec::with_capacity(runs.len());
    let mut recordings = Vec::with_capacity(runs.len());
    for r in &runs {
        let ep = &r.episode;
        if let Some(e) = &ep.error {
            eprintln!("warning: {column}={} run {} aborted: {e}", r.condition, r.stats.run_id);
        }
        let h = header(&r.condition, r.stats.run_id, r.seed, ep.aborted, ep.transcript.config);
        write_transcript(&transcript_path(out, column, &r.condition, r.stats.run_id), &h, &ep.transcript)?;
        rows.push((r.condition.clone(), r.stats.clone()));
        recordings.push(RecordedRun {
            condition: r.condition.clone(),
            run_id: r.stats.run_id,
            source: spec.name().into(),
            responses: ep.responses.clone(),
        });
    }
    write_runs_csv(&out.join("runs.csv"), column, &rows)?;
    let summary = summarize(&rows);
    write_summary_csv(&out.join("summary.csv"), column, &summary)?;
    write_recordings(&out.join("responses.jsonl"), &recordings)?;
    println!("{column:>16} {:>5} {:>14} {:>6}", "runs", "mean X", "p");
    for (c, a) in &summary {
        println!("{c:>16} {:>5} {:>14.6} {:>6.2}", a.runs, a.mean_x, a.p);
    }
    Ok(())
}
