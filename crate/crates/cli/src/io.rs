//! File formats: transcript JSON Lines, run and summary CSV, recorded replies.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use microswim_core::env::{EnvConfig, StepRecord, Transcript, TRANSCRIPT_SCHEMA_VERSION};
use microswim_core::experiment::{aggregate, Aggregate, RunStats};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// First line of every transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptHeader {
    pub schema_version: u32,
    pub condition: String,
    pub run_id: usize,
    pub seed: u64,
    /// The backend failed and the episode stopped early.
    pub aborted: bool,
    pub config: EnvConfig,
}

pub fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_transcript(path: &Path, header: &TranscriptHeader, t: &Transcript) -> Result<(), CliError> {
    create_parent(path)?;
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = |v: String| writeln!(w, "{v}").map_err(|e| CliError::io(path, e));
    line(serde_json::to_string(header)?)?;
    for r in &t.records {
        line(serde_json::to_string(r)?)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_transcript(path: &Path) -> Result<(TranscriptHeader, Transcript), CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let bad = |line: usize, msg: String| CliError::Format { path: path.to_path_buf(), line, msg };
    let first = lines.next().ok_or_else(|| bad(1, "empty file".into()))?.map_err(|e| CliError::io(path, e))?;
    let header: TranscriptHeader = serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
    if header.schema_version != TRANSCRIPT_SCHEMA_VERSION {
        return Err(bad(1, format!("unsupported schema_version {}", header.schema_version)));
    }
    let mut records = Vec::new();
    for (i, l) in lines.enumerate() {
        let l = l.map_err(|e| CliError::io(path, e))?;
        if l.trim().is_empty() {
            continue;
        }
        let r: StepRecord = serde_json::from_str(&l).map_err(|e| bad(i + 2, e.to_string()))?;
        records.push(r);
    }
    let t = Transcript { config: header.config, records };
    Ok((header, t))
}

/// One row per run: `<condition column>, run_id, seed, X_final, success`.
pub fn write_runs_csv(path: &Path, condition_column: &str, rows: &[(String, RunStats)]) -> Result<(), CliError> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([condition_column, "run_id", "seed", "X_final", "success"])?;
    for (cond, r) in rows {
        w.write_record([cond.clone(), r.run_id.to_string(), r.seed.to_string(), r.x_final.to_string(), r.success.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<(String, RunStats)>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |msg: &str| CliError::Format { path: path.to_path_buf(), line, msg: msg.into() };
        let stats = RunStats {
            run_id: field(1).parse().map_err(|_| bad("run_id"))?,
            seed: field(2).parse().map_err(|_| bad("seed"))?,
            x_final: field(3).parse().map_err(|_| bad("X_final"))?,
            success: field(4).parse().map_err(|_| bad("success"))?,
        };
        out.push((field(0).to_string(), stats));
    }
    Ok(out)
}

/// Group rows by condition, keeping first-seen order.
pub fn summarize(rows: &[(String, RunStats)]) -> Vec<(String, Aggregate)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<RunStats>> = BTreeMap::new();
    for (c, r) in rows {
        if !groups.contains_key(c) {
            order.push(c.clone());
        }
        groups.entry(c.clone()).or_default().push(r.clone());
    }
    order
        .into_iter()
        .filter_map(|c| {
            let a = aggregate(&groups[&c])?;
            Some((c, a))
        })
        .collect()
}

/// `<condition column>, runs, mean_X, p`.
pub fn write_summary_csv(path: &Path, condition_column: &str, rows: &[(String, Aggregate)]) -> Result<(), CliError> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([condition_column, "runs", "mean_X", "p"])?;
    for (cond, a) in rows {
        w.write_record([cond.clone(), a.runs.to_string(), a.mean_x.to_string(), a.p.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Replies recorded for one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordedRun {
    pub condition: String,
    pub run_id: usize,
    /// Where the replies came from (`http`, `scripted`, `synthetic`, ...).
    pub source: String,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayStore {
    runs: BTreeMap<(String, usize), Vec<String>>,
}

impl ReplayStore {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut runs = BTreeMap::new();
        for (i, l) in text.lines().enumerate() {
            if l.trim().is_empty() {
                continue;
            }
            let r: RecordedRun = serde_json::from_str(l)
                .map_err(|e| CliError::Format { path: path.to_path_buf(), line: i + 1, msg: e.to_string() })?;
            runs.insert((r.condition, r.run_id), r.responses);
        }
        Ok(Self { runs })
    }

    /// Replies for a run; empty when nothing was recorded.
    pub fn get(&self, condition: &str, run_id: usize) -> Vec<String> {
        self.runs.get(&(condition.to_string(), run_id)).cloned().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }
}

pub fn write_recordings(path: &Path, runs: &[RecordedRun]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in runs {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_text(path, &text)
}
