//! Batch experiment harness: runs every arm for every repetition, then writes
//! the per-checkpoint rows, a mean/standard-deviation summary and a metadata
//! sidecar.
//!
//! Output files, for `out = results.csv`:
//!
//! * `results.csv`: one row per arm x repetition x checkpoint, columns
//!   [`CSV_HEADER`], ordered by (arm, seed, step).
//! * `results.summary.csv`: mean and sample standard deviation of every
//!   numeric column per arm x checkpoint step.
//! * `results.meta`: `key=value` lines describing the run.

pub mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::agents::{run_id, run_trial, AgentConfig, Algorithm, CheckpointRow, Evaluation};
use crate::env::AnyEnv;
use crate::error::{Error, Result};
use crate::hopping::HOP_IMPL;
use crate::mdp::{value_iteration, QTable, State};

pub use config::{EnvKind, EnvSpec, ExperimentConfig};

pub const CSV_HEADER: &str =
    "run_id,arm,seed,step,sim_steps,hop_steps,pct_of_optimal,wall_ms,explored_states,propagation_updates";

pub const SUMMARY_HEADER: &str = "arm,step,n,sim_steps_mean,sim_steps_std,hop_steps_mean,hop_steps_std,pct_of_optimal_mean,pct_of_optimal_std,wall_ms_mean,wall_ms_std,explored_states_mean,explored_states_std,propagation_updates_mean,propagation_updates_std";

const ORACLE_TOL: f64 = 1e-10;

/// Final learning state of one arm x repetition.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub arm: Algorithm,
    pub seed: u64,
    pub rows: Vec<CheckpointRow>,
    pub q: QTable,
    /// Visited states in order of first visit.
    pub explored: Vec<State>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub evaluation: Evaluation,
    pub trials: Vec<TrialOutcome>,
}

impl ExperimentOutput {
    /// Rows of every trial in (arm, seed, step) order.
    pub fn rows(&self) -> Vec<CheckpointRow> {
        let mut rows: Vec<_> = self.trials.iter().flat_map(|t| t.rows.clone()).collect();
        rows.sort_by_key(|r| (r.arm, r.seed, r.step));
        rows
    }
}

/// Value-iteration optimum of `env` under the greedy evaluation protocol.
pub fn oracle(env: &AnyEnv, gamma: f64, horizon: usize) -> Result<(QTable, Evaluation)> {
    let optimal = value_iteration(env, gamma, ORACLE_TOL)?;
    let evaluation = Evaluation::from_optimal(env, &optimal, horizon)?;
    Ok((optimal, evaluation))
}

/// Runs every trial in memory. Trials execute in parallel, each with its own
/// environment, table and generator.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let env = cfg.env.build()?;
    let (_, evaluation) = oracle(&env, cfg.oracle_gamma, cfg.eval_horizon)?;

    let jobs: Vec<AgentConfig> = cfg
        .arms
        .iter()
        .flat_map(|arm| {
            (0..cfg.repetitions).map(move |rep| AgentConfig {
                seed: cfg.base_seed + rep,
                ..*arm
            })
        })
        .collect();

    let run = || -> Result<Vec<TrialOutcome>> {
        jobs.par_iter()
            .map(|&agent_cfg| {
                let trial = run_trial(agent_cfg, env.clone(), &cfg.checkpoints, &evaluation)?;
                Ok(TrialOutcome {
                    arm: agent_cfg.algorithm,
                    seed: agent_cfg.seed,
                    rows: trial.rows,
                    q: trial.agent.q_table().clone(),
                    explored: trial.agent.state_stats().visited().to_vec(),
                })
            })
            .collect()
    };
    let mut trials = if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::config("threads", e.to_string()))?
            .install(run)?
    } else {
        run()?
    };
    trials.sort_by_key(|t| (t.arm, t.seed));
    Ok(ExperimentOutput { evaluation, trials })
}

/// Runs the experiment and writes the row CSV, summary CSV and metadata.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let output = run_trials(cfg)?;
    let rows = output.rows();
    write_rows(&cfg.out, &rows)?;
    write_summary(&sibling(&cfg.out, "summary.csv"), &summarize(&rows))?;
    write_meta(&sibling(&cfg.out, "meta"), cfg, &output.evaluation)?;
    if let Some(dir) = &cfg.save_qtables {
        fs::create_dir_all(dir)?;
        for t in &output.trials {
            let path = dir.join(format!("q_{}.csv", run_id(t.arm, t.seed)));
            write_qtable(&path, &t.q, &t.explored)?;
        }
    }
    Ok(output)
}

/// `results.csv` -> `results.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn format_row(r: &CheckpointRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{:.3},{},{}",
        r.run_id,
        r.arm,
        r.seed,
        r.step,
        r.sim_steps,
        r.hop_steps,
        r.pct_of_optimal,
        r.wall_ms,
        r.explored_states,
        r.propagation_updates
    )
}

pub fn write_rows_to<W: Write>(mut out: W, rows: &[CheckpointRow]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", format_row(r))?;
    }
    out.flush()
}

pub fn write_rows(path: &Path, rows: &[CheckpointRow]) -> Result<()> {
    Ok(write_rows_to(create(path)?, rows)?)
}

/// Mean and sample standard deviation of one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub arm: Algorithm,
    pub step: u64,
    pub n: usize,
    pub sim_steps: MeanStd,
    pub hop_steps: MeanStd,
    pub pct_of_optimal: MeanStd,
    pub wall_ms: MeanStd,
    pub explored_states: MeanStd,
    pub propagation_updates: MeanStd,
}

/// Groups rows by (arm, step) and averages every numeric column.
pub fn summarize(rows: &[CheckpointRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Algorithm, u64), Vec<&CheckpointRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.arm, r.step)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((arm, step), group)| {
            let col = |f: &dyn Fn(&CheckpointRow) -> f64| {
                MeanStd::of(&group.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            SummaryRow {
                arm,
                step,
                n: group.len(),
                sim_steps: col(&|r| r.sim_steps as f64),
                hop_steps: col(&|r| r.hop_steps as f64),
                pct_of_optimal: col(&|r| r.pct_of_optimal),
                wall_ms: col(&|r| r.wall_ms),
                explored_states: col(&|r| r.explored_states as f64),
                propagation_updates: col(&|r| r.propagation_updates as f64),
            }
        })
        .collect()
}

pub fn write_summary_to<W: Write>(mut out: W, summary: &[SummaryRow]) -> io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for s in summary {
        write!(out, "{},{},{}", s.arm, s.step, s.n)?;
        for c in [
            s.sim_steps,
            s.hop_steps,
            s.pct_of_optimal,
            s.wall_ms,
            s.explored_states,
            s.propagation_updates,
        ] {
            write!(out, ",{},{}", c.mean, c.std)?;
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn write_summary(path: &Path, summary: &[SummaryRow]) -> Result<()> {
    Ok(write_summary_to(create(path)?, summary)?)
}

fn write_meta(path: &Path, cfg: &ExperimentConfig, eval: &Evaluation) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "hop_impl={HOP_IMPL}")?;
    writeln!(out, "env={}", cfg.env_kind)?;
    writeln!(
        out,
        "arms={}",
        cfg.arms
            .iter()
            .map(|a| a.algorithm.name())
            .collect::<Vec<_>>()
            .join(",")
    )?;
    writeln!(out, "reps={}", cfg.repetitions)?;
    writeln!(out, "base_seed={}", cfg.base_seed)?;
    writeln!(out, "steps={}", cfg.arms[0].max_steps)?;
    writeln!(out, "eval_horizon={}", eval.horizon)?;
    writeln!(out, "optimum_per_step={}", eval.optimum)?;
    let a = &cfg.arms[0];
    writeln!(out, "agent.gamma={}", a.gamma)?;
    writeln!(out, "agent.alpha={}", a.alpha)?;
    writeln!(out, "agent.epsilon_greedy={}", a.epsilon_greedy)?;
    writeln!(out, "agent.epsilon_propagate={}", a.epsilon_propagate)?;
    writeln!(out, "hop.prune_threshold={}", a.hop.prune_threshold)?;
    writeln!(out, "hop.target_temperature={}", a.hop.target_temperature)?;
    out.flush()?;
    Ok(())
}

/// Maximum Q-value of every explored state, sorted in descending order.
pub fn qvalue_distribution(q: &QTable, explored: &[State]) -> Vec<f64> {
    let unique: BTreeSet<State> = explored.iter().copied().collect();
    let mut values: Vec<f64> = unique.into_iter().map(|s| q.max_q(s)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Writes the rows of the explored states as `state,action,value`.
pub fn write_qtable(path: &Path, q: &QTable, explored: &[State]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "state,action,value")?;
    let unique: BTreeSet<State> = explored.iter().copied().collect();
    for s in unique {
        for (a, v) in q.row(s).iter().enumerate() {
            writeln!(out, "{},{},{}", s, a, v)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_qtable`]: per-state rows keyed by state.
pub fn read_qtable(path: &Path) -> Result<BTreeMap<State, Vec<f64>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: BTreeMap<State, Vec<f64>> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = || {
            Error::config(
                path.display().to_string(),
                format!("line {}: expected state,action,value", lineno + 1),
            )
        };
        let mut parts = line.split(',');
        let s: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let a: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let v: f64 = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let row = rows.entry(State(s)).or_default();
        if row.len() <= a {
            row.resize(a + 1, f64::NEG_INFINITY);
        }
        row[a] = v;
    }
    Ok(rows)
}

/// Sorted maximum Q-values of a saved table.
pub fn distribution_from_saved(rows: &BTreeMap<State, Vec<f64>>) -> Vec<f64> {
    let mut values: Vec<f64> = rows
        .values()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

pub fn write_distribution_to<W: Write>(mut out: W, values: &[f64]) -> io::Result<()> {
    writeln!(out, "rank,max_q")?;
    for (rank, v) in values.iter().enumerate() {
        writeln!(out, "{},{}", rank + 1, v)?;
    }
    out.flush()
}
