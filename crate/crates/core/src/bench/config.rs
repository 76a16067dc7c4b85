//! Experiment configuration.
//!
//! The file format is flat `key = value` text. Blank lines and lines starting
//! with `#` are ignored; keys may carry a dotted section prefix
//! (`agent.gamma`). Every key can also be set on the command line as
//! `--key value`. Recognised keys:
//!
//! | key                       | default                                     |
//! |---------------------------|---------------------------------------------|
//! | `env`                     | `chain` (`chain`, `crawler`, `crawler-full`)|
//! | `arm`                     | all three arms, comma separated             |
//! | `steps`                   | 45000                                       |
//! | `reps`                    | 10                                          |
//! | `seed`                    | 1                                           |
//! | `out`                     | `results.csv`                               |
//! | `checkpoint_every`        | 1000                                        |
//! | `eval_horizon`            | 200 for the chain, 100 for the crawler      |
//! | `threads`                 | 0 (one per core)                            |
//! | `save_qtables`            | unset; directory for final Q-tables         |
//! | `agent.gamma`             | 0.9                                         |
//! | `agent.alpha`             | 1.0                                         |
//! | `agent.epsilon_greedy`    | 0.1                                         |
//! | `agent.epsilon_propagate` | 1e-6                                        |
//! | `agent.dedup`             | true                                        |
//! | `hop.prune_threshold`     | 0.5                                         |
//! | `hop.target_temperature`  | 1.0                                         |
//! | `oracle.gamma`            | same as `agent.gamma`                       |
//! | `chain.gates`             | `1,2,1,2,1,2,1,2,1,2,1`                     |
//! | `chain.terminal_reward`   | 1.0                                         |
//! | `crawler.upper_bins`      | 5 (`crawler`) or 9 (`crawler-full`)         |
//! | `crawler.lower_bins`      | 5 (`crawler`) or 13 (`crawler-full`)        |
//! | `crawler.upper_min/max`   | -pi/6, pi/2                                 |
//! | `crawler.lower_min/max`   | 0, 5pi/6                                    |
//! | `crawler.upper_len`       | 2                                           |
//! | `crawler.lower_len`       | 2                                           |
//! | `crawler.body_len`        | 4                                           |
//! | `crawler.hip_height`      | 2                                           |

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::agents::{checkpoint_schedule, AgentConfig, Algorithm};
use crate::env::{AnyEnv, ChainMdp, ChainMdpSpec, Crawler, CrawlerSpec};
use crate::error::{Error, Result};

pub const KEYS: &[&str] = &[
    "env",
    "arm",
    "steps",
    "reps",
    "seed",
    "out",
    "checkpoint_every",
    "eval_horizon",
    "threads",
    "save_qtables",
    "agent.gamma",
    "agent.alpha",
    "agent.epsilon_greedy",
    "agent.epsilon_propagate",
    "agent.dedup",
    "hop.prune_threshold",
    "hop.target_temperature",
    "oracle.gamma",
    "chain.gates",
    "chain.terminal_reward",
    "crawler.upper_bins",
    "crawler.lower_bins",
    "crawler.upper_min",
    "crawler.upper_max",
    "crawler.lower_min",
    "crawler.lower_max",
    "crawler.upper_len",
    "crawler.lower_len",
    "crawler.body_len",
    "crawler.hip_height",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Chain,
    Crawler,
    CrawlerFull,
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(EnvKind::Chain),
            "crawler" => Ok(EnvKind::Crawler),
            "crawler-full" => Ok(EnvKind::CrawlerFull),
            other => Err(Error::config(
                "env",
                format!("unknown environment `{other}` (expected chain, crawler or crawler-full)"),
            )),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::Chain => "chain",
            EnvKind::Crawler => "crawler",
            EnvKind::CrawlerFull => "crawler-full",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Chain(ChainMdpSpec),
    Crawler(CrawlerSpec),
}

impl EnvSpec {
    pub fn build(&self) -> Result<AnyEnv> {
        Ok(match self {
            EnvSpec::Chain(spec) => ChainMdp::new(spec.clone())?.into(),
            EnvSpec::Crawler(spec) => Crawler::new(spec.clone())?.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env_kind: EnvKind,
    pub env: EnvSpec,
    /// One config per arm; `seed` is replaced by `base_seed + repetition`.
    pub arms: Vec<AgentConfig>,
    pub repetitions: u64,
    pub checkpoints: Vec<u64>,
    pub base_seed: u64,
    pub out: PathBuf,
    pub eval_horizon: usize,
    pub oracle_gamma: f64,
    pub threads: usize,
    pub save_qtables: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(Error::config("reps", "must be at least 1"));
        }
        if self.arms.is_empty() {
            return Err(Error::config("arm", "at least one arm is required"));
        }
        for arm in &self.arms {
            arm.validate()?;
        }
        if !(0.0..1.0).contains(&self.oracle_gamma) {
            return Err(Error::config("oracle.gamma", "must be in [0, 1)"));
        }
        if self.eval_horizon == 0 {
            return Err(Error::config("eval_horizon", "must be positive"));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "checkpoint_every",
                "checkpoints must increase",
            ));
        }
        let max_steps = self.arms[0].max_steps;
        if self.checkpoints.last().is_some_and(|&c| c > max_steps) {
            return Err(Error::config(
                "steps",
                "last checkpoint exceeds the step budget",
            ));
        }
        match &self.env {
            EnvSpec::Chain(spec) => spec.validate(),
            EnvSpec::Crawler(spec) => spec.validate(),
        }
    }

    /// Parses `key = value` text and applies `overrides` on top.
    pub fn from_text(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut values = parse_key_values(text)?;
        for (k, v) in overrides {
            check_key(k)?;
            values.insert(k.clone(), v.clone());
        }
        Self::from_values(&values)
    }

    pub fn from_values(values: &BTreeMap<String, String>) -> Result<Self> {
        let get = |key: &str| values.get(key).map(String::as_str);
        let env_kind: EnvKind = get("env").unwrap_or("chain").parse()?;

        let env = match env_kind {
            EnvKind::Chain => {
                let mut spec = ChainMdpSpec::benchmark();
                if let Some(gates) = get("chain.gates") {
                    let gates = gates
                        .split(',')
                        .map(|g| parse_value::<usize>("chain.gates", g.trim()))
                        .collect::<Result<Vec<_>>>()?;
                    spec = ChainMdpSpec::gated(&gates, spec.terminal_reward);
                }
                if let Some(r) = get("chain.terminal_reward") {
                    spec.terminal_reward = parse_value("chain.terminal_reward", r)?;
                }
                EnvSpec::Chain(spec)
            }
            EnvKind::Crawler | EnvKind::CrawlerFull => {
                let mut spec = if env_kind == EnvKind::Crawler {
                    CrawlerSpec::reduced()
                } else {
                    CrawlerSpec::default()
                };
                set(values, "crawler.upper_bins", &mut spec.upper_bins)?;
                set(values, "crawler.lower_bins", &mut spec.lower_bins)?;
                set(values, "crawler.upper_min", &mut spec.upper_range.0)?;
                set(values, "crawler.upper_max", &mut spec.upper_range.1)?;
                set(values, "crawler.lower_min", &mut spec.lower_range.0)?;
                set(values, "crawler.lower_max", &mut spec.lower_range.1)?;
                set(values, "crawler.upper_len", &mut spec.upper_len)?;
                set(values, "crawler.lower_len", &mut spec.lower_len)?;
                set(values, "crawler.body_len", &mut spec.body_len)?;
                set(values, "crawler.hip_height", &mut spec.hip_height)?;
                EnvSpec::Crawler(spec)
            }
        };

        let arms: Vec<Algorithm> = match get("arm") {
            Some(list) => list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<_>>()?,
            None => Algorithm::ALL.to_vec(),
        };

        let mut base = AgentConfig::new(Algorithm::QLearning);
        set(values, "steps", &mut base.max_steps)?;
        set(values, "agent.gamma", &mut base.gamma)?;
        set(values, "agent.alpha", &mut base.alpha)?;
        set(values, "agent.epsilon_greedy", &mut base.epsilon_greedy)?;
        set(
            values,
            "agent.epsilon_propagate",
            &mut base.epsilon_propagate,
        )?;
        set(values, "agent.dedup", &mut base.dedup)?;
        set(values, "hop.prune_threshold", &mut base.hop.prune_threshold)?;
        set(
            values,
            "hop.target_temperature",
            &mut base.hop.target_temperature,
        )?;

        let mut checkpoint_every = 1000u64;
        set(values, "checkpoint_every", &mut checkpoint_every)?;
        let mut repetitions = 10u64;
        set(values, "reps", &mut repetitions)?;
        let mut base_seed = 1u64;
        set(values, "seed", &mut base_seed)?;
        let mut eval_horizon = match env_kind {
            EnvKind::Chain => 200usize,
            _ => 100,
        };
        set(values, "eval_horizon", &mut eval_horizon)?;
        let mut oracle_gamma = base.gamma;
        set(values, "oracle.gamma", &mut oracle_gamma)?;
        let mut threads = 0usize;
        set(values, "threads", &mut threads)?;

        let cfg = ExperimentConfig {
            env_kind,
            env,
            arms: arms
                .into_iter()
                .map(|algorithm| AgentConfig { algorithm, ..base })
                .collect(),
            repetitions,
            checkpoints: checkpoint_schedule(checkpoint_every, base.max_steps),
            base_seed,
            out: PathBuf::from(get("out").unwrap_or("results.csv")),
            eval_horizon,
            oracle_gamma,
            threads,
            save_qtables: get("save_qtables").map(PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(Error::config(key, "unknown configuration key"))
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{raw}`")))
}

fn set<T: FromStr>(values: &BTreeMap<String, String>, key: &str, slot: &mut T) -> Result<()> {
    if let Some(raw) = values.get(key) {
        *slot = parse_value(key, raw)?;
    }
    Ok(())
}

/// Parses flat `key = value` lines; later keys win.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(
                format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        let key = key.trim();
        check_key(key)?;
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::from_text("", &[]).unwrap();
        assert_eq!(cfg.env_kind, EnvKind::Chain);
        assert_eq!(cfg.arms.len(), 3);
        assert_eq!(cfg.repetitions, 10);
        assert_eq!(cfg.checkpoints.first(), Some(&0));
        assert_eq!(cfg.checkpoints.last(), Some(&45_000));
        assert_eq!(cfg.checkpoints.len(), 46);
    }

    #[test]
    fn file_values_and_overrides() {
        let text = "# experiment\nenv = crawler\narm = qlearning, time_hopping_ep\nagent.gamma = 0.8\nsteps = 5000\n";
        let cfg = ExperimentConfig::from_text(text, &[("reps".into(), "3".into())]).unwrap();
        assert_eq!(cfg.env_kind, EnvKind::Crawler);
        assert_eq!(
            cfg.arms.iter().map(|a| a.algorithm).collect::<Vec<_>>(),
            vec![Algorithm::QLearning, Algorithm::TimeHoppingEp]
        );
        assert!(cfg
            .arms
            .iter()
            .all(|a| a.gamma == 0.8 && a.max_steps == 5000));
        assert_eq!(cfg.repetitions, 3);
        assert_eq!(cfg.oracle_gamma, 0.8);
        match cfg.env {
            EnvSpec::Crawler(spec) => assert_eq!(spec.state_count(), 625),
            _ => panic!("expected crawler"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::from_text("agent.gamma = 1.5", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "agent.gamma"));
        let err = ExperimentConfig::from_text("steps = many", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "steps"));
        let err = ExperimentConfig::from_text("colour = red", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "colour"));
        let err = ExperimentConfig::from_text("reps = 0", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "reps"));
        let err = ExperimentConfig::from_text("no equals sign", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }
}
