//! Training loops for the three experimental arms.
//!
//! * `qlearning`: epsilon-greedy Watkins Q-learning with learning rate alpha.
//! * `time_hopping`: the same loop with full backups (alpha = 1), plus the
//!   hopping trigger, target selection and hop.
//! * `time_hopping_ep`: Time Hopping where the single backup after each
//!   simulation step is replaced by reverse graph propagation.
//!
//! Each call to [`Agent::train_step`] consumes one training step, which is
//! either a simulation step or a hop. The trigger is evaluated at the start
//! of a training step unless the previous step was itself a hop, so every hop
//! is followed by at least one simulation step.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::TransitionsGraph;
use crate::hopping::{hop, select_target, should_hop, HopPolicyConfig, StateStats};
use crate::mdp::{Action, Environment, QTable, State};
use crate::propagation::{PropagationParams, Propagator, DEFAULT_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    QLearning,
    TimeHopping,
    TimeHoppingEp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [
        Algorithm::QLearning,
        Algorithm::TimeHopping,
        Algorithm::TimeHoppingEp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::QLearning => "qlearning",
            Algorithm::TimeHopping => "time_hopping",
            Algorithm::TimeHoppingEp => "time_hopping_ep",
        }
    }

    pub fn hops(self) -> bool {
        !matches!(self, Algorithm::QLearning)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "arm",
                    format!(
                        "unknown arm `{s}` (expected qlearning, time_hopping or time_hopping_ep)"
                    ),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    /// Learning rate of the `qlearning` arm; the hopping arms always use full
    /// backups.
    pub alpha: f64,
    pub epsilon_greedy: f64,
    pub epsilon_propagate: f64,
    pub hop: HopPolicyConfig,
    pub max_steps: u64,
    pub seed: u64,
    /// Skip re-queueing pending records during propagation.
    pub dedup: bool,
}

impl AgentConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            gamma: 0.9,
            alpha: 1.0,
            epsilon_greedy: 0.1,
            epsilon_propagate: DEFAULT_EPSILON,
            hop: HopPolicyConfig::default(),
            max_steps: 45_000,
            seed: 0,
            dedup: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(
                "agent.gamma",
                format!("{} is not in [0, 1)", self.gamma),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(
                "agent.alpha",
                format!("{} is not in (0, 1]", self.alpha),
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon_greedy) {
            return Err(Error::config(
                "agent.epsilon_greedy",
                format!("{} is not in [0, 1]", self.epsilon_greedy),
            ));
        }
        if !(self.epsilon_propagate > 0.0) {
            return Err(Error::config(
                "agent.epsilon_propagate",
                format!("{} must be strictly positive", self.epsilon_propagate),
            ));
        }
        self.hop.validate()
    }

    fn propagation(&self) -> PropagationParams {
        PropagationParams {
            dedup: self.dedup,
            ..PropagationParams::new(self.gamma, self.epsilon_propagate)
        }
    }
}

/// Watkins Q-learning backup:
/// `Q(s, a) <- (1 - alpha) Q(s, a) + alpha (r + gamma max Q(s2, .))`.
pub fn q_update(q: &mut QTable, s: State, a: Action, r: f64, s2: State, alpha: f64, gamma: f64) {
    let target = r + gamma * q.max_q(s2);
    let value = (1.0 - alpha) * q.get(s, a) + alpha * target;
    q.set(s, a, value);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Simulation {
        from: State,
        action: Action,
        reward: f64,
        to: State,
    },
    Hop {
        from: State,
        to: State,
    },
}

/// A training run in progress: environment, learned table and bookkeeping.
#[derive(Debug, Clone)]
pub struct Agent<E> {
    cfg: AgentConfig,
    env: E,
    q: QTable,
    graph: Option<TransitionsGraph>,
    stats: StateStats,
    rng: ChaCha8Rng,
    propagator: Propagator,
    steps: u64,
    sim_steps: u64,
    hop_steps: u64,
    propagation_updates: u64,
    last_was_hop: bool,
}

impl<E: Environment> Agent<E> {
    /// Starts a run with the environment reset to its start state.
    pub fn new(cfg: AgentConfig, mut env: E) -> Result<Self> {
        cfg.validate()?;
        env.reset();
        let (states, actions) = (env.state_count(), env.action_count());
        let mut stats = StateStats::new(states, actions);
        stats.visit(env.current());
        let graph = match cfg.algorithm {
            Algorithm::TimeHoppingEp => Some(TransitionsGraph::new(states, actions)),
            _ => None,
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            q: QTable::new(states, actions),
            env,
            graph,
            stats,
            propagator: Propagator::new(),
            steps: 0,
            sim_steps: 0,
            hop_steps: 0,
            propagation_updates: 0,
            last_was_hop: false,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    /// The transitions graph; only the propagation arm keeps one.
    pub fn graph(&self) -> Option<&TransitionsGraph> {
        self.graph.as_ref()
    }

    pub fn state_stats(&self) -> &StateStats {
        &self.stats
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn sim_steps(&self) -> u64 {
        self.sim_steps
    }

    pub fn hop_steps(&self) -> u64 {
        self.hop_steps
    }

    /// Total backups applied by propagation; zero for the other arms.
    pub fn propagation_updates(&self) -> u64 {
        self.propagation_updates
    }

    pub fn explored_states(&self) -> usize {
        self.stats.visited().len()
    }

    fn epsilon_greedy(&mut self, s: State) -> Action {
        if self.rng.random::<f64>() < self.cfg.epsilon_greedy {
            Action(self.rng.random_range(0..self.q.action_count()))
        } else {
            self.q.greedy_action(s)
        }
    }

    pub fn train_step(&mut self) -> Result<StepOutcome> {
        let current = self.env.current();
        if self.cfg.algorithm.hops()
            && !self.last_was_hop
            && should_hop(&self.q, &self.stats, current, self.cfg.gamma, &self.cfg.hop)
        {
            let target = select_target(&self.stats, &self.cfg.hop, &mut self.rng)?;
            hop(&mut self.env, &self.stats, target)?;
            self.stats.visit(target);
            self.steps += 1;
            self.hop_steps += 1;
            self.last_was_hop = true;
            return Ok(StepOutcome::Hop {
                from: current,
                to: target,
            });
        }

        let action = self.epsilon_greedy(current);
        let (next, reward) = self.env.step(action)?;
        self.stats.mark_tried(current, action);

        let gamma = self.cfg.gamma;
        match self.cfg.algorithm {
            Algorithm::QLearning => {
                q_update(
                    &mut self.q,
                    current,
                    action,
                    reward,
                    next,
                    self.cfg.alpha,
                    gamma,
                );
            }
            Algorithm::TimeHopping => {
                q_update(&mut self.q, current, action, reward, next, 1.0, gamma);
            }
            Algorithm::TimeHoppingEp => {
                let graph = self.graph.as_mut().expect("propagation arm keeps a graph");
                let record = crate::graph::TransitionRecord::new(current, action, reward, next);
                let stats = self.propagator.seed_and_propagate(
                    graph,
                    &mut self.q,
                    record,
                    &self.cfg.propagation(),
                )?;
                self.propagation_updates += stats.updates_applied as u64;
            }
        }

        if self.env.is_terminal(next) {
            self.env.reset();
        }
        self.stats.visit(self.env.current());
        self.steps += 1;
        self.sim_steps += 1;
        self.last_was_hop = false;
        Ok(StepOutcome::Simulation {
            from: current,
            action,
            reward,
            to: next,
        })
    }
}

/// Greedy evaluation protocol: roll out `argmax Q` from the start state for
/// `horizon` steps and report mean reward per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub horizon: usize,
    /// Mean reward per step of the optimal policy under this protocol.
    pub optimum: f64,
}

/// Mean reward per step of the greedy policy of `q`, starting from the
/// environment's start state. Works on a clone; `env` and `q` are untouched.
pub fn greedy_rollout<E: Environment + Clone>(env: &E, q: &QTable, horizon: usize) -> Result<f64> {
    let mut sim = env.clone();
    sim.reset();
    let mut total = 0.0;
    for _ in 0..horizon {
        let s = sim.current();
        let (next, reward) = sim.step(q.greedy_action(s))?;
        total += reward;
        if sim.is_terminal(next) {
            sim.reset();
        }
    }
    Ok(if horizon == 0 {
        0.0
    } else {
        total / horizon as f64
    })
}

impl Evaluation {
    /// Uses the greedy policy of a value-iteration solution as the optimum.
    pub fn from_optimal<E: Environment + Clone>(
        env: &E,
        optimal: &QTable,
        horizon: usize,
    ) -> Result<Self> {
        Ok(Self {
            horizon,
            optimum: greedy_rollout(env, optimal, horizon)?,
        })
    }

    /// Greedy performance of `q` as a percentage of the optimum, floored at 0.
    pub fn pct_of_optimal<E: Environment + Clone>(&self, env: &E, q: &QTable) -> Result<f64> {
        let achieved = greedy_rollout(env, q, self.horizon)?;
        if self.optimum <= 0.0 {
            return Err(Error::Precondition(format!(
                "optimum {} must be positive to normalise against",
                self.optimum
            )));
        }
        Ok((100.0 * achieved / self.optimum).max(0.0))
    }
}

/// One row of benchmark output, taken at a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRow {
    pub run_id: String,
    pub arm: Algorithm,
    pub seed: u64,
    pub step: u64,
    pub sim_steps: u64,
    pub hop_steps: u64,
    pub pct_of_optimal: f64,
    pub wall_ms: f64,
    pub explored_states: usize,
    pub propagation_updates: u64,
}

pub fn run_id(arm: Algorithm, seed: u64) -> String {
    format!("{arm}-s{seed}")
}

/// Final state of a trial alongside its checkpoint rows.
#[derive(Debug, Clone)]
pub struct TrialResult<E> {
    pub rows: Vec<CheckpointRow>,
    pub agent: Agent<E>,
}

/// Trains for `cfg.max_steps` steps and records a row at every checkpoint.
/// Wall-clock time excludes the evaluation rollouts.
pub fn run_trial<E: Environment + Clone>(
    cfg: AgentConfig,
    env: E,
    checkpoints: &[u64],
    eval: &Evaluation,
) -> Result<TrialResult<E>> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("checkpoints", "must be strictly increasing"));
    }
    if checkpoints.last().is_some_and(|&c| c > cfg.max_steps) {
        return Err(Error::config(
            "checkpoints",
            "last checkpoint exceeds max_steps",
        ));
    }
    let mut agent = Agent::new(cfg, env)?;
    let mut rows = Vec::with_capacity(checkpoints.len());
    let mut training = Duration::ZERO;
    for &checkpoint in checkpoints {
        let started = Instant::now();
        while agent.steps() < checkpoint {
            agent.train_step()?;
        }
        training += started.elapsed();
        rows.push(CheckpointRow {
            run_id: run_id(cfg.algorithm, cfg.seed),
            arm: cfg.algorithm,
            seed: cfg.seed,
            step: agent.steps(),
            sim_steps: agent.sim_steps(),
            hop_steps: agent.hop_steps(),
            pct_of_optimal: eval.pct_of_optimal(agent.env(), agent.q_table())?,
            wall_ms: training.as_secs_f64() * 1e3,
            explored_states: agent.explored_states(),
            propagation_updates: agent.propagation_updates(),
        });
    }
    Ok(TrialResult { rows, agent })
}

/// `[every, 2 * every, ..., max_steps]`, with a leading 0.
pub fn checkpoint_schedule(every: u64, max_steps: u64) -> Vec<u64> {
    let mut out = vec![0];
    if every == 0 {
        return out;
    }
    let mut c = every;
    while c < max_steps {
        out.push(c);
        c += every;
    }
    if max_steps > 0 {
        out.push(max_steps);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ChainMdp, ChainMdpSpec};

    #[test]
    fn q_update_full_backup() {
        let mut q = QTable::new(2, 2);
        q_update(&mut q, State(0), Action(1), 1.0, State(1), 1.0, 0.9);
        assert_eq!(q.get(State(0), Action(1)), 1.0);
    }

    #[test]
    fn q_update_zero_alpha_is_noop() {
        let mut q = QTable::new(2, 2);
        q.set(State(1), Action(0), 3.0);
        let before = q.clone();
        q_update(&mut q, State(0), Action(0), 1.0, State(1), 0.0, 0.9);
        assert_eq!(q, before);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("sarsa".parse::<Algorithm>().is_err());
    }

    #[test]
    fn schedule_includes_zero_and_budget() {
        assert_eq!(
            checkpoint_schedule(1000, 3500),
            vec![0, 1000, 2000, 3000, 3500]
        );
        assert_eq!(checkpoint_schedule(1000, 2000), vec![0, 1000, 2000]);
    }

    #[test]
    fn qlearning_never_hops() {
        let env = ChainMdp::new(ChainMdpSpec::benchmark()).unwrap();
        let mut agent = Agent::new(AgentConfig::new(Algorithm::QLearning), env).unwrap();
        for _ in 0..45_000 {
            assert!(matches!(
                agent.train_step().unwrap(),
                StepOutcome::Simulation { .. }
            ));
        }
        assert_eq!(agent.hop_steps(), 0);
    }

    #[test]
    fn counters_add_up() {
        let env = ChainMdp::new(ChainMdpSpec::benchmark()).unwrap();
        let mut agent = Agent::new(AgentConfig::new(Algorithm::TimeHoppingEp), env).unwrap();
        for _ in 0..2000 {
            agent.train_step().unwrap();
            assert_eq!(agent.sim_steps() + agent.hop_steps(), agent.steps());
        }
    }

    #[test]
    fn rejects_bad_checkpoints() {
        let env = ChainMdp::new(ChainMdpSpec::plain(3, 1.0)).unwrap();
        let eval = Evaluation {
            horizon: 10,
            optimum: 1.0,
        };
        let mut cfg = AgentConfig::new(Algorithm::QLearning);
        cfg.max_steps = 10;
        assert!(run_trial(cfg, env.clone(), &[5, 5], &eval).is_err());
        assert!(run_trial(cfg, env, &[0, 11], &eval).is_err());
    }
}
