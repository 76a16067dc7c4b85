//! Gated chain MDP: a line of states where moving forward is only possible
//! at certain phases of a periodic clock, so deeper states are visited ever
//! more rarely under random exploration.
//!
//! Positions run `0..length`. From position `i < length - 1`:
//!
//! * `ADVANCE` moves to `i + 1` when `phase % gate[i] == 0`; otherwise the
//!   agent slips back to position 0.
//! * `STAY` keeps the position.
//!
//! Every action from the last position pays `terminal_reward` and enters an
//! absorbing terminal state; training loops then reset to the start. All other
//! transitions pay 0. The clock advances by one on every step.
//!
//! The clock phase (`step_counter mod period`, where `period` is the least
//! common multiple of the gates) is part of the state so the transition
//! function stays deterministic in `(state, action)`. State ids are
//! `position * period + phase`; the terminal state is `length * period`.

use crate::error::{Error, Result};
use crate::mdp::{Action, EnvModel, Environment, State};

pub const STAY: Action = Action(0);
pub const ADVANCE: Action = Action(1);

#[derive(Debug, Clone, PartialEq)]
pub struct ChainMdpSpec {
    /// Number of non-terminal positions, at least 2.
    pub length: usize,
    /// `length - 1` gate periods; `advance_gate[i]` gates the move out of `i`.
    pub advance_gate: Vec<usize>,
    pub terminal_reward: f64,
}

impl ChainMdpSpec {
    /// Ungated chain of `length` positions.
    pub fn plain(length: usize, terminal_reward: f64) -> Self {
        Self {
            length,
            advance_gate: vec![1; length.saturating_sub(1)],
            terminal_reward,
        }
    }

    pub fn gated(gates: &[usize], terminal_reward: f64) -> Self {
        Self {
            length: gates.len() + 1,
            advance_gate: gates.to_vec(),
            terminal_reward,
        }
    }

    /// The 12-position chain used by the benchmark harness.
    pub fn benchmark() -> Self {
        Self::gated(&[1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1], 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::config("chain.length", "must be at least 2"));
        }
        if self.advance_gate.len() != self.length - 1 {
            return Err(Error::config(
                "chain.gates",
                format!(
                    "expected {} gates for length {}, got {}",
                    self.length - 1,
                    self.length,
                    self.advance_gate.len()
                ),
            ));
        }
        if self.advance_gate.contains(&0) {
            return Err(Error::config("chain.gates", "gate periods must be >= 1"));
        }
        if !self.terminal_reward.is_finite() {
            return Err(Error::config("chain.terminal_reward", "must be finite"));
        }
        Ok(())
    }

    pub fn period(&self) -> usize {
        self.advance_gate.iter().fold(1, |acc, &k| lcm(acc, k))
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Position in the chain; `Terminal` once the last position has been left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainPosition {
    At(usize),
    Terminal,
}

#[derive(Debug, Clone)]
pub struct ChainMdp {
    spec: ChainMdpSpec,
    period: usize,
    current: State,
}

impl ChainMdp {
    pub fn new(spec: ChainMdpSpec) -> Result<Self> {
        spec.validate()?;
        let period = spec.period();
        Ok(Self {
            spec,
            period,
            current: State(0),
        })
    }

    pub fn spec(&self) -> &ChainMdpSpec {
        &self.spec
    }

    pub fn period(&self) -> usize {
        self.period
    }

    /// The gated move itself, in terms of positions and the global step count.
    pub fn chain_step(
        &self,
        position: usize,
        action: Action,
        step_counter: u64,
    ) -> Result<(ChainPosition, f64)> {
        self.check_action(action)?;
        if position >= self.spec.length {
            return Err(Error::InputDomain(format!(
                "position {position} not in [0, {})",
                self.spec.length
            )));
        }
        if position == self.spec.length - 1 {
            return Ok((ChainPosition::Terminal, self.spec.terminal_reward));
        }
        let next = if action == STAY {
            position
        } else if step_counter.is_multiple_of(self.spec.advance_gate[position] as u64) {
            position + 1
        } else {
            0
        };
        Ok((ChainPosition::At(next), 0.0))
    }

    pub fn encode(&self, position: ChainPosition, phase: usize) -> Result<State> {
        match position {
            ChainPosition::Terminal => Ok(self.terminal_state()),
            ChainPosition::At(p) if p < self.spec.length && phase < self.period => {
                Ok(State(p * self.period + phase))
            }
            ChainPosition::At(p) => Err(Error::InputDomain(format!(
                "position {p} / phase {phase} outside the chain"
            ))),
        }
    }

    /// `(position, phase)`; the terminal state reports phase 0.
    pub fn decode(&self, s: State) -> Result<(ChainPosition, usize)> {
        self.check_state(s)?;
        if s == self.terminal_state() {
            Ok((ChainPosition::Terminal, 0))
        } else {
            Ok((ChainPosition::At(s.0 / self.period), s.0 % self.period))
        }
    }

    pub fn terminal_state(&self) -> State {
        State(self.spec.length * self.period)
    }
}

impl EnvModel for ChainMdp {
    fn state_count(&self) -> usize {
        self.spec.length * self.period + 1
    }

    fn action_count(&self) -> usize {
        2
    }

    fn transition(&self, s: State, a: Action) -> Result<(State, f64)> {
        self.check_action(a)?;
        let (position, phase) = self.decode(s)?;
        let ChainPosition::At(position) = position else {
            return Ok((s, 0.0));
        };
        let (next, reward) = self.chain_step(position, a, phase as u64)?;
        let next = self.encode(next, (phase + 1) % self.period)?;
        Ok((next, reward))
    }

    fn is_terminal(&self, s: State) -> bool {
        s == self.terminal_state()
    }
}

impl Environment for ChainMdp {
    fn current(&self) -> State {
        self.current
    }

    fn set_state(&mut self, s: State) -> Result<()> {
        self.check_state(s)?;
        self.current = s;
        Ok(())
    }

    fn start_state(&self) -> State {
        State(0)
    }
}
