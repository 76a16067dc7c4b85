//! Core domain types: state and action identifiers, the tabular Q-function,
//! the environment contract and a value-iteration solver.
//!
//! All environments are deterministic: `transition(s, a)` always returns the
//! same `(s', r)`. States and actions are dense integer ids so that both the
//! Q-table and the transitions graph can index them directly.

use std::fmt;

use crate::error::{Error, Result};

/// Dense index into an environment's state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State(pub usize);

/// Dense index into an environment's action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Action(pub usize);

impl State {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl Action {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A deterministic, finite model: `transition` is a total function over
/// `[0, state_count) x [0, action_count)`.
pub trait EnvModel {
    fn state_count(&self) -> usize;
    fn action_count(&self) -> usize;
    fn transition(&self, s: State, a: Action) -> Result<(State, f64)>;

    /// Terminal states end an episode; the training loop resets the
    /// environment after entering one. Their rows are never updated.
    fn is_terminal(&self, _s: State) -> bool {
        false
    }

    fn check_state(&self, s: State) -> Result<()> {
        if s.0 < self.state_count() {
            Ok(())
        } else {
            Err(Error::InputDomain(format!(
                "state {} not in [0, {})",
                s.0,
                self.state_count()
            )))
        }
    }

    fn check_action(&self, a: Action) -> Result<()> {
        if a.0 < self.action_count() {
            Ok(())
        } else {
            Err(Error::InputDomain(format!(
                "action {} not in [0, {})",
                a.0,
                self.action_count()
            )))
        }
    }
}

/// A simulated environment with a current state that can be stepped, and
/// moved to an arbitrary state (the capability Time Hopping relies on).
pub trait Environment: EnvModel {
    fn current(&self) -> State;

    /// Moves the simulation to `s` without touching any learning data.
    fn set_state(&mut self, s: State) -> Result<()>;

    /// Canonical start state, used for resets and greedy evaluation.
    fn start_state(&self) -> State;

    fn step(&mut self, a: Action) -> Result<(State, f64)> {
        let (next, reward) = self.transition(self.current(), a)?;
        self.set_state(next)?;
        Ok((next, reward))
    }

    fn reset(&mut self) {
        let start = self.start_state();
        self.set_state(start)
            .expect("start state lies inside the state space");
    }
}

/// Tabular action-value function with a default value for unvisited pairs.
///
/// Rows are stored densely; a per-row maximum is cached so that `max_q` is
/// O(1). Ties in `greedy_action` go to the lowest action id.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    state_count: usize,
    action_count: usize,
    default: f64,
    values: Vec<f64>,
    row_max: Vec<f64>,
}

impl QTable {
    pub fn new(state_count: usize, action_count: usize) -> Self {
        Self::with_default(state_count, action_count, 0.0)
    }

    pub fn with_default(state_count: usize, action_count: usize, default: f64) -> Self {
        assert!(action_count > 0, "a Q-table needs at least one action");
        Self {
            state_count,
            action_count,
            default,
            values: vec![default; state_count * action_count],
            row_max: vec![default; state_count],
        }
    }

    pub fn for_model<M: EnvModel + ?Sized>(model: &M) -> Self {
        Self::new(model.state_count(), model.action_count())
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn default_value(&self) -> f64 {
        self.default
    }

    #[inline]
    pub fn get(&self, s: State, a: Action) -> f64 {
        self.values[s.0 * self.action_count + a.0]
    }

    pub fn row(&self, s: State) -> &[f64] {
        let start = s.0 * self.action_count;
        &self.values[start..start + self.action_count]
    }

    pub fn set(&mut self, s: State, a: Action, value: f64) {
        let idx = s.0 * self.action_count + a.0;
        let old = self.values[idx];
        self.values[idx] = value;
        let max = self.row_max[s.0];
        if value >= max {
            self.row_max[s.0] = value;
        } else if old == max {
            self.row_max[s.0] = self
                .row(s)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }

    /// Maximum over all actions of `Q(s, a)`.
    #[inline]
    pub fn max_q(&self, s: State) -> f64 {
        self.row_max[s.0]
    }

    /// Lowest-id action attaining `max_q(s)`.
    pub fn greedy_action(&self, s: State) -> Action {
        let max = self.row_max[s.0];
        let idx = self
            .row(s)
            .iter()
            .position(|&v| v == max)
            .expect("cached row maximum is attained");
        Action(idx)
    }

    /// Iterates `(state, action, value)` over every entry.
    pub fn iter(&self) -> impl Iterator<Item = (State, Action, f64)> + '_ {
        let actions = self.action_count;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (State(i / actions), Action(i % actions), v))
    }
}

/// Pre-computed transition table of a model, indexed `s * action_count + a`.
#[derive(Debug, Clone)]
pub struct ModelTable {
    pub state_count: usize,
    pub action_count: usize,
    pub next: Vec<usize>,
    pub reward: Vec<f64>,
}

impl ModelTable {
    pub fn tabulate<M: EnvModel + ?Sized>(model: &M) -> Result<Self> {
        let (states, actions) = (model.state_count(), model.action_count());
        let mut next = Vec::with_capacity(states * actions);
        let mut reward = Vec::with_capacity(states * actions);
        for s in 0..states {
            for a in 0..actions {
                let (n, r) = model.transition(State(s), Action(a))?;
                next.push(n.0);
                reward.push(r);
            }
        }
        Ok(Self {
            state_count: states,
            action_count: actions,
            next,
            reward,
        })
    }
}

/// Solves the Bellman optimality equation by synchronous sweeps.
///
/// Stops once a sweep changes no entry by more than `tol`; the returned table
/// then has Bellman residual at most `gamma * tol`.
pub fn value_iteration<M: EnvModel + ?Sized>(model: &M, gamma: f64, tol: f64) -> Result<QTable> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::config("gamma", format!("{gamma} is not in [0, 1)")));
    }
    if !(tol > 0.0) {
        return Err(Error::config("tol", format!("{tol} must be positive")));
    }
    let table = ModelTable::tabulate(model)?;
    Ok(value_iteration_table(&table, gamma, tol))
}

pub(crate) fn value_iteration_table(table: &ModelTable, gamma: f64, tol: f64) -> QTable {
    let (states, actions) = (table.state_count, table.action_count);
    let mut q = vec![0.0; states * actions];
    let mut v = vec![0.0; states];
    loop {
        let mut delta: f64 = 0.0;
        for (i, value) in q.iter_mut().enumerate() {
            let updated = table.reward[i] + gamma * v[table.next[i]];
            delta = delta.max((updated - *value).abs());
            *value = updated;
        }
        for (s, best) in v.iter_mut().enumerate() {
            *best = q[s * actions..(s + 1) * actions]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        }
        if delta <= tol {
            break;
        }
    }
    let mut out = QTable::new(states, actions);
    for (i, value) in q.into_iter().enumerate() {
        out.set(State(i / actions), Action(i % actions), value);
    }
    out
}
