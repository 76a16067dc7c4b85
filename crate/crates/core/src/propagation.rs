//! Reverse graph propagation of Q-value updates.
//!
//! Starting from one freshly observed transition, each popped record receives
//! a full Bellman backup `Q(from, a) = r + gamma * max Q(to, .)`. When that
//! backup moves the maximum of the `from` row by more than `epsilon`, every
//! transition that ends in `from` is appended to the queue. Records are
//! processed first-in first-out, so the update spreads backwards through the
//! graph in waves, one predecessor layer at a time.
//!
//! With `epsilon > 0` and `gamma < 1` the process always terminates; a
//! `max_updates` cap turns any violation of that into an error instead of a
//! hang.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::{RecordId, TransitionRecord, TransitionsGraph};
use crate::mdp::{Action, QTable, State};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    /// Discount factor, in `[0, 1)`.
    pub gamma: f64,
    /// Minimum change of a state's maximum Q-value that continues the wave.
    pub epsilon: f64,
    /// Hard cap on backups per call; `None` derives one from the graph size.
    pub max_updates: Option<usize>,
    /// Skip appending records that are already waiting in the queue.
    pub dedup: bool,
}

impl PropagationParams {
    pub fn new(gamma: f64, epsilon: f64) -> Self {
        Self {
            gamma,
            epsilon,
            max_updates: None,
            dedup: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(
                "gamma",
                format!("{} is not in [0, 1)", self.gamma),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config(
                "epsilon_propagate",
                format!("{} must be strictly positive", self.epsilon),
            ));
        }
        Ok(())
    }

    /// Default cap: `10 * states * actions`, times the number of
    /// gamma-contractions it takes for a unit change to fall below epsilon.
    fn update_limit(&self, g: &TransitionsGraph) -> usize {
        self.max_updates.unwrap_or_else(|| {
            let contractions = (self.epsilon.ln() / self.gamma.ln()).ceil();
            let contractions = if contractions.is_finite() && contractions > 1.0 {
                contractions.min(1e6) as usize
            } else {
                1
            };
            10 * g.state_count().max(1) * g.action_count().max(1) * contractions
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PropagationStats {
    /// Backups applied, including the seed's.
    pub updates_applied: usize,
    /// Largest number of backward hops from the seed that received a backup.
    pub max_depth: usize,
    /// Longest the queue got.
    pub queue_peak: usize,
    /// Appends skipped because the record was already pending.
    pub skipped_appends: usize,
}

impl PropagationStats {
    pub fn merge(&mut self, other: &PropagationStats) {
        self.updates_applied += other.updates_applied;
        self.max_depth = self.max_depth.max(other.max_depth);
        self.queue_peak = self.queue_peak.max(other.queue_peak);
        self.skipped_appends += other.skipped_appends;
    }
}

/// Reusable propagation scratch space.
///
/// Keeps the queue and the pending-membership marks between calls, so a
/// training loop that propagates after every step does not reallocate them.
#[derive(Debug, Default, Clone)]
pub struct Propagator {
    queue: VecDeque<(RecordId, usize)>,
    pending: Vec<u32>,
    generation: u32,
}

impl Propagator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs one propagation wave seeded with `seed`, which must already be
    /// in `g`. Mutates `q` only; the graph is read-only.
    pub fn propagate(
        &mut self,
        g: &TransitionsGraph,
        q: &mut QTable,
        seed: &TransitionRecord,
        p: &PropagationParams,
    ) -> Result<PropagationStats> {
        let id = g
            .id_of(seed.from, seed.action)
            .filter(|&id| g.get(id) == seed)
            .ok_or_else(|| Error::Precondition(format!("seed {seed:?} is not in the graph")))?;
        self.propagate_id(g, q, id, p)
    }

    pub fn propagate_id(
        &mut self,
        g: &TransitionsGraph,
        q: &mut QTable,
        seed: RecordId,
        p: &PropagationParams,
    ) -> Result<PropagationStats> {
        p.validate()?;
        let limit = self.begin(g, p);
        let mut stats = PropagationStats::default();

        self.push(seed, 0);
        stats.queue_peak = 1;

        while let Some((id, depth)) = self.queue.pop_front() {
            self.pending[id.0 as usize] = 0;
            if stats.updates_applied >= limit {
                self.queue.clear();
                return Err(Error::RunawayPropagation { limit });
            }
            let t = *g.get(id);

            let old_max = q.max_q(t.from);
            q.set(t.from, t.action, t.reward + p.gamma * q.max_q(t.to));
            let new_max = q.max_q(t.from);
            stats.updates_applied += 1;
            stats.max_depth = stats.max_depth.max(depth);

            if (new_max - old_max).abs() > p.epsilon {
                for &pred in g.predecessor_ids(t.from) {
                    if p.dedup && self.is_pending(pred) {
                        stats.skipped_appends += 1;
                    } else {
                        self.push(pred, depth + 1);
                    }
                }
                stats.queue_peak = stats.queue_peak.max(self.queue.len());
            }
        }
        Ok(stats)
    }

    fn begin(&mut self, g: &TransitionsGraph, p: &PropagationParams) -> usize {
        self.queue.clear();
        if self.pending.len() < g.len() {
            self.pending.resize(g.len(), 0);
        }
        // Marks from earlier calls become stale when the generation moves on.
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.pending.iter_mut().for_each(|m| *m = 0);
            self.generation = 1;
        }
        p.update_limit(g)
    }

    #[inline]
    fn is_pending(&self, id: RecordId) -> bool {
        self.pending[id.0 as usize] == self.generation
    }

    #[inline]
    fn push(&mut self, id: RecordId, depth: usize) {
        self.pending[id.0 as usize] = self.generation;
        self.queue.push_back((id, depth));
    }
}

/// One-shot propagation; see [`Propagator::propagate`].
pub fn propagate(
    g: &TransitionsGraph,
    q: &mut QTable,
    seed: &TransitionRecord,
    p: &PropagationParams,
) -> Result<PropagationStats> {
    Propagator::new().propagate(g, q, seed, p)
}

/// Records `<s, a, r, s2>` and propagates from it.
#[allow(clippy::too_many_arguments)]
pub fn seed_and_propagate(
    g: &mut TransitionsGraph,
    q: &mut QTable,
    s: State,
    a: Action,
    r: f64,
    s2: State,
    p: &PropagationParams,
) -> Result<PropagationStats> {
    Propagator::new().seed_and_propagate(g, q, TransitionRecord::new(s, a, r, s2), p)
}

impl Propagator {
    pub fn seed_and_propagate(
        &mut self,
        g: &mut TransitionsGraph,
        q: &mut QTable,
        t: TransitionRecord,
        p: &PropagationParams,
    ) -> Result<PropagationStats> {
        p.validate()?;
        let id = g.record(t)?;
        self.propagate_id(g, q, id, p)
    }
}
