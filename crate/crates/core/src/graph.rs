//! The oriented graph of observed state transitions.
//!
//! Every observed `<from, action, reward, to>` is stored once. Two indexes are
//! kept in sync: a dense `(from, action) -> record` table for O(1) successor
//! lookup, and a per-state list of incoming records in insertion order. The
//! graph may be disconnected.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::mdp::{Action, State};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    pub from: State,
    pub action: Action,
    pub reward: f64,
    pub to: State,
}

impl TransitionRecord {
    pub fn new(from: State, action: Action, reward: f64, to: State) -> Self {
        Self {
            from,
            action,
            reward,
            to,
        }
    }
}

/// Position of a record in the graph's insertion-ordered record list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordId(pub u32);

const ABSENT: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct TransitionsGraph {
    action_count: usize,
    records: Vec<TransitionRecord>,
    by_edge: Vec<u32>,
    predecessors: Vec<Vec<RecordId>>,
}

impl TransitionsGraph {
    pub fn new(state_count: usize, action_count: usize) -> Self {
        assert!(
            state_count.saturating_mul(action_count) < ABSENT as usize,
            "state-action space too large for 32-bit record ids"
        );
        Self {
            action_count,
            records: Vec::new(),
            by_edge: vec![ABSENT; state_count * action_count],
            predecessors: vec![Vec::new(); state_count],
        }
    }

    pub fn state_count(&self) -> usize {
        self.predecessors.len()
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    /// Number of distinct recorded transitions.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Adds `t` to the graph. Re-recording an identical transition is a no-op
    /// returning the existing id; a different outcome for an already recorded
    /// `(from, action)` is a determinism violation.
    pub fn record(&mut self, t: TransitionRecord) -> Result<RecordId> {
        let states = self.state_count();
        if t.from.0 >= states || t.to.0 >= states || t.action.0 >= self.action_count {
            return Err(Error::InputDomain(format!(
                "record {t:?} outside a {states} x {} graph",
                self.action_count
            )));
        }
        let slot = t.from.0 * self.action_count + t.action.0;
        match self.by_edge[slot] {
            ABSENT => {
                let id = RecordId(self.records.len() as u32);
                self.records.push(t);
                self.by_edge[slot] = id.0;
                self.predecessors[t.to.0].push(id);
                Ok(id)
            }
            existing => {
                let current = self.records[existing as usize];
                if current == t {
                    Ok(RecordId(existing))
                } else {
                    Err(Error::DeterminismViolation {
                        existing: current,
                        observed: t,
                    })
                }
            }
        }
    }

    #[inline]
    pub fn get(&self, id: RecordId) -> &TransitionRecord {
        &self.records[id.0 as usize]
    }

    pub fn id_of(&self, from: State, action: Action) -> Option<RecordId> {
        if action.0 >= self.action_count {
            return None;
        }
        let slot = from.0.checked_mul(self.action_count)? + action.0;
        match self.by_edge.get(slot) {
            Some(&id) if id != ABSENT => Some(RecordId(id)),
            _ => None,
        }
    }

    pub fn successor(&self, from: State, action: Action) -> Option<&TransitionRecord> {
        self.id_of(from, action).map(|id| self.get(id))
    }

    /// Ids of the records ending at `s`, in insertion order.
    pub fn predecessor_ids(&self, s: State) -> &[RecordId] {
        self.predecessors.get(s.0).map_or(&[], Vec::as_slice)
    }

    /// Records ending at `s`, in insertion order. Unknown states have none.
    pub fn predecessors(&self, s: State) -> Vec<TransitionRecord> {
        self.predecessor_ids(s)
            .iter()
            .map(|&id| *self.get(id))
            .collect()
    }

    /// All records in insertion order.
    pub fn records(&self) -> &[TransitionRecord] {
        &self.records
    }

    /// Writes `from,action,reward,to` lines, with a header, in insertion order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "from,action,reward,to")?;
        for t in &self.records {
            writeln!(out, "{},{},{},{}", t.from, t.action, t.reward, t.to)?;
        }
        out.flush()
    }
}
