//! Benchmark environments.

pub mod chain;
pub mod crawler;

pub use chain::{ChainMdp, ChainMdpSpec, ChainPosition};
pub use crawler::{
    crawler_decode, crawler_encode, crawler_step, decode_action, encode_action, Crawler,
    CrawlerSpec, CrawlerState, COMPOSITE_ACTIONS,
};

use crate::error::Result;
use crate::mdp::{Action, EnvModel, Environment, State};

/// Either benchmark environment, dispatched statically.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Chain(ChainMdp),
    Crawler(Crawler),
}

macro_rules! dispatch {
    ($self:expr, $env:ident => $body:expr) => {
        match $self {
            AnyEnv::Chain($env) => $body,
            AnyEnv::Crawler($env) => $body,
        }
    };
}

impl EnvModel for AnyEnv {
    fn state_count(&self) -> usize {
        dispatch!(self, e => e.state_count())
    }

    fn action_count(&self) -> usize {
        dispatch!(self, e => e.action_count())
    }

    fn transition(&self, s: State, a: Action) -> Result<(State, f64)> {
        dispatch!(self, e => e.transition(s, a))
    }

    fn is_terminal(&self, s: State) -> bool {
        dispatch!(self, e => e.is_terminal(s))
    }
}

impl Environment for AnyEnv {
    fn current(&self) -> State {
        dispatch!(self, e => e.current())
    }

    fn set_state(&mut self, s: State) -> Result<()> {
        dispatch!(self, e => e.set_state(s))
    }

    fn start_state(&self) -> State {
        dispatch!(self, e => e.start_state())
    }

    fn step(&mut self, a: Action) -> Result<(State, f64)> {
        dispatch!(self, e => e.step(a))
    }
}

impl From<ChainMdp> for AnyEnv {
    fn from(env: ChainMdp) -> Self {
        AnyEnv::Chain(env)
    }
}

impl From<Crawler> for AnyEnv {
    fn from(env: Crawler) -> Self {
        AnyEnv::Crawler(env)
    }
}
