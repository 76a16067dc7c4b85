//! Python bindings for the `timehop` crate.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use timehop::agents::{checkpoint_schedule, run_trial as core_run_trial};
use timehop::bench::{self, ExperimentConfig};
use timehop::env::{AnyEnv, ChainMdp, ChainMdpSpec, Crawler, CrawlerSpec};
use timehop::{
    Action, Agent, AgentConfig, Algorithm, CheckpointRow, EnvModel, Environment, Error, Evaluation,
    PropagationParams, PropagationStats, QTable, State, StepOutcome, TransitionRecord,
    TransitionsGraph,
};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

type Record = (usize, usize, f64, usize);

fn record_tuple(r: &TransitionRecord) -> Record {
    (r.from.0, r.action.0, r.reward, r.to.0)
}

fn record_from((from, action, reward, to): Record) -> TransitionRecord {
    TransitionRecord::new(State(from), Action(action), reward, State(to))
}

/// Tabular action values.
#[pyclass(name = "QTable", from_py_object)]
#[derive(Clone)]
struct PyQTable {
    inner: QTable,
}

#[pymethods]
impl PyQTable {
    #[new]
    #[pyo3(signature = (states, actions, default = 0.0))]
    fn new(states: usize, actions: usize, default: f64) -> Self {
        Self {
            inner: QTable::with_default(states, actions, default),
        }
    }

    #[getter]
    fn state_count(&self) -> usize {
        self.inner.state_count()
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.inner.action_count()
    }

    fn get(&self, s: usize, a: usize) -> PyResult<f64> {
        self.check(s, a)?;
        Ok(self.inner.get(State(s), Action(a)))
    }

    fn set(&mut self, s: usize, a: usize, value: f64) -> PyResult<()> {
        self.check(s, a)?;
        self.inner.set(State(s), Action(a), value);
        Ok(())
    }

    fn max_q(&self, s: usize) -> PyResult<f64> {
        self.check(s, 0)?;
        Ok(self.inner.max_q(State(s)))
    }

    fn greedy_action(&self, s: usize) -> PyResult<usize> {
        self.check(s, 0)?;
        Ok(self.inner.greedy_action(State(s)).0)
    }

    fn row(&self, s: usize) -> PyResult<Vec<f64>> {
        self.check(s, 0)?;
        Ok(self.inner.row(State(s)).to_vec())
    }

    /// All rows as a list of lists.
    fn to_list(&self) -> Vec<Vec<f64>> {
        (0..self.inner.state_count())
            .map(|s| self.inner.row(State(s)).to_vec())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "QTable(states={}, actions={})",
            self.inner.state_count(),
            self.inner.action_count()
        )
    }
}

impl PyQTable {
    fn check(&self, s: usize, a: usize) -> PyResult<()> {
        if s >= self.inner.state_count() || a >= self.inner.action_count() {
            return Err(PyValueError::new_err(format!(
                "({s}, {a}) is outside the table"
            )));
        }
        Ok(())
    }
}

/// Observed deterministic transitions with a predecessor index.
#[pyclass(name = "TransitionsGraph")]
struct PyTransitionsGraph {
    inner: TransitionsGraph,
}

#[pymethods]
impl PyTransitionsGraph {
    #[new]
    fn new(states: usize, actions: usize) -> Self {
        Self {
            inner: TransitionsGraph::new(states, actions),
        }
    }

    fn record(&mut self, from: usize, action: usize, reward: f64, to: usize) -> PyResult<()> {
        self.inner
            .record(record_from((from, action, reward, to)))
            .map(|_| ())
            .map_err(to_py)
    }

    /// Records ending in `s` as `(from, action, reward, to)`, in insertion order.
    fn predecessors(&self, s: usize) -> Vec<Record> {
        self.inner
            .predecessors(State(s))
            .iter()
            .map(record_tuple)
            .collect()
    }

    fn successor(&self, s: usize, a: usize) -> Option<Record> {
        self.inner.successor(State(s), Action(a)).map(record_tuple)
    }

    fn records(&self) -> Vec<Record> {
        self.inner.records().iter().map(record_tuple).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn stats_dict<'py>(py: Python<'py>, stats: &PropagationStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("updates_applied", stats.updates_applied)?;
    d.set_item("max_depth", stats.max_depth)?;
    d.set_item("queue_peak", stats.queue_peak)?;
    d.set_item("skipped_appends", stats.skipped_appends)?;
    Ok(d)
}

fn params(gamma: f64, epsilon: f64, dedup: bool) -> PropagationParams {
    PropagationParams {
        dedup,
        ..PropagationParams::new(gamma, epsilon)
    }
}

/// Propagates from an already recorded transition; returns work statistics.
#[pyfunction]
#[pyo3(signature = (graph, q, record, gamma, epsilon, dedup = true))]
fn propagate<'py>(
    py: Python<'py>,
    graph: &PyTransitionsGraph,
    q: &mut PyQTable,
    record: Record,
    gamma: f64,
    epsilon: f64,
    dedup: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let stats = timehop::propagate(
        &graph.inner,
        &mut q.inner,
        &record_from(record),
        &params(gamma, epsilon, dedup),
    )
    .map_err(to_py)?;
    stats_dict(py, &stats)
}

/// Records a transition, then propagates from it.
#[pyfunction]
#[pyo3(signature = (graph, q, record, gamma, epsilon, dedup = true))]
fn seed_and_propagate<'py>(
    py: Python<'py>,
    graph: &mut PyTransitionsGraph,
    q: &mut PyQTable,
    record: Record,
    gamma: f64,
    epsilon: f64,
    dedup: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let r = record_from(record);
    let stats = timehop::seed_and_propagate(
        &mut graph.inner,
        &mut q.inner,
        r.from,
        r.action,
        r.reward,
        r.to,
        &params(gamma, epsilon, dedup),
    )
    .map_err(to_py)?;
    stats_dict(py, &stats)
}

/// A benchmark environment: the gated chain or the crawler.
#[pyclass(name = "Environment", from_py_object)]
#[derive(Clone)]
struct PyEnvironment {
    inner: AnyEnv,
}

#[pymethods]
impl PyEnvironment {
    /// Gated chain; `gates=None` gives the benchmark chain.
    #[staticmethod]
    #[pyo3(signature = (gates = None, terminal_reward = 1.0))]
    fn chain(gates: Option<Vec<usize>>, terminal_reward: f64) -> PyResult<Self> {
        let spec = match gates {
            Some(g) => ChainMdpSpec::gated(&g, terminal_reward),
            None => ChainMdpSpec {
                terminal_reward,
                ..ChainMdpSpec::benchmark()
            },
        };
        Ok(Self {
            inner: ChainMdp::new(spec).map_err(to_py)?.into(),
        })
    }

    /// Crawler robot; `full=True` uses the 9 x 13 discretization.
    #[staticmethod]
    #[pyo3(signature = (full = false))]
    fn crawler(full: bool) -> PyResult<Self> {
        let spec = if full {
            CrawlerSpec::default()
        } else {
            CrawlerSpec::reduced()
        };
        Ok(Self {
            inner: Crawler::new(spec).map_err(to_py)?.into(),
        })
    }

    #[getter]
    fn state_count(&self) -> usize {
        self.inner.state_count()
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.inner.action_count()
    }

    #[getter]
    fn current(&self) -> usize {
        self.inner.current().0
    }

    #[getter]
    fn start_state(&self) -> usize {
        self.inner.start_state().0
    }

    fn reset(&mut self) {
        self.inner.reset();
    }

    fn step(&mut self, a: usize) -> PyResult<(usize, f64)> {
        let (s, r) = self.inner.step(Action(a)).map_err(to_py)?;
        Ok((s.0, r))
    }

    fn set_state(&mut self, s: usize) -> PyResult<()> {
        self.inner.set_state(State(s)).map_err(to_py)
    }

    fn transition(&self, s: usize, a: usize) -> PyResult<(usize, f64)> {
        let (next, r) = self.inner.transition(State(s), Action(a)).map_err(to_py)?;
        Ok((next.0, r))
    }

    fn is_terminal(&self, s: usize) -> bool {
        self.inner.is_terminal(State(s))
    }
}

/// Optimal action values by value iteration.
#[pyfunction]
#[pyo3(signature = (env, gamma, tol = 1e-10))]
fn value_iteration(env: &PyEnvironment, gamma: f64, tol: f64) -> PyResult<PyQTable> {
    let inner = timehop::value_iteration(&env.inner, gamma, tol).map_err(to_py)?;
    Ok(PyQTable { inner })
}

/// Optimal table and optimal mean reward per step of the greedy rollout.
#[pyfunction]
#[pyo3(signature = (env, gamma = 0.9, horizon = 200))]
fn oracle(env: &PyEnvironment, gamma: f64, horizon: usize) -> PyResult<(PyQTable, f64)> {
    let (q, eval) = bench::oracle(&env.inner, gamma, horizon).map_err(to_py)?;
    Ok((PyQTable { inner: q }, eval.optimum))
}

#[allow(clippy::too_many_arguments)]
fn agent_config(
    algorithm: &str,
    seed: u64,
    max_steps: u64,
    gamma: Option<f64>,
    alpha: Option<f64>,
    epsilon_greedy: Option<f64>,
    epsilon_propagate: Option<f64>,
    prune_threshold: Option<f64>,
    target_temperature: Option<f64>,
) -> PyResult<AgentConfig> {
    let algorithm: Algorithm = algorithm.parse().map_err(to_py)?;
    let mut cfg = AgentConfig::new(algorithm);
    cfg.seed = seed;
    cfg.max_steps = max_steps;
    cfg.gamma = gamma.unwrap_or(cfg.gamma);
    cfg.alpha = alpha.unwrap_or(cfg.alpha);
    cfg.epsilon_greedy = epsilon_greedy.unwrap_or(cfg.epsilon_greedy);
    cfg.epsilon_propagate = epsilon_propagate.unwrap_or(cfg.epsilon_propagate);
    cfg.hop.prune_threshold = prune_threshold.unwrap_or(cfg.hop.prune_threshold);
    cfg.hop.target_temperature = target_temperature.unwrap_or(cfg.hop.target_temperature);
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// One learner: `qlearning`, `time_hopping` or `time_hopping_ep`.
#[pyclass(name = "Agent")]
struct PyAgent {
    inner: Agent<AnyEnv>,
}

#[pymethods]
impl PyAgent {
    #[new]
    #[pyo3(signature = (
        env, algorithm, seed = 0, gamma = None, alpha = None, epsilon_greedy = None,
        epsilon_propagate = None, prune_threshold = None, target_temperature = None,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        env: &PyEnvironment,
        algorithm: &str,
        seed: u64,
        gamma: Option<f64>,
        alpha: Option<f64>,
        epsilon_greedy: Option<f64>,
        epsilon_propagate: Option<f64>,
        prune_threshold: Option<f64>,
        target_temperature: Option<f64>,
    ) -> PyResult<Self> {
        let cfg = agent_config(
            algorithm,
            seed,
            u64::MAX,
            gamma,
            alpha,
            epsilon_greedy,
            epsilon_propagate,
            prune_threshold,
            target_temperature,
        )?;
        Ok(Self {
            inner: Agent::new(cfg, env.inner.clone()).map_err(to_py)?,
        })
    }

    /// One simulation step or one hop. Returns `("sim", from, action,
    /// reward, to)` or `("hop", from, to)`.
    fn train_step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let outcome = self.inner.train_step().map_err(to_py)?;
        Ok(match outcome {
            StepOutcome::Simulation {
                from,
                action,
                reward,
                to,
            } => ("sim", from.0, action.0, reward, to.0)
                .into_pyobject(py)?
                .into_any(),
            StepOutcome::Hop { from, to } => ("hop", from.0, to.0).into_pyobject(py)?.into_any(),
        })
    }

    fn train(&mut self, steps: u64) -> PyResult<()> {
        for _ in 0..steps {
            self.inner.train_step().map_err(to_py)?;
        }
        Ok(())
    }

    fn q_table(&self) -> PyQTable {
        PyQTable {
            inner: self.inner.q_table().clone(),
        }
    }

    #[getter]
    fn current(&self) -> usize {
        self.inner.env().current().0
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.inner.steps()
    }

    #[getter]
    fn sim_steps(&self) -> u64 {
        self.inner.sim_steps()
    }

    #[getter]
    fn hop_steps(&self) -> u64 {
        self.inner.hop_steps()
    }

    #[getter]
    fn propagation_updates(&self) -> u64 {
        self.inner.propagation_updates()
    }

    #[getter]
    fn explored_states(&self) -> usize {
        self.inner.explored_states()
    }

    fn visited(&self) -> Vec<usize> {
        self.inner
            .state_stats()
            .visited()
            .iter()
            .map(|s| s.0)
            .collect()
    }

    /// Recorded transitions; empty for arms without a graph.
    fn graph_records(&self) -> Vec<Record> {
        self.inner
            .graph()
            .map(|g| g.records().iter().map(record_tuple).collect())
            .unwrap_or_default()
    }
}

fn row_dict<'py>(py: Python<'py>, r: &CheckpointRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("run_id", &r.run_id)?;
    d.set_item("arm", r.arm.name())?;
    d.set_item("seed", r.seed)?;
    d.set_item("step", r.step)?;
    d.set_item("sim_steps", r.sim_steps)?;
    d.set_item("hop_steps", r.hop_steps)?;
    d.set_item("pct_of_optimal", r.pct_of_optimal)?;
    d.set_item("wall_ms", r.wall_ms)?;
    d.set_item("explored_states", r.explored_states)?;
    d.set_item("propagation_updates", r.propagation_updates)?;
    Ok(d)
}

/// Trains one agent and returns its checkpoint rows as dicts.
#[pyfunction]
#[pyo3(signature = (
    env, algorithm, steps, checkpoint_every = 1000, seed = 0, eval_horizon = 200,
    gamma = None, alpha = None, epsilon_greedy = None, epsilon_propagate = None,
    prune_threshold = None, target_temperature = None,
))]
#[allow(clippy::too_many_arguments)]
fn run_trial<'py>(
    py: Python<'py>,
    env: &PyEnvironment,
    algorithm: &str,
    steps: u64,
    checkpoint_every: u64,
    seed: u64,
    eval_horizon: usize,
    gamma: Option<f64>,
    alpha: Option<f64>,
    epsilon_greedy: Option<f64>,
    epsilon_propagate: Option<f64>,
    prune_threshold: Option<f64>,
    target_temperature: Option<f64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = agent_config(
        algorithm,
        seed,
        steps,
        gamma,
        alpha,
        epsilon_greedy,
        epsilon_propagate,
        prune_threshold,
        target_temperature,
    )?;
    let optimal = timehop::value_iteration(&env.inner, cfg.gamma, 1e-10).map_err(to_py)?;
    let eval = Evaluation::from_optimal(&env.inner, &optimal, eval_horizon).map_err(to_py)?;
    let checkpoints = checkpoint_schedule(checkpoint_every, steps);
    let trial = core_run_trial(cfg, env.inner.clone(), &checkpoints, &eval).map_err(to_py)?;
    trial.rows.iter().map(|r| row_dict(py, r)).collect()
}

/// Runs every trial of a flat `key = value` configuration in memory and
/// returns all checkpoint rows.
#[pyfunction]
#[pyo3(signature = (config = "", overrides = None))]
fn run_trials<'py>(
    py: Python<'py>,
    config: &str,
    overrides: Option<Vec<(String, String)>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = ExperimentConfig::from_text(config, &overrides.unwrap_or_default()).map_err(to_py)?;
    let output = py.detach(|| bench::run_trials(&cfg)).map_err(to_py)?;
    output.rows().iter().map(|r| row_dict(py, r)).collect()
}

/// Maximum Q-values of the given states, sorted in descending order.
#[pyfunction]
fn qvalue_distribution(q: &PyQTable, explored: Vec<usize>) -> Vec<f64> {
    let explored: Vec<State> = explored.into_iter().map(State).collect();
    bench::qvalue_distribution(&q.inner, &explored)
}

#[pymodule(name = "timehop")]
fn timehop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQTable>()?;
    m.add_class::<PyTransitionsGraph>()?;
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(seed_and_propagate, m)?)?;
    m.add_function(wrap_pyfunction!(value_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(run_trials, m)?)?;
    m.add_function(wrap_pyfunction!(qvalue_distribution, m)?)?;
    m.add("CSV_HEADER", bench::CSV_HEADER)?;
    Ok(())
}
