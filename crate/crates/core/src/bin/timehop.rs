use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use timehop::agents::{Agent, AgentConfig, Algorithm};
use timehop::bench::{self, config::KEYS, ExperimentConfig};
use timehop::mdp::{EnvModel, Environment};
use timehop::Error;

/// Q-learning, Time Hopping and Eligibility Propagation benchmarks.
///
/// Any configuration key can be overridden as `--key value`, e.g.
/// `--agent.gamma 0.95` or `--hop.prune_threshold 0.3`.
#[derive(Parser, Debug)]
#[command(name = "timehop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write row, summary and metadata files.
    Run(ConfigArgs),
    /// Print the value-iteration optimum of the configured environment.
    Oracle(ConfigArgs),
    /// Sorted maximum Q-values of a table saved by `run --save_qtables DIR`.
    Distribution {
        #[arg(long)]
        qtable: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one propagation-arm trial and dump its transitions graph.
    DumpGraph(ConfigArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Arm to run; repeatable.
    #[arg(long = "arm")]
    arms: Vec<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    /// `key=value` override of any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let text = match &self.config {
            Some(path) => fs::read_to_string(path)?,
            None => String::new(),
        };
        let mut overrides: Vec<(String, String)> = Vec::new();
        if let Some(env) = &self.env {
            overrides.push(("env".into(), env.clone()));
        }
        if !self.arms.is_empty() {
            overrides.push(("arm".into(), self.arms.join(",")));
        }
        for (key, value) in [
            ("steps", self.steps),
            ("reps", self.reps),
            ("seed", self.seed),
        ] {
            if let Some(v) = value {
                overrides.push((key.into(), v.to_string()));
            }
        }
        if let Some(out) = &self.out {
            overrides.push(("out".into(), out.display().to_string()));
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config {
                field: kv.clone(),
                message: "expected KEY=VALUE".into(),
            })?;
            overrides.push((k.trim().into(), v.trim().into()));
        }
        ExperimentConfig::from_text(&text, &overrides)
    }
}

/// Rewrites `--some.key value` / `--some.key=value` for configuration keys
/// without a dedicated flag into `--set some.key=value`.
fn expand_key_flags(args: impl Iterator<Item = String>) -> Vec<String> {
    const DEDICATED: &[&str] = &["arm", "steps", "reps", "seed", "out", "env"];
    let mut out = Vec::new();
    let mut args = args.peekable();
    while let Some(arg) = args.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            out.push(arg);
            continue;
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if KEYS.contains(&key.as_str()) && !DEDICATED.contains(&key.as_str()) {
            let value = inline.or_else(|| args.next()).unwrap_or_default();
            out.push("--set".into());
            out.push(format!("{key}={value}"));
        } else {
            out.push(arg);
        }
    }
    out
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let output = bench::run_experiment(&cfg)?;
            let summary = bench::summarize(&output.rows());
            eprintln!(
                "{} trials, optimum {:.6} per step; wrote {}",
                output.trials.len(),
                output.evaluation.optimum,
                cfg.out.display()
            );
            for s in summary
                .iter()
                .filter(|s| s.step == *cfg.checkpoints.last().unwrap())
            {
                eprintln!(
                    "  {:<16} step {:>6}: {:6.2}% of optimum (sd {:.2}), {:.0} sim steps, {:.0} explored",
                    s.arm.name(),
                    s.step,
                    s.pct_of_optimal.mean,
                    s.pct_of_optimal.std,
                    s.sim_steps.mean,
                    s.explored_states.mean
                );
            }
        }
        Command::Oracle(args) => {
            let cfg = args.load()?;
            let env = cfg.env.build()?;
            let (q, eval) = bench::oracle(&env, cfg.oracle_gamma, cfg.eval_horizon)?;
            let mut out: Box<dyn Write> = match &args.out {
                Some(path) => Box::new(fs::File::create(path)?),
                None => Box::new(io::stdout().lock()),
            };
            writeln!(
                out,
                "env,states,actions,gamma,eval_horizon,optimum_per_step,start_max_q"
            )?;
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                cfg.env_kind,
                env.state_count(),
                env.action_count(),
                cfg.oracle_gamma,
                eval.horizon,
                eval.optimum,
                q.max_q(env.start_state())
            )?;
        }
        Command::Distribution { qtable, out } => {
            let rows = bench::read_qtable(&qtable)?;
            let values = bench::distribution_from_saved(&rows);
            write_to(out.as_deref(), |w| bench::write_distribution_to(w, &values))?;
        }
        Command::DumpGraph(args) => {
            let cfg = args.load()?;
            let agent_cfg = AgentConfig {
                algorithm: Algorithm::TimeHoppingEp,
                seed: cfg.base_seed,
                ..cfg.arms[0]
            };
            let mut agent = Agent::new(agent_cfg, cfg.env.build()?)?;
            for _ in 0..agent_cfg.max_steps {
                agent.train_step()?;
            }
            let graph = agent.graph().expect("propagation arm keeps a graph");
            write_to(args.out.as_deref(), |w| graph.write_csv(w))?;
        }
    }
    Ok(())
}

fn write_to(
    path: Option<&Path>,
    f: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), Error> {
    match path {
        Some(p) => f(&mut io::BufWriter::new(fs::File::create(p)?))?,
        None => f(&mut io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse_from(expand_key_flags(std::env::args()));
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::Config { .. } => 2,
                Error::Io(_) => 3,
                _ => 1,
            })
        }
    }
}
