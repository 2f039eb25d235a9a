//! Command-line front end. `run` does the work so it can be driven from
//! tests; the binary only parses arguments and sets the exit status.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::io::{parse_queries, parse_topology, write_frame, write_queries, write_rounds, write_trees};
use crate::netmodel::{InterferenceModel, Network, PhimParams, DEFAULT_SHRINK};
use crate::queries::{delay_feasible, fmt_num, necessary_condition, sufficient_condition, total_load, Query};
use crate::routing::Routing;
use crate::scheduler::build_frame;
use crate::selection::{select_queries, Phase};
use crate::sim::{
    routing_network, run_scenario_traced, run_scenario, run_sweep, simulate, RunOptions, SimConfig, SweepSpec,
    SWEEP_CSV_HEADER,
};

#[derive(Debug, Parser)]
#[command(name = "rtcollect", version, about = "Real-time data collection scheduling for wireless sensor networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the schedulability tests on a topology and query set.
    Check {
        #[command(flatten)]
        input: Inputs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        frame_t: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build routing trees and the TDMA frame.
    Schedule {
        #[command(flatten)]
        input: Inputs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        frame_t: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for `trees.txt` and `frame.txt`; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick a weighted subset of queries for an overloaded network.
    Select {
        #[arg(long)]
        queries: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the selected queries in query-file format.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a given topology and query set, or a generated scenario.
    Simulate {
        #[arg(long, requires = "queries")]
        topology: Option<PathBuf>,
        #[arg(long, requires = "topology")]
        queries: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Metrics JSON destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Event trace destination.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Per-round outcome table destination.
        #[arg(long)]
        rounds: Option<PathBuf>,
    },
    /// Sweep network size or sources per query over several seeds.
    Sweep {
        /// `size:FROM:TO:STEP` or `sources:FROM:TO:STEP`.
        #[arg(long)]
        sweep: SweepSpec,
        /// Number of seeds, starting at `--seed`.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[command(flatten)]
        run: RunArgs,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Inputs {
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Prim,
    Rtscts,
    Phim,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// PrIM interference-to-transmission range ratio.
    #[arg(long)]
    pub rho: Option<f64>,
    /// RTS/CTS interference range.
    #[arg(long)]
    pub interference_range: Option<f64>,
    #[arg(long)]
    pub power: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with simulation settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub frame_t: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub buffer_limit: Option<usize>,
    /// Disable the per-node buffer limit.
    #[arg(long, conflicts_with = "buffer_limit")]
    pub unbounded_buffers: bool,
    #[arg(long)]
    pub loss_scale: Option<f64>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub max_queries: Option<usize>,
}

impl ModelArgs {
    /// Applies the flags on top of `base`. Switching model kind starts from
    /// that kind's defaults.
    pub fn resolve(&self, base: InterferenceModel, tx_range: f64) -> Result<InterferenceModel> {
        let kind = self.model.unwrap_or(match base {
            InterferenceModel::Prim { .. } => ModelKind::Prim,
            InterferenceModel::RtsCts { .. } => ModelKind::Rtscts,
            InterferenceModel::Phim(_) => ModelKind::Phim,
        });
        let model = match kind {
            ModelKind::Prim => {
                let rho = match base {
                    InterferenceModel::Prim { rho } => rho,
                    _ => 2.0,
                };
                InterferenceModel::Prim { rho: self.rho.unwrap_or(rho) }
            }
            ModelKind::Rtscts => {
                let range = match base {
                    InterferenceModel::RtsCts { interference_range } => interference_range,
                    _ => None,
                };
                InterferenceModel::RtsCts { interference_range: self.interference_range.or(range) }
            }
            ModelKind::Phim => {
                let mut p = match base {
                    InterferenceModel::Phim(p) => p,
                    _ => PhimParams::for_range(tx_range, 2.0, 4.0, DEFAULT_SHRINK),
                };
                let refit = self.power.is_none() && self.noise.is_none();
                p.beta = self.beta.unwrap_or(p.beta);
                p.kappa = self.kappa.unwrap_or(p.kappa);
                if refit && !matches!(base, InterferenceModel::Phim(_)) {
                    p = PhimParams::for_range(tx_range, p.beta, p.kappa, p.shrink);
                }
                p.power = self.power.unwrap_or(p.power);
                p.noise = self.noise.unwrap_or(p.noise);
                InterferenceModel::Phim(p)
            }
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn load_config(path: Option<&Path>) -> Result<SimConfig> {
    let Some(path) = path else {
        return Ok(SimConfig::default());
    };
    let text = read(path)?;
    toml::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    pub fn config(&self) -> Result<SimConfig> {
        let mut cfg = load_config(self.config.as_deref())?;
        cfg.model = self.model.resolve(cfg.model, cfg.tx_range)?;
        if let Some(v) = self.frame_t {
            cfg.frame_t = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.buffer_limit {
            cfg.buffer_limit = Some(v);
        }
        if self.unbounded_buffers {
            cfg.buffer_limit = None;
        }
        if let Some(v) = self.loss_scale {
            cfg.loss_scale = v;
        }
        if let Some(v) = self.duration {
            cfg.duration = v;
        }
        if let Some(v) = self.nodes {
            cfg.node_count = v;
        }
        if let Some(v) = self.max_queries {
            cfg.max_queries = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn load_inputs(input: &Inputs) -> Result<(Network, Vec<Query>)> {
    let net = with_path(&input.topology, parse_topology(&read(&input.topology)?))?;
    let queries = with_path(&input.queries, parse_queries(&read(&input.queries)?))?;
    Ok((net, queries))
}

fn emit(out: &mut dyn Write, dest: Option<&Path>, text: &str) -> Result<()> {
    match dest {
        Some(p) => write_file(p, text),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

/// Executes a command and returns the process exit status.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Check { input, model, frame_t, config } => {
            let cfg = load_config(config.as_deref())?;
            let (net, queries) = load_inputs(&input)?;
            let model = model.resolve(cfg.model, net.tx_range())?;
            check(out, &net, &queries, &model, frame_t.unwrap_or(cfg.frame_t))
        }
        Command::Schedule { input, model, frame_t, config, out: dest } => {
            let cfg = load_config(config.as_deref())?;
            let (net, queries) = load_inputs(&input)?;
            let model = model.resolve(cfg.model, net.tx_range())?;
            let routed = routing_network(&net, &model)?;
            let routing = Routing::build(&routed, &queries)?;
            let frame = build_frame(&routed, &queries, &routing.trees, &model, frame_t.unwrap_or(cfg.frame_t))?;
            let trees = write_trees(std::iter::once(&routing.spanning).chain(routing.trees.values()));
            let frame = write_frame(&frame);
            match dest {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    write_file(&dir.join("trees.txt"), &trees)?;
                    write_file(&dir.join("frame.txt"), &frame)?;
                }
                None => write!(out, "{trees}{frame}")?,
            }
            Ok(0)
        }
        Command::Select { queries, model, config, out: dest } => {
            let cfg = load_config(config.as_deref())?;
            let qs = with_path(&queries, parse_queries(&read(&queries)?))?;
            let model = model.resolve(cfg.model, cfg.tx_range)?;
            let sel = select_queries(&qs, &model)?;
            let ids: Vec<String> = sel.ids.iter().map(|i| i.to_string()).collect();
            let phase = match sel.phase {
                Some(Phase::Single) => "single",
                Some(Phase::Knapsack) => "knapsack",
                None => "none",
            };
            writeln!(out, "selected: {}", if ids.is_empty() { "-".to_string() } else { ids.join(",") })?;
            writeln!(out, "weight: {}", fmt_num(sel.weight))?;
            writeln!(out, "phase: {phase}")?;
            writeln!(out, "capacity: {}", fmt_num(sel.capacity))?;
            if let Some(p) = dest {
                let chosen: Vec<Query> = qs.into_iter().filter(|q| sel.ids.contains(&q.id)).collect();
                write_file(&p, &write_queries(&chosen))?;
            }
            Ok(0)
        }
        Command::Simulate { topology, queries, run, out: dest, trace, rounds } => {
            let cfg = run.config()?;
            let outcome = match (topology, queries) {
                (Some(t), Some(q)) => {
                    let (net, qs) = load_inputs(&Inputs { topology: t, queries: q })?;
                    let model = run.model.resolve(load_config(run.config.as_deref())?.model, net.tx_range())?;
                    let opts = RunOptions {
                        frame_t: cfg.frame_t,
                        buffer_limit: cfg.buffer_limit,
                        loss_scale: cfg.loss_scale,
                        drop_expired: cfg.drop_expired,
                        duration: cfg.duration,
                        seed: cfg.seed,
                        record_trace: trace.is_some(),
                    };
                    simulate(&net, &model, &qs, &opts)?
                }
                _ if trace.is_some() => run_scenario_traced(&cfg)?,
                _ => run_scenario(&cfg)?,
            };
            if let Some(p) = trace {
                let mut text = outcome.trace_lines.join("\n");
                text.push('\n');
                write_file(&p, &text)?;
            }
            if let Some(p) = rounds {
                write_file(&p, &write_rounds(&outcome.rounds))?;
            }
            let mut json = outcome.metrics.to_json();
            json.push('\n');
            emit(out, dest.as_deref(), &json)?;
            Ok(0)
        }
        Command::Sweep { sweep, seeds, run, out: dest } => {
            if seeds == 0 {
                return Err(Error::InvalidInput("need at least one seed".into()));
            }
            let cfg = run.config()?;
            let seed_list: Vec<u64> = (cfg.seed..cfg.seed + seeds).collect();
            let rows = run_sweep(&cfg, &sweep, &seed_list)?;
            let mut text = String::from(SWEEP_CSV_HEADER);
            text.push('\n');
            for r in &rows {
                text.push_str(&r.csv());
                text.push('\n');
            }
            emit(out, dest.as_deref(), &text)?;
            Ok(0)
        }
    }
}

/// Prints each test's verdict; status 0 iff the sufficient condition holds.
pub fn check(
    out: &mut dyn Write,
    net: &Network,
    queries: &[Query],
    model: &InterferenceModel,
    frame_t: f64,
) -> Result<i32> {
    if queries.is_empty() {
        writeln!(out, "warning: no queries given")?;
    }
    writeln!(
        out,
        "model: {}, nodes: {}, queries: {}, total load: {}",
        model.name(),
        net.len(),
        queries.len(),
        fmt_num(total_load(queries))
    )?;
    let nec = necessary_condition(net, queries, model)?;
    let suf = sufficient_condition(queries, model)?;
    let delay = delay_feasible(net, queries, model, frame_t)?;
    writeln!(out, "necessary: {nec}")?;
    writeln!(out, "sufficient: {suf}")?;
    let failed: Vec<String> = delay
        .verdicts
        .iter()
        .flat_map(|(_, v)| v.violations().iter().map(ToString::to_string))
        .collect();
    if failed.is_empty() {
        writeln!(out, "delay: PASS (R = {}, required deadline {})", delay.radius, fmt_num(delay.required))?;
    } else {
        writeln!(out, "delay: FAIL ({})", failed.join("; "))?;
    }
    if delay.frame_not_above_periods && !queries.is_empty() {
        writeln!(out, "note: T = {} does not exceed every query period", fmt_num(frame_t))?;
    }
    Ok(if suf.passed() { 0 } else { 1 })
}
