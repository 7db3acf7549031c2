use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cfnav::bench::bench_inference;
use cfnav::config::resolve_scenario;
use cfnav::report::{metrics_report, write_belief_timeline, write_goal_posterior, write_predictions};
use cfnav::scenario::NodeEvent;
use cfnav::{run_scenario, Mode, RunOptions, Scenario, Trace};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cfnav", version, about = "Run, evaluate and benchmark intent-inference scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Simulate a scenario and write its trace.
    Run {
        #[command(flatten)]
        run: RunArgs,
        /// Trace output; `.cbor` selects the binary encoding.
        #[arg(long)]
        out: PathBuf,
        /// Also write belief_timeline.csv, goal_posterior.csv and predictions.csv here.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
    },
    /// Tracking metrics for a trace, or for a fresh run of a scenario.
    Eval {
        #[arg(long, conflicts_with = "scenario")]
        trace: Option<PathBuf>,
        #[command(flatten)]
        run: OptRunArgs,
        /// Match distance in meters.
        #[arg(long, default_value_t = 1.0)]
        cutoff: f64,
        /// JSON report path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Median time of one inference iteration.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 20])]
        agents: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [3usize])]
        goals: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or a name looked up in $CFNAV_CONFIG_DIR (default ./scenarios).
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    common: CommonRun,
}

#[derive(Args)]
struct OptRunArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    common: CommonRun,
}

#[derive(Args)]
struct CommonRun {
    #[arg(long, default_value = "inference-only")]
    mode: Mode,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    drop_prob: Option<f64>,
    /// Kill a tracker node at a time, as ID@SECONDS. Repeatable.
    #[arg(long = "kill-node", value_parser = parse_kill)]
    kills: Vec<NodeEvent>,
}

impl CommonRun {
    fn options(&self) -> RunOptions {
        RunOptions { mode: self.mode, seed: self.seed, drop_prob: self.drop_prob, kills: self.kills.clone() }
    }
}

fn parse_kill(s: &str) -> Result<NodeEvent, String> {
    let (id, at) = s.split_once('@').ok_or_else(|| format!("expected ID@T, got `{s}`"))?;
    let node = id.trim().parse().map_err(|e| format!("node id `{id}`: {e}"))?;
    let at: f64 = at.trim().parse().map_err(|e| format!("time `{at}`: {e}"))?;
    if !at.is_finite() || at < 0.0 {
        return Err(format!("time `{at}` must be a non-negative number"));
    }
    Ok(NodeEvent { node, at })
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let resolved = resolve_scenario(path);
    Scenario::load(&resolved).with_context(|| format!("loading scenario {}", resolved.display()))
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Verb::Run { run, out, csv_dir } => {
            let scenario = load_scenario(&run.scenario)?;
            let trace = run_scenario(&scenario, &run.common.options())?;
            trace.save(&out).with_context(|| format!("writing {}", out.display()))?;
            if let Some(dir) = csv_dir {
                std::fs::create_dir_all(&dir)?;
                write_belief_timeline(&trace, writer(&dir.join("belief_timeline.csv"))?)?;
                write_goal_posterior(&trace, writer(&dir.join("goal_posterior.csv"))?)?;
                write_predictions(&trace, writer(&dir.join("predictions.csv"))?)?;
            }
            eprintln!("{}: {} steps written to {}", scenario.name, trace.records.len(), out.display());
        }
        Verb::Eval { trace, run, cutoff, out } => {
            let trace = match (trace, run.scenario) {
                (Some(t), _) => Trace::load(&t).with_context(|| format!("reading {}", t.display()))?,
                (None, Some(s)) => {
                    let mut opts = run.common.options();
                    opts.mode = Mode::FullPipeline;
                    run_scenario(&load_scenario(&s)?, &opts)?
                }
                (None, None) => bail!("eval needs --trace or --scenario"),
            };
            if trace.header.sensors.is_empty() {
                bail!("trace has no tracker nodes; run with --mode full-pipeline");
            }
            let report = metrics_report(&trace, cutoff)?;
            let text = serde_json::to_string_pretty(&report)?;
            match out {
                Some(p) => writeln!(writer(&p)?, "{text}")?,
                None => println!("{text}"),
            }
        }
        Verb::Bench { agents, goals, iterations, out } => {
            let mut results = Vec::new();
            for &g in &goals {
                for &a in &agents {
                    let r = bench_inference(a, g, iterations)?;
                    eprintln!("agents {:>3} goals {:>3}: median {:.3} ms", r.agents, r.goals, r.median_ms);
                    results.push(r);
                }
            }
            let text = serde_json::to_string_pretty(&results)?;
            match out {
                Some(p) => writeln!(writer(&p)?, "{text}")?,
                None => println!("{text}"),
            }
        }
        Verb::Validate { scenario } => {
            let s = load_scenario(&scenario)?;
            println!("{}: ok ({} agents, {} sensors, {} steps)", s.name, s.agents.len(), s.sensors.len(), s.steps());
        }
    }
    Ok(())
}
