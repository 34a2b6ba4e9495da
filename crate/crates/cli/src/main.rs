use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shiftvit_core::harness::{self, ProveConfig, Report, SuiteConfig, SuiteName};
use shiftvit_core::pipeline::{ModelConfig, Switch};
use shiftvit_core::Result;

/// Shift-equivariance suites for adaptive vision transformer layers.
#[derive(Parser)]
#[command(name = "shiftvit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run property and metric suites on a model config.
    Run {
        /// Model config JSON; the rank-1 default when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "SHIFTVIT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suites to run; all when omitted.
        #[arg(long = "suite")]
        suites: Vec<SuiteName>,
        /// Adaptive switches to turn off.
        #[arg(long = "disable")]
        disable: Vec<Switch>,
    },
    /// Check a primitive property at every offset for a small size.
    Prove {
        #[arg(long)]
        suite: SuiteName,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: usize,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        /// Random inputs checked at every offset.
        #[arg(long, default_value_t = 100)]
        inputs: usize,
        #[arg(long, env = "SHIFTVIT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the counterexamples in a report or counterexample file.
    Replay { file: PathBuf },
}

fn summarize(report: &Report) {
    for r in &report.suites {
        let name = match r.ablated {
            Some(sw) => format!("{}/{}[{sw}]", r.suite, r.name.name()),
            None => format!("{}/{}", r.suite, r.name.name()),
        };
        eprintln!(
            "{} {name} trials={} passes={} failures={} ties={} max_divergence={:e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.trials,
            r.passes,
            r.failures,
            r.tie_count,
            r.max_divergence
        );
    }
    for m in &report.metrics {
        eprintln!(
            "METRIC {} {} {:?} = {} (tied trials {})",
            m.suite, m.model, m.report.metric, m.report.aggregate, m.report.tied_trials
        );
    }
}

fn emit(report: &Report, out: Option<PathBuf>) -> Result<ExitCode> {
    summarize(report);
    let json = report.to_json();
    match out {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, seed, trials, out, suites, disable } => {
            let model = match &config {
                Some(path) => harness::load_model_config(path)?,
                None => ModelConfig::rank1_default(),
            };
            let mut cfg = SuiteConfig::new(model, trials, seed).with_suites(suites).with_disabled(disable);
            cfg.config_path = config.map(|p| p.display().to_string());
            emit(&harness::run(&cfg)?, out)
        }
        Command::Prove { suite, n, l, rank, inputs, seed, out } => {
            let cfg = ProveConfig { rank, inputs, seed, ..ProveConfig::new(suite, n, l) };
            emit(&harness::prove(&cfg)?, out)
        }
        Command::Replay { file } => {
            let outcomes = harness::replay_file(&file)?;
            let mut failing = false;
            for o in &outcomes {
                let still = o.still_fails();
                failing |= still;
                println!(
                    "{} {} recorded={:e} replayed={:e} tolerance={:e}",
                    if still { "FAILS" } else { "OK" },
                    o.property.name(),
                    o.recorded,
                    o.divergence,
                    o.tolerance
                );
            }
            if outcomes.is_empty() {
                println!("OK no counterexamples");
            }
            Ok(if failing { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
