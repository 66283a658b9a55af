use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use babylon_sim::scenario::{self, check_trace, ScenarioConfig};
use babylon_sim::trace::{read_jsonl, write_jsonl};

#[derive(Parser)]
#[command(name = "babylon-sim", about = "Checkpointed-PoS protocol simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario from a config file and print its report.
    Run {
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the event trace as JSONL.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Re-run the checker on a previously written trace.
    Check { trace: PathBuf },
    /// Run a scenario across a seed range and print one summary line each.
    Matrix {
        config: PathBuf,
        /// Inclusive seed range, e.g. 0..19
        #[arg(long)]
        seeds: String,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ScenarioConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = ScenarioConfig::parse(&text).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.params.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(ok) => {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.cmd {
        Cmd::Run {
            config,
            seed,
            trace,
            report,
        } => {
            let cfg = load_config(&config, seed)?;
            let (world, rep) = scenario::run(&cfg).map_err(|e| e.to_string())?;
            if let Some(p) = trace {
                std::fs::write(&p, write_jsonl(&world.trace))
                    .map_err(|e| format!("{}: {e}", p.display()))?;
            }
            if let Some(p) = report {
                let json = serde_json::to_string_pretty(&rep).unwrap();
                std::fs::write(&p, json).map_err(|e| format!("{}: {e}", p.display()))?;
            }
            print!("{}", rep.render());
            Ok(!rep.failed())
        }
        Cmd::Check { trace } => {
            let text = std::fs::read_to_string(&trace)
                .map_err(|e| format!("{}: {e}", trace.display()))?;
            let events = read_jsonl(&text).map_err(|e| e.to_string())?;
            let rep = check_trace(&events);
            print!("{}", rep.render());
            Ok(!rep.failed())
        }
        Cmd::Matrix { config, seeds } => {
            let (a, b) = seeds
                .split_once("..")
                .ok_or_else(|| format!("bad seed range {seeds:?}; expected A..B"))?;
            let a: u64 = a.trim().parse().map_err(|_| format!("bad seed {a:?}"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad seed {b:?}"))?;
            let mut all_ok = true;
            println!("{:<6} {:<14} {:<8} {:<10} {}", "seed", "verdict", "safety", "liveness", "slashable");
            for seed in a..=b {
                let cfg = load_config(&config, Some(seed))?;
                let (_, rep) = scenario::run(&cfg).map_err(|e| e.to_string())?;
                println!(
                    "{:<6} {:<14} {:<8} {:<10} {:.3}",
                    seed, rep.verdict, rep.safety_violated, rep.liveness_violation_span,
                    rep.slashable_fraction
                );
                all_ok &= !rep.failed();
            }
            Ok(all_ok)
        }
    }
}
