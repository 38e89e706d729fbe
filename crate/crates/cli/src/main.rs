//! Command-line runner for deployment experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use leo_deploy::experiment::{run, ExperimentConfig, Mode};

#[derive(Debug, Parser)]
#[command(name = "leo-deploy", version, about = "Robust microservice deployment on LEO constellations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs the experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's mode.
        #[arg(long)]
        mode: Option<String>,
        /// Runs a single seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let Command::Run { config, mode, seed, out } = cli.command;
    let mut cfg =
        ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(m) = mode {
        cfg.mode = m.parse::<Mode>()?;
    }
    if let Some(s) = seed {
        cfg.seeds = Some(vec![s]);
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    let summary = run(&cfg).with_context(|| format!("{} run failed", cfg.mode))?;
    println!(
        "{} run complete: {} files in {}",
        cfg.mode,
        summary.manifest.outputs.len(),
        summary.output_dir.display()
    );
    if let Some(report) = &summary.reproduce {
        for fig in &report.figures {
            for s in &fig.series {
                let values: Vec<String> = s.per_slot.iter().map(|v| format!("{v:.1}")).collect();
                println!("{} {} {}: {}", fig.figure, fig.metric, s.label, values.join(" "));
            }
        }
        for t in &report.timing {
            println!(
                "decision latency light={} satellites={}: mean {:.3} ms, p95 {:.3} ms",
                t.cell.light,
                t.cell.satellites(),
                t.stats.mean_ms,
                t.stats.p95_ms
            );
        }
    }
    if !summary.games.is_empty() {
        let failed = summary.games.iter().filter(|g| !g.passed()).count();
        println!("games checked: {}, failures: {failed}", summary.games.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
