use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use trafficrecon::commands::{
    cmd_convergence, cmd_evaluate, cmd_generate, cmd_train, load_dataset, preferred_mse,
};
use trafficrecon::RunConfig;

#[derive(Parser)]
#[command(
    name = "trafficrecon",
    version,
    about = "Traffic density reconstruction from probe vehicles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration, layered over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario: waves or shock.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the ground-truth fleet and write train.csv, test.csv and meta.json.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit segment counts to a dataset; defaults to the configuration stored with it.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Reconstruct densities, simulate test vehicles and compare with the Godunov solution.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        results: PathBuf,
    },
    /// Run the full pipeline for every fleet size in `convergence.vehicles`.
    Convergence {
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common, dataset: Option<&PathBuf>) -> Result<RunConfig> {
    match (dataset, common.config.is_none() && common.preset.is_none()) {
        (Some(dir), true) => Ok(load_dataset(dir)?.0.config),
        _ => RunConfig::load(common.config.as_deref(), common.preset.as_deref()),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let started = Instant::now();
    match cli.command {
        Command::Generate { common } => {
            let config = resolve(&common, None)?;
            let meta = cmd_generate(&config, &common.out)?;
            println!(
                "dataset: N={} n={} n_test={} max_alpha={} alpha_assumption={} (ratio {:.4} vs C={})",
                meta.vehicles,
                meta.followers,
                meta.test_vehicles,
                meta.alpha_assumption.max_alpha,
                if meta.alpha_assumption.pass { "ok" } else { "violated" },
                meta.alpha_assumption.ratio,
                meta.alpha_assumption.constant,
            );
        }
        Command::Train { common, dataset } => {
            let config = resolve(&common, Some(&dataset))?;
            let result = cmd_train(&config, &dataset, &common.out)?;
            println!(
                "train loss {:.6e} -> {:.6e} over {} epochs",
                result.initial_loss, result.best_loss, result.epochs_run
            );
        }
        Command::Evaluate {
            common,
            dataset,
            results,
        } => {
            let config = resolve(&common, Some(&dataset))?;
            let report = cmd_evaluate(&config, &dataset, &results, &common.out)?;
            let (mse, unit) = preferred_mse(&config, &report);
            println!(
                "test MSE {mse:.6e} {unit}, RE {:.6e}, W(0) {:.6e}, L1 vs Godunov {:.6e}",
                report.re_test, report.wasserstein_init, report.density_l1_vs_godunov
            );
        }
        Command::Convergence { common } => {
            let config = resolve(&common, None)?;
            let rows = cmd_convergence(&config, &common.out)?;
            for r in rows {
                println!(
                    "N={:>6} W(0)={:.6e} L1(T)={:.6e} MSE={:.6e}",
                    r.vehicles, r.wasserstein_init, r.density_l1_final, r.mse_test
                );
            }
        }
    }
    eprintln!("wall time {:.2}s", started.elapsed().as_secs_f64());
    Ok(())
}
