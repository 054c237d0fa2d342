//! Experiment driver: config-driven simulation runs, verification suites,
//! reference solves and dataset generation.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use blockprox_cli::config::{ExperimentConfig, ProblemKind};
use blockprox_cli::{experiment, verify};

#[derive(Parser)]
#[command(
    name = "blockprox",
    about = "Distributed block proximal optimization simulator",
    version
)]
struct Cli {
    /// Worker threads for the simulation pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Validate the config and print the resolved plan without running.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run a named verification suite (consensus, prox, equivalence,
    /// bounds, all).
    Verify { suite: String },
    /// Solve and cache the centralized reference optimum for a config.
    SolveReference {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Generate the configured dataset and write it as CSV.
    GenData {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let threads = cli.threads;
    let result = match threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .context("building thread pool");
            match pool {
                Ok(pool) => pool.install(|| dispatch(cli.command)),
                Err(e) => Err(e),
            }
        }
        None => dispatch(cli.command),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            seed,
            output_dir,
            dry_run,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.algorithm.master_seed = seed;
            }
            let out = experiment::effective_output_dir(&cfg, &output_dir);
            if dry_run {
                println!("{}", experiment::describe_plan(&cfg, &out));
                return Ok(());
            }
            let summary = experiment::run_experiment(&cfg, &out)?;
            println!(
                "reference f* = {} (tolerance {})",
                summary.reference_f_star, summary.reference_tolerance
            );
            for b in &summary.per_block {
                println!(
                    "B={}: final cost error {:.6e}, f_best error {:.6e}, consensus max {:.3e}",
                    b.blocks,
                    b.final_cost_error_avg,
                    b.final_f_best_error_avg,
                    b.final_consensus_max
                );
            }
            println!("artifacts written to {}", out.display());
            Ok(())
        }
        Command::Verify { suite } => {
            let checks = verify::run_suite(&suite)?;
            verify::report(&checks)
        }
        Command::SolveReference { config, output_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = experiment::effective_output_dir(&cfg, &output_dir);
            std::fs::create_dir_all(&out)?;
            let oracle = experiment::build_oracle(&cfg)?;
            let solution = experiment::reference_solution(&cfg, &oracle, &out)?;
            println!(
                "f* = {} after {} iterations (tolerance {}, capped: {})",
                solution.f_star, solution.iterations, solution.tolerance, solution.capped
            );
            Ok(())
        }
        Command::GenData { config, output_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            if cfg.problem.kind != ProblemKind::LogisticL1 {
                bail!("gen-data only applies to logistic_l1 problems");
            }
            let out = experiment::effective_output_dir(&cfg, &output_dir);
            std::fs::create_dir_all(&out)?;
            let data = blockprox::problems::make_synthetic_clusters(
                cfg.problem.n_points,
                cfg.problem.dimension - 1,
                cfg.problem.separation,
                cfg.problem.data_seed,
            )?;
            let path = out.join("dataset.csv");
            data.save_csv(&path)?;
            println!("wrote {} samples to {}", data.n_samples(), path.display());
            Ok(())
        }
    }
}
