//! Builds problems and networks from a config, runs the seeded simulations
//! and writes traces, summaries and the block-normalized comparison table.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use blockprox::engine::{self, EngineConfig, InitialCondition};
use blockprox::geometry::{BlockGeometry, BregmanGeometry};
use blockprox::graph::{self, NetworkModel};
use blockprox::metrics::{self, Recording, RunTrace, TraceRow};
use blockprox::problems::{
    make_synthetic_clusters, LabeledDataset, LogisticL1Oracle, SeparableQuadraticOracle,
    StochasticOracle, ZeroOracle,
};
use blockprox::reference::{self, CentralizedOptions, ReferenceSolution};
use blockprox::rng;
use blockprox::schedules::StepsizeSchedule;
use blockprox::BlockPartition;

use crate::config::{
    ExperimentConfig, GeometryKindConfig, ProblemKind, ScheduleKindConfig,
};

/// A problem instance built from the config.
pub enum BuiltOracle {
    Logistic(LogisticL1Oracle),
    Quadratic(SeparableQuadraticOracle),
    Zero(ZeroOracle),
}

impl BuiltOracle {
    pub fn as_dyn(&self) -> &dyn StochasticOracle {
        match self {
            BuiltOracle::Logistic(o) => o,
            BuiltOracle::Quadratic(o) => o,
            BuiltOracle::Zero(o) => o,
        }
    }
}

pub fn build_oracle(config: &ExperimentConfig) -> Result<BuiltOracle> {
    let p = &config.problem;
    let n_agents = config.network.n_agents;
    match p.kind {
        ProblemKind::LogisticL1 => {
            let data = match &p.dataset {
                Some(path) => LabeledDataset::load_csv(path)
                    .with_context(|| format!("loading dataset {}", path.display()))?,
                None => make_synthetic_clusters(
                    p.n_points,
                    p.dimension - 1,
                    p.separation,
                    p.data_seed,
                )?,
            };
            if data.dimension() != p.dimension {
                bail!(
                    "dataset dimension {} does not match problem.dimension {}",
                    data.dimension(),
                    p.dimension
                );
            }
            Ok(BuiltOracle::Logistic(LogisticL1Oracle::new(
                data, p.lambda, n_agents,
            )?))
        }
        ProblemKind::SeparableQuadratic => {
            Ok(BuiltOracle::Quadratic(SeparableQuadraticOracle::random_targets(
                n_agents,
                p.dimension,
                p.target_low,
                p.target_high,
                p.noise_std,
                p.samples_per_agent,
                p.data_seed,
            )?))
        }
        ProblemKind::Zero => Ok(BuiltOracle::Zero(ZeroOracle::new(p.dimension, n_agents))),
    }
}

pub fn build_network(config: &ExperimentConfig) -> Result<NetworkModel> {
    match &config.network.weights_file {
        Some(path) => NetworkModel::load_weights_csv(path)
            .with_context(|| format!("loading weights {}", path.display()))
            .and_then(|model| {
                let report = model.validate();
                if !report.all_pass() {
                    bail!("supplied weight matrix fails validation: {report:?}");
                }
                Ok(model)
            }),
        None => {
            let adj = graph::erdos_renyi(
                config.network.n_agents,
                config.network.connectivity,
                config.network.graph_seed,
            )?;
            Ok(graph::metropolis_hastings_weights(&adj)?)
        }
    }
}

pub fn build_schedule(config: &ExperimentConfig) -> Result<StepsizeSchedule> {
    let a = &config.algorithm;
    let n = config.network.n_agents;
    Ok(match a.schedule {
        ScheduleKindConfig::Constant => {
            StepsizeSchedule::uniform_constant(a.alpha.expect("validated"), n)?
        }
        ScheduleKindConfig::Diminishing => StepsizeSchedule::uniform_diminishing(
            a.alpha_base.expect("validated"),
            a.alpha_exponent.expect("validated"),
            n,
        )?,
    })
}

fn build_geometry(config: &ExperimentConfig, blocks: usize) -> Result<BlockGeometry> {
    let partition = Arc::new(BlockPartition::equal(config.problem.dimension, blocks)?);
    let geom = match config.algorithm.geometry {
        GeometryKindConfig::Quadratic => BregmanGeometry::quadratic(),
        GeometryKindConfig::EntropySimplex => BregmanGeometry::entropy_simplex(),
    };
    Ok(BlockGeometry::uniform(partition, geom))
}

/// Reference optimum for the configured problem: closed form where one
/// exists, otherwise a cached centralized solve.
pub fn reference_solution(
    config: &ExperimentConfig,
    oracle: &BuiltOracle,
    cache_dir: &Path,
) -> Result<ReferenceSolution> {
    match oracle {
        BuiltOracle::Zero(z) => Ok(ReferenceSolution {
            x_star: vec![0.0; z.dimension()],
            f_star: 0.0,
            iterations: 0,
            tolerance: 0.0,
            capped: false,
        }),
        BuiltOracle::Quadratic(q) => {
            let x_star = q.exact_optimum();
            Ok(ReferenceSolution {
                f_star: q.cost(&x_star),
                x_star,
                iterations: 0,
                tolerance: 0.0,
                capped: false,
            })
        }
        BuiltOracle::Logistic(l) => {
            let mut components = vec![
                l.lambda(),
                config.network.n_agents as f64,
                config.metrics.reference_iterations as f64,
                config.metrics.reference_step_scale,
            ];
            let data = l.dataset();
            for r in 0..data.n_samples() {
                components.extend_from_slice(data.feature(r));
                components.push(data.label(r));
            }
            let key = reference::problem_fingerprint("logistic_l1", &components);
            if let Some(cached) = reference::load_cached_solution(cache_dir, &key) {
                return Ok(cached);
            }
            let solution = reference::centralized_solve(
                l,
                &CentralizedOptions {
                    iterations: config.metrics.reference_iterations,
                    step_scale: config.metrics.reference_step_scale,
                    ..CentralizedOptions::default()
                },
            )?;
            reference::store_cached_solution(cache_dir, &key, &solution)?;
            Ok(solution)
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BlockSummary {
    pub blocks: usize,
    pub horizon: usize,
    pub seeds: usize,
    pub final_cost_error_avg: f64,
    pub final_f_best_error_avg: f64,
    pub final_consensus_max: f64,
    pub final_consensus_mean: f64,
    pub coords_sent_mean: f64,
    pub step_bound_violations: usize,
}

#[derive(Debug, Serialize)]
pub struct ExperimentSummary {
    pub reference_f_star: f64,
    pub reference_tolerance: f64,
    pub reference_capped: bool,
    pub per_block: Vec<BlockSummary>,
}

/// Runs the full experiment: per-seed traces, seed-averaged traces, a JSON
/// summary and (for multi-block sweeps) the block-normalized comparison
/// table. Returns the summary.
pub fn run_experiment(config: &ExperimentConfig, output_dir: &Path) -> Result<ExperimentSummary> {
    std::fs::create_dir_all(output_dir)?;
    std::fs::write(output_dir.join("config_resolved.toml"), config.to_toml()?)?;
    let oracle = build_oracle(config)?;
    let network = build_network(config)?;
    network.save_weights_csv(&output_dir.join("weights.csv"))?;
    let schedule = build_schedule(config)?;
    let reference = reference_solution(config, &oracle, output_dir)?;

    let mut per_block = Vec::new();
    let mut comparison: Vec<(usize, Vec<TraceRow>)> = Vec::new();
    for &blocks in &config.algorithm.blocks {
        let geometry = build_geometry(config, blocks)?;
        let horizon = config.horizon_for(blocks);
        let recording = Recording {
            eval_every: config.eval_stride_for(blocks),
            agent_costs: config.metrics.agent_costs,
            ..Recording::default()
        };
        let init = InitialCondition::UniformBox {
            low: config.algorithm.init_low,
            high: config.algorithm.init_high,
        };
        let seeds: Vec<u64> = (0..config.metrics.seeds as u64)
            .map(|k| rng::derive_seed(config.algorithm.master_seed, (blocks as u64) << 32 | k))
            .collect();
        let traces: Vec<RunTrace> = seeds
            .par_iter()
            .map(|&seed| {
                let engine_config = EngineConfig::uniform(
                    config.algorithm.variant,
                    config.algorithm.formulation,
                    horizon,
                    seed,
                    config.network.n_agents,
                    config.algorithm.p_on,
                    blocks,
                );
                engine::run(
                    &engine_config,
                    &network,
                    oracle.as_dyn(),
                    &schedule,
                    &geometry,
                    &init,
                    &recording,
                )
            })
            .collect::<blockprox::Result<_>>()?;

        for (k, trace) in traces.iter().enumerate() {
            metrics::write_trace_csv(
                &trace.rows,
                &output_dir.join(format!("trace_b{blocks}_seed{k}.csv")),
            )?;
        }
        let row_refs: Vec<&[TraceRow]> = traces.iter().map(|t| t.rows.as_slice()).collect();
        let averaged = metrics::average_rows(&row_refs)?;
        metrics::write_trace_csv(&averaged, &output_dir.join(format!("trace_b{blocks}_mean.csv")))?;

        let final_row = averaged.last().expect("nonempty trace");
        per_block.push(BlockSummary {
            blocks,
            horizon,
            seeds: config.metrics.seeds,
            final_cost_error_avg: final_row.cost_avg - reference.f_star,
            final_f_best_error_avg: final_row.f_best_avg - reference.f_star,
            final_consensus_max: final_row.consensus_max,
            final_consensus_mean: final_row.consensus_mean,
            coords_sent_mean: final_row.coords_sent,
            step_bound_violations: traces.iter().map(|t| t.step_bound_violations).sum(),
        });
        comparison.push((blocks, averaged));
    }

    if config.algorithm.blocks.len() > 1 {
        write_comparison_csv(&comparison, reference.f_star, &output_dir.join("comparison.csv"))?;
    }

    let summary = ExperimentSummary {
        reference_f_star: reference.f_star,
        reference_tolerance: reference.tolerance,
        reference_capped: reference.capped,
        per_block,
    };
    std::fs::write(
        output_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

/// Comparison table across block counts: cost error per communication round
/// `t` alongside the block-normalized axis `t / B`.
fn write_comparison_csv(
    averaged: &[(usize, Vec<TraceRow>)],
    f_star: f64,
    path: &Path,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(
        out,
        "blocks,round,normalized_round,cost_error_avg,f_best_error_avg"
    )?;
    for (blocks, rows) in averaged {
        for row in rows {
            let normalized = row.round as f64 / *blocks as f64;
            writeln!(
                out,
                "{},{},{},{},{}",
                blocks,
                row.round,
                normalized,
                row.cost_avg - f_star,
                row.f_best_avg - f_star
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Human-readable description of what a run would do, for `--dry-run`.
pub fn describe_plan(config: &ExperimentConfig, output_dir: &Path) -> String {
    let mut lines = Vec::new();
    lines.push(format!(
        "problem: {:?}, dimension {}, agents {}",
        config.problem.kind, config.problem.dimension, config.network.n_agents
    ));
    match &config.network.weights_file {
        Some(path) => lines.push(format!("network: pinned weights from {}", path.display())),
        None => lines.push(format!(
            "network: Erdos-Renyi p={} seed={} with Metropolis-Hastings weights",
            config.network.connectivity, config.network.graph_seed
        )),
    }
    lines.push(format!(
        "algorithm: {:?} / {:?}, p_on={}, master seed {}",
        config.algorithm.variant,
        config.algorithm.formulation,
        config.algorithm.p_on,
        config.algorithm.master_seed
    ));
    for &b in &config.algorithm.blocks {
        lines.push(format!(
            "  B={b}: horizon {}, eval stride {}, {} seeds",
            config.horizon_for(b),
            config.eval_stride_for(b),
            config.metrics.seeds
        ));
    }
    lines.push(format!("output: {}", output_dir.display()));
    lines.join("\n")
}

/// Resolves the effective output directory (CLI override wins).
pub fn effective_output_dir(config: &ExperimentConfig, cli_override: &Option<PathBuf>) -> PathBuf {
    cli_override
        .clone()
        .unwrap_or_else(|| config.output.directory.clone())
}
