//! Named verification suites behind `blockprox verify <suite>`.
//!
//! Each suite runs a group of property checks at small scale and prints one
//! line per check; any failure makes the command exit nonzero with the
//! failing invariant named.

use std::sync::Arc;

use anyhow::{bail, Result};
use rand::Rng;

use blockprox::engine::{self, EngineConfig, Formulation, InitialCondition, Variant};
use blockprox::geometry::{BlockGeometry, BregmanGeometry};
use blockprox::graph;
use blockprox::metrics::{self, BoundInputs, Recording};
use blockprox::problems::{
    estimate_bounds, make_synthetic_clusters, LogisticL1Oracle, SeparableQuadraticOracle,
    StochasticOracle, ZeroOracle,
};
use blockprox::reference;
use blockprox::rng;
use blockprox::schedules::StepsizeSchedule;
use blockprox::BlockPartition;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

pub fn run_suite(suite: &str) -> Result<Vec<Check>> {
    let checks = match suite {
        "prox" => prox_suite(),
        "consensus" => consensus_suite()?,
        "equivalence" => equivalence_suite()?,
        "bounds" => bounds_suite()?,
        "all" => {
            let mut all = prox_suite();
            all.extend(consensus_suite()?);
            all.extend(equivalence_suite()?);
            all.extend(bounds_suite()?);
            all
        }
        other => bail!("unknown suite '{other}'; choose consensus, prox, equivalence, bounds or all"),
    };
    Ok(checks)
}

pub fn report(checks: &[Check]) -> Result<()> {
    let mut failed = Vec::new();
    for c in checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {} {}", c.name, c.detail);
        if !c.passed {
            failed.push(c.name);
        }
    }
    if !failed.is_empty() {
        bail!("failed invariants: {}", failed.join(", "));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

fn prox_suite() -> Vec<Check> {
    let mut checks = Vec::new();
    let mut rng = rng::data_rng(501);

    // Quadratic prox is exactly the explicit step.
    let quad = BregmanGeometry::quadratic();
    let mut max_dev = 0.0f64;
    for _ in 0..10_000 {
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c = rng.random_range(0.01..1.0);
        let u = quad.prox(&a, &g, c).unwrap();
        for k in 0..4 {
            max_dev = max_dev.max((u[k] - (a[k] - c * g[k])).abs());
        }
    }
    checks.push(check(
        "prox.quadratic_closed_form",
        max_dev == 0.0,
        format!("max |prox - (a - c g)| = {max_dev}"),
    ));

    // Entropy prox against a dense simplex grid search.
    let ent = BregmanGeometry::entropy_simplex();
    let a = [0.5, 0.5];
    let g = [std::f64::consts::LN_2, 0.0];
    let u = ent.prox(&a, &g, 1.0).unwrap();
    let mut best = (f64::INFINITY, 0.0);
    for k in 1..100_000 {
        let s = k as f64 / 100_000.0;
        let cand = [s, 1.0 - s];
        let div = cand[0] * (cand[0] / a[0]).ln() + cand[1] * (cand[1] / a[1]).ln();
        let val = g[0] * cand[0] + g[1] * cand[1] + div;
        if val < best.0 {
            best = (val, s);
        }
    }
    let grid_dev = (u[0] - best.1).abs();
    checks.push(check(
        "prox.entropy_grid_search",
        grid_dev <= 1e-4,
        format!("|closed form - grid argmin| = {grid_dev}"),
    ));

    // First-order optimality residual over random instances.
    let geoms = [
        BregmanGeometry::quadratic(),
        BregmanGeometry::quadratic_box(vec![-1.0; 3], vec![1.0; 3]).unwrap(),
        BregmanGeometry::entropy_simplex(),
    ];
    let mut min_residual = f64::INFINITY;
    for _ in 0..10_000 {
        for geom in &geoms {
            let simplex = matches!(geom.feasible_set(), blockprox::geometry::FeasibleSet::Simplex);
            let draw_point = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                if simplex {
                    let raw: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 1e-3).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|x| x / s).collect()
                } else {
                    (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()
                }
            };
            let a = draw_point(&mut rng);
            let v = draw_point(&mut rng);
            let g: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let c = rng.random_range(0.01..1.0);
            let u = geom.prox(&a, &g, c).unwrap();
            let grad_u = geom.dgf_gradient(&u).unwrap();
            let grad_a = geom.dgf_gradient(&a).unwrap();
            let residual: f64 = (0..3)
                .map(|k| (c * g[k] + grad_u[k] - grad_a[k]) * (v[k] - u[k]))
                .sum();
            min_residual = min_residual.min(residual);
        }
    }
    checks.push(check(
        "prox.first_order_optimality",
        min_residual >= -1e-9,
        format!("min residual {min_residual}"),
    ));

    // Simplex closure and step bound.
    let mut sum_dev = 0.0f64;
    let mut step_excess = 0.0f64;
    for _ in 0..5_000 {
        let raw: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        let a: Vec<f64> = raw.into_iter().map(|x| x / s).collect();
        let g: Vec<f64> = (0..5).map(|_| rng.random_range(-6.0..6.0)).collect();
        let c = rng.random_range(0.01..1.0);
        let u = ent.prox(&a, &g, c).unwrap();
        sum_dev = sum_dev.max((u.iter().sum::<f64>() - 1.0).abs());
        let step: f64 = u
            .iter()
            .zip(&a)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let gnorm: f64 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        step_excess = step_excess.max(step - c * gnorm);
    }
    checks.push(check(
        "prox.simplex_closure",
        sum_dev <= 1e-12,
        format!("max |sum - 1| = {sum_dev}"),
    ));
    checks.push(check(
        "prox.step_bound",
        step_excess <= 1e-12,
        format!("max (step - c||g||) = {step_excess}"),
    ));
    checks
}

fn consensus_suite() -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    // Pure consensus: nonincreasing per-coordinate spread, vanishing fast.
    let adj = graph::erdos_renyi(8, 0.5, 71)?;
    let network = graph::metropolis_hastings_weights(&adj)?;
    let partition = Arc::new(BlockPartition::new(vec![1; 3])?);
    let geometry = BlockGeometry::uniform(partition.clone(), BregmanGeometry::quadratic());
    let oracle = ZeroOracle::new(3, 8);
    let schedule = StepsizeSchedule::uniform_constant(1.0, 8)?;
    let config = EngineConfig::uniform(Variant::Proximal, Formulation::Compact, 5000, 7, 8, 0.5, 3);
    let trace = engine::run(
        &config,
        &network,
        &oracle,
        &schedule,
        &geometry,
        &InitialCondition::UniformBox { low: -1.0, high: 1.0 },
        &Recording {
            eval_every: 0,
            agent_costs: false,
            spread_every: 1,
            ..Recording::default()
        },
    )?;
    let mut monotone = true;
    for w in trace.spread_per_block.windows(2) {
        for l in 0..3 {
            if w[1][l] > w[0][l] + 1e-12 {
                monotone = false;
            }
        }
    }
    let final_spread = trace
        .spread_per_block
        .last()
        .unwrap()
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    checks.push(check(
        "consensus.spread_nonincreasing",
        monotone,
        String::new(),
    ));
    checks.push(check(
        "consensus.spread_vanishes",
        final_spread < 1e-8,
        format!("spread after 5000 rounds = {final_spread}"),
    ));

    // Realized consensus matrices: row sums, selection frequencies, replay.
    let oracle = SeparableQuadraticOracle::random_targets(8, 4, -1.0, 1.0, 0.1, 6, 3)?;
    let partition = Arc::new(BlockPartition::equal(4, 2)?);
    let geometry = BlockGeometry::uniform(partition.clone(), BregmanGeometry::quadratic());
    let schedule = StepsizeSchedule::uniform_constant(0.1, 8)?;
    // The 0.02 frequency tolerance is calibrated for 1e4 recorded rounds.
    let config =
        EngineConfig::uniform(Variant::Proximal, Formulation::Compact, 10_000, 3, 8, 0.7, 2);
    let trace = engine::run(
        &config,
        &network,
        &oracle,
        &schedule,
        &geometry,
        &InitialCondition::UniformBox { low: -1.0, high: 1.0 },
        &Recording {
            eval_every: 0,
            agent_costs: false,
            record_events: true,
            record_states: true,
            ..Recording::default()
        },
    )?;
    let events = trace.events.as_ref().unwrap();
    let mut max_row_dev = 0.0f64;
    for round in events {
        for l in 0..2 {
            let w = metrics::realized_consensus_matrix(round, &network, l);
            for row in &w {
                max_row_dev = max_row_dev.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    checks.push(check(
        "consensus.realized_matrix_row_stochastic",
        max_row_dev <= 1e-12,
        format!("max |row sum - 1| = {max_row_dev}"),
    ));
    let rates = metrics::empirical_draw_rates(events, 8, 2);
    let max_rate_dev = rates
        .iter()
        .flatten()
        .map(|r| (r - 0.35).abs())
        .fold(0.0, f64::max);
    checks.push(check(
        "consensus.selection_frequencies",
        max_rate_dev <= 0.02,
        format!("max |rate - pi| = {max_rate_dev}"),
    ));
    let replay = metrics::replay_max_deviation(&trace, &network, &partition)?;
    checks.push(check(
        "consensus.replay_exact",
        replay <= 1e-10,
        format!("max replay deviation = {replay}"),
    ));

    // Contraction estimate against the eigenvalue of the expected matrix on
    // a ring.
    let ring = {
        let edges: Vec<(usize, usize)> = (0..5).map(|i| (i, (i + 1) % 5)).collect();
        let adj = graph::Adjacency::from_edges(5, &edges)?;
        graph::metropolis_hastings_weights(&adj)?
    };
    let pi = vec![vec![1.0]; 5];
    let estimate = metrics::estimate_contraction(&ring, &pi, 8, 120, 7)?;
    // Metropolis-Hastings ring weights are circulant; the second eigenvalue
    // is (1 + 2 cos(2 pi / 5)) / 3.
    let lambda2 = (1.0 + 2.0 * (2.0 * std::f64::consts::PI / 5.0).cos()) / 3.0;
    checks.push(check(
        "consensus.contraction_estimate",
        (estimate.mu - lambda2).abs() <= 0.05,
        format!("estimated {} vs eigenvalue {lambda2}", estimate.mu),
    ));
    Ok(checks)
}

fn equivalence_suite() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let n = 8;
    let adj = graph::erdos_renyi(n, 0.5, 100)?;
    let network = graph::metropolis_hastings_weights(&adj)?;
    let data = make_synthetic_clusters(40, 9, 2.5, 4)?;
    let oracle = LogisticL1Oracle::new(data, 0.1, n)?;
    let schedule = StepsizeSchedule::uniform_constant(0.2, n)?;

    // Copy-table vs compact, bit-identical trajectories.
    let mut identical = true;
    for &blocks in &[1usize, 5] {
        let partition = Arc::new(BlockPartition::equal(10, blocks)?);
        let geometry = BlockGeometry::uniform(partition, BregmanGeometry::quadratic());
        for &p_on in &[0.7, 1.0] {
            for seed in 0..2u64 {
                let mut config = EngineConfig::uniform(
                    Variant::Proximal,
                    Formulation::CopyTable,
                    500,
                    seed,
                    n,
                    p_on,
                    blocks,
                );
                let recording = Recording {
                    agent_costs: false,
                    record_states: true,
                    eval_every: 0,
                    ..Recording::default()
                };
                let init = InitialCondition::UniformBox { low: -1.0, high: 1.0 };
                let a = engine::run(&config, &network, &oracle, &schedule, &geometry, &init, &recording)?;
                config.formulation = Formulation::Compact;
                let b = engine::run(&config, &network, &oracle, &schedule, &geometry, &init, &recording)?;
                if a.state_snapshots != b.state_snapshots {
                    identical = false;
                }
            }
        }
    }
    checks.push(check(
        "equivalence.copy_table_vs_compact",
        identical,
        String::new(),
    ));

    // Single-block engine vs the independent subgradient reference.
    let partition = Arc::new(BlockPartition::equal(10, 1)?);
    let geometry = BlockGeometry::uniform(partition, BregmanGeometry::quadratic());
    let mut max_dev = 0.0f64;
    for seed in 0..2u64 {
        let config = EngineConfig::uniform(
            Variant::Proximal,
            Formulation::CopyTable,
            500,
            seed,
            n,
            1.0,
            1,
        );
        let trace = engine::run(
            &config,
            &network,
            &oracle,
            &schedule,
            &geometry,
            &InitialCondition::UniformBox { low: -1.0, high: 1.0 },
            &Recording {
                agent_costs: false,
                record_states: true,
                eval_every: 0,
                ..Recording::default()
            },
        )?;
        let traj = reference::distributed_subgradient_reference(&network, &oracle, 0.2, 1.0, 500, seed)?;
        let snaps = trace.state_snapshots.as_ref().unwrap();
        for t in 0..=500 {
            for i in 0..n {
                for k in 0..10 {
                    max_dev = max_dev.max((snaps[t][i].as_slice()[k] - traj[t][i][k]).abs());
                }
            }
        }
    }
    checks.push(check(
        "equivalence.single_block_vs_reference",
        max_dev <= 1e-12,
        format!("max coordinate deviation = {max_dev}"),
    ));

    // Variant shortcuts match the general proximal update where licensed.
    let quad_oracle = SeparableQuadraticOracle::random_targets(n, 9, -1.0, 2.0, 0.2, 12, 3)?;
    let partition = Arc::new(BlockPartition::equal(9, 3)?);
    let geometry = BlockGeometry::uniform(partition, BregmanGeometry::quadratic());
    let run_variant = |variant| -> Result<Vec<blockprox::BlockVector>> {
        let config = EngineConfig::uniform(variant, Formulation::Compact, 400, 21, n, 0.9, 3);
        Ok(engine::run(
            &config,
            &network,
            &quad_oracle,
            &schedule,
            &geometry,
            &InitialCondition::UniformBox { low: -1.0, high: 1.0 },
            &Recording {
                agent_costs: false,
                ..Recording::default()
            },
        )?
        .final_states)
    };
    let prox_states = run_variant(Variant::Proximal)?;
    let same = run_variant(Variant::Subgradient)? == prox_states
        && run_variant(Variant::Smooth)? == prox_states
        && run_variant(Variant::Separable)? == prox_states;
    checks.push(check("equivalence.special_instances", same, String::new()));
    Ok(checks)
}

fn bounds_suite() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let n = 8;
    let blocks = 2;
    let alpha = 0.1;
    let horizon = 1000;
    let seeds = 10u64;
    let adj = graph::erdos_renyi(n, 0.5, 404)?;
    let network = graph::metropolis_hastings_weights(&adj)?;
    let oracle = SeparableQuadraticOracle::random_targets(n, 6, -1.0, 2.0, 0.2, 20, 11)?;
    let partition = Arc::new(BlockPartition::equal(6, blocks)?);
    let geometry = BlockGeometry::uniform(partition, BregmanGeometry::quadratic());
    let schedule = StepsizeSchedule::uniform_constant(alpha, n)?;
    let pi = vec![vec![0.5; blocks]; n];
    let x_star = oracle.exact_optimum();
    let f_star = oracle.cost(&x_star);

    let bounds = estimate_bounds(&oracle, 100, 3.0, 9);
    let contraction = metrics::estimate_contraction(&network, &pi, 100, 150, 33)?;
    checks.push(check(
        "bounds.contraction_in_unit_interval",
        contraction.mu > 0.0 && contraction.mu < 1.0,
        format!("mu = {}", contraction.mu),
    ));

    let mut eval_rounds = Vec::new();
    let mut mean_agent_costs: Vec<Vec<f64>> = Vec::new();
    let mut c_init = 0.0;
    let mut v0 = 0.0;
    for seed in 0..seeds {
        let config = EngineConfig::uniform(
            Variant::Proximal,
            Formulation::Compact,
            horizon,
            rng::derive_seed(3000, seed),
            n,
            1.0,
            blocks,
        );
        let trace = engine::run(
            &config,
            &network,
            &oracle,
            &schedule,
            &geometry,
            &InitialCondition::UniformBox { low: -1.0, high: 1.0 },
            &Recording {
                eval_every: 20,
                agent_costs: true,
                record_states: true,
                ..Recording::default()
            },
        )?;
        if mean_agent_costs.is_empty() {
            eval_rounds = trace.rows.iter().map(|r| r.round).collect();
            mean_agent_costs = vec![vec![0.0; n]; eval_rounds.len()];
        }
        for (row, costs) in trace.cost_per_agent.iter().enumerate() {
            for (i, &c) in costs.iter().enumerate() {
                mean_agent_costs[row][i] += c / seeds as f64;
            }
        }
        let initial = &trace.state_snapshots.as_ref().unwrap()[0];
        c_init += initial
            .iter()
            .map(|s| s.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / seeds as f64;
        v0 += metrics::lyapunov(initial, &geometry, &pi, &x_star)? / seeds as f64;
    }
    let report = metrics::bound_curves(
        &BoundInputs {
            a_min: alpha,
            a_max: alpha,
            num_blocks: blocks,
            g_total: bounds.total_norm(),
            g_sq_total: bounds.total_norm_sq(),
            sigma: 1.0,
            mu: contraction.mu,
            m_const: contraction.m_hat,
            c_init,
            v0,
        },
        horizon,
    )?;
    let mut running = vec![f64::INFINITY; n];
    let mut covered = 0usize;
    for (row, &round) in eval_rounds.iter().enumerate() {
        for (best, &c) in running.iter_mut().zip(&mean_agent_costs[row]) {
            *best = best.min(c);
        }
        let worst = running.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if worst - f_star <= report.optimality[round] {
            covered += 1;
        }
    }
    let fraction = covered as f64 / eval_rounds.len() as f64;
    checks.push(check(
        "bounds.empirical_below_bound",
        fraction >= 0.95,
        format!("bound dominated on {:.1}% of rounds", fraction * 100.0),
    ));
    Ok(checks)
}
