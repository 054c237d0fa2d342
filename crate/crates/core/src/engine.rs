//! The synchronous round simulator.
//!
//! Each round every agent refreshes its copy table from the previous round's
//! broadcasts, then each awake agent averages its in-neighbors' estimates,
//! draws one block and one local sample, applies a proximal step to that
//! block only, and broadcasts the updated block. Idle agents keep their
//! state. Rounds are separated by a barrier: all reads target the previous
//! round's snapshot, so agents may be processed in parallel and the result
//! is bit-identical for any worker count.
//!
//! Two formulations run the same mathematics: `CopyTable` drives the
//! consensus from per-agent copies maintained out of single-block messages,
//! `Compact` reads true neighbor states directly. Because the graph is fixed
//! and every updated block is broadcast, the copies always equal the true
//! states and the two formulations produce identical trajectories; the copy
//! table form asserts that equality in debug builds.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::block::BlockVector;
use crate::error::{Error, Result};
use crate::geometry::{BlockGeometry, FeasibleSet};
use crate::graph::{NetworkModel, STOCHASTICITY_TOL};
use crate::metrics::{AgentEvent, Recorder, Recording, RoundEvents, RunTrace};
use crate::problems::StochasticOracle;
use crate::rng;
use crate::schedules::StepsizeSchedule;

// Re-exported here because the round randomness is part of the engine's
// public contract.
pub use crate::rng::{AgentSampler, RoundDraw};

/// Relative slack on the step-bound check, covering float rounding in the
/// norm computations.
const STEP_BOUND_REL_SLACK: f64 = 1e-9;

/// Which update rule runs on the drawn block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Proximal step on the drawn block of a whole stochastic subgradient.
    Proximal,
    /// Explicit step `y_l - alpha g_l`; requires quadratic geometry over all
    /// of space, where it equals the proximal step.
    Subgradient,
    /// Proximal step fed by the partial gradient of a smooth sampled cost.
    Smooth,
    /// Separable costs: consensus and subgradient touch only the drawn
    /// block, with the consensus vector maintained incrementally.
    Separable,
}

/// How neighbor estimates are sourced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Per-agent copy tables refreshed by single-block broadcasts.
    CopyTable,
    /// Direct reads of the previous round's true states.
    Compact,
}

/// Simulation parameters.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub variant: Variant,
    pub formulation: Formulation,
    /// Number of rounds to simulate.
    pub horizon: usize,
    pub master_seed: u64,
    /// Per-agent awake probability, each in `(0, 1]`.
    pub awake_probs: Vec<f64>,
    /// Per-agent block distribution, strictly positive rows summing to one.
    pub block_probs: Vec<Vec<f64>>,
}

impl EngineConfig {
    /// Common awake probability and uniform block drawing for every agent.
    pub fn uniform(
        variant: Variant,
        formulation: Formulation,
        horizon: usize,
        master_seed: u64,
        n_agents: usize,
        awake_prob: f64,
        num_blocks: usize,
    ) -> Self {
        Self {
            variant,
            formulation,
            horizon,
            master_seed,
            awake_probs: vec![awake_prob; n_agents],
            block_probs: vec![vec![1.0 / num_blocks as f64; num_blocks]; n_agents],
        }
    }

    /// `pi[i][l] = awake_probs[i] * block_probs[i][l]`, the per-round update
    /// probability of each (agent, block) pair.
    pub fn update_probabilities(&self) -> Vec<Vec<f64>> {
        self.awake_probs
            .iter()
            .zip(&self.block_probs)
            .map(|(&p_on, probs)| probs.iter().map(|&p| p_on * p).collect())
            .collect()
    }
}

/// How agents start.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    /// Coordinates drawn uniformly from `[low, high]` (simplex blocks start
    /// uniform instead; box blocks clamp the draw).
    UniformBox { low: f64, high: f64 },
    /// All-zero start (midpoints for box blocks, uniform for simplex
    /// blocks).
    Zeros,
    /// One supplied vector per agent.
    Supplied(Vec<BlockVector>),
}

/// Weighted average of in-neighbor estimates, `y_i = sum_j w_ij x_j`.
///
/// Fails if the agent's weight row does not sum to one within `1e-12`.
pub fn consensus_step(
    network: &NetworkModel,
    agent: usize,
    states: &[BlockVector],
) -> Result<BlockVector> {
    let row = network.weight_row(agent);
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTICITY_TOL {
        return Err(Error::WeightRowSum { agent, sum });
    }
    let dim = states[agent].len();
    let mut y = vec![0.0; dim];
    for &j in network.in_neighbors(agent) {
        accumulate(&mut y, row[j], states[j].as_slice());
    }
    BlockVector::from_vec(states[agent].partition().clone(), y)
}

fn accumulate(acc: &mut [f64], w: f64, src: &[f64]) {
    for (a, &v) in acc.iter_mut().zip(src) {
        *a += w * v;
    }
}

/// Applies the per-block update: block `block` of the result is the proximal
/// step from `y_block`, every other block keeps the prior estimate's value.
///
/// With `explicit_subgradient_step` the update is `y_l - alpha g_l` without
/// going through the proximal mapping; callers must have checked that the
/// geometry is quadratic over all of space, where the two coincide.
pub fn block_update(
    geometry: &BlockGeometry,
    prior: &BlockVector,
    y_block: &[f64],
    block: usize,
    g_block: &[f64],
    alpha: f64,
    explicit_subgradient_step: bool,
) -> Result<BlockVector> {
    let updated = if explicit_subgradient_step {
        if !(alpha > 0.0) {
            return Err(Error::NonpositiveStepsize(alpha));
        }
        if let Some(k) = g_block.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteSubgradient(k));
        }
        y_block
            .iter()
            .zip(g_block)
            .map(|(y, g)| y - alpha * g)
            .collect()
    } else {
        geometry.block(block).prox(y_block, g_block, alpha)?
    };
    let mut next = prior.clone();
    next.set_block(block, &updated);
    Ok(next)
}

struct Agent {
    x: BlockVector,
    /// Copy-table formulation: stored estimates of in-neighbors (None for
    /// non-neighbors and self).
    copies: Vec<Option<BlockVector>>,
    /// Separable variant: incrementally maintained consensus vector. Only
    /// the block drawn in a round is refreshed; stale blocks are never
    /// read.
    y_cache: Option<BlockVector>,
    rng: ChaCha8Rng,
    sampler: AgentSampler,
}

struct Broadcast {
    from: usize,
    block: usize,
    payload: Vec<f64>,
}

struct AgentOutcome {
    broadcast: Option<Broadcast>,
    event: AgentEvent,
}

/// Runs the simulation and returns its trace. Deterministic given the
/// config's master seed, independent of the rayon worker count.
pub fn run(
    config: &EngineConfig,
    network: &NetworkModel,
    oracle: &dyn StochasticOracle,
    schedule: &StepsizeSchedule,
    geometry: &BlockGeometry,
    init: &InitialCondition,
    recording: &Recording,
) -> Result<RunTrace> {
    validate(config, network, oracle, schedule, geometry)?;
    let n = network.n_agents();
    let partition = geometry.partition().clone();

    for i in 0..n {
        let sum: f64 = network.weight_row(i).iter().sum();
        if (sum - 1.0).abs() > STOCHASTICITY_TOL {
            return Err(Error::WeightRowSum { agent: i, sum });
        }
    }

    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let sampler = AgentSampler::new(config.awake_probs[i], config.block_probs[i].clone())?;
        let mut agent_rng = rng::agent_rng(config.master_seed, i);
        let x = materialize_initial(init, i, &mut agent_rng, geometry)?;
        agents.push(Agent {
            x,
            copies: Vec::new(),
            y_cache: None,
            rng: agent_rng,
            sampler,
        });
    }

    // Bootstrap: the initial estimates are shared in full, so copy tables
    // start correct.
    if config.formulation == Formulation::CopyTable {
        let snapshot: Vec<BlockVector> = agents.iter().map(|a| a.x.clone()).collect();
        for i in 0..n {
            let mut copies = vec![None; n];
            for &j in network.in_neighbors(i) {
                if j != i {
                    copies[j] = Some(snapshot[j].clone());
                }
            }
            agents[i].copies = copies;
        }
    }
    if config.variant == Variant::Separable {
        for agent in &mut agents {
            agent.y_cache = Some(agent.x.clone());
        }
    }

    let mut recorder = Recorder::new(oracle, partition.clone(), recording.clone(), config.horizon, n);
    {
        let states: Vec<BlockVector> = agents.iter().map(|a| a.x.clone()).collect();
        recorder.observe(0, &states, None, 0);
    }

    let mut prev_broadcasts: Vec<Broadcast> = Vec::new();
    let mut step_bound_violations = 0usize;
    let mut step_bound_max_ratio = 0.0f64;

    for t in 0..config.horizon {
        let prev_states: Vec<BlockVector> = agents.iter().map(|a| a.x.clone()).collect();
        let ctx = RoundCtx {
            config,
            network,
            oracle,
            schedule,
            geometry,
            prev_states: &prev_states,
            prev_broadcasts: &prev_broadcasts,
            record_events: recording.record_events,
            round: t,
        };
        let outcomes: Result<Vec<AgentOutcome>> = agents
            .par_iter_mut()
            .enumerate()
            .map(|(i, agent)| {
                agent_round(i, agent, &ctx).map_err(|e| Error::RoundFailed {
                    round: t,
                    source: Box::new(e),
                })
            })
            .collect();
        let outcomes = outcomes?;

        let mut events = Vec::with_capacity(n);
        let mut broadcasts = Vec::new();
        let mut coords_this_round = 0usize;
        for outcome in outcomes {
            let ev = &outcome.event;
            if ev.awake {
                let sigma = geometry.block(ev.block.expect("awake event")).strong_convexity();
                let cap = ev.alpha / sigma * ev.subgrad_norm;
                if ev.step_norm > cap * (1.0 + STEP_BOUND_REL_SLACK) + 1e-15 {
                    step_bound_violations += 1;
                }
                if cap > 0.0 {
                    step_bound_max_ratio = step_bound_max_ratio.max(ev.step_norm / cap);
                }
            }
            if let Some(b) = outcome.broadcast {
                coords_this_round += b.payload.len();
                broadcasts.push(b);
            }
            events.push(outcome.event);
        }
        prev_broadcasts = broadcasts;

        let states: Vec<BlockVector> = agents.iter().map(|a| a.x.clone()).collect();
        let round_events = recording
            .record_events
            .then_some(RoundEvents { agents: events });
        recorder.observe(t + 1, &states, round_events, coords_this_round);
    }

    let final_states: Vec<BlockVector> = agents.iter().map(|a| a.x.clone()).collect();
    Ok(recorder.finish(final_states, step_bound_violations, step_bound_max_ratio))
}

struct RoundCtx<'a> {
    config: &'a EngineConfig,
    network: &'a NetworkModel,
    oracle: &'a dyn StochasticOracle,
    schedule: &'a StepsizeSchedule,
    geometry: &'a BlockGeometry,
    prev_states: &'a [BlockVector],
    prev_broadcasts: &'a [Broadcast],
    record_events: bool,
    round: usize,
}

fn agent_round(i: usize, agent: &mut Agent, ctx: &RoundCtx) -> Result<AgentOutcome> {
    let use_copies = ctx.config.formulation == Formulation::CopyTable;

    // Copy refresh runs for every agent, awake or idle: broadcasts arrive
    // regardless of the receiver's own state.
    if use_copies {
        for b in ctx.prev_broadcasts {
            if let Some(copy) = agent.copies[b.from].as_mut() {
                copy.set_block(b.block, &b.payload);
            }
        }
        #[cfg(debug_assertions)]
        for &j in ctx.network.in_neighbors(i) {
            if j != i {
                debug_assert_eq!(
                    agent.copies[j].as_ref().expect("neighbor copy").as_slice(),
                    ctx.prev_states[j].as_slice(),
                    "copy table diverged from true state: agent {i}, neighbor {j}, round {}",
                    ctx.round
                );
            }
        }
    }

    let draw = agent.sampler.draw(&mut agent.rng, ctx.oracle.num_samples(i));
    if !draw.awake {
        return Ok(AgentOutcome {
            broadcast: None,
            event: AgentEvent::idle(),
        });
    }
    let block = draw.block.expect("awake draw");
    let sample = draw.sample.expect("awake draw");
    let alpha = ctx.schedule.stepsize(i, ctx.round);
    let range = ctx.geometry.partition().range(block);
    let row = ctx.network.weight_row(i);
    let neighbors = ctx.network.in_neighbors(i);

    let (y_block, g_block) = match ctx.config.variant {
        Variant::Separable => {
            // Only the drawn block of the consensus vector is refreshed.
            let mut yb = vec![0.0; range.len()];
            for &j in neighbors {
                let src = if use_copies && j != i {
                    agent.copies[j].as_ref().expect("neighbor copy").block(block)
                } else {
                    ctx.prev_states[j].block(block)
                };
                accumulate(&mut yb, row[j], src);
            }
            let cache = agent.y_cache.as_mut().expect("separable cache");
            cache.set_block(block, &yb);
            let g = ctx
                .oracle
                .separable_block_subgradient(i, &yb, range.clone(), sample);
            (yb, g)
        }
        variant => {
            let mut y = vec![0.0; ctx.geometry.partition().total()];
            for &j in neighbors {
                let src = if use_copies && j != i {
                    agent.copies[j].as_ref().expect("neighbor copy").as_slice()
                } else {
                    ctx.prev_states[j].as_slice()
                };
                accumulate(&mut y, row[j], src);
            }
            let g = match variant {
                Variant::Smooth => ctx.oracle.partial_gradient(i, &y, sample, range.clone()),
                // The drawn block of a whole stochastic subgradient; for
                // nonsmooth costs this is not the same as a per-block
                // subgradient.
                _ => ctx.oracle.sample_subgradient(i, &y, sample)[range.clone()].to_vec(),
            };
            (y[range.clone()].to_vec(), g)
        }
    };

    let explicit = ctx.config.variant == Variant::Subgradient;
    let next = block_update(
        ctx.geometry,
        &agent.x,
        &y_block,
        block,
        &g_block,
        alpha,
        explicit,
    )?;

    let new_block = next.block(block);
    let step_norm = norm_of_diff(new_block, &y_block);
    let subgrad_norm = norm(&g_block);
    let displacement = ctx
        .record_events
        .then(|| new_block.iter().zip(&y_block).map(|(a, b)| a - b).collect());
    let payload = new_block.to_vec();
    agent.x = next;

    Ok(AgentOutcome {
        broadcast: Some(Broadcast {
            from: i,
            block,
            payload,
        }),
        event: AgentEvent {
            awake: true,
            block: Some(block),
            sample: Some(sample),
            alpha,
            subgrad_norm,
            step_norm,
            displacement,
        },
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_of_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn validate(
    config: &EngineConfig,
    network: &NetworkModel,
    oracle: &dyn StochasticOracle,
    schedule: &StepsizeSchedule,
    geometry: &BlockGeometry,
) -> Result<()> {
    let n = network.n_agents();
    if oracle.n_agents() != n {
        return Err(Error::InvalidConfig(format!(
            "oracle has {} agents, network has {n}",
            oracle.n_agents()
        )));
    }
    if schedule.n_agents() != n {
        return Err(Error::InvalidConfig(format!(
            "schedule has {} agents, network has {n}",
            schedule.n_agents()
        )));
    }
    if config.awake_probs.len() != n || config.block_probs.len() != n {
        return Err(Error::InvalidConfig(
            "probability tables must have one row per agent".into(),
        ));
    }
    let num_blocks = geometry.partition().num_blocks();
    if config.block_probs.iter().any(|p| p.len() != num_blocks) {
        return Err(Error::InvalidConfig(format!(
            "block distributions must have {num_blocks} entries"
        )));
    }
    if geometry.partition().total() != oracle.dimension() {
        return Err(Error::InvalidConfig(format!(
            "partition covers {} coordinates, oracle has {}",
            geometry.partition().total(),
            oracle.dimension()
        )));
    }
    match config.variant {
        Variant::Subgradient => {
            if !geometry.all_quadratic_all_space() {
                return Err(Error::InvalidConfig(
                    "subgradient variant requires quadratic geometry over all of space".into(),
                ));
            }
        }
        Variant::Smooth => {
            if !oracle.is_smooth() {
                return Err(Error::InvalidConfig(
                    "smooth variant requires a smooth oracle".into(),
                ));
            }
        }
        Variant::Separable => {
            if !oracle.is_separable() {
                return Err(Error::InvalidConfig(
                    "separable variant requires a separable oracle".into(),
                ));
            }
        }
        Variant::Proximal => {}
    }
    Ok(())
}

fn materialize_initial(
    init: &InitialCondition,
    agent: usize,
    rng: &mut ChaCha8Rng,
    geometry: &BlockGeometry,
) -> Result<BlockVector> {
    use rand::Rng;
    let partition = geometry.partition().clone();
    if let InitialCondition::Supplied(xs) = init {
        let x = xs.get(agent).ok_or_else(|| {
            Error::InvalidConfig(format!("no initial vector supplied for agent {agent}"))
        })?;
        return BlockVector::from_vec(partition, x.to_vec());
    }
    let mut v = BlockVector::zeros(partition.clone());
    for l in 0..partition.num_blocks() {
        let geom = geometry.block(l);
        let len = partition.block_size(l);
        match (geom.feasible_set(), init) {
            (FeasibleSet::Simplex, _) => {
                let point = geom.default_point(len);
                v.set_block(l, &point);
            }
            (FeasibleSet::Box { .. }, InitialCondition::Zeros) => {
                let point = geom.default_point(len);
                v.set_block(l, &point);
            }
            (FeasibleSet::Box { lower, upper }, InitialCondition::UniformBox { low, high }) => {
                let draws: Vec<f64> = (0..len)
                    .map(|k| rng.random_range(*low..=*high).clamp(lower[k], upper[k]))
                    .collect();
                v.set_block(l, &draws);
            }
            (FeasibleSet::AllSpace, InitialCondition::Zeros) => {}
            (FeasibleSet::AllSpace, InitialCondition::UniformBox { low, high }) => {
                let draws: Vec<f64> = (0..len).map(|_| rng.random_range(*low..=*high)).collect();
                v.set_block(l, &draws);
            }
            (_, InitialCondition::Supplied(_)) => unreachable!("handled above"),
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::BlockPartition;
    use crate::geometry::BregmanGeometry;
    use crate::graph;
    use crate::problems::{SeparableQuadraticOracle, ZeroOracle};
    use std::sync::Arc;

    fn mh_network(n: usize, p: f64, seed: u64) -> NetworkModel {
        let adj = graph::erdos_renyi(n, p, seed).unwrap();
        graph::metropolis_hastings_weights(&adj).unwrap()
    }

    fn vectors(partition: &Arc<BlockPartition>, rows: &[&[f64]]) -> Vec<BlockVector> {
        rows.iter()
            .map(|r| BlockVector::from_vec(partition.clone(), r.to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn consensus_of_identical_states_is_a_fixed_point() {
        let net = mh_network(6, 0.6, 1);
        let part = Arc::new(BlockPartition::equal(4, 2).unwrap());
        let x = vec![0.3, -1.0, 2.5, 0.0];
        let states: Vec<BlockVector> = (0..6)
            .map(|_| BlockVector::from_vec(part.clone(), x.clone()).unwrap())
            .collect();
        for i in 0..6 {
            let y = consensus_step(&net, i, &states).unwrap();
            for k in 0..4 {
                assert!((y.as_slice()[k] - x[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn consensus_of_two_agents_averages() {
        let net = NetworkModel::from_weights(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let part = Arc::new(BlockPartition::new(vec![1]).unwrap());
        let states = vectors(&part, &[&[0.0], &[2.0]]);
        let y = consensus_step(&net, 0, &states).unwrap();
        assert_eq!(y.as_slice(), &[1.0]);
    }

    #[test]
    fn consensus_matches_dense_matrix_product() {
        let net = mh_network(5, 0.7, 3);
        let part = Arc::new(BlockPartition::equal(3, 3).unwrap());
        let mut rng = rng::data_rng(5);
        use rand::Rng;
        let states: Vec<BlockVector> = (0..5)
            .map(|_| {
                BlockVector::from_vec(
                    part.clone(),
                    (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
                )
                .unwrap()
            })
            .collect();
        for i in 0..5 {
            let y = consensus_step(&net, i, &states).unwrap();
            for k in 0..3 {
                // Dense oracle: multiply the full weight row, zeros included.
                let dense: f64 = (0..5).map(|j| net.weight(i, j) * states[j].as_slice()[k]).sum();
                assert!((y.as_slice()[k] - dense).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn consensus_rejects_non_stochastic_row() {
        let net = NetworkModel::from_weights(vec![vec![0.6, 0.5], vec![0.5, 0.5]]).unwrap();
        let part = Arc::new(BlockPartition::new(vec![1]).unwrap());
        let states = vectors(&part, &[&[1.0], &[2.0]]);
        assert!(matches!(
            consensus_step(&net, 0, &states),
            Err(Error::WeightRowSum { agent: 0, .. })
        ));
    }

    #[test]
    fn block_update_subgradient_form_is_explicit_step() {
        let part = Arc::new(BlockPartition::equal(4, 2).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::quadratic());
        let prior = BlockVector::from_vec(part.clone(), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y_block = [0.5, -0.5];
        let g_block = [1.0, 2.0];
        let next = block_update(&geometry, &prior, &y_block, 1, &g_block, 0.1, true).unwrap();
        assert_eq!(next.block(0), &[1.0, 2.0]);
        assert_eq!(next.block(1), &[0.5 - 0.1, -0.5 - 0.2]);
        // The proximal route gives the same values for this geometry.
        let via_prox = block_update(&geometry, &prior, &y_block, 1, &g_block, 0.1, false).unwrap();
        assert_eq!(next, via_prox);
    }

    #[test]
    fn block_update_with_zero_subgradient_keeps_consensus_block() {
        let part = Arc::new(BlockPartition::equal(4, 2).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::quadratic());
        let prior = BlockVector::from_vec(part.clone(), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y_block = [9.0, 9.5];
        let next = block_update(&geometry, &prior, &y_block, 0, &[0.0, 0.0], 0.3, false).unwrap();
        assert_eq!(next.block(0), &y_block);
        assert_eq!(next.block(1), prior.block(1));
    }

    #[test]
    fn block_update_leaves_other_blocks_bit_identical() {
        let part = Arc::new(BlockPartition::new(vec![2, 1, 2]).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::quadratic());
        let prior =
            BlockVector::from_vec(part.clone(), vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let next =
            block_update(&geometry, &prior, &[7.0], 1, &[0.25], 0.5, false).unwrap();
        assert_eq!(next.block(0), prior.block(0));
        assert_eq!(next.block(2), prior.block(2));
        assert_eq!(next.block(1), &[7.0 - 0.5 * 0.25]);
    }

    #[test]
    fn run_requires_matching_variant_preconditions() {
        let net = mh_network(4, 0.8, 9);
        let part = Arc::new(BlockPartition::equal(4, 2).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::entropy_simplex());
        let oracle = ZeroOracle::new(4, 4);
        let schedule = StepsizeSchedule::uniform_constant(0.1, 4).unwrap();
        let config = EngineConfig::uniform(
            Variant::Subgradient,
            Formulation::Compact,
            5,
            1,
            4,
            1.0,
            2,
        );
        let err = run(
            &config,
            &net,
            &oracle,
            &schedule,
            &geometry,
            &InitialCondition::Zeros,
            &Recording::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn pure_consensus_contracts_spread_to_zero() {
        let net = mh_network(6, 0.5, 17);
        let part = Arc::new(BlockPartition::equal(3, 3).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::quadratic());
        let oracle = ZeroOracle::new(3, 6);
        let schedule = StepsizeSchedule::uniform_constant(1.0, 6).unwrap();
        let config =
            EngineConfig::uniform(Variant::Proximal, Formulation::Compact, 800, 5, 6, 1.0, 3);
        let recording = Recording {
            spread_every: 1,
            agent_costs: false,
            ..Recording::default()
        };
        let trace = run(
            &config,
            &net,
            &oracle,
            &schedule,
            &geometry,
            &InitialCondition::UniformBox { low: -1.0, high: 1.0 },
            &recording,
        )
        .unwrap();
        // Per-coordinate averaging never widens the spread (up to fp noise),
        // and it vanishes on a connected graph.
        for w in trace.spread_per_block.windows(2) {
            for l in 0..3 {
                assert!(w[1][l] <= w[0][l] + 1e-12);
            }
        }
        let last = trace.spread_per_block.last().unwrap();
        assert!(last.iter().all(|&d| d < 1e-8), "{last:?}");
    }

    #[test]
    fn idle_agents_freeze_bit_exactly() {
        let net = mh_network(5, 0.7, 23);
        let part = Arc::new(BlockPartition::equal(4, 2).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::quadratic());
        let oracle = SeparableQuadraticOracle::random_targets(5, 4, -1.0, 1.0, 0.1, 6, 2).unwrap();
        let schedule = StepsizeSchedule::uniform_constant(0.2, 5).unwrap();
        let config =
            EngineConfig::uniform(Variant::Proximal, Formulation::Compact, 60, 11, 5, 0.5, 2);
        let recording = Recording {
            record_events: true,
            record_states: true,
            agent_costs: false,
            ..Recording::default()
        };
        let trace = run(
            &config,
            &net,
            &oracle,
            &schedule,
            &geometry,
            &InitialCondition::UniformBox { low: -1.0, high: 1.0 },
            &recording,
        )
        .unwrap();
        let events = trace.events.as_ref().unwrap();
        let snaps = trace.state_snapshots.as_ref().unwrap();
        let mut idle_seen = 0;
        for t in 0..60 {
            for i in 0..5 {
                if !events[t].agents[i].awake {
                    idle_seen += 1;
                    assert_eq!(snaps[t + 1][i].as_slice(), snaps[t][i].as_slice());
                }
            }
        }
        assert!(idle_seen > 0, "p_on = 0.5 should leave some agents idle");
    }

    #[test]
    fn broadcast_volume_counts_one_block_per_awake_agent() {
        let net = mh_network(4, 0.9, 2);
        let part = Arc::new(BlockPartition::new(vec![3, 1]).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::quadratic());
        let oracle = ZeroOracle::new(4, 4);
        let schedule = StepsizeSchedule::uniform_constant(0.1, 4).unwrap();
        let config =
            EngineConfig::uniform(Variant::Proximal, Formulation::Compact, 40, 3, 4, 0.7, 2);
        let recording = Recording {
            record_events: true,
            eval_every: 1,
            agent_costs: false,
            ..Recording::default()
        };
        let trace = run(
            &config,
            &net,
            &oracle,
            &schedule,
            &geometry,
            &InitialCondition::UniformBox { low: -1.0, high: 1.0 },
            &recording,
        )
        .unwrap();
        let events = trace.events.as_ref().unwrap();
        let mut expected = 0.0;
        for t in 0..40 {
            for ev in &events[t].agents {
                if ev.awake {
                    expected += part.block_size(ev.block.unwrap()) as f64;
                }
            }
            let row = trace.row_at_round(t + 1).unwrap();
            assert_eq!(row.coords_sent, expected);
        }
    }

    #[test]
    fn awake_probability_one_never_idles() {
        let net = mh_network(4, 0.9, 6);
        let part = Arc::new(BlockPartition::equal(2, 2).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::quadratic());
        let oracle = ZeroOracle::new(2, 4);
        let schedule = StepsizeSchedule::uniform_constant(0.1, 4).unwrap();
        let config =
            EngineConfig::uniform(Variant::Proximal, Formulation::Compact, 50, 8, 4, 1.0, 2);
        let recording = Recording {
            record_events: true,
            agent_costs: false,
            ..Recording::default()
        };
        let trace = run(
            &config,
            &net,
            &oracle,
            &schedule,
            &geometry,
            &InitialCondition::Zeros,
            &recording,
        )
        .unwrap();
        for round in trace.events.as_ref().unwrap() {
            assert!(round.agents.iter().all(|ev| ev.awake));
        }
    }

    #[test]
    fn same_seed_reproduces_trajectory() {
        let net = mh_network(5, 0.6, 31);
        let part = Arc::new(BlockPartition::equal(6, 3).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::quadratic());
        let oracle = SeparableQuadraticOracle::random_targets(5, 6, -1.0, 1.0, 0.2, 8, 4).unwrap();
        let schedule = StepsizeSchedule::uniform_constant(0.15, 5).unwrap();
        let config =
            EngineConfig::uniform(Variant::Proximal, Formulation::Compact, 120, 77, 5, 0.8, 3);
        let go = || {
            run(
                &config,
                &net,
                &oracle,
                &schedule,
                &geometry,
                &InitialCondition::UniformBox { low: -1.0, high: 1.0 },
                &Recording::default(),
            )
            .unwrap()
        };
        let a = go();
        let b = go();
        assert_eq!(a.final_states, b.final_states);
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn consensus_errors_are_zero_at_consensus_and_symmetric_for_two_agents() {
        // Identical agents: every recorded consensus error is zero.
        let net = mh_network(4, 0.9, 2);
        let part = Arc::new(BlockPartition::equal(3, 1).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::quadratic());
        let oracle = ZeroOracle::new(3, 4);
        let schedule = StepsizeSchedule::uniform_constant(0.1, 4).unwrap();
        let config =
            EngineConfig::uniform(Variant::Proximal, Formulation::Compact, 5, 1, 4, 1.0, 1);
        let shared = BlockVector::from_vec(part.clone(), vec![0.5, -1.0, 2.0]).unwrap();
        let trace = run(
            &config,
            &net,
            &oracle,
            &schedule,
            &geometry,
            &InitialCondition::Supplied(vec![shared; 4]),
            &Recording { eval_every: 1, agent_costs: false, ..Recording::default() },
        )
        .unwrap();
        for row in &trace.rows {
            assert_eq!(row.consensus_max, 0.0, "round {}", row.round);
        }

        // Two agents at 0 and 2: both sit one unit from the average.
        let net = NetworkModel::from_weights(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let part = Arc::new(BlockPartition::equal(1, 1).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::quadratic());
        let oracle = ZeroOracle::new(1, 2);
        let schedule = StepsizeSchedule::uniform_constant(0.1, 2).unwrap();
        let config =
            EngineConfig::uniform(Variant::Proximal, Formulation::Compact, 0, 1, 2, 1.0, 1);
        let states = vec![
            BlockVector::from_vec(part.clone(), vec![0.0]).unwrap(),
            BlockVector::from_vec(part.clone(), vec![2.0]).unwrap(),
        ];
        let trace = run(
            &config,
            &net,
            &oracle,
            &schedule,
            &geometry,
            &InitialCondition::Supplied(states),
            &Recording { eval_every: 1, agent_costs: false, ..Recording::default() },
        )
        .unwrap();
        assert_eq!(trace.consensus_errors_at(0).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn f_best_is_nonincreasing_along_the_trace() {
        let net = mh_network(5, 0.7, 19);
        let part = Arc::new(BlockPartition::equal(4, 2).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::quadratic());
        let oracle = SeparableQuadraticOracle::random_targets(5, 4, -1.0, 1.0, 0.3, 8, 6).unwrap();
        let schedule = StepsizeSchedule::uniform_constant(0.3, 5).unwrap();
        let config =
            EngineConfig::uniform(Variant::Proximal, Formulation::Compact, 300, 4, 5, 1.0, 2);
        let trace = run(
            &config,
            &net,
            &oracle,
            &schedule,
            &geometry,
            &InitialCondition::UniformBox { low: -1.0, high: 1.0 },
            &Recording { eval_every: 5, ..Recording::default() },
        )
        .unwrap();
        for w in trace.rows.windows(2) {
            assert!(w[1].f_best_avg <= w[0].f_best_avg);
            assert!(w[1].f_best_agent_worst <= w[0].f_best_agent_worst);
        }
    }

    #[test]
    fn step_bound_holds_at_every_update() {
        let net = mh_network(6, 0.5, 41);
        let part = Arc::new(BlockPartition::equal(8, 4).unwrap());
        let geometry = BlockGeometry::uniform(part.clone(), BregmanGeometry::quadratic());
        let oracle = SeparableQuadraticOracle::random_targets(6, 8, -2.0, 2.0, 0.3, 10, 5).unwrap();
        let schedule = StepsizeSchedule::uniform_diminishing(0.5, 0.8, 6).unwrap();
        let config =
            EngineConfig::uniform(Variant::Proximal, Formulation::Compact, 400, 13, 6, 0.9, 4);
        let trace = run(
            &config,
            &net,
            &oracle,
            &schedule,
            &geometry,
            &InitialCondition::UniformBox { low: -1.0, high: 1.0 },
            &Recording { agent_costs: false, ..Recording::default() },
        )
        .unwrap();
        assert_eq!(trace.step_bound_violations, 0);
        assert!(trace.step_bound_max_ratio <= 1.0 + 1e-9);
    }
}
