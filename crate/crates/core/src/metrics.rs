//! Run traces, consensus diagnostics and convergence bound curves.
//!
//! The engine fills a [`RunTrace`] as it simulates; everything here reads
//! traces back out: per-agent distances to the network average, per-block
//! coordinate spreads, the realized per-round consensus matrices and their
//! replay, empirical estimation of the contraction constants, the Lyapunov
//! sum, and the plug-in bound curves for constant stepsizes. Expectations are
//! realized as averages over independent seeded runs.

use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::block::{spread, BlockPartition, BlockVector};
use crate::engine::{self, EngineConfig, Formulation, InitialCondition, Variant};
use crate::error::{Error, Result};
use crate::geometry::{BlockGeometry, BregmanGeometry};
use crate::graph::NetworkModel;
use crate::problems::{StochasticOracle, ZeroOracle};
use crate::rng;
use crate::schedules::StepsizeSchedule;

/// Floor reported for the contraction factor when consensus collapses too
/// fast to fit a decay rate.
pub const MU_FLOOR: f64 = 1e-12;

/// Spread values below this are treated as underflowed when fitting decay
/// rates.
const SPREAD_UNDERFLOW: f64 = 1e-250;

/// What the engine records while it runs.
#[derive(Debug, Clone)]
pub struct Recording {
    /// Evaluate costs and consensus metrics every this many rounds
    /// (0 = only at the first and last round). Rounds 0 and the horizon are
    /// always recorded.
    pub eval_every: usize,
    /// Also evaluate the global cost at every agent's own estimate
    /// (N extra full-batch evaluations per recorded round).
    pub agent_costs: bool,
    /// Record per-block coordinate spreads every this many rounds
    /// (0 = at metric rounds only).
    pub spread_every: usize,
    /// Keep per-round events (awake flags, drawn blocks, prox displacements).
    pub record_events: bool,
    /// Keep a full state snapshot for every round.
    pub record_states: bool,
}

impl Default for Recording {
    fn default() -> Self {
        Self {
            eval_every: 10,
            agent_costs: true,
            spread_every: 0,
            record_events: false,
            record_states: false,
        }
    }
}

/// One recorded metrics row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub round: usize,
    /// Global cost at the network average, `f(xbar^t)`.
    pub cost_avg: f64,
    /// Mean over agents of `f(x_i^t)` (NaN when agent costs are disabled).
    pub cost_agent_mean: f64,
    /// Running minimum of `cost_avg` over recorded rounds.
    pub f_best_avg: f64,
    /// Worst (largest) over agents of the running minimum of `f(x_i^t)`.
    pub f_best_agent_worst: f64,
    /// `max_i ||x_i^t - xbar^t||`.
    pub consensus_max: f64,
    /// `mean_i ||x_i^t - xbar^t||`.
    pub consensus_mean: f64,
    /// Largest per-coordinate spread across agents.
    pub spread_max: f64,
    /// Cumulative broadcast volume in coordinates sent.
    pub coords_sent: f64,
}

/// Header of the trace CSV schema, one column per [`TraceRow`] field.
pub const TRACE_CSV_HEADER: &str =
    "round,cost_avg,cost_agent_mean,f_best_avg,f_best_agent_worst,consensus_max,consensus_mean,spread_max,coords_sent";

/// Per-agent record of one round's randomness and update.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentEvent {
    pub awake: bool,
    pub block: Option<usize>,
    pub sample: Option<usize>,
    pub alpha: f64,
    /// Norm of the block subgradient fed to the prox.
    pub subgrad_norm: f64,
    /// Norm of the realized prox displacement `x_{i,l}^{t+1} - y_{i,l}^t`.
    pub step_norm: f64,
    /// The displacement vector itself, kept only when events are recorded.
    pub displacement: Option<Vec<f64>>,
}

impl AgentEvent {
    pub fn idle() -> Self {
        Self {
            awake: false,
            block: None,
            sample: None,
            alpha: 0.0,
            subgrad_norm: 0.0,
            step_norm: 0.0,
            displacement: None,
        }
    }
}

/// All agents' events for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundEvents {
    pub agents: Vec<AgentEvent>,
}

/// Everything one simulation produced.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub horizon: usize,
    pub n_agents: usize,
    pub num_blocks: usize,
    pub rows: Vec<TraceRow>,
    /// Per recorded row: `||x_i - xbar||` for every agent.
    pub consensus_per_agent: Vec<Vec<f64>>,
    /// Per recorded row: `f(x_i)` for every agent (empty when disabled).
    pub cost_per_agent: Vec<Vec<f64>>,
    /// Rounds at which block spreads were recorded.
    pub spread_rounds: Vec<usize>,
    /// Per spread round: max per-coordinate spread within each block.
    pub spread_per_block: Vec<Vec<f64>>,
    pub events: Option<Vec<RoundEvents>>,
    /// State snapshot for every round `0..=horizon` when enabled.
    pub state_snapshots: Option<Vec<Vec<BlockVector>>>,
    pub final_states: Vec<BlockVector>,
    pub step_bound_violations: usize,
    /// Largest observed `step_norm / ((alpha / sigma) * subgrad_norm)`.
    pub step_bound_max_ratio: f64,
}

impl RunTrace {
    pub fn row_at_round(&self, round: usize) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.round == round)
    }

    /// Per-agent `||x_i - xbar||` at a recorded round.
    pub fn consensus_errors_at(&self, round: usize) -> Option<&[f64]> {
        self.rows
            .iter()
            .position(|r| r.round == round)
            .map(|idx| self.consensus_per_agent[idx].as_slice())
    }

    pub fn final_row(&self) -> &TraceRow {
        self.rows.last().expect("trace always records the horizon")
    }
}

/// Builds the trace while the engine runs. Driven once per round.
pub(crate) struct Recorder<'a> {
    oracle: &'a dyn StochasticOracle,
    partition: Arc<BlockPartition>,
    opts: Recording,
    horizon: usize,
    rows: Vec<TraceRow>,
    consensus_per_agent: Vec<Vec<f64>>,
    cost_per_agent: Vec<Vec<f64>>,
    fbest_avg: f64,
    fbest_agent: Vec<f64>,
    spread_rounds: Vec<usize>,
    spread_per_block: Vec<Vec<f64>>,
    events: Option<Vec<RoundEvents>>,
    snapshots: Option<Vec<Vec<BlockVector>>>,
    coords_sent: f64,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(
        oracle: &'a dyn StochasticOracle,
        partition: Arc<BlockPartition>,
        opts: Recording,
        horizon: usize,
        n_agents: usize,
    ) -> Self {
        Self {
            oracle,
            partition,
            opts,
            horizon,
            rows: Vec::new(),
            consensus_per_agent: Vec::new(),
            cost_per_agent: Vec::new(),
            fbest_avg: f64::INFINITY,
            fbest_agent: vec![f64::INFINITY; n_agents],
            spread_rounds: Vec::new(),
            spread_per_block: Vec::new(),
            events: None,
            snapshots: None,
            coords_sent: 0.0,
        }
    }

    fn metrics_round(&self, t: usize) -> bool {
        t == 0 || t == self.horizon || (self.opts.eval_every > 0 && t % self.opts.eval_every == 0)
    }

    fn spread_round(&self, t: usize) -> bool {
        if self.opts.spread_every == 0 {
            self.metrics_round(t)
        } else {
            t == 0 || t == self.horizon || t % self.opts.spread_every == 0
        }
    }

    pub(crate) fn observe(
        &mut self,
        t: usize,
        states: &[BlockVector],
        events: Option<RoundEvents>,
        coords_this_round: usize,
    ) {
        self.coords_sent += coords_this_round as f64;
        if let Some(ev) = events {
            self.events.get_or_insert_with(Vec::new).push(ev);
        }
        if self.opts.record_states {
            self.snapshots
                .get_or_insert_with(Vec::new)
                .push(states.to_vec());
        }

        let n = states.len();
        let dim = self.partition.total();
        let record_spread = self.spread_round(t);
        let record_metrics = self.metrics_round(t);
        if !record_spread && !record_metrics {
            return;
        }

        // Per-coordinate spread across agents, aggregated per block.
        let mut block_spreads = vec![0.0f64; self.partition.num_blocks()];
        let mut coord = vec![0.0f64; n];
        for l in 0..self.partition.num_blocks() {
            for k in self.partition.range(l) {
                for (i, s) in states.iter().enumerate() {
                    coord[i] = s.as_slice()[k];
                }
                block_spreads[l] = block_spreads[l].max(spread(&coord));
            }
        }
        let spread_max = block_spreads.iter().cloned().fold(0.0, f64::max);
        if record_spread {
            self.spread_rounds.push(t);
            self.spread_per_block.push(block_spreads);
        }
        if !record_metrics {
            return;
        }

        let mut xbar = vec![0.0f64; dim];
        for s in states {
            for (m, &v) in xbar.iter_mut().zip(s.as_slice()) {
                *m += v;
            }
        }
        for m in &mut xbar {
            *m /= n as f64;
        }
        let cost_avg = self.oracle.cost(&xbar);
        self.fbest_avg = self.fbest_avg.min(cost_avg);

        let consensus: Vec<f64> = states
            .iter()
            .map(|s| {
                s.as_slice()
                    .iter()
                    .zip(&xbar)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let consensus_max = consensus.iter().cloned().fold(0.0, f64::max);
        let consensus_mean = consensus.iter().sum::<f64>() / n as f64;

        let (cost_agent_mean, fbest_agent_worst) = if self.opts.agent_costs {
            let costs: Vec<f64> = states
                .iter()
                .map(|s| self.oracle.cost(s.as_slice()))
                .collect();
            for (best, &c) in self.fbest_agent.iter_mut().zip(&costs) {
                *best = best.min(c);
            }
            let mean = costs.iter().sum::<f64>() / n as f64;
            let worst = self
                .fbest_agent
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            self.cost_per_agent.push(costs);
            (mean, worst)
        } else {
            (f64::NAN, f64::NAN)
        };

        self.consensus_per_agent.push(consensus);
        self.rows.push(TraceRow {
            round: t,
            cost_avg,
            cost_agent_mean,
            f_best_avg: self.fbest_avg,
            f_best_agent_worst: fbest_agent_worst,
            consensus_max,
            consensus_mean,
            spread_max,
            coords_sent: self.coords_sent,
        });
    }

    pub(crate) fn finish(
        self,
        final_states: Vec<BlockVector>,
        step_bound_violations: usize,
        step_bound_max_ratio: f64,
    ) -> RunTrace {
        RunTrace {
            horizon: self.horizon,
            n_agents: final_states.len(),
            num_blocks: self.partition.num_blocks(),
            rows: self.rows,
            consensus_per_agent: self.consensus_per_agent,
            cost_per_agent: self.cost_per_agent,
            spread_rounds: self.spread_rounds,
            spread_per_block: self.spread_per_block,
            events: self.events,
            state_snapshots: self.snapshots,
            final_states,
            step_bound_violations,
            step_bound_max_ratio,
        }
    }
}

/// Writes rows in the documented CSV schema (header first).
pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.round,
            r.cost_avg,
            r.cost_agent_mean,
            r.f_best_avg,
            r.f_best_agent_worst,
            r.consensus_max,
            r.consensus_mean,
            r.spread_max,
            r.coords_sent
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Field-wise mean of aligned trace rows from independent seeded runs.
pub fn average_rows(traces: &[&[TraceRow]]) -> Result<Vec<TraceRow>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Estimation("no traces to average".into()))?;
    for t in traces {
        if t.len() != first.len() || t.iter().zip(first.iter()).any(|(a, b)| a.round != b.round) {
            return Err(Error::Estimation(
                "traces record different round grids".into(),
            ));
        }
    }
    let k = traces.len() as f64;
    Ok((0..first.len())
        .map(|idx| {
            let mean =
                |f: fn(&TraceRow) -> f64| traces.iter().map(|t| f(&t[idx])).sum::<f64>() / k;
            TraceRow {
                round: first[idx].round,
                cost_avg: mean(|r| r.cost_avg),
                cost_agent_mean: mean(|r| r.cost_agent_mean),
                f_best_avg: mean(|r| r.f_best_avg),
                f_best_agent_worst: mean(|r| r.f_best_agent_worst),
                consensus_max: mean(|r| r.consensus_max),
                consensus_mean: mean(|r| r.consensus_mean),
                spread_max: mean(|r| r.spread_max),
                coords_sent: mean(|r| r.coords_sent),
            }
        })
        .collect())
}

/// The realized consensus matrix of one round and block: rows of `W` where
/// the agent was awake and drew the block, identity rows elsewhere. Always
/// row-stochastic.
pub fn realized_consensus_matrix(
    events: &RoundEvents,
    network: &NetworkModel,
    block: usize,
) -> Vec<Vec<f64>> {
    let n = network.n_agents();
    (0..n)
        .map(|i| {
            let ev = &events.agents[i];
            if ev.awake && ev.block == Some(block) {
                network.weight_row(i).to_vec()
            } else {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                row
            }
        })
        .collect()
}

/// Empirical frequency of "awake and drew block l" per agent, the
/// Monte-Carlo estimate of the diagonal of the expected selection matrix.
pub fn empirical_draw_rates(
    events: &[RoundEvents],
    n_agents: usize,
    num_blocks: usize,
) -> Vec<Vec<f64>> {
    let mut rates = vec![vec![0.0f64; num_blocks]; n_agents];
    for round in events {
        for (i, ev) in round.agents.iter().enumerate() {
            if ev.awake {
                if let Some(l) = ev.block {
                    rates[i][l] += 1.0;
                }
            }
        }
    }
    let t = events.len() as f64;
    for row in &mut rates {
        for r in row.iter_mut() {
            *r /= t;
        }
    }
    rates
}

/// Replays the recorded run through the block consensus recursion
/// `z_l^{t+1} = W_l^t z_l^t + e_l^t` and returns the largest absolute
/// deviation from the engine's states.
///
/// Requires events and state snapshots in the trace.
pub fn replay_max_deviation(
    trace: &RunTrace,
    network: &NetworkModel,
    partition: &BlockPartition,
) -> Result<f64> {
    let events = trace
        .events
        .as_ref()
        .ok_or_else(|| Error::Estimation("trace has no recorded events".into()))?;
    let snaps = trace
        .state_snapshots
        .as_ref()
        .ok_or_else(|| Error::Estimation("trace has no state snapshots".into()))?;
    let n = network.n_agents();
    let mut max_dev = 0.0f64;
    for t in 0..trace.horizon {
        let round = &events[t];
        for l in 0..partition.num_blocks() {
            let w = realized_consensus_matrix(round, network, l);
            let range = partition.range(l);
            for (offset, k) in range.clone().enumerate() {
                for i in 0..n {
                    let mut z_next: f64 =
                        (0..n).map(|j| w[i][j] * snaps[t][j].as_slice()[k]).sum();
                    let ev = &round.agents[i];
                    if ev.awake && ev.block == Some(l) {
                        let disp = ev.displacement.as_ref().ok_or_else(|| {
                            Error::Estimation("events recorded without displacements".into())
                        })?;
                        z_next += disp[offset];
                    }
                    let engine_value = snaps[t + 1][i].as_slice()[k];
                    max_dev = max_dev.max((z_next - engine_value).abs());
                }
            }
        }
    }
    Ok(max_dev)
}

/// Empirical estimate of the consensus contraction constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionEstimate {
    /// Estimated per-round contraction factor of the expected spread.
    pub mu: f64,
    /// Estimated leading constant, intercept normalized by the initial
    /// stacked-block norm.
    pub m_hat: f64,
    /// Consensus collapsed within a couple of rounds; `mu` is reported at
    /// [`MU_FLOOR`].
    pub one_step: bool,
    /// The fit window was cut short because spreads underflowed.
    pub truncated: bool,
    /// Number of points used in the least-squares fit.
    pub fit_points: usize,
}

/// Estimates `(mu, M)` by running pure-consensus simulations (zero
/// subgradients) and fitting the tail of `log E[d(z_l^t)]` against `t` by
/// least squares. The entry `pi[i][l]` is the probability that agent `i` is
/// awake and draws block `l` in a round.
pub fn estimate_contraction(
    network: &NetworkModel,
    pi: &[Vec<f64>],
    trials: usize,
    horizon: usize,
    seed: u64,
) -> Result<ContractionEstimate> {
    let n = network.n_agents();
    if pi.len() != n || trials == 0 || horizon < 4 {
        return Err(Error::Estimation(
            "need pi rows per agent, at least one trial and a horizon of at least 4".into(),
        ));
    }
    let num_blocks = pi[0].len();
    let mut awake_probs = Vec::with_capacity(n);
    let mut block_probs = Vec::with_capacity(n);
    for (i, row) in pi.iter().enumerate() {
        if row.len() != num_blocks {
            return Err(Error::Estimation(format!("pi row {i} has wrong width")));
        }
        let p_on: f64 = row.iter().sum();
        if !(p_on > 0.0 && p_on <= 1.0 + 1e-12) {
            return Err(Error::Estimation(format!(
                "pi row {i} sums to {p_on}, expected a value in (0, 1]"
            )));
        }
        awake_probs.push(p_on.min(1.0));
        block_probs.push(row.iter().map(|&p| p / p_on).collect::<Vec<f64>>());
    }

    // Scalar blocks: one coordinate per block is all the dynamics needs.
    let partition = Arc::new(BlockPartition::new(vec![1; num_blocks])?);
    let oracle = ZeroOracle::new(num_blocks, n);
    let schedule = StepsizeSchedule::uniform_constant(1.0, n)?;
    let geometry = BlockGeometry::uniform(partition.clone(), BregmanGeometry::quadratic());
    let recording = Recording {
        eval_every: 0,
        agent_costs: false,
        spread_every: 1,
        record_events: false,
        record_states: true,
    };

    let mut mean_spread = vec![vec![0.0f64; num_blocks]; horizon + 1];
    let mut mean_z0_norm = vec![0.0f64; num_blocks];
    for trial in 0..trials {
        let config = EngineConfig {
            variant: Variant::Proximal,
            formulation: Formulation::Compact,
            horizon,
            master_seed: rng::derive_seed(seed, trial as u64),
            awake_probs: awake_probs.clone(),
            block_probs: block_probs.clone(),
        };
        let trace = engine::run(
            &config,
            network,
            &oracle,
            &schedule,
            &geometry,
            &InitialCondition::UniformBox {
                low: -1.0,
                high: 1.0,
            },
            &recording,
        )?;
        for (t, blocks) in trace.spread_per_block.iter().enumerate() {
            for (l, &d) in blocks.iter().enumerate() {
                mean_spread[t][l] += d / trials as f64;
            }
        }
        let initial = &trace.state_snapshots.as_ref().expect("states recorded")[0];
        for l in 0..num_blocks {
            let norm: f64 = initial
                .iter()
                .map(|s| {
                    let v = s.as_slice()[partition.range(l).start];
                    v * v
                })
                .sum::<f64>()
                .sqrt();
            mean_z0_norm[l] += norm / trials as f64;
        }
    }

    let mut mu_max = 0.0f64;
    let mut m_max = 0.0f64;
    let mut one_step = false;
    let mut truncated = false;
    let mut fit_points = usize::MAX;
    for l in 0..num_blocks {
        let series: Vec<f64> = (0..=horizon).map(|t| mean_spread[t][l]).collect();
        // Once the spread reaches the float noise floor it stops decaying,
        // so the fit window ends at the last genuinely contracting point.
        let floor = SPREAD_UNDERFLOW.max(series[0] * 1e-12);
        let mut valid_end = 0;
        for (t, &d) in series.iter().enumerate() {
            if d >= floor {
                valid_end = t;
            } else {
                break;
            }
        }
        if valid_end < horizon {
            truncated = true;
        }
        // Tail half of the contracting range.
        let start = valid_end / 2;
        let points: Vec<(f64, f64)> = (start..=valid_end)
            .filter(|&t| series[t] >= floor)
            .map(|t| (t as f64, series[t].ln()))
            .collect();
        if points.len() < 3 {
            one_step = true;
            mu_max = mu_max.max(MU_FLOOR);
            continue;
        }
        fit_points = fit_points.min(points.len());
        let (slope, intercept) = least_squares(&points);
        let mu = slope.exp();
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::Estimation(format!(
                "fitted contraction factor {mu} outside (0, 1) for block {l}"
            )));
        }
        mu_max = mu_max.max(mu);
        m_max = m_max.max(intercept.exp() / mean_z0_norm[l].max(1e-300));
    }
    if fit_points == usize::MAX {
        fit_points = 0;
    }
    Ok(ContractionEstimate {
        mu: mu_max.max(MU_FLOOR),
        m_hat: m_max,
        one_step,
        truncated,
        fit_points,
    })
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Lyapunov sum `V = sum_i sum_l pi_{i,l}^{-1} nu_l(x_{i,l}, ref_l)`.
pub fn lyapunov(
    states: &[BlockVector],
    geometry: &BlockGeometry,
    pi: &[Vec<f64>],
    x_ref: &[f64],
) -> Result<f64> {
    let partition = geometry.partition();
    let mut total = 0.0;
    for (i, state) in states.iter().enumerate() {
        for l in 0..partition.num_blocks() {
            let range = partition.range(l);
            let div = geometry
                .block(l)
                .divergence(state.block(l), &x_ref[range])?;
            total += div / pi[i][l];
        }
    }
    Ok(total)
}

/// Constants feeding the plug-in bound curves.
#[derive(Debug, Clone, Serialize)]
pub struct BoundInputs {
    /// Smallest constant stepsize across agents.
    pub a_min: f64,
    /// Largest constant stepsize across agents.
    pub a_max: f64,
    pub num_blocks: usize,
    /// Sum over agents of the subgradient norm bounds.
    pub g_total: f64,
    /// Sum over agents of the squared-norm bounds.
    pub g_sq_total: f64,
    /// Smallest strong convexity modulus across blocks.
    pub sigma: f64,
    /// Estimated contraction factor, in (0, 1).
    pub mu: f64,
    /// Estimated leading constant of the spread decay.
    pub m_const: f64,
    /// Bound on the summed expected initial norms.
    pub c_init: f64,
    /// Expected initial Lyapunov sum.
    pub v0: f64,
}

/// Plug-in constants and curves for constant stepsizes.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// Asymptotic consensus error level.
    pub s_bar: f64,
    pub r_bar: f64,
    pub q_bar: f64,
    /// Optimality bound constants: `bound(t) = (q + mu^t r) / (t+1) + s`.
    pub q: f64,
    pub r: f64,
    pub s: f64,
    /// Optimality bound per round, `0..=horizon`.
    pub optimality: Vec<f64>,
    /// Consensus error bound per round, `0..=horizon`.
    pub consensus: Vec<f64>,
}

/// Evaluates the constant-stepsize bound curves from estimated constants.
/// Refuses contraction factors outside `(0, 1)`.
pub fn bound_curves(inputs: &BoundInputs, horizon: usize) -> Result<BoundReport> {
    let BoundInputs {
        a_min,
        a_max,
        num_blocks,
        g_total,
        g_sq_total,
        sigma,
        mu,
        m_const,
        c_init,
        v0,
    } = *inputs;
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Estimation(format!(
            "contraction factor {mu} outside (0, 1); cannot evaluate bounds"
        )));
    }
    if a_min <= 0.0 || a_max < a_min || sigma <= 0.0 {
        return Err(Error::Estimation(
            "invalid stepsize or convexity inputs".into(),
        ));
    }
    let b = num_blocks as f64;
    let mbg = m_const * b * g_total / sigma;
    let s_bar = a_max * mbg * (2.0 - mu) / (1.0 - mu);
    let r_bar = m_const * b
        * (a_max * g_total / (sigma * (1.0 - mu) * (1.0 - mu)) - c_init / (1.0 - mu));
    let q_bar = c_init - a_max * mbg / ((1.0 - mu) * (1.0 - mu));
    let q = v0 / a_min + 4.0 * g_total * (m_const * b * c_init / (1.0 - mu) + q_bar);
    let r = 4.0 * g_total * r_bar;
    let s = 4.0 * g_total * s_bar + (a_max * a_max / a_min) * (g_sq_total / (2.0 * sigma));
    let optimality = (0..=horizon)
        .map(|t| (q + mu.powi(t as i32) * r) / (t as f64 + 1.0) + s)
        .collect();
    let consensus = (0..=horizon)
        .map(|t| {
            if t == 0 {
                c_init
            } else {
                let decay = mu.powi(t as i32 - 1);
                m_const
                    * b
                    * (decay * c_init
                        + (g_total / sigma) * a_max * (1.0 - decay) / (1.0 - mu)
                        + (g_total / sigma) * a_max)
            }
        })
        .collect();
    Ok(BoundReport {
        s_bar,
        r_bar,
        q_bar,
        q,
        r,
        s,
        optimality,
        consensus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph;

    fn ring(n: usize) -> NetworkModel {
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let adj = graph::Adjacency::from_edges(n, &edges).unwrap();
        graph::metropolis_hastings_weights(&adj).unwrap()
    }

    fn events_with(blocks: &[Option<usize>]) -> RoundEvents {
        RoundEvents {
            agents: blocks
                .iter()
                .map(|b| AgentEvent {
                    awake: b.is_some(),
                    block: *b,
                    sample: b.map(|_| 0),
                    alpha: 0.1,
                    subgrad_norm: 0.0,
                    step_norm: 0.0,
                    displacement: None,
                })
                .collect(),
        }
    }

    #[test]
    fn consensus_matrix_identity_when_block_untouched() {
        let net = ring(4);
        let ev = events_with(&[None, None, None, None]);
        let w = realized_consensus_matrix(&ev, &net, 0);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(w[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn consensus_matrix_full_when_all_drew_block() {
        let net = ring(4);
        let ev = events_with(&[Some(1), Some(1), Some(1), Some(1)]);
        let w = realized_consensus_matrix(&ev, &net, 1);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(w[i][j], net.weight(i, j));
            }
        }
    }

    #[test]
    fn consensus_matrix_rows_sum_to_one_for_mixed_events() {
        let net = ring(5);
        let ev = events_with(&[Some(0), None, Some(1), Some(0), None]);
        for block in 0..2 {
            let w = realized_consensus_matrix(&ev, &net, block);
            for row in &w {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn average_rows_rejects_misaligned_grids() {
        let row = |round| TraceRow {
            round,
            cost_avg: 1.0,
            cost_agent_mean: 1.0,
            f_best_avg: 1.0,
            f_best_agent_worst: 1.0,
            consensus_max: 0.0,
            consensus_mean: 0.0,
            spread_max: 0.0,
            coords_sent: 0.0,
        };
        let a = vec![row(0), row(10)];
        let b = vec![row(0), row(20)];
        assert!(average_rows(&[&a, &b]).is_err());
        let avg = average_rows(&[&a, &a]).unwrap();
        assert_eq!(avg.len(), 2);
    }

    #[test]
    fn bound_curve_error_term_vanishes_with_stepsize() {
        let mk = |a: f64| BoundInputs {
            a_min: a,
            a_max: a,
            num_blocks: 2,
            g_total: 3.0,
            g_sq_total: 9.0,
            sigma: 1.0,
            mu: 0.8,
            m_const: 1.5,
            c_init: 2.0,
            v0: 5.0,
        };
        let report = bound_curves(&mk(1e-9), 10).unwrap();
        assert!(report.s < 1e-6, "s = {}", report.s);
        let big = bound_curves(&mk(0.1), 10).unwrap();
        let small = bound_curves(&mk(0.05), 10).unwrap();
        // S scales linearly in the stepsize when a_min = a_max.
        assert!((big.s / small.s - 2.0).abs() < 0.05, "{}", big.s / small.s);
    }

    #[test]
    fn bound_constants_match_hand_arithmetic_for_single_block() {
        let inputs = BoundInputs {
            a_min: 0.2,
            a_max: 0.2,
            num_blocks: 1,
            g_total: 2.0,
            g_sq_total: 4.0,
            sigma: 1.0,
            mu: 0.5,
            m_const: 1.0,
            c_init: 1.0,
            v0: 3.0,
        };
        let report = bound_curves(&inputs, 4).unwrap();
        // s_bar = a * (M B G / sigma) * (2 - mu) / (1 - mu)
        let s_bar = 0.2 * 2.0 * 1.5 / 0.5;
        assert!((report.s_bar - s_bar).abs() < 1e-12);
        let r_bar = 1.0 * (0.2 * 2.0 / (1.0 * 0.25) - 1.0 / 0.5);
        assert!((report.r_bar - r_bar).abs() < 1e-12);
        let q_bar = 1.0 - 0.2 * 2.0 / 0.25;
        assert!((report.q_bar - q_bar).abs() < 1e-12);
        let q = 3.0 / 0.2 + 8.0 * (1.0 / 0.5 + q_bar);
        assert!((report.q - q).abs() < 1e-12);
        assert!((report.r - 8.0 * r_bar).abs() < 1e-12);
        let s = 8.0 * s_bar + 0.2 * 4.0 / 2.0;
        assert!((report.s - s).abs() < 1e-12);
        // bound(0) = (q + r) / 1 + s
        assert!((report.optimality[0] - (q + 8.0 * r_bar + s)).abs() < 1e-12);
    }

    #[test]
    fn bound_curves_refuse_bad_contraction_factor() {
        let mut inputs = BoundInputs {
            a_min: 0.1,
            a_max: 0.1,
            num_blocks: 1,
            g_total: 1.0,
            g_sq_total: 1.0,
            sigma: 1.0,
            mu: 1.0,
            m_const: 1.0,
            c_init: 1.0,
            v0: 1.0,
        };
        assert!(bound_curves(&inputs, 5).is_err());
        inputs.mu = 1.2;
        assert!(bound_curves(&inputs, 5).is_err());
    }

    #[test]
    fn trace_csv_has_documented_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trace_csv(
            &[TraceRow {
                round: 0,
                cost_avg: 1.5,
                cost_agent_mean: 1.5,
                f_best_avg: 1.5,
                f_best_agent_worst: 1.5,
                consensus_max: 0.25,
                consensus_mean: 0.25,
                spread_max: 0.5,
                coords_sent: 0.0,
            }],
            &path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "0,1.5,1.5,1.5,1.5,0.25,0.25,0.5,0");
    }
}
