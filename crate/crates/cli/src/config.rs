//! Experiment configuration: a sectioned TOML file, fail-closed on unknown
//! keys.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub network: NetworkConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// L1-regularized logistic classification on two synthetic clusters.
    LogisticL1,
    /// Per-agent quadratic pulls toward noisy targets; closed-form optimum.
    SeparableQuadratic,
    /// Constant zero objective (pure consensus runs).
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Decision dimension `n`. For the logistic problem this includes the
    /// constant-1 augmentation (`d + 1`).
    pub dimension: usize,
    #[serde(default)]
    pub lambda: f64,
    /// Generator inputs for the logistic problem; ignored when `dataset`
    /// points at a CSV file.
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Separable quadratic inputs.
    #[serde(default = "default_target_low")]
    pub target_low: f64,
    #[serde(default = "default_target_high")]
    pub target_high: f64,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    #[serde(default = "default_samples_per_agent")]
    pub samples_per_agent: usize,
}

fn default_n_points() -> usize {
    240
}
fn default_separation() -> f64 {
    3.0
}
fn default_target_low() -> f64 {
    -1.0
}
fn default_target_high() -> f64 {
    2.0
}
fn default_noise_std() -> f64 {
    0.1
}
fn default_samples_per_agent() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_agents: usize,
    /// Erdős–Rényi edge probability (ignored when `weights_file` is set).
    #[serde(default = "default_connectivity")]
    pub connectivity: f64,
    #[serde(default)]
    pub graph_seed: u64,
    /// Load a pinned doubly stochastic weight matrix instead of generating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_file: Option<PathBuf>,
}

fn default_connectivity() -> f64 {
    0.3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKindConfig {
    Quadratic,
    EntropySimplex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKindConfig {
    Constant,
    Diminishing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub variant: blockprox::engine::Variant,
    #[serde(default = "default_formulation")]
    pub formulation: blockprox::engine::Formulation,
    /// Block counts to sweep; a multi-entry list also emits the
    /// block-normalized comparison table.
    pub blocks: Vec<usize>,
    #[serde(default = "default_geometry")]
    pub geometry: GeometryKindConfig,
    pub schedule: ScheduleKindConfig,
    /// Constant stepsize.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Diminishing schedule `alpha_base / (t + 1)^alpha_exponent`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_exponent: Option<f64>,
    #[serde(default = "default_p_on")]
    pub p_on: f64,
    /// Absolute round count. Exactly one of `horizon` and
    /// `rounds_per_block` must be set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Horizon scaling with the block count (`T = rounds_per_block * B`),
    /// which aligns runs on the communication-normalized axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds_per_block: Option<usize>,
    pub master_seed: u64,
    #[serde(default = "default_init_low")]
    pub init_low: f64,
    #[serde(default = "default_init_high")]
    pub init_high: f64,
}

fn default_formulation() -> blockprox::engine::Formulation {
    blockprox::engine::Formulation::Compact
}
fn default_geometry() -> GeometryKindConfig {
    GeometryKindConfig::Quadratic
}
fn default_p_on() -> f64 {
    1.0
}
fn default_init_low() -> f64 {
    -1.0
}
fn default_init_high() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Cost evaluation cadence. With a multi-entry block sweep the stride
    /// scales with B so rows align on the normalized axis.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Independent seeded runs averaged per block count.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_agent_costs")]
    pub agent_costs: bool,
    #[serde(default = "default_reference_iterations")]
    pub reference_iterations: usize,
    #[serde(default = "default_reference_step_scale")]
    pub reference_step_scale: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            eval_every: default_eval_every(),
            seeds: default_seeds(),
            agent_costs: default_agent_costs(),
            reference_iterations: default_reference_iterations(),
            reference_step_scale: default_reference_step_scale(),
        }
    }
}

fn default_eval_every() -> usize {
    10
}
fn default_seeds() -> usize {
    20
}
fn default_agent_costs() -> bool {
    true
}
fn default_reference_iterations() -> usize {
    200_000
}
fn default_reference_step_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: Self = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.algorithm;
        if a.blocks.is_empty() {
            bail!("algorithm.blocks must list at least one block count");
        }
        for &b in &a.blocks {
            if b == 0 || b > self.problem.dimension {
                bail!(
                    "block count {b} invalid for dimension {}",
                    self.problem.dimension
                );
            }
        }
        match (a.horizon, a.rounds_per_block) {
            (Some(_), Some(_)) => {
                bail!("set exactly one of algorithm.horizon and algorithm.rounds_per_block")
            }
            (None, None) => {
                bail!("set one of algorithm.horizon or algorithm.rounds_per_block")
            }
            _ => {}
        }
        if !(a.p_on > 0.0 && a.p_on <= 1.0) {
            bail!("algorithm.p_on must lie in (0, 1], got {}", a.p_on);
        }
        match a.schedule {
            ScheduleKindConfig::Constant => {
                if a.alpha.is_none() {
                    bail!("constant schedule requires algorithm.alpha");
                }
            }
            ScheduleKindConfig::Diminishing => {
                if a.alpha_base.is_none() || a.alpha_exponent.is_none() {
                    bail!("diminishing schedule requires alpha_base and alpha_exponent");
                }
            }
        }
        if self.network.n_agents < 1 {
            bail!("network.n_agents must be positive");
        }
        if self.problem.kind == ProblemKind::LogisticL1
            && self.problem.dimension < 2
        {
            bail!("logistic problems need dimension >= 2 (features plus offset)");
        }
        if self.metrics.seeds == 0 {
            bail!("metrics.seeds must be positive");
        }
        Ok(())
    }

    /// Horizon for a given block count.
    pub fn horizon_for(&self, blocks: usize) -> usize {
        match (self.algorithm.horizon, self.algorithm.rounds_per_block) {
            (Some(t), _) => t,
            (None, Some(r)) => r * blocks,
            (None, None) => unreachable!("validated"),
        }
    }

    /// Evaluation stride for a given block count: scaled by B when the
    /// config sweeps several block counts, absolute otherwise.
    pub fn eval_stride_for(&self, blocks: usize) -> usize {
        if self.algorithm.blocks.len() > 1 {
            self.metrics.eval_every * blocks
        } else {
            self.metrics.eval_every
        }
    }
}
