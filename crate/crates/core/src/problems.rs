//! Objective oracles: stochastic subgradient generators and test problems.
//!
//! Every oracle presents a finite store of local samples per agent and is a
//! pure function of `(agent, point, sample index)`; the caller draws sample
//! indices from its own stream. Averaging the sampled subgradient over all
//! local samples recovers a subgradient of the local sample-average cost
//! `f_i` exactly, which is what the unbiasedness assumption asks of the
//! sampling scheme.

use std::io::{BufRead, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;

/// Stochastic first-order oracle over a finite local sample store.
pub trait StochasticOracle: Send + Sync {
    /// Dimension of the decision variable.
    fn dimension(&self) -> usize;

    /// Number of agents the objective is split across.
    fn n_agents(&self) -> usize;

    /// Size of agent `i`'s local sample store.
    fn num_samples(&self, agent: usize) -> usize;

    /// Sampled cost `h_i(x; xi_r)`.
    fn sample_cost(&self, agent: usize, x: &[f64], sample: usize) -> f64;

    /// Stochastic subgradient `g_i(x; xi_r)` of the sampled cost at `x`.
    fn sample_subgradient(&self, agent: usize, x: &[f64], sample: usize) -> Vec<f64>;

    /// Local cost `f_i(x)`, the average of `sample_cost` over the store.
    fn local_cost(&self, agent: usize, x: &[f64]) -> f64 {
        let m = self.num_samples(agent);
        (0..m).map(|r| self.sample_cost(agent, x, r)).sum::<f64>() / m as f64
    }

    /// A subgradient of `f_i` at `x`, the average of the sampled
    /// subgradients.
    fn local_subgradient(&self, agent: usize, x: &[f64]) -> Vec<f64> {
        let m = self.num_samples(agent);
        let mut acc = vec![0.0; self.dimension()];
        for r in 0..m {
            for (a, g) in acc.iter_mut().zip(self.sample_subgradient(agent, x, r)) {
                *a += g;
            }
        }
        for a in &mut acc {
            *a /= m as f64;
        }
        acc
    }

    /// Global cost `f(x) = sum_i f_i(x)`.
    fn cost(&self, x: &[f64]) -> f64 {
        (0..self.n_agents()).map(|i| self.local_cost(i, x)).sum()
    }

    /// A subgradient of `f` at `x`.
    fn full_subgradient(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dimension()];
        for i in 0..self.n_agents() {
            for (a, g) in acc.iter_mut().zip(self.local_subgradient(i, x)) {
                *a += g;
            }
        }
        acc
    }

    /// Whether every sampled cost is differentiable.
    fn is_smooth(&self) -> bool {
        false
    }

    /// Whether every sampled cost separates across coordinates.
    fn is_separable(&self) -> bool {
        false
    }

    /// Partial gradient of `h_i(.; xi_r)` over a coordinate range.
    ///
    /// Only meaningful for smooth oracles, where the slice of the full
    /// gradient equals the gradient with respect to those coordinates.
    fn partial_gradient(
        &self,
        agent: usize,
        x: &[f64],
        sample: usize,
        range: Range<usize>,
    ) -> Vec<f64> {
        self.sample_subgradient(agent, x, sample)[range].to_vec()
    }

    /// Block subgradient computed from the block's own coordinates, for
    /// separable oracles. `block` holds the coordinates in `range`.
    fn separable_block_subgradient(
        &self,
        _agent: usize,
        _block: &[f64],
        _range: Range<usize>,
        _sample: usize,
    ) -> Vec<f64> {
        panic!("oracle is not separable; use sample_subgradient")
    }
}

/// Binary-labeled samples with the constant-1 augmentation.
///
/// Each stored feature vector lives in `R^{d+1}` with the last coordinate
/// fixed to one, so a linear classifier's offset rides along as the final
/// weight. Labels are strictly `-1` or `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl LabeledDataset {
    /// Builds a dataset from raw `d`-dimensional features, appending the
    /// constant-1 coordinate.
    pub fn from_raw_features(raw: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if raw.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} labels",
                raw.len(),
                labels.len()
            )));
        }
        if raw.is_empty() {
            return Err(Error::InvalidDataset("empty dataset".into()));
        }
        let d = raw[0].len();
        let mut features = Vec::with_capacity(raw.len());
        for (r, mut row) in raw.into_iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidDataset(format!(
                    "sample {r} has {} features, expected {d}",
                    row.len()
                )));
            }
            row.push(1.0);
            features.push(row);
        }
        for (r, &b) in labels.iter().enumerate() {
            if b != 1.0 && b != -1.0 {
                return Err(Error::InvalidDataset(format!(
                    "label {b} of sample {r} is not in {{-1, +1}}"
                )));
            }
        }
        Ok(Self { features, labels })
    }

    pub fn n_samples(&self) -> usize {
        self.features.len()
    }

    /// Dimension including the augmentation coordinate.
    pub fn dimension(&self) -> usize {
        self.features[0].len()
    }

    /// Augmented feature vector of sample `r`.
    pub fn feature(&self, r: usize) -> &[f64] {
        &self.features[r]
    }

    pub fn label(&self, r: usize) -> f64 {
        self.labels[r]
    }

    /// Writes one sample per row: `d` raw feature columns then the label.
    /// The augmentation coordinate is stripped on save and re-applied on
    /// load.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = BufWriter::new(file);
        for (row, &label) in self.features.iter().zip(&self.labels) {
            let d = row.len() - 1;
            let mut cols: Vec<String> = row[..d].iter().map(|v| format!("{v}")).collect();
            cols.push(format!("{label}"));
            writeln!(out, "{}", cols.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut raw = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols: Vec<f64> = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<_>>()?;
            if cols.len() < 2 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: "need at least one feature and a label".into(),
                });
            }
            let label = cols.pop().unwrap();
            raw.push(cols);
            labels.push(label);
        }
        Self::from_raw_features(raw, labels)
    }
}

/// Two Gaussian clusters at `+/- separation * u` along a random unit
/// direction, labeled `+1` and `-1`, shuffled so round-robin assignment
/// mixes both classes at every agent. Deterministic given `seed`.
pub fn make_synthetic_clusters(
    n_points: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_points == 0 || n_points % 2 != 0 {
        return Err(Error::InvalidDataset(format!(
            "n_points must be positive and even, got {n_points}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidDataset("dim must be at least 1".into()));
    }
    let mut rng = rng::data_rng(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut direction: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
    let norm: f64 = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut direction {
        *x /= norm.max(1e-12);
    }
    let half = n_points / 2;
    let mut raw = Vec::with_capacity(n_points);
    let mut labels = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let sign = if k < half { 1.0 } else { -1.0 };
        let point: Vec<f64> = direction
            .iter()
            .map(|&u| sign * separation * u + normal.sample(&mut rng))
            .collect();
        raw.push(point);
        labels.push(sign);
    }
    // Shuffle so per-agent stores mix both classes.
    for i in (1..n_points).rev() {
        let j = rng.random_range(0..=i);
        raw.swap(i, j);
        labels.swap(i, j);
    }
    LabeledDataset::from_raw_features(raw, labels)
}

fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn sign_zero(x: f64) -> f64 {
    // Deterministic subgradient choice for |.| at zero.
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// L1-regularized logistic classification split across agents.
///
/// Sample `r` of agent `i` contributes
/// `h_i(x; r) = log(1 + exp(-b_r <x, q_r>)) + (lambda / N) ||x||_1`,
/// so summing the local sample averages recovers the full empirical loss
/// plus `lambda ||x||_1`. Samples go to agents round-robin.
pub struct LogisticL1Oracle {
    data: LabeledDataset,
    lambda: f64,
    n_agents: usize,
    agent_samples: Vec<Vec<usize>>,
}

impl LogisticL1Oracle {
    pub fn new(data: LabeledDataset, lambda: f64, n_agents: usize) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::InvalidDataset(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        if n_agents == 0 || data.n_samples() < n_agents {
            return Err(Error::InvalidDataset(format!(
                "{} samples cannot cover {} agents",
                data.n_samples(),
                n_agents
            )));
        }
        let mut agent_samples = vec![Vec::new(); n_agents];
        for r in 0..data.n_samples() {
            agent_samples[r % n_agents].push(r);
        }
        Ok(Self {
            data,
            lambda,
            n_agents,
            agent_samples,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dataset(&self) -> &LabeledDataset {
        &self.data
    }

    pub fn samples_of(&self, agent: usize) -> &[usize] {
        &self.agent_samples[agent]
    }

    fn margin(&self, global_sample: usize, x: &[f64]) -> f64 {
        let q = self.data.feature(global_sample);
        let b = self.data.label(global_sample);
        let dot: f64 = q.iter().zip(x).map(|(a, b)| a * b).sum();
        b * dot
    }

    fn l1_scale(&self) -> f64 {
        self.lambda / self.n_agents as f64
    }
}

impl StochasticOracle for LogisticL1Oracle {
    fn dimension(&self) -> usize {
        self.data.dimension()
    }

    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn num_samples(&self, agent: usize) -> usize {
        self.agent_samples[agent].len()
    }

    fn sample_cost(&self, agent: usize, x: &[f64], sample: usize) -> f64 {
        let r = self.agent_samples[agent][sample];
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        softplus(-self.margin(r, x)) + self.l1_scale() * l1
    }

    fn sample_subgradient(&self, agent: usize, x: &[f64], sample: usize) -> Vec<f64> {
        let r = self.agent_samples[agent][sample];
        let q = self.data.feature(r);
        let b = self.data.label(r);
        let z = self.margin(r, x);
        let coeff = -b * sigmoid(-z);
        let scale = self.l1_scale();
        q.iter()
            .zip(x)
            .map(|(&qk, &xk)| coeff * qk + scale * sign_zero(xk))
            .collect()
    }

    fn local_cost(&self, agent: usize, x: &[f64]) -> f64 {
        let samples = &self.agent_samples[agent];
        let loss: f64 = samples
            .iter()
            .map(|&r| softplus(-self.margin(r, x)))
            .sum::<f64>()
            / samples.len() as f64;
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        loss + self.l1_scale() * l1
    }

    fn local_subgradient(&self, agent: usize, x: &[f64]) -> Vec<f64> {
        // Accumulates coefficient-scaled features in place; the reference
        // solver calls this in a tight loop.
        let samples = &self.agent_samples[agent];
        let mut acc = vec![0.0; x.len()];
        for &r in samples {
            let q = self.data.feature(r);
            let b = self.data.label(r);
            let coeff = -b * sigmoid(-self.margin(r, x));
            for (a, &qk) in acc.iter_mut().zip(q) {
                *a += coeff * qk;
            }
        }
        let m = samples.len() as f64;
        let scale = self.l1_scale();
        for (a, &xk) in acc.iter_mut().zip(x) {
            *a /= m;
            *a += scale * sign_zero(xk);
        }
        acc
    }

    fn is_smooth(&self) -> bool {
        self.lambda == 0.0
    }

    fn partial_gradient(
        &self,
        agent: usize,
        x: &[f64],
        sample: usize,
        range: Range<usize>,
    ) -> Vec<f64> {
        let r = self.agent_samples[agent][sample];
        let q = self.data.feature(r);
        let b = self.data.label(r);
        let coeff = -b * sigmoid(-self.margin(r, x));
        let scale = self.l1_scale();
        range
            .map(|k| coeff * q[k] + scale * sign_zero(x[k]))
            .collect()
    }
}

/// Separable quadratic testbed: agent `i` pulls every coordinate toward its
/// target shifted by a scalar Gaussian noise sample,
/// `h_i(x; xi_r) = sum_k (x_k - t_{i,k} - xi_r)^2 / 2`.
///
/// The noise store is drawn once at construction, so the sampled problem has
/// the closed-form optimum `mean_i (t_i + mean_noise_i)`; with zero noise
/// that is exactly the mean of the targets.
pub struct SeparableQuadraticOracle {
    targets: Vec<Vec<f64>>,
    noises: Vec<Vec<f64>>,
    mean_noise: Vec<f64>,
    mean_sq_noise: Vec<f64>,
    dimension: usize,
}

impl SeparableQuadraticOracle {
    pub fn new(
        targets: Vec<Vec<f64>>,
        noise_std: f64,
        samples_per_agent: usize,
        seed: u64,
    ) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidDataset("no agent targets".into()));
        }
        if noise_std < 0.0 {
            return Err(Error::InvalidDataset(format!(
                "noise_std must be nonnegative, got {noise_std}"
            )));
        }
        if samples_per_agent == 0 {
            return Err(Error::InvalidDataset("need at least one sample".into()));
        }
        let dimension = targets[0].len();
        if dimension == 0 || targets.iter().any(|t| t.len() != dimension) {
            return Err(Error::InvalidDataset("ragged or empty targets".into()));
        }
        let mut rng = rng::data_rng(seed);
        let noises: Vec<Vec<f64>> = if noise_std == 0.0 {
            vec![vec![0.0; samples_per_agent]; targets.len()]
        } else {
            let normal = Normal::new(0.0, noise_std).expect("gaussian noise");
            targets
                .iter()
                .map(|_| (0..samples_per_agent).map(|_| normal.sample(&mut rng)).collect())
                .collect()
        };
        let mean_noise: Vec<f64> = noises
            .iter()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        let mean_sq_noise: Vec<f64> = noises
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64)
            .collect();
        Ok(Self {
            targets,
            noises,
            mean_noise,
            mean_sq_noise,
            dimension,
        })
    }

    /// Targets drawn uniformly from `[low, high]` per coordinate.
    pub fn random_targets(
        n_agents: usize,
        dimension: usize,
        low: f64,
        high: f64,
        noise_std: f64,
        samples_per_agent: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng::data_rng(rng::derive_seed(seed, 0x7a67));
        let targets = (0..n_agents)
            .map(|_| (0..dimension).map(|_| rng.random_range(low..=high)).collect())
            .collect();
        Self::new(targets, noise_std, samples_per_agent, seed)
    }

    pub fn target(&self, agent: usize) -> &[f64] {
        &self.targets[agent]
    }

    /// Exact minimizer of the sampled problem:
    /// `mean_i (t_i + mean_noise_i * 1)`.
    pub fn exact_optimum(&self) -> Vec<f64> {
        let n = self.targets.len() as f64;
        let mut opt = vec![0.0; self.dimension];
        for (t, &eps) in self.targets.iter().zip(&self.mean_noise) {
            for (o, &tk) in opt.iter_mut().zip(t) {
                *o += (tk + eps) / n;
            }
        }
        opt
    }

    /// Cost of the exact minimizer.
    pub fn optimum_cost(&self) -> f64 {
        self.cost(&self.exact_optimum())
    }
}

impl StochasticOracle for SeparableQuadraticOracle {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn n_agents(&self) -> usize {
        self.targets.len()
    }

    fn num_samples(&self, agent: usize) -> usize {
        self.noises[agent].len()
    }

    fn sample_cost(&self, agent: usize, x: &[f64], sample: usize) -> f64 {
        let noise = self.noises[agent][sample];
        let t = &self.targets[agent];
        0.5 * x
            .iter()
            .zip(t)
            .map(|(&xk, &tk)| {
                let d = xk - tk - noise;
                d * d
            })
            .sum::<f64>()
    }

    fn sample_subgradient(&self, agent: usize, x: &[f64], sample: usize) -> Vec<f64> {
        let noise = self.noises[agent][sample];
        let t = &self.targets[agent];
        x.iter().zip(t).map(|(&xk, &tk)| xk - tk - noise).collect()
    }

    fn local_cost(&self, agent: usize, x: &[f64]) -> f64 {
        // Closed form of the sample average; bitwise this matches averaging
        // sample_cost only up to rounding, but it is exact mathematics.
        let eps = self.mean_noise[agent];
        let msq = self.mean_sq_noise[agent];
        let t = &self.targets[agent];
        let shifted: f64 = x
            .iter()
            .zip(t)
            .map(|(&xk, &tk)| {
                let d = xk - tk - eps;
                d * d
            })
            .sum();
        0.5 * shifted + 0.5 * self.dimension as f64 * (msq - eps * eps)
    }

    fn local_subgradient(&self, agent: usize, x: &[f64]) -> Vec<f64> {
        let eps = self.mean_noise[agent];
        let t = &self.targets[agent];
        x.iter().zip(t).map(|(&xk, &tk)| xk - tk - eps).collect()
    }

    fn is_smooth(&self) -> bool {
        true
    }

    fn is_separable(&self) -> bool {
        true
    }

    fn partial_gradient(
        &self,
        agent: usize,
        x: &[f64],
        sample: usize,
        range: Range<usize>,
    ) -> Vec<f64> {
        let noise = self.noises[agent][sample];
        let t = &self.targets[agent];
        range.map(|k| x[k] - t[k] - noise).collect()
    }

    fn separable_block_subgradient(
        &self,
        agent: usize,
        block: &[f64],
        range: Range<usize>,
        sample: usize,
    ) -> Vec<f64> {
        let noise = self.noises[agent][sample];
        let t = &self.targets[agent];
        block
            .iter()
            .zip(range)
            .map(|(&xk, k)| xk - t[k] - noise)
            .collect()
    }
}

/// Constant-zero objective; its runs are pure consensus dynamics.
pub struct ZeroOracle {
    dimension: usize,
    n_agents: usize,
}

impl ZeroOracle {
    pub fn new(dimension: usize, n_agents: usize) -> Self {
        Self {
            dimension,
            n_agents,
        }
    }
}

impl StochasticOracle for ZeroOracle {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn num_samples(&self, _agent: usize) -> usize {
        1
    }

    fn sample_cost(&self, _agent: usize, _x: &[f64], _sample: usize) -> f64 {
        0.0
    }

    fn sample_subgradient(&self, _agent: usize, _x: &[f64], _sample: usize) -> Vec<f64> {
        vec![0.0; self.dimension]
    }

    fn is_smooth(&self) -> bool {
        true
    }

    fn is_separable(&self) -> bool {
        true
    }

    fn separable_block_subgradient(
        &self,
        _agent: usize,
        block: &[f64],
        _range: Range<usize>,
        _sample: usize,
    ) -> Vec<f64> {
        vec![0.0; block.len()]
    }
}

/// Empirical subgradient norm bounds per agent.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SubgradientBounds {
    /// Max observed `||g_i||` per agent.
    pub norm: Vec<f64>,
    /// Max observed `||g_i||^2` per agent.
    pub norm_sq: Vec<f64>,
}

impl SubgradientBounds {
    /// `G = sum_i G_i`.
    pub fn total_norm(&self) -> f64 {
        self.norm.iter().sum()
    }

    /// `G_bar = sum_i G_bar_i`.
    pub fn total_norm_sq(&self) -> f64 {
        self.norm_sq.iter().sum()
    }
}

/// Estimates per-agent subgradient bounds by probing random points in the
/// box `[-radius, radius]^n` and maximizing over every local sample.
pub fn estimate_bounds(
    oracle: &dyn StochasticOracle,
    probe_points: usize,
    radius: f64,
    seed: u64,
) -> SubgradientBounds {
    assert!(probe_points >= 1, "need at least one probe point");
    let n = oracle.dimension();
    let mut rng = rng::data_rng(rng::derive_seed(seed, 0xb0bd));
    let mut norm = vec![0.0f64; oracle.n_agents()];
    let mut norm_sq = vec![0.0f64; oracle.n_agents()];
    for _ in 0..probe_points {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-radius..=radius)).collect();
        for (i, (gn, gs)) in norm.iter_mut().zip(&mut norm_sq).enumerate() {
            for r in 0..oracle.num_samples(i) {
                let g = oracle.sample_subgradient(i, &x, r);
                let sq: f64 = g.iter().map(|v| v * v).sum();
                *gs = gs.max(sq);
                *gn = gn.max(sq.sqrt());
            }
        }
    }
    SubgradientBounds { norm, norm_sq }
}
