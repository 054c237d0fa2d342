//! Seeded randomness with one independent stream per agent.
//!
//! All simulation randomness flows through counter-based ChaCha streams so a
//! run is a pure function of its master seed: stream 0 is reserved for data
//! and graph generation, stream `1 + i` belongs to agent `i`. Because every
//! agent owns its stream, results cannot depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// SplitMix64 mix, used to derive per-run seeds from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream reserved for dataset and topology generation.
pub fn data_rng(master_seed: u64) -> ChaCha8Rng {
    stream_rng(master_seed, 0)
}

/// Agent `i`'s private stream.
pub fn agent_rng(master_seed: u64, agent: usize) -> ChaCha8Rng {
    stream_rng(master_seed, 1 + agent as u64)
}

fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// The random choices one agent makes in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundDraw {
    /// Awake this round (`s = 1`).
    pub awake: bool,
    /// Drawn block index, present iff awake.
    pub block: Option<usize>,
    /// Drawn local sample index, present iff awake.
    pub sample: Option<usize>,
}

/// Per-agent sampler for the round randomness `(s, l, xi)`.
///
/// The draw order is fixed: the awake flag first, then (only if awake) the
/// block and the sample. Each draw comes from the agent's private stream, so
/// the three variables are mutually independent within a round and i.i.d.
/// across rounds.
#[derive(Debug, Clone)]
pub struct AgentSampler {
    awake_prob: f64,
    block_probs: Vec<f64>,
}

impl AgentSampler {
    pub fn new(awake_prob: f64, block_probs: Vec<f64>) -> Result<Self> {
        if !(awake_prob > 0.0 && awake_prob <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "awake probability must lie in (0, 1], got {awake_prob}"
            )));
        }
        if block_probs.is_empty() {
            return Err(Error::InvalidConfig("empty block distribution".into()));
        }
        if block_probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidConfig(
                "block probabilities must all be strictly positive".into(),
            ));
        }
        let sum: f64 = block_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "block probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            awake_prob,
            block_probs,
        })
    }

    pub fn uniform(awake_prob: f64, num_blocks: usize) -> Result<Self> {
        let p = 1.0 / num_blocks as f64;
        Self::new(awake_prob, vec![p; num_blocks])
    }

    pub fn awake_prob(&self) -> f64 {
        self.awake_prob
    }

    pub fn block_probs(&self) -> &[f64] {
        &self.block_probs
    }

    /// Draws `(s, l, xi)` for one round from `rng`.
    pub fn draw(&self, rng: &mut ChaCha8Rng, num_samples: usize) -> RoundDraw {
        let awake = rng.random_bool(self.awake_prob);
        if !awake {
            return RoundDraw {
                awake: false,
                block: None,
                sample: None,
            };
        }
        let block = categorical(rng, &self.block_probs);
        let sample = rng.random_range(0..num_samples);
        RoundDraw {
            awake: true,
            block: Some(block),
            sample: Some(sample),
        }
    }
}

/// Inverse-CDF draw from a finite distribution (assumed normalized).
fn categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1 // guards against fp shortfall in the cumulative sum
}
