//! Per-agent stepsize sequences.
//!
//! Two families: constant `alpha_i` and the power law
//! `alpha_i^t = alpha_i^0 / (t + 1)^q` with `q` in `(0.5, 1]`, which is
//! square-summable but not summable and nonincreasing. The envelope
//! `(min_i alpha_i^t, max_i alpha_i^t)` feeds the convergence bound
//! evaluators.

use crate::error::{Error, Result};

/// One agent's stepsize rule.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ScheduleKind {
    Constant { alpha: f64 },
    Diminishing { base: f64, exponent: f64 },
}

impl ScheduleKind {
    fn validate(&self) -> Result<()> {
        match *self {
            ScheduleKind::Constant { alpha } => {
                if !(alpha > 0.0) || !alpha.is_finite() {
                    return Err(Error::InvalidSchedule(format!(
                        "constant stepsize must be positive, got {alpha}"
                    )));
                }
            }
            ScheduleKind::Diminishing { base, exponent } => {
                if !(base > 0.0) || !base.is_finite() {
                    return Err(Error::InvalidSchedule(format!(
                        "diminishing base must be positive, got {base}"
                    )));
                }
                // q <= 0.5 is not square-summable; q > 1 is summable. Either
                // way the sequence stops satisfying the stepsize conditions.
                if !(exponent > 0.5 && exponent <= 1.0) {
                    return Err(Error::InvalidSchedule(format!(
                        "diminishing exponent must lie in (0.5, 1], got {exponent}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn value(&self, t: usize) -> f64 {
        match *self {
            ScheduleKind::Constant { alpha } => alpha,
            ScheduleKind::Diminishing { base, exponent } => {
                base / ((t + 1) as f64).powf(exponent)
            }
        }
    }
}

/// Stepsize sequences for all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct StepsizeSchedule {
    per_agent: Vec<ScheduleKind>,
}

impl StepsizeSchedule {
    pub fn new(per_agent: Vec<ScheduleKind>) -> Result<Self> {
        if per_agent.is_empty() {
            return Err(Error::InvalidSchedule("no agents".into()));
        }
        for kind in &per_agent {
            kind.validate()?;
        }
        Ok(Self { per_agent })
    }

    /// The same constant stepsize for every agent.
    pub fn uniform_constant(alpha: f64, n_agents: usize) -> Result<Self> {
        Self::new(vec![ScheduleKind::Constant { alpha }; n_agents])
    }

    /// The same diminishing schedule for every agent.
    pub fn uniform_diminishing(base: f64, exponent: f64, n_agents: usize) -> Result<Self> {
        Self::new(vec![ScheduleKind::Diminishing { base, exponent }; n_agents])
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn kind(&self, agent: usize) -> &ScheduleKind {
        &self.per_agent[agent]
    }

    /// `alpha_i^t`.
    pub fn stepsize(&self, agent: usize, t: usize) -> f64 {
        self.per_agent[agent].value(t)
    }

    /// `(min_i alpha_i^t, max_i alpha_i^t)`.
    pub fn envelope(&self, t: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for kind in &self.per_agent {
            let a = kind.value(t);
            lo = lo.min(a);
            hi = hi.max(a);
        }
        (lo, hi)
    }

    pub fn is_constant(&self) -> bool {
        self.per_agent
            .iter()
            .all(|k| matches!(k, ScheduleKind::Constant { .. }))
    }
}
