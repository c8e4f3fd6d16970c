//! Advantage estimation and advantage-distribution diagnostics.

mod ingest;
mod silverman;
mod stats;
mod verdict;

pub use ingest::{parse_rollouts, read_rollouts, Granularity, RolloutData};
pub use silverman::{count_modes, silverman_test, SilvermanConfig, SilvermanResult};
pub use stats::{
    histogram, moments, normal_mass, summarize, AdvantageSummary, BinRule, EstimatorConfig,
    Histogram, KlDirection, Moments,
};
pub use verdict::{verdict, ThresholdCheck, Thresholds, TrainabilityVerdict, Verdict};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rewards `r_0..r_{T-1}` and state values `V(s_0)..V(s_T)` of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTrace<T: Scalar> {
    rewards: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> TrajectoryTrace<T> {
    pub fn new(rewards: Vec<T>, values: Vec<T>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::InvalidArgument("trajectory has no steps".into()));
        }
        if values.len() != rewards.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "trajectory length mismatch: {} rewards need {} values, got {}",
                rewards.len(),
                rewards.len() + 1,
                values.len()
            )));
        }
        if rewards.iter().chain(&values).any(|x| !x.is_finite_val()) {
            return Err(Error::NonFinite("trajectory".into()));
        }
        Ok(Self { rewards, values })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn rewards(&self) -> &[T] {
        &self.rewards
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// TD residuals `δ_t = r_t + γ·V(s_{t+1}) − V(s_t)`.
    pub fn td_residuals(&self, gamma: T) -> Vec<T> {
        self.rewards
            .iter()
            .enumerate()
            .map(|(t, &r)| r + gamma * self.values[t + 1] - self.values[t])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaeParams<T: Scalar> {
    pub gamma: T,
    pub lambda: T,
}

impl<T: Scalar> GaeParams<T> {
    pub fn new(gamma: T, lambda: T) -> Result<Self> {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        if !unit(gamma) || !unit(lambda) {
            return Err(Error::InvalidArgument(format!(
                "gamma and lambda must lie in [0, 1], got {gamma} and {lambda}"
            )));
        }
        Ok(Self { gamma, lambda })
    }
}

/// Generalized advantage estimates via the backward recursion `A_t = δ_t + γλ·A_{t+1}`,
/// with `A_T = 0` past the last step.
pub fn gae<T: Scalar>(trace: &TrajectoryTrace<T>, p: GaeParams<T>) -> Vec<T> {
    let deltas = trace.td_residuals(p.gamma);
    let decay = p.gamma * p.lambda;
    let mut out = vec![T::zero(); deltas.len()];
    let mut next = T::zero();
    for t in (0..deltas.len()).rev() {
        next = deltas[t] + decay * next;
        out[t] = next;
    }
    out
}

/// PPO clipped surrogate `min(ρ·A, clip(ρ, 1−ε, 1+ε)·A)` for one sample.
pub fn ppo_objective<T: Scalar>(ratio: T, advantage: T, epsilon: T) -> Result<T> {
    if ratio <= T::zero() || !ratio.is_finite_val() {
        return Err(Error::InvalidArgument(format!(
            "probability ratio must be positive, got {ratio}"
        )));
    }
    if epsilon <= T::zero() || epsilon >= T::one() {
        return Err(Error::InvalidArgument(format!(
            "clip epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let clipped = ratio.max(T::one() - epsilon).min(T::one() + epsilon);
    Ok((ratio * advantage).min(clipped * advantage))
}
