//! Precision-weighted action selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::softmax;

/// Smallest denominator allowed in the precision update `β₁ / (β₀ − ⟨G⟩)`.
pub const DENOM_FLOOR: f64 = 0.2;

const MAX_PRECISION_ITERATIONS: usize = 16;
const PRECISION_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionState {
    pub beta0: f64,
    pub beta1: f64,
    pub gamma: f64,
}

impl PrecisionState {
    /// Starts at `γ = β₁ / β₀`.
    pub fn new(beta0: f64, beta1: f64) -> Result<Self> {
        if !(beta0 > 0.0 && beta0.is_finite() && beta1 > 0.0 && beta1.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "precision hyperparameters must be positive (β₀={beta0}, β₁={beta1})"
            )));
        }
        Ok(Self { beta0, beta1, gamma: beta1 / beta0 })
    }
}

/// `softmax(log E − γ G)`.
pub fn policy_distribution(efe: &[f64], habits: &[f64], gamma: f64) -> Vec<f64> {
    let logits: Vec<f64> = efe
        .iter()
        .zip(habits)
        .map(|(g, e)| e.ln() - gamma * g)
        .collect();
    softmax(&logits)
}

pub fn expected_efe(policy: &[f64], efe: &[f64]) -> f64 {
    policy.iter().zip(efe).map(|(p, g)| p * g).sum()
}

/// Iterates `γ ← β₁ / max(β₀ − ⟨G⟩_γ, DENOM_FLOOR)` from the current γ to a
/// fixed point (or for at most 16 rounds).
pub fn update_precision(state: &PrecisionState, efe: &[f64], habits: &[f64]) -> Result<PrecisionState> {
    let mut gamma = state.gamma;
    for _ in 0..MAX_PRECISION_ITERATIONS {
        let policy = policy_distribution(efe, habits, gamma);
        let mean_g = expected_efe(&policy, efe);
        let next = state.beta1 / (state.beta0 - mean_g).max(DENOM_FLOOR);
        if !next.is_finite() || next <= 0.0 {
            return Err(Error::Numerical(format!("precision update produced γ = {next} (⟨G⟩ = {mean_g})")));
        }
        let delta = (next - gamma).abs();
        gamma = next;
        if delta < PRECISION_TOL {
            break;
        }
    }
    Ok(PrecisionState { gamma, ..*state })
}

/// Inverse-CDF draw from `policy`.
pub fn sample_action<R: Rng + ?Sized>(policy: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (i, p) in policy.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    // rounding left u above the final cumulative sum
    policy.iter().rposition(|&p| p > 0.0).unwrap_or(policy.len() - 1)
}
