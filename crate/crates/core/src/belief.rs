//! Dirichlet beliefs over an agent's type simplex and variational inference
//! of those beliefs from a single observed action.
//!
//! The variational free energy of `q = Dir(θ)` against a Dirichlet prior
//! under the delta observation model `p(o | s) = s[o]` is
//!
//! ```text
//! F(θ) = KL(Dir(θ) ‖ Dir(α)) − E_q[log s[o]]
//! ```
//!
//! which is minimised (to `−log E_prior[s[o]]`) by the conjugate posterior
//! `θ = α + e_o`. Monte-Carlo inference descends `F` in log-θ coordinates and
//! reports the sampled estimate `F̂`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::special::{digamma, dirichlet_kl_with, dirichlet_log_density, trigamma};

/// Lower bound applied to Dirichlet sample components before taking logs.
pub const SAMPLE_FLOOR: f64 = 1e-12;

/// Lower bound on concentrations produced by [`categorical_to_prior`].
pub const THETA_FLOOR: f64 = 1e-3;

/// Total concentration of the prior rebuilt from a predicted state.
pub const DEFAULT_PRIOR_CONCENTRATION: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FactorBelief {
    theta: Vec<f64>,
}

impl FactorBelief {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::InvalidBelief("need at least two concentrations".into()));
        }
        if theta.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::InvalidBelief(format!(
                "concentrations must be positive and finite: {theta:?}"
            )));
        }
        Ok(Self { theta })
    }

    pub fn uniform(k: usize) -> Self {
        Self { theta: vec![1.0; k] }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn total(&self) -> f64 {
        self.theta.iter().sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        dirichlet_mean(self)
    }
}

impl TryFrom<Vec<f64>> for FactorBelief {
    type Error = Error;

    fn try_from(theta: Vec<f64>) -> Result<Self> {
        FactorBelief::new(theta)
    }
}

impl From<FactorBelief> for Vec<f64> {
    fn from(b: FactorBelief) -> Self {
        b.theta
    }
}

/// One belief per tracked agent; index 0 is the ego's own factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefSet {
    pub factors: Vec<FactorBelief>,
}

impl BeliefSet {
    pub fn uniform(n_factors: usize, k: usize) -> Self {
        Self { factors: vec![FactorBelief::uniform(k); n_factors] }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.factors.iter().map(FactorBelief::mean).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    MonteCarlo,
    Conjugate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSettings {
    /// Samples `L` drawn for the reported free-energy estimate.
    pub mc_samples: usize,
    pub sgd_steps: usize,
    pub sgd_learning_rate: f64,
    /// Stop once successive free energies differ by less than this.
    pub convergence_tol: f64,
    pub mode: InferenceMode,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        Self {
            mc_samples: 32,
            sgd_steps: 200,
            sgd_learning_rate: 0.05,
            convergence_tol: 1e-10,
            mode: InferenceMode::MonteCarlo,
        }
    }
}

impl InferenceSettings {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples == 0 {
            return Err(Error::InvalidConfig("mc_samples must be at least 1".into()));
        }
        if self.sgd_steps == 0 {
            return Err(Error::InvalidConfig("sgd_steps must be at least 1".into()));
        }
        if !(self.sgd_learning_rate > 0.0 && self.sgd_learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("sgd_learning_rate must be positive".into()));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::InvalidConfig("convergence_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

pub fn dirichlet_mean(belief: &FactorBelief) -> Vec<f64> {
    let total = belief.total();
    belief.theta.iter().map(|t| t / total).collect()
}

/// Closed-form variational free energy in nats.
pub fn vfe_exact(q: &FactorBelief, prior: &FactorBelief, observation: usize) -> f64 {
    vfe_exact_with(q.theta(), prior.theta(), observation, digamma)
}

pub(crate) fn vfe_exact_with(q: &[f64], prior: &[f64], observation: usize, psi: fn(f64) -> f64) -> f64 {
    let q0: f64 = q.iter().sum();
    let expected_log_lik = psi(q[observation]) - psi(q0);
    dirichlet_kl_with(q, prior, psi) - expected_log_lik
}

/// Draws one point from Dir(theta) via normalised gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(theta: &[f64], rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = theta
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|x| *x /= total);
    } else {
        // every gamma draw underflowed; fall back to the largest concentration
        let argmax = theta
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        draws.iter_mut().for_each(|x| *x = 0.0);
        draws[argmax] = 1.0;
    }
    draws
}

/// Single-sample free energy `log q(s) − log p(s) − log s[o]` at `s ~ q`.
pub fn vfe_sample<R: Rng + ?Sized>(
    q: &FactorBelief,
    prior: &FactorBelief,
    observation: usize,
    rng: &mut R,
) -> f64 {
    let s: Vec<f64> = sample_dirichlet(q.theta(), rng)
        .into_iter()
        .map(|x| x.max(SAMPLE_FLOOR))
        .collect();
    dirichlet_log_density(q.theta(), &s) - dirichlet_log_density(prior.theta(), &s) - s[observation].ln()
}

/// Monte-Carlo estimate `F̂` from `samples` draws of `q`.
pub fn vfe_mc<R: Rng + ?Sized>(
    q: &FactorBelief,
    prior: &FactorBelief,
    observation: usize,
    samples: usize,
    rng: &mut R,
) -> f64 {
    assert!(samples >= 1, "at least one sample required");
    let total: f64 = (0..samples).map(|_| vfe_sample(q, prior, observation, rng)).sum();
    total / samples as f64
}

/// Gradient of the closed-form free energy with respect to θ.
fn vfe_gradient(q: &[f64], prior: &[f64], observation: usize) -> Vec<f64> {
    let q0: f64 = q.iter().sum();
    let p0: f64 = prior.iter().sum();
    let shared = (q0 - p0 - 1.0) * trigamma(q0);
    q.iter()
        .zip(prior)
        .enumerate()
        .map(|(k, (&qk, &pk))| {
            let target = pk + if k == observation { 1.0 } else { 0.0 };
            (qk - target) * trigamma(qk) - shared
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub posterior: FactorBelief,
    /// Sampled free-energy estimate at the posterior, in nats.
    pub free_energy: f64,
    pub iterations: usize,
}

pub fn infer<R: Rng + ?Sized>(
    prior: &FactorBelief,
    observation: usize,
    settings: &InferenceSettings,
    rng: &mut R,
) -> Result<Inference> {
    if observation >= prior.theta.len() {
        return Err(Error::MalformedObservation(format!(
            "action index {observation} outside a {}-action space",
            prior.theta.len()
        )));
    }
    let (posterior, iterations) = match settings.mode {
        InferenceMode::Conjugate => {
            let mut theta = prior.theta.clone();
            theta[observation] += 1.0;
            (FactorBelief { theta }, 0)
        }
        InferenceMode::MonteCarlo => descend(prior, observation, settings)?,
    };
    let free_energy = vfe_mc(&posterior, prior, observation, settings.mc_samples, rng);
    if !free_energy.is_finite() {
        return Err(Error::Numerical(format!(
            "free-energy estimate is not finite for θ = {:?}",
            posterior.theta
        )));
    }
    Ok(Inference { posterior, free_energy, iterations })
}

// Natural-gradient descent on F in θ. The gradient is preconditioned by the
// Dirichlet Fisher information `diag ψ′(θ) − ψ′(θ₀) 11ᵀ` (inverted with
// Sherman–Morrison), which keeps every scale of concentration equally well
// conditioned. The rate doubles after each accepted step up to 1 and halves
// whenever a step would leave the simplex interior or raise F.
fn descend(prior: &FactorBelief, observation: usize, settings: &InferenceSettings) -> Result<(FactorBelief, usize)> {
    let alpha = prior.theta();
    let mut theta = alpha.to_vec();
    let mut f = vfe_exact_with(&theta, alpha, observation, digamma);
    let mut iterations = 0;
    let mut rate = settings.sgd_learning_rate.min(1.0);
    for _ in 0..settings.sgd_steps {
        iterations += 1;
        let direction = fisher_solve(&theta, &vfe_gradient(&theta, alpha, observation));
        if direction.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite VFE gradient at θ = {theta:?}")));
        }
        let accepted = loop {
            let cand: Vec<f64> = theta.iter().zip(&direction).map(|(t, g)| t - rate * g).collect();
            if cand.iter().all(|t| t.is_finite() && *t > 0.0) {
                let cand_f = vfe_exact_with(&cand, alpha, observation, digamma);
                if cand_f <= f {
                    break Some((cand, cand_f));
                }
            }
            rate *= 0.5;
            if rate < 1e-12 {
                break None;
            }
        };
        let Some((next_theta, next_f)) = accepted else { break };
        let change = f - next_f;
        theta = next_theta;
        f = next_f;
        rate = (rate * 2.0).min(1.0);
        if change < settings.convergence_tol {
            break;
        }
    }
    Ok((FactorBelief { theta }, iterations))
}

// Solves `(diag ψ′(θ) − ψ′(θ₀) 11ᵀ) x = g`.
fn fisher_solve(theta: &[f64], g: &[f64]) -> Vec<f64> {
    let inv_diag: Vec<f64> = theta.iter().map(|&t| 1.0 / trigamma(t)).collect();
    let c = trigamma(theta.iter().sum());
    let d_inv_g: Vec<f64> = inv_diag.iter().zip(g).map(|(d, g)| d * g).collect();
    let denom = 1.0 - c * inv_diag.iter().sum::<f64>();
    let scale = c * d_inv_g.iter().sum::<f64>() / denom;
    d_inv_g.iter().zip(&inv_diag).map(|(x, d)| x + d * scale).collect()
}

/// Pushes a belief through a column-stochastic transition matrix.
pub fn predict_state(belief: &FactorBelief, transition: &Matrix) -> Vec<f64> {
    transition.mul_vec(&belief.mean())
}

/// How the previous posterior becomes the next step's Dirichlet prior.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorPropagation {
    /// `θ_prior = B̂ θ`: concentrations are carried through the transition
    /// matrix, so evidence accumulates and total mass grows by one per step.
    Accumulate,
    /// `θ_prior = c0 · B̂ mean(θ)`: a fixed-mass prior.
    #[default]
    Fixed,
}

/// Builds the prior for the next inference step from the current posterior.
pub fn propagate_prior(belief: &FactorBelief, transition: &Matrix, mode: PriorPropagation, concentration: f64) -> FactorBelief {
    match mode {
        PriorPropagation::Accumulate => FactorBelief {
            theta: transition.mul_vec(belief.theta()).into_iter().map(|t| t.max(THETA_FLOOR)).collect(),
        },
        PriorPropagation::Fixed => categorical_to_prior(&predict_state(belief, transition), concentration),
    }
}

/// Re-expresses a categorical prediction as a Dirichlet prior of total mass
/// `concentration`, flooring each component at [`THETA_FLOOR`].
pub fn categorical_to_prior(mean: &[f64], concentration: f64) -> FactorBelief {
    FactorBelief {
        theta: mean
            .iter()
            .map(|m| (concentration * m).max(THETA_FLOOR))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn b(theta: &[f64]) -> FactorBelief {
        FactorBelief::new(theta.to_vec()).unwrap()
    }

    #[test]
    fn means() {
        assert_eq!(b(&[1.0, 1.0]).mean(), vec![0.5, 0.5]);
        let m = b(&[2.0, 1.0]).mean();
        assert!((m[0] - 2.0 / 3.0).abs() < 1e-15 && (m[1] - 1.0 / 3.0).abs() < 1e-15);
        let m = b(&[9.0, 1.0]).mean();
        assert!((m[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_theta() {
        assert!(FactorBelief::new(vec![1.0, 0.0]).is_err());
        assert!(FactorBelief::new(vec![1.0, f64::NAN]).is_err());
        assert!(FactorBelief::new(vec![1.0]).is_err());
    }

    #[test]
    fn exact_vfe_examples() {
        assert!((vfe_exact(&b(&[1.0, 1.0]), &b(&[1.0, 1.0]), 0) - 1.0).abs() < 1e-12);
        assert!((vfe_exact(&b(&[2.0, 1.0]), &b(&[1.0, 1.0]), 0) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exact_vfe_attains_evidence_at_conjugate_posterior() {
        let prior = b(&[0.7, 3.2]);
        for o in 0..2 {
            let evidence = -(prior.theta()[o] / prior.total()).ln();
            let mut post = prior.theta().to_vec();
            post[o] += 1.0;
            assert!((vfe_exact(&b(&post), &prior, o) - evidence).abs() < 1e-9);
            assert!(vfe_exact(&b(&[1.5, 1.5]), &prior, o) >= evidence - 1e-9);
        }
    }

    #[test]
    fn single_sample_is_reproducible() {
        let q = b(&[2.0, 1.0]);
        let p = b(&[1.0, 1.0]);
        let a = vfe_mc(&q, &p, 0, 1, &mut ChaCha8Rng::seed_from_u64(7));
        let c = vfe_mc(&q, &p, 0, 1, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a.to_bits(), c.to_bits());
    }

    #[test]
    fn mc_estimate_matches_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (q, expected) in [([1.0, 1.0], 1.0), ([2.0, 1.0], 2f64.ln())] {
            let q = b(&q);
            let p = b(&[1.0, 1.0]);
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| vfe_sample(&q, &p, 0, &mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!((mean - expected).abs() <= 3.0 * se.max(1e-12), "mean {mean} vs {expected} (se {se})");
        }
    }

    #[test]
    fn conjugate_inference() {
        let s = InferenceSettings { mode: InferenceMode::Conjugate, ..Default::default() };
        let out = infer(&b(&[1.0, 1.0]), 0, &s, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.posterior.theta(), &[2.0, 1.0]);
        assert!((out.free_energy - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn monte_carlo_inference_recovers_conjugate_posterior() {
        let out = infer(&b(&[1.0, 1.0]), 0, &InferenceSettings::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let theta = out.posterior.theta();
        assert!((theta[0] - 2.0).abs() < 0.1 && (theta[1] - 1.0).abs() < 0.1, "{theta:?}");
    }

    #[test]
    fn defect_observation_raises_defect_mean() {
        let prior = b(&[5.0, 5.0]);
        let out = infer(&prior, 1, &InferenceSettings::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(out.posterior.mean()[1] > 0.5);
    }

    #[test]
    fn out_of_range_observation_rejected() {
        let r = infer(&b(&[1.0, 1.0]), 2, &InferenceSettings::default(), &mut ChaCha8Rng::seed_from_u64(3));
        assert!(matches!(r, Err(Error::MalformedObservation(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let alpha = [0.8, 2.5];
        for q in [[1.3, 0.4], [4.0, 6.0], [0.05, 2.0]] {
            let g = vfe_gradient(&q, &alpha, 1);
            for k in 0..2 {
                let h = 1e-6 * q[k];
                let mut up = q;
                let mut dn = q;
                up[k] += h;
                dn[k] -= h;
                let fd = (vfe_exact_with(&up, &alpha, 1, digamma) - vfe_exact_with(&dn, &alpha, 1, digamma)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-5 * (1.0 + fd.abs()), "q={q:?} k={k} fd={fd} g={}", g[k]);
            }
        }
    }

    #[test]
    fn state_prediction() {
        let belief = b(&[3.0, 7.0]);
        assert_eq!(predict_state(&belief, &Matrix::identity(2)), belief.mean());
        let uniform = Matrix::filled(2, 0.5);
        assert_eq!(predict_state(&belief, &uniform), vec![0.5, 0.5]);
        let m = Matrix::from_rows(&[&[0.9, 0.2], &[0.1, 0.8]]);
        let out = m.mul_vec(&[1.0, 0.0]);
        assert!((out[0] - 0.9).abs() < 1e-15 && (out[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn prior_reprojection() {
        assert_eq!(categorical_to_prior(&[0.5, 0.5], 2.0).theta(), &[1.0, 1.0]);
        let t = categorical_to_prior(&[0.9, 0.1], 2.0);
        assert!((t.theta()[0] - 1.8).abs() < 1e-15 && (t.theta()[1] - 0.2).abs() < 1e-15);
        assert_eq!(categorical_to_prior(&[1.0, 0.0], 2.0).theta(), &[2.0, 0.001]);
    }
}
