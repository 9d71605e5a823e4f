//! Built-in oracle suite.
//!
//! Every check compares the engine against an independently computed
//! reference on randomly drawn instances from a fixed seed:
//!
//! * conjugate recovery: Monte-Carlo inference against `θ_prior + e_o`;
//! * VFE unbiasedness: the single-sample estimator against the closed form;
//! * EFE decomposition: `G = −ρ − ς − η`, and without novelty `G` equal to the
//!   KL divergence from the product predictive to `p*` by enumeration;
//! * BMR zero case: no evidence gain when posterior and model counts agree,
//!   and novelty never negative.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::belief::{infer, vfe_exact_with, vfe_sample, BeliefSet, FactorBelief, InferenceMode, InferenceSettings};
use crate::game::{preferences_from_payoffs, Action, PayoffTensor, N_ACTIONS};
use crate::matrix::Matrix;
use crate::model::{column_evidence_gain, GenerativeModel};
use crate::planner::efe_all_actions;
use crate::special::digamma;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Largest violation statistic seen, in the units of `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

impl fmt::Display for OracleCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<22} cases={:<4} worst={:.3e} tol={:.1e} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.worst,
            self.tolerance,
            self.seconds
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OracleSuite {
    /// Digamma used by the closed-form side of the VFE check.
    pub digamma: fn(f64) -> f64,
    pub seed: u64,
    pub conjugate_cases: usize,
    pub vfe_cases: usize,
    pub vfe_samples: usize,
    pub efe_cases: usize,
    pub bmr_cases: usize,
}

impl Default for OracleSuite {
    fn default() -> Self {
        Self {
            digamma,
            seed: 20_240_601,
            conjugate_cases: 100,
            vfe_cases: 50,
            vfe_samples: 100_000,
            efe_cases: 200,
            bmr_cases: 100,
        }
    }
}

fn timed(name: &'static str, cases: usize, tolerance: f64, f: impl FnOnce() -> (f64, bool)) -> OracleCheck {
    let start = Instant::now();
    let (worst, extra_ok) = f();
    OracleCheck {
        name,
        passed: extra_ok && worst <= tolerance,
        cases,
        worst,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn random_theta<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Vec<f64> {
    (0..N_ACTIONS).map(|_| rng.random_range(lo..hi)).collect()
}

impl OracleSuite {
    pub fn run_all(&self) -> Vec<OracleCheck> {
        vec![self.conjugate_recovery(), self.vfe_unbiased(), self.efe_decomposition(), self.bmr_zero_case()]
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Worst of the θ error (∞-norm, tolerance 0.1) and the F error scaled
    /// onto the same tolerance (1e−2 nats ↦ 0.1).
    pub fn conjugate_recovery(&self) -> OracleCheck {
        let mut rng = self.rng(1);
        let settings = InferenceSettings { mode: InferenceMode::MonteCarlo, ..InferenceSettings::default() };
        timed("conjugate-recovery", self.conjugate_cases, 0.1, || {
            let mut worst: f64 = 0.0;
            for _ in 0..self.conjugate_cases {
                let prior = random_theta(&mut rng, 0.2, 20.0);
                let o = rng.random_range(0..N_ACTIONS);
                let belief = FactorBelief::new(prior.clone()).expect("positive draw");
                let Ok(result) = infer(&belief, o, &settings, &mut rng) else {
                    return (f64::INFINITY, false);
                };
                let theta_err = result
                    .posterior
                    .theta()
                    .iter()
                    .zip(&prior)
                    .enumerate()
                    .map(|(k, (got, p))| (got - p - if k == o { 1.0 } else { 0.0 }).abs())
                    .fold(0.0, f64::max);
                let evidence = -(prior[o] / prior.iter().sum::<f64>()).ln();
                let f_err = (result.free_energy - evidence).abs() * 10.0;
                worst = worst.max(theta_err).max(f_err);
            }
            (worst, true)
        })
    }

    /// Largest |mean − exact| in standard errors.
    pub fn vfe_unbiased(&self) -> OracleCheck {
        let mut rng = self.rng(2);
        timed("vfe-unbiased", self.vfe_cases, 3.0, || {
            let mut worst: f64 = 0.0;
            for _ in 0..self.vfe_cases {
                let q = FactorBelief::new(random_theta(&mut rng, 0.5, 10.0)).expect("positive draw");
                let p = FactorBelief::new(random_theta(&mut rng, 0.5, 10.0)).expect("positive draw");
                let o = rng.random_range(0..N_ACTIONS);
                let (mut sum, mut sum_sq) = (0.0, 0.0);
                for _ in 0..self.vfe_samples {
                    let x = vfe_sample(&q, &p, o, &mut rng);
                    sum += x;
                    sum_sq += x * x;
                }
                let n = self.vfe_samples as f64;
                let mean = sum / n;
                let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
                let se = (var / n).sqrt().max(1e-12);
                let exact = vfe_exact_with(q.theta(), p.theta(), o, self.digamma);
                worst = worst.max((mean - exact).abs() / se);
            }
            (worst, true)
        })
    }

    /// Worst deviation from the two EFE identities, for random two- and
    /// three-player instances.
    pub fn efe_decomposition(&self) -> OracleCheck {
        let mut rng = self.rng(3);
        timed("efe-decomposition", self.efe_cases, 1e-9, || {
            let mut worst: f64 = 0.0;
            let mut sum_ok = true;
            for case in 0..self.efe_cases {
                let n = 2 + case % 2;
                let beliefs = BeliefSet {
                    factors: (0..n)
                        .map(|_| FactorBelief::new(random_theta(&mut rng, 0.1, 10.0)).expect("positive draw"))
                        .collect(),
                };
                let mut model = GenerativeModel::new(n, (18, 30), 1.0, 1.25).expect("valid rates");
                for a in Action::ALL {
                    for f in 0..n {
                        let rows: Vec<Vec<f64>> = (0..N_ACTIONS).map(|_| random_theta(&mut rng, 0.05, 30.0)).collect();
                        let rows: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                        model.transition.set_counts(a, f, Matrix::from_rows(&rows)).expect("positive counts");
                    }
                }
                let payoffs: Vec<f64> = (0..N_ACTIONS.pow(n as u32)).map(|_| rng.random_range(-3.0..6.0)).collect();
                let prefs = preferences_from_payoffs(&PayoffTensor::new(n, payoffs).expect("right length"));

                let with_novelty = efe_all_actions(&beliefs, &model, &prefs, true);
                for a in &with_novelty.actions {
                    sum_ok &= (a.total - (-a.pragmatic - a.salience - a.novelty)).abs() <= 1e-12;
                    sum_ok &= a.novelty >= 0.0;
                }
                let plain = efe_all_actions(&beliefs, &model, &prefs, false);
                for action in Action::ALL {
                    let reference = brute_force_kl(&beliefs, &model, prefs.log_probs(), action);
                    worst = worst.max((plain.get(action).total - reference).abs());
                }
            }
            (worst, sum_ok)
        })
    }

    pub fn bmr_zero_case(&self) -> OracleCheck {
        let mut rng = self.rng(4);
        timed("bmr-zero-case", self.bmr_cases, 1e-12, || {
            let mut worst: f64 = 0.0;
            for _ in 0..self.bmr_cases {
                let scale = 10f64.powf(rng.random_range(-1.0..3.0));
                for _ in 0..N_ACTIONS {
                    let column: Vec<f64> = random_theta(&mut rng, 0.01, 1.0).iter().map(|x| x * scale).collect();
                    let alpha_r = rng.random_range(0.5..3.0);
                    let (gain, _) = column_evidence_gain(&column, &column, alpha_r);
                    worst = worst.max(gain.abs());
                }
            }
            (worst, true)
        })
    }
}

// KL(q(o | û) ‖ p*) with q the product of the ego's delta and each alter's
// prediction, computed by enumerating every joint outcome.
fn brute_force_kl(beliefs: &BeliefSet, model: &GenerativeModel, log_p: &[f64], action: Action) -> f64 {
    let n = beliefs.len();
    let predictions: Vec<Vec<f64>> = (0..n)
        .map(|f| {
            if f == 0 {
                return (0..N_ACTIONS).map(|k| if k == action.index() { 1.0 } else { 0.0 }).collect();
            }
            let counts = model.transition.counts(action, f);
            let mean = beliefs.factors[f].mean();
            (0..N_ACTIONS)
                .map(|row| {
                    (0..N_ACTIONS)
                        .map(|col| {
                            let col_total: f64 = (0..N_ACTIONS).map(|r| counts.get(r, col)).sum();
                            counts.get(row, col) / col_total * mean[col]
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    (0..N_ACTIONS.pow(n as u32))
        .map(|idx| {
            // the leading player varies slowest
            let q: f64 = (0..n)
                .map(|f| {
                    let digit = idx / N_ACTIONS.pow((n - 1 - f) as u32) % N_ACTIONS;
                    predictions[f][digit]
                })
                .product();
            if q > 0.0 {
                q * (q.ln() - log_p[idx])
            } else {
                0.0
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> OracleSuite {
        OracleSuite { conjugate_cases: 20, vfe_cases: 8, vfe_samples: 20_000, efe_cases: 40, bmr_cases: 20, ..OracleSuite::default() }
    }

    #[test]
    fn reduced_suite_passes() {
        for check in small().run_all() {
            assert!(check.passed, "{check}");
        }
    }

    #[test]
    fn perturbed_digamma_fails_the_vfe_check() {
        fn off_by_a_little(x: f64) -> f64 {
            digamma(x) + 0.05 / x
        }
        let check = OracleSuite { digamma: off_by_a_little, ..small() }.vfe_unbiased();
        assert!(!check.passed, "{check}");
    }
}
