//! One-step expected free energy of each counterfactual ego action.
//!
//! For a counterfactual action `û` the ego predicts each alter's next action
//! by pushing its current belief through `B[û]`, while its own next action
//! is known with certainty (`one_hot(û)`). With the delta likelihood the
//! predicted observation equals the predicted state, so
//!
//! ```text
//! G[û] = −ρ[û] − ς[û] − η[û]
//! ρ[û] = E_{Π_m q(ō_m | û)}[log p*(ō)]      pragmatic value
//! ς[û] = Σ_m H(q(ō_m | û))                  salience
//! η[û] = Σ_n Σ_col KL(Dir(B̄) ‖ Dir(B))     novelty
//! ```

use serde::{Deserialize, Serialize};

use crate::belief::{predict_state, BeliefSet};
use crate::game::{Action, PreferenceTensor, N_ACTIONS};
use crate::model::{predict_counts, GenerativeModel};
use crate::special::{dirichlet_kl, entropy, one_hot};

/// Predicted next-step observation distribution for every factor under one
/// counterfactual action; factor 0 is the ego's own delta distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveProfile {
    pub action: Action,
    pub factors: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionEfe {
    pub pragmatic: f64,
    pub salience: f64,
    pub novelty: f64,
    pub total: f64,
}

impl ActionEfe {
    pub fn new(pragmatic: f64, salience: f64, novelty: f64) -> Self {
        Self { pragmatic, salience, novelty, total: -pragmatic - salience - novelty }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfeBreakdown {
    /// Indexed by action (`c` then `d`).
    pub actions: Vec<ActionEfe>,
}

impl EfeBreakdown {
    pub fn totals(&self) -> Vec<f64> {
        self.actions.iter().map(|a| a.total).collect()
    }

    pub fn get(&self, action: Action) -> &ActionEfe {
        &self.actions[action.index()]
    }
}

pub fn predictive_profile(beliefs: &BeliefSet, model: &GenerativeModel, action: Action) -> PredictiveProfile {
    let factors = beliefs
        .factors
        .iter()
        .enumerate()
        .map(|(n, belief)| {
            if n == 0 {
                one_hot(action.index(), N_ACTIONS)
            } else {
                predict_state(belief, &model.transition.normalized_matrix(action, n))
            }
        })
        .collect();
    PredictiveProfile { action, factors }
}

/// Expected log-preference under the product predictive. The ego marginal is
/// a delta, so only the slice `p*(û, ·)` contributes.
pub fn pragmatic_value(profile: &PredictiveProfile, prefs: &PreferenceTensor) -> f64 {
    let alters = &profile.factors[1..];
    assert_eq!(alters.len() + 1, prefs.n_players(), "profile and preferences disagree on player count");
    let slice_len = N_ACTIONS.pow(alters.len() as u32);
    let slice = &prefs.log_probs()[profile.action.index() * slice_len..][..slice_len];
    slice
        .iter()
        .enumerate()
        .map(|(idx, log_p)| {
            // decode idx into alter actions, most significant axis first
            let mut rem = idx;
            let mut weight = 1.0;
            for q in alters.iter().rev() {
                weight *= q[rem % N_ACTIONS];
                rem /= N_ACTIONS;
            }
            weight * log_p
        })
        .sum()
}

pub fn salience(profile: &PredictiveProfile) -> f64 {
    profile.factors.iter().map(|q| entropy(q)).sum()
}

pub fn novelty(model: &GenerativeModel, beliefs: &BeliefSet, action: Action) -> f64 {
    novelty_for_profile(model, beliefs, &predictive_profile(beliefs, model, action))
}

fn novelty_for_profile(model: &GenerativeModel, beliefs: &BeliefSet, profile: &PredictiveProfile) -> f64 {
    if model.alpha_l == 0.0 {
        return 0.0;
    }
    beliefs
        .factors
        .iter()
        .zip(&profile.factors)
        .enumerate()
        .map(|(n, (belief, predicted))| {
            let current = belief.mean();
            let prior = model.transition.counts(profile.action, n);
            let updated = predict_counts(&model.transition, profile.action, n, &current, predicted, model.alpha_l);
            (0..N_ACTIONS)
                .map(|col| dirichlet_kl(&updated.column(col), &prior.column(col)).max(0.0))
                .sum::<f64>()
        })
        .sum()
}

pub fn efe_all_actions(
    beliefs: &BeliefSet,
    model: &GenerativeModel,
    prefs: &PreferenceTensor,
    learning_enabled: bool,
) -> EfeBreakdown {
    let actions = Action::ALL
        .iter()
        .map(|&action| {
            let profile = predictive_profile(beliefs, model, action);
            let eta = if learning_enabled {
                novelty_for_profile(model, beliefs, &profile)
            } else {
                0.0
            };
            ActionEfe::new(pragmatic_value(&profile, prefs), salience(&profile), eta)
        })
        .collect();
    EfeBreakdown { actions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::FactorBelief;
    use crate::game::{preferences_from_payoffs, GameKind, GameSpec, PayoffTensor};
    use crate::matrix::Matrix;

    fn model(n: usize) -> GenerativeModel {
        GenerativeModel::new(n, (18, 30), 1.0, 1.25).unwrap()
    }

    fn beliefs(thetas: &[[f64; 2]]) -> BeliefSet {
        BeliefSet { factors: thetas.iter().map(|t| FactorBelief::new(t.to_vec()).unwrap()).collect() }
    }

    fn pd() -> PreferenceTensor {
        preferences_from_payoffs(GameSpec::canonical(GameKind::PrisonersDilemma).payoffs())
    }

    #[test]
    fn profiles() {
        let b = beliefs(&[[1.0, 4.0], [7.0, 3.0], [2.0, 2.0]]);
        let p = predictive_profile(&b, &model(3), Action::Cooperate);
        assert_eq!(p.factors[0], vec![1.0, 0.0]);
        assert_eq!(p.factors[1], vec![0.5, 0.5]);

        let mut m = model(2);
        m.transition.set_counts(Action::Defect, 1, Matrix::from_rows(&[&[5.0, 1e-9], &[1e-9, 5.0]])).unwrap();
        let p = predictive_profile(&beliefs(&[[1.0, 1.0], [7.0, 3.0]]), &m, Action::Defect);
        assert!((p.factors[1][0] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn pragmatic_values_in_the_prisoners_dilemma() {
        let b = beliefs(&[[1.0, 1.0], [1.0, 1.0]]);
        let m = model(2);
        let rho_d = pragmatic_value(&predictive_profile(&b, &m, Action::Defect), &pd());
        let rho_c = pragmatic_value(&predictive_profile(&b, &m, Action::Cooperate), &pd());
        assert!((rho_d + 1.4402).abs() < 1e-3);
        assert!((rho_c + 2.4402).abs() < 1e-3);
    }

    #[test]
    fn uniform_preferences_give_minus_log_four() {
        let prefs = preferences_from_payoffs(&PayoffTensor::new(2, vec![1.0; 4]).unwrap());
        let b = beliefs(&[[3.0, 1.0], [0.2, 5.0]]);
        for a in Action::ALL {
            let rho = pragmatic_value(&predictive_profile(&b, &model(2), a), &prefs);
            assert!((rho + 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn salience_examples() {
        let profile = PredictiveProfile {
            action: Action::Cooperate,
            factors: vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.5]],
        };
        assert!((salience(&profile) - 2.0 * 2f64.ln()).abs() < 1e-9);
        let certain = PredictiveProfile { action: Action::Defect, factors: vec![vec![0.0, 1.0], vec![1.0, 0.0]] };
        assert_eq!(salience(&certain), 0.0);
        let one = PredictiveProfile { action: Action::Defect, factors: vec![vec![0.0, 1.0], vec![0.9, 0.1]] };
        assert!((salience(&one) - 0.3251).abs() < 1e-3);
    }

    #[test]
    fn novelty_examples() {
        let b = beliefs(&[[1.0, 1.0], [2.0, 2.0]]);
        let mut m = model(2);
        m.alpha_l = 0.0;
        assert_eq!(novelty(&m, &b, Action::Cooperate), 0.0);

        // one-hot current and predicted (1, 0): only column 0 moves, to Dir(2, 1)
        let m = model(1);
        let current = [1.0, 0.0];
        let updated = predict_counts(&m.transition, Action::Cooperate, 0, &current, &[1.0, 0.0], 1.0);
        let prior = m.transition.counts(Action::Cooperate, 0);
        let eta: f64 = (0..2).map(|c| dirichlet_kl(&updated.column(c), &prior.column(c))).sum();
        assert!((eta - 0.1931).abs() < 1e-3);
        assert!(dirichlet_kl(&updated.column(1), &prior.column(1)).abs() < 1e-15);
    }

    #[test]
    fn efe_in_the_prisoners_dilemma() {
        let b = beliefs(&[[1.0, 1.0], [1.0, 1.0]]);
        let efe = efe_all_actions(&b, &model(2), &pd(), false);
        assert!((efe.get(Action::Cooperate).total - 1.7471).abs() < 1e-3);
        assert!((efe.get(Action::Defect).total - 0.7471).abs() < 1e-3);
        assert_eq!(efe.get(Action::Defect).novelty, 0.0);
        let diff = efe.get(Action::Cooperate).total - efe.get(Action::Defect).total;
        let rho_gap = efe.get(Action::Defect).pragmatic - efe.get(Action::Cooperate).pragmatic;
        assert!((diff - rho_gap).abs() < 1e-12);
    }

    #[test]
    fn learning_adds_nonnegative_novelty() {
        let b = beliefs(&[[2.0, 1.0], [1.0, 3.0], [4.0, 4.0]]);
        let prefs = preferences_from_payoffs(GameSpec::canonical(GameKind::StagHuntGreen).payoffs());
        let efe = efe_all_actions(&b, &model(3), &prefs, true);
        for a in &efe.actions {
            assert!(a.novelty > 0.0);
            assert_eq!(a.total, -a.pragmatic - a.salience - a.novelty);
        }
    }
}
