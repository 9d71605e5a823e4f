//! The agent's transition model `B` as Dirichlet counts, with slow-timescale
//! learning and Bayesian model reduction.

use serde::{Deserialize, Serialize};

use crate::belief::FactorBelief;
use crate::error::{Error, Result};
use crate::game::{Action, N_ACTIONS};
use crate::matrix::Matrix;
use crate::special::softmax;

/// Evidence gains at or below this are treated as ties, which keep the
/// posterior counts.
pub const BMR_TIE_TOLERANCE: f64 = 1e-12;

/// Smallest count a reduced column may hold.
pub const REDUCED_COUNT_FLOOR: f64 = 1e-3;

/// Concentration counts indexed by `[ego action][factor]`; each slice is a
/// `|U|×|U|` matrix with column = previous state and row = next state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    n_factors: usize,
    counts: Vec<Matrix>,
}

impl TransitionModel {
    pub fn uniform(n_factors: usize, initial_count: f64) -> Self {
        Self {
            n_factors,
            counts: vec![Matrix::filled(N_ACTIONS, initial_count); N_ACTIONS * n_factors],
        }
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn counts(&self, action: Action, factor: usize) -> &Matrix {
        &self.counts[self.slot(action, factor)]
    }

    pub fn set_counts(&mut self, action: Action, factor: usize, counts: Matrix) -> Result<()> {
        if counts.dim() != N_ACTIONS || counts.as_slice().iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidConfig("transition counts must be positive and finite".into()));
        }
        let slot = self.slot(action, factor);
        self.counts[slot] = counts;
        Ok(())
    }

    fn slot(&self, action: Action, factor: usize) -> usize {
        assert!(factor < self.n_factors, "factor {factor} out of range");
        action.index() * self.n_factors + factor
    }

    pub fn normalized_matrix(&self, action: Action, factor: usize) -> Matrix {
        self.counts(action, factor).normalize_columns()
    }

    pub fn total_mass(&self, factor: usize) -> f64 {
        Action::ALL
            .iter()
            .map(|&a| self.counts(a, factor).as_slice().iter().sum::<f64>())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    /// Per-factor state means at this step.
    pub states: Vec<Vec<f64>>,
    /// Ego action taken after these states were inferred.
    pub action: Option<Action>,
}

/// Chronological record of inferred states and the ego's actions since the
/// last learning event.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionBuffer {
    entries: Vec<BufferEntry>,
}

impl TransitionBuffer {
    pub fn with_capacity(capacity: usize) -> Self {
        Self { entries: Vec::with_capacity(capacity) }
    }

    pub fn push_states(&mut self, states: Vec<Vec<f64>>) {
        self.entries.push(BufferEntry { states, action: None });
    }

    /// Records the action taken from the most recent state.
    pub fn record_action(&mut self, action: Action) {
        if let Some(last) = self.entries.last_mut() {
            last.action = Some(action);
        }
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of complete `τ → τ+1` transitions held.
    pub fn transitions(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    /// Drops consumed transitions. The newest state stays as the origin of
    /// the next window so no transition falls between two learning events.
    pub fn clear(&mut self) {
        let keep = self.entries.len().saturating_sub(1);
        self.entries.drain(..keep);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerativeModel {
    /// Prior over each factor's initial state (`D`).
    pub initial_prior: Vec<FactorBelief>,
    /// Habitual action distribution (`E`).
    pub habits: Vec<f64>,
    pub transition: TransitionModel,
    /// Inclusive range for the interval between learning events.
    pub learn_interval: (usize, usize),
    pub alpha_l: f64,
    pub alpha_r: f64,
}

impl GenerativeModel {
    /// Uniform `D`, uniform `E` and all-ones `B`.
    pub fn new(n_factors: usize, learn_interval: (usize, usize), alpha_l: f64, alpha_r: f64) -> Result<Self> {
        if learn_interval.0 == 0 || learn_interval.0 > learn_interval.1 {
            return Err(Error::InvalidConfig(format!(
                "learning interval {learn_interval:?} must be ordered and positive"
            )));
        }
        if !(alpha_l >= 0.0 && alpha_l.is_finite()) || !(alpha_r > 0.0 && alpha_r.is_finite()) {
            return Err(Error::InvalidConfig("learning and reduction rates must be positive".into()));
        }
        Ok(Self {
            initial_prior: vec![FactorBelief::uniform(N_ACTIONS); n_factors],
            habits: vec![1.0 / N_ACTIONS as f64; N_ACTIONS],
            transition: TransitionModel::uniform(n_factors, 1.0),
            learn_interval,
            alpha_l,
            alpha_r,
        })
    }
}

pub fn normalized_matrix(model: &TransitionModel, action: Action, factor: usize) -> Matrix {
    model.normalized_matrix(action, factor)
}

/// Adds `alpha_l · s_{τ+1} ⊗ s_τ` to the slice of the action taken at `τ`,
/// for every buffered transition and factor.
pub fn learn_update(model: &TransitionModel, buffer: &TransitionBuffer, alpha_l: f64) -> TransitionModel {
    let mut out = model.clone();
    for pair in buffer.entries.windows(2) {
        let (from, to) = (&pair[0], &pair[1]);
        let action = from.action.expect("every buffered transition has an action");
        for factor in 0..model.n_factors {
            let slot = out.slot(action, factor);
            out.counts[slot].add_scaled(&Matrix::outer(&to.states[factor], &from.states[factor]), alpha_l);
        }
    }
    out
}

/// Counts the slice would hold after one more observed transition from
/// `current` to `predicted` under `action`. The model is left untouched.
pub fn predict_counts(
    model: &TransitionModel,
    action: Action,
    factor: usize,
    current: &[f64],
    predicted: &[f64],
    alpha_l: f64,
) -> Matrix {
    let mut counts = model.counts(action, factor).clone();
    counts.add_scaled(&Matrix::outer(predicted, current), alpha_l);
    counts
}

/// Evidence gain of the reduced column over the original one, plus the
/// reduced column's categorical parameters.
pub fn column_evidence_gain(model_column: &[f64], posterior_column: &[f64], alpha_r: f64) -> (f64, Vec<f64>) {
    let model_total: f64 = model_column.iter().sum();
    let posterior_total: f64 = posterior_column.iter().sum();
    let scaled: Vec<f64> = model_column.iter().map(|c| c / alpha_r).collect();
    let reduced = softmax(&scaled);
    let ratio: f64 = model_column
        .iter()
        .zip(posterior_column)
        .zip(&reduced)
        .map(|((m, w), r)| (w / posterior_total) * r / (m / model_total))
        .sum();
    (ratio.ln(), reduced)
}

/// Column-wise Bayesian model reduction: each column of `posterior` is
/// replaced by the mass-preserving reduced column when that raises the
/// evidence, and kept otherwise.
pub fn bayesian_model_reduction(model: &TransitionModel, posterior: &TransitionModel, alpha_r: f64) -> TransitionModel {
    assert_eq!(model.n_factors, posterior.n_factors, "model shapes differ");
    let mut out = posterior.clone();
    for slot in 0..model.counts.len() {
        for col in 0..N_ACTIONS {
            let prior_col = model.counts[slot].column(col);
            let post_col = posterior.counts[slot].column(col);
            let (gain, reduced) = column_evidence_gain(&prior_col, &post_col, alpha_r);
            if gain > BMR_TIE_TOLERANCE {
                let mass: f64 = post_col.iter().sum();
                let restored: Vec<f64> = reduced.iter().map(|r| (mass * r).max(REDUCED_COUNT_FLOOR)).collect();
                out.counts[slot].set_column(col, &restored);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Action::{Cooperate as C, Defect as D};

    fn buffer(entries: &[(&[f64], Option<Action>)]) -> TransitionBuffer {
        TransitionBuffer {
            entries: entries
                .iter()
                .map(|(s, a)| BufferEntry { states: vec![s.to_vec()], action: *a })
                .collect(),
        }
    }

    #[test]
    fn normalization() {
        let m = TransitionModel::uniform(2, 1.0);
        assert_eq!(m.normalized_matrix(C, 1), Matrix::filled(2, 0.5));
        let mut m = TransitionModel::uniform(1, 1.0);
        m.set_counts(C, 0, Matrix::from_rows(&[&[3.0, 1.0], &[1.0, 1.0]])).unwrap();
        let n = m.normalized_matrix(C, 0);
        assert_eq!(n.column(0), vec![0.75, 0.25]);
        assert_eq!(n.normalize_columns(), n);
    }

    #[test]
    fn one_hot_transition_adds_unit_count() {
        let m = TransitionModel::uniform(1, 1.0);
        let buf = buffer(&[(&[1.0, 0.0], Some(C)), (&[0.0, 1.0], None)]);
        let out = learn_update(&m, &buf, 1.0);
        assert_eq!(out.counts(C, 0).get(1, 0), 2.0);
        assert_eq!(out.counts(C, 0).get(0, 0), 1.0);
        assert_eq!(out.counts(D, 0), m.counts(D, 0));
    }

    #[test]
    fn soft_transition_adds_outer_product() {
        let m = TransitionModel::uniform(1, 1.0);
        let buf = buffer(&[(&[0.9, 0.1], Some(D)), (&[0.9, 0.1], None)]);
        let out = learn_update(&m, &buf, 1.0);
        let added: Vec<f64> = out.counts(D, 0).as_slice().iter().map(|c| c - 1.0).collect();
        for (a, e) in added.iter().zip([0.81, 0.09, 0.09, 0.01]) {
            assert!((a - e).abs() < 1e-12);
        }
        assert_eq!(out.counts(C, 0), m.counts(C, 0));
    }

    #[test]
    fn predicted_counts() {
        let m = TransitionModel::uniform(1, 1.0);
        let p = predict_counts(&m, C, 0, &[1.0, 0.0], &[1.0, 0.0], 1.0);
        assert_eq!(p.as_slice(), &[2.0, 1.0, 1.0, 1.0]);
        assert_eq!(predict_counts(&m, C, 0, &[0.3, 0.7], &[0.6, 0.4], 0.0), *m.counts(C, 0));
        let soft = predict_counts(&m, D, 0, &[0.9, 0.1], &[0.9, 0.1], 1.0);
        let buf = buffer(&[(&[0.9, 0.1], Some(D)), (&[0.9, 0.1], None)]);
        assert_eq!(&soft, learn_update(&m, &buf, 1.0).counts(D, 0));
    }

    #[test]
    fn reduction_example_column() {
        let (gain, reduced) = column_evidence_gain(&[3.0, 1.0], &[3.0, 1.0], 1.25);
        assert!((reduced[0] - 0.8320).abs() < 1e-4 && (reduced[1] - 0.1680).abs() < 1e-4);
        assert!(gain.abs() < 1e-12);
        let (gain, reduced) = column_evidence_gain(&[1.0, 1.0], &[5.0, 1.0], 1.25);
        assert_eq!(reduced, vec![0.5, 0.5]);
        assert!(gain.abs() < 1e-12);
    }

    #[test]
    fn reduction_keeps_unchanged_posterior() {
        let mut m = TransitionModel::uniform(2, 1.0);
        m.set_counts(D, 1, Matrix::from_rows(&[&[4.0, 1.5], &[0.5, 2.0]])).unwrap();
        assert_eq!(bayesian_model_reduction(&m, &m, 1.25), m);
    }

    #[test]
    fn reduction_accepts_and_preserves_mass() {
        let mut model = TransitionModel::uniform(1, 1.0);
        model.set_counts(C, 0, Matrix::from_rows(&[&[3.0, 1.0], &[1.0, 1.0]])).unwrap();
        let buf = buffer(&[(&[1.0, 0.0], Some(C)), (&[1.0, 0.0], Some(C)), (&[1.0, 0.0], None)]);
        let posterior = learn_update(&model, &buf, 1.0);
        // posterior column (5, 1) agrees with the sharpened proposal
        let (gain, _) = column_evidence_gain(&[3.0, 1.0], &[5.0, 1.0], 1.25);
        assert!(gain > 0.0);
        let reduced = bayesian_model_reduction(&model, &posterior, 1.25);
        let col = reduced.counts(C, 0).column(0);
        assert!((col.iter().sum::<f64>() - 6.0).abs() < 1e-12);
        assert!((col[0] / 6.0 - 0.8320).abs() < 1e-4);
        assert!(reduced.counts(C, 0).as_slice().iter().all(|&c| c > 0.0));
    }

    #[test]
    fn buffer_clear_keeps_window_origin() {
        let mut buf = TransitionBuffer::default();
        buf.push_states(vec![vec![0.5, 0.5]]);
        buf.record_action(C);
        buf.push_states(vec![vec![0.6, 0.4]]);
        assert_eq!(buf.transitions(), 1);
        buf.clear();
        assert_eq!(buf.len(), 1);
        assert_eq!(buf.entries()[0].states[0], vec![0.6, 0.4]);
        assert_eq!(buf.transitions(), 0);
    }

    #[test]
    fn model_constructor_validates() {
        assert!(GenerativeModel::new(2, (30, 18), 1.0, 1.25).is_err());
        assert!(GenerativeModel::new(2, (18, 30), 1.0, 0.0).is_err());
        let m = GenerativeModel::new(3, (18, 30), 1.0, 1.25).unwrap();
        assert_eq!(m.habits, vec![0.5, 0.5]);
        assert_eq!(m.initial_prior.len(), 3);
    }
}
