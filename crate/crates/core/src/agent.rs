//! The per-step perception–learning–planning–action cycle of one agent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{expected_efe, policy_distribution, sample_action, update_precision, PrecisionState};
use crate::belief::{
    infer, propagate_prior, BeliefSet, InferenceSettings, PriorPropagation, DEFAULT_PRIOR_CONCENTRATION,
};
use crate::error::{Error, Result};
use crate::game::{Action, PreferenceTensor};
use crate::model::{bayesian_model_reduction, learn_update, GenerativeModel, TransitionBuffer};
use crate::planner::{efe_all_actions, EfeBreakdown};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    pub beta0: f64,
    pub beta1: f64,
    pub alpha_l: f64,
    pub alpha_r: f64,
    pub prior_propagation: PriorPropagation,
    /// Total concentration `c0` of the prior under fixed-mass propagation.
    pub prior_concentration: f64,
    pub inference: InferenceSettings,
    pub learning_enabled: bool,
    pub learn_interval: (usize, usize),
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            beta0: 5.0,
            beta1: 15.0,
            alpha_l: 1.0,
            alpha_r: 1.25,
            prior_propagation: PriorPropagation::default(),
            prior_concentration: DEFAULT_PRIOR_CONCENTRATION,
            inference: InferenceSettings::default(),
            learning_enabled: true,
            learn_interval: (18, 30),
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        PrecisionState::new(self.beta0, self.beta1)?;
        self.inference.validate()?;
        if !(self.prior_concentration > 0.0 && self.prior_concentration.is_finite()) {
            return Err(Error::InvalidConfig("prior_concentration must be positive".into()));
        }
        GenerativeModel::new(1, self.learn_interval, self.alpha_l, self.alpha_r)?;
        Ok(())
    }
}

/// Everything logged about one agent at one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub t: usize,
    pub agent: usize,
    /// Per-factor free energy, ego first then alters in ascending order.
    /// Zero at step 0, where nothing has been observed.
    pub free_energy: Vec<f64>,
    pub efe: EfeBreakdown,
    pub gamma: f64,
    pub expected_efe: f64,
    pub policy: Vec<f64>,
    pub action: Action,
    /// Whether the transition model was updated at this step.
    pub learned: bool,
    /// Posterior means per factor after perception.
    pub beliefs: Vec<Vec<f64>>,
}

impl StepMetrics {
    pub fn free_energy_total(&self) -> f64 {
        self.free_energy.iter().sum()
    }

    pub fn cooperate_probability(&self) -> f64 {
        self.policy[Action::Cooperate.index()]
    }
}

#[derive(Clone, Debug)]
pub struct Agent {
    id: usize,
    n_agents: usize,
    params: AgentParams,
    beliefs: BeliefSet,
    model: GenerativeModel,
    precision: PrecisionState,
    buffer: TransitionBuffer,
    steps_until_learning: usize,
    previous_action: Option<Action>,
    t: usize,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(id: usize, n_agents: usize, params: AgentParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if id >= n_agents {
            return Err(Error::InvalidConfig(format!("agent {id} in a {n_agents}-agent trial")));
        }
        let model = GenerativeModel::new(n_agents, params.learn_interval, params.alpha_l, params.alpha_r)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps_until_learning = rng.random_range(model.learn_interval.0..=model.learn_interval.1);
        Ok(Self {
            id,
            n_agents,
            precision: PrecisionState::new(params.beta0, params.beta1)?,
            beliefs: BeliefSet { factors: model.initial_prior.clone() },
            buffer: TransitionBuffer::with_capacity(model.learn_interval.1 + 1),
            model,
            params,
            steps_until_learning,
            previous_action: None,
            t: 0,
            rng,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn beliefs(&self) -> &BeliefSet {
        &self.beliefs
    }

    pub fn model(&self) -> &GenerativeModel {
        &self.model
    }

    pub fn precision(&self) -> &PrecisionState {
        &self.precision
    }

    pub fn steps_until_learning(&self) -> usize {
        self.steps_until_learning
    }

    /// Agent indices in factor order: self first, then the others ascending.
    pub fn factor_order(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.id).chain((0..self.n_agents).filter(move |&a| a != self.id))
    }

    /// Advances one step. `observation` is the previous joint action in
    /// global agent order and must be `None` exactly at the first step.
    pub fn step(
        &mut self,
        observation: Option<&[Action]>,
        prefs: &PreferenceTensor,
        learning_enabled: bool,
    ) -> Result<(Action, StepMetrics)> {
        if prefs.n_players() != self.n_agents {
            return Err(Error::InvalidConfig(format!(
                "{}-player preferences for a {}-agent trial",
                prefs.n_players(),
                self.n_agents
            )));
        }
        let free_energy = match (observation, self.previous_action) {
            (None, None) => vec![0.0; self.n_agents],
            (Some(obs), Some(prev)) => self.perceive(obs, prev)?,
            (None, Some(_)) => {
                return Err(Error::MalformedObservation("missing observation after the first step".into()))
            }
            (Some(_), None) => {
                return Err(Error::MalformedObservation("observation supplied before any action".into()))
            }
        };

        let mut learned = false;
        if learning_enabled {
            self.buffer.push_states(self.beliefs.means());
            if self.t > 0 {
                self.steps_until_learning -= 1;
                if self.steps_until_learning == 0 {
                    self.learn();
                    learned = true;
                }
            }
        }

        let efe = efe_all_actions(&self.beliefs, &self.model, prefs, learning_enabled);
        let totals = efe.totals();
        self.precision = update_precision(&self.precision, &totals, &self.model.habits)?;
        let policy = policy_distribution(&totals, &self.model.habits, self.precision.gamma);
        let expected = expected_efe(&policy, &totals);
        let action = Action::from_index(sample_action(&policy, &mut self.rng)).expect("policy over known actions");
        if learning_enabled {
            self.buffer.record_action(action);
        }

        let metrics = StepMetrics {
            t: self.t,
            agent: self.id,
            free_energy,
            efe,
            gamma: self.precision.gamma,
            expected_efe: expected,
            policy,
            action,
            learned,
            beliefs: self.beliefs.means(),
        };
        self.previous_action = Some(action);
        self.t += 1;
        Ok((action, metrics))
    }

    fn perceive(&mut self, observation: &[Action], previous: Action) -> Result<Vec<f64>> {
        if observation.len() != self.n_agents {
            return Err(Error::MalformedObservation(format!(
                "expected {} actions, got {}",
                self.n_agents,
                observation.len()
            )));
        }
        if observation[self.id] != previous {
            return Err(Error::MalformedObservation(format!(
                "agent {} observed itself playing {} but played {}",
                self.id, observation[self.id], previous
            )));
        }
        let order: Vec<usize> = self.factor_order().collect();
        let mut free_energy = Vec::with_capacity(self.n_agents);
        for (n, &agent) in order.iter().enumerate() {
            let prior = propagate_prior(
                &self.beliefs.factors[n],
                &self.model.transition.normalized_matrix(previous, n),
                self.params.prior_propagation,
                self.params.prior_concentration,
            );
            let out = infer(&prior, observation[agent].index(), &self.params.inference, &mut self.rng)?;
            self.beliefs.factors[n] = out.posterior;
            free_energy.push(out.free_energy);
        }
        Ok(free_energy)
    }

    fn learn(&mut self) {
        let posterior = learn_update(&self.model.transition, &self.buffer, self.model.alpha_l);
        self.model.transition = bayesian_model_reduction(&self.model.transition, &posterior, self.model.alpha_r);
        self.buffer.clear();
        let (lo, hi) = self.model.learn_interval;
        self.steps_until_learning = self.rng.random_range(lo..=hi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::InferenceMode;
    use crate::game::{preferences_from_payoffs, GameKind, GameSpec};
    use Action::{Cooperate as C, Defect as D};

    fn prefs(kind: GameKind) -> PreferenceTensor {
        preferences_from_payoffs(GameSpec::canonical(kind).payoffs())
    }

    #[test]
    fn first_step_plans_on_the_initial_prior() {
        let mut agent = Agent::new(0, 2, AgentParams::default(), 1).unwrap();
        let (_, m) = agent.step(None, &prefs(GameKind::StagHunt), true).unwrap();
        assert_eq!(m.free_energy, vec![0.0, 0.0]);
        assert_eq!(m.beliefs, vec![vec![0.5, 0.5]; 2]);
        let (c, d) = (m.efe.get(C), m.efe.get(D));
        assert!((c.salience - d.salience).abs() < 1e-15);
        assert!((c.total - d.total - (d.pragmatic - c.pragmatic)).abs() < 1e-12);
    }

    #[test]
    fn observation_contract() {
        let mut agent = Agent::new(1, 2, AgentParams::default(), 1).unwrap();
        let p = prefs(GameKind::Chicken);
        assert!(agent.step(Some(&[C, C]), &p, true).is_err());
        let (a, _) = agent.step(None, &p, true).unwrap();
        let other = if a == C { D } else { C };
        assert!(matches!(agent.step(Some(&[C, other]), &p, true), Err(Error::MalformedObservation(_))));
        assert!(matches!(agent.step(Some(&[C]), &p, true), Err(Error::MalformedObservation(_))));
        assert!(agent.step(None, &p, true).is_err());
        assert!(agent.step(Some(&[D, a]), &p, true).is_ok());
    }

    #[test]
    fn factor_order_puts_self_first() {
        let agent = Agent::new(1, 3, AgentParams::default(), 0).unwrap();
        assert_eq!(agent.factor_order().collect::<Vec<_>>(), vec![1, 0, 2]);
    }

    #[test]
    fn repeated_cooperation_is_believed() {
        let params = AgentParams {
            inference: InferenceSettings { mode: InferenceMode::Conjugate, ..Default::default() },
            ..Default::default()
        };
        let mut agent = Agent::new(0, 2, params, 3).unwrap();
        let p = prefs(GameKind::StagHunt);
        let (mut a, _) = agent.step(None, &p, true).unwrap();
        let mut last = None;
        for _ in 0..300 {
            let (next, m) = agent.step(Some(&[a, C]), &p, true).unwrap();
            a = next;
            last = Some(m);
        }
        assert!(last.unwrap().beliefs[1][0] > 0.9);
    }

    #[test]
    fn learning_gaps_stay_in_range() {
        let run = |seed| {
            let mut agent = Agent::new(0, 2, AgentParams::default(), seed).unwrap();
            let p = prefs(GameKind::Chicken);
            let (mut a, _) = agent.step(None, &p, true).unwrap();
            let mut learned_at = Vec::new();
            for t in 1..400 {
                let (next, m) = agent.step(Some(&[a, D]), &p, true).unwrap();
                if m.learned {
                    learned_at.push(t);
                }
                a = next;
            }
            learned_at
        };
        let steps = run(17);
        assert_eq!(steps, run(17));
        assert!((18..=30).contains(&steps[0]));
        for gap in steps.windows(2).map(|w| w[1] - w[0]) {
            assert!((18..=30).contains(&gap), "gap {gap}");
        }
    }

    #[test]
    fn counts_constant_between_learning_events() {
        let mut agent = Agent::new(0, 2, AgentParams::default(), 8).unwrap();
        let p = prefs(GameKind::StagHunt);
        let (mut a, _) = agent.step(None, &p, true).unwrap();
        let mut counts = agent.model().transition.clone();
        for _ in 1..120 {
            let (next, m) = agent.step(Some(&[a, C]), &p, true).unwrap();
            if !m.learned {
                assert_eq!(agent.model().transition, counts);
            }
            counts = agent.model().transition.clone();
            a = next;
        }
    }
}
