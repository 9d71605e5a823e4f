//! Seeded trials, ensemble statistics and the built-in experimental
//! conditions.
//!
//! Seeds are derived with SplitMix64 so that every trial of every condition
//! has an independent stream:
//!
//! ```text
//! trial_seed = mix(mix(mix(master) ^ fnv1a(condition)) ^ trial_index)
//! agent_seed = mix(trial_seed ^ (agent + 1) · 0x9E3779B97F4A7C15)
//! ```
//!
//! Adding trials or conditions never perturbs existing ones.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentParams, StepMetrics};
use crate::error::{Error, Result};
use crate::game::{Action, GameKind, GameSchedule, GameSpec, TransitionEvent};
use crate::model::TransitionModel;

pub const DEFAULT_HORIZON: usize = 1000;
pub const DEFAULT_CLASSIFICATION_WINDOW: usize = 50;
pub const KDE_BANDWIDTH: f64 = 0.08;
pub const KDE_GRID_START: f64 = 0.0;
pub const KDE_GRID_END: f64 = 8.0;
pub const KDE_GRID_STEP: f64 = 0.01;

const COOPERATIVE: f64 = 0.8;
const DEFECTIVE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub n_agents: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub base_game: GameSpec,
    #[serde(default)]
    pub transitions: Vec<TransitionEvent>,
    #[serde(default)]
    pub agent: AgentParams,
    #[serde(default)]
    pub seed: u64,
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

impl TrialConfig {
    pub fn schedule(&self) -> Result<GameSchedule> {
        GameSchedule::new(self.base_game.clone(), self.transitions.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n_agents) {
            return Err(Error::InvalidConfig(format!("n_agents must be 2 or 3, got {}", self.n_agents)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.base_game.n_players() != self.n_agents {
            return Err(Error::InvalidConfig(format!(
                "{} is a {}-player game but the trial has {} agents",
                self.base_game.kind(),
                self.base_game.n_players(),
                self.n_agents
            )));
        }
        let schedule = self.schedule()?;
        if !schedule.fits_horizon(self.horizon) {
            return Err(Error::InvalidSchedule(format!(
                "a transition window extends beyond the horizon of {} steps",
                self.horizon
            )));
        }
        self.agent.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Equilibrium {
    /// Everyone cooperates.
    #[serde(rename = "PDE")]
    PayoffDominant,
    /// Everyone defects.
    #[serde(rename = "RDE")]
    RiskDominant,
    /// Exactly one agent stands apart from the rest.
    #[serde(rename = "asymmetric")]
    Asymmetric,
    #[serde(rename = "mixed")]
    Mixed,
}

impl fmt::Display for Equilibrium {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Equilibrium::PayoffDominant => "PDE",
            Equilibrium::RiskDominant => "RDE",
            Equilibrium::Asymmetric => "asymmetric",
            Equilibrium::Mixed => "mixed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    /// `steps[t][agent]`.
    pub steps: Vec<Vec<StepMetrics>>,
    /// Ensemble expected EFE per step (sum of agents' ⟨G⟩).
    pub ensemble: Vec<f64>,
    pub classification: Equilibrium,
    /// Transition counts of every agent at the end of the trial.
    pub final_counts: Vec<TransitionModel>,
}

impl TrialRecord {
    pub fn n_agents(&self) -> usize {
        self.steps.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn final_ensemble(&self) -> f64 {
        *self.ensemble.last().expect("trials have at least one step")
    }

    /// Mean cooperate probability of `agent` over `[end − window, end)`.
    pub fn windowed_cooperation(&self, agent: usize, end: usize, window: usize) -> f64 {
        let end = end.min(self.horizon());
        let start = end.saturating_sub(window.max(1));
        let slice = &self.steps[start..end];
        slice.iter().map(|s| s[agent].cooperate_probability()).sum::<f64>() / slice.len() as f64
    }
}

pub fn agent_seed(trial_seed: u64, agent: usize) -> u64 {
    splitmix64(trial_seed ^ (agent as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn trial_seed(master_seed: u64, condition: &str, trial_index: usize) -> u64 {
    let s = splitmix64(master_seed);
    let s = splitmix64(s ^ fnv1a(condition));
    splitmix64(s ^ trial_index as u64)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01B3))
}

/// Runs one synchronous-move trial.
pub fn run_trial(config: &TrialConfig) -> Result<TrialRecord> {
    config.validate()?;
    let schedule = config.schedule()?;
    let mut agents = (0..config.n_agents)
        .map(|i| Agent::new(i, config.n_agents, config.agent.clone(), agent_seed(config.seed, i)))
        .collect::<Result<Vec<_>>>()?;

    let mut steps = Vec::with_capacity(config.horizon);
    let mut ensemble = Vec::with_capacity(config.horizon);
    let mut previous: Option<Vec<Action>> = None;
    for t in 0..config.horizon {
        let prefs = schedule.preference_at_time(t);
        let mut joint = Vec::with_capacity(config.n_agents);
        let mut row = Vec::with_capacity(config.n_agents);
        for agent in &mut agents {
            let (action, metrics) = agent
                .step(previous.as_deref(), &prefs, config.agent.learning_enabled)
                .map_err(|e| Error::Trial { step: t, agent: agent.id(), source: Box::new(e) })?;
            joint.push(action);
            row.push(metrics);
        }
        ensemble.push(row.iter().map(|m| m.expected_efe).sum());
        steps.push(row);
        previous = Some(joint);
    }

    let mut record = TrialRecord {
        seed: config.seed,
        steps,
        ensemble,
        classification: Equilibrium::Mixed,
        final_counts: agents.iter().map(|a| a.model().transition.clone()).collect(),
    };
    record.classification = classify_equilibrium(&record, DEFAULT_CLASSIFICATION_WINDOW);
    Ok(record)
}

/// Classifies the final `window` steps of a trial.
pub fn classify_equilibrium(record: &TrialRecord, window: usize) -> Equilibrium {
    classify_window(record, record.horizon(), window)
}

/// Classifies the agents' mean policies over `[end − window, end)`.
pub fn classify_window(record: &TrialRecord, end: usize, window: usize) -> Equilibrium {
    let coop: Vec<f64> = (0..record.n_agents())
        .map(|a| record.windowed_cooperation(a, end, window))
        .collect();
    classify_cooperation(&coop)
}

pub fn classify_cooperation(coop: &[f64]) -> Equilibrium {
    let high = coop.iter().filter(|&&p| p >= COOPERATIVE).count();
    let low = coop.iter().filter(|&&p| p <= DEFECTIVE).count();
    let n = coop.len();
    if high == n {
        Equilibrium::PayoffDominant
    } else if low == n {
        Equilibrium::RiskDominant
    } else if high + low == n && (low == 1 || high == 1) {
        Equilibrium::Asymmetric
    } else {
        Equilibrium::Mixed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoleReversal {
    /// The two-agent ensemble was not asymmetric before the transition.
    NotApplicable,
    /// Roles swapped at the given step.
    Reversed { at: usize },
    NotReversed,
}

/// Looks for the pre-transition cooperator and defector swapping roles
/// within `within` steps after `t_transition`, using `window`-step moving
/// averages of the cooperate probability.
pub fn detect_role_reversal(record: &TrialRecord, t_transition: usize, within: usize, window: usize) -> RoleReversal {
    if record.n_agents() != 2 {
        return RoleReversal::NotApplicable;
    }
    if classify_window(record, t_transition, DEFAULT_CLASSIFICATION_WINDOW) != Equilibrium::Asymmetric {
        return RoleReversal::NotApplicable;
    }
    let before: Vec<f64> = (0..2)
        .map(|a| record.windowed_cooperation(a, t_transition, DEFAULT_CLASSIFICATION_WINDOW))
        .collect();
    let (cooperator, defector) = if before[0] > before[1] { (0, 1) } else { (1, 0) };
    let last = (t_transition + within).min(record.horizon());
    for end in (t_transition + 1)..=last {
        let c = record.windowed_cooperation(cooperator, end, window);
        let d = record.windowed_cooperation(defector, end, window);
        if c < 0.5 && d > 0.5 {
            return RoleReversal::Reversed { at: end - 1 };
        }
    }
    RoleReversal::NotReversed
}

/// Gaussian kernel density estimate evaluated on `grid`.
pub fn kde(values: &[f64], bandwidth: f64, grid: &[f64]) -> Vec<f64> {
    assert!(!values.is_empty(), "KDE needs at least one value");
    assert!(bandwidth > 0.0, "bandwidth must be positive");
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&x| {
            norm * values
                .iter()
                .map(|v| {
                    let z = (x - v) / bandwidth;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect()
}

/// The fixed grid `[0, 8]` with step 0.01 used in summaries.
pub fn kde_grid() -> Vec<f64> {
    let n = ((KDE_GRID_END - KDE_GRID_START) / KDE_GRID_STEP).round() as usize;
    (0..=n).map(|i| KDE_GRID_START + i as f64 * KDE_GRID_STEP).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionTemplate {
    pub name: String,
    pub config: TrialConfig,
}

pub const SH2: &str = "SH2";
pub const SH_GREEN: &str = "SH_g";
pub const SH_RED: &str = "SH_r";
pub const SH_PENALTY: &str = "SH_p";
pub const SH_GREEN_THEN_RED: &str = "SH_g-SH_r";
pub const FIG2: &str = "Ch-SH";

/// Interim transition step for the green-then-red condition.
pub const INTERIM_TRANSITION: usize = 750;

fn condition(name: &str, base: GameKind, transitions: Vec<TransitionEvent>, beta1: f64) -> ConditionTemplate {
    ConditionTemplate {
        name: name.to_owned(),
        config: TrialConfig {
            n_agents: base.n_players(),
            horizon: DEFAULT_HORIZON,
            base_game: GameSpec::canonical(base),
            transitions,
            agent: AgentParams { beta1, ..AgentParams::default() },
            seed: 0,
        },
    }
}

/// The five ensemble conditions: chicken for 500 steps, then a stag hunt.
pub fn builtin_conditions() -> Vec<ConditionTemplate> {
    let to = |kind| vec![TransitionEvent::new(500, 10, kind)];
    vec![
        condition(SH2, GameKind::Chicken, to(GameKind::StagHunt), 30.0),
        condition(SH_GREEN, GameKind::Chicken3, to(GameKind::StagHuntGreen), 30.0),
        condition(SH_RED, GameKind::Chicken3, to(GameKind::StagHuntRed), 30.0),
        condition(SH_PENALTY, GameKind::Chicken3, to(GameKind::StagHuntPenalty), 30.0),
        condition(
            SH_GREEN_THEN_RED,
            GameKind::Chicken3,
            vec![
                TransitionEvent::new(500, 10, GameKind::StagHuntGreen),
                TransitionEvent::new(INTERIM_TRANSITION, 10, GameKind::StagHuntRed),
            ],
            30.0,
        ),
    ]
}

/// Two agents, chicken then stag hunt, at the lower rationality β₁ = 15.
pub fn transition_timeseries_condition() -> ConditionTemplate {
    condition(FIG2, GameKind::Chicken, vec![TransitionEvent::new(500, 10, GameKind::StagHunt)], 15.0)
}

pub fn builtin_condition(name: &str) -> Option<ConditionTemplate> {
    builtin_conditions()
        .into_iter()
        .chain(std::iter::once(transition_timeseries_condition()))
        .find(|c| c.name == name)
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub index: usize,
    pub seed: u64,
    pub result: std::result::Result<TrialRecord, String>,
}

#[derive(Clone, Debug)]
pub struct ConditionRun {
    pub template: ConditionTemplate,
    pub master_seed: u64,
    pub trials: Vec<TrialOutcome>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    #[serde(rename = "PDE")]
    pub payoff_dominant: usize,
    #[serde(rename = "RDE")]
    pub risk_dominant: usize,
    pub asymmetric: usize,
    pub mixed: usize,
    pub failed: usize,
}

impl Histogram {
    pub fn add(&mut self, e: Equilibrium) {
        match e {
            Equilibrium::PayoffDominant => self.payoff_dominant += 1,
            Equilibrium::RiskDominant => self.risk_dominant += 1,
            Equilibrium::Asymmetric => self.asymmetric += 1,
            Equilibrium::Mixed => self.mixed += 1,
        }
    }

    pub fn count(&self, e: Equilibrium) -> usize {
        match e {
            Equilibrium::PayoffDominant => self.payoff_dominant,
            Equilibrium::RiskDominant => self.risk_dominant,
            Equilibrium::Asymmetric => self.asymmetric,
            Equilibrium::Mixed => self.mixed,
        }
    }

    pub fn total(&self) -> usize {
        self.payoff_dominant + self.risk_dominant + self.asymmetric + self.mixed + self.failed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeSamples {
    pub bandwidth: f64,
    pub grid_start: f64,
    pub grid_step: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub final_ensemble_g: Option<f64>,
    pub classification: Option<Equilibrium>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub n_trials: usize,
    pub trials: Vec<TrialSummary>,
    pub histogram: Histogram,
    /// Absent when every trial failed.
    pub kde: Option<KdeSamples>,
}

impl ConditionSummary {
    pub fn final_values(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.final_ensemble_g).collect()
    }

    pub fn failures(&self) -> usize {
        self.histogram.failed
    }

    pub fn mean_final(&self) -> Option<f64> {
        let v = self.final_values();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

impl ConditionRun {
    pub fn records(&self) -> impl Iterator<Item = (usize, &TrialRecord)> {
        self.trials.iter().filter_map(|t| t.result.as_ref().ok().map(|r| (t.index, r)))
    }

    pub fn summary(&self) -> ConditionSummary {
        let mut histogram = Histogram::default();
        let trials: Vec<TrialSummary> = self
            .trials
            .iter()
            .map(|t| match &t.result {
                Ok(r) => {
                    histogram.add(r.classification);
                    TrialSummary {
                        trial: t.index,
                        seed: t.seed,
                        final_ensemble_g: Some(r.final_ensemble()),
                        classification: Some(r.classification),
                        error: None,
                    }
                }
                Err(e) => {
                    histogram.failed += 1;
                    TrialSummary { trial: t.index, seed: t.seed, final_ensemble_g: None, classification: None, error: Some(e.clone()) }
                }
            })
            .collect();
        let finals: Vec<f64> = trials.iter().filter_map(|t| t.final_ensemble_g).collect();
        let kde = (!finals.is_empty()).then(|| KdeSamples {
            bandwidth: KDE_BANDWIDTH,
            grid_start: KDE_GRID_START,
            grid_step: KDE_GRID_STEP,
            values: kde(&finals, KDE_BANDWIDTH, &kde_grid()),
        });
        ConditionSummary { condition: self.template.name.clone(), n_trials: self.trials.len(), trials, histogram, kde }
    }
}

/// Runs `n_trials` independent trials of a condition on up to `threads`
/// worker threads. Results are ordered by trial index regardless of the
/// thread count; failed trials are kept with their error message.
pub fn run_condition(template: &ConditionTemplate, n_trials: usize, master_seed: u64, threads: usize) -> Result<ConditionRun> {
    if n_trials == 0 {
        return Err(Error::InvalidConfig("at least one trial is required".into()));
    }
    template.config.validate()?;
    let run_one = |index: usize| {
        let seed = trial_seed(master_seed, &template.name, index);
        let config = TrialConfig { seed, ..template.config.clone() };
        TrialOutcome { index, seed, result: run_trial(&config).map_err(|e| e.to_string()) }
    };
    let trials = run_indexed(n_trials, threads, run_one);
    Ok(ConditionRun { template: template.clone(), master_seed, trials })
}

#[cfg(feature = "parallel")]
fn run_indexed<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    if threads <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_indexed<T>(n: usize, _threads: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}
