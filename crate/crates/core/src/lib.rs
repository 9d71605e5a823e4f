//! Factorised active-inference agents playing iterated normal-form games.
//!
//! Each agent holds a Dirichlet belief over every player's action type
//! (itself included), learns action-conditioned transition counts, and
//! selects actions by minimising one-step expected free energy under
//! preferences derived from the game's payoffs. Payoffs can be blended
//! smoothly from one game to another on a schedule, and the [`harness`]
//! runs seeded ensembles of such trials.

pub mod action;
pub mod agent;
pub mod belief;
pub mod error;
pub mod game;
pub mod harness;
pub mod io;
pub mod matrix;
pub mod model;
pub mod planner;
pub mod special;
pub mod validate;

pub use agent::{Agent, AgentParams, StepMetrics};
pub use error::{Error, Result};
pub use game::{Action, GameKind, GameSchedule, GameSpec, PayoffTensor, PreferenceTensor, TransitionEvent};
pub use harness::{
    builtin_condition, builtin_conditions, classify_equilibrium, run_condition, run_trial, ConditionSummary,
    ConditionTemplate, Equilibrium, TrialConfig, TrialRecord,
};
