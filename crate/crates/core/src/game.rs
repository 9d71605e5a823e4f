//! Canonical normal-form games, payoff-to-preference conversion and
//! scheduled game transitions.
//!
//! Joint outcomes are flattened row-major with the ego's action on the first
//! axis and alters in ascending agent order on the remaining axes, so the
//! outcome `(c, d, c)` of a three-player game sits at flat index `0b010`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{log_sum_exp, softmax};

/// Number of actions available to every agent.
pub const N_ACTIONS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "c")]
    Cooperate,
    #[serde(rename = "d")]
    Defect,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::Cooperate, Action::Defect];

    pub fn index(self) -> usize {
        match self {
            Action::Cooperate => 0,
            Action::Defect => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }

    pub fn label(self) -> char {
        match self {
            Action::Cooperate => 'c',
            Action::Defect => 'd',
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Flat index of a joint action profile (first entry on the leading axis).
pub fn outcome_index(profile: &[Action]) -> usize {
    profile
        .iter()
        .fold(0, |acc, a| acc * N_ACTIONS + a.index())
}

/// Ego's payoff for every joint action profile.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffTensor {
    n_players: usize,
    values: Vec<f64>,
}

impl PayoffTensor {
    pub fn new(n_players: usize, values: Vec<f64>) -> Result<Self> {
        if n_players == 0 {
            return Err(Error::InvalidPayoffs("at least one player required".into()));
        }
        let expected = N_ACTIONS.pow(n_players as u32);
        if values.len() != expected {
            return Err(Error::InvalidPayoffs(format!(
                "{n_players} players need {expected} entries, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPayoffs("entries must be finite".into()));
        }
        Ok(Self { n_players, values })
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, profile: &[Action]) -> f64 {
        assert_eq!(profile.len(), self.n_players, "profile length");
        self.values[outcome_index(profile)]
    }

    /// `(1 − l)·self + l·other`, entrywise.
    pub fn blend(&self, other: &PayoffTensor, l: f64) -> Result<PayoffTensor> {
        if other.n_players != self.n_players {
            return Err(Error::InvalidSchedule(format!(
                "cannot blend a {}-player game into a {}-player game",
                self.n_players, other.n_players
            )));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (1.0 - l) * a + l * b)
            .collect();
        PayoffTensor::new(self.n_players, values)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GameKind {
    #[serde(rename = "PD")]
    PrisonersDilemma,
    #[serde(rename = "Ch")]
    Chicken,
    #[serde(rename = "SH")]
    StagHunt,
    /// Three-player stag hunt where two hunters suffice.
    #[serde(rename = "SH_g")]
    StagHuntGreen,
    /// Three-player stag hunt needing all three hunters.
    #[serde(rename = "SH_r")]
    StagHuntRed,
    /// As `SH_r` with the temptation lowered to the penalty.
    #[serde(rename = "SH_p")]
    StagHuntPenalty,
    #[serde(rename = "Ch3")]
    Chicken3,
}

impl GameKind {
    pub const ALL: [GameKind; 7] = [
        GameKind::PrisonersDilemma,
        GameKind::Chicken,
        GameKind::StagHunt,
        GameKind::StagHuntGreen,
        GameKind::StagHuntRed,
        GameKind::StagHuntPenalty,
        GameKind::Chicken3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GameKind::PrisonersDilemma => "PD",
            GameKind::Chicken => "Ch",
            GameKind::StagHunt => "SH",
            GameKind::StagHuntGreen => "SH_g",
            GameKind::StagHuntRed => "SH_r",
            GameKind::StagHuntPenalty => "SH_p",
            GameKind::Chicken3 => "Ch3",
        }
    }

    pub fn n_players(self) -> usize {
        match self {
            GameKind::PrisonersDilemma | GameKind::Chicken | GameKind::StagHunt => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for GameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GameKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GameKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownGame(s.to_owned()))
    }
}

/// Payoff values of a symmetric 2×2 game.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PayoffValues {
    pub reward: f64,
    pub sucker: f64,
    pub temptation: f64,
    pub penalty: f64,
}

const PD_VALUES: PayoffValues = PayoffValues { reward: 3.0, sucker: 1.0, temptation: 4.0, penalty: 2.0 };
const CH_VALUES: PayoffValues = PayoffValues { reward: 2.0, sucker: 3.0, temptation: 4.0, penalty: 1.0 };
const CH3_VALUES: PayoffValues = PayoffValues { reward: 3.0, sucker: 2.0, temptation: 4.0, penalty: 1.0 };
const SH_VALUES: PayoffValues = PayoffValues { reward: 4.0, sucker: 1.0, temptation: 3.0, penalty: 2.0 };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameKind", into = "GameKind")]
pub struct GameSpec {
    kind: GameKind,
    payoffs: PayoffTensor,
}

impl GameSpec {
    pub fn kind(&self) -> GameKind {
        self.kind
    }

    pub fn payoffs(&self) -> &PayoffTensor {
        &self.payoffs
    }

    pub fn n_players(&self) -> usize {
        self.payoffs.n_players
    }

    /// The canonical game at its natural player count.
    pub fn canonical(kind: GameKind) -> GameSpec {
        build_canonical(kind, kind.n_players()).expect("natural player count is supported")
    }
}

impl From<GameSpec> for GameKind {
    fn from(spec: GameSpec) -> Self {
        spec.kind
    }
}

impl TryFrom<GameKind> for GameSpec {
    type Error = Error;

    fn try_from(kind: GameKind) -> Result<Self> {
        build_canonical(kind, kind.n_players())
    }
}

/// Builds one of the canonical integer-payoff games.
pub fn build_canonical(kind: GameKind, n_players: usize) -> Result<GameSpec> {
    if kind.n_players() != n_players {
        return Err(Error::UnsupportedPlayerCount { game: kind.name().to_owned(), n_players });
    }
    let values = match kind {
        GameKind::PrisonersDilemma => two_player(PD_VALUES),
        GameKind::Chicken => two_player(CH_VALUES),
        GameKind::StagHunt => two_player(SH_VALUES),
        GameKind::StagHuntGreen => {
            let PayoffValues { reward: r, sucker: s, temptation: t, penalty: p } = SH_VALUES;
            vec![r, r, r, s, t, p, p, p]
        }
        GameKind::StagHuntRed => all_required(SH_VALUES),
        GameKind::StagHuntPenalty => {
            let PayoffValues { reward: r, sucker: s, penalty: p, .. } = SH_VALUES;
            vec![r, s, s, s, p, p, p, p]
        }
        GameKind::Chicken3 => all_required(CH3_VALUES),
    };
    Ok(GameSpec { kind, payoffs: PayoffTensor::new(n_players, values)? })
}

fn two_player(v: PayoffValues) -> Vec<f64> {
    vec![v.reward, v.sucker, v.temptation, v.penalty]
}

// Cooperating pays R only when everyone cooperates; defecting pays T only
// when both alters cooperate.
fn all_required(v: PayoffValues) -> Vec<f64> {
    let PayoffValues { reward: r, sucker: s, temptation: t, penalty: p } = v;
    vec![r, s, s, s, t, p, p, p]
}

/// Joint preference distribution over outcomes, `softmax(payoffs)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceTensor {
    n_players: usize,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl PreferenceTensor {
    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `log p*` computed directly as `payoff − logsumexp(payoffs)`.
    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }
}

pub fn preferences_from_payoffs(payoffs: &PayoffTensor) -> PreferenceTensor {
    let lse = log_sum_exp(&payoffs.values);
    PreferenceTensor {
        n_players: payoffs.n_players,
        probs: softmax(&payoffs.values),
        log_probs: payoffs.values.iter().map(|v| v - lse).collect(),
    }
}

/// A scheduled linear payoff interpolation towards `target`, centred on
/// step `t_x` and lasting `duration` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub t_x: usize,
    pub duration: usize,
    pub target: GameSpec,
}

impl TransitionEvent {
    pub fn new(t_x: usize, duration: usize, target: GameKind) -> Self {
        Self { t_x, duration, target: GameSpec::canonical(target) }
    }

    fn real_start(&self) -> f64 {
        self.t_x as f64 - self.duration as f64 / 2.0
    }

    fn real_end(&self) -> f64 {
        self.t_x as f64 + self.duration as f64 / 2.0
    }

    /// First and last integer steps (inclusive) touched by the window.
    pub fn window(&self) -> (i64, i64) {
        (self.real_start().floor() as i64, self.real_end().ceil() as i64)
    }

    /// Mixing weight of the target game at step `t`, clamped to [0, 1].
    pub fn mixing(&self, t: usize) -> f64 {
        ((t as f64 - self.real_start()) / self.duration as f64).clamp(0.0, 1.0)
    }
}

/// The base game plus an ordered list of non-overlapping transitions.
#[derive(Clone, Debug)]
pub struct GameSchedule {
    base: GameSpec,
    events: Vec<TransitionEvent>,
    // preferences of the base game followed by those of each event's target
    stage_prefs: Vec<PreferenceTensor>,
}

impl GameSchedule {
    pub fn new(base: GameSpec, events: Vec<TransitionEvent>) -> Result<Self> {
        for ev in &events {
            if ev.duration == 0 {
                return Err(Error::InvalidSchedule("transition duration must be positive".into()));
            }
            if ev.target.n_players() != base.n_players() {
                return Err(Error::InvalidSchedule(format!(
                    "transition to {} ({} players) from a {}-player game",
                    ev.target.kind(),
                    ev.target.n_players(),
                    base.n_players()
                )));
            }
            if ev.real_start() < 0.0 {
                return Err(Error::InvalidSchedule(format!(
                    "transition at t_x={} starts before step 0",
                    ev.t_x
                )));
            }
        }
        for pair in events.windows(2) {
            if pair[1].t_x < pair[0].t_x {
                return Err(Error::InvalidSchedule("transitions must be sorted by t_x".into()));
            }
            if pair[1].real_start() < pair[0].real_end() {
                return Err(Error::InvalidSchedule(format!(
                    "transition windows at t_x={} and t_x={} overlap",
                    pair[0].t_x, pair[1].t_x
                )));
            }
        }
        let stage_prefs = std::iter::once(&base)
            .chain(events.iter().map(|e| &e.target))
            .map(|g| preferences_from_payoffs(g.payoffs()))
            .collect();
        Ok(Self { base, events, stage_prefs })
    }

    pub fn base(&self) -> &GameSpec {
        &self.base
    }

    pub fn events(&self) -> &[TransitionEvent] {
        &self.events
    }

    fn stage_game(&self, stage: usize) -> &GameSpec {
        if stage == 0 {
            &self.base
        } else {
            &self.events[stage - 1].target
        }
    }

    /// Joint preferences in force at step `t`.
    pub fn preference_at_time(&self, t: usize) -> PreferenceTensor {
        // number of transitions fully or partially under way at t
        let mut stage = 0;
        for (k, ev) in self.events.iter().enumerate() {
            let l = ev.mixing(t);
            if l <= 0.0 {
                break;
            }
            if l >= 1.0 {
                stage = k + 1;
                continue;
            }
            let blended = self
                .stage_game(k)
                .payoffs()
                .blend(ev.target.payoffs(), l)
                .expect("schedule games share a player count");
            return preferences_from_payoffs(&blended);
        }
        self.stage_prefs[stage].clone()
    }

    /// Whether every transition window lies within `[0, horizon)`.
    pub fn fits_horizon(&self, horizon: usize) -> bool {
        self.events
            .iter()
            .all(|ev| ev.window().0 >= 0 && ev.window().1 < horizon as i64)
    }
}

/// Checks the canonical payoff ordering of a symmetric 2×2 game.
pub fn ordering_holds(kind: GameKind, v: PayoffValues) -> bool {
    let PayoffValues { reward: r, sucker: s, temptation: t, penalty: p } = v;
    match kind {
        GameKind::PrisonersDilemma => t > r && r > p && p > s,
        // the integer table has S > R, so only the anti-coordination
        // structure is checked: T on top and P at the bottom
        GameKind::Chicken | GameKind::Chicken3 => t > r.max(s) && r.min(s) > p,
        _ => r > t && t > p && p > s,
    }
}

/// Reads R, S, T, P back out of a 2-player tensor.
pub fn two_player_values(payoffs: &PayoffTensor) -> Option<PayoffValues> {
    (payoffs.n_players == 2).then(|| PayoffValues {
        reward: payoffs.values[0],
        sucker: payoffs.values[1],
        temptation: payoffs.values[2],
        penalty: payoffs.values[3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Action::{Cooperate as C, Defect as D};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn chicken_matches_integer_table() {
        let ch = build_canonical(GameKind::Chicken, 2).unwrap();
        assert_eq!(ch.payoffs().values(), &[2.0, 3.0, 4.0, 1.0]);
        assert_eq!(ch.payoffs().get(&[D, C]), 4.0);
    }

    #[test]
    fn three_player_variants() {
        let g = build_canonical(GameKind::StagHuntGreen, 3).unwrap();
        let r = build_canonical(GameKind::StagHuntRed, 3).unwrap();
        let p = build_canonical(GameKind::StagHuntPenalty, 3).unwrap();
        assert_eq!(g.payoffs().get(&[C, D, C]), 4.0);
        assert_eq!(r.payoffs().get(&[C, D, C]), 1.0);
        assert_eq!(r.payoffs().get(&[D, C, C]), 3.0);
        // lowered temptation: defecting against two cooperators pays P
        assert_eq!(p.payoffs().get(&[D, C, C]), 2.0);
        let ch3 = build_canonical(GameKind::Chicken3, 3).unwrap();
        assert_eq!(ch3.payoffs().values(), &[3.0, 2.0, 2.0, 2.0, 4.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn canonical_orderings() {
        for kind in [GameKind::PrisonersDilemma, GameKind::Chicken, GameKind::StagHunt] {
            let g = GameSpec::canonical(kind);
            assert!(ordering_holds(kind, two_player_values(g.payoffs()).unwrap()), "{kind}");
        }
    }

    #[test]
    fn player_count_and_name_errors() {
        assert!(matches!(
            build_canonical(GameKind::StagHunt, 3),
            Err(Error::UnsupportedPlayerCount { .. })
        ));
        assert!(matches!(
            build_canonical(GameKind::StagHuntRed, 2),
            Err(Error::UnsupportedPlayerCount { .. })
        ));
        assert!(matches!("Battle".parse::<GameKind>(), Err(Error::UnknownGame(_))));
        assert_eq!("SH_p".parse::<GameKind>().unwrap(), GameKind::StagHuntPenalty);
    }

    #[test]
    fn pd_preferences() {
        let prefs = preferences_from_payoffs(GameSpec::canonical(GameKind::PrisonersDilemma).payoffs());
        assert!(close(prefs.probs(), &[0.2369, 0.0321, 0.6439, 0.0871], 1e-4));
    }

    #[test]
    fn constant_payoffs_give_uniform_preferences() {
        let prefs = preferences_from_payoffs(&PayoffTensor::new(3, vec![2.5; 8]).unwrap());
        assert!(prefs.probs().iter().all(|&p| (p - 0.125).abs() < 1e-15));
    }

    #[test]
    fn schedule_interpolates_chicken_to_stag_hunt() {
        let sched = GameSchedule::new(
            GameSpec::canonical(GameKind::Chicken),
            vec![TransitionEvent::new(500, 10, GameKind::StagHunt)],
        )
        .unwrap();
        let ch = preferences_from_payoffs(GameSpec::canonical(GameKind::Chicken).payoffs());
        let sh = preferences_from_payoffs(GameSpec::canonical(GameKind::StagHunt).payoffs());
        assert_eq!(sched.preference_at_time(0), ch);
        assert_eq!(sched.preference_at_time(495), ch);
        assert_eq!(sched.preference_at_time(505), sh);
        assert_eq!(sched.preference_at_time(999), sh);
        let mid = sched.preference_at_time(500);
        assert!(close(mid.probs(), &[0.3087, 0.1136, 0.5089, 0.0689], 1e-4));
        assert_eq!(sched.events()[0].window(), (495, 505));
    }

    #[test]
    fn odd_duration_window_rounds_outward() {
        let ev = TransitionEvent::new(500, 11, GameKind::StagHunt);
        assert_eq!(ev.window(), (494, 506));
        assert_eq!(ev.mixing(494), 0.0);
        assert_eq!(ev.mixing(506), 1.0);
    }

    #[test]
    fn two_transitions_chain_through_the_interim_game() {
        let sched = GameSchedule::new(
            GameSpec::canonical(GameKind::Chicken3),
            vec![
                TransitionEvent::new(500, 10, GameKind::StagHuntGreen),
                TransitionEvent::new(750, 10, GameKind::StagHuntRed),
            ],
        )
        .unwrap();
        let green = preferences_from_payoffs(GameSpec::canonical(GameKind::StagHuntGreen).payoffs());
        let red = preferences_from_payoffs(GameSpec::canonical(GameKind::StagHuntRed).payoffs());
        assert_eq!(sched.preference_at_time(600), green);
        assert_eq!(sched.preference_at_time(745), green);
        assert_eq!(sched.preference_at_time(900), red);
        let blend = GameSpec::canonical(GameKind::StagHuntGreen)
            .payoffs()
            .blend(GameSpec::canonical(GameKind::StagHuntRed).payoffs(), 0.5)
            .unwrap();
        assert_eq!(sched.preference_at_time(750), preferences_from_payoffs(&blend));
    }

    #[test]
    fn overlapping_or_unsorted_windows_rejected() {
        let base = GameSpec::canonical(GameKind::Chicken3);
        let overlap = GameSchedule::new(
            base.clone(),
            vec![
                TransitionEvent::new(500, 10, GameKind::StagHuntGreen),
                TransitionEvent::new(508, 10, GameKind::StagHuntRed),
            ],
        );
        assert!(matches!(overlap, Err(Error::InvalidSchedule(_))));
        let unsorted = GameSchedule::new(
            base.clone(),
            vec![
                TransitionEvent::new(750, 10, GameKind::StagHuntGreen),
                TransitionEvent::new(500, 10, GameKind::StagHuntRed),
            ],
        );
        assert!(matches!(unsorted, Err(Error::InvalidSchedule(_))));
        let mismatched = GameSchedule::new(base, vec![TransitionEvent::new(500, 10, GameKind::StagHunt)]);
        assert!(matches!(mismatched, Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn game_spec_serialises_as_its_name() {
        let json = serde_json::to_string(&GameSpec::canonical(GameKind::StagHuntGreen)).unwrap();
        assert_eq!(json, "\"SH_g\"");
        let back: GameSpec = serde_json::from_str("\"Ch\"").unwrap();
        assert_eq!(back.payoffs().values(), &[2.0, 3.0, 4.0, 1.0]);
    }
}
