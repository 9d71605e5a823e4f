//! Browser bindings. Each export returns a JSON string that the page in
//! `www/` draws onto a canvas.

use aif_games::belief::{BeliefSet, FactorBelief};
use aif_games::game::{outcome_index, preferences_from_payoffs, Action, GameKind, GameSpec};
use aif_games::harness::{builtin_condition, run_trial, trial_seed, TrialConfig};
use aif_games::matrix::Matrix;
use aif_games::model::GenerativeModel;
use aif_games::planner::efe_all_actions;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
pub struct TrialTrace {
    pub condition: String,
    pub n_agents: usize,
    pub classification: String,
    /// `policy_c[agent][t]`
    pub policy_c: Vec<Vec<f64>>,
    pub actions: Vec<Vec<u8>>,
    pub gamma: Vec<Vec<f64>>,
    pub ensemble: Vec<f64>,
}

/// Runs one trial of a builtin condition.
pub fn simulate(condition: &str, seed: u64) -> Result<TrialTrace, String> {
    let template = builtin_condition(condition).ok_or_else(|| format!("unknown condition `{condition}`"))?;
    let config = TrialConfig { seed: trial_seed(seed, condition, 0), ..template.config };
    let record = run_trial(&config).map_err(|e| e.to_string())?;
    let per_agent = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        (0..record.n_agents()).map(|a| (0..record.horizon()).map(|t| f(t, a)).collect()).collect()
    };
    Ok(TrialTrace {
        condition: condition.to_owned(),
        n_agents: record.n_agents(),
        classification: record.classification.to_string(),
        policy_c: per_agent(&|t, a| record.steps[t][a].cooperate_probability()),
        actions: (0..record.n_agents())
            .map(|a| record.steps.iter().map(|row| row[a].action.index() as u8).collect())
            .collect(),
        gamma: per_agent(&|t, a| record.steps[t][a].gamma),
        ensemble: record.ensemble,
    })
}

#[derive(Serialize)]
pub struct EfeProfile {
    pub game: String,
    /// Believed probability that every alter cooperates.
    pub belief: Vec<f64>,
    pub pragmatic_c: Vec<f64>,
    pub pragmatic_d: Vec<f64>,
    pub salience_c: Vec<f64>,
    pub salience_d: Vec<f64>,
    pub g_c: Vec<f64>,
    pub g_d: Vec<f64>,
}

/// EFE of both actions as the belief about the alters sweeps from defect
/// to cooperate, with an identity transition model and no learning.
pub fn efe_profile(game: &str, points: usize) -> Result<EfeProfile, String> {
    let kind: GameKind = game.parse().map_err(|e: aif_games::Error| e.to_string())?;
    let spec = GameSpec::canonical(kind);
    let n = spec.n_players();
    let prefs = preferences_from_payoffs(spec.payoffs());
    let mut model = GenerativeModel::new(n, (18, 30), 1.0, 1.25).map_err(|e| e.to_string())?;
    let sticky = Matrix::from_rows(&[&[1e6, 1e-6], &[1e-6, 1e6]]);
    for a in Action::ALL {
        for f in 0..n {
            model.transition.set_counts(a, f, sticky.clone()).map_err(|e| e.to_string())?;
        }
    }
    let points = points.clamp(2, 1001);
    let mut out = EfeProfile {
        game: kind.name().to_owned(),
        belief: Vec::with_capacity(points),
        pragmatic_c: vec![],
        pragmatic_d: vec![],
        salience_c: vec![],
        salience_d: vec![],
        g_c: vec![],
        g_d: vec![],
    };
    for i in 0..points {
        let p = (i as f64 / (points - 1) as f64).clamp(1e-4, 1.0 - 1e-4);
        let theta = vec![1000.0 * p, 1000.0 * (1.0 - p)];
        let beliefs = BeliefSet {
            factors: (0..n).map(|_| FactorBelief::new(theta.clone())).collect::<Result<_, _>>().map_err(|e| e.to_string())?,
        };
        let efe = efe_all_actions(&beliefs, &model, &prefs, false);
        let (c, d) = (efe.get(Action::Cooperate), efe.get(Action::Defect));
        out.belief.push(i as f64 / (points - 1) as f64);
        out.pragmatic_c.push(c.pragmatic);
        out.pragmatic_d.push(d.pragmatic);
        out.salience_c.push(c.salience);
        out.salience_d.push(d.salience);
        out.g_c.push(c.total);
        out.g_d.push(d.total);
    }
    Ok(out)
}

#[derive(Serialize)]
pub struct Blend {
    pub from: String,
    pub to: String,
    pub l: f64,
    /// Joint profiles such as `cdc`, ego first.
    pub outcomes: Vec<String>,
    pub payoffs: Vec<f64>,
    pub preferences: Vec<f64>,
}

/// Payoffs `(1 − l)·from + l·to` and the preference distribution they induce.
pub fn preference_blend(from: &str, to: &str, l: f64) -> Result<Blend, String> {
    let parse = |s: &str| s.parse::<GameKind>().map(GameSpec::canonical).map_err(|e| e.to_string());
    let (a, b) = (parse(from)?, parse(to)?);
    if a.n_players() != b.n_players() {
        return Err(format!("{from} and {to} have different player counts"));
    }
    let l = l.clamp(0.0, 1.0);
    let payoffs = a.payoffs().blend(b.payoffs(), l).map_err(|e| e.to_string())?;
    let prefs = preferences_from_payoffs(&payoffs);
    let n = a.n_players();
    let mut outcomes = vec![String::new(); 1 << n];
    for idx in 0..1usize << n {
        let profile: Vec<Action> = (0..n)
            .map(|p| if idx >> (n - 1 - p) & 1 == 0 { Action::Cooperate } else { Action::Defect })
            .collect();
        outcomes[outcome_index(&profile)] = profile.iter().map(|a| a.label()).collect();
    }
    Ok(Blend {
        from: from.to_owned(),
        to: to.to_owned(),
        l,
        outcomes,
        payoffs: payoffs.values().to_vec(),
        preferences: prefs.probs().to_vec(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = simulateTrial)]
pub fn simulate_trial_js(condition: &str, seed: u32) -> Result<String, JsValue> {
    to_js(simulate(condition, u64::from(seed)))
}

#[wasm_bindgen(js_name = efeProfile)]
pub fn efe_profile_js(game: &str, points: u32) -> Result<String, JsValue> {
    to_js(efe_profile(game, points as usize))
}

#[wasm_bindgen(js_name = preferenceBlend)]
pub fn preference_blend_js(from: &str, to: &str, l: f64) -> Result<String, JsValue> {
    to_js(preference_blend(from, to, l))
}
