use aif_games_wasm_demo::{efe_profile, preference_blend, simulate};

#[test]
fn simulated_trials_are_reproducible() {
    let a = simulate("Ch-SH", 3).unwrap();
    let b = simulate("Ch-SH", 3).unwrap();
    assert_eq!(a.n_agents, 2);
    assert_eq!(a.ensemble.len(), 1000);
    assert_eq!(a.policy_c[1], b.policy_c[1]);
    assert!(a.policy_c.iter().flatten().all(|p| (0.0..=1.0).contains(p)));
    assert!(simulate("nope", 1).is_err());
}

#[test]
fn chicken_profile_crosses_over() {
    let p = efe_profile("Ch", 101).unwrap();
    assert_eq!(p.belief.len(), 101);
    // against a sure defector cooperating is better, against a sure cooperator defecting is
    assert!(p.g_c[0] < p.g_d[0]);
    assert!(p.g_c[100] > p.g_d[100]);
    assert!(efe_profile("XX", 5).is_err());
}

#[test]
fn blend_endpoints() {
    let b = preference_blend("Ch", "SH", 0.0).unwrap();
    assert_eq!(b.outcomes, ["cc", "cd", "dc", "dd"]);
    assert_eq!(b.payoffs, [2.0, 3.0, 4.0, 1.0]);
    let total: f64 = b.preferences.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    let half = preference_blend("Ch", "SH", 0.5).unwrap();
    assert_eq!(half.payoffs, [3.0, 2.0, 3.5, 1.5]);
    assert_eq!(preference_blend("Ch3", "SH_r", 1.0).unwrap().outcomes[3], "cdd");
    assert!(preference_blend("Ch", "SH_r", 0.5).is_err());
}
