use irl_dr_core::dqn::{Policy, TrainConfig};
use irl_dr_core::environment::{run_episode, PriceModel};
use irl_dr_core::irl_sampled::{
    alpha_objective, estimate_values, max_min_margin, optimize_alpha, run_irl, simulate_expert, Candidate,
    Expert, IrlConfig, StopReason, ValueEstimates,
};
use irl_dr_core::rewards::{features, DiscomfortMode, LearnedReward, RewardSpec, TrueReward};
use irl_dr_core::synth::{synth_household_days, Archetype};
use proptest::prelude::*;

fn grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| -1.0 + 2.0 * k as f64 / steps as f64).collect()
}

#[test]
fn opposing_comparisons_match_a_fine_grid() {
    // gaps live on three coordinates so a 0.05 grid stays enumerable
    let est = ValueEstimates {
        rows: vec![
            [0.0; 6],
            [-0.8, 0.0, 0.3, 0.0, -0.5, 0.0],
            [0.6, 0.0, -0.4, 0.0, 0.2, 0.0],
        ],
    };
    let sol = optimize_alpha(&est).unwrap();
    assert!((alpha_objective(&est, &sol.alpha) - sol.objective).abs() < 1e-9);
    let g = grid(40);
    let mut best = f64::NEG_INFINITY;
    for &a in &g {
        for &b in &g {
            for &c in &g {
                best = best.max(alpha_objective(&est, &[a, 0.0, b, 0.0, c, 0.0]));
            }
        }
    }
    assert!(sol.objective >= best - 1e-9, "{} < {best}", sol.objective);
    assert!(sol.objective <= best + 0.05, "grid should be close: {} vs {best}", sol.objective);
}

#[test]
fn six_dimensional_coarse_grid() {
    let est = ValueEstimates {
        rows: vec![
            [0.2, -0.1, 0.4, 0.0, 0.3, -0.2],
            [0.5, 0.1, -0.2, 0.3, 0.0, 0.1],
            [-0.1, -0.4, 0.6, 0.2, 0.1, -0.5],
            [0.3, 0.2, 0.3, -0.3, 0.4, 0.0],
        ],
    };
    let sol = optimize_alpha(&est).unwrap();
    let g = grid(8);
    let mut best = f64::NEG_INFINITY;
    let mut a = [0.0; 6];
    let mut idx = [0usize; 6];
    loop {
        for i in 0..6 {
            a[i] = g[idx[i]];
        }
        best = best.max(alpha_objective(&est, &a));
        let mut k = 0;
        while k < 6 {
            idx[k] += 1;
            if idx[k] < g.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == 6 {
            break;
        }
    }
    assert!(sol.objective >= best - 1e-9);
    assert!(sol.alpha.iter().all(|v| v.abs() <= 1.0));
}

#[test]
fn full_service_on_the_first_day_has_zero_features() {
    // day 0 has no history, so the baseline equals demand
    let h = synth_household_days(3, Archetype::Full, 2);
    let full = Candidate {
        policy: Policy::Constant { level: 10 },
        reward: RewardSpec::True(TrueReward::default()),
    };
    let expert = Expert::Policy {
        policy: full.policy.clone(),
        reward: full.reward.clone(),
    };
    let est = estimate_values(&expert, &[full], &h, &[0], &PriceModel::default(), 0.9).unwrap();
    for row in &est.rows {
        assert!(row.iter().all(|v| v.abs() < 1e-12), "{row:?}");
    }
}

#[test]
fn zero_discount_keeps_only_the_first_slot() {
    let h = synth_household_days(3, Archetype::Full, 14);
    let price = PriceModel::default();
    let reward = RewardSpec::True(TrueReward::default());
    let policy = Policy::Random { seed: 8 };
    let days = [10, 12, 13];
    let expert = Expert::Policy {
        policy: policy.clone(),
        reward: reward.clone(),
    };
    let est = estimate_values(&expert, &[], &h, &days, &price, 0.0).unwrap();
    let mut want = [0.0; 6];
    for &d in &days {
        let t = run_episode(&h, d, &price, &policy, &reward).unwrap();
        let phi = features(&t.steps[0].state, &t.steps[0].dispatch);
        for i in 0..6 {
            want[i] += phi[i] / 3.0;
        }
    }
    for i in 0..6 {
        assert!((est.rows[0][i] - want[i]).abs() < 1e-12);
    }
}

#[test]
fn discounted_sum_by_hand() {
    let h = synth_household_days(5, Archetype::Laundry, 12);
    let price = PriceModel::default();
    let reward = RewardSpec::True(TrueReward::default());
    let t = run_episode(&h, 11, &price, &Policy::Constant { level: 3 }, &reward).unwrap();
    let expert = Expert::Recorded(vec![t.clone()]);
    let est = estimate_values(&expert, &[], &h, &[11], &price, 0.5).unwrap();
    let mut want = [0.0; 6];
    for (k, s) in t.steps.iter().enumerate() {
        let phi = features(&s.state, &s.dispatch);
        for i in 0..6 {
            want[i] += 0.5f64.powi(k as i32) * phi[i];
        }
    }
    for i in 0..6 {
        assert!((est.rows[0][i] - want[i]).abs() < 1e-12);
    }
}

fn small_agent() -> TrainConfig {
    TrainConfig::preset(20, 0)
}

#[test]
fn random_expert_equal_to_the_start_policy_stops_at_once() {
    let h = synth_household_days(2, Archetype::NoEv, 12);
    let cfg = IrlConfig {
        agent: small_agent(),
        seed: 77,
        ..IrlConfig::default()
    };
    let neutral = RewardSpec::Learned(LearnedReward::new([0.0; 6]));
    let expert = Expert::Policy {
        policy: Policy::Random { seed: 77 },
        reward: neutral,
    };
    let res = run_irl(&expert, &h, &[10, 11], &[11], &PriceModel::default(), &cfg).unwrap();
    assert_eq!(res.stop_reason, StopReason::MarginConverged);
    assert_eq!(res.history.len(), 1);
    assert!(res.history[0].margins.iter().all(|m| m.abs() < 1e-12));
    assert_eq!(res.selected_iteration, 0);
    assert!(res.training.len() == 1);
}

#[test]
fn zero_cap_uses_the_initial_comparison_only() {
    let h = synth_household_days(2, Archetype::Full, 12);
    let price = PriceModel::default();
    let reward = RewardSpec::True(TrueReward::default());
    let expert = Expert::Policy {
        policy: Policy::Constant { level: 6 },
        reward,
    };
    let cfg = IrlConfig {
        max_iterations: 0,
        agent: small_agent(),
        seed: 1,
        ..IrlConfig::default()
    };
    let res = run_irl(&expert, &h, &[10, 11], &[11], &price, &cfg).unwrap();
    assert_eq!(res.history.len(), 1);
    assert_eq!(res.value_estimates.rows.len(), 2);
    let direct = optimize_alpha(&ValueEstimates {
        rows: res.value_estimates.rows.clone(),
    })
    .unwrap();
    assert_eq!(res.alpha, direct.alpha);
}

#[test]
fn short_loop_bookkeeping() {
    let h = synth_household_days(6, Archetype::Full, 13);
    let price = PriceModel::default();
    let expert = Expert::Policy {
        policy: Policy::Constant { level: 7 },
        reward: RewardSpec::True(TrueReward::default()),
    };
    let cfg = IrlConfig {
        max_iterations: 3,
        margin_tolerance: 0.0,
        agent: small_agent(),
        seed: 4,
        ..IrlConfig::default()
    };
    let res = run_irl(&expert, &h, &[10, 11, 12], &[12], &price, &cfg).unwrap();
    assert_eq!(res.stop_reason, StopReason::MaxIterations);
    assert_eq!(res.history.len(), 4);
    assert_eq!(res.policies.len(), 4);
    for (k, r) in res.history.iter().enumerate() {
        assert_eq!(r.iteration, k);
        assert!(r.alpha.iter().all(|a| a.abs() <= 1.0));
        assert_eq!(r.margins.len(), k + 1);
        assert_eq!(r.validation_mae.is_some(), k < 3);
    }
    for w in res.history.windows(2) {
        assert!(w[1].max_min_margin <= w[0].max_min_margin + 1e-9);
    }
    let best = res.history.iter().filter_map(|r| r.validation_mae).fold(f64::INFINITY, f64::min);
    assert_eq!(res.history[res.selected_iteration].validation_mae, Some(best));
}

#[test]
fn expert_behaviour_follows_its_reward() {
    let h = synth_household_days(9, Archetype::Full, 12);
    let price = PriceModel::default();
    let day = [11];
    let mean_level = |reward: TrueReward, seed: u64| {
        let (_, _, t) = simulate_expert(&h, &day, &price, &RewardSpec::True(reward), &TrainConfig::preset(300, seed))
            .unwrap();
        t[0].steps.iter().map(|s| s.action.level() as f64).sum::<f64>() / 96.0
    };
    let greedy = TrueReward {
        w_ac: 0.0,
        w_ts: [0.0; 4],
        discomfort: DiscomfortMode::None,
        ..TrueReward::default()
    };
    let fussy = TrueReward {
        w_ac: 50.0,
        w_ts: [50.0; 4],
        ..TrueReward::default()
    };
    for seed in 0..2 {
        assert!(mean_level(greedy.clone(), seed) < 10.0);
        assert!(mean_level(fussy.clone(), seed) > mean_level(greedy.clone(), seed));
    }
}

#[test]
fn untrained_expert_is_flagged() {
    let h = synth_household_days(9, Archetype::Full, 12);
    let (_, outcome, t) = simulate_expert(
        &h,
        &[11],
        &PriceModel::default(),
        &RewardSpec::True(TrueReward::default()),
        &TrainConfig::preset(0, 1),
    )
    .unwrap();
    assert!(!outcome.trained());
    assert_eq!(t[0].steps.len(), 96);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adding_comparisons_never_loosens_the_max_min(rows in proptest::collection::vec(proptest::array::uniform6(-1.0f64..1.0), 3..7)) {
        let mut prev = f64::INFINITY;
        for k in 2..=rows.len() {
            let est = ValueEstimates { rows: rows[..k].to_vec() };
            let m = max_min_margin(&est).unwrap();
            prop_assert!(m <= prev + 1e-9);
            prev = m;
            let sol = optimize_alpha(&est).unwrap();
            prop_assert!(sol.alpha.iter().all(|a| a.abs() <= 1.0));
            prop_assert!((alpha_objective(&est, &sol.alpha) - sol.objective).abs() < 1e-8);
        }
    }
}
