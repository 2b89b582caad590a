mod common {
    pub mod invariants;
}

use common::invariants::CHECKS;
use irl_dr_core::domain::{standard_inventory, Household, SlotIndex};
use irl_dr_core::environment::{baseline, dispatch, Action, DispatchInput, OpenRequest};
use irl_dr_core::rewards::{RewardSpec, TrueReward};
use proptest::prelude::*;

#[test]
fn invariants_hold() {
    for (name, check) in CHECKS {
        if let Err(e) = check() {
            panic!("{name}: {e}");
        }
    }
}

fn constant_days(values: &[f64]) -> Household {
    let days = values.len();
    let mut demand = vec![vec![0.0; 96 * days]; 6];
    for (d, v) in values.iter().enumerate() {
        for s in 0..96 {
            demand[5][d * 96 + s] = *v;
        }
    }
    let d0 = chrono::NaiveDate::from_ymd_opt(2018, 4, 1).unwrap();
    let dates = (0..days).map(|k| d0 + chrono::Days::new(k as u64)).collect();
    Household::new("c", standard_inventory(), demand, dates).unwrap()
}

#[test]
fn baseline_examples() {
    let h = constant_days(&[4.0; 11]);
    assert_eq!(baseline(&h, SlotIndex { day: 10, slot: 72 }).unwrap(), 4.0);
    let h = constant_days(&[2.0, 2.0, 2.0, 2.0, 2.0, 4.0, 4.0, 4.0, 4.0, 4.0, 9.0]);
    assert_eq!(baseline(&h, SlotIndex { day: 10, slot: 3 }).unwrap(), 3.0);
    let h = constant_days(&[5.0]);
    assert_eq!(baseline(&h, SlotIndex { day: 0, slot: 50 }).unwrap(), 5.0);
}

/// Two requests compete for headroom that fits one of them. Trying both
/// orders and keeping the one with the better reward is the oracle.
#[test]
fn contested_headroom_goes_to_the_costlier_deferral() {
    let mut reward = TrueReward::default();
    reward.w_ts = [0.001, 0.01, 0.002, 0.002];
    let spec = RewardSpec::True(reward);
    let mut input = DispatchInput {
        ns_demand: 0.5,
        ..Default::default()
    };
    input.open[0] = Some(OpenRequest { first_draw: 1.0, delay: 3, startable: true });
    input.open[1] = Some(OpenRequest { first_draw: 1.0, delay: 3, startable: true });
    let d = dispatch(1.6, &input, &spec);
    let penalty = |started: usize| {
        let other = 1 - started;
        spec.deferral_cost(other, 4)
    };
    let oracle = if penalty(0) <= penalty(1) { 0 } else { 1 };
    assert!(d.ts_power[oracle] > 0.0);
    assert_eq!(d.ts_power[1 - oracle], 0.0);
    assert_eq!(oracle, 1);
}

proptest! {
    #[test]
    fn dispatch_respects_floor_and_target(
        ns in 0.0f64..3.0,
        pc in 0.0f64..3.0,
        committed in proptest::array::uniform4(prop_oneof![Just(0.0), 0.1f64..2.0]),
        draws in proptest::array::uniform4(prop_oneof![Just(None), (0.1f64..2.0).prop_map(Some)]),
        level in 0usize..=10,
    ) {
        let mut input = DispatchInput { ns_demand: ns, pc_demand: pc, committed, ..Default::default() };
        for m in 0..4 {
            input.open[m] = draws[m].map(|first_draw| OpenRequest {
                first_draw,
                delay: m as u32,
                startable: committed[m] == 0.0,
            });
        }
        let full = ns + pc + committed.iter().sum::<f64>()
            + draws.iter().zip(&committed).map(|(d, c)| if *c == 0.0 { d.unwrap_or(0.0) } else { 0.0 }).sum::<f64>();
        let target = Action::new(level).unwrap().target(full);
        let d = dispatch(target, &input, &RewardSpec::True(TrueReward::default()));
        let floor = ns + committed.iter().sum::<f64>();
        prop_assert!(d.total >= floor - 1e-12);
        prop_assert!(d.total <= target.max(floor) + 1e-9);
        prop_assert!(d.pc <= pc + 1e-12 && d.pc >= 0.0);
        prop_assert_eq!(d.ns, ns);
        if level == 10 {
            prop_assert!((d.total - full).abs() < 1e-9);
        }
    }
}
