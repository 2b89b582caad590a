//! Behavioural invariants of the household environment, shared by the
//! environment tests and the acceptance run. Each check returns a
//! description of the first violation it finds.

use irl_dr_core::domain::{total_demand, Household, SlotIndex, SLOTS_PER_DAY};
use irl_dr_core::dqn::Policy;
use irl_dr_core::environment::{
    baseline, run_day, Action, DayContext, Episode, PriceModel, TsDecision, BASELINE_DAYS,
};
use irl_dr_core::metrics;
use irl_dr_core::rewards::{LearnedReward, RewardSpec, TrueReward};
use irl_dr_core::synth::{synth_household_days, Archetype};
use irl_dr_oracles::stats;

pub type Check = fn() -> Result<(), String>;

pub const CHECKS: [(&str, Check); 8] = [
    ("run-to-completion", run_to_completion),
    ("non-shiftable inviolability", ns_inviolability),
    ("energy accounting", energy_accounting),
    ("markov replay", markov_replay),
    ("baseline arithmetic", baseline_arithmetic),
    ("delay counters", delay_counters),
    ("reward re-evaluation", reward_reevaluation),
    ("metrics dual implementation", metrics_dual),
];

fn households() -> Vec<Household> {
    Archetype::ALL
        .iter()
        .enumerate()
        .map(|(k, &a)| synth_household_days(40 + k as u64, a, 24))
        .collect()
}

fn rewards() -> Vec<RewardSpec> {
    vec![
        RewardSpec::True(TrueReward::default()),
        RewardSpec::Learned(LearnedReward::new([0.3, -0.2, 0.9, 0.0, 0.5, -1.0])),
    ]
}

fn policies() -> Vec<Policy> {
    vec![
        Policy::Random { seed: 5 },
        Policy::Random { seed: 6 },
        Policy::Constant { level: 0 },
        Policy::Constant { level: 4 },
    ]
}

/// Runs `f` on every (household, day, policy, reward) combination.
fn each_rollout(
    mut f: impl FnMut(&DayContext, &irl_dr_core::environment::Trajectory, &RewardSpec) -> Result<(), String>,
) -> Result<(), String> {
    let price = PriceModel::default();
    for h in households() {
        for day in [0, 3, 11, 17, 23] {
            let ctx = DayContext::new(&h, day, &price).map_err(|e| e.to_string())?;
            for p in policies() {
                for r in rewards() {
                    let t = run_day(&ctx, &p, &r).map_err(|e| e.to_string())?;
                    if t.steps.len() != SLOTS_PER_DAY {
                        return Err(format!("{} steps", t.steps.len()));
                    }
                    f(&ctx, &t, &r).map_err(|e| format!("{} day {day} {p:?}: {e}", h.id))?;
                }
            }
        }
    }
    Ok(())
}

pub fn run_to_completion() -> Result<(), String> {
    each_rollout(|ctx, t, _| {
        for m in 0..4 {
            let mut next_request = 0;
            let mut s = 0;
            while s < SLOTS_PER_DAY {
                let d = t.steps[s].dispatch.ts_decisions[m];
                if matches!(d, TsDecision::Started | TsDecision::DelayedStart) {
                    let req = &ctx.requests[m][next_request];
                    next_request += 1;
                    for (k, &p) in req.profile.iter().enumerate() {
                        if s + k >= SLOTS_PER_DAY {
                            break;
                        }
                        let got = t.steps[s + k].dispatch.ts_power[m];
                        if got != p {
                            return Err(format!("position {m} slot {}: {got} != {p}", s + k));
                        }
                    }
                    s += req.profile.len();
                } else {
                    s += 1;
                }
            }
        }
        Ok(())
    })
}

pub fn ns_inviolability() -> Result<(), String> {
    each_rollout(|ctx, t, _| {
        for s in &t.steps {
            if s.dispatch.ns != ctx.ns[s.slot] {
                return Err(format!("slot {}: ns {} of {}", s.slot, s.dispatch.ns, ctx.ns[s.slot]));
            }
            if s.dispatch.total + 1e-12 < ctx.ns[s.slot] {
                return Err(format!("slot {}: total below ns", s.slot));
            }
        }
        Ok(())
    })
}

pub fn energy_accounting() -> Result<(), String> {
    let price = PriceModel::default();
    let full = Policy::Constant { level: 10 };
    for h in households() {
        for day in 0..h.days() {
            let ctx = DayContext::new(&h, day, &price).map_err(|e| e.to_string())?;
            for r in rewards() {
                let t = run_day(&ctx, &full, &r).map_err(|e| e.to_string())?;
                let mut realized = vec![0.0; h.appliances.len()];
                for s in &t.steps {
                    for (acc, v) in realized.iter_mut().zip(ctx.appliance_consumption(s.slot, &s.dispatch)) {
                        *acc += v;
                    }
                    if (s.dispatch.total - ctx.total[s.slot]).abs() > 1e-9 {
                        return Err(format!("{} day {day} slot {}: total differs", h.id, s.slot));
                    }
                    if s.dispatch.open_delays.iter().any(|&d| d != 0) {
                        return Err(format!("{} day {day} slot {}: deferral at full service", h.id, s.slot));
                    }
                }
                for (i, got) in realized.iter().enumerate() {
                    let want: f64 = h.demand[i][day * SLOTS_PER_DAY..(day + 1) * SLOTS_PER_DAY].iter().sum();
                    if (got - want).abs() > 1e-9 {
                        return Err(format!("{} day {day} appliance {i}: {got} vs {want}", h.id));
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn markov_replay() -> Result<(), String> {
    each_rollout(|ctx, t, r| {
        let actions: Vec<Action> = t.steps.iter().map(|s| s.action).collect();
        for cut in [1, 30, 57, 95] {
            let mut e = Episode::new(ctx);
            for a in &actions[..cut] {
                e.step(*a, r).map_err(|e| e.to_string())?;
            }
            // resume from a snapshot and from the original run
            let mut snapshot = e.clone();
            for (k, a) in actions.iter().enumerate().skip(cut) {
                let state = snapshot.state();
                if state != t.steps[k].state {
                    return Err(format!("cut {cut}: state differs at slot {k}"));
                }
                let (d, _) = snapshot.step(*a, r).map_err(|e| e.to_string())?;
                if d != t.steps[k].dispatch {
                    return Err(format!("cut {cut}: dispatch differs at slot {k}"));
                }
            }
            drop(e);
        }
        Ok(())
    })
}

pub fn baseline_arithmetic() -> Result<(), String> {
    for h in households() {
        for day in [0, 1, 5, 10, 11, 23] {
            for slot in [0, 7, 42, 95] {
                let t = SlotIndex { day, slot };
                let got = baseline(&h, t).map_err(|e| e.to_string())?;
                let want = if day == 0 {
                    total_demand(&h, t).unwrap()
                } else {
                    // independent re-averaging: hour blocks of every prior day
                    let days: Vec<usize> = (0..day).rev().take(BASELINE_DAYS).collect();
                    let mut values = Vec::new();
                    for d in days {
                        for s in 0..SLOTS_PER_DAY {
                            if s / 4 == slot / 4 {
                                let v: f64 = h.demand.iter().map(|series| series[d * SLOTS_PER_DAY + s]).sum();
                                values.push(v);
                            }
                        }
                    }
                    values.iter().sum::<f64>() / values.len() as f64
                };
                if (got - want).abs() > 1e-12 * want.abs().max(1.0) {
                    return Err(format!("{} day {day} slot {slot}: {got} vs {want}", h.id));
                }
            }
        }
    }
    Ok(())
}

pub fn delay_counters() -> Result<(), String> {
    each_rollout(|_, t, _| {
        for m in 0..4 {
            let mut prev = 0u32;
            for s in &t.steps {
                let d = s.dispatch.open_delays[m];
                let served = matches!(
                    s.dispatch.ts_decisions[m],
                    TsDecision::Started | TsDecision::DelayedStart
                );
                if served && s.state.ts_delays[m] != prev {
                    return Err(format!("slot {}: observed delay changed before service", s.slot));
                }
                if s.dispatch.ts_decisions[m] == TsDecision::Deferred && d != prev + 1 {
                    return Err(format!("slot {}: deferral counter {d} after {prev}", s.slot));
                }
                prev = d;
            }
        }
        Ok(())
    })
}

pub fn reward_reevaluation() -> Result<(), String> {
    each_rollout(|_, t, r| {
        let again = t.rescored(r);
        for (s, v) in t.steps.iter().zip(again) {
            if s.reward != v {
                return Err(format!("slot {}: {} vs {v}", s.slot, s.reward));
            }
        }
        Ok(())
    })
}

pub fn metrics_dual() -> Result<(), String> {
    let price = PriceModel::default();
    for (k, h) in households().iter().enumerate() {
        let ctx = DayContext::new(h, 12 + k, &price).map_err(|e| e.to_string())?;
        let r = RewardSpec::True(TrueReward::default());
        let a = run_day(&ctx, &Policy::Random { seed: 1 }, &r).map_err(|e| e.to_string())?.provision();
        let b = run_day(&ctx, &Policy::Random { seed: 2 }, &r).map_err(|e| e.to_string())?.provision();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-10;
        let mae = metrics::mae(&a, &b).map_err(|e| e.to_string())?;
        let mse = metrics::mse(&a, &b).map_err(|e| e.to_string())?;
        if !close(mae, stats::mae(&a, &b)) || !close(mse, stats::mse(&a, &b)) {
            return Err(format!("{}: mae/mse disagree", h.id));
        }
        match metrics::pearson(&a, &b) {
            Ok(p) if close(p, stats::pearson(&a, &b)) => {}
            Ok(p) => return Err(format!("{}: pearson {p} vs {}", h.id, stats::pearson(&a, &b))),
            Err(e) => return Err(format!("{}: {e}", h.id)),
        }
    }
    Ok(())
}
