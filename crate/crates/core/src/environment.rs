//! The demand-response MDP of one household day.
//!
//! Every 15-minute slot the agent picks a level `0..=10`; the household's
//! total consumption target becomes `level / 10` of its counterfactual total
//! demand. A greedy dispatch rule then splits the target between appliances:
//! non-shiftable demand and running time-shiftable programs first, then new
//! time-shiftable starts (highest deferral cost first), then the AC.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    ts_requests, total_demand, ApplianceClass, Household, SlotIndex, TsRequest, MAX_TIME_SHIFTABLE,
    SLOTS_PER_DAY,
};
use crate::dqn::Policy;
use crate::error::{Error, Result};
use crate::rewards::{features, RewardSpec, BASIS_COUNT};

pub const ACTION_COUNT: usize = 11;
pub const OBSERVATION_DIM: usize = 8;

/// Days averaged by the baseline.
pub const BASELINE_DAYS: usize = 10;

/// Floor of the baseline when normalizing DR provision, in kW.
pub const PROVISION_EPS: f64 = 1e-3;

const FIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvState {
    pub pc_demand: f64,
    pub ns_demand: f64,
    pub ts_delays: [u32; MAX_TIME_SHIFTABLE],
    pub price: f64,
    pub baseline: f64,
}

impl EnvState {
    /// Raw observation: `[pc, ns, delay_1..4, price, baseline]`.
    pub fn to_array(&self) -> [f64; OBSERVATION_DIM] {
        let d = self.ts_delays.map(f64::from);
        [
            self.pc_demand,
            self.ns_demand,
            d[0],
            d[1],
            d[2],
            d[3],
            self.price,
            self.baseline,
        ]
    }
}

/// Input scaling for the Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub demand_scale: f64,
    pub delay_scale: f64,
    pub price_scale: f64,
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            demand_scale: 1.0,
            delay_scale: 1.0,
            price_scale: 1.0,
        }
    }

    /// Demands and baseline over the 95th-percentile slot demand, delays
    /// over one day, price over its maximum.
    pub fn for_household(h: &Household, price: &PriceModel) -> Self {
        let slots = h.demand.first().map_or(0, Vec::len);
        let mut totals: Vec<f64> = (0..slots)
            .map(|k| h.demand.iter().map(|s| s[k]).sum())
            .collect();
        totals.sort_by(f64::total_cmp);
        let p95 = if totals.is_empty() {
            0.0
        } else {
            totals[((totals.len() - 1) as f64 * 0.95).round() as usize]
        };
        let positive = |v: f64| if v > 1e-9 { v } else { 1.0 };
        Self {
            demand_scale: positive(p95),
            delay_scale: SLOTS_PER_DAY as f64,
            price_scale: positive(price.max()),
        }
    }

    pub fn apply(&self, s: &EnvState) -> [f64; OBSERVATION_DIM] {
        let mut x = s.to_array();
        for k in [0, 1, 7] {
            x[k] /= self.demand_scale;
        }
        for v in &mut x[2..6] {
            *v /= self.delay_scale;
        }
        x[6] /= self.price_scale;
        x
    }
}

/// Unit price of flexibility in currency/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PriceModel {
    Constant { value: f64 },
    /// One value per slot of the day (96 entries).
    Profile { values: Vec<f64> },
}

impl Default for PriceModel {
    fn default() -> Self {
        PriceModel::Constant { value: 0.1 }
    }
}

impl PriceModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            PriceModel::Constant { value } => value.is_finite() && *value >= 0.0,
            PriceModel::Profile { values } => {
                values.len() == SLOTS_PER_DAY && values.iter().all(|v| v.is_finite() && *v >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(
                "price must be non-negative: a constant or 96 per-slot values".into(),
            ))
        }
    }

    pub fn at(&self, slot: usize) -> f64 {
        match self {
            PriceModel::Constant { value } => *value,
            PriceModel::Profile { values } => values[slot],
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            PriceModel::Constant { value } => *value,
            PriceModel::Profile { values } => values.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Target consumption level; the target is `level / 10 * D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action(u8);

impl Action {
    pub const FULL: Action = Action(10);

    pub fn new(level: usize) -> Result<Self> {
        if level < ACTION_COUNT {
            Ok(Action(level as u8))
        } else {
            Err(Error::Contract(format!("action level {level} is not in 0..=10")))
        }
    }

    pub fn level(self) -> usize {
        self.0 as usize
    }

    pub fn target(self, total_demand: f64) -> f64 {
        self.0 as f64 / 10.0 * total_demand
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsDecision {
    /// No open request and not running.
    Idle,
    /// Executing a committed program.
    Running,
    /// An open request was not served this slot.
    Deferred,
    /// Started in the slot its request arrived.
    Started,
    /// Started after at least one deferred slot.
    DelayedStart,
}

/// Realized consumption of one slot, in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub target: f64,
    pub ns: f64,
    pub pc: f64,
    pub ts_power: [f64; MAX_TIME_SHIFTABLE],
    pub ts_decisions: [TsDecision; MAX_TIME_SHIFTABLE],
    /// Deferred slots of requests still open after this slot (0 if none).
    pub open_delays: [u32; MAX_TIME_SHIFTABLE],
    pub total: f64,
}

/// What competes for the target in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DispatchInput {
    pub ns_demand: f64,
    pub pc_demand: f64,
    /// Draw of programs already running (served unconditionally).
    pub committed: [f64; MAX_TIME_SHIFTABLE],
    /// Open request per position: `(first draw, delay so far, can start)`.
    /// A request cannot start while its appliance is still running.
    pub open: [Option<OpenRequest>; MAX_TIME_SHIFTABLE],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenRequest {
    pub first_draw: f64,
    pub delay: u32,
    pub startable: bool,
}

/// Splits `target` between appliances.
///
/// Non-shiftable demand and committed programs are always served, so the
/// realized total exceeds the target when they alone do. Startable requests
/// are then considered in order of decreasing deferral cost under `reward`
/// (ties by position) and start if their first draw fits the remaining
/// headroom. Whatever is left goes to the AC, up to its demand.
pub fn dispatch(target: f64, input: &DispatchInput, reward: &RewardSpec) -> Dispatch {
    let mut ts_power = input.committed;
    let mut decisions = [TsDecision::Idle; MAX_TIME_SHIFTABLE];
    let mut open_delays = [0u32; MAX_TIME_SHIFTABLE];
    for m in 0..MAX_TIME_SHIFTABLE {
        if input.committed[m] > 0.0 {
            decisions[m] = TsDecision::Running;
        }
    }
    let floor = input.ns_demand + input.committed.iter().sum::<f64>();
    let mut headroom = target - floor;

    let mut order: Vec<(usize, f64)> = input
        .open
        .iter()
        .enumerate()
        .filter_map(|(m, o)| o.map(|o| (m, reward.deferral_cost(m, o.delay + 1))))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (m, _) in order {
        let req = input.open[m].expect("filtered above");
        if req.startable && req.first_draw <= headroom + FIT_TOL {
            headroom -= req.first_draw;
            ts_power[m] += req.first_draw;
            decisions[m] = if req.delay == 0 {
                TsDecision::Started
            } else {
                TsDecision::DelayedStart
            };
        } else {
            if decisions[m] == TsDecision::Idle {
                decisions[m] = TsDecision::Deferred;
            }
            open_delays[m] = req.delay + 1;
        }
    }

    let pc = if headroom >= input.pc_demand - FIT_TOL {
        input.pc_demand
    } else {
        headroom.max(0.0)
    };
    let total = input.ns_demand + ts_power.iter().sum::<f64>() + pc;
    Dispatch {
        target,
        ns: input.ns_demand,
        pc,
        ts_power,
        ts_decisions: decisions,
        open_delays,
        total,
    }
}

/// Mean counterfactual total demand of `t`'s hour over the previous
/// [`BASELINE_DAYS`] days (fewer when unavailable). Day 0 falls back to the
/// current slot's demand.
pub fn baseline(h: &Household, t: SlotIndex) -> Result<f64> {
    let current = total_demand(h, t)?;
    if t.day == 0 {
        return Ok(current);
    }
    let first = t.day.saturating_sub(BASELINE_DAYS);
    let hour = t.hour();
    let mut sum = 0.0;
    for day in first..t.day {
        for slot in hour * 4..hour * 4 + 4 {
            sum += total_demand(h, SlotIndex { day, slot })?;
        }
    }
    Ok(sum / ((t.day - first) * 4) as f64)
}

/// Normalized DR provision `(b - p) / max(b, eps)` clipped to `[-1, 1]`.
pub fn provision(baseline: f64, total: f64) -> f64 {
    ((baseline - total) / baseline.max(PROVISION_EPS)).clamp(-1.0, 1.0)
}

/// Exogenous inputs of one household day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayContext {
    pub household: String,
    pub day: usize,
    pub ns: Vec<f64>,
    pub pc: Vec<f64>,
    pub total: Vec<f64>,
    pub baseline: Vec<f64>,
    pub price: Vec<f64>,
    /// Requests per time-shiftable position, ordered by slot.
    pub requests: [Vec<TsRequest>; MAX_TIME_SHIFTABLE],
    ts_series: [Option<usize>; MAX_TIME_SHIFTABLE],
    pc_series: Option<usize>,
    ns_series: Vec<usize>,
    ns_parts: Vec<Vec<f64>>,
    n_appliances: usize,
}

impl DayContext {
    pub fn new(h: &Household, day: usize, price: &PriceModel) -> Result<Self> {
        if day >= h.days() {
            return Err(Error::SlotOutOfRange {
                day,
                slot: 0,
                days: h.days(),
            });
        }
        price.validate()?;
        let ts = h.class_indices(ApplianceClass::TimeShiftable);
        let pc = h.class_indices(ApplianceClass::PowerCurtailable);
        let ns = h.class_indices(ApplianceClass::NonShiftable);
        let range = day * SLOTS_PER_DAY..(day + 1) * SLOTS_PER_DAY;

        let mut ts_series = [None; MAX_TIME_SHIFTABLE];
        let mut requests: [Vec<TsRequest>; MAX_TIME_SHIFTABLE] = Default::default();
        for (m, &i) in ts.iter().enumerate() {
            ts_series[m] = Some(i);
            requests[m] = ts_requests(h, i, day)?;
        }
        let pc_series = pc.first().copied();
        let pc_values = match pc_series {
            Some(i) => h.demand[i][range.clone()].to_vec(),
            None => vec![0.0; SLOTS_PER_DAY],
        };
        let ns_parts: Vec<Vec<f64>> = ns.iter().map(|&i| h.demand[i][range.clone()].to_vec()).collect();
        let ns_values = (0..SLOTS_PER_DAY)
            .map(|k| ns_parts.iter().map(|p| p[k]).sum())
            .collect();
        let mut total = Vec::with_capacity(SLOTS_PER_DAY);
        let mut base = Vec::with_capacity(SLOTS_PER_DAY);
        for slot in 0..SLOTS_PER_DAY {
            let t = SlotIndex { day, slot };
            total.push(total_demand(h, t)?);
            base.push(baseline(h, t)?);
        }
        Ok(Self {
            household: h.id.clone(),
            day,
            ns: ns_values,
            pc: pc_values,
            total,
            baseline: base,
            price: (0..SLOTS_PER_DAY).map(|s| price.at(s)).collect(),
            requests,
            ts_series,
            pc_series,
            ns_series: ns,
            ns_parts,
            n_appliances: h.appliances.len(),
        })
    }

    /// Realized consumption per household appliance (inventory order).
    pub fn appliance_consumption(&self, slot: usize, d: &Dispatch) -> Vec<f64> {
        let mut out = vec![0.0; self.n_appliances];
        for (m, i) in self.ts_series.iter().enumerate() {
            if let Some(i) = i {
                out[*i] = d.ts_power[m];
            }
        }
        if let Some(i) = self.pc_series {
            out[i] = d.pc;
        }
        for (part, &i) in self.ns_parts.iter().zip(&self.ns_series) {
            out[i] = part[slot];
        }
        out
    }

    pub fn ts_positions(&self) -> usize {
        self.ts_series.iter().flatten().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    request: usize,
    delay: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct TsTrack {
    queue: VecDeque<Pending>,
    /// Running request and the profile position of the next slot.
    running: Option<(usize, usize)>,
    next_arrival: usize,
}

/// Bookkeeping of a day in progress. Cloning it snapshots the MDP state.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    ctx: &'a DayContext,
    slot: usize,
    ts: [TsTrack; MAX_TIME_SHIFTABLE],
}

impl<'a> Episode<'a> {
    pub fn new(ctx: &'a DayContext) -> Self {
        let mut e = Self {
            ctx,
            slot: 0,
            ts: Default::default(),
        };
        e.admit_arrivals();
        e
    }

    pub fn context(&self) -> &'a DayContext {
        self.ctx
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.slot >= SLOTS_PER_DAY
    }

    fn admit_arrivals(&mut self) {
        for (m, track) in self.ts.iter_mut().enumerate() {
            let reqs = &self.ctx.requests[m];
            while track.next_arrival < reqs.len() && reqs[track.next_arrival].slot == self.slot {
                track.queue.push_back(Pending {
                    request: track.next_arrival,
                    delay: 0,
                });
                track.next_arrival += 1;
            }
        }
    }

    pub fn state(&self) -> EnvState {
        let s = self.slot.min(SLOTS_PER_DAY - 1);
        EnvState {
            pc_demand: self.ctx.pc[s],
            ns_demand: self.ctx.ns[s],
            ts_delays: std::array::from_fn(|m| self.ts[m].queue.front().map_or(0, |p| p.delay)),
            price: self.ctx.price[s],
            baseline: self.ctx.baseline[s],
        }
    }

    fn dispatch_input(&self) -> DispatchInput {
        let s = self.slot;
        let mut input = DispatchInput {
            ns_demand: self.ctx.ns[s],
            pc_demand: self.ctx.pc[s],
            ..Default::default()
        };
        for (m, track) in self.ts.iter().enumerate() {
            if let Some((req, pos)) = track.running {
                input.committed[m] = self.ctx.requests[m][req].profile[pos];
            }
            input.open[m] = track.queue.front().map(|p| OpenRequest {
                first_draw: self.ctx.requests[m][p.request].profile[0],
                delay: p.delay,
                startable: track.running.is_none(),
            });
        }
        input
    }

    /// Applies `action` to the current slot. Returns the dispatch and the
    /// next state, `None` after the last slot of the day. Requests still
    /// open at the end of the day expire.
    pub fn step(&mut self, action: Action, reward: &RewardSpec) -> Result<(Dispatch, Option<EnvState>)> {
        if self.is_done() {
            return Err(Error::Contract("episode already finished".into()));
        }
        let target = action.target(self.ctx.total[self.slot]);
        let d = dispatch(target, &self.dispatch_input(), reward);
        for (m, track) in self.ts.iter_mut().enumerate() {
            if let Some((req, pos)) = track.running {
                let len = self.ctx.requests[m][req].profile.len();
                track.running = (pos + 1 < len).then_some((req, pos + 1));
            }
            match d.ts_decisions[m] {
                TsDecision::Started | TsDecision::DelayedStart => {
                    let p = track.queue.pop_front().expect("started request was open");
                    let len = self.ctx.requests[m][p.request].profile.len();
                    track.running = (len > 1).then_some((p.request, 1));
                }
                _ => {
                    if let Some(p) = track.queue.front_mut() {
                        p.delay += 1;
                    }
                }
            }
        }
        self.slot += 1;
        if self.is_done() {
            return Ok((d, None));
        }
        self.admit_arrivals();
        Ok((d, Some(self.state())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub slot: usize,
    pub state: EnvState,
    pub action: Action,
    pub dispatch: Dispatch,
    pub features: [f64; BASIS_COUNT],
    pub reward: f64,
}

impl TrajectoryStep {
    pub fn provision(&self) -> f64 {
        provision(self.state.baseline, self.dispatch.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub household: String,
    pub day: usize,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn provision(&self) -> Vec<f64> {
        self.steps.iter().map(TrajectoryStep::provision).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// `sum_t gamma^t phi(s_t)`.
    pub fn discounted_features(&self, gamma: f64) -> [f64; BASIS_COUNT] {
        let mut out = [0.0; BASIS_COUNT];
        let mut g = 1.0;
        for s in &self.steps {
            for (o, f) in out.iter_mut().zip(&s.features) {
                *o += g * f;
            }
            g *= gamma;
        }
        out
    }

    /// Re-evaluates every step under another reward.
    pub fn rescored(&self, reward: &RewardSpec) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| reward.evaluate(&s.state, &s.dispatch))
            .collect()
    }
}

/// Rolls `policy` through one prepared day. `reward` drives the dispatch
/// order and the recorded rewards.
pub fn run_day(ctx: &DayContext, policy: &Policy, reward: &RewardSpec) -> Result<Trajectory> {
    let mut rng: ChaCha8Rng = policy.episode_rng(ctx.day);
    let mut episode = Episode::new(ctx);
    let mut steps = Vec::with_capacity(SLOTS_PER_DAY);
    let mut state = episode.state();
    loop {
        let slot = episode.slot();
        let action = Action::new(policy.act(&state, slot, &mut rng)?)?;
        let (d, next) = episode.step(action, reward)?;
        let r = reward.evaluate(&state, &d);
        if !r.is_finite() {
            return Err(Error::Numerical(format!("non-finite reward at slot {slot}")));
        }
        steps.push(TrajectoryStep {
            slot,
            state,
            action,
            features: features(&state, &d),
            dispatch: d,
            reward: r,
        });
        match next {
            Some(s) => state = s,
            None => break,
        }
    }
    Ok(Trajectory {
        household: ctx.household.clone(),
        day: ctx.day,
        steps,
    })
}

pub fn run_episode(
    h: &Household,
    day: usize,
    price: &PriceModel,
    policy: &Policy,
    reward: &RewardSpec,
) -> Result<Trajectory> {
    run_day(&DayContext::new(h, day, price)?, policy, reward)
}
