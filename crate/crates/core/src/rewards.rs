//! Reward models: the generating reward, the six basis functions and the
//! linear rewards learned over them.
//!
//! Basis ordering is fixed: index `3 * revenue + discomfort` with
//! revenue `ReductionOnly = 0, Bidirectional = 1` and discomfort
//! `None = 0, Absolute = 1, Quadratic = 2`.

use serde::{Deserialize, Serialize};

use crate::domain::{MAX_TIME_SHIFTABLE, SLOTS_PER_DAY};
use crate::environment::{Dispatch, EnvState};

pub const BASIS_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevenueMode {
    ReductionOnly,
    Bidirectional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscomfortMode {
    None,
    Absolute,
    Quadratic,
}

impl RevenueMode {
    pub const ALL: [RevenueMode; 2] = [RevenueMode::ReductionOnly, RevenueMode::Bidirectional];

    fn index(self) -> usize {
        match self {
            RevenueMode::ReductionOnly => 0,
            RevenueMode::Bidirectional => 1,
        }
    }

    /// Revenue per unit price for a baseline `b` and realized total `p`.
    pub fn gap(self, baseline: f64, total: f64) -> f64 {
        match self {
            RevenueMode::ReductionOnly => (baseline - total).max(0.0),
            RevenueMode::Bidirectional => baseline - total,
        }
    }
}

impl DiscomfortMode {
    pub const ALL: [DiscomfortMode; 3] = [
        DiscomfortMode::None,
        DiscomfortMode::Absolute,
        DiscomfortMode::Quadratic,
    ];

    fn index(self) -> usize {
        match self {
            DiscomfortMode::None => 0,
            DiscomfortMode::Absolute => 1,
            DiscomfortMode::Quadratic => 2,
        }
    }

    /// Penalty shape applied to a non-negative deviation.
    pub fn shape(self, x: f64) -> f64 {
        match self {
            DiscomfortMode::None => 0.0,
            DiscomfortMode::Absolute => x.abs(),
            DiscomfortMode::Quadratic => x * x,
        }
    }
}

pub fn basis_index(revenue: RevenueMode, discomfort: DiscomfortMode) -> usize {
    3 * revenue.index() + discomfort.index()
}

/// Inverse of [`basis_index`].
pub fn basis_modes(index: usize) -> (RevenueMode, DiscomfortMode) {
    (RevenueMode::ALL[index / 3], DiscomfortMode::ALL[index % 3])
}

/// Human-readable basis label, e.g. `reduction_only/quadratic`.
pub fn basis_label(index: usize) -> String {
    let (r, d) = basis_modes(index);
    let r = match r {
        RevenueMode::ReductionOnly => "reduction_only",
        RevenueMode::Bidirectional => "bidirectional",
    };
    let d = match d {
        DiscomfortMode::None => "none",
        DiscomfortMode::Absolute => "absolute",
        DiscomfortMode::Quadratic => "quadratic",
    };
    format!("{r}/{d}")
}

/// The generating reward `c * gap(b, p) - w_ac * shape(dp_ac) - sum_m w_m * shape(t_m)`.
///
/// With `normalized` set, the AC deviation is taken relative to the AC
/// demand and delays in days (slots / 96), the scales the basis features
/// use; with unit weights the reward then equals a basis function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrueReward {
    pub w_ac: f64,
    pub w_ts: [f64; MAX_TIME_SHIFTABLE],
    pub revenue: RevenueMode,
    pub discomfort: DiscomfortMode,
    pub normalized: bool,
}

impl Default for TrueReward {
    fn default() -> Self {
        Self {
            w_ac: 0.05,
            w_ts: [0.002; MAX_TIME_SHIFTABLE],
            revenue: RevenueMode::ReductionOnly,
            discomfort: DiscomfortMode::Quadratic,
            normalized: false,
        }
    }
}

impl TrueReward {
    /// A reward identical to basis function `index`.
    pub fn basis(index: usize) -> Self {
        let (revenue, discomfort) = basis_modes(index);
        Self {
            w_ac: 1.0,
            w_ts: [1.0; MAX_TIME_SHIFTABLE],
            revenue,
            discomfort,
            normalized: true,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.w_ac >= 0.0 && self.w_ts.iter().all(|w| *w >= 0.0)
    }

    fn ac_deviation(&self, state: &EnvState, dispatch: &Dispatch) -> f64 {
        let dev = (state.pc_demand - dispatch.pc).max(0.0);
        if self.normalized {
            normalized_ac_deviation(state.pc_demand, dev)
        } else {
            dev
        }
    }

    fn delay(&self, slots: u32) -> f64 {
        if self.normalized {
            slots as f64 / SLOTS_PER_DAY as f64
        } else {
            slots as f64
        }
    }
}

fn normalized_ac_deviation(pc_demand: f64, deviation: f64) -> f64 {
    if pc_demand > 0.0 {
        deviation / pc_demand
    } else {
        0.0
    }
}

/// Weights over the basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnedReward {
    pub alpha: [f64; BASIS_COUNT],
}

impl LearnedReward {
    pub fn new(alpha: [f64; BASIS_COUNT]) -> Self {
        Self { alpha }
    }

    pub fn in_box(&self) -> bool {
        self.alpha.iter().all(|a| a.abs() <= 1.0 + 1e-9)
    }

    /// Net weight of the absolute and quadratic discomfort shapes.
    fn discomfort_weights(&self) -> (f64, f64) {
        (
            self.alpha[1] + self.alpha[4],
            self.alpha[2] + self.alpha[5],
        )
    }
}

/// The reward an agent is trained and dispatched under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardSpec {
    True(TrueReward),
    Learned(LearnedReward),
}

impl RewardSpec {
    pub fn evaluate(&self, state: &EnvState, dispatch: &Dispatch) -> f64 {
        match self {
            RewardSpec::True(t) => true_reward(state, dispatch, t),
            RewardSpec::Learned(l) => learned_reward(&features(state, dispatch), l),
        }
    }

    /// Penalty charged for time-shiftable position `m` being open with
    /// `delay` deferred slots. Drives the dispatch priority order.
    pub fn deferral_cost(&self, m: usize, delay: u32) -> f64 {
        match self {
            RewardSpec::True(t) => t.w_ts[m] * t.discomfort.shape(t.delay(delay)),
            RewardSpec::Learned(l) => {
                let (abs, quad) = l.discomfort_weights();
                let x = delay as f64 / SLOTS_PER_DAY as f64;
                abs * x + quad * x * x
            }
        }
    }
}

impl From<TrueReward> for RewardSpec {
    fn from(t: TrueReward) -> Self {
        RewardSpec::True(t)
    }
}

impl From<LearnedReward> for RewardSpec {
    fn from(l: LearnedReward) -> Self {
        RewardSpec::Learned(l)
    }
}

pub fn true_reward(state: &EnvState, dispatch: &Dispatch, spec: &TrueReward) -> f64 {
    let revenue = state.price * spec.revenue.gap(state.baseline, dispatch.total);
    let ac = spec.w_ac * spec.discomfort.shape(spec.ac_deviation(state, dispatch));
    let ts: f64 = dispatch
        .open_delays
        .iter()
        .zip(&spec.w_ts)
        .map(|(&d, w)| w * spec.discomfort.shape(spec.delay(d)))
        .sum();
    revenue - ac - ts
}

/// The six basis features of one slot. Discomfort uses unit weights on the
/// AC deviation relative to AC demand and on delays in days.
pub fn features(state: &EnvState, dispatch: &Dispatch) -> [f64; BASIS_COUNT] {
    let ac = normalized_ac_deviation(state.pc_demand, (state.pc_demand - dispatch.pc).max(0.0));
    let delays = dispatch
        .open_delays
        .map(|d| d as f64 / SLOTS_PER_DAY as f64);
    let mut phi = [0.0; BASIS_COUNT];
    for r in RevenueMode::ALL {
        let revenue = state.price * r.gap(state.baseline, dispatch.total);
        for d in DiscomfortMode::ALL {
            let discomfort = d.shape(ac) + delays.iter().map(|&x| d.shape(x)).sum::<f64>();
            phi[basis_index(r, d)] = revenue - discomfort;
        }
    }
    phi
}

pub fn learned_reward(phi: &[f64; BASIS_COUNT], reward: &LearnedReward) -> f64 {
    phi.iter().zip(&reward.alpha).map(|(p, a)| p * a).sum()
}
