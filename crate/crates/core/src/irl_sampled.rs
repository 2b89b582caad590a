//! Sampled inverse reinforcement learning on the household MDP.
//!
//! The reward is linear in the six basis features. Each round estimates
//! the discounted feature returns of the expert and of every policy found
//! so far, chooses weights that make the expert look best, and trains a
//! new agent against those weights.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Household;
use crate::dqn::{train_household, Policy, TrainConfig, TrainOutcome};
use crate::environment::{run_day, DayContext, PriceModel, Trajectory};
use crate::error::{Error, Result};
use crate::linprog::{self, LpProblem, Sense};
use crate::metrics;
use crate::rewards::{LearnedReward, RewardSpec, BASIS_COUNT};

/// Weight of a violated comparison in the alpha objective.
pub const VIOLATION_SLOPE: f64 = 2.0;

/// Where the expert's behaviour comes from.
#[derive(Debug, Clone)]
pub enum Expert {
    /// Recorded days, keyed by day index.
    Recorded(Vec<Trajectory>),
    /// A policy rolled out under the reward that drives its dispatch.
    Policy { policy: Policy, reward: RewardSpec },
}

impl Expert {
    fn trajectories(&self, h: &Household, days: &[usize], price: &PriceModel) -> Result<Vec<Trajectory>> {
        match self {
            Expert::Recorded(all) => {
                let by_day: BTreeMap<usize, &Trajectory> = all.iter().map(|t| (t.day, t)).collect();
                let missing: Vec<usize> = days.iter().copied().filter(|d| !by_day.contains_key(d)).collect();
                if !missing.is_empty() {
                    return Err(Error::Contract(format!(
                        "expert trajectories do not cover days {missing:?}"
                    )));
                }
                Ok(days.iter().map(|d| by_day[d].clone()).collect())
            }
            Expert::Policy { policy, reward } => rollouts(policy, reward, h, days, price),
        }
    }
}

/// A comparison policy with the reward its dispatch follows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub policy: Policy,
    pub reward: RewardSpec,
}

fn rollouts(
    policy: &Policy,
    reward: &RewardSpec,
    h: &Household,
    days: &[usize],
    price: &PriceModel,
) -> Result<Vec<Trajectory>> {
    days.par_iter()
        .map(|&d| run_day(&DayContext::new(h, d, price)?, policy, reward))
        .collect()
}

/// Discounted feature returns averaged over the start days.
pub fn feature_returns(trajectories: &[Trajectory], gamma: f64) -> Result<[f64; BASIS_COUNT]> {
    if trajectories.is_empty() {
        return Err(Error::Contract("no trajectories to average".into()));
    }
    let mut out = [0.0; BASIS_COUNT];
    for t in trajectories {
        for (o, v) in out.iter_mut().zip(t.discounted_features(gamma)) {
            *o += v;
        }
    }
    let n = trajectories.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// Row 0 is the expert, row `j` the `j`-th comparison policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimates {
    pub rows: Vec<[f64; BASIS_COUNT]>,
}

impl ValueEstimates {
    pub fn gap(&self, j: usize) -> [f64; BASIS_COUNT] {
        std::array::from_fn(|i| self.rows[0][i] - self.rows[j][i])
    }

    /// `m_j(alpha)` for every comparison policy.
    pub fn margins(&self, alpha: &[f64; BASIS_COUNT]) -> Vec<f64> {
        (1..self.rows.len())
            .map(|j| self.gap(j).iter().zip(alpha).map(|(g, a)| g * a).sum())
            .collect()
    }
}

pub fn estimate_values(
    expert: &Expert,
    candidates: &[Candidate],
    h: &Household,
    days: &[usize],
    price: &PriceModel,
    gamma: f64,
) -> Result<ValueEstimates> {
    if days.is_empty() {
        return Err(Error::Contract("no rollout days".into()));
    }
    let mut rows = vec![feature_returns(&expert.trajectories(h, days, price)?, gamma)?];
    for c in candidates {
        rows.push(feature_returns(&rollouts(&c.policy, &c.reward, h, days, price)?, gamma)?);
    }
    Ok(ValueEstimates { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSolution {
    pub alpha: [f64; BASIS_COUNT],
    pub objective: f64,
}

/// Penalized margin objective `sum_j p(m_j)`, `p(x) = min(x, 2x)`.
pub fn alpha_objective(est: &ValueEstimates, alpha: &[f64; BASIS_COUNT]) -> f64 {
    est.margins(alpha)
        .iter()
        .map(|&m| m.min(VIOLATION_SLOPE * m))
        .sum()
}

/// Maximizes the penalized margin sum over the box `|alpha_i| <= 1`.
pub fn optimize_alpha(est: &ValueEstimates) -> Result<AlphaSolution> {
    let k = est.rows.len();
    if k < 2 {
        return Err(Error::Contract("need the expert and at least one comparison policy".into()));
    }
    let n = BASIS_COUNT + k - 1;
    let mut objective = vec![0.0; n];
    objective[BASIS_COUNT..].iter_mut().for_each(|v| *v = 1.0);
    let mut lp = LpProblem::maximize(objective);
    for i in 0..BASIS_COUNT {
        lp.set_bounds(i, -1.0, 1.0);
    }
    for j in 1..k {
        let z = BASIS_COUNT + j - 1;
        lp.set_bounds(z, f64::NEG_INFINITY, f64::INFINITY);
        let g = est.gap(j);
        for slope in [1.0, VIOLATION_SLOPE] {
            let mut c = vec![0.0; n];
            for i in 0..BASIS_COUNT {
                c[i] = -slope * g[i];
            }
            c[z] = 1.0;
            lp.add_constraint(c, Sense::Le, 0.0);
        }
    }
    let sol = linprog::solve(&lp)?.into_optimal()?;
    let alpha: [f64; BASIS_COUNT] = std::array::from_fn(|i| sol.x[i].clamp(-1.0, 1.0));
    Ok(AlphaSolution {
        alpha,
        objective: sol.objective,
    })
}

/// `max_alpha min_j m_j(alpha)` over the box.
pub fn max_min_margin(est: &ValueEstimates) -> Result<f64> {
    let k = est.rows.len();
    if k < 2 {
        return Err(Error::Contract("need the expert and at least one comparison policy".into()));
    }
    let n = BASIS_COUNT + 1;
    let mut objective = vec![0.0; n];
    objective[BASIS_COUNT] = 1.0;
    let mut lp = LpProblem::maximize(objective);
    for i in 0..BASIS_COUNT {
        lp.set_bounds(i, -1.0, 1.0);
    }
    lp.set_bounds(BASIS_COUNT, f64::NEG_INFINITY, f64::INFINITY);
    for j in 1..k {
        let g = est.gap(j);
        let mut c: Vec<f64> = g.iter().map(|v| -v).collect();
        c.push(1.0);
        lp.add_constraint(c, Sense::Le, 0.0);
    }
    Ok(linprog::solve(&lp)?.into_optimal()?.objective)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IrlConfig {
    /// Number of agents trained at most.
    pub max_iterations: usize,
    pub margin_tolerance: f64,
    pub gamma: f64,
    pub agent: TrainConfig,
    pub seed: u64,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            margin_tolerance: 1e-3,
            gamma: 0.9,
            agent: TrainConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    MarginConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub alpha: [f64; BASIS_COUNT],
    pub objective: f64,
    /// `min_j m_j(alpha)` under this iteration's alpha.
    pub margin: f64,
    /// Best achievable minimum margin against the policies so far.
    pub max_min_margin: f64,
    pub margins: Vec<f64>,
    /// Expert-vs-agent MAE on the validation days of the agent trained
    /// with this alpha, if one was trained.
    pub validation_mae: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrlResult {
    pub alpha: [f64; BASIS_COUNT],
    pub selected_iteration: usize,
    pub history: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub value_estimates: ValueEstimates,
    /// Comparison policies: the random start, then one agent per trained
    /// iteration.
    #[serde(skip)]
    pub policies: Vec<Candidate>,
    #[serde(skip)]
    pub training: Vec<TrainOutcome>,
}

impl IrlResult {
    pub fn learned_reward(&self) -> LearnedReward {
        LearnedReward::new(self.alpha)
    }

    /// Agent trained with the selected alpha.
    pub fn selected_policy(&self) -> &Candidate {
        &self.policies[self.selected_iteration + 1]
    }
}

fn mean_mae(a: &[Trajectory], b: &[Trajectory]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        total += metrics::mae(&x.provision(), &y.provision())?;
    }
    Ok(total / a.len().max(1) as f64)
}

/// Runs the loop against `expert` on the training `days`; `validation`
/// days pick the final weights.
pub fn run_irl(
    expert: &Expert,
    h: &Household,
    days: &[usize],
    validation: &[usize],
    price: &PriceModel,
    cfg: &IrlConfig,
) -> Result<IrlResult> {
    if days.is_empty() || validation.is_empty() {
        return Err(Error::Contract("need training and validation days".into()));
    }
    cfg.agent.validate()?;
    let neutral = RewardSpec::Learned(LearnedReward::new([0.0; BASIS_COUNT]));
    let mut policies = vec![Candidate {
        policy: Policy::Random { seed: cfg.seed },
        reward: neutral,
    }];
    let expert_rows = feature_returns(&expert.trajectories(h, days, price)?, cfg.gamma)?;
    let expert_validation = expert.trajectories(h, validation, price)?;
    let mut est = ValueEstimates { rows: vec![expert_rows] };
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut training = Vec::new();
    let mut previous_margin = 0.0;

    let stop_reason = loop {
        let k = history.len();
        let newest = &policies[k];
        est.rows.push(feature_returns(
            &rollouts(&newest.policy, &newest.reward, h, days, price)?,
            cfg.gamma,
        )?);
        let sol = optimize_alpha(&est)?;
        let margins = est.margins(&sol.alpha);
        let margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
        history.push(IterationRecord {
            iteration: k,
            alpha: sol.alpha,
            objective: sol.objective,
            margin,
            max_min_margin: max_min_margin(&est)?,
            margins,
            validation_mae: None,
        });
        if (margin - previous_margin).abs() < cfg.margin_tolerance {
            break StopReason::MarginConverged;
        }
        if k >= cfg.max_iterations {
            break StopReason::MaxIterations;
        }
        previous_margin = margin;

        let reward = RewardSpec::Learned(LearnedReward::new(sol.alpha));
        let agent_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(1 + k as u64),
            ..cfg.agent.clone()
        };
        let (policy, outcome) = train_household(h, days, price, &reward, &agent_cfg).map_err(|e| Error::Training {
            iteration: k,
            source: Box::new(e),
        })?;
        let agent_validation = rollouts(&policy, &reward, h, validation, price)?;
        history[k].validation_mae = Some(mean_mae(&expert_validation, &agent_validation)?);
        policies.push(Candidate { policy, reward });
        training.push(outcome);
    };

    let best = history
        .iter()
        .filter_map(|r| r.validation_mae.map(|m| (r.iteration, m)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    let selected_iteration = match best {
        Some(i) => i,
        None => {
            // stopped before any agent was trained: train one for the
            // last weights so the result always carries a learned policy
            let k = history.len() - 1;
            let reward = RewardSpec::Learned(LearnedReward::new(history[k].alpha));
            let agent_cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(1 + k as u64),
                ..cfg.agent.clone()
            };
            let (policy, outcome) =
                train_household(h, days, price, &reward, &agent_cfg).map_err(|e| Error::Training {
                    iteration: k,
                    source: Box::new(e),
                })?;
            let agent_validation = rollouts(&policy, &reward, h, validation, price)?;
            history[k].validation_mae = Some(mean_mae(&expert_validation, &agent_validation)?);
            policies.truncate(k + 1);
            policies.push(Candidate { policy, reward });
            training.push(outcome);
            k
        }
    };
    Ok(IrlResult {
        alpha: history[selected_iteration].alpha,
        selected_iteration,
        history,
        stop_reason,
        value_estimates: est,
        policies,
        training,
    })
}

/// Trains the stand-in expert under `reward` and records its greedy days.
pub fn simulate_expert(
    h: &Household,
    days: &[usize],
    price: &PriceModel,
    reward: &RewardSpec,
    cfg: &TrainConfig,
) -> Result<(Policy, TrainOutcome, Vec<Trajectory>)> {
    let (policy, outcome) = train_household(h, days, price, reward, cfg)?;
    let trajectories = rollouts(&policy, reward, h, days, price)?;
    Ok((policy, outcome, trajectories))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_comparison_takes_sign_vertex() {
        let est = ValueEstimates {
            rows: vec![[1.0, 0.5, -0.2, 0.3, -0.4, 0.1], [0.0; 6]],
        };
        let sol = optimize_alpha(&est).unwrap();
        assert_eq!(sol.alpha, [1.0, 1.0, -1.0, 1.0, -1.0, 1.0]);
        assert!((sol.objective - 2.5).abs() < 1e-9);
    }

    #[test]
    fn identical_expert_has_zero_objective() {
        let est = ValueEstimates {
            rows: vec![[0.3; 6], [0.3; 6]],
        };
        assert!(optimize_alpha(&est).unwrap().objective.abs() < 1e-12);
        assert!(max_min_margin(&est).unwrap().abs() < 1e-12);
    }

    #[test]
    fn needs_a_comparison() {
        let est = ValueEstimates { rows: vec![[0.0; 6]] };
        assert!(optimize_alpha(&est).is_err());
    }
}
