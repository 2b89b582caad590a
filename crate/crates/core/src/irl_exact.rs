//! Reward recovery for finite MDPs with known transitions: the expert's
//! policy must beat every single-step deviation, and among such rewards
//! the LP picks the one with the largest total deviation gap, minus an
//! L1 penalty.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dqn::argmax;
use crate::error::{Error, Result};
use crate::linprog::{self, LpProblem, Sense};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteMdp {
    pub states: usize,
    pub actions: usize,
    /// Per action, the `states x states` matrix in row-major order.
    pub transitions: Vec<Vec<f64>>,
    pub gamma: f64,
    pub expert_policy: Vec<usize>,
}

const ROW_TOL: f64 = 1e-12;

impl FiniteMdp {
    pub fn validate(&self) -> Result<()> {
        let n = self.states;
        if n == 0 || self.actions < 2 {
            return Err(Error::Contract("need at least one state and two actions".into()));
        }
        if self.transitions.len() != self.actions || self.transitions.iter().any(|p| p.len() != n * n) {
            return Err(Error::Dimension("transition array shapes".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Contract("gamma must lie in (0, 1)".into()));
        }
        for (a, p) in self.transitions.iter().enumerate() {
            for i in 0..n {
                let row = &p[i * n..(i + 1) * n];
                if row.iter().any(|v| !(*v >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOL {
                    return Err(Error::Contract(format!("row {i} of action {a} is not stochastic")));
                }
            }
        }
        if self.expert_policy.len() != n || self.expert_policy.iter().any(|&a| a >= self.actions) {
            return Err(Error::Contract("expert policy must name an action per state".into()));
        }
        Ok(())
    }

    pub fn p(&self, a: usize, i: usize, j: usize) -> f64 {
        self.transitions[a][i * self.states + j]
    }

    /// Transition matrix of the expert policy.
    fn expert_matrix(&self) -> DMatrix<f64> {
        let n = self.states;
        DMatrix::from_fn(n, n, |i, j| self.p(self.expert_policy[i], i, j))
    }

    /// `(I - gamma P_expert)^-1`.
    fn resolvent(&self) -> Result<DMatrix<f64>> {
        let n = self.states;
        let m = DMatrix::identity(n, n) - self.expert_matrix() * self.gamma;
        m.try_inverse()
            .ok_or_else(|| Error::Numerical("singular policy-evaluation system".into()))
    }

    /// Row `i` of `(P_expert - P_a) (I - gamma P_expert)^-1`, for every `i`.
    fn gap_matrix(&self, a: usize, resolvent: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.states;
        let diff = DMatrix::from_fn(n, n, |i, j| self.p(self.expert_policy[i], i, j) - self.p(a, i, j));
        diff * resolvent
    }
}

/// Value of the expert policy under the state reward `r`.
pub fn policy_value(m: &FiniteMdp, r: &[f64]) -> Result<Vec<f64>> {
    if r.len() != m.states {
        return Err(Error::Dimension("reward length".into()));
    }
    let n = m.states;
    let a = DMatrix::identity(n, n) - m.expert_matrix() * m.gamma;
    let lu = a.lu();
    let v = lu
        .solve(&DVector::from_column_slice(r))
        .ok_or_else(|| Error::Numerical("singular policy-evaluation system".into()))?;
    Ok(v.iter().copied().collect())
}

/// `(P_expert - P_a) V`; nonnegative where the expert beats action `a`.
pub fn feasibility_residual(m: &FiniteMdp, r: &[f64], a: usize) -> Result<Vec<f64>> {
    if a >= m.actions {
        return Err(Error::Contract(format!("action {a} out of range")));
    }
    let v = policy_value(m, r)?;
    let n = m.states;
    Ok((0..n)
        .map(|i| (0..n).map(|j| (m.p(m.expert_policy[i], i, j) - m.p(a, i, j)) * v[j]).sum())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExactIrlConfig {
    pub lambda: f64,
    pub r_max: f64,
}

impl Default for ExactIrlConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            r_max: 1.0,
        }
    }
}

/// Builds the reward-recovery LP. Variables: `R` (n), `t` (n), `u` (n).
pub fn reward_lp(m: &FiniteMdp, cfg: &ExactIrlConfig) -> Result<LpProblem> {
    m.validate()?;
    if !(cfg.lambda >= 0.0 && cfg.r_max > 0.0) {
        return Err(Error::Contract("need lambda >= 0 and r_max > 0".into()));
    }
    let n = m.states;
    let resolvent = m.resolvent()?;
    let mut objective = vec![0.0; 3 * n];
    for i in 0..n {
        objective[n + i] = 1.0;
        objective[2 * n + i] = -cfg.lambda;
    }
    let mut lp = LpProblem::maximize(objective);
    for i in 0..n {
        lp.set_bounds(i, -cfg.r_max, cfg.r_max);
        lp.set_bounds(n + i, f64::NEG_INFINITY, f64::INFINITY);
        lp.set_bounds(2 * n + i, 0.0, cfg.r_max);
    }
    for a in 0..m.actions {
        let g = m.gap_matrix(a, &resolvent);
        for i in (0..n).filter(|&i| m.expert_policy[i] != a) {
            // t_i <= gap_i(a) . R
            let mut c = vec![0.0; 3 * n];
            for j in 0..n {
                c[j] = -g[(i, j)];
            }
            c[n + i] = 1.0;
            lp.add_constraint(c, Sense::Le, 0.0);
            // gap_i(a) . R >= 0
            let mut c = vec![0.0; 3 * n];
            for j in 0..n {
                c[j] = g[(i, j)];
            }
            lp.add_constraint(c, Sense::Ge, 0.0);
        }
    }
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut c = vec![0.0; 3 * n];
            c[i] = sign;
            c[2 * n + i] = -1.0;
            lp.add_constraint(c, Sense::Le, 0.0);
        }
    }
    Ok(lp)
}

pub fn recover_reward(m: &FiniteMdp, cfg: &ExactIrlConfig) -> Result<Vec<f64>> {
    let lp = reward_lp(m, cfg)?;
    let sol = linprog::solve(&lp)?.into_optimal()?;
    Ok(sol.x[..m.states].to_vec())
}

/// Optimal state values and action values for the state reward `r`.
pub fn value_iteration(m: &FiniteMdp, r: &[f64], tol: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.states;
    let mut v = vec![0.0; n];
    let q_of = |v: &[f64]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..m.actions)
                    .map(|a| r[i] + m.gamma * (0..n).map(|j| m.p(a, i, j) * v[j]).sum::<f64>())
                    .collect()
            })
            .collect()
    };
    loop {
        let q = q_of(&v);
        let next: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < tol * (1.0 - m.gamma) {
            return (v.clone(), q_of(&v));
        }
    }
}

/// The action whose value exceeds every other by more than `tol`, if any.
pub fn unique_best(q: &[f64], tol: f64) -> Option<usize> {
    let best = argmax(q);
    q.iter()
        .enumerate()
        .all(|(a, v)| a == best || q[best] - v > tol)
        .then_some(best)
}

const UNIQUE_TOL: f64 = 1e-9;

/// Share of the states with a uniquely optimal expert action (under
/// `reference`) where `recovered` also makes that action uniquely optimal.
pub fn policy_agreement(m: &FiniteMdp, reference: &[f64], recovered: &[f64]) -> Option<f64> {
    let (_, q_ref) = value_iteration(m, reference, 1e-12);
    let (_, q_rec) = value_iteration(m, recovered, 1e-12);
    let mut considered = 0;
    let mut agree = 0;
    for i in 0..m.states {
        if unique_best(&q_ref[i], UNIQUE_TOL) == Some(m.expert_policy[i]) {
            considered += 1;
            if unique_best(&q_rec[i], UNIQUE_TOL) == Some(m.expert_policy[i]) {
                agree += 1;
            }
        }
    }
    (considered > 0).then(|| agree as f64 / considered as f64)
}

/// Square grid with four deterministic moves (up, down, left, right);
/// moves into the wall stay put and the goal is absorbing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gridworld {
    pub size: usize,
    pub goal: (usize, usize),
    pub gamma: f64,
}

impl Default for Gridworld {
    fn default() -> Self {
        Self {
            size: 5,
            goal: (4, 4),
            gamma: 0.9,
        }
    }
}

impl Gridworld {
    pub fn state(&self, row: usize, col: usize) -> usize {
        row * self.size + col
    }

    /// The MDP with a shortest-path expert (lowest action among ties) and
    /// the goal-indicator reward it is optimal for.
    pub fn build(&self) -> (FiniteMdp, Vec<f64>) {
        let n = self.size * self.size;
        let goal = self.state(self.goal.0, self.goal.1);
        let moves: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        let mut transitions = vec![vec![0.0; n * n]; 4];
        for (a, (dr, dc)) in moves.iter().enumerate() {
            for r in 0..self.size {
                for c in 0..self.size {
                    let s = self.state(r, c);
                    let nr = (r as isize + dr).clamp(0, self.size as isize - 1) as usize;
                    let nc = (c as isize + dc).clamp(0, self.size as isize - 1) as usize;
                    let to = if s == goal { s } else { self.state(nr, nc) };
                    transitions[a][s * n + to] = 1.0;
                }
            }
        }
        let mut reward = vec![0.0; n];
        reward[goal] = 1.0;
        let mut mdp = FiniteMdp {
            states: n,
            actions: 4,
            transitions,
            gamma: self.gamma,
            expert_policy: vec![0; n],
        };
        let (_, q) = value_iteration(&mdp, &reward, 1e-12);
        mdp.expert_policy = q
            .iter()
            .map(|row| {
                let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.iter().position(|v| best - v <= UNIQUE_TOL).expect("non-empty")
            })
            .collect();
        (mdp, reward)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub agreement: Option<f64>,
    pub max_abs_reward: f64,
    pub reward: Vec<f64>,
}

/// Recovers a reward for each penalty weight and scores it against the
/// reference reward the expert is optimal for.
pub fn lambda_sweep(m: &FiniteMdp, reference: &[f64], lambdas: &[f64], r_max: f64) -> Result<Vec<SweepRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let reward = recover_reward(m, &ExactIrlConfig { lambda, r_max })?;
            Ok(SweepRow {
                lambda,
                agreement: policy_agreement(m, reference, &reward),
                max_abs_reward: reward.iter().fold(0.0, |a, v| a.max(v.abs())),
                reward,
            })
        })
        .collect()
}

/// Random dense MDP with a random expert.
pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, states: usize, actions: usize, gamma: f64) -> FiniteMdp {
    let transitions = (0..actions)
        .map(|_| {
            let mut p = Vec::with_capacity(states * states);
            for _ in 0..states {
                let row: Vec<f64> = (0..states).map(|_| rng.gen::<f64>() + 1e-3).collect();
                let sum: f64 = row.iter().sum();
                p.extend(row.iter().map(|v| v / sum));
            }
            p
        })
        .collect();
    FiniteMdp {
        states,
        actions,
        transitions,
        gamma,
        expert_policy: (0..states).map(|_| rng.gen_range(0..actions)).collect(),
    }
}
