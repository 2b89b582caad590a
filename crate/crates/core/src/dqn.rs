//! Deep Q-learning: replay buffer, epsilon-greedy exploration decayed per
//! episode, and a softly updated target network.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Household;
use crate::environment::{
    run_day, DayContext, EnvState, Episode, Action, Normalizer, PriceModel, Trajectory,
    ACTION_COUNT, OBSERVATION_DIM,
};
use crate::error::{Error, Result};
use crate::qnet::{Adam, Mlp, Workspace};
use crate::rewards::RewardSpec;

/// Fixed-capacity ring of transitions; the oldest entry is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    dim: usize,
    len: usize,
    head: usize,
    states: Vec<f64>,
    next_states: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub reward: f64,
    pub next_state: &'a [f64],
    pub terminal: bool,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, dim: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            dim,
            len: 0,
            head: 0,
            states: vec![0.0; capacity * dim],
            next_states: vec![0.0; capacity * dim],
            actions: vec![0; capacity],
            rewards: vec![0.0; capacity],
            terminal: vec![false; capacity],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, state: &[f64], action: usize, reward: f64, next_state: &[f64], terminal: bool) {
        let i = self.head;
        self.states[i * self.dim..(i + 1) * self.dim].copy_from_slice(state);
        self.next_states[i * self.dim..(i + 1) * self.dim].copy_from_slice(next_state);
        self.actions[i] = action;
        self.rewards[i] = reward;
        self.terminal[i] = terminal;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Slot `i` of the storage (not insertion order).
    pub fn get(&self, i: usize) -> Transition<'_> {
        assert!(i < self.len);
        Transition {
            state: &self.states[i * self.dim..(i + 1) * self.dim],
            action: self.actions[i],
            reward: self.rewards[i],
            next_state: &self.next_states[i * self.dim..(i + 1) * self.dim],
            terminal: self.terminal[i],
        }
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = Transition<'_>> + '_ {
        let start = if self.len < self.capacity { 0 } else { self.head };
        (0..self.len).map(move |k| self.get((start + k) % self.capacity))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 1500,
            batch_size: 32,
            gamma: 0.9,
            tau: 0.001,
            learning_rate: 0.001,
            epsilon_start: 1.0,
            epsilon_decay: 0.999,
            epsilon_floor: 0.05,
            buffer_capacity: 10_000,
            hidden: vec![32, 32],
            seed: 0,
        }
    }
}

/// The three training lengths used in the experiments.
pub const PRESETS: [usize; 3] = [1500, 2500, 3500];

impl TrainConfig {
    pub fn preset(episodes: usize, seed: u64) -> Self {
        Self {
            episodes,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Contract(format!("training config: {m}")));
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.epsilon_floor >= 0.0 && self.epsilon_floor <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return bad("need 0 <= epsilon_floor <= epsilon_start <= 1");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad("epsilon_decay must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch size must be positive and fit in the buffer");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layers must be non-empty");
        }
        Ok(())
    }

    /// Exploration rate of episode `n` (0-based).
    pub fn epsilon(&self, n: usize) -> f64 {
        let n = i32::try_from(n).unwrap_or(i32::MAX);
        (self.epsilon_start * self.epsilon_decay.powi(n)).max(self.epsilon_floor)
    }

    fn layer_sizes(&self, inputs: usize, outputs: usize) -> Vec<usize> {
        let mut s = vec![inputs];
        s.extend(&self.hidden);
        s.push(outputs);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Episodic environment driven by the trainer.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    /// Starts a new episode and returns its first observation.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
    fn step(&mut self, action: usize) -> Result<Step>;
}

/// Training days of one household; each episode is a uniformly drawn day.
pub struct HouseholdEnv<'a> {
    days: &'a [DayContext],
    reward: RewardSpec,
    normalizer: Normalizer,
    episode: Option<Episode<'a>>,
    state: Option<EnvState>,
}

impl<'a> HouseholdEnv<'a> {
    pub fn new(days: &'a [DayContext], reward: RewardSpec, normalizer: Normalizer) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::Contract("no training days".into()));
        }
        Ok(Self {
            days,
            reward,
            normalizer,
            episode: None,
            state: None,
        })
    }
}

impl Environment for HouseholdEnv<'_> {
    fn observation_dim(&self) -> usize {
        OBSERVATION_DIM
    }

    fn action_count(&self) -> usize {
        ACTION_COUNT
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let ctx = self.days.choose(rng).expect("non-empty");
        let episode = Episode::new(ctx);
        let state = episode.state();
        self.episode = Some(episode);
        self.state = Some(state);
        Ok(self.normalizer.apply(&state).to_vec())
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let (episode, state) = match (self.episode.as_mut(), self.state) {
            (Some(e), Some(s)) => (e, s),
            _ => return Err(Error::Contract("step before reset".into())),
        };
        let (d, next) = episode.step(Action::new(action)?, &self.reward)?;
        let reward = self.reward.evaluate(&state, &d);
        if !reward.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite reward at slot {}",
                episode.slot() - 1
            )));
        }
        let done = next.is_none();
        let shown = next.unwrap_or(state);
        self.state = next;
        Ok(Step {
            observation: self.normalizer.apply(&shown).to_vec(),
            reward,
            done,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub epsilon: f64,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Mlp,
    pub curve: Vec<CurvePoint>,
    pub updates: u64,
}

impl TrainOutcome {
    pub fn trained(&self) -> bool {
        self.updates > 0
    }
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn train<E: Environment>(env: &mut E, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (dim, actions) = (env.observation_dim(), env.action_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut online = Mlp::new(&cfg.layer_sizes(dim, actions), &mut rng);
    let mut target = online.clone();
    let mut opt = Adam::new(online.params().len(), cfg.learning_rate);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, dim);
    let mut grad = vec![0.0; online.params().len()];
    let mut ws = Workspace::default();
    let mut ws_target = Workspace::default();
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut updates = 0u64;
    let mut batch = vec![0usize; cfg.batch_size];

    for n in 0..cfg.episodes {
        let eps = cfg.epsilon(n);
        let mut obs = env.reset(&mut rng)?;
        let mut total = 0.0;
        loop {
            let action = if rng.gen::<f64>() < eps {
                rng.gen_range(0..actions)
            } else {
                argmax(online.forward_with(&obs, &mut ws))
            };
            let step = env.step(action)?;
            total += step.reward;
            buffer.push(&obs, action, step.reward, &step.observation, step.done);

            if buffer.len() >= cfg.batch_size {
                for b in batch.iter_mut() {
                    *b = rng.gen_range(0..buffer.len());
                }
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / cfg.batch_size as f64;
                for &i in &batch {
                    let t = buffer.get(i);
                    let y = if t.terminal {
                        t.reward
                    } else {
                        let q = target.forward_with(t.next_state, &mut ws_target);
                        t.reward + cfg.gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    };
                    online.accumulate_td(t.state, t.action, y, scale, &mut grad, &mut ws);
                }
                opt.apply(&mut online, &grad)?;
                target.soft_update(&online, cfg.tau);
                updates += 1;
            }

            if step.done {
                break;
            }
            obs = step.observation;
        }
        curve.push(CurvePoint {
            episode: n,
            epsilon: eps,
            reward: total,
        });
    }
    Ok(TrainOutcome {
        net: online,
        curve,
        updates,
    })
}

/// Prepares the day contexts and trains a greedy household policy.
pub fn train_household(
    h: &Household,
    days: &[usize],
    price: &PriceModel,
    reward: &RewardSpec,
    cfg: &TrainConfig,
) -> Result<(Policy, TrainOutcome)> {
    if days.is_empty() {
        return Err(Error::Contract("no training days".into()));
    }
    let contexts = days
        .iter()
        .map(|&d| DayContext::new(h, d, price))
        .collect::<Result<Vec<_>>>()?;
    let normalizer = Normalizer::for_household(h, price);
    let mut env = HouseholdEnv::new(&contexts, reward.clone(), normalizer)?;
    let outcome = train(&mut env, cfg)?;
    let policy = Policy::Greedy {
        net: outcome.net.clone(),
        normalizer,
    };
    Ok((policy, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// Argmax over the Q-values of the normalized observation.
    Greedy { net: Mlp, normalizer: Normalizer },
    /// Uniform levels; the stream is reseeded per day.
    Random { seed: u64 },
    /// Action per slot (or per state index for finite MDPs).
    Tabular { actions: Vec<usize> },
    Constant { level: usize },
}

impl Policy {
    /// Random stream of one day's rollout.
    pub fn episode_rng(&self, day: usize) -> ChaCha8Rng {
        let seed = match self {
            Policy::Random { seed } => *seed,
            _ => 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(day as u64);
        rng
    }

    pub fn act(&self, state: &EnvState, slot: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        match self {
            Policy::Greedy { net, normalizer } => Ok(argmax(&net.forward(&normalizer.apply(state))?)),
            _ => self.act_observation(&[], slot, rng),
        }
    }

    /// Action from a raw observation; `index` selects the tabular entry.
    pub fn act_observation(&self, obs: &[f64], index: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        match self {
            Policy::Greedy { net, .. } => Ok(argmax(&net.forward(obs)?)),
            Policy::Random { .. } => Ok(rng.gen_range(0..ACTION_COUNT)),
            Policy::Tabular { actions } => actions
                .get(index)
                .copied()
                .ok_or_else(|| Error::Contract(format!("no tabular action for index {index}"))),
            Policy::Constant { level } => Ok(*level),
        }
    }
}

/// Greedy rollouts on `days`; returns the trajectories and the mean summed
/// reward per day.
pub fn evaluate_policy(
    policy: &Policy,
    h: &Household,
    days: &[usize],
    price: &PriceModel,
    reward: &RewardSpec,
) -> Result<(Vec<Trajectory>, f64)> {
    let trajectories = days
        .par_iter()
        .map(|&d| run_day(&DayContext::new(h, d, price)?, policy, reward))
        .collect::<Result<Vec<_>>>()?;
    let mean = if trajectories.is_empty() {
        0.0
    } else {
        trajectories.iter().map(Trajectory::total_reward).sum::<f64>() / trajectories.len() as f64
    };
    Ok((trajectories, mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3, 1);
        for k in 0..5 {
            b.push(&[k as f64], 0, k as f64, &[0.0], false);
        }
        assert_eq!(b.len(), 3);
        let order: Vec<f64> = b.iter().map(|t| t.reward).collect();
        assert_eq!(order, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.epsilon(0), 1.0);
        assert_eq!(cfg.epsilon(10), 0.999f64.powi(10));
        assert_eq!(cfg.epsilon(5000), 0.05);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            gamma: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            tau: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn argmax_prefers_lower_index() {
        assert_eq!(argmax(&[0.0, 1.0, 1.0, 0.5]), 1);
        assert_eq!(argmax(&[0.0; 11]), 0);
    }

    #[test]
    fn random_policy_stays_in_range() {
        let p = Policy::Random { seed: 9 };
        let mut rng = p.episode_rng(3);
        for _ in 0..200 {
            assert!(p.act(&EnvState::default(), 0, &mut rng).unwrap() <= 10);
        }
    }
}
