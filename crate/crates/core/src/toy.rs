//! Small deterministic chain used to sanity-check the Q-learner.
//!
//! From state `s` the agent either exits (reward `exit[s]`, episode ends)
//! or advances to `s + 1` at a fixed cost; advancing from the last state
//! ends the episode. Observations are one-hot state vectors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dqn::{argmax, Environment, Policy, Step};
use crate::error::{Error, Result};

pub const EXIT: usize = 0;
pub const ADVANCE: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub exit: Vec<f64>,
    pub advance: f64,
    pub gamma: f64,
    state: Option<usize>,
}

impl Chain {
    pub fn new(exit: Vec<f64>, advance: f64, gamma: f64) -> Self {
        assert!(!exit.is_empty());
        Self {
            exit,
            advance,
            gamma,
            state: None,
        }
    }

    /// Three states where the best move is to walk to the end.
    pub fn three_state() -> Self {
        Self::new(vec![0.2, 0.1, 1.0], -0.05, 0.9)
    }

    pub fn states(&self) -> usize {
        self.exit.len()
    }

    pub fn observation(&self, s: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.states()];
        x[s] = 1.0;
        x
    }

    /// Optimal action values by backward induction.
    pub fn optimal_q(&self) -> Vec<[f64; 2]> {
        let n = self.states();
        let mut q = vec![[0.0; 2]; n];
        let mut v_next = 0.0;
        for s in (0..n).rev() {
            let cont = if s + 1 < n { self.gamma * v_next } else { 0.0 };
            q[s] = [self.exit[s], self.advance + cont];
            v_next = q[s][0].max(q[s][1]);
        }
        q
    }

    pub fn optimal_policy(&self) -> Vec<usize> {
        self.optimal_q().iter().map(|q| argmax(q)).collect()
    }

    /// Actions a policy takes in every state.
    pub fn policy_actions(&self, policy: &Policy) -> Result<Vec<usize>> {
        let mut rng = policy.episode_rng(0);
        (0..self.states())
            .map(|s| policy.act_observation(&self.observation(s), s, &mut rng))
            .collect()
    }

    /// Discounted return of `policy` started in `s`.
    pub fn policy_return(&self, policy: &Policy, s: usize) -> Result<f64> {
        let actions = self.policy_actions(policy)?;
        let (mut g, mut disc) = (0.0, 1.0);
        for (k, &a) in actions.iter().enumerate().skip(s) {
            if a == EXIT {
                return Ok(g + disc * self.exit[k]);
            }
            g += disc * self.advance;
            disc *= self.gamma;
        }
        Ok(g)
    }
}

impl Environment for Chain {
    fn observation_dim(&self) -> usize {
        self.states()
    }

    fn action_count(&self) -> usize {
        2
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let s = rng.gen_range(0..self.states());
        self.state = Some(s);
        Ok(self.observation(s))
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let s = self.state.ok_or_else(|| Error::Contract("step before reset".into()))?;
        let (reward, next) = match action {
            EXIT => (self.exit[s], None),
            ADVANCE => (self.advance, (s + 1 < self.states()).then_some(s + 1)),
            _ => return Err(Error::Contract(format!("action {action} out of range"))),
        };
        self.state = next;
        Ok(Step {
            observation: self.observation(next.unwrap_or(s)),
            reward,
            done: next.is_none(),
        })
    }
}
