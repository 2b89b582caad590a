//! Household demand-response laboratory.
//!
//! The crate models a household that curtails its consumption against a
//! baseline as a Markov decision process ([`environment`]), trains deep-Q
//! agents on it ([`qnet`], [`dqn`]) and recovers a linear reward over six
//! basis functions from expert behaviour with linear-programming inverse
//! reinforcement learning ([`irl_sampled`]). A tabular variant for MDPs
//! with known transition matrices lives in [`irl_exact`]; both solve their
//! programs with the dense simplex in [`linprog`].

pub mod data_io;
pub mod domain;
pub mod dqn;
pub mod environment;
pub mod error;
pub mod irl_exact;
pub mod irl_sampled;
pub mod linprog;
pub mod metrics;
pub mod qnet;
pub mod rewards;
pub mod synth;
pub mod toy;

pub use error::{Error, Result};
