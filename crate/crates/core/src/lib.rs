//! Glimpse-based actor-critic: a reinforcement-learning agent that sees each
//! frame only through a foveated, multi-resolution glimpse and learns where to
//! look jointly with what to do.

pub mod agent;
pub mod bridge;
pub mod envs;
pub mod error;
pub mod glimpse;
pub mod nn;
pub mod ppo;
pub mod run;

pub use error::{GbacError, Result};
