//! Dual-policy PPO: rollouts, advantages, the clipped objective and updates.

pub mod buffer;
pub mod collect;
pub mod config;
pub mod gae;
pub mod loss;
pub mod metrics;
pub mod train;

pub use buffer::{Minibatch, RecurrentBatch, RolloutBuffer};
pub use collect::Collector;
pub use config::PpoConfig;
pub use gae::compute_gae;
pub use loss::{clipped_policy_loss, clipped_value_loss, normalize_advantages, total_objective, LossComponents, ObjectiveCoefs, ObjectiveInput, ObjectiveOutput};
pub use metrics::{MetricsRow, METRICS_HEADER};
pub use train::{Trainer, UpdateStats};
