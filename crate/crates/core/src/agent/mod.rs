//! The GBAC networks, the truncated-normal location policy, and acting.

pub mod arch;
pub mod net;
pub mod policy;
pub mod truncnorm;

pub use arch::{param_count, ArchConfig, ConvLayerSpec};
pub use net::{GbacNet, NetCache, SeqInput, SeqOutput};
pub use policy::{ActBatch, ActMode, Agent, AgentState, StepOutput};
pub use truncnorm::{truncnorm_logpdf, truncnorm_sample};
