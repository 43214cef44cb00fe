//! Environment interface and the built-in toy environments.

mod minipong;
mod preprocess;
mod seekdot;

pub use minipong::MiniPong;
pub use preprocess::{preprocess_f32, preprocess_u8, PixelFormat};
pub use seekdot::SeekDot;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, GbacError, Result};
use crate::glimpse::Frame;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub id: String,
    pub frame_h: usize,
    pub frame_w: usize,
    pub action_count: usize,
    pub max_episode_steps: u64,
    pub seed: u64,
}

/// Totals of a finished episode, as tallied by the environment itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeInfo {
    pub episode_return: f64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub frame: Frame,
    pub reward: f32,
    pub done: bool,
    /// Set on the step that ends an episode.
    pub info: Option<EpisodeInfo>,
}

pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode. `Some(seed)` reseeds the environment first.
    fn reset(&mut self, seed: Option<u64>) -> Result<Frame>;

    fn step(&mut self, action: usize) -> Result<EnvStep>;
}

/// Running return/length counters shared by the toy environments.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Tally {
    ret: f64,
    len: u64,
}

impl Tally {
    pub(crate) fn record(&mut self, reward: f32, done: bool) -> Option<EpisodeInfo> {
        self.ret += reward as f64;
        self.len += 1;
        done.then(|| {
            let info = EpisodeInfo {
                episode_return: self.ret,
                length: self.len,
            };
            *self = Self::default();
            info
        })
    }

    pub(crate) fn clear(&mut self) {
        *self = Self::default();
    }
}

pub(crate) fn check_action(spec: &EnvSpec, action: usize, step: u64) -> Result<()> {
    if action >= spec.action_count {
        return Err(GbacError::Env {
            step,
            detail: format!("action {action} out of range for {} ({} actions)", spec.id, spec.action_count),
        });
    }
    Ok(())
}

/// Ids of the built-in environments.
pub const BUILTIN_ENVS: &[&str] = &["minipong", "seekdot"];

/// Instantiates a built-in environment by id.
pub fn make_env(id: &str, seed: u64) -> Result<Box<dyn Env>> {
    match id {
        "minipong" => Ok(Box::new(MiniPong::new(seed))),
        "seekdot" => Ok(Box::new(SeekDot::new(seed))),
        other => Err(config_err(format!(
            "unknown env id {other:?} (built-in: {})",
            BUILTIN_ENVS.join(", ")
        ))),
    }
}

/// Spec of a built-in environment without constructing it.
pub fn builtin_spec(id: &str) -> Result<EnvSpec> {
    Ok(make_env(id, 0)?.spec().clone())
}
