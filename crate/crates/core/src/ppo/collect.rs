use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{ActMode, Agent, AgentState};
use crate::envs::{Env, EpisodeInfo};
use crate::error::{GbacError, Result};
use crate::glimpse::Frame;
use crate::ppo::buffer::RolloutBuffer;

const ROLLING_WINDOW: usize = 100;

/// Steps a set of environments with one agent and fills rollout buffers.
pub struct Collector {
    envs: Vec<Box<dyn Env>>,
    frames: Vec<Frame>,
    states: Vec<AgentState>,
    rngs: Vec<ChaCha8Rng>,
    /// The next step of each env starts from a freshly reset state.
    fresh: Vec<bool>,
    pub mode: ActMode,
    pub clip_rewards: bool,
    recent: VecDeque<f64>,
    pub episodes: u64,
    pub global_step: u64,
}

/// Sign of the reward: `{-1, 0, 1}`.
pub fn clip_reward(r: f32) -> f32 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Seed of environment `i`'s action/location sampling stream.
fn stream_seed(seed: u64, i: usize) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)
}

impl Collector {
    /// Resets env `i` with `seed + i`.
    pub fn new(mut envs: Vec<Box<dyn Env>>, agent: &Agent, seed: u64, mode: ActMode, clip_rewards: bool) -> Result<Self> {
        let frames = envs
            .iter_mut()
            .enumerate()
            .map(|(i, e)| e.reset(Some(seed.wrapping_add(i as u64))))
            .collect::<Result<Vec<_>>>()?;
        let n = envs.len();
        Ok(Self {
            states: vec![agent.initial_state(); n],
            rngs: (0..n).map(|i| ChaCha8Rng::seed_from_u64(stream_seed(seed, i))).collect(),
            fresh: vec![true; n],
            envs,
            frames,
            mode,
            clip_rewards,
            recent: VecDeque::with_capacity(ROLLING_WINDOW),
            episodes: 0,
            global_step: 0,
        })
    }

    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }

    /// Mean return of the last 100 finished episodes.
    pub fn rolling_return(&self) -> Option<f64> {
        (!self.recent.is_empty()).then(|| self.recent.iter().sum::<f64>() / self.recent.len() as f64)
    }

    pub fn recent_returns(&self) -> impl Iterator<Item = &f64> {
        self.recent.iter()
    }

    /// Restores the rolling window, e.g. after resuming from a checkpoint.
    pub fn set_recent_returns(&mut self, returns: impl IntoIterator<Item = f64>) {
        self.recent = returns.into_iter().collect();
        while self.recent.len() > ROLLING_WINDOW {
            self.recent.pop_front();
        }
    }

    /// Runs `buf.num_steps` steps in every env, then computes advantages.
    /// Returns the episodes that finished during the rollout.
    pub fn collect(&mut self, agent: &Agent, buf: &mut RolloutBuffer, gamma: f64, lambda: f64) -> Result<Vec<EpisodeInfo>> {
        let n = self.envs.len();
        assert_eq!(buf.num_envs, n);
        buf.clear();
        let px = buf.pixels;
        let mut finished = Vec::new();
        for t in 0..buf.num_steps {
            if t % buf.segment_len == 0 {
                for s in &self.states {
                    buf.segment_states.push(s);
                }
            }
            let frames: Vec<&Frame> = self.frames.iter().collect();
            let acted = agent.act_batch(&frames, &self.states, self.mode, &mut self.rngs)?;
            for (e, out) in acted.outputs.into_iter().enumerate() {
                let row = t * n + e;
                buf.push_action(
                    &acted.glimpses[e * px..(e + 1) * px],
                    [out.observed_loc.x, out.observed_loc.y],
                    out.action,
                    out.action_logprob,
                    [out.next_loc.x, out.next_loc.y],
                    out.loc_logprob,
                    out.value,
                    self.fresh[e] && t > 0,
                );
                let step = self.envs[e].step(out.action).map_err(|err| match err {
                    GbacError::Env { detail, .. } => GbacError::Env {
                        step: self.global_step,
                        detail,
                    },
                    other => GbacError::Env {
                        step: self.global_step,
                        detail: other.to_string(),
                    },
                })?;
                let reward = if self.clip_rewards { clip_reward(step.reward) } else { step.reward };
                buf.set_outcome(row, reward, step.done);
                if step.done {
                    if let Some(info) = step.info {
                        if self.recent.len() == ROLLING_WINDOW {
                            self.recent.pop_front();
                        }
                        self.recent.push_back(info.episode_return);
                        self.episodes += 1;
                        finished.push(info);
                    }
                    self.frames[e] = self.envs[e].reset(None)?;
                    self.states[e].reset();
                    self.fresh[e] = true;
                } else {
                    self.frames[e] = step.frame;
                    self.states[e] = out.new_state;
                    self.fresh[e] = false;
                }
                self.global_step += 1;
            }
        }
        let frames: Vec<&Frame> = self.frames.iter().collect();
        let bootstrap = agent.values(&frames, &self.states)?;
        buf.finish(bootstrap, gamma, lambda);
        Ok(finished)
    }
}
