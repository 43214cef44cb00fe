//! Length-prefixed JSON bridge for attaching external environments.

mod client;
mod framing;
mod protocol;
mod server;

pub use client::{BridgeClient, RemoteStep, DEFAULT_TIMEOUT};
pub use framing::{read_message, write_message, MAX_MESSAGE};
pub use protocol::{decode_frame, encode_frame, ErrorReply, FrameReply, Request, SpecReply, PROTOCOL_VERSION};
pub use server::{serve, serve_tcp};

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::envs::{Env, EnvSpec, EnvStep, EpisodeInfo};
use crate::error::{GbacError, Result};
use crate::glimpse::Frame;

/// A bridged environment behind the [`Env`] trait.
#[derive(Debug)]
pub struct RemoteEnv {
    client: BridgeClient,
    spec: EnvSpec,
    episode_return: f64,
    t: u64,
}

impl RemoteEnv {
    /// Handshakes over an established client.
    pub fn new(mut client: BridgeClient, seed: u64) -> Result<Self> {
        let spec = client.handshake(seed)?;
        Ok(Self {
            client,
            spec,
            episode_return: 0.0,
            t: 0,
        })
    }

    pub fn spawn(command: &str, seed: u64) -> Result<Self> {
        Self::new(BridgeClient::spawn(command, DEFAULT_TIMEOUT)?, seed)
    }

    pub fn connect(addr: &str, seed: u64) -> Result<Self> {
        Self::new(BridgeClient::connect(addr, DEFAULT_TIMEOUT)?, seed)
    }

    pub fn client(&self) -> &BridgeClient {
        &self.client
    }
}

impl Env for RemoteEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: Option<u64>) -> Result<Frame> {
        let r = self.client.reset(seed)?;
        self.episode_return = 0.0;
        self.t = 0;
        Ok(r.frame)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let r = self.client.step(action)?;
        self.t += 1;
        if let Some(t) = r.t {
            if t != self.t {
                return Err(GbacError::Protocol(format!(
                    "bridge desync: server reports step {t}, client expected {}",
                    self.t
                )));
            }
        }
        self.episode_return += r.reward;
        let info = r.done.then(|| EpisodeInfo {
            episode_return: self.episode_return,
            length: self.t,
        });
        Ok(EnvStep {
            frame: r.frame,
            reward: r.reward as f32,
            done: r.done,
            info,
        })
    }
}

/// Outcome of [`soak`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoakReport {
    pub env_id: String,
    pub frame_h: usize,
    pub frame_w: usize,
    pub steps: u64,
    pub episodes: u64,
    /// Replies whose step counter was not the previous one plus one.
    pub desyncs: u64,
    /// Replies that carried a step counter at all.
    pub counted: u64,
    pub elapsed_s: f64,
}

/// Drives `client` for `steps` uniformly random actions, resetting on episode end.
pub fn soak(client: &mut BridgeClient, steps: u64, seed: u64) -> Result<SoakReport> {
    let start = Instant::now();
    let spec = match client.spec() {
        Some(s) => s.clone(),
        None => client.handshake(seed)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SoakReport {
        env_id: spec.id.clone(),
        frame_h: spec.frame_h,
        frame_w: spec.frame_w,
        steps: 0,
        episodes: 0,
        desyncs: 0,
        counted: 0,
        elapsed_s: 0.0,
    };
    client.reset(Some(seed))?;
    let mut t = 0u64;
    while report.steps < steps {
        let r = client.step(rng.random_range(0..spec.action_count))?;
        report.steps += 1;
        t += 1;
        if let Some(server_t) = r.t {
            report.counted += 1;
            if server_t != t {
                report.desyncs += 1;
                t = server_t;
            }
        }
        if r.done {
            report.episodes += 1;
            client.reset(None)?;
            t = 0;
        }
    }
    report.elapsed_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Spawns `command` and runs [`soak`] against it.
pub fn soak_command(command: &str, steps: u64, seed: u64, timeout: Duration) -> Result<SoakReport> {
    let mut client = BridgeClient::spawn(command, timeout)?;
    soak(&mut client, steps, seed)
}
