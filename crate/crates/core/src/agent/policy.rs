use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::arch::ArchConfig;
use crate::agent::net::{GbacNet, SeqInput, SeqOutput};
use crate::agent::truncnorm::{truncnorm_logpdf, truncnorm_sample, uniform_loc_logpdf};
use crate::error::{config_err, GbacError, Result};
use crate::glimpse::{extract_glimpse_into, Frame, GlimpseConfig, Loc};
use crate::nn::categorical::{entropy, log_softmax, sample_index};
use crate::nn::Tensor;

/// How `act` chooses the action and the next glimpse location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    /// Sample both policies.
    Sample,
    /// Most likely action, locator mean as the next location.
    Greedy,
    /// Sample the action; draw the next location uniformly, ignoring the location network.
    RandomLoc,
}

impl FromStr for ActMode {
    type Err = GbacError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(Self::Sample),
            "greedy" => Ok(Self::Greedy),
            "random_loc" => Ok(Self::RandomLoc),
            other => Err(config_err(format!(
                "unknown mode {other:?}, expected sample, greedy or random_loc"
            ))),
        }
    }
}

impl fmt::Display for ActMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sample => "sample",
            Self::Greedy => "greedy",
            Self::RandomLoc => "random_loc",
        })
    }
}

/// Recurrent memory of both LSTMs and the location of the next glimpse.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub action_h: Vec<f32>,
    pub action_c: Vec<f32>,
    pub loc_h: Vec<f32>,
    pub loc_c: Vec<f32>,
    pub last_loc: Loc,
}

impl AgentState {
    pub fn new(hidden: usize) -> Self {
        Self {
            action_h: vec![0.0; hidden],
            action_c: vec![0.0; hidden],
            loc_h: vec![0.0; hidden],
            loc_c: vec![0.0; hidden],
            last_loc: Loc::CENTER,
        }
    }

    /// Episode-start state: zero memories, glimpse at the frame centre.
    pub fn reset(&mut self) {
        for v in [&mut self.action_h, &mut self.action_c, &mut self.loc_h, &mut self.loc_c] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        self.last_loc = Loc::CENTER;
    }

    pub fn hidden(&self) -> usize {
        self.action_h.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub action: usize,
    pub action_logprob: f64,
    pub entropy: f64,
    pub value: f32,
    pub next_loc: Loc,
    pub loc_logprob: f64,
    pub loc_mean: Loc,
    /// Centre of the focal patch actually observed this step.
    pub observed_loc: Loc,
    pub new_state: AgentState,
}

/// Result of acting for several environments at once.
#[derive(Debug, Clone)]
pub struct ActBatch {
    pub outputs: Vec<StepOutput>,
    /// Glimpses fed to the network, `[n, pixel_budget]`.
    pub glimpses: Vec<f32>,
}

/// A GBAC agent in runtime (f32) precision.
#[derive(Debug, Clone)]
pub struct Agent {
    pub net: GbacNet<f32>,
}

impl Agent {
    pub fn new(arch: &ArchConfig, glimpse: &GlimpseConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            net: GbacNet::new(arch, glimpse, &mut rng)?,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.net.arch
    }

    pub fn glimpse_config(&self) -> &GlimpseConfig {
        &self.net.glimpse
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn initial_state(&self) -> AgentState {
        AgentState::new(self.net.hidden())
    }

    pub fn act<R: Rng>(&self, frame: &Frame, state: &AgentState, mode: ActMode, rng: &mut R) -> Result<StepOutput> {
        let mut batch = self.act_batch(&[frame], std::slice::from_ref(state), mode, std::slice::from_mut(rng))?;
        Ok(batch.outputs.pop().expect("one output"))
    }

    /// Glimpses every frame at its state's `last_loc` and runs one network step.
    fn observe(&self, frames: &[&Frame], states: &[AgentState]) -> Result<(SeqOutput<f32>, Vec<f32>, Vec<Loc>)> {
        if frames.len() != states.len() {
            return Err(config_err("frames and states differ in length"));
        }
        let n = frames.len();
        let hd = self.net.hidden();
        let px = self.net.glimpse.pixel_budget();
        let mut glimpses = vec![0f32; n * px];
        let mut observed = Vec::with_capacity(n);
        let mut prev = Vec::with_capacity(2 * n);
        let mut st = [Vec::with_capacity(n * hd), Vec::with_capacity(n * hd), Vec::with_capacity(n * hd), Vec::with_capacity(n * hd)];
        for (i, (frame, s)) in frames.iter().zip(states).enumerate() {
            if s.hidden() != hd {
                return Err(config_err(format!("agent state width {} != lstm width {hd}", s.hidden())));
            }
            let c = extract_glimpse_into(frame, s.last_loc, &self.net.glimpse, &mut glimpses[i * px..(i + 1) * px])?;
            observed.push(c);
            prev.extend_from_slice(&[c.x, c.y]);
            st[0].extend_from_slice(&s.action_h);
            st[1].extend_from_slice(&s.action_c);
            st[2].extend_from_slice(&s.loc_h);
            st[3].extend_from_slice(&s.loc_c);
        }
        let resets = vec![false; n];
        let (out, _) = self.net.forward(&SeqInput {
            steps: 1,
            batch: n,
            glimpses: &glimpses,
            prev_locs: &prev,
            resets: &resets,
            action_h0: &st[0],
            action_c0: &st[1],
            loc_h0: &st[2],
            loc_c0: &st[3],
        })?;
        if !out.logits.iter().chain(&out.values).chain(&out.means).all(|v| v.is_finite()) {
            return Err(GbacError::Numerical("non-finite network output while acting".into()));
        }
        Ok((out, glimpses, observed))
    }

    /// One step for `n` environments; `rngs[i]` drives the draws of environment `i`.
    pub fn act_batch<R: Rng>(
        &self,
        frames: &[&Frame],
        states: &[AgentState],
        mode: ActMode,
        rngs: &mut [R],
    ) -> Result<ActBatch> {
        if rngs.len() != frames.len() {
            return Err(config_err("one rng per environment is required"));
        }
        let (out, glimpses, observed) = self.observe(frames, states)?;
        let a = self.net.arch.actions;
        let hd = self.net.hidden();
        let std = self.net.arch.locator_std;
        let mut outputs = Vec::with_capacity(frames.len());
        for (i, rng) in rngs.iter_mut().enumerate() {
            let logp = log_softmax(&out.logits[i * a..(i + 1) * a]);
            let action = match mode {
                ActMode::Greedy => crate::nn::categorical::argmax(&logp),
                ActMode::Sample | ActMode::RandomLoc => sample_index(&logp, rng),
            };
            let mean = Loc::new(out.means[2 * i], out.means[2 * i + 1]);
            let (next_loc, loc_logprob) = match mode {
                ActMode::Sample => {
                    let l = truncnorm_sample(mean, std, rng);
                    (l, truncnorm_logpdf(l, mean, std))
                }
                ActMode::Greedy => (mean.clamped(), truncnorm_logpdf(mean.clamped(), mean, std)),
                ActMode::RandomLoc => {
                    let x: f32 = rng.random_range(-1.0..=1.0);
                    let y: f32 = rng.random_range(-1.0..=1.0);
                    (Loc::new(x, y), uniform_loc_logpdf())
                }
            };
            let range = i * hd..(i + 1) * hd;
            outputs.push(StepOutput {
                action,
                action_logprob: logp[action],
                entropy: entropy(&logp),
                value: out.values[i],
                next_loc,
                loc_logprob,
                loc_mean: mean,
                observed_loc: observed[i],
                new_state: AgentState {
                    action_h: out.action_h[range.clone()].to_vec(),
                    action_c: out.action_c[range.clone()].to_vec(),
                    loc_h: out.loc_h[range.clone()].to_vec(),
                    loc_c: out.loc_c[range].to_vec(),
                    last_loc: next_loc,
                },
            });
        }
        Ok(ActBatch { outputs, glimpses })
    }

    /// Critic values for each frame glimpsed at its state's `last_loc`.
    pub fn values(&self, frames: &[&Frame], states: &[AgentState]) -> Result<Vec<f32>> {
        Ok(self.observe(frames, states)?.0.values)
    }

    /// All parameters, trunk first, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<f32>)> {
        let mut out = Vec::with_capacity(self.net.trunk.len() + self.net.location.len());
        for ps in [&self.net.trunk, &self.net.location] {
            for id in ps.ids() {
                out.push((ps.name(id).to_string(), ps.get(id)));
            }
        }
        out
    }

    /// Loads parameter values by name; every parameter must be present.
    pub fn load_tensors(&mut self, tensors: &[(String, Tensor<f32>)]) -> Result<()> {
        let pick = |ps: &crate::nn::ParamSet<f32>| {
            tensors
                .iter()
                .filter(|(n, _)| ps.id(n).is_some())
                .map(|(n, t)| (n.as_str(), t.clone()))
                .collect::<Vec<_>>()
        };
        let trunk = pick(&self.net.trunk);
        let loc = pick(&self.net.location);
        self.net.trunk.load_values(trunk)?;
        self.net.location.load_values(loc)?;
        Ok(())
    }
}
