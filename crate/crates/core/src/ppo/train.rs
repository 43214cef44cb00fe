use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{Agent, SeqInput};
use crate::error::{GbacError, Result};
use crate::nn::Adam;
use crate::ppo::buffer::{Minibatch, RolloutBuffer};
use crate::ppo::config::PpoConfig;
use crate::ppo::loss::{total_objective, LossComponents, ObjectiveCoefs, ObjectiveInput, ObjectiveOutput};

/// Averages over all minibatches of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub loss: f64,
    pub components: LossComponents,
    pub lr_a: f64,
    pub lr_g: f64,
    pub grad_norm_trunk: f64,
    pub grad_norm_loc: f64,
}

/// Owns the agent and its two optimizers: one for the glimpse and action
/// networks, one for the location network.
pub struct Trainer {
    pub agent: Agent,
    pub cfg: PpoConfig,
    pub opt_trunk: Adam,
    pub opt_loc: Adam,
    /// Train without the location policy (random glimpse locations).
    pub random_loc: bool,
    pub updates: u64,
    shuffle_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(agent: Agent, cfg: PpoConfig, seed: u64, random_loc: bool) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            opt_trunk: Adam::new(cfg.lr_action).with_max_grad_norm(cfg.max_grad_norm),
            opt_loc: Adam::new(cfg.lr_loc).with_max_grad_norm(cfg.max_grad_norm),
            agent,
            cfg,
            random_loc,
            updates: 0,
            shuffle_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed),
        })
    }

    pub fn shuffle_rng(&self) -> &ChaCha8Rng {
        &self.shuffle_rng
    }

    pub fn set_shuffle_rng(&mut self, rng: ChaCha8Rng) {
        self.shuffle_rng = rng;
    }

    pub fn coefs(&self) -> ObjectiveCoefs {
        ObjectiveCoefs {
            clip_action: self.cfg.clip_action,
            clip_loc: self.cfg.clip_loc,
            vf_coef: self.cfg.vf_coef,
            ent_coef: self.cfg.ent_coef,
            norm_adv: self.cfg.norm_adv,
            clip_vloss: self.cfg.clip_vloss,
            skip_location: self.random_loc,
        }
    }

    /// Forward pass and objective on a gathered minibatch, without any update.
    pub fn evaluate(&self, mb: &Minibatch) -> Result<(ObjectiveOutput, crate::agent::NetCache<f32>)> {
        let (out, cache) = self.agent.net.forward(&SeqInput {
            steps: mb.steps,
            batch: mb.batch,
            glimpses: &mb.glimpses,
            prev_locs: &mb.prev_locs,
            resets: &mb.resets,
            action_h0: &mb.state.action_h,
            action_c0: &mb.state.action_c,
            loc_h0: &mb.state.loc_h,
            loc_c0: &mb.state.loc_c,
        })?;
        let f = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        let (logits, means, values) = (f(&out.logits), f(&out.means), f(&out.values));
        let obj = total_objective(
            &ObjectiveInput {
                logits: &logits,
                actions: &mb.actions,
                old_action_logp: &mb.action_logp,
                means: &means,
                locs: &mb.locs,
                old_loc_logp: &mb.loc_logp,
                loc_std: self.agent.arch().locator_std,
                values: &values,
                old_values: &mb.values,
                returns: &mb.returns,
                advantages: &mb.advantages,
            },
            &self.coefs(),
        )?;
        Ok((obj, cache))
    }

    /// Gradient step on one minibatch. Returns the objective before the step
    /// and the pre-clip gradient norms of both groups.
    pub fn step_minibatch(&mut self, mb: &Minibatch) -> Result<(ObjectiveOutput, f64, f64)> {
        let update = self.updates;
        let (obj, cache) = self.evaluate(mb).map_err(|e| match e {
            GbacError::Numerical(detail) => GbacError::NonFinite { component: detail, update },
            other => other,
        })?;
        if !obj.loss.is_finite() {
            return Err(GbacError::NonFinite {
                component: "loss".into(),
                update,
            });
        }
        let f = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
        self.agent.net.zero_grad();
        self.agent.net.backward(&cache, &f(&obj.d_logits), &f(&obj.d_values), &f(&obj.d_means));
        let net = &mut self.agent.net;
        if !net.trunk.grads_finite() {
            return Err(GbacError::NonFinite {
                component: "glimpse/action gradients".into(),
                update,
            });
        }
        if !net.location.grads_finite() {
            return Err(GbacError::NonFinite {
                component: "location gradients".into(),
                update,
            });
        }
        let gn_trunk = self.opt_trunk.step(&mut net.trunk);
        let gn_loc = if self.random_loc { 0.0 } else { self.opt_loc.step(&mut net.location) };
        Ok((obj, gn_trunk, gn_loc))
    }

    /// `epochs` passes over `buf` in shuffled minibatches of whole segments.
    pub fn update(&mut self, buf: &RolloutBuffer, global_step: u64) -> Result<UpdateStats> {
        let lr_a = self.cfg.lr_at(self.cfg.lr_action, global_step);
        let lr_g = self.cfg.lr_at(self.cfg.lr_loc, global_step);
        self.opt_trunk.lr = lr_a;
        self.opt_loc.lr = lr_g;
        let mut segments: Vec<usize> = (0..buf.num_segments()).collect();
        let per_mb = segments.len() / self.cfg.minibatches;
        let mut stats = UpdateStats {
            lr_a,
            lr_g,
            ..Default::default()
        };
        let mut count = 0.0;
        for _ in 0..self.cfg.epochs {
            segments.shuffle(&mut self.shuffle_rng);
            for chunk in segments.chunks(per_mb) {
                let mb = buf.gather(chunk);
                let (obj, gt, gl) = self.step_minibatch(&mb)?;
                let c = &mut stats.components;
                let o = &obj.components;
                c.policy_loss_a += o.policy_loss_a;
                c.policy_loss_g += o.policy_loss_g;
                c.value_loss += o.value_loss;
                c.entropy += o.entropy;
                c.approx_kl_a += o.approx_kl_a;
                c.approx_kl_g += o.approx_kl_g;
                c.clip_frac_a += o.clip_frac_a;
                c.clip_frac_g += o.clip_frac_g;
                stats.loss += obj.loss;
                stats.grad_norm_trunk += gt;
                stats.grad_norm_loc += gl;
                count += 1.0;
            }
        }
        let c = &mut stats.components;
        for v in [
            &mut c.policy_loss_a,
            &mut c.policy_loss_g,
            &mut c.value_loss,
            &mut c.entropy,
            &mut c.approx_kl_a,
            &mut c.approx_kl_g,
            &mut c.clip_frac_a,
            &mut c.clip_frac_g,
            &mut stats.loss,
            &mut stats.grad_norm_trunk,
            &mut stats.grad_norm_loc,
        ] {
            *v /= count;
        }
        self.updates += 1;
        Ok(stats)
    }
}
