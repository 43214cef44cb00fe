use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Clip range of the action-policy ratio, also used for the value clip.
    pub clip_action: f64,
    pub clip_loc: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub lr_action: f64,
    pub lr_loc: f64,
    pub num_envs: usize,
    pub num_steps: usize,
    pub minibatches: usize,
    pub epochs: usize,
    pub anneal_lr: bool,
    pub norm_adv: bool,
    pub clip_vloss: bool,
    pub max_grad_norm: f64,
    pub total_timesteps: u64,
}

impl PpoConfig {
    pub fn atari() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_action: 0.1,
            clip_loc: 0.2,
            vf_coef: 0.5,
            ent_coef: 0.01,
            lr_action: 2.5e-4,
            lr_loc: 3e-5,
            num_envs: 8,
            num_steps: 128,
            minibatches: 4,
            epochs: 4,
            anneal_lr: true,
            norm_adv: true,
            clip_vloss: true,
            max_grad_norm: 0.5,
            total_timesteps: 10_000_000,
        }
    }

    pub fn carracing() -> Self {
        Self {
            clip_action: 0.2,
            ent_coef: 0.0,
            lr_action: 3e-4,
            num_envs: 1,
            num_steps: 2048,
            minibatches: 32,
            epochs: 10,
            total_timesteps: 1_000_000,
            ..Self::atari()
        }
    }

    /// Small-budget settings for the built-in toy environments.
    pub fn desk() -> Self {
        Self {
            clip_action: 0.2,
            lr_action: 1e-3,
            lr_loc: 3e-4,
            total_timesteps: 150_000,
            ..Self::atari()
        }
    }

    pub fn batch_size(&self) -> usize {
        self.num_envs * self.num_steps
    }

    /// Number of time chunks each environment's rollout is cut into for replay.
    pub fn chunks_per_env(&self) -> usize {
        if self.minibatches > self.num_envs {
            self.minibatches.div_ceil(self.num_envs)
        } else {
            1
        }
    }

    /// Length in steps of one replay segment.
    pub fn segment_len(&self) -> usize {
        self.num_steps / self.chunks_per_env()
    }

    pub fn num_segments(&self) -> usize {
        self.num_envs * self.chunks_per_env()
    }

    pub fn segments_per_minibatch(&self) -> usize {
        self.num_segments() / self.minibatches
    }

    pub fn num_updates(&self) -> u64 {
        self.total_timesteps / self.batch_size() as u64
    }

    /// Linearly annealed learning rate at `global_step`.
    pub fn lr_at(&self, base: f64, global_step: u64) -> f64 {
        if !self.anneal_lr {
            return base;
        }
        base * (1.0 - global_step as f64 / self.total_timesteps as f64).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(config_err(format!("ppo.{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("gae_lambda", self.gae_lambda)?;
        for (name, v) in [
            ("clip_action", self.clip_action),
            ("clip_loc", self.clip_loc),
            ("lr_action", self.lr_action),
            ("lr_loc", self.lr_loc),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(format!("ppo.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("vf_coef", self.vf_coef), ("ent_coef", self.ent_coef)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err(format!("ppo.{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [
            ("num_envs", self.num_envs),
            ("num_steps", self.num_steps),
            ("minibatches", self.minibatches),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                return Err(config_err(format!("ppo.{name} must be positive")));
            }
        }
        if self.batch_size() % self.minibatches != 0 {
            return Err(config_err(format!(
                "ppo: batch {} not divisible by {} minibatches",
                self.batch_size(),
                self.minibatches
            )));
        }
        if self.num_steps % self.chunks_per_env() != 0 {
            return Err(config_err(format!(
                "ppo.num_steps {} not divisible into {} replay chunks",
                self.num_steps,
                self.chunks_per_env()
            )));
        }
        if self.num_segments() % self.minibatches != 0 {
            return Err(config_err(format!(
                "ppo: {} env sequences cannot be split evenly into {} minibatches",
                self.num_segments(),
                self.minibatches
            )));
        }
        if self.total_timesteps < self.batch_size() as u64 {
            return Err(config_err("ppo.total_timesteps is smaller than one rollout"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        PpoConfig::atari().validate().unwrap();
        PpoConfig::carracing().validate().unwrap();
        assert_eq!(PpoConfig::carracing().segment_len(), 64);
        assert_eq!(PpoConfig::atari().segments_per_minibatch(), 2);
    }

    #[test]
    fn anneal_endpoint() {
        let c = PpoConfig::atari();
        assert!(c.lr_at(c.lr_action, c.total_timesteps).abs() < 1e-12);
        assert_eq!(c.lr_at(c.lr_action, 0), c.lr_action);
    }

    #[test]
    fn indivisible_batch_rejected() {
        let c = PpoConfig {
            num_envs: 3,
            minibatches: 2,
            ..PpoConfig::atari()
        };
        assert!(c.validate().is_err());
    }
}
