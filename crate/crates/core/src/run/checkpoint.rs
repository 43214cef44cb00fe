use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::error::{GbacError, Result};
use crate::nn::{checkpoint, ParamSet, Tensor};
use crate::ppo::Trainer;
use crate::run::RunConfig;

const FIRST_MOMENT: &str = "adam.m/";
const SECOND_MOMENT: &str = "adam.v/";

/// Training progress stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub update: u64,
    pub global_step: u64,
    pub episodes: u64,
    pub rolling_return: Option<f64>,
    pub best_return: Option<f64>,
    pub recent_returns: Vec<f64>,
    pub adam_steps_trunk: u64,
    pub adam_steps_location: u64,
    /// Hex seed and word position of the minibatch shuffling stream.
    pub shuffle_seed: String,
    pub shuffle_word_pos: String,
}

fn moments(out: &mut Vec<(String, Tensor<f32>)>, ps: &ParamSet<f32>) {
    for id in ps.ids() {
        out.push((format!("{FIRST_MOMENT}{}", ps.name(id)), ps.first_moment(id).clone()));
        out.push((format!("{SECOND_MOMENT}{}", ps.name(id)), ps.second_moment(id).clone()));
    }
}

/// Writes weights, Adam moments and `meta` to `path` (`.json` manifest plus `.bin`).
pub fn save_training(path: &Path, digest: &str, trainer: &Trainer, meta: &CheckpointMeta) -> Result<()> {
    let mut owned = Vec::new();
    moments(&mut owned, &trainer.agent.net.trunk);
    moments(&mut owned, &trainer.agent.net.location);
    let mut tensors = trainer.agent.named_tensors();
    tensors.extend(owned.iter().map(|(n, t)| (n.clone(), t)));
    checkpoint::save(path, digest, &tensors, serde_json::to_value(meta)?)?;
    Ok(())
}

/// Current shuffle stream position, for [`CheckpointMeta`].
pub fn shuffle_state(rng: &ChaCha8Rng) -> (String, String) {
    (hex::encode(rng.get_seed()), rng.get_word_pos().to_string())
}

fn restore_shuffle(meta: &CheckpointMeta) -> Result<ChaCha8Rng> {
    let bad = || GbacError::Checkpoint("corrupt shuffle stream state".into());
    let seed: [u8; 32] = hex::decode(&meta.shuffle_seed)
        .map_err(|_| bad())?
        .try_into()
        .map_err(|_| bad())?;
    let pos: u128 = meta.shuffle_word_pos.parse().map_err(|_| bad())?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_word_pos(pos);
    Ok(rng)
}

/// Loaded checkpoint contents, checked against a config.
pub struct LoadedCheckpoint {
    pub agent: Agent,
    pub meta: Option<CheckpointMeta>,
    moments: Vec<(String, Tensor<f32>)>,
}

/// Loads `path` after checking its digest against `cfg`.
pub fn load(path: &Path, cfg: &RunConfig) -> Result<LoadedCheckpoint> {
    let (manifest, tensors) = checkpoint::load(path)?;
    let found = cfg.digest();
    if manifest.config_digest != found {
        return Err(GbacError::DigestMismatch {
            expected: manifest.config_digest,
            found,
        });
    }
    let (moments, params): (Vec<_>, Vec<_>) = tensors
        .into_iter()
        .partition(|(n, _)| n.starts_with(FIRST_MOMENT) || n.starts_with(SECOND_MOMENT));
    let mut agent = Agent::new(&cfg.arch, &cfg.glimpse, cfg.seed)?;
    agent
        .load_tensors(&params)
        .map_err(|e| GbacError::Checkpoint(format!("{}: {e}", path.display())))?;
    let meta = if manifest.meta.is_null() {
        None
    } else {
        Some(
            serde_json::from_value(manifest.meta)
                .map_err(|e| GbacError::Checkpoint(format!("{}: bad meta: {e}", path.display())))?,
        )
    };
    Ok(LoadedCheckpoint { agent, meta, moments })
}

impl LoadedCheckpoint {
    /// Moves weights, optimizer moments and the shuffle stream into `trainer`.
    pub fn restore_into(self, trainer: &mut Trainer) -> Result<CheckpointMeta> {
        let meta = self
            .meta
            .ok_or_else(|| GbacError::Checkpoint("checkpoint has no training state".into()))?;
        trainer.agent = self.agent;
        let net = &mut trainer.agent.net;
        for ps in [&mut net.trunk, &mut net.location] {
            let ids: Vec<_> = ps.ids().collect();
            for id in ids {
                let name = ps.name(id).to_string();
                let find = |prefix: &str| {
                    self.moments
                        .iter()
                        .find(|(n, _)| n.strip_prefix(prefix) == Some(name.as_str()))
                        .map(|(_, t)| t.clone())
                        .ok_or_else(|| GbacError::Checkpoint(format!("missing optimizer state for {name}")))
                };
                let (m, v) = (find(FIRST_MOMENT)?, find(SECOND_MOMENT)?);
                ps.set_optimizer_state(id, m, v)?;
            }
        }
        net.trunk.set_step_count(meta.adam_steps_trunk);
        net.location.set_step_count(meta.adam_steps_location);
        trainer.set_shuffle_rng(restore_shuffle(&meta)?);
        trainer.updates = meta.update;
        Ok(meta)
    }
}
