use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{param_count, ArchConfig};
use crate::bridge::RemoteEnv;
use crate::envs::{builtin_spec, make_env, Env, EnvSpec};
use crate::error::{config_err, GbacError, Result};
use crate::glimpse::GlimpseConfig;
use crate::ppo::PpoConfig;

pub const PRESETS: &[&str] = &["atari_like", "carracing_like", "desk"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Built-in id, or a label for a bridged environment.
    pub id: String,
    #[serde(default)]
    pub clip_rewards: bool,
    /// Shell command that starts a bridge server on stdio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge_cmd: Option<String>,
    /// `host:port` of a running bridge server.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge_addr: Option<String>,
}

impl EnvConfig {
    pub fn builtin(id: &str) -> Self {
        Self {
            id: id.to_string(),
            clip_rewards: false,
            bridge_cmd: None,
            bridge_addr: None,
        }
    }

    pub fn is_bridged(&self) -> bool {
        self.bridge_cmd.is_some() || self.bridge_addr.is_some()
    }

    /// Opens one instance of the environment.
    pub fn open(&self, seed: u64) -> Result<Box<dyn Env>> {
        match (&self.bridge_cmd, &self.bridge_addr) {
            (Some(cmd), None) => Ok(Box::new(RemoteEnv::spawn(cmd, seed)?)),
            (None, Some(addr)) => Ok(Box::new(RemoteEnv::connect(addr, seed)?)),
            (None, None) => make_env(&self.id, seed),
            (Some(_), Some(_)) => Err(config_err("env: set at most one of bridge_cmd and bridge_addr")),
        }
    }
}

/// Everything a training run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub glimpse: GlimpseConfig,
    pub arch: ArchConfig,
    pub ppo: PpoConfig,
    pub seed: u64,
    /// Run directory; every artifact of the run is written below it.
    pub output_dir: PathBuf,
    pub eval_episodes: usize,
    /// Periodic checkpoint interval in updates; 0 keeps only best and final.
    pub checkpoint_every: u64,
    /// Baseline with uniformly random glimpse locations and no location loss.
    #[serde(default)]
    pub random_loc: bool,
}

impl RunConfig {
    /// Named preset for `env_id`. Bridged ids need `actions`.
    pub fn preset(name: &str, env_id: &str, actions: Option<usize>) -> Result<Self> {
        let actions = match (builtin_spec(env_id), actions) {
            (_, Some(a)) => a,
            (Ok(spec), None) => spec.action_count,
            (Err(_), None) => {
                return Err(config_err(format!(
                    "env {env_id:?} is not built in; give its action count"
                )))
            }
        };
        let mut env = EnvConfig::builtin(env_id);
        let (glimpse, arch, ppo, eval_episodes, checkpoint_every) = match name {
            "atari_like" => {
                env.clip_rewards = true;
                (GlimpseConfig::new(3, 40), ArchConfig::atari(actions), PpoConfig::atari(), 100, 100)
            }
            "carracing_like" => (
                GlimpseConfig::new(2, 40),
                ArchConfig::carracing(actions),
                PpoConfig::carracing(),
                100,
                50,
            ),
            "desk" => (GlimpseConfig::new(2, 16), ArchConfig::desk(actions), PpoConfig::desk(), 20, 20),
            other => {
                return Err(config_err(format!(
                    "unknown preset {other:?} (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(Self {
            env,
            glimpse,
            arch,
            ppo,
            seed: 1,
            output_dir: PathBuf::from(format!("runs/{env_id}-{name}")),
            eval_episodes,
            checkpoint_every,
            random_loc: false,
        })
    }

    /// Parses strict JSON, naming the offending field path on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(format!("{path}: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            GbacError::Config(msg) => config_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Validates every component. Does not contact bridged environments.
    pub fn validate(&self) -> Result<()> {
        if self.env.id.is_empty() {
            return Err(config_err("env.id must not be empty"));
        }
        if self.env.bridge_cmd.is_some() && self.env.bridge_addr.is_some() {
            return Err(config_err("env: set at most one of bridge_cmd and bridge_addr"));
        }
        if !self.env.is_bridged() {
            let spec = builtin_spec(&self.env.id).map_err(|e| match e {
                GbacError::Config(msg) => config_err(format!("env.id: {msg}")),
                other => other,
            })?;
            self.check_env(&spec)?;
        }
        param_count(&self.arch, &self.glimpse)?;
        self.ppo.validate()?;
        if self.output_dir.as_os_str().is_empty() {
            return Err(config_err("output_dir must not be empty"));
        }
        Ok(())
    }

    /// Checks the config against a concrete environment.
    pub fn check_env(&self, spec: &EnvSpec) -> Result<()> {
        if spec.action_count != self.arch.actions {
            return Err(config_err(format!(
                "arch.actions: {} but env {} has {} actions",
                self.arch.actions, spec.id, spec.action_count
            )));
        }
        self.glimpse.validate_for(spec.frame_h, spec.frame_w)
    }

    /// Hex SHA-256 of the canonical JSON of everything except `output_dir`.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        // serde_json maps are ordered by key, so this text is canonical
        let text = serde_json::to_string(&v).expect("value serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            let c = RunConfig::preset(name, "minipong", None).unwrap();
            if *name == "desk" {
                c.validate().unwrap();
            } else {
                // 3x40 and 2x40 glimpses need frames larger than 64 px
                assert!(c.validate().is_err());
            }
        }
        RunConfig::preset("desk", "seekdot", None).unwrap().validate().unwrap();
        let mut atari = RunConfig::preset("atari_like", "PongNoFrameskip-v4", Some(6)).unwrap();
        atari.env.bridge_cmd = Some("python -m gym_shim".into());
        atari.validate().unwrap();
        assert!(RunConfig::preset("desk", "PongNoFrameskip-v4", None).is_err());
        assert!(RunConfig::preset("huge", "seekdot", None).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::preset("desk", "seekdot", None).unwrap();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named_with_its_path() {
        let c = RunConfig::preset("desk", "seekdot", None).unwrap();
        let mut v = serde_json::to_value(&c).unwrap();
        v["ppo"]["gama"] = serde_json::json!(0.9);
        let err = RunConfig::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("ppo") && err.contains("gama"), "{err}");
    }

    #[test]
    fn wrong_type_is_named_with_its_path() {
        let c = RunConfig::preset("desk", "seekdot", None).unwrap();
        let mut v = serde_json::to_value(&c).unwrap();
        v["glimpse"]["patch_size"] = serde_json::json!("big");
        let err = RunConfig::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("glimpse.patch_size"), "{err}");
    }

    #[test]
    fn digest_ignores_output_dir_only() {
        let a = RunConfig::preset("desk", "seekdot", None).unwrap();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.digest(), b.digest());
        b.seed += 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn action_mismatch_is_reported() {
        let mut c = RunConfig::preset("desk", "seekdot", None).unwrap();
        c.arch.actions = 3;
        assert!(c.validate().unwrap_err().to_string().contains("arch.actions"));
    }
}
