use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use crate::agent::{ActMode, Agent};
use crate::envs::Env;
use crate::error::{GbacError, Result};
use crate::ppo::{Collector, MetricsRow, RolloutBuffer, Trainer, UpdateStats, METRICS_HEADER};
use crate::run::checkpoint::{self, shuffle_state, CheckpointMeta};
use crate::run::RunConfig;

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Write `sps` as 0 so repeated runs produce identical files.
    pub deterministic: bool,
    /// Checkpoint manifest to continue from.
    pub resume: Option<PathBuf>,
    /// Set asynchronously (e.g. by Ctrl-C) to stop after the current update.
    pub stop: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub updates: u64,
    pub global_step: u64,
    pub episodes: u64,
    pub rolling_return: Option<f64>,
    pub best_return: Option<f64>,
    pub interrupted: bool,
    pub final_checkpoint: PathBuf,
}

pub fn ckpt_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("ckpt")
}

pub fn periodic_checkpoint(run_dir: &Path, update: u64) -> PathBuf {
    ckpt_dir(run_dir).join(format!("update_{update:06}.json"))
}

pub fn best_checkpoint(run_dir: &Path) -> PathBuf {
    ckpt_dir(run_dir).join("best.json")
}

pub fn final_checkpoint(run_dir: &Path) -> PathBuf {
    ckpt_dir(run_dir).join("final.json")
}

/// Opens `num_envs` instances; env `i` gets seed `seed + i`.
pub fn open_envs(cfg: &RunConfig) -> Result<Vec<Box<dyn Env>>> {
    let envs = (0..cfg.ppo.num_envs)
        .map(|i| cfg.env.open(cfg.seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    cfg.check_env(envs[0].spec())?;
    Ok(envs)
}

struct Run<'a> {
    dir: &'a Path,
    digest: String,
    trainer: Trainer,
    collector: Collector,
    best: Option<f64>,
}

impl Run<'_> {
    fn meta(&self) -> CheckpointMeta {
        let (shuffle_seed, shuffle_word_pos) = shuffle_state(self.trainer.shuffle_rng());
        CheckpointMeta {
            update: self.trainer.updates,
            global_step: self.collector.global_step,
            episodes: self.collector.episodes,
            rolling_return: self.collector.rolling_return(),
            best_return: self.best,
            recent_returns: self.collector.recent_returns().copied().collect(),
            adam_steps_trunk: self.trainer.agent.net.trunk.step_count(),
            adam_steps_location: self.trainer.agent.net.location.step_count(),
            shuffle_seed,
            shuffle_word_pos,
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save_training(path, &self.digest, &self.trainer, &self.meta())
    }

    /// Writes `diagnostics.json` describing a non-finite failure.
    fn dump_diagnostics(&self, err: &GbacError, last: Option<&MetricsRow>) -> Result<PathBuf> {
        let net = &self.trainer.agent.net;
        let mut tensors = Vec::new();
        for ps in [&net.trunk, &net.location] {
            for id in ps.ids() {
                let (p, g) = (ps.get(id), ps.grad(id));
                tensors.push(serde_json::json!({
                    "name": ps.name(id),
                    "param_norm": p.sum_sq().sqrt(),
                    "param_finite": p.all_finite(),
                    "grad_norm": g.sum_sq().sqrt(),
                    "grad_finite": g.all_finite(),
                }));
            }
        }
        let doc = serde_json::json!({
            "error": err.to_string(),
            "update": self.trainer.updates,
            "global_step": self.collector.global_step,
            "rolling_return": self.collector.rolling_return(),
            "lr_action": self.trainer.opt_trunk.lr,
            "lr_loc": self.trainer.opt_loc.lr,
            "last_metrics": last.map(|r| r.to_csv()),
            "tensors": tensors,
        });
        let path = self.dir.join("diagnostics.json");
        fs::write(&path, serde_json::to_vec_pretty(&doc)?)?;
        Ok(path)
    }
}

/// Keeps the header and the first `rows` data rows of an existing metrics file.
fn truncate_metrics(path: &Path, rows: u64) -> Result<File> {
    let text = fs::read_to_string(path).unwrap_or_default();
    let mut lines = text.lines();
    let mut out = String::new();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => out.push_str(h),
        _ => out.push_str(METRICS_HEADER),
    }
    out.push('\n');
    for l in lines.take(rows as usize) {
        out.push_str(l);
        out.push('\n');
    }
    fs::write(path, &out)?;
    Ok(fs::OpenOptions::new().append(true).open(path)?)
}

/// Runs PPO training as configured, writing everything under `cfg.output_dir`.
pub fn train(cfg: &RunConfig, opts: &TrainOptions) -> Result<TrainSummary> {
    cfg.validate()?;
    let dir = cfg.output_dir.as_path();
    let envs = open_envs(cfg)?;
    fs::create_dir_all(ckpt_dir(dir))?;
    fs::write(dir.join("config.json"), cfg.to_json())?;

    let agent = Agent::new(&cfg.arch, &cfg.glimpse, cfg.seed)?;
    let mut trainer = Trainer::new(agent, cfg.ppo.clone(), cfg.seed, cfg.random_loc)?;
    let meta = match &opts.resume {
        Some(path) => Some(checkpoint::load(path, cfg)?.restore_into(&mut trainer)?),
        None => None,
    };
    let start_step = meta.as_ref().map_or(0, |m| m.global_step);
    let mode = if cfg.random_loc { ActMode::RandomLoc } else { ActMode::Sample };
    let mut collector = Collector::new(
        envs,
        &trainer.agent,
        cfg.seed.wrapping_add(start_step),
        mode,
        cfg.env.clip_rewards,
    )?;
    let metrics_path = dir.join("metrics.csv");
    let metrics_file = match &meta {
        Some(m) => {
            collector.global_step = m.global_step;
            collector.episodes = m.episodes;
            collector.set_recent_returns(m.recent_returns.iter().copied());
            info!("resuming at update {} (step {})", m.update, m.global_step);
            truncate_metrics(&metrics_path, m.update)?
        }
        None => {
            let mut f = File::create(&metrics_path)?;
            writeln!(f, "{METRICS_HEADER}")?;
            f
        }
    };
    let mut metrics = BufWriter::new(metrics_file);
    let mut run = Run {
        dir,
        digest: cfg.digest(),
        best: meta.as_ref().and_then(|m| m.best_return),
        trainer,
        collector,
    };

    let p = &cfg.ppo;
    let mut buf = RolloutBuffer::new(
        p.num_steps,
        p.num_envs,
        p.segment_len(),
        cfg.glimpse.pixel_budget(),
        cfg.arch.lstm,
    );
    let clock = Instant::now();
    let mut last_row: Option<MetricsRow> = None;
    let mut interrupted = false;
    while run.collector.global_step < p.total_timesteps {
        let update_start = run.collector.global_step;
        let stats: Result<UpdateStats> = run
            .collector
            .collect(&run.trainer.agent, &mut buf, p.gamma, p.gae_lambda)
            .and_then(|_| run.trainer.update(&buf, update_start));
        let stats = match stats {
            Ok(s) => s,
            Err(e @ GbacError::NonFinite { .. }) | Err(e @ GbacError::Numerical(_)) => {
                metrics.flush()?;
                let path = run.dump_diagnostics(&e, last_row.as_ref())?;
                warn!("training diverged; diagnostics in {}", path.display());
                return Err(match e {
                    GbacError::Numerical(detail) => GbacError::NonFinite {
                        component: detail,
                        update: run.trainer.updates,
                    },
                    other => other,
                });
            }
            Err(e) => return Err(e),
        };
        let sps = if opts.deterministic {
            0.0
        } else {
            (run.collector.global_step - start_step) as f64 / clock.elapsed().as_secs_f64().max(1e-9)
        };
        let row = MetricsRow {
            global_step: run.collector.global_step,
            episodic_return_mean_100: run.collector.rolling_return(),
            stats,
            sps,
        };
        writeln!(metrics, "{}", row.to_csv())?;
        metrics.flush()?;
        last_row = Some(row);
        let update = run.trainer.updates;
        if let Some(r) = row.episodic_return_mean_100 {
            if run.best.is_none_or(|b| r > b) {
                run.best = Some(r);
                run.save(&best_checkpoint(dir))?;
            }
        }
        if cfg.checkpoint_every > 0 && update % cfg.checkpoint_every == 0 {
            run.save(&periodic_checkpoint(dir, update))?;
        }
        if update % 10 == 0 {
            info!(
                "update {update} step {} return {:?} entropy {:.3}",
                row.global_step, row.episodic_return_mean_100, row.stats.components.entropy
            );
        }
        if opts.stop.as_ref().is_some_and(|s| s.load(Ordering::SeqCst)) {
            interrupted = true;
            warn!("interrupted at update {update}; writing final checkpoint");
            break;
        }
    }
    let final_path = final_checkpoint(dir);
    run.save(&final_path)?;
    Ok(TrainSummary {
        run_dir: dir.to_path_buf(),
        updates: run.trainer.updates,
        global_step: run.collector.global_step,
        episodes: run.collector.episodes,
        rolling_return: run.collector.rolling_return(),
        best_return: run.best,
        interrupted,
        final_checkpoint: final_path,
    })
}
