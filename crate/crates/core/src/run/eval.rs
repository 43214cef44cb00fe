use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agent::{ActMode, Agent};
use crate::error::Result;
use crate::run::heatmap::{TraceRecord, TRACE_HEADER};
use crate::run::{checkpoint, RunConfig};

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub episodes: usize,
    pub mode: ActMode,
    /// Per-step CSV trace destination.
    pub trace: Option<PathBuf>,
    /// Env and sampling seed; defaults to a stream disjoint from training.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: ActMode,
    pub episodes: usize,
    pub mean: Option<f64>,
    /// Population standard deviation of the returns.
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean_length: Option<f64>,
    pub returns: Vec<f64>,
    pub lengths: Vec<u64>,
    pub config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

fn summarise(values: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None, None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (Some(mean), Some(var.sqrt()), Some(min), Some(max))
}

/// Plays `opts.episodes` full episodes with `agent`.
pub fn evaluate(agent: &Agent, cfg: &RunConfig, opts: &EvalOptions) -> Result<EvalReport> {
    let seed = opts.seed.unwrap_or(cfg.seed.wrapping_add(1_000_003));
    let mut trace = match &opts.trace {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            writeln!(w, "{TRACE_HEADER}")?;
            Some(w)
        }
        None => None,
    };
    let mut returns = Vec::with_capacity(opts.episodes);
    let mut lengths = Vec::with_capacity(opts.episodes);
    if opts.episodes > 0 {
        let mut env = cfg.env.open(seed)?;
        cfg.check_env(env.spec())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1);
        for episode in 0..opts.episodes {
            let mut frame = env.reset((episode == 0).then_some(seed))?;
            let mut state = agent.initial_state();
            let (mut ret, mut t) = (0.0f64, 0u64);
            loop {
                let out = agent.act(&frame, &state, opts.mode, &mut rng)?;
                let step = env.step(out.action)?;
                if let Some(w) = trace.as_mut() {
                    let rec = TraceRecord {
                        episode: episode as u64,
                        t,
                        loc_x: out.next_loc.x as f64,
                        loc_y: out.next_loc.y as f64,
                        action: out.action,
                        reward: step.reward as f64,
                    };
                    writeln!(w, "{}", rec.to_csv())?;
                }
                ret += step.reward as f64;
                t += 1;
                if step.done {
                    break;
                }
                frame = step.frame;
                state = out.new_state;
            }
            returns.push(ret);
            lengths.push(t);
        }
    }
    if let Some(mut w) = trace {
        w.flush()?;
    }
    let (mean, std, min, max) = summarise(&returns);
    let lens: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    Ok(EvalReport {
        mode: opts.mode,
        episodes: returns.len(),
        mean,
        std,
        min,
        max,
        mean_length: summarise(&lens).0,
        returns,
        lengths,
        config_digest: cfg.digest(),
        checkpoint: None,
    })
}

/// Loads `ckpt` (refusing on digest mismatch) and evaluates it.
pub fn evaluate_checkpoint(ckpt: &Path, cfg: &RunConfig, opts: &EvalOptions) -> Result<EvalReport> {
    let loaded = checkpoint::load(ckpt, cfg)?;
    let mut report = evaluate(&loaded.agent, cfg, opts)?;
    report.checkpoint = Some(ckpt.to_path_buf());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_values() {
        let (mean, std, min, max) = summarise(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mean, Some(2.5));
        assert!((std.unwrap() - 1.25f64.sqrt()).abs() < 1e-12);
        assert_eq!((min, max), (Some(1.0), Some(4.0)));
        assert_eq!(summarise(&[]), (None, None, None, None));
    }
}
