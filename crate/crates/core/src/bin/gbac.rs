use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use log::{info, warn};

use gbac::agent::ActMode;
use gbac::bridge::{self, BridgeClient};
use gbac::envs::{make_env, Env};
use gbac::glimpse::{GlimpseConfig, Loc};
use gbac::run::{self, pgm, EvalOptions, Heatmap, RunConfig, TrainOptions};
use gbac::{GbacError, Result};

#[derive(Parser)]
#[command(name = "gbac", version, about = "Glimpse-based actor-critic: train, evaluate and inspect agents")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an agent from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Write 0 for steps/second so identical seeds give identical files.
        #[arg(long)]
        deterministic: bool,
        /// Continue from a checkpoint manifest of this run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint and print a JSON report.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Run config; defaults to config.json of the checkpoint's run directory.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "greedy")]
        mode: ActMode,
        /// Per-step CSV trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Turn an eval trace into a glimpse-center heatmap (`<out>.pgm`, `<out>.csv`).
    Heatmap {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        h: usize,
        #[arg(long)]
        w: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a preset run config as JSON.
    Preset {
        /// atari_like, carracing_like or desk
        name: String,
        #[arg(long)]
        env: String,
        /// Action count, required for environments that are not built in.
        #[arg(long)]
        actions: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Dump a frame of a built-in env and the glimpse at a location as PGM files.
    Glimpse {
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random steps taken before the frame is captured.
        #[arg(long, default_value_t = 0)]
        steps: u64,
        /// Glimpse center as `x,y` in [-1, 1].
        #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
        loc: String,
        #[arg(long, default_value_t = 2)]
        patches: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        /// Writes `<out>_frame.pgm` and `<out>_glimpse.pgm`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a built-in env over the bridge protocol (stdio, or TCP with --listen).
    Serve {
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        listen: Option<String>,
    },
    /// Soak-test a bridge server and print a JSON report.
    BridgeCheck {
        #[arg(long, conflicts_with = "bridge_addr", required_unless_present = "bridge_addr")]
        bridge_cmd: Option<String>,
        #[arg(long)]
        bridge_addr: Option<String>,
        #[arg(long, default_value_t = 1000)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-request timeout in seconds.
        #[arg(long, default_value_t = 30.0)]
        timeout: f64,
    },
}

fn exit_code(e: &GbacError) -> u8 {
    match e {
        GbacError::Config(_) | GbacError::DigestMismatch { .. } => 1,
        GbacError::NonFinite { .. } | GbacError::Numerical(_) => 3,
        GbacError::Env { .. } | GbacError::Protocol(_) | GbacError::Connection(_) | GbacError::Frame(_) => 4,
        GbacError::Checkpoint(_) | GbacError::Io(_) | GbacError::Json(_) => 5,
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

/// `<run>/ckpt/x.json` -> `<run>/config.json`.
fn run_config_of(ckpt: &Path) -> Result<PathBuf> {
    ckpt.parent()
        .and_then(Path::parent)
        .map(|run| run.join("config.json"))
        .ok_or_else(|| GbacError::Config(format!("cannot locate the run config of {}; pass --config", ckpt.display())))
}

fn parse_loc(s: &str) -> Result<Loc> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || GbacError::Config(format!("--loc expects x,y, got {s:?}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let x: f32 = parts[0].trim().parse().map_err(|_| bad())?;
    let y: f32 = parts[1].trim().parse().map_err(|_| bad())?;
    Ok(Loc::new(x, y))
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train {
            config,
            seed,
            output_dir,
            deterministic,
            resume,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            let handler = ctrlc::set_handler(move || {
                if flag.swap(true, Ordering::SeqCst) {
                    std::process::exit(130);
                }
            });
            if let Err(e) = handler {
                warn!("cannot install Ctrl-C handler: {e}");
            }
            let summary = run::train(
                &cfg,
                &TrainOptions {
                    deterministic,
                    resume,
                    stop: Some(stop),
                },
            )?;
            print_json(&summary)
        }
        Cmd::Eval {
            ckpt,
            config,
            episodes,
            mode,
            trace,
            seed,
            report,
        } => {
            let config = match config {
                Some(c) => c,
                None => run_config_of(&ckpt)?,
            };
            let cfg = RunConfig::load(&config)?;
            let opts = EvalOptions {
                episodes: episodes.unwrap_or(cfg.eval_episodes),
                mode,
                trace,
                seed,
            };
            let r = run::evaluate_checkpoint(&ckpt, &cfg, &opts)?;
            if let Some(path) = report {
                fs::write(path, serde_json::to_vec_pretty(&r)?)?;
            }
            print_json(&r)
        }
        Cmd::Heatmap { trace, h, w, out } => {
            let text = fs::read_to_string(&trace)?;
            let (records, rejected) = run::parse_trace(&text)?;
            for r in &rejected {
                warn!("{}:{}: rejected: {}", trace.display(), r.line, r.reason);
            }
            let map = Heatmap::from_records(h, w, &records)?;
            let (pgm_path, csv_path) = (with_suffix(&out, ".pgm"), with_suffix(&out, ".csv"));
            fs::write(&pgm_path, map.to_pgm())?;
            fs::write(&csv_path, map.to_sparse_csv())?;
            print_json(&serde_json::json!({
                "total": map.total(),
                "pgm": pgm_path,
                "csv": csv_path,
                "rejected": rejected,
            }))
        }
        Cmd::Preset {
            name,
            env,
            actions,
            output_dir,
        } => {
            let mut cfg = RunConfig::preset(&name, &env, actions)?;
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            println!("{}", cfg.to_json());
            Ok(())
        }
        Cmd::Glimpse {
            env,
            seed,
            steps,
            loc,
            patches,
            size,
            out,
        } => {
            let loc = parse_loc(&loc)?;
            let cfg = GlimpseConfig::new(patches, size);
            let mut e = make_env(&env, seed)?;
            cfg.validate_for(e.spec().frame_h, e.spec().frame_w)?;
            let mut frame = e.reset(Some(seed))?;
            let actions = e.spec().action_count;
            for i in 0..steps {
                let s = e.step((seed.wrapping_add(i) % actions as u64) as usize)?;
                frame = if s.done { e.reset(None)? } else { s.frame };
            }
            let (fp, gp) = (with_suffix(&out, "_frame.pgm"), with_suffix(&out, "_glimpse.pgm"));
            pgm::write_frame(&fp, &frame)?;
            let used = pgm::write_glimpse(&gp, &frame, loc, &cfg)?;
            print_json(&serde_json::json!({
                "frame": fp,
                "glimpse": gp,
                "center_used": [used.x, used.y],
            }))
        }
        Cmd::Serve { env, seed, listen } => match listen {
            Some(addr) => {
                let listener = TcpListener::bind(&addr)?;
                info!("serving {env} on {}", listener.local_addr()?);
                let mut n = 0u64;
                bridge::serve_tcp(
                    &listener,
                    || {
                        n += 1;
                        make_env(&env, seed.wrapping_add(n - 1))
                    },
                    None,
                )
            }
            None => {
                let mut e: Box<dyn Env> = make_env(&env, seed)?;
                let served = bridge::serve(e.as_mut(), &mut io::stdin().lock(), &mut io::stdout().lock())?;
                log::debug!("served {served} requests");
                Ok(())
            }
        },
        Cmd::BridgeCheck {
            bridge_cmd,
            bridge_addr,
            steps,
            seed,
            timeout,
        } => {
            if !(timeout > 0.0 && timeout.is_finite()) {
                return Err(GbacError::Config(format!("--timeout must be positive, got {timeout}")));
            }
            let timeout = Duration::from_secs_f64(timeout);
            let mut client = match (bridge_cmd, bridge_addr) {
                (Some(cmd), _) => BridgeClient::spawn(&cmd, timeout)?,
                (None, Some(addr)) => BridgeClient::connect(&addr, timeout)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let report = bridge::soak(&mut client, steps, seed)?;
            print_json(&report)?;
            if report.desyncs > 0 {
                return Err(GbacError::Protocol(format!("{} step-counter desyncs", report.desyncs)));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("GBAC_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
