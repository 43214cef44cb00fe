//! Run orchestration behind the `gbac` binary: configs, training, evaluation
//! and glimpse heatmaps.

pub mod checkpoint;
mod config;
mod eval;
pub mod heatmap;
pub mod pgm;
mod train;

pub use config::{EnvConfig, RunConfig, PRESETS};
pub use eval::{evaluate, evaluate_checkpoint, EvalOptions, EvalReport};
pub use heatmap::{parse_trace, Heatmap, Rejected, TraceRecord, TRACE_HEADER};
pub use train::{
    best_checkpoint, ckpt_dir, final_checkpoint, open_envs, periodic_checkpoint, train, TrainOptions, TrainSummary,
};
