//! Two-phase training, the grasp loss, rectangle-metric evaluation and the
//! labelled-ratio sweep.

mod config;
mod eval;
mod loss;
mod sweep;
mod two_phase;

pub use config::TrainConfig;
pub use eval::{evaluate, score_grasp, score_maps, EvalResult, SceneRecord};
pub use loss::{grasp_loss, grasp_loss_raw};
pub use sweep::{dedup_ratios, ratio_sweep, test_split, SweepMode, SweepRow, SweepTable};
pub use two_phase::{
    train_phase_one, train_supervised_baseline, train_two_phase, train_two_phase_with, HeadEpochLog, TrainReport,
};
