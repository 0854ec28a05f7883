//! Dataset handling, run configuration, the three training stages, the
//! cross-entropy baseline and the command-line driver.
//!
//! Every random draw comes from a ChaCha8 stream derived from the run seed
//! and a fixed purpose tag, so runs that share a seed share their data
//! order and initialization.

mod cli;
mod config;
mod dataset;
mod train;

pub use cli::{datasets, run_cli, Cli, Command, Common};
pub use config::{LrSchedule, RunConfig};
pub use dataset::{load_dataset, load_points, save_dataset, synth_dataset, synth_splits, Dataset, Split, SYNTH_CLASSES};
pub use train::{
    argmax_rows, cmpg_targets, load_cmpg, load_frozen, load_student, load_teacher, metrics_csv, new_cmpg_params,
    project_dataset, stage1_train_image, stage2_train_cmpg, stage3_train_student, train_baseline, train_cmpg,
    train_image, train_student, EpochMetrics, Guidance, Normalization, StageArtifacts, StudentBatch, StudentNet,
    StudentObjective, TeacherFeatures,
    TeacherNet, METRICS_HEADER,
};

pub use crate::diffcore::{load_checkpoint, save_checkpoint};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    TeacherInit,
    TeacherShuffle,
    CmpgInit,
    CmpgShuffle,
    FpsStart,
    StudentInit,
    StudentShuffle,
    Augment,
    Subsample,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
