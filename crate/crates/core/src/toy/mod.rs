//! Desk-scale training harness: a synthetic sphere scene, a coarse logit field
//! upsampled trilinearly to the scene grid, and Adam on the configured loss.

mod adam;
mod experiment;
mod scene;
mod train;
mod upsample;

pub use adam::{Adam, AdamSettings};
pub use experiment::{
    median, run_experiment, ExperimentConfig, ExperimentTable, Row, Summary, SurfaceVsRegion,
    Variant,
};
pub use scene::{make_scene, SceneSpec, Sphere};
pub use train::{
    initial_logits, optimize, ClassMetrics, EpochRecord, LossSpec, Objective, TrainConfig,
    TrainReport, DEFAULT_COARSE_FACTOR, DEFAULT_LEARNING_RATE, DEFAULT_SEED, INIT_STD,
};
pub use upsample::{upsample_adjoint, upsample_trilinear, Upsampler};
