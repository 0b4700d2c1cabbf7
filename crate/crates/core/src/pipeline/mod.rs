//! Four-stage assembly, training and synthetic data.

pub mod config;
pub mod data;
pub mod model;
pub mod optim;
pub mod synth;
pub mod train;

pub use config::{ClipMode, Combination, Feat, PipelineConfig, Pred, Seq, TrainRecipe, Trans, PRESETS};
pub use model::{describe, Model, PredStage, StageGraphs, INPUT_SHAPE};
pub use optim::{clip_gradients, grad_norm, AdaDelta};
pub use synth::{render, synth_sample, synth_toydata, Sample, SynthStyle};
pub use train::{
    evaluate, fine_tune, fraction_subset, fraction_sweep, make_batch, predict_all, predict_parallel, train, train_step, write_log,
    write_sweep, LogRow, TrainOutcome,
};
pub use data::{load_image, load_samples, save_image, write_samples};
