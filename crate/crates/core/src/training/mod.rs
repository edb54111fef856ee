//! Multi-task loss, optimizer, schedule, augmentation, splitting and the
//! training / experiment loops.

pub mod augment;
pub mod early_stop;
pub mod experiment;
pub mod loss;
pub mod norm;
pub mod optim;
pub mod split;
pub mod trainer;

pub use augment::{augment, pitch_shift, time_stretch, AugmentConfig};
pub use early_stop::{trace_early_stopping, EarlyStopping, StopDecision};
pub use experiment::{run_experiment, AblationRow, ExperimentKind, ExperimentOutcome, ExperimentReport, ExperimentRequest, LogoRow};
pub use loss::{multitask_loss, sample_loss, LossComponents, LossWeights, Targets};
pub use norm::{NormMode, NormStats};
pub use optim::{adamw_step, cosine_lr, AdamWHyper, AdamWState};
pub use split::{stratified_split, SplitIndices};
pub use trainer::{
    evaluate_clips, fit_norm, history_csv, predict_clips, thread_pool, train, Clip, ClipSource, Featurizer, HistoryRow,
    TrainConfig, TrainOutcome, TrainRequest,
};
