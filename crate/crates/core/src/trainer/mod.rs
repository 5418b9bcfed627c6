//! Supervision, negative type sampling, loss and the optimization loop.

mod fit;
mod labels;
mod loss;
mod optim;
mod sampling;

pub use fit::{
    build_vocab, dataset_types, evaluate, example_gradients, fit, predict_all, train_model, EvalSummary, FitResult,
    TraceRecord, TrainConfig,
};
pub use labels::{build_labels, LabelGrid, TrainingExample};
pub use loss::{bce_loss, Reduction};
pub use optim::{adamw_step, lr_at, GroupRates, OptimConfig, OptimState};
pub use sampling::{negative_target, sample_negative_types, shuffle_and_drop};
