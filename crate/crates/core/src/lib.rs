//! Open-type named entity recognition by matching entity-type prompts to
//! span representations.
//!
//! A small bidirectional transformer reads `[ENT] type … [SEP] sentence`,
//! entity-type markers and words are projected into a shared space, and
//! every (span, type) pair is scored with a sigmoid of their dot product.
//! Training minimizes binary cross-entropy over all pairs; decoding picks
//! spans greedily under flat or nested constraints.

pub mod app;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod matcher;
pub mod model;
pub mod numerics;
pub mod prompt;
pub mod tokenizer;
pub mod trainer;

pub use decoder::{decode, DecodeConfig, DecodeMode, EntityMention};
pub use error::{Error, Module, Result};
pub use evaluation::{score, EvalReport};
pub use matcher::{enumerate_spans, ScoreTable, SpanIndex};
pub use model::{Model, ModelConfig, ModelParams};
pub use tokenizer::Vocab;
pub use trainer::{fit, TrainConfig, TrainingExample};
