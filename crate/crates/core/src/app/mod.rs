//! Data files, synthetic data, checkpoints and the pieces the command line
//! is built from.

mod checkpoint;
mod config;
mod dataset;
mod gradcheck;
mod jsonl;
mod scores;
mod synth;

pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes, Lineage, FORMAT_VERSION, MAGIC};
pub use config::{load_run_config, load_synth_spec, RunConfig};
pub use dataset::{load_dataset, save_dataset, DatasetRecord};
pub use gradcheck::{model_gradcheck, ModelGradCheck};
pub use jsonl::{read_jsonl, write_json, write_jsonl};
pub use scores::{load_score_tables, save_score_tables};
pub use synth::{synth_dataset, SlotType, SynthSpec};
