use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Module, Result};
use crate::trainer::TrainConfig;

use super::synth::SynthSpec;

/// Top-level TOML file for `train`. Without a `train` path the synthetic
/// generator described by `synth` supplies both splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub out: PathBuf,
    pub synth: SynthSpec,
    pub training: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train: None,
            dev: None,
            out: PathBuf::from("run"),
            synth: SynthSpec::default(),
            training: TrainConfig::default(),
        }
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    parse_toml(&fs::read_to_string(path)?, path)
}

/// Reads a generator spec from a bare spec file or from the `[synth]` table of a run config.
pub fn load_synth_spec(path: &Path) -> Result<SynthSpec> {
    let text = fs::read_to_string(path)?;
    let value: toml::Table = parse_toml(&text, path)?;
    match value.get("synth") {
        Some(t) => t.clone().try_into().map_err(|e| Error::config(Module::App, format!("{}: {e}", path.display()))),
        None => parse_toml(&text, path),
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::config(Module::App, format!("{}: {e}", path.display())))
}
