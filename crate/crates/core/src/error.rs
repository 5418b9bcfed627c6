use std::fmt;

use thiserror::Error;

/// Module that raised an error; shown as a prefix in every message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Module {
    Numerics,
    Tokenizer,
    Prompt,
    Encoder,
    Matcher,
    Trainer,
    Decoder,
    Evaluation,
    App,
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Module::Numerics => "numerics",
            Module::Tokenizer => "tokenizer",
            Module::Prompt => "prompt",
            Module::Encoder => "encoder",
            Module::Matcher => "matcher",
            Module::Trainer => "trainer",
            Module::Decoder => "decoder",
            Module::Evaluation => "evaluation",
            Module::App => "app",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("[{module}] dimension error: {msg}")]
    Dimension { module: Module, msg: String },
    #[error("[{module}] contract error: {msg}")]
    Contract { module: Module, msg: String },
    #[error("[{module}] configuration error: {msg}")]
    Config { module: Module, msg: String },
    #[error("[{module}] sizing error: {msg}")]
    Sizing { module: Module, msg: String },
    #[error("[{module}] non-finite value: {msg}")]
    NonFinite { module: Module, msg: String },
    #[error("[app] {path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("[app] format error: {0}")]
    Format(String),
    #[error("[app] io error: {0}")]
    Io(#[from] std::io::Error),
    /// Failure tied to one dataset record.
    #[error("example `{id}`: {source}")]
    Example { id: String, source: Box<Error> },
}

impl Error {
    pub fn dimension(module: Module, msg: impl Into<String>) -> Self {
        Error::Dimension { module, msg: msg.into() }
    }

    pub fn contract(module: Module, msg: impl Into<String>) -> Self {
        Error::Contract { module, msg: msg.into() }
    }

    pub fn config(module: Module, msg: impl Into<String>) -> Self {
        Error::Config { module, msg: msg.into() }
    }

    pub fn sizing(module: Module, msg: impl Into<String>) -> Self {
        Error::Sizing { module, msg: msg.into() }
    }

    pub fn non_finite(module: Module, msg: impl Into<String>) -> Self {
        Error::NonFinite { module, msg: msg.into() }
    }

    pub fn for_example(self, id: impl Into<String>) -> Self {
        Error::Example { id: id.into(), source: Box::new(self) }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
