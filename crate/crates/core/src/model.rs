//! Model configuration, parameters and the full scoring forward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode, DecodeConfig, EntityMention};
use crate::encoder::{encode, init_encoder, EncoderConfig, Mode};
use crate::error::{Error, Module, Result};
use crate::matcher::{enumerate_spans, entity_embed, init_heads, match_logits, span_embed, HeadConfig, ScoreTable, SpanIndex};
use crate::numerics::{Bound, Graph, ParamStore, Real, Var};
use crate::prompt::{build_prompt, chunk_types, EncodedPrompt, DEFAULT_MAX_TYPES};
use crate::tokenizer::Vocab;

/// All learnable tensors, keyed by name.
pub type ModelParams = ParamStore<f32>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub heads: HeadConfig,
    /// Entity types per forward pass; larger type lists are chunked at
    /// inference time.
    pub max_types: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { encoder: EncoderConfig::default(), heads: HeadConfig::default(), max_types: DEFAULT_MAX_TYPES }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if !(0.0..1.0).contains(&self.heads.dropout) {
            return Err(Error::config(Module::Matcher, format!("head dropout {} outside [0, 1)", self.heads.dropout)));
        }
        if self.heads.max_width == 0 {
            return Err(Error::config(Module::Matcher, "max span width must be positive"));
        }
        if self.max_types == 0 {
            return Err(Error::config(Module::Prompt, "max_types must be positive"));
        }
        Ok(())
    }

    /// Same structure with every dropout disabled.
    pub fn without_dropout(&self) -> Self {
        let mut c = self.clone();
        c.encoder.dropout = 0.0;
        c.heads.dropout = 0.0;
        c
    }
}

/// Optimizer parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    /// Encoder: the part a pretrained backbone would provide.
    Backbone,
    /// Entity and span heads.
    Head,
}

pub fn param_group(name: &str) -> ParamGroup {
    if name.starts_with("entity_head.") || name.starts_with("span_head.") {
        ParamGroup::Head
    } else {
        ParamGroup::Backbone
    }
}

pub fn init_params<T: Real>(config: &ModelConfig, vocab_size: usize, seed: u64) -> ParamStore<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    init_encoder(&config.encoder, vocab_size, &mut rng, &mut store);
    init_heads(config.encoder.width, &mut rng, &mut store);
    store
}

/// Graph handles produced by one scoring pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub spans: Vec<SpanIndex>,
    pub p: Var,
    pub h: Var,
    pub q: Var,
    pub s: Var,
    /// `|spans| × M` matching logits.
    pub logits: Var,
}

/// prompt → encoder → heads → logits.
pub fn forward<T: Real>(
    g: &mut Graph<T>,
    params: &Bound,
    config: &ModelConfig,
    prompt: &EncodedPrompt,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<ForwardOutput> {
    let enc = encode(g, params, &config.encoder, prompt, mode, rng)?;
    let spans = enumerate_spans(prompt.num_words(), config.heads.max_width);
    let q = entity_embed(g, params, enc.p, &config.heads, mode, rng)?;
    let s = span_embed(g, params, enc.h, &spans, &config.heads, mode, rng)?;
    let logits = match_logits(g, s, q)?;
    Ok(ForwardOutput { spans, p: enc.p, h: enc.h, q, s, logits })
}

/// A vocabulary, a configuration and trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, vocab.len(), seed);
        Ok(Self { config, vocab, params })
    }

    pub fn prompt<S: AsRef<str>, W: AsRef<str>>(&self, types: &[S], words: &[W]) -> Result<EncodedPrompt> {
        build_prompt(types, words, &self.vocab, Some(self.config.max_types), self.config.encoder.max_positions)
    }

    /// Eval-mode score table over every span and every type; type lists
    /// longer than `max_types` are scored in chunks and the columns joined.
    pub fn score_table<S: AsRef<str>, W: AsRef<str>>(&self, words: &[W], types: &[S]) -> Result<ScoreTable> {
        let mut table: Option<ScoreTable> = None;
        for group in chunk_types(types, self.config.max_types) {
            let prompt = self.prompt(&group, words)?;
            let part = self.score_prompt(&prompt)?;
            table = Some(match table {
                None => part,
                Some(t) => t.concat_types(part)?,
            });
        }
        table.ok_or_else(|| Error::contract(Module::Prompt, "no entity types given"))
    }

    pub fn score_prompt(&self, prompt: &EncodedPrompt) -> Result<ScoreTable> {
        let mut g = Graph::<f32>::new();
        let bound = self.params.bind_frozen(&mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = forward(&mut g, &bound, &self.config, prompt, Mode::Eval, &mut rng)?;
        let logits = g.value(out.logits).data().iter().map(|&x| x as f64).collect();
        ScoreTable::from_logits(
            prompt.num_words(),
            self.config.heads.max_width,
            prompt.entity_types.clone(),
            out.spans,
            logits,
        )
    }

    pub fn predict<S: AsRef<str>, W: AsRef<str>>(
        &self,
        words: &[W],
        types: &[S],
        decode_config: &DecodeConfig,
    ) -> Result<Vec<EntityMention>> {
        let table = self.score_table(words, types)?;
        Ok(decode(&table, decode_config)?.mentions)
    }
}
