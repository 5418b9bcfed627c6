//! Small pre-norm bidirectional transformer over the unified prompt.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Module, Result};
use crate::numerics::{Bound, Graph, ParamStore, Real, Tensor, Var};
use crate::prompt::EncodedPrompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub depth: usize,
    pub width: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            width: 64,
            heads: 4,
            ffn_mult: 4,
            max_positions: 512,
            dropout: 0.1,
            layer_norm_eps: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(Module::Encoder, msg));
        if self.width == 0 || self.heads == 0 || self.depth == 0 || self.ffn_mult == 0 {
            return bad("depth, width, heads and ffn_mult must be positive".into());
        }
        if self.width % self.heads != 0 {
            return bad(format!("width {} is not divisible by {} heads", self.width, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.max_positions == 0 {
            return bad("max_positions must be positive".into());
        }
        Ok(())
    }

    pub fn head_width(&self) -> usize {
        self.width / self.heads
    }
}

pub const TOKEN_EMBED: &str = "embed.tokens";
pub const POSITION_EMBED: &str = "embed.positions";

fn layer(l: usize, name: &str) -> String {
    format!("layers.{l}.{name}")
}

/// Sine/cosine table used to initialize the (learned) position embeddings:
/// a fixed offset is a linear map of it, so "attend to the next token",
/// which a type marker needs in order to read its type, is easy to learn
/// from the start.
fn sinusoid_table<T: Real>(positions: usize, d: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(positions * d);
    for p in 0..positions {
        for i in 0..d {
            let freq = 10_000f64.powf(-((i / 2 * 2) as f64) / d as f64);
            let angle = p as f64 * freq;
            data.push(T::lit(if i % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::new(&[positions, d], data).expect("shape matches data")
}

/// Creates the encoder's parameters.
pub fn init_encoder<T: Real>(cfg: &EncoderConfig, vocab_size: usize, rng: &mut ChaCha8Rng, store: &mut ParamStore<T>) {
    let d = cfg.width;
    let f = d * cfg.ffn_mult;
    let w = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| Tensor::randn(&[rows, cols], (1.0 / rows as f64).sqrt(), rng);
    store.insert(TOKEN_EMBED, Tensor::randn(&[vocab_size, d], 1.0, rng));
    store.insert(POSITION_EMBED, sinusoid_table(cfg.max_positions, d));
    for l in 0..cfg.depth {
        store.insert(layer(l, "ln1.gamma"), Tensor::full(&[d], T::one()));
        store.insert(layer(l, "ln1.beta"), Tensor::zeros(&[d]));
        for p in ["wq", "wk", "wv", "wo"] {
            store.insert(layer(l, &format!("attn.{p}")), w(d, d, rng));
            store.insert(layer(l, &format!("attn.b{}", &p[1..])), Tensor::zeros(&[d]));
        }
        store.insert(layer(l, "ln2.gamma"), Tensor::full(&[d], T::one()));
        store.insert(layer(l, "ln2.beta"), Tensor::zeros(&[d]));
        store.insert(layer(l, "ffn.w1"), w(d, f, rng));
        store.insert(layer(l, "ffn.b1"), Tensor::zeros(&[f]));
        store.insert(layer(l, "ffn.w2"), w(f, d, rng));
        store.insert(layer(l, "ffn.b2"), Tensor::zeros(&[d]));
    }
    store.insert("final_ln.gamma", Tensor::full(&[d], T::one()));
    store.insert("final_ln.beta", Tensor::zeros(&[d]));
}

/// Inverted dropout as a recorded mask; identity in eval mode or when `p == 0`.
pub fn dropout<T: Real>(g: &mut Graph<T>, x: Var, p: f64, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Var> {
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x);
    }
    let keep = T::lit(1.0 / (1.0 - p));
    let mask = (0..g.value(x).len())
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect();
    g.mask(x, mask)
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// `[ENT]` marker representations, `M × D`.
    pub p: Var,
    /// First-subword word representations, `N × D`.
    pub h: Var,
    /// Attention weight matrices, per layer then per head.
    pub attention: Vec<Vec<Var>>,
}

/// Runs the full sequence through the encoder; every token attends to every
/// other token, type markers and words alike.
pub fn encode<T: Real>(
    g: &mut Graph<T>,
    params: &Bound,
    cfg: &EncoderConfig,
    prompt: &EncodedPrompt,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<EncoderOutput> {
    let len = prompt.len();
    if len > cfg.max_positions {
        return Err(Error::sizing(
            Module::Encoder,
            format!("sequence of {len} tokens exceeds {} positions", cfg.max_positions),
        ));
    }
    let vocab_size = g.value(params[TOKEN_EMBED]).rows();
    if let Some(&bad) = prompt.token_ids.iter().find(|&&id| id as usize >= vocab_size) {
        return Err(Error::contract(
            Module::Encoder,
            format!("token id {bad} out of range for vocabulary of {vocab_size}"),
        ));
    }
    let ids: Vec<usize> = prompt.token_ids.iter().map(|&i| i as usize).collect();
    let positions: Vec<usize> = (0..len).collect();
    let tok = g.gather_rows(params[TOKEN_EMBED], &ids)?;
    let pos = g.gather_rows(params[POSITION_EMBED], &positions)?;
    let mut x = g.add(tok, pos)?;
    x = dropout(g, x, cfg.dropout, mode, rng)?;

    let dh = cfg.head_width();
    let scale = T::lit(1.0 / (dh as f64).sqrt());
    let eps = cfg.layer_norm_eps;
    let mut attention = Vec::with_capacity(cfg.depth);
    for l in 0..cfg.depth {
        let p = |name: &str| params[layer(l, name).as_str()];
        let h = g.layer_norm(x, p("ln1.gamma"), p("ln1.beta"), eps)?;
        let q = g.linear(h, p("attn.wq"), p("attn.bq"))?;
        let k = g.linear(h, p("attn.wk"), p("attn.bk"))?;
        let v = g.linear(h, p("attn.wv"), p("attn.bv"))?;
        let mut heads = Vec::with_capacity(cfg.heads);
        let mut weights = Vec::with_capacity(cfg.heads);
        for head in 0..cfg.heads {
            let qh = g.slice_cols(q, head * dh, dh)?;
            let kh = g.slice_cols(k, head * dh, dh)?;
            let vh = g.slice_cols(v, head * dh, dh)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale)?;
            let a = g.softmax_rows(scores)?;
            weights.push(a);
            heads.push(g.matmul(a, vh)?);
        }
        attention.push(weights);
        let cat = g.concat_cols(&heads)?;
        let o = g.linear(cat, p("attn.wo"), p("attn.bo"))?;
        let o = dropout(g, o, cfg.dropout, mode, rng)?;
        x = g.add(x, o)?;

        let h = g.layer_norm(x, p("ln2.gamma"), p("ln2.beta"), eps)?;
        let f = g.linear(h, p("ffn.w1"), p("ffn.b1"))?;
        let f = g.gelu(f)?;
        let f = g.linear(f, p("ffn.w2"), p("ffn.b2"))?;
        let f = dropout(g, f, cfg.dropout, mode, rng)?;
        x = g.add(x, f)?;
    }
    let x = g.layer_norm(x, params["final_ln.gamma"], params["final_ln.beta"], eps)?;
    let p = g.gather_rows(x, &prompt.ent_positions)?;
    let h = g.gather_rows(x, &prompt.word_positions)?;
    Ok(EncoderOutput { p, h, attention })
}
