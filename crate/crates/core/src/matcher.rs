//! Entity and span embeddings and their sigmoid matching scores.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{dropout, Mode};
use crate::error::{Error, Module, Result};
use crate::numerics::{sigmoid, Bound, Graph, ParamStore, Real, Tensor, Var};

/// Default maximum span width in words.
pub const DEFAULT_MAX_WIDTH: usize = 12;

/// Inclusive word span `(start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpanIndex {
    pub start: usize,
    pub end: usize,
}

impl SpanIndex {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }
}

/// All spans of width ≤ `max_width`, ordered by start then end.
pub fn enumerate_spans(num_words: usize, max_width: usize) -> Vec<SpanIndex> {
    let k = max_width.min(num_words);
    let mut spans = Vec::with_capacity(span_count(num_words, max_width));
    for start in 0..num_words {
        for end in start..(start + k).min(num_words) {
            spans.push(SpanIndex { start, end });
        }
    }
    spans
}

/// `Σ_{w=1..min(K,N)} (N − w + 1)`.
pub fn span_count(num_words: usize, max_width: usize) -> usize {
    (1..=max_width.min(num_words)).map(|w| num_words - w + 1).sum()
}

/// Matching probabilities for one sentence, `|spans| × |types|`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub num_words: usize,
    pub max_width: usize,
    pub types: Vec<String>,
    pub spans: Vec<SpanIndex>,
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
}

/// Largest `f64` strictly below one; saturated sigmoids are held here so
/// every stored probability stays inside `(0, 1)`.
const PROB_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

pub fn prob_from_logit(logit: f64) -> f64 {
    sigmoid(logit).clamp(f64::MIN_POSITIVE, PROB_MAX)
}

impl ScoreTable {
    pub fn from_logits(
        num_words: usize,
        max_width: usize,
        types: Vec<String>,
        spans: Vec<SpanIndex>,
        logits: Vec<f64>,
    ) -> Result<Self> {
        if logits.len() != spans.len() * types.len() {
            return Err(Error::dimension(
                Module::Matcher,
                format!("{} logits for {} spans × {} types", logits.len(), spans.len(), types.len()),
            ));
        }
        let probs = logits.iter().map(|&x| prob_from_logit(x)).collect();
        Ok(Self { num_words, max_width, types, spans, probs, logits: Some(logits) })
    }

    pub fn prob(&self, span: usize, ty: usize) -> f64 {
        self.probs[span * self.types.len() + ty]
    }

    pub fn span_row(&self, span: SpanIndex) -> Option<usize> {
        self.spans.binary_search(&span).ok()
    }

    /// Checks shape, span enumeration and probability range.
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::contract(Module::Matcher, msg));
        if self.probs.len() != self.spans.len() * self.types.len() {
            return err(format!(
                "{} probabilities for {} spans × {} types",
                self.probs.len(),
                self.spans.len(),
                self.types.len()
            ));
        }
        if self.spans != enumerate_spans(self.num_words, self.max_width) {
            return err("span list is not the width-capped enumeration".into());
        }
        if let Some(p) = self.probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return err(format!("probability {p} outside (0, 1)"));
        }
        Ok(())
    }

    /// Appends the columns of `other` (same sentence, disjoint types).
    pub fn concat_types(mut self, other: ScoreTable) -> Result<Self> {
        if self.spans != other.spans {
            return Err(Error::contract(Module::Matcher, "score tables cover different spans"));
        }
        let (m1, m2) = (self.types.len(), other.types.len());
        let mut probs = Vec::with_capacity(self.spans.len() * (m1 + m2));
        let mut logits = match (&self.logits, &other.logits) {
            (Some(_), Some(_)) => Some(Vec::with_capacity(probs.capacity())),
            _ => None,
        };
        for s in 0..self.spans.len() {
            probs.extend_from_slice(&self.probs[s * m1..(s + 1) * m1]);
            probs.extend_from_slice(&other.probs[s * m2..(s + 1) * m2]);
            if let (Some(out), Some(a), Some(b)) = (&mut logits, &self.logits, &other.logits) {
                out.extend_from_slice(&a[s * m1..(s + 1) * m1]);
                out.extend_from_slice(&b[s * m2..(s + 1) * m2]);
            }
        }
        self.types.extend(other.types);
        self.probs = probs;
        self.logits = logits;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    /// Dropout after the hidden activation of both heads (training only).
    pub dropout: f64,
    pub max_width: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { dropout: 0.4, max_width: DEFAULT_MAX_WIDTH }
    }
}

pub fn init_heads<T: Real>(width: usize, rng: &mut ChaCha8Rng, store: &mut ParamStore<T>) {
    let d = width;
    // relu hidden layer: He init; output layer scaled so initial logits are O(1)
    let hidden = |rows: usize, rng: &mut ChaCha8Rng| Tensor::randn(&[rows, d], (2.0 / rows as f64).sqrt(), rng);
    let out = |rng: &mut ChaCha8Rng| Tensor::randn(&[d, d], (1.0 / d as f64).sqrt() / (d as f64).powf(0.25), rng);
    store.insert("entity_head.w1", hidden(d, rng));
    store.insert("entity_head.b1", Tensor::zeros(&[d]));
    store.insert("entity_head.w2", out(rng));
    store.insert("entity_head.b2", Tensor::zeros(&[d]));
    store.insert("span_head.w1", hidden(2 * d, rng));
    store.insert("span_head.b1", Tensor::zeros(&[d]));
    store.insert("span_head.w2", out(rng));
    store.insert("span_head.b2", Tensor::zeros(&[d]));
}

fn two_layer<T: Real>(
    g: &mut Graph<T>,
    params: &Bound,
    prefix: &str,
    x: Var,
    cfg: &HeadConfig,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    let p = |n: &str| params[format!("{prefix}.{n}").as_str()];
    let h = g.linear(x, p("w1"), p("b1"))?;
    let h = g.relu(h)?;
    let h = dropout(g, h, cfg.dropout, mode, rng)?;
    g.linear(h, p("w2"), p("b2"))
}

/// `q = FFN(p)`, row-wise.
pub fn entity_embed<T: Real>(
    g: &mut Graph<T>,
    params: &Bound,
    p: Var,
    cfg: &HeadConfig,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    let want = g.value(params["entity_head.w1"]).rows();
    if g.value(p).cols() != want {
        return Err(Error::dimension(
            Module::Matcher,
            format!("entity representations have width {}, head expects {want}", g.value(p).cols()),
        ));
    }
    two_layer(g, params, "entity_head", p, cfg, mode, rng)
}

/// `S_ij = FFN([h_i ; h_j])` for every span in one batched pass.
pub fn span_embed<T: Real>(
    g: &mut Graph<T>,
    params: &Bound,
    h: Var,
    spans: &[SpanIndex],
    cfg: &HeadConfig,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    let n = g.value(h).rows();
    if let Some(bad) = spans.iter().find(|s| s.end >= n || s.start > s.end) {
        return Err(Error::contract(
            Module::Matcher,
            format!("span ({}, {}) out of range for {n} words", bad.start, bad.end),
        ));
    }
    let starts: Vec<usize> = spans.iter().map(|s| s.start).collect();
    let ends: Vec<usize> = spans.iter().map(|s| s.end).collect();
    let hs = g.gather_rows(h, &starts)?;
    let he = g.gather_rows(h, &ends)?;
    let cat = g.concat_cols(&[hs, he])?;
    two_layer(g, params, "span_head", cat, cfg, mode, rng)
}

/// Logits `S · qᵀ`, shape `|spans| × M`; `sigmoid` of these is φ.
pub fn match_logits<T: Real>(g: &mut Graph<T>, s: Var, q: Var) -> Result<Var> {
    let (ds, dq) = (g.value(s).cols(), g.value(q).cols());
    if ds != dq {
        return Err(Error::dimension(
            Module::Matcher,
            format!("span width {ds} differs from entity width {dq}"),
        ));
    }
    let qt = g.transpose(q)?;
    g.matmul(s, qt)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn enumeration_examples() {
        let s = enumerate_spans(3, 2);
        let pairs: Vec<(usize, usize)> = s.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(pairs, [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)]);
        assert_eq!(enumerate_spans(20, 12).len(), 174);
        assert_eq!(span_count(20, 12), 174);
        assert_eq!(enumerate_spans(1, 7), [SpanIndex::new(0, 0)]);
    }

    fn heads(width: usize, seed: u64) -> ParamStore<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        init_heads(width, &mut rng, &mut store);
        store
    }

    #[test]
    fn zero_weights_give_zero_entity_embedding() {
        let mut store = heads(4, 0);
        for (_, t) in store.iter_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = g.constant(Tensor::randn(&[3, 4], 1.0, &mut rng));
        let q = entity_embed(&mut g, &b, p, &HeadConfig::default(), Mode::Eval, &mut rng).unwrap();
        assert!(g.value(q).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_layers_pass_positive_inputs() {
        let mut store = heads(3, 0);
        let eye = Tensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        store.insert("entity_head.w1", eye.clone());
        store.insert("entity_head.w2", eye);
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let input = Tensor::from_rows(&[vec![0.5, 1.0, 2.0], vec![3.0, 0.1, 0.2]]).unwrap();
        let p = g.constant(input.clone());
        let q = entity_embed(&mut g, &b, p, &HeadConfig::default(), Mode::Eval, &mut rng).unwrap();
        assert_eq!(g.value(q).data(), input.data());
    }

    #[test]
    fn batched_spans_equal_per_span_loop() {
        let store = heads(8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = Tensor::<f32>::randn(&[5, 8], 1.0, &mut rng);
        let store: ParamStore<f32> = store.cast();
        let spans = enumerate_spans(5, 3);
        let cfg = HeadConfig::default();

        let mut g = Graph::new();
        let b = store.bind_frozen(&mut g);
        let hv = g.constant(h.clone());
        let batched = span_embed(&mut g, &b, hv, &spans, &cfg, Mode::Eval, &mut rng).unwrap();
        let batched = g.value(batched).clone();

        for (row, span) in spans.iter().enumerate() {
            let mut g = Graph::new();
            let b = store.bind_frozen(&mut g);
            let hv = g.constant(h.clone());
            let one = span_embed(&mut g, &b, hv, &[*span], &cfg, Mode::Eval, &mut rng).unwrap();
            assert_eq!(g.value(one).data(), batched.row(row), "span {span:?}");
        }
    }

    #[test]
    fn span_input_is_endpoint_concatenation() {
        let store = heads(2, 0);
        let cfg = HeadConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::<f64>::new();
        let b = store.bind(&mut g);
        let h = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let spans = [SpanIndex::new(1, 1), SpanIndex::new(0, 1)];
        let s = span_embed(&mut g, &b, h, &spans, &cfg, Mode::Eval, &mut rng).unwrap();
        let manual = g.constant(Tensor::from_rows(&[vec![3.0, 4.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]]).unwrap());
        let m = two_layer(&mut g, &b, "span_head", manual, &cfg, Mode::Eval, &mut rng).unwrap();
        assert_eq!(g.value(s).data(), g.value(m).data());
    }

    #[test]
    fn out_of_range_span_is_rejected() {
        let store = heads(2, 0);
        let mut g = Graph::<f64>::new();
        let b = store.bind(&mut g);
        let h = g.constant(Tensor::zeros(&[2, 2]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = span_embed(&mut g, &b, h, &[SpanIndex::new(1, 2)], &HeadConfig::default(), Mode::Eval, &mut rng);
        assert!(matches!(r, Err(Error::Contract { .. })));
    }

    #[test]
    fn zero_spans_give_half_and_negation_complements() {
        let mut g = Graph::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = g.constant(Tensor::zeros(&[3, 4]));
        let q = g.constant(Tensor::randn(&[2, 4], 1.0, &mut rng));
        let l = match_logits(&mut g, s, q).unwrap();
        let p = g.sigmoid(l).unwrap();
        assert!(g.value(p).data().iter().all(|&x| x == 0.5));

        let s = g.constant(Tensor::randn(&[3, 4], 1.0, &mut rng));
        let qn = g.scale(q, -1.0).unwrap();
        let a = match_logits(&mut g, s, q).unwrap();
        let b = match_logits(&mut g, s, qn).unwrap();
        let (pa, pb) = (g.sigmoid(a).unwrap(), g.sigmoid(b).unwrap());
        for (x, y) in g.value(pa).data().iter().zip(g.value(pb).data()) {
            assert!((x + y - 1.0).abs() < 1e-12);
        }
        let bad = g.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(match_logits(&mut g, s, bad), Err(Error::Dimension { .. })));
    }

    #[test]
    fn probabilities_stay_open_interval() {
        assert!(prob_from_logit(80.0) < 1.0);
        assert!(prob_from_logit(-800.0) > 0.0);
        assert!(prob_from_logit(1.0) < prob_from_logit(1.5));
    }

    #[test]
    fn concat_types_unions_columns() {
        let spans = enumerate_spans(2, 2);
        let a = ScoreTable::from_logits(2, 2, vec!["a".into()], spans.clone(), vec![0.0, 1.0, 2.0]).unwrap();
        let b = ScoreTable::from_logits(2, 2, vec!["b".into(), "c".into()], spans, vec![3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let t = a.concat_types(b).unwrap();
        assert_eq!(t.types, ["a", "b", "c"]);
        assert_eq!(t.logits.as_ref().unwrap(), &[0.0, 3.0, 4.0, 1.0, 5.0, 6.0, 2.0, 7.0, 8.0]);
        t.validate().unwrap();
    }
}
