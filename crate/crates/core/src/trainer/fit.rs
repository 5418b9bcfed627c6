use std::collections::HashSet;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode, DecodeConfig, EntityMention};
use crate::encoder::Mode;
use crate::error::{Error, Module, Result};
use crate::evaluation::{score, EvalReport};
use crate::model::{forward, Model, ModelConfig};
use crate::numerics::Graph;
use crate::prompt::canonical_type;
use crate::tokenizer::Vocab;

use super::labels::{build_labels, TrainingExample};
use super::loss::{bce_loss, Reduction};
use super::optim::{adamw_step, lr_at, OptimConfig, OptimState};
use super::sampling::{sample_negative_types, shuffle_and_drop};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub steps: usize,
    pub batch_size: usize,
    /// Target fraction of negative types in each training prompt.
    pub neg_ratio: f64,
    /// Per-type drop probability after shuffling.
    pub drop_prob: f64,
    pub reduction: Reduction,
    /// Evaluate on the dev set every this many steps (0: only at the end).
    pub eval_every: usize,
    pub vocab_size: usize,
    pub vocab_min_freq: usize,
    pub decode: DecodeConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            optim: OptimConfig::default(),
            steps: 2000,
            batch_size: 8,
            neg_ratio: 0.5,
            drop_prob: 0.2,
            reduction: Reduction::Sum,
            eval_every: 0,
            vocab_size: 4000,
            vocab_min_freq: 1,
            decode: DecodeConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(Module::Trainer, msg));
        self.model.validate()?;
        self.optim.validate()?;
        self.decode.validate()?;
        if self.steps == 0 || self.batch_size == 0 {
            return bad("steps and batch size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.neg_ratio) {
            return bad(format!("negative ratio {} outside [0, 1)", self.neg_ratio));
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return bad(format!("drop probability {} outside [0, 1)", self.drop_prob));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&EvalReport> for EvalSummary {
    fn from(r: &EvalReport) -> Self {
        Self { precision: r.precision, recall: r.recall, f1: r.f1 }
    }
}

/// One line of the loss trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    /// Mean over the batch of the per-example loss.
    pub loss: f64,
    pub lr_backbone: f64,
    pub lr_head: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSummary>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: Model,
    pub trace: Vec<TraceRecord>,
    /// Gold spans skipped for exceeding the width cap, summed over steps.
    pub filtered_spans: usize,
}

/// Every distinct type in the given example sets, first appearance first.
pub fn dataset_types(sets: &[&[TrainingExample]]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for ex in sets.iter().flat_map(|s| s.iter()) {
        for t in ex.positive_types() {
            if seen.insert(canonical_type(&t)) {
                out.push(t);
            }
        }
    }
    out
}

/// Subword inventory over the training words and type names.
pub fn build_vocab(train: &[TrainingExample], config: &TrainConfig) -> Result<Vocab> {
    let mut corpus: Vec<Vec<String>> = train.iter().map(|e| e.words.clone()).collect();
    corpus.push(
        dataset_types(&[train])
            .iter()
            .flat_map(|t| t.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .collect(),
    );
    Vocab::build(&corpus, config.vocab_size, config.vocab_min_freq)
}

/// Eval-mode predictions for every example against a fixed type list.
pub fn predict_all(model: &Model, examples: &[TrainingExample], types: &[String], cfg: &DecodeConfig) -> Result<Vec<Vec<EntityMention>>> {
    examples
        .iter()
        .map(|ex| {
            let table = model.score_table(&ex.words, types).map_err(|e| e.for_example(&ex.id))?;
            Ok(decode(&table, cfg)?.mentions)
        })
        .collect()
}

pub fn evaluate(model: &Model, examples: &[TrainingExample], types: &[String], cfg: &DecodeConfig) -> Result<EvalReport> {
    let pred = predict_all(model, examples, types, cfg)?;
    let gold: Vec<Vec<EntityMention>> = examples.iter().map(|e| e.gold.clone()).collect();
    score(&pred, &gold)
}

fn example_rng(seed: u64, step: usize, idx: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(step as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(idx as u64).to_le_bytes());
    key[24..].copy_from_slice(b"example\0");
    ChaCha8Rng::from_seed(key)
}

/// Fixed-size batches drawn without replacement; a new permutation starts
/// when fewer than a full batch remain.
struct Batches {
    n: usize,
    size: usize,
    queue: Vec<usize>,
    rng: ChaCha8Rng,
}

impl Batches {
    fn new(n: usize, size: usize, seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[24..].copy_from_slice(b"batches\0");
        Self { n, size: size.min(n), queue: Vec::new(), rng: ChaCha8Rng::from_seed(key) }
    }

    fn next_batch(&mut self) -> Vec<usize> {
        if self.queue.len() < self.size {
            self.queue = (0..self.n).collect();
            self.queue.shuffle(&mut self.rng);
        }
        self.queue.split_off(self.queue.len() - self.size)
    }
}

/// Loss and parameter gradients for one example under a given type list.
/// Gold mentions whose type was dropped from the prompt are not supervised.
pub fn example_gradients(
    model: &Model,
    example: &TrainingExample,
    types: &[String],
    reduction: Reduction,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<Vec<f32>>, usize)> {
    let kept: HashSet<String> = types.iter().map(|t| canonical_type(t)).collect();
    let supervised = TrainingExample {
        id: example.id.clone(),
        words: example.words.clone(),
        gold: example.gold.iter().filter(|m| kept.contains(&canonical_type(&m.label))).cloned().collect(),
    };
    let prompt = model.prompt(types, &example.words)?;
    let mut g = Graph::<f32>::new();
    let bound = model.params.bind(&mut g);
    let out = forward(&mut g, &bound, &model.config, &prompt, Mode::Train, rng)?;
    let labels = build_labels(&supervised, &prompt.entity_types, &out.spans)?;
    let loss = bce_loss(&mut g, out.logits, &labels, reduction)?;
    g.backward(loss)?;
    let value = g.value(loss).item()? as f64;
    Ok((value, model.params.collect_grads(&g, &bound), labels.filtered))
}

/// Builds a vocabulary and model from `train`, then optimizes it.
pub fn fit(train: &[TrainingExample], dev: &[TrainingExample], config: &TrainConfig, seed: u64) -> Result<FitResult> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::contract(Module::Trainer, "training set is empty"));
    }
    let vocab = build_vocab(train, config)?;
    let model = Model::new(config.model.clone(), vocab, seed)?;
    train_model(model, train, dev, config, seed)
}

/// Optimizes an existing model. Deterministic given `seed`.
pub fn train_model(
    mut model: Model,
    train: &[TrainingExample],
    dev: &[TrainingExample],
    config: &TrainConfig,
    seed: u64,
) -> Result<FitResult> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::contract(Module::Trainer, "training set is empty"));
    }
    // fail fast: every example must form a valid prompt with its own types
    for ex in train {
        ex.validate()?;
        let mut types = ex.positive_types();
        if types.is_empty() {
            types.push("entity".into());
        }
        model.prompt(&types, &ex.words).map_err(|e| e.for_example(&ex.id))?;
    }
    let eval_types = dataset_types(&[train, dev]);
    let positives: Vec<Vec<String>> = train.iter().map(TrainingExample::positive_types).collect();

    let mut state = OptimState::new(&model.params, config.optim.clone(), config.steps)?;
    let mut batches = Batches::new(train.len(), config.batch_size, seed);
    let mut trace = Vec::with_capacity(config.steps);
    let mut filtered_spans = 0;
    for step in 0..config.steps {
        let batch = batches.next_batch();
        let mut acc: Vec<Vec<f32>> = model.params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let mut loss_sum = 0.0;
        for (slot, &idx) in batch.iter().enumerate() {
            let ex = &train[idx];
            let mut rng = example_rng(seed, step, slot);
            let pool: Vec<String> = batch
                .iter()
                .filter(|&&j| j != idx)
                .flat_map(|&j| positives[j].iter().cloned())
                .collect();
            let types = sample_negative_types(&positives[idx], &pool, config.neg_ratio, config.model.max_types, &mut rng);
            if types.is_empty() {
                continue;
            }
            let types = shuffle_and_drop(&types, config.drop_prob, &mut rng);
            let (loss, grads, filtered) = example_gradients(&model, ex, &types, config.reduction, &mut rng)
                .map_err(|e| match e {
                    Error::Example { .. } => e,
                    e => e.for_example(&ex.id),
                })?;
            loss_sum += loss;
            filtered_spans += filtered;
            for (a, g) in acc.iter_mut().zip(&grads) {
                a.iter_mut().zip(g).for_each(|(a, &g)| *a += g);
            }
        }
        let inv = 1.0 / batch.len() as f32;
        acc.iter_mut().flatten().for_each(|a| *a *= inv);
        adamw_step(&mut model.params, &acc, &mut state)?;
        let rates = lr_at(state.step, &state)?;
        let mut record = TraceRecord {
            step: state.step,
            loss: loss_sum / batch.len() as f64,
            lr_backbone: rates.backbone,
            lr_head: rates.head,
            eval: None,
        };
        let last = step + 1 == config.steps;
        let periodic = config.eval_every > 0 && (step + 1) % config.eval_every == 0;
        if !dev.is_empty() && (last || periodic) {
            let report = evaluate(&model, dev, &eval_types, &config.decode)?;
            info!("step {}: loss {:.4}, dev f1 {:.4}", record.step, record.loss, report.f1);
            record.eval = Some(EvalSummary::from(&report));
        }
        trace.push(record);
    }
    Ok(FitResult { model, trace, filtered_spans })
}
