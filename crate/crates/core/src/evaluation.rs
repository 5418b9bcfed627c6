//! Exact-match micro precision / recall / F1.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::decoder::EntityMention;
use crate::error::{Error, Module, Result};
use crate::prompt::canonical_type;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Counts {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { tp, fp, fn_, precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_type: BTreeMap<String, Counts>,
}

type Key = (usize, usize, String);

fn key_set(mentions: &[EntityMention]) -> HashSet<Key> {
    mentions
        .iter()
        .map(|m| (m.start, m.end, canonical_type(&m.label)))
        .collect()
}

/// Scores aligned per-sentence predictions against gold mentions.
///
/// A prediction counts iff a gold mention in the same sentence has the same
/// start, end and (normalized) type. Exact duplicates are collapsed first;
/// scores are ignored.
pub fn score(pred: &[Vec<EntityMention>], gold: &[Vec<EntityMention>]) -> Result<EvalReport> {
    if pred.len() != gold.len() {
        return Err(Error::contract(
            Module::Evaluation,
            format!("{} predicted sentences vs {} gold sentences", pred.len(), gold.len()),
        ));
    }
    let mut per_type: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for (p, g) in pred.iter().zip(gold) {
        let (p, g) = (key_set(p), key_set(g));
        for k in &p {
            let e = per_type.entry(k.2.clone()).or_default();
            if g.contains(k) {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
        for k in g.difference(&p) {
            per_type.entry(k.2.clone()).or_default().2 += 1;
        }
    }
    let (tp, fp, fn_) = per_type
        .values()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    let micro = Counts::from_counts(tp, fp, fn_);
    Ok(EvalReport {
        tp,
        fp,
        fn_,
        precision: micro.precision,
        recall: micro.recall,
        f1: micro.f1,
        per_type: per_type
            .into_iter()
            .map(|(t, (tp, fp, fn_))| (t, Counts::from_counts(tp, fp, fn_)))
            .collect(),
    })
}
