//! Shared helpers for integration tests: a brute-force decoding oracle,
//! structural checks on decoder output and random score tables.
#![allow(dead_code)]

use std::cmp::Ordering;

use rand::Rng;
use typespan::{enumerate_spans, DecodeConfig, DecodeMode, EntityMention, ScoreTable};

fn overlap(a: &EntityMention, b: &EntityMention) -> bool {
    a.start <= b.end && b.start <= a.end
}

fn nested(a: &EntityMention, b: &EntityMention) -> bool {
    (a.start <= b.start && b.end <= a.end) || (b.start <= a.start && a.end <= b.end)
}

fn same_span(a: &EntityMention, b: &EntityMention) -> bool {
    a.start == b.start && a.end == b.end
}

fn compatible(a: &EntityMention, b: &EntityMention, cfg: &DecodeConfig) -> bool {
    if same_span(a, b) {
        return cfg.multi_label;
    }
    match cfg.mode {
        DecodeMode::Flat => !overlap(a, b),
        DecodeMode::Nested => !overlap(a, b) || nested(a, b),
    }
}

/// Sorts every candidate above threshold (score desc, then start, end,
/// label asc) and keeps each one compatible with everything kept so far.
pub fn oracle_decode(table: &ScoreTable, cfg: &DecodeConfig) -> Vec<EntityMention> {
    let m = table.types.len();
    let mut cands = Vec::new();
    for (s, span) in table.spans.iter().enumerate() {
        for (t, ty) in table.types.iter().enumerate() {
            let p = table.probs[s * m + t];
            if p > cfg.threshold {
                cands.push(EntityMention::new(span.start, span.end, ty.clone(), p));
            }
        }
    }
    cands.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.start.cmp(&b.start))
            .then(a.end.cmp(&b.end))
            .then(a.label.cmp(&b.label))
    });
    let mut kept: Vec<EntityMention> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| compatible(k, &c, cfg)) {
            kept.push(c);
        }
    }
    kept.sort_by(|a, b| (a.start, a.end, &a.label).cmp(&(b.start, b.end, &b.label)));
    kept
}

/// Disjointness or proper nesting, and every score above threshold.
pub fn structurally_valid(out: &[EntityMention], cfg: &DecodeConfig) -> bool {
    out.iter().all(|x| x.score > cfg.threshold)
        && out
            .iter()
            .enumerate()
            .all(|(i, a)| out[i + 1..].iter().all(|b| compatible(a, b, cfg)))
}

/// Table with uniform probabilities; `levels > 0` quantizes them to force ties.
pub fn random_table<R: Rng>(rng: &mut R, n: usize, k: usize, m: usize, levels: u32) -> ScoreTable {
    let spans = enumerate_spans(n, k);
    let probs = (0..spans.len() * m)
        .map(|_| {
            if levels > 0 {
                (rng.random_range(0..levels) as f64 + 0.5) / levels as f64
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    ScoreTable {
        num_words: n,
        max_width: k,
        types: (0..m).map(|t| format!("t{t}")).collect(),
        spans,
        probs,
        logits: None,
    }
}
