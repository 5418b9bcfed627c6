//! Greedy span selection over a score table.
//!
//! Candidates above the threshold go into a max-priority queue ordered by
//! score (ties: start asc, end asc, type asc). The queue is a radix heap
//! over packed integer keys. Each popped candidate is kept
//! if it is compatible with everything kept so far:
//!
//! * flat: token-disjoint from every kept span;
//! * nested: disjoint from, or properly nested with, every kept span.
//!
//! A span already kept under one type rejects the same span under another
//! type unless `multi_label` is set.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use radix_heap::RadixHeapMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Module, Result};
use crate::matcher::ScoreTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub label: String,
    pub score: f64,
}

impl EntityMention {
    pub fn new(start: usize, end: usize, label: impl Into<String>, score: f64) -> Self {
        Self { start, end, label: label.into(), score }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Flat,
    Nested,
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(DecodeMode::Flat),
            "nested" => Ok(DecodeMode::Nested),
            other => Err(Error::config(Module::Decoder, format!("unknown decode mode `{other}`"))),
        }
    }
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeMode::Flat => "flat",
            DecodeMode::Nested => "nested",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    /// Candidates need a score strictly above this.
    pub threshold: f64,
    /// Allow one span to be kept under several types.
    pub multi_label: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { mode: DecodeMode::Flat, threshold: 0.5, multi_label: false }
    }
}

impl DecodeConfig {
    pub fn new(mode: DecodeMode, threshold: f64) -> Self {
        Self { mode, threshold, multi_label: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config(
                Module::Decoder,
                format!("threshold {} outside (0, 1)", self.threshold),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DecodeStats {
    pub candidates: usize,
    pub pops: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub mentions: Vec<EntityMention>,
    pub stats: DecodeStats,
}

/// Greatest priority first: higher score, then earlier start, earlier end,
/// smaller type.
pub fn priority_cmp(a: &EntityMention, b: &EntityMention) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then_with(|| b.start.cmp(&a.start))
        .then_with(|| b.end.cmp(&a.end))
        .then_with(|| b.label.cmp(&a.label))
}

const POS_BITS: u32 = 24;
const RANK_BITS: u32 = 16;
const POS_MAX: u64 = (1 << POS_BITS) - 1;
const RANK_MAX: u64 = (1 << RANK_BITS) - 1;

/// Heap entry packing the whole priority order into one integer: the score's
/// bits (order-preserving for positive floats) above the complemented
/// start, end and label rank, so a larger key always pops first.
fn pack(score: f64, start: usize, end: usize, rank: usize) -> Result<u128> {
    if start as u64 > POS_MAX || end as u64 > POS_MAX || rank as u64 > RANK_MAX {
        return Err(Error::sizing(
            Module::Decoder,
            format!("span ({start}, {end}) or label rank {rank} exceeds the decoder's index range"),
        ));
    }
    let low = ((POS_MAX - start as u64) << (POS_BITS + RANK_BITS))
        | ((POS_MAX - end as u64) << RANK_BITS)
        | (RANK_MAX - rank as u64);
    Ok(((score.to_bits() as u128) << 64) | low as u128)
}

/// Inverse of `pack`: (score, start, end, rank).
fn unpack(key: u128) -> (f64, usize, usize, usize) {
    let low = key as u64;
    let start = POS_MAX - (low >> (POS_BITS + RANK_BITS));
    let end = POS_MAX - ((low >> RANK_BITS) & POS_MAX);
    let rank = RANK_MAX - (low & RANK_MAX);
    (f64::from_bits((key >> 64) as u64), start as usize, end as usize, rank as usize)
}

/// Distinct labels in lexicographic order and each label's rank in it.
fn label_ranks<'a, S: AsRef<str>>(labels: &'a [S]) -> (Vec<&'a str>, Vec<usize>) {
    let mut sorted: Vec<&str> = labels.iter().map(|l| l.as_ref()).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let ranks = labels.iter().map(|l| sorted.binary_search(&l.as_ref()).expect("label present")).collect();
    (sorted, ranks)
}

/// Maximum over word positions with point raises (iterative segment tree).
struct RangeMax {
    size: usize,
    tree: Vec<i64>,
}

impl RangeMax {
    fn new(n: usize) -> Self {
        let size = n.max(1).next_power_of_two();
        Self { size, tree: vec![i64::MIN; 2 * size] }
    }

    fn raise(&mut self, pos: usize, v: i64) {
        let mut p = pos + self.size;
        self.tree[p] = self.tree[p].max(v);
        while p > 1 {
            p /= 2;
            self.tree[p] = self.tree[2 * p].max(self.tree[2 * p + 1]);
        }
    }

    /// Maximum over the inclusive range `[lo, hi]`.
    fn max(&self, lo: usize, hi: usize) -> i64 {
        let (mut l, mut r) = (lo + self.size, hi + self.size + 1);
        let mut m = i64::MIN;
        while l < r {
            if l & 1 == 1 {
                m = m.max(self.tree[l]);
                l += 1;
            }
            if r & 1 == 1 {
                r -= 1;
                m = m.max(self.tree[r]);
            }
            l /= 2;
            r /= 2;
        }
        m
    }
}

/// Accepted spans, indexed for the compatibility test of each mode.
enum Kept {
    /// Disjoint spans keyed by start.
    Flat(BTreeMap<usize, usize>),
    /// A laminar family. A candidate `[i, j]` crosses a kept span exactly
    /// when one starting in `(i, j]` ends after `j`, or one ending in
    /// `[i, j)` starts before `i`.
    Nested {
        exact: HashSet<(usize, usize)>,
        end_by_start: RangeMax,
        neg_start_by_end: RangeMax,
    },
}

impl Kept {
    fn new(mode: DecodeMode, positions: usize) -> Self {
        match mode {
            DecodeMode::Flat => Kept::Flat(BTreeMap::new()),
            DecodeMode::Nested => Kept::Nested {
                exact: HashSet::new(),
                end_by_start: RangeMax::new(positions),
                neg_start_by_end: RangeMax::new(positions),
            },
        }
    }

    fn insert(&mut self, start: usize, end: usize) {
        match self {
            Kept::Flat(spans) => {
                spans.insert(start, end);
            }
            Kept::Nested { exact, end_by_start, neg_start_by_end } => {
                exact.insert((start, end));
                end_by_start.raise(start, end as i64);
                neg_start_by_end.raise(end, -(start as i64));
            }
        }
    }

    fn accepts(&self, i: usize, j: usize, multi_label: bool) -> bool {
        match self {
            // only the last kept span starting at or before j can reach [i, j]
            Kept::Flat(spans) => match spans.range(..=j).next_back() {
                None => true,
                Some((&a, &b)) if a == i && b == j => multi_label,
                Some((_, &b)) => b < i,
            },
            Kept::Nested { exact, end_by_start, neg_start_by_end } => {
                if exact.contains(&(i, j)) {
                    return multi_label;
                }
                // a span sharing an endpoint with [i, j] contains it or lies inside it
                let right = i < j && end_by_start.max(i + 1, j) > j as i64;
                let left = i < j && neg_start_by_end.max(i, j - 1) > -(i as i64);
                !right && !left
            }
        }
    }
}

/// Pops keys in priority order and turns the accepted ones into mentions.
fn select(keys: Vec<u128>, labels: &[&str], config: &DecodeConfig) -> Decoded {
    let positions = keys.iter().map(|&k| unpack(k).2 + 1).max().unwrap_or(0);
    // every key is pushed before the first pop, so extraction is monotone,
    // which is all a radix heap needs
    let mut queue: RadixHeapMap<u128, ()> = keys.into_iter().map(|k| (k, ())).collect();
    let mut stats = DecodeStats { candidates: queue.len(), pops: 0 };
    let mut kept = Kept::new(config.mode, positions);
    let mut mentions = Vec::new();
    while let Some((key, ())) = queue.pop() {
        stats.pops += 1;
        let (score, start, end, rank) = unpack(key);
        if kept.accepts(start, end, config.multi_label) {
            kept.insert(start, end);
            mentions.push(EntityMention::new(start, end, labels[rank], score));
        }
    }
    mentions.sort_by(|a, b| (a.start, a.end, &a.label).cmp(&(b.start, b.end, &b.label)));
    Decoded { mentions, stats }
}

/// Greedy selection over an explicit candidate list.
pub fn decode_candidates(candidates: Vec<EntityMention>, config: &DecodeConfig) -> Result<Decoded> {
    config.validate()?;
    let candidates: Vec<&EntityMention> = candidates.iter().filter(|c| c.score > config.threshold).collect();
    let names: Vec<&str> = candidates.iter().map(|c| c.label.as_str()).collect();
    let (labels, ranks) = label_ranks(&names);
    let keys = candidates
        .iter()
        .zip(ranks)
        .map(|(c, rank)| pack(c.score, c.start, c.end, rank))
        .collect::<Result<Vec<_>>>()?;
    Ok(select(keys, &labels, config))
}

/// Greedy selection over one sentence's score table. Labels are only
/// materialized for accepted spans.
pub fn decode(table: &ScoreTable, config: &DecodeConfig) -> Result<Decoded> {
    config.validate()?;
    let m = table.types.len();
    if table.probs.len() != table.spans.len() * m {
        return Err(Error::contract(Module::Decoder, "score table shape does not match its spans and types"));
    }
    let (labels, ranks) = label_ranks(&table.types);
    let keys = table
        .probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > config.threshold)
        .map(|(idx, &score)| {
            let span = table.spans[idx / m];
            pack(score, span.start, span.end, ranks[idx % m])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(select(keys, &labels, config))
}
