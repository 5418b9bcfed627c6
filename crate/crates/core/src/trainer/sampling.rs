use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::prompt::canonical_type;

/// Number of negatives that makes them `ratio` of the final list, rounded
/// to nearest.
pub fn negative_target(positives: usize, ratio: f64) -> usize {
    if ratio <= 0.0 {
        return 0;
    }
    if positives == 0 {
        // a sentence without gold still needs one type to be a prompt
        return 1;
    }
    (ratio * positives as f64 / (1.0 - ratio)).round() as usize
}

/// Appends negative types drawn without replacement from `pool` to the
/// positives. Negatives never match a positive (after normalization); the
/// count is capped by the pool and by `max_types`.
pub fn sample_negative_types<R: Rng + ?Sized>(
    positives: &[String],
    pool: &[String],
    ratio: f64,
    max_types: usize,
    rng: &mut R,
) -> Vec<String> {
    let mut taken: HashSet<String> = positives.iter().map(|t| canonical_type(t)).collect();
    let mut candidates = Vec::new();
    for t in pool {
        if taken.insert(canonical_type(t)) {
            candidates.push(t.clone());
        }
    }
    let want = negative_target(positives.len(), ratio)
        .min(candidates.len())
        .min(max_types.saturating_sub(positives.len()));
    let mut out = positives.to_vec();
    out.extend(candidates.choose_multiple(rng, want).cloned());
    out
}

/// Uniformly permutes the types, then drops each with `drop_prob`; if
/// every type was dropped the first of the permutation survives.
pub fn shuffle_and_drop<R: Rng + ?Sized>(types: &[String], drop_prob: f64, rng: &mut R) -> Vec<String> {
    let mut shuffled = types.to_vec();
    shuffled.shuffle(rng);
    let keep: Vec<bool> = shuffled.iter().map(|_| !rng.random_bool(drop_prob)).collect();
    if !keep.iter().any(|&k| k) {
        shuffled.truncate(1);
        return shuffled;
    }
    shuffled.into_iter().zip(keep).filter_map(|(t, k)| k.then_some(t)).collect()
}
