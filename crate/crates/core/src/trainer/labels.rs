use std::collections::{BTreeSet, HashMap, HashSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::decoder::EntityMention;
use crate::error::{Error, Module, Result};
use crate::matcher::SpanIndex;
use crate::prompt::canonical_type;

/// One supervised sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    /// Record identifier used in error messages.
    pub id: String,
    pub words: Vec<String>,
    pub gold: Vec<EntityMention>,
}

impl TrainingExample {
    /// Checks bounds, non-empty types and duplicate triples.
    pub fn new(id: impl Into<String>, words: Vec<String>, gold: Vec<EntityMention>) -> Result<Self> {
        let ex = Self { id: id.into(), words, gold };
        ex.validate()?;
        Ok(ex)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::contract(Module::Trainer, msg).for_example(&self.id));
        let n = self.words.len();
        let mut seen = HashSet::new();
        for m in &self.gold {
            if m.start > m.end || m.end >= n {
                return fail(format!("span ({}, {}) out of bounds for {n} words", m.start, m.end));
            }
            let ty = canonical_type(&m.label);
            if ty.is_empty() {
                return fail(format!("span ({}, {}) has an empty type", m.start, m.end));
            }
            if !seen.insert((m.start, m.end, ty)) {
                return fail(format!("duplicate mention ({}, {}, {})", m.start, m.end, m.label));
            }
        }
        Ok(())
    }

    /// Distinct gold types in first-appearance order.
    pub fn positive_types(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.gold
            .iter()
            .filter(|m| seen.insert(canonical_type(&m.label)))
            .map(|m| m.label.clone())
            .collect()
    }
}

/// Binary targets over `spans × types`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    pub num_spans: usize,
    pub num_types: usize,
    pub values: Vec<u8>,
    /// Gold mentions dropped for being wider than the span cap.
    pub filtered: usize,
}

impl LabelGrid {
    pub fn get(&self, span: usize, ty: usize) -> u8 {
        self.values[span * self.num_types + ty]
    }

    pub fn positives(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn targets<T: num_traits::Float>(&self) -> Vec<T> {
        self.values.iter().map(|&v| if v == 1 { T::one() } else { T::zero() }).collect()
    }
}

/// Marks every (span, type) pair as positive or negative.
///
/// Gold mentions not present in `spans` (wider than the cap) are skipped
/// and counted; a gold type missing from `prompt_types` is a contract error.
pub fn build_labels<S: AsRef<str>>(
    example: &TrainingExample,
    prompt_types: &[S],
    spans: &[SpanIndex],
) -> Result<LabelGrid> {
    let type_idx: HashMap<String, usize> =
        prompt_types.iter().enumerate().map(|(i, t)| (canonical_type(t.as_ref()), i)).collect();
    if type_idx.len() != prompt_types.len() {
        return Err(Error::contract(Module::Trainer, "prompt types contain duplicates").for_example(&example.id));
    }
    let span_idx: HashMap<(usize, usize), usize> =
        spans.iter().enumerate().map(|(i, s)| ((s.start, s.end), i)).collect();
    let m = prompt_types.len();
    let mut values = vec![0u8; spans.len() * m];
    let mut filtered = BTreeSet::new();
    for g in &example.gold {
        let Some(&t) = type_idx.get(&canonical_type(&g.label)) else {
            return Err(Error::contract(
                Module::Trainer,
                format!("gold type `{}` is not among the prompt types", g.label),
            )
            .for_example(&example.id));
        };
        match span_idx.get(&(g.start, g.end)) {
            Some(&s) => values[s * m + t] = 1,
            None => {
                filtered.insert((g.start, g.end, t));
            }
        }
    }
    if !filtered.is_empty() {
        warn!("example `{}`: {} gold spans exceed the width cap and were dropped", example.id, filtered.len());
    }
    Ok(LabelGrid { num_spans: spans.len(), num_types: m, values, filtered: filtered.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::enumerate_spans;

    fn ex(n: usize, gold: &[(usize, usize, &str)]) -> TrainingExample {
        let words = (0..n).map(|i| format!("w{i}")).collect();
        let gold = gold.iter().map(|&(s, e, t)| EntityMention::new(s, e, t, 1.0)).collect();
        TrainingExample::new("x", words, gold).unwrap()
    }

    #[test]
    fn single_positive() {
        let spans = enumerate_spans(2, 2);
        let g = build_labels(&ex(2, &[(0, 1, "person")]), &["person"], &spans).unwrap();
        assert_eq!(g.values.len(), 3);
        assert_eq!(g.positives(), 1);
        let row = spans.iter().position(|s| (s.start, s.end) == (0, 1)).unwrap();
        assert_eq!(g.get(row, 0), 1);
    }

    #[test]
    fn no_gold_is_all_zero() {
        let g = build_labels(&ex(3, &[]), &["a", "b"], &enumerate_spans(3, 2)).unwrap();
        assert!(g.values.iter().all(|&v| v == 0));
        assert_eq!(g.values.len(), 5 * 2);
    }

    #[test]
    fn wide_gold_is_filtered_and_counted() {
        let g = build_labels(&ex(4, &[(0, 2, "a"), (3, 3, "a")]), &["a"], &enumerate_spans(4, 2)).unwrap();
        assert_eq!(g.filtered, 1);
        assert_eq!(g.positives(), 1);
    }

    #[test]
    fn missing_prompt_type_is_contract_error() {
        let e = build_labels(&ex(2, &[(0, 0, "a")]), &["b"], &enumerate_spans(2, 2)).unwrap_err();
        assert!(e.to_string().contains("example `x`"), "{e}");
    }

    #[test]
    fn type_matching_is_normalized() {
        let g = build_labels(&ex(2, &[(0, 0, "Person")]), &["person"], &enumerate_spans(2, 1)).unwrap();
        assert_eq!(g.positives(), 1);
    }

    #[test]
    fn invalid_examples_rejected() {
        let w = vec!["a".to_string(), "b".to_string()];
        assert!(TrainingExample::new("r", w.clone(), vec![EntityMention::new(1, 2, "t", 1.0)]).is_err());
        assert!(TrainingExample::new("r", w.clone(), vec![EntityMention::new(1, 0, "t", 1.0)]).is_err());
        assert!(TrainingExample::new("r", w.clone(), vec![EntityMention::new(0, 0, " ", 1.0)]).is_err());
        let dup = vec![EntityMention::new(0, 0, "t", 1.0), EntityMention::new(0, 0, "T", 1.0)];
        assert!(TrainingExample::new("r", w, dup).is_err());
    }

    #[test]
    fn positive_types_are_distinct() {
        assert_eq!(ex(3, &[(0, 0, "a"), (1, 1, "b"), (2, 2, "a")]).positive_types(), ["a", "b"]);
    }
}
