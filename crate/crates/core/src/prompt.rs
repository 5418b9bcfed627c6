//! Unified `[ENT] type … [SEP] words` input sequences.

use std::collections::HashSet;

use crate::error::{Error, Module, Result};
use crate::tokenizer::{normalize, TokenId, Vocab};

/// Default cap on the number of entity types in one training prompt.
pub const DEFAULT_MAX_TYPES: usize = 25;

/// Default cap on total sequence length.
pub const DEFAULT_MAX_LEN: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPrompt {
    pub token_ids: Vec<TokenId>,
    /// Index of each type's `[ENT]` marker.
    pub ent_positions: Vec<usize>,
    /// Index of each word's first subword.
    pub word_positions: Vec<usize>,
    pub sep_position: usize,
    /// First-subword index of every word of every type phrase.
    pub type_word_positions: Vec<Vec<usize>>,
    pub entity_types: Vec<String>,
    pub words: Vec<String>,
}

impl EncodedPrompt {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn num_types(&self) -> usize {
        self.ent_positions.len()
    }

    pub fn num_words(&self) -> usize {
        self.word_positions.len()
    }

    /// Rebuilds the (normalized) type phrases from the token sequence.
    pub fn reconstruct_types(&self, vocab: &Vocab) -> Vec<String> {
        let mut out = Vec::with_capacity(self.num_types());
        for (t, words) in self.type_word_positions.iter().enumerate() {
            let end = self.ent_positions.get(t + 1).copied().unwrap_or(self.sep_position);
            let mut phrase = Vec::with_capacity(words.len());
            for (w, &start) in words.iter().enumerate() {
                let stop = words.get(w + 1).copied().unwrap_or(end);
                let text: String = self.token_ids[start..stop]
                    .iter()
                    .map(|&id| vocab.token(id).unwrap_or_default())
                    .collect();
                phrase.push(text);
            }
            out.push(phrase.join(" "));
        }
        out
    }
}

/// Canonical form of a type name: normalized, whitespace-collapsed.
pub fn canonical_type(name: &str) -> String {
    normalize(name).split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lays out `[ENT] t₁ … [ENT] t_M [SEP] w₁ … w_N` and records where each
/// type marker and each word's first subword landed.
pub fn build_prompt<S: AsRef<str>, W: AsRef<str>>(
    entity_types: &[S],
    words: &[W],
    vocab: &Vocab,
    max_types: Option<usize>,
    max_len: usize,
) -> Result<EncodedPrompt> {
    if entity_types.is_empty() {
        return Err(Error::contract(Module::Prompt, "prompt needs at least one entity type"));
    }
    if words.is_empty() {
        return Err(Error::contract(Module::Prompt, "prompt needs at least one word"));
    }
    if let Some(cap) = max_types {
        if entity_types.len() > cap {
            return Err(Error::contract(
                Module::Prompt,
                format!("{} entity types exceed the cap of {cap}", entity_types.len()),
            ));
        }
    }
    let mut seen = HashSet::new();
    for t in entity_types {
        let c = canonical_type(t.as_ref());
        if c.is_empty() {
            return Err(Error::contract(Module::Prompt, "empty entity type"));
        }
        if !seen.insert(c) {
            return Err(Error::contract(
                Module::Prompt,
                format!("duplicate entity type `{}`", t.as_ref()),
            ));
        }
    }

    let mut token_ids = Vec::new();
    let mut ent_positions = Vec::with_capacity(entity_types.len());
    let mut type_word_positions = Vec::with_capacity(entity_types.len());
    for t in entity_types {
        ent_positions.push(token_ids.len());
        token_ids.push(vocab.ent_id());
        let mut starts = Vec::new();
        for w in t.as_ref().split_whitespace() {
            starts.push(token_ids.len());
            token_ids.extend(vocab.segment(w)?.subword_ids);
        }
        type_word_positions.push(starts);
    }
    let sep_position = token_ids.len();
    token_ids.push(vocab.sep_id());
    let mut word_positions = Vec::with_capacity(words.len());
    for w in words {
        word_positions.push(token_ids.len());
        let seg = vocab.segment(w.as_ref()).map_err(|e| match e {
            Error::Contract { .. } => Error::contract(Module::Prompt, "empty word in sentence"),
            other => other,
        })?;
        token_ids.extend(seg.subword_ids);
    }
    if token_ids.len() > max_len {
        return Err(Error::sizing(
            Module::Prompt,
            format!("prompt of {} tokens exceeds the limit of {max_len}", token_ids.len()),
        ));
    }
    Ok(EncodedPrompt {
        token_ids,
        ent_positions,
        word_positions,
        sep_position,
        type_word_positions,
        entity_types: entity_types.iter().map(|t| t.as_ref().to_owned()).collect(),
        words: words.iter().map(|w| w.as_ref().to_owned()).collect(),
    })
}

/// Splits types into contiguous groups of at most `max_types`.
pub fn chunk_types<S: AsRef<str>>(entity_types: &[S], max_types: usize) -> Vec<Vec<String>> {
    let size = max_types.max(1);
    entity_types
        .chunks(size)
        .map(|c| c.iter().map(|s| s.as_ref().to_owned()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn vocab() -> Vocab {
        Vocab::from_units(&[
            "person", "organization", "alain", "farley", "works", "at", "mc", "gill", "date", "of",
            "birth",
        ])
        .unwrap()
    }

    #[test]
    fn figure_layout() {
        let v = vocab();
        let p = build_prompt(&["person", "organization"], &["Alain", "Farley", "works"], &v, None, 512).unwrap();
        let tokens: Vec<&str> = p.token_ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(
            tokens,
            ["[ENT]", "person", "[ENT]", "organization", "[SEP]", "alain", "farley", "works"]
        );
        assert_eq!(p.ent_positions, [0, 2]);
        assert_eq!(p.sep_position, 4);
        assert_eq!(p.word_positions, [5, 6, 7]);
    }

    #[test]
    fn minimal_prompt() {
        let v = vocab();
        let p = build_prompt(&["person"], &["works"], &v, None, 512).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.ent_positions, [0]);
        assert_eq!(p.word_positions, [3]);
    }

    #[test]
    fn multi_subword_word_shifts_later_positions() {
        let v = vocab();
        let single = build_prompt(&["person"], &["works", "at", "works"], &v, None, 512).unwrap();
        let v3 = Vocab::from_units(&["person", "works", "at", "ab", "cd", "ef"]).unwrap();
        let triple = build_prompt(&["person"], &["works", "abcdef", "works"], &v3, None, 512).unwrap();
        assert_eq!(single.word_positions, [3, 4, 5]);
        assert_eq!(triple.word_positions, [3, 4, 7]);
        assert_eq!(triple.word_positions[2] - single.word_positions[2], 2);
    }

    #[test]
    fn rejects_bad_inputs() {
        let v = vocab();
        let none: [&str; 0] = [];
        assert!(matches!(build_prompt(&none, &["a"], &v, None, 512), Err(Error::Contract { .. })));
        assert!(matches!(build_prompt(&["person"], &none, &v, None, 512), Err(Error::Contract { .. })));
        assert!(matches!(
            build_prompt(&["person", "Person"], &["works"], &v, None, 512),
            Err(Error::Contract { .. })
        ));
        assert!(matches!(
            build_prompt(&["person", "date"], &["works"], &v, Some(1), 512),
            Err(Error::Contract { .. })
        ));
        assert!(matches!(
            build_prompt(&["person"], &["works", "at"], &v, None, 4),
            Err(Error::Sizing { .. })
        ));
    }

    #[test]
    fn multi_word_types_reconstruct() {
        let v = vocab();
        let p = build_prompt(&["date of  birth", "person"], &["works"], &v, None, 512).unwrap();
        assert_eq!(p.reconstruct_types(&v), ["date of birth", "person"]);
    }

    #[test]
    fn chunking() {
        let types: Vec<String> = (0..30).map(|i| format!("t{i}")).collect();
        let groups = chunk_types(&types, 25);
        assert_eq!(groups.iter().map(Vec::len).collect::<Vec<_>>(), [25, 5]);
        assert_eq!(chunk_types(&types[..25], 25).len(), 1);
    }

    proptest! {
        #[test]
        fn chunks_cover_each_type_once(n in 1usize..80, cap in 1usize..30) {
            let types: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
            let groups = chunk_types(&types, cap);
            prop_assert!(groups.iter().all(|g| !g.is_empty() && g.len() <= cap));
            let flat: Vec<String> = groups.concat();
            prop_assert_eq!(flat, types);
        }

        #[test]
        fn position_maps_are_consistent(
            type_idx in prop::sample::subsequence((0..5).collect::<Vec<usize>>(), 1..=5),
            words in prop::collection::vec(prop::sample::select(vec!["alain", "mcgill", "works", "at", "farley"]), 1..12),
        ) {
            let v = vocab();
            let pool = ["person", "organization", "date of birth", "works at", "gill"];
            let types: Vec<&str> = type_idx.iter().map(|&i| pool[i]).collect();
            let p = build_prompt(&types, &words, &v, None, 512).unwrap();
            prop_assert_eq!(p.ent_positions.len(), types.len());
            prop_assert_eq!(p.word_positions.len(), words.len());
            prop_assert!(p.ent_positions.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(p.word_positions.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(p.ent_positions.iter().all(|&i| i < p.sep_position && p.token_ids[i] == v.ent_id()));
            prop_assert!(p.word_positions.iter().all(|&i| i > p.sep_position));
            prop_assert_eq!(p.token_ids[p.sep_position], v.sep_id());
            prop_assert_eq!(p.reconstruct_types(&v), types.iter().map(|t| canonical_type(t)).collect::<Vec<_>>());
        }
    }
}
