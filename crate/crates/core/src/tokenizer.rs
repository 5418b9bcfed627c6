//! Frequency-built subword vocabulary with greedy longest-match segmentation.
//!
//! Text and entity-type names share one vocabulary. Words are normalized
//! (NFC, lowercase) before lookup, and every word keeps track of its first
//! subword, which is the position the encoder reads the word from.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Module, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const ENT: &str = "[ENT]";
pub const SEP: &str = "[SEP]";

const SPECIALS: [&str; 4] = [PAD, UNK, ENT, SEP];

pub type TokenId = u32;

/// NFC + lowercase.
pub fn normalize(text: &str) -> String {
    text.nfc().collect::<String>().to_lowercase()
}

/// Splits raw text into words and standalone punctuation marks.
pub fn split_words(text: &str) -> Vec<String> {
    static WORD: OnceLock<Regex> = OnceLock::new();
    let re = WORD.get_or_init(|| Regex::new(r"\w+(?:[-'’]\w+)*|[^\w\s]").expect("valid regex"));
    re.find_iter(text).map(|m| m.as_str().to_owned()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
    longest_unit: usize,
}

/// A word split into subword ids; the word is read from `subword_ids[0]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSegmentation {
    pub word: String,
    pub subword_ids: Vec<TokenId>,
}

impl WordSegmentation {
    pub fn first(&self) -> TokenId {
        self.subword_ids[0]
    }
}

impl Vocab {
    pub fn pad_id(&self) -> TokenId {
        0
    }

    pub fn unk_id(&self) -> TokenId {
        1
    }

    pub fn ent_id(&self) -> TokenId {
        2
    }

    pub fn sep_id(&self) -> TokenId {
        3
    }

    /// Builds a vocabulary from the specials followed by `units`, in order.
    pub fn from_units<S: AsRef<str>>(units: &[S]) -> Result<Self> {
        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(units.iter().map(|u| normalize(u.as_ref())))
            .collect();
        Self::try_from(tokens)
    }

    /// Learns a unit inventory from `corpus` (a list of tokenized sentences).
    ///
    /// Every distinct character is taken first so segmentation stays total,
    /// then multi-character words with frequency ≥ `min_freq`, until
    /// `max_size` entries (specials included) are used. Ids follow
    /// frequency descending, ties broken lexicographically.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], max_size: usize, min_freq: usize) -> Result<Self> {
        if max_size < SPECIALS.len() + 1 {
            return Err(Error::config(
                Module::Tokenizer,
                format!("max_size {max_size} cannot hold the 4 special tokens and one unit"),
            ));
        }
        if corpus.iter().all(Vec::is_empty) {
            return Err(Error::contract(Module::Tokenizer, "cannot build a vocabulary from an empty corpus"));
        }
        let mut chars: HashMap<String, usize> = HashMap::new();
        let mut words: HashMap<String, usize> = HashMap::new();
        for sentence in corpus {
            for word in sentence {
                let w = normalize(word.as_ref());
                for c in w.chars() {
                    *chars.entry(c.to_string()).or_default() += 1;
                }
                if w.chars().count() > 1 {
                    *words.entry(w).or_default() += 1;
                }
            }
        }
        let ranked = |m: HashMap<String, usize>| {
            let mut v: Vec<(String, usize)> = m.into_iter().collect();
            v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            v
        };
        let budget = max_size - SPECIALS.len();
        let mut selected: Vec<(String, usize)> = ranked(chars).into_iter().take(budget).collect();
        let room = budget - selected.len();
        selected.extend(
            ranked(words)
                .into_iter()
                .filter(|(_, f)| *f >= min_freq)
                .take(room),
        );
        selected.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let units: Vec<String> = selected.into_iter().map(|(u, _)| u).collect();
        Self::from_units(&units)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn unit(&self, piece: &str) -> Option<TokenId> {
        self.ids.get(piece).copied().filter(|&id| id as usize >= SPECIALS.len())
    }

    /// Greedy longest-match segmentation of one word. Runs of characters
    /// that no unit covers collapse into a single `[UNK]`.
    pub fn segment(&self, word: &str) -> Result<WordSegmentation> {
        let norm = normalize(word);
        if norm.is_empty() {
            return Err(Error::contract(Module::Tokenizer, "cannot segment an empty word"));
        }
        let chars: Vec<(usize, char)> = norm.char_indices().collect();
        let byte_at = |i: usize| chars.get(i).map_or(norm.len(), |&(b, _)| b);
        let mut ids = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let max_len = self.longest_unit.min(chars.len() - pos);
            let hit = (1..=max_len)
                .rev()
                .find_map(|len| self.unit(&norm[byte_at(pos)..byte_at(pos + len)]).map(|id| (id, len)));
            match hit {
                Some((id, len)) => {
                    ids.push(id);
                    pos += len;
                }
                None => {
                    if ids.last() != Some(&self.unk_id()) {
                        ids.push(self.unk_id());
                    }
                    pos += 1;
                }
            }
        }
        Ok(WordSegmentation { word: norm, subword_ids: ids })
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Format(format!(
                "vocabulary must start with {SPECIALS:?}"
            )));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Format("empty vocabulary entry".into()));
            }
            if ids.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary entry `{t}`")));
            }
        }
        let longest_unit = tokens[SPECIALS.len()..].iter().map(|t| t.chars().count()).max().unwrap_or(0);
        Ok(Self { tokens, ids, longest_unit })
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}
