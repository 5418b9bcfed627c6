use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::EntityMention;
use crate::error::Result;
use crate::trainer::TrainingExample;

use super::jsonl::{read_jsonl, write_jsonl};

/// One line of a dataset (or prediction) file. Spans are inclusive word
/// indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(alias = "tokens")]
    pub tokenized_text: Vec<String>,
    pub ner: Vec<(usize, usize, String)>,
    /// Confidence per `ner` entry; written by `predict`, ignored on load.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<f64>,
}

impl DatasetRecord {
    pub fn from_example(ex: &TrainingExample) -> Self {
        Self {
            id: Some(ex.id.clone()),
            tokenized_text: ex.words.clone(),
            ner: ex.gold.iter().map(|m| (m.start, m.end, m.label.clone())).collect(),
            scores: Vec::new(),
        }
    }

    pub fn from_prediction(id: &str, words: &[String], mentions: &[EntityMention]) -> Self {
        Self {
            id: Some(id.to_string()),
            tokenized_text: words.to_vec(),
            ner: mentions.iter().map(|m| (m.start, m.end, m.label.clone())).collect(),
            scores: mentions.iter().map(|m| m.score).collect(),
        }
    }

    fn into_example(self, line: usize) -> Result<TrainingExample> {
        let id = self.id.unwrap_or_else(|| format!("line {line}"));
        let gold = self
            .ner
            .into_iter()
            .enumerate()
            .map(|(i, (s, e, t))| EntityMention::new(s, e, t, self.scores.get(i).copied().unwrap_or(1.0)))
            .collect();
        TrainingExample::new(id, self.tokenized_text, gold)
    }
}

/// Reads and validates a dataset file. Records without an `id` are named
/// after their line.
pub fn load_dataset(path: &Path) -> Result<Vec<TrainingExample>> {
    read_jsonl::<DatasetRecord>(path)?
        .into_iter()
        .map(|(line, r)| r.into_example(line))
        .collect()
}

pub fn save_dataset(path: &Path, examples: &[TrainingExample]) -> Result<()> {
    write_jsonl(path, examples.iter().map(DatasetRecord::from_example))
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;
    use crate::error::Error;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_a_record() {
        let f = file(r#"{"tokens":["Alain","Farley","works"],"ner":[[0,1,"person"]]}"#);
        let d = load_dataset(f.path()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].gold, [EntityMention::new(0, 1, "person", 1.0)]);
        assert_eq!(d[0].id, "line 1");
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        assert!(load_dataset(file("").path()).unwrap().is_empty());
        assert!(load_dataset(file("\n  \n").path()).unwrap().is_empty());
    }

    #[test]
    fn out_of_bounds_names_the_record() {
        let f = file("{\"tokenized_text\":[\"a\"],\"ner\":[]}\n{\"id\":\"r7\",\"tokenized_text\":[\"a\",\"b\",\"c\"],\"ner\":[[2,5,\"x\"]]}\n");
        let e = load_dataset(f.path()).unwrap_err();
        assert!(e.to_string().contains("r7"), "{e}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = file("{\"tokenized_text\":[\"a\"],\"ner\":[]}\n{oops\n");
        match load_dataset(f.path()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn round_trip() {
        let ex = TrainingExample::new("a", vec!["x".into(), "y".into()], vec![EntityMention::new(0, 1, "t", 1.0)]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_dataset(f.path(), std::slice::from_ref(&ex)).unwrap();
        assert_eq!(load_dataset(f.path()).unwrap(), [ex]);
    }
}
