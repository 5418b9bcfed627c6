use std::path::Path;

use crate::error::{Error, Result};
use crate::matcher::ScoreTable;

use super::jsonl::{read_jsonl, write_jsonl};

/// Reads one [`ScoreTable`] per line and validates each.
pub fn load_score_tables(path: &Path) -> Result<Vec<ScoreTable>> {
    read_jsonl::<ScoreTable>(path)?
        .into_iter()
        .map(|(line, t)| {
            t.validate().map_err(|e| Error::Parse { path: path.display().to_string(), line, msg: e.to_string() })?;
            Ok(t)
        })
        .collect()
}

pub fn save_score_tables(path: &Path, tables: &[ScoreTable]) -> Result<()> {
    write_jsonl(path, tables)
}
