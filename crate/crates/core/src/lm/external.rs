//! Per-word scores and embeddings computed outside this crate (transformer
//! exports), read from the JSONL interchange format.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summary::SummaryStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScoreRecord {
    pub id: String,
    pub model: String,
    pub tokens: Vec<String>,
    /// Per-token surprisal in nats.
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

/// Validated scores from one external model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalScoreTable {
    model: String,
    embedding_dim: Option<usize>,
    records: Vec<ExternalScoreRecord>,
    index: HashMap<String, usize>,
}

impl ExternalScoreTable {
    /// Validates `records`; `origin` names the source in errors.
    pub fn from_records(records: Vec<ExternalScoreRecord>, origin: &str) -> Result<Self> {
        let mut model: Option<String> = None;
        let mut dim: Option<Option<usize>> = None;
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let line = i + 1;
            let fail = |m: String| Error::parse(origin, line, format!("title `{}`: {m}", r.id));
            if r.model.trim().is_empty() {
                return Err(fail("empty model tag".into()));
            }
            match &model {
                None => model = Some(r.model.clone()),
                Some(m) if *m != r.model => {
                    return Err(fail(format!(
                        "model `{}` mixed with `{m}` in one table",
                        r.model
                    )))
                }
                _ => {}
            }
            if r.tokens.len() != r.scores.len() {
                return Err(fail(format!(
                    "{} tokens but {} scores",
                    r.tokens.len(),
                    r.scores.len()
                )));
            }
            if let Some(j) = r.scores.iter().position(|s| !s.is_finite()) {
                return Err(fail(format!("non-finite score at position {j}")));
            }
            let this_dim = r.embedding.as_ref().map(Vec::len);
            if let Some(e) = &r.embedding {
                if e.is_empty() || e.iter().any(|x| !x.is_finite()) {
                    return Err(fail("embedding is empty or non-finite".into()));
                }
            }
            match dim {
                None => dim = Some(this_dim),
                Some(d) if d != this_dim => {
                    return Err(fail(format!(
                        "embedding dimension {} differs from {}",
                        this_dim.map_or("none".into(), |d| d.to_string()),
                        d.map_or("none".into(), |d| d.to_string())
                    )))
                }
                _ => {}
            }
            if index.insert(r.id.clone(), i).is_some() {
                return Err(fail("duplicate id".into()));
            }
        }
        Ok(ExternalScoreTable {
            model: model.unwrap_or_default(),
            embedding_dim: dim.flatten(),
            records,
            index,
        })
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ExternalScoreRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&ExternalScoreRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    /// Same aggregation as title surprisal stats, over the stored scores.
    pub fn stats(&self, id: &str) -> Option<SummaryStats> {
        self.get(id).map(|r| SummaryStats::from_values(&r.scores))
    }

    pub fn embedding(&self, id: &str) -> Option<&[f64]> {
        self.get(id).and_then(|r| r.embedding.as_deref())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io("<scores>", e))?;
        }
        Ok(())
    }
}

pub fn read_external_scores<R: BufRead>(reader: R, origin: &str) -> Result<ExternalScoreTable> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ExternalScoreRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        records.push(r);
        lines.push(i + 1);
    }
    // re-run validation, then translate record positions back to file lines
    ExternalScoreTable::from_records(records, origin).map_err(|e| match e {
        Error::Parse {
            origin,
            line,
            message,
        } => Error::Parse {
            origin,
            line: lines.get(line - 1).copied().unwrap_or(line),
            message,
        },
        other => other,
    })
}

pub fn import_external_scores(path: impl AsRef<Path>) -> Result<ExternalScoreTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_external_scores(BufReader::new(file), &path.display().to_string())
}
