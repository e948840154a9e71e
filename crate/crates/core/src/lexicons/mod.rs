//! Psycholinguistic word tables, connotation word lists and the NBSVM crudeness scorer.

pub mod nbsvm;

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use nbsvm::{
    load_crude_csv, read_crude_csv, train_nbsvm, NbsvmConfig, NbsvmModel, BENIGN_EPSILON,
};

use crate::error::{Error, Result};
use crate::summary::SummaryStats;

/// AoA assumed for words missing from the table in per-word ratio features.
pub const DEFAULT_AOA: f64 = 25.0;
/// Funniness assumed for words missing from the table in per-word product features.
pub const DEFAULT_FUNNINESS: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Aoa,
    Funniness,
    Valence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultPolicy {
    Skip,
    Constant(f64),
}

/// Word → value table, keys lowercase.
#[derive(Debug, Clone, PartialEq)]
pub struct WordValueTable {
    pub kind: TableKind,
    pub default_policy: DefaultPolicy,
    entries: HashMap<String, f64>,
    warnings: Vec<String>,
}

/// Aggregates over the words found in a table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LookupStats {
    pub stats: SummaryStats,
    /// found / total; 0 for an empty word list
    pub coverage: f64,
}

impl WordValueTable {
    pub fn from_entries<I, S>(
        kind: TableKind,
        default_policy: DefaultPolicy,
        entries: I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        let mut table = WordValueTable {
            kind,
            default_policy,
            entries: HashMap::new(),
            warnings: Vec::new(),
        };
        for (i, (w, v)) in entries.into_iter().enumerate() {
            table
                .insert(w.as_ref(), v)
                .map_err(|m| Error::parse("<entries>", i + 1, m))?;
        }
        Ok(table)
    }

    fn insert(&mut self, word: &str, value: f64) -> std::result::Result<(), String> {
        let word = word.trim().to_lowercase();
        if word.is_empty() {
            return Err("empty word".into());
        }
        if !value.is_finite() {
            return Err(format!("value for `{word}` is not finite"));
        }
        if self.kind == TableKind::Aoa && value <= 0.0 {
            return Err(format!(
                "age of acquisition for `{word}` must be positive, got {value}"
            ));
        }
        match self.entries.entry(word) {
            std::collections::hash_map::Entry::Occupied(e) => {
                let msg = format!(
                    "duplicate entry for `{}` ignored, first value kept",
                    e.key()
                );
                log::warn!("{msg}");
                self.warnings.push(msg);
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(value);
            }
        }
        Ok(())
    }

    pub fn from_reader<R: BufRead>(
        reader: R,
        kind: TableKind,
        default_policy: DefaultPolicy,
        origin: &str,
    ) -> Result<Self> {
        let mut table = WordValueTable {
            kind,
            default_policy,
            entries: HashMap::new(),
            warnings: Vec::new(),
        };
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (word, value) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, line_no, "expected `word<TAB>value`"))?;
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::parse(
                    origin,
                    line_no,
                    format!("`{}` is not a number", value.trim()),
                )
            })?;
            table
                .insert(word, value)
                .map_err(|m| Error::parse(origin, line_no, m))?;
        }
        if table.entries.is_empty() {
            return Err(Error::parse(origin, 0, "word table is empty"));
        }
        Ok(table)
    }

    /// Loads a headerless `word<TAB>value` file.
    pub fn load(
        path: impl AsRef<Path>,
        kind: TableKind,
        default_policy: DefaultPolicy,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(
            BufReader::new(file),
            kind,
            default_policy,
            &path.display().to_string(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Warnings collected while loading (duplicates).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// All stored values, in no particular order.
    pub fn values(&self) -> Vec<f64> {
        self.entries.values().copied().collect()
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        match self.entries.get(word) {
            Some(v) => Some(*v),
            None if word.chars().any(char::is_uppercase) => {
                self.entries.get(&word.to_lowercase()).copied()
            }
            None => None,
        }
    }

    /// Value with the table's default applied to missing words.
    pub fn get_or_default(&self, word: &str) -> Option<f64> {
        self.get(word).or(match self.default_policy {
            DefaultPolicy::Skip => None,
            DefaultPolicy::Constant(c) => Some(c),
        })
    }

    /// Stats over the words present in the table (missing words skipped).
    pub fn lookup_stats<S: AsRef<str>>(&self, words: &[S]) -> LookupStats {
        let found: Vec<f64> = words.iter().filter_map(|w| self.get(w.as_ref())).collect();
        let coverage = if words.is_empty() {
            0.0
        } else {
            found.len() as f64 / words.len() as f64
        };
        LookupStats {
            stats: SummaryStats::from_values(&found),
            coverage,
        }
    }
}

pub fn load_word_table(
    path: impl AsRef<Path>,
    kind: TableKind,
    default_policy: DefaultPolicy,
) -> Result<WordValueTable> {
    WordValueTable::load(path, kind, default_policy)
}

pub fn lookup_stats<S: AsRef<str>>(table: &WordValueTable, words: &[S]) -> LookupStats {
    table.lookup_stats(words)
}

/// Reads one lowercase word per line; blank lines and `#` comments skipped.
pub fn read_word_list<R: BufRead>(reader: R, origin: &str) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        let w = line.trim();
        if w.is_empty() || w.starts_with('#') {
            continue;
        }
        out.insert(w.to_lowercase());
    }
    Ok(out)
}

pub fn load_word_list(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_word_list(BufReader::new(file), &path.display().to_string())
}

/// Sexual-connotation white list and crude-context black list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConnotationLists {
    whitelist: BTreeSet<String>,
    blacklist: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConnotationFlags {
    pub has_white: bool,
    pub has_black: bool,
}

impl ConnotationLists {
    pub fn new(whitelist: BTreeSet<String>, blacklist: BTreeSet<String>) -> Result<Self> {
        let whitelist: BTreeSet<String> = whitelist.into_iter().map(|w| w.to_lowercase()).collect();
        let blacklist: BTreeSet<String> = blacklist.into_iter().map(|w| w.to_lowercase()).collect();
        if let Some(w) = whitelist.intersection(&blacklist).next() {
            return Err(Error::invalid(format!(
                "`{w}` is on both the white and the black list"
            )));
        }
        Ok(ConnotationLists {
            whitelist,
            blacklist,
        })
    }

    pub fn load(white: impl AsRef<Path>, black: impl AsRef<Path>) -> Result<Self> {
        Self::new(load_word_list(white)?, load_word_list(black)?)
    }

    pub fn whitelist(&self) -> &BTreeSet<String> {
        &self.whitelist
    }

    pub fn blacklist(&self) -> &BTreeSet<String> {
        &self.blacklist
    }

    pub fn flags<S: AsRef<str>>(&self, words: &[S]) -> ConnotationFlags {
        ConnotationFlags {
            has_white: words.iter().any(|w| self.whitelist.contains(w.as_ref())),
            has_black: words.iter().any(|w| self.blacklist.contains(w.as_ref())),
        }
    }
}

pub fn connotation_flags<S: AsRef<str>>(lists: &ConnotationLists, words: &[S]) -> ConnotationFlags {
    lists.flags(words)
}
