use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, words};
use crate::error::{Error, Result};
use crate::linear::{fit_logistic, sigmoid, LogisticConfig, SparseRow};

pub const BOW_FORMAT: &str = "IGGY-BOW-1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BowConfig {
    /// words appearing in fewer training texts are dropped
    pub min_df: usize,
    pub logistic: LogisticConfig,
}

impl Default for BowConfig {
    fn default() -> Self {
        BowConfig {
            min_df: 1,
            logistic: LogisticConfig::default(),
        }
    }
}

/// Logistic regression over binary unigram presence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBowModel {
    pub format: String,
    pub vocabulary: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

fn unigrams(text: &str) -> BTreeSet<String> {
    words(&tokenize(text))
        .into_iter()
        .map(str::to_string)
        .collect()
}

fn index_of(vocabulary: &[String]) -> HashMap<String, u32> {
    vocabulary
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i as u32))
        .collect()
}

pub fn train_logreg_bow<S: AsRef<str>>(
    texts: &[S],
    y: &[bool],
    config: &BowConfig,
) -> Result<LinearBowModel> {
    if texts.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} texts but {} labels",
            texts.len(),
            y.len()
        )));
    }
    let docs: Vec<BTreeSet<String>> = texts.iter().map(|t| unigrams(t.as_ref())).collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &docs {
        for w in d {
            *df.entry(w.as_str()).or_default() += 1;
        }
    }
    let vocabulary: Vec<String> = df
        .into_iter()
        .filter(|(_, c)| *c >= config.min_df.max(1))
        .map(|(w, _)| w.to_string())
        .collect();
    if vocabulary.is_empty() {
        return Err(Error::invalid(
            "bag-of-words vocabulary is empty after filtering",
        ));
    }
    let index = index_of(&vocabulary);
    let rows: Vec<SparseRow> = docs
        .iter()
        .map(|d| {
            d.iter()
                .filter_map(|w| index.get(w).map(|&j| (j, 1.0)))
                .collect()
        })
        .collect();
    let fit = fit_logistic(&rows, y, vocabulary.len(), &config.logistic)?;
    Ok(LinearBowModel {
        format: BOW_FORMAT.into(),
        vocabulary,
        weights: fit.weights,
        bias: fit.bias,
        index,
    })
}

impl LinearBowModel {
    /// Rebuilds the lookup index after deserialization and checks shapes.
    pub fn finish_load(mut self) -> Result<Self> {
        if self.format != BOW_FORMAT {
            return Err(Error::Version {
                expected: BOW_FORMAT.into(),
                found: self.format,
            });
        }
        if self.weights.len() != self.vocabulary.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} vocabulary entries",
                self.weights.len(),
                self.vocabulary.len()
            )));
        }
        self.index = index_of(&self.vocabulary);
        Ok(self)
    }

    pub fn score(&self, text: &str) -> f64 {
        self.bias
            + unigrams(text)
                .iter()
                .filter_map(|w| self.index.get(w))
                .map(|&j| self.weights[j as usize])
                .sum::<f64>()
    }

    pub fn predict_proba<S: AsRef<str>>(&self, texts: &[S]) -> Vec<f64> {
        texts
            .iter()
            .map(|t| sigmoid(self.score(t.as_ref())))
            .collect()
    }
}
