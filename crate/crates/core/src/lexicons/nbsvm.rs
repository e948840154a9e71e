//! Naive-Bayes log-count-ratio features with a logistic classifier on top.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, words};
use crate::error::{Error, Result};
use crate::linear::{fit_logistic, sigmoid, LogisticConfig, SparseRow};

pub const NBSVM_FORMAT: &str = "IGGY-NBSVM-1";
/// Floor for [`NbsvmModel::word_benign_prob`].
pub const BENIGN_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NbsvmConfig {
    pub beta: f64,
    /// Laplace smoothing added to both presence-count vectors.
    pub alpha: f64,
    pub logistic: LogisticConfig,
}

impl Default for NbsvmConfig {
    fn default() -> Self {
        NbsvmConfig {
            beta: 0.25,
            alpha: 1.0,
            logistic: LogisticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbsvmModel {
    pub format: String,
    pub beta: f64,
    /// sorted unigram and bigram keys (bigrams space-joined)
    pub vocabulary: Vec<String>,
    pub r: Vec<f64>,
    /// interpolated weights actually applied to r-scaled features
    pub w: Vec<f64>,
    pub b: f64,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Unique unigrams and bigrams of a document's words.
pub fn ngram_keys(text: &str) -> BTreeSet<String> {
    let toks = tokenize(text);
    let ws = words(&toks);
    let mut keys: BTreeSet<String> = ws.iter().map(|w| w.to_string()).collect();
    for pair in ws.windows(2) {
        keys.insert(format!("{} {}", pair[0], pair[1]));
    }
    keys
}

/// r = ln((p+α)/‖p+α‖₁) − ln((q+α)/‖q+α‖₁), with p the crude presence counts.
///
/// Evaluated as ln((p+α)·‖q+α‖₁) − ln((q+α)·‖p+α‖₁), which is exactly
/// antisymmetric under swapping p and q.
pub fn log_count_ratio(p: &[f64], q: &[f64], alpha: f64) -> Vec<f64> {
    let p_norm: f64 = p.iter().map(|v| v + alpha).sum();
    let q_norm: f64 = q.iter().map(|v| v + alpha).sum();
    p.iter()
        .zip(q)
        .map(|(pi, qi)| ((pi + alpha) * q_norm).ln() - ((qi + alpha) * p_norm).ln())
        .collect()
}

/// Trains on `(text, is_crude)` pairs.
pub fn train_nbsvm(docs: &[(String, bool)], config: &NbsvmConfig) -> Result<NbsvmModel> {
    if !(0.0..=1.0).contains(&config.beta) {
        return Err(Error::invalid(format!(
            "beta must lie in [0, 1], got {}",
            config.beta
        )));
    }
    if !(config.alpha > 0.0 && config.alpha.is_finite()) {
        return Err(Error::invalid("alpha must be positive"));
    }
    let crude = docs.iter().filter(|(_, y)| *y).count();
    if crude == 0 || crude == docs.len() {
        return Err(Error::invalid(
            "NBSVM training needs both crude and benign documents",
        ));
    }
    let keyed: Vec<BTreeSet<String>> = docs.iter().map(|(t, _)| ngram_keys(t)).collect();
    let vocabulary: Vec<String> = keyed
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<String, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, k)| (k.clone(), i))
        .collect();
    let mut p = vec![0.0; vocabulary.len()];
    let mut q = vec![0.0; vocabulary.len()];
    for (keys, (_, y)) in keyed.iter().zip(docs) {
        let target = if *y { &mut p } else { &mut q };
        for k in keys {
            target[index[k]] += 1.0;
        }
    }
    let r = log_count_ratio(&p, &q, config.alpha);
    let rows: Vec<SparseRow> = keyed
        .iter()
        .map(|keys| {
            keys.iter()
                .map(|k| (index[k] as u32, r[index[k]]))
                .collect()
        })
        .collect();
    let y: Vec<bool> = docs.iter().map(|(_, y)| *y).collect();
    let fit = fit_logistic(&rows, &y, vocabulary.len(), &config.logistic)?;
    let w_bar = fit.weights.iter().map(|w| w.abs()).sum::<f64>() / vocabulary.len().max(1) as f64;
    let w = fit
        .weights
        .iter()
        .map(|w| config.beta * w_bar + (1.0 - config.beta) * w)
        .collect();
    Ok(NbsvmModel {
        format: NBSVM_FORMAT.into(),
        beta: config.beta,
        vocabulary,
        r,
        w,
        b: fit.bias,
        index,
    })
}

impl NbsvmModel {
    /// Builds a model from explicit parts.
    pub fn from_parts(
        vocabulary: Vec<String>,
        r: Vec<f64>,
        w: Vec<f64>,
        b: f64,
        beta: f64,
    ) -> Result<Self> {
        let mut m = NbsvmModel {
            format: NBSVM_FORMAT.into(),
            beta,
            vocabulary,
            r,
            w,
            b,
            index: HashMap::new(),
        };
        m.validate()?;
        m.index = m
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.format != NBSVM_FORMAT {
            return Err(Error::Version {
                expected: NBSVM_FORMAT.into(),
                found: self.format.clone(),
            });
        }
        if self.r.len() != self.vocabulary.len() || self.w.len() != self.vocabulary.len() {
            return Err(Error::Shape(
                "NBSVM vectors do not match the vocabulary".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid("NBSVM beta outside [0, 1]"));
        }
        if !self.b.is_finite() || self.r.iter().chain(&self.w).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("NBSVM parameters are not finite".into()));
        }
        Ok(())
    }

    pub fn r_of(&self, key: &str) -> Option<f64> {
        self.index.get(key).map(|&i| self.r[i])
    }

    /// Linear score of a document's binarized n-gram features.
    pub fn score(&self, text: &str) -> f64 {
        let keys = ngram_keys(text);
        self.b
            + keys
                .iter()
                .filter_map(|k| self.index.get(k))
                .map(|&i| self.r[i] * self.w[i])
                .sum::<f64>()
    }

    pub fn crudeness_prob(&self, text: &str) -> f64 {
        sigmoid(self.score(text))
    }

    /// 1 − crudeness of the one-word document, floored at [`BENIGN_EPSILON`].
    pub fn word_benign_prob(&self, word: &str) -> f64 {
        let s = self.b
            + self
                .index
                .get(word)
                .map(|&i| self.r[i] * self.w[i])
                .unwrap_or(0.0);
        // 1 - σ(s) = σ(-s), computed without cancellation
        sigmoid(-s).clamp(BENIGN_EPSILON, 1.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw.get("format").and_then(|v| v.as_str()).unwrap_or("");
        if found != NBSVM_FORMAT {
            return Err(Error::Version {
                expected: NBSVM_FORMAT.into(),
                found: found.into(),
            });
        }
        let m: NbsvmModel = serde_json::from_value(raw)?;
        Self::from_parts(m.vocabulary, m.r, m.w, m.b, m.beta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Reads `text,label` CSV (label 1 = crude).
pub fn read_crude_csv<R: Read>(reader: R, origin: &str) -> Result<Vec<(String, bool)>> {
    #[derive(Deserialize)]
    struct Row {
        text: String,
        label: String,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        let label = match row.label.trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::parse(
                    origin,
                    line,
                    format!("label must be 0 or 1, got `{other}`"),
                ))
            }
        };
        out.push((row.text, label));
    }
    Ok(out)
}

pub fn load_crude_csv(path: impl AsRef<Path>) -> Result<Vec<(String, bool)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_crude_csv(file, &path.display().to_string())
}

/// Per-key presence counts in each class; used for reports and tests.
pub fn presence_counts(docs: &[(String, bool)]) -> BTreeMap<String, (u32, u32)> {
    let mut out: BTreeMap<String, (u32, u32)> = BTreeMap::new();
    for (text, y) in docs {
        for k in ngram_keys(text) {
            let e = out.entry(k).or_default();
            if *y {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    out
}
