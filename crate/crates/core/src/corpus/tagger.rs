//! Averaged perceptron part-of-speech tagger.
//!
//! Greedy left-to-right decoding; each decision sees the word, its affixes,
//! the neighbouring words and the two previously predicted tags.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tokenize::Token;
use crate::error::{Error, Result};

pub const POS_FORMAT: &str = "IGGY-POS-1";

/// Tags treated as nouns by the lexicon features.
pub const NOUN_TAGS: [&str; 2] = ["NOUN", "PROPN"];

const START: [&str; 2] = ["-START-", "-START2-"];
const END: [&str; 2] = ["-END-", "-END2-"];

/// One training sentence: (word, tag) pairs.
pub type TaggedSentence = Vec<(String, String)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosTaggerModel {
    pub format: String,
    pub tagset: Vec<String>,
    /// feature -> tag -> averaged weight
    pub weights: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct TaggerConfig {
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of sentences held out to measure tag accuracy.
    pub heldout_fraction: f64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            epochs: 5,
            seed: 0,
            heldout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggerReport {
    pub train_sentences: usize,
    pub heldout_sentences: usize,
    /// `None` when nothing was held out.
    pub heldout_accuracy: Option<f64>,
}

#[derive(Default)]
struct Param {
    weight: f64,
    total: f64,
    stamp: usize,
}

struct Perceptron {
    tags: Vec<String>,
    params: HashMap<String, HashMap<usize, Param>>,
    instances: usize,
}

impl Perceptron {
    fn predict(&self, features: &[String]) -> usize {
        let mut scores = vec![0.0; self.tags.len()];
        for f in features {
            if let Some(per_tag) = self.params.get(f) {
                for (&tag, p) in per_tag {
                    scores[tag] += p.weight;
                }
            }
        }
        argmax(&scores)
    }

    fn update(&mut self, truth: usize, guess: usize, features: &[String]) {
        self.instances += 1;
        if truth == guess {
            return;
        }
        let now = self.instances;
        for f in features {
            let per_tag = self.params.entry(f.clone()).or_default();
            for (tag, delta) in [(truth, 1.0), (guess, -1.0)] {
                let p = per_tag.entry(tag).or_default();
                p.total += (now - p.stamp) as f64 * p.weight;
                p.stamp = now;
                p.weight += delta;
            }
        }
    }

    fn into_model(self) -> PosTaggerModel {
        let instances = self.instances.max(1) as f64;
        let mut weights = BTreeMap::new();
        for (feature, per_tag) in self.params {
            let mut row = BTreeMap::new();
            for (tag, p) in per_tag {
                let total = p.total + (self.instances - p.stamp) as f64 * p.weight;
                let avg = total / instances;
                if avg != 0.0 {
                    row.insert(self.tags[tag].clone(), avg);
                }
            }
            if !row.is_empty() {
                weights.insert(feature, row);
            }
        }
        PosTaggerModel {
            format: POS_FORMAT.to_string(),
            tagset: self.tags,
            weights,
        }
    }
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn suffix(word: &str, n: usize) -> String {
    let chars: Vec<char> = word.chars().collect();
    chars[chars.len().saturating_sub(n)..].iter().collect()
}

fn features(i: usize, context: &[String], prev: &str, prev2: &str) -> Vec<String> {
    // context is padded with two start and two end markers
    let word = &context[i + 2];
    let prev_word = &context[i + 1];
    let next_word = &context[i + 3];
    let first = word.chars().next().map(String::from).unwrap_or_default();
    let mut out = vec![
        "bias".to_string(),
        format!("w={word}"),
        format!("suf3={}", suffix(word, 3)),
        format!("suf2={}", suffix(word, 2)),
        format!("pre1={first}"),
        format!("t-1={prev}"),
        format!("t-2={prev2}"),
        format!("t-1,t-2={prev} {prev2}"),
        format!("t-1,w={prev} {word}"),
        format!("w-1={prev_word}"),
        format!("suf3-1={}", suffix(prev_word, 3)),
        format!("w+1={next_word}"),
        format!("suf3+1={}", suffix(next_word, 3)),
        format!("w-2={}", context[i]),
        format!("w+2={}", context[i + 4]),
    ];
    if word.chars().any(|c| c.is_ascii_digit()) {
        out.push("has_digit".to_string());
    }
    if word.contains('-') {
        out.push("has_hyphen".to_string());
    }
    if !word.chars().any(char::is_alphanumeric) {
        out.push("punct".to_string());
    }
    out
}

fn padded(words: &[&str]) -> Vec<String> {
    START
        .iter()
        .copied()
        .chain(words.iter().copied())
        .chain(END.iter().copied())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Trains the tagger; also reports accuracy on a seeded held-out slice.
pub fn train_pos_tagger(
    sentences: &[TaggedSentence],
    config: &TaggerConfig,
) -> Result<(PosTaggerModel, TaggerReport)> {
    let sentences: Vec<&TaggedSentence> = sentences.iter().filter(|s| !s.is_empty()).collect();
    if sentences.is_empty() {
        return Err(Error::invalid("tagger training corpus is empty"));
    }
    for s in &sentences {
        for (w, t) in s.iter() {
            if w.is_empty() || t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("malformed tagged pair `{w}`/`{t}`")));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.shuffle(&mut rng);
    let n_held = if sentences.len() >= 2 {
        ((sentences.len() as f64 * config.heldout_fraction.clamp(0.0, 0.5)).round() as usize)
            .min(sentences.len() - 1)
    } else {
        0
    };
    let (held_idx, train_idx) = order.split_at(n_held);
    let mut train: Vec<&TaggedSentence> = train_idx.iter().map(|&i| sentences[i]).collect();

    let tags: BTreeSet<&str> = train
        .iter()
        .flat_map(|s| s.iter().map(|(_, t)| t.as_str()))
        .collect();
    let tags: Vec<String> = tags.into_iter().map(String::from).collect();
    let tag_index: HashMap<&str, usize> = tags
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();

    let mut perceptron = Perceptron {
        tags: tags.clone(),
        params: HashMap::new(),
        instances: 0,
    };
    for _ in 0..config.epochs.max(1) {
        for sentence in &train {
            let words: Vec<&str> = sentence.iter().map(|(w, _)| w.as_str()).collect();
            let context = padded(&words);
            let (mut prev, mut prev2) = (START[0].to_string(), START[1].to_string());
            for (i, (_, gold)) in sentence.iter().enumerate() {
                let feats = features(i, &context, &prev, &prev2);
                let guess = perceptron.predict(&feats);
                perceptron.update(tag_index[gold.as_str()], guess, &feats);
                prev2 = std::mem::replace(&mut prev, tags[guess].clone());
            }
        }
        train.shuffle(&mut rng);
    }
    let model = perceptron.into_model();

    let held: Vec<&TaggedSentence> = held_idx.iter().map(|&i| sentences[i]).collect();
    let heldout_accuracy = if held.is_empty() {
        None
    } else {
        Some(model.accuracy(held.iter().copied()))
    };
    let report = TaggerReport {
        train_sentences: train.len(),
        heldout_sentences: held.len(),
        heldout_accuracy,
    };
    Ok((model, report))
}

impl PosTaggerModel {
    fn score(&self, feats: &[String]) -> usize {
        let mut scores = vec![0.0; self.tagset.len()];
        for f in feats {
            if let Some(row) = self.weights.get(f) {
                for (tag, w) in row {
                    if let Ok(i) = self.tagset.binary_search(tag) {
                        scores[i] += w;
                    }
                }
            }
        }
        argmax(&scores)
    }

    /// Tags a sequence of (lowercase) words.
    pub fn tag_words(&self, words: &[&str]) -> Vec<String> {
        if words.is_empty() || self.tagset.is_empty() {
            return Vec::new();
        }
        let context = padded(words);
        let (mut prev, mut prev2) = (START[0].to_string(), START[1].to_string());
        let mut out = Vec::with_capacity(words.len());
        for i in 0..words.len() {
            let feats = features(i, &context, &prev, &prev2);
            let tag = self.tagset[self.score(&feats)].clone();
            prev2 = std::mem::replace(&mut prev, tag.clone());
            out.push(tag);
        }
        out
    }

    /// Fraction of gold tags reproduced over the given sentences.
    pub fn accuracy<'a>(&self, sentences: impl IntoIterator<Item = &'a TaggedSentence>) -> f64 {
        let (mut hit, mut total) = (0usize, 0usize);
        for s in sentences {
            let words: Vec<&str> = s.iter().map(|(w, _)| w.as_str()).collect();
            for (pred, (_, gold)) in self.tag_words(&words).iter().zip(s) {
                hit += (pred == gold) as usize;
                total += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("format").and_then(|v| v.as_str()).unwrap_or("");
        if found != POS_FORMAT {
            return Err(Error::Version {
                expected: POS_FORMAT.into(),
                found: found.into(),
            });
        }
        let model: PosTaggerModel = serde_json::from_value(value)?;
        if model.tagset.is_empty() {
            return Err(Error::invalid("tagger model has an empty tagset"));
        }
        let tags: BTreeSet<&String> = model.tagset.iter().collect();
        for row in model.weights.values() {
            if let Some(t) = row.keys().find(|t| !tags.contains(t)) {
                return Err(Error::invalid(format!(
                    "weight refers to unknown tag `{t}`"
                )));
            }
        }
        let mut model = model;
        model.tagset.sort();
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Tags a token list; the output is aligned with `tokens`.
pub fn pos_tag(model: &PosTaggerModel, tokens: &[Token]) -> Vec<String> {
    let words: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
    model.tag_words(&words)
}

/// Parses the `word_TAG word_TAG ...` one-sentence-per-line format.
pub fn read_tagged_corpus(reader: impl BufRead, origin: &str) -> Result<Vec<TaggedSentence>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut sentence = Vec::new();
        for pair in line.split_whitespace() {
            match pair.rsplit_once('_') {
                Some((w, t)) if !w.is_empty() && !t.is_empty() => {
                    sentence.push((w.to_lowercase(), t.to_string()))
                }
                _ => {
                    return Err(Error::parse(
                        origin,
                        i + 1,
                        format!("expected word_TAG, got `{pair}`"),
                    ))
                }
            }
        }
        out.push(sentence);
    }
    Ok(out)
}

pub fn load_tagged_corpus(path: &Path) -> Result<Vec<TaggedSentence>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_tagged_corpus(std::io::BufReader::new(file), &path.display().to_string())
}
