use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summary::SummaryStats;

pub const LM_FORMAT: &str = "IGGY-LM-1";
pub const UNK: &str = "<unk>";
pub const END: &str = "</s>";

const UNK_ID: u32 = 0;
const END_ID: u32 = 1;
const START_ID: u32 = u32::MAX;

/// Per-title surprisal aggregates, in nats.
pub type SurprisalStats = SummaryStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramConfig {
    pub order: usize,
    pub smoothing_k: f64,
    pub min_count: u32,
    pub source_tag: String,
}

impl Default for NGramConfig {
    fn default() -> Self {
        NGramConfig {
            order: 2,
            smoothing_k: 1.0,
            min_count: 2,
            source_tag: "titles".into(),
        }
    }
}

impl NGramConfig {
    pub fn new(order: usize, smoothing_k: f64, min_count: u32) -> Self {
        NGramConfig {
            order,
            smoothing_k,
            min_count,
            ..Self::default()
        }
    }

    pub fn with_source(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }

    fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.order) {
            return Err(Error::invalid(format!(
                "n-gram order must be 1, 2 or 3, got {}",
                self.order
            )));
        }
        if !(self.smoothing_k.is_finite() && self.smoothing_k > 0.0) {
            return Err(Error::invalid(format!(
                "smoothing k must be positive, got {}",
                self.smoothing_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ContextCounts {
    total: u64,
    /// sorted by word id
    words: Vec<(u32, u32)>,
}

impl ContextCounts {
    fn count(&self, w: u32) -> u32 {
        self.words
            .binary_search_by_key(&w, |&(id, _)| id)
            .map(|i| self.words[i].1)
            .unwrap_or(0)
    }
}

/// Add-k smoothed n-gram model over words or tags.
///
/// Prediction vocabulary is every kept symbol plus [`UNK`] and [`END`];
/// the start padding symbol is only ever a context.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    config: NGramConfig,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    contexts: HashMap<u64, ContextCounts>,
}

fn context_key(ctx: &[u32]) -> u64 {
    match ctx {
        [] => 0,
        [a] => *a as u64,
        [a, b] => ((*a as u64) << 32) | *b as u64,
        _ => unreachable!("context longer than two symbols"),
    }
}

fn key_to_context(key: u64, len: usize) -> Vec<u32> {
    match len {
        0 => vec![],
        1 => vec![key as u32],
        _ => vec![(key >> 32) as u32, key as u32],
    }
}

/// Trains an n-gram model on pre-tokenized sequences.
pub fn train_ngram<S: AsRef<str>>(
    sequences: &[Vec<S>],
    config: &NGramConfig,
) -> Result<NGramModel> {
    config.validate()?;
    if sequences.is_empty() {
        return Err(Error::invalid(
            "cannot train a language model on an empty corpus",
        ));
    }
    let mut freq: HashMap<&str, u32> = HashMap::new();
    for seq in sequences {
        for w in seq {
            *freq.entry(w.as_ref()).or_default() += 1;
        }
    }
    let mut kept: Vec<&str> = freq
        .iter()
        .filter(|(w, &c)| c >= config.min_count && **w != UNK && **w != END)
        .map(|(w, _)| *w)
        .collect();
    kept.sort_unstable();
    let mut vocab = vec![UNK.to_string(), END.to_string()];
    vocab.extend(kept.iter().map(|w| w.to_string()));
    let index: HashMap<String, u32> = vocab
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i as u32))
        .collect();

    let ctx_len = config.order - 1;
    let mut raw: HashMap<u64, HashMap<u32, u32>> = HashMap::new();
    let mut ids = Vec::new();
    for seq in sequences {
        ids.clear();
        ids.resize(ctx_len, START_ID);
        ids.extend(
            seq.iter()
                .map(|w| *index.get(w.as_ref()).unwrap_or(&UNK_ID)),
        );
        ids.push(END_ID);
        for i in ctx_len..ids.len() {
            let key = context_key(&ids[i - ctx_len..i]);
            *raw.entry(key).or_default().entry(ids[i]).or_default() += 1;
        }
    }
    let contexts = raw
        .into_iter()
        .map(|(k, words)| {
            let mut words: Vec<(u32, u32)> = words.into_iter().collect();
            words.sort_unstable();
            let total = words.iter().map(|&(_, c)| c as u64).sum();
            (k, ContextCounts { total, words })
        })
        .collect();
    Ok(NGramModel {
        config: config.clone(),
        vocab,
        index,
        contexts,
    })
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn config(&self) -> &NGramConfig {
        &self.config
    }

    pub fn source_tag(&self) -> &str {
        &self.config.source_tag
    }

    /// Size of the prediction vocabulary (kept symbols + UNK + END).
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Prediction vocabulary in id order: UNK, END, then kept symbols sorted.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    fn id(&self, word: &str) -> u32 {
        *self.index.get(word).unwrap_or(&UNK_ID)
    }

    /// Ids of the n−1 symbols preceding position `i` in `ids`, START-padded.
    fn context_ids(&self, preceding: &[u32]) -> Vec<u32> {
        let ctx_len = self.config.order - 1;
        let mut ctx = vec![START_ID; ctx_len.saturating_sub(preceding.len())];
        ctx.extend_from_slice(&preceding[preceding.len().saturating_sub(ctx_len)..]);
        ctx
    }

    fn prob_ids(&self, ctx: &[u32], w: u32) -> f64 {
        let k = self.config.smoothing_k;
        let v = self.vocab.len() as f64;
        let (count, total) = match self.contexts.get(&context_key(ctx)) {
            Some(c) => (c.count(w) as f64, c.total as f64),
            None => (0.0, 0.0),
        };
        (count + k) / (total + k * v)
    }

    /// Smoothed p̂(word | context). `context` holds the preceding symbols
    /// (only the last n−1 are used; shorter contexts are START-padded).
    /// Pass [`END`] as `word` for the end-of-title transition.
    pub fn prob(&self, context: &[&str], word: &str) -> f64 {
        let preceding: Vec<u32> = context.iter().map(|w| self.id(w)).collect();
        self.prob_ids(&self.context_ids(&preceding), self.id(word))
    }

    /// −ln p̂(word | context), in nats.
    pub fn word_surprisal(&self, context: &[&str], word: &str) -> f64 {
        -self.prob(context, word).ln()
    }

    /// Surprisal of every word of the title followed by the END transition.
    pub fn word_surprisals<S: AsRef<str>>(&self, words: &[S]) -> Vec<f64> {
        let mut ids: Vec<u32> = words.iter().map(|w| self.id(w.as_ref())).collect();
        ids.push(END_ID);
        (0..ids.len())
            .map(|i| -self.prob_ids(&self.context_ids(&ids[..i]), ids[i]).ln())
            .collect()
    }

    /// Count of the raw n-gram `context · word` (test and report helper).
    pub fn count(&self, context: &[&str], word: &str) -> u64 {
        let preceding: Vec<u32> = context.iter().map(|w| self.id(w)).collect();
        self.contexts
            .get(&context_key(&self.context_ids(&preceding)))
            .map(|c| c.count(self.id(word)) as u64)
            .unwrap_or(0)
    }

    pub fn context_total(&self, context: &[&str]) -> u64 {
        let preceding: Vec<u32> = context.iter().map(|w| self.id(w)).collect();
        self.contexts
            .get(&context_key(&self.context_ids(&preceding)))
            .map(|c| c.total)
            .unwrap_or(0)
    }

    /// Every stored context as symbol strings, with `<s>` for start padding.
    pub fn stored_contexts(&self) -> Vec<Vec<String>> {
        let mut keys: Vec<u64> = self.contexts.keys().copied().collect();
        keys.sort_unstable();
        keys.into_iter()
            .map(|k| {
                key_to_context(k, self.config.order - 1)
                    .into_iter()
                    .map(|id| {
                        if id == START_ID {
                            "<s>".to_string()
                        } else {
                            self.vocab[id as usize].clone()
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Probability over the whole prediction vocabulary for a context given
    /// as symbols; `<s>` denotes start padding.
    pub fn distribution(&self, context: &[&str]) -> Vec<f64> {
        let ctx: Vec<u32> = context
            .iter()
            .map(|w| if *w == "<s>" { START_ID } else { self.id(w) })
            .collect();
        let ctx = self.context_ids(&ctx);
        (0..self.vocab.len() as u32)
            .map(|w| self.prob_ids(&ctx, w))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }

    /// Header line with format tag, CRC32 and length, followed by the JSON payload.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let payload = serde_json::to_vec(&self.to_payload())?;
        let header = Header {
            format: LM_FORMAT.to_string(),
            crc32: crc32fast::hash(&payload),
            payload_len: payload.len() as u64,
        };
        let io = |e| Error::io("<lm>", e);
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n").map_err(io)?;
        w.write_all(&payload).map_err(io)?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let io = |e| Error::io("<lm>", e);
        let mut line = String::new();
        r.read_line(&mut line).map_err(io)?;
        let header: Header = serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Checksum(format!("unreadable language model header: {e}")))?;
        if header.format != LM_FORMAT {
            return Err(Error::Version {
                expected: LM_FORMAT.into(),
                found: header.format,
            });
        }
        let mut payload = Vec::new();
        r.read_to_end(&mut payload).map_err(io)?;
        if payload.len() as u64 != header.payload_len {
            return Err(Error::Checksum(format!(
                "language model payload is {} bytes, header says {}",
                payload.len(),
                header.payload_len
            )));
        }
        let crc = crc32fast::hash(&payload);
        if crc != header.crc32 {
            return Err(Error::Checksum(format!(
                "language model crc32 {crc:08x} != {:08x}",
                header.crc32
            )));
        }
        let payload: Payload = serde_json::from_slice(&payload)?;
        Self::from_payload(payload)
    }

    fn to_payload(&self) -> Payload {
        let ctx_len = self.config.order - 1;
        let contexts: BTreeMap<u64, &ContextCounts> =
            self.contexts.iter().map(|(k, v)| (*k, v)).collect();
        Payload {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            contexts: contexts
                .into_iter()
                .map(|(k, c)| (key_to_context(k, ctx_len), c.words.clone()))
                .collect(),
        }
    }

    fn from_payload(p: Payload) -> Result<Self> {
        p.config.validate()?;
        if p.vocab.len() < 2 || p.vocab[UNK_ID as usize] != UNK || p.vocab[END_ID as usize] != END {
            return Err(Error::invalid(
                "language model vocabulary lacks UNK/END sentinels",
            ));
        }
        let ctx_len = p.config.order - 1;
        let v = p.vocab.len() as u32;
        let mut contexts = HashMap::with_capacity(p.contexts.len());
        for (ctx, mut words) in p.contexts {
            if ctx.len() != ctx_len || ctx.iter().any(|&id| id != START_ID && id >= v) {
                return Err(Error::invalid("language model context out of range"));
            }
            if words.iter().any(|&(w, _)| w >= v) {
                return Err(Error::invalid("language model word id out of range"));
            }
            words.sort_unstable();
            let total = words.iter().map(|&(_, c)| c as u64).sum();
            contexts.insert(context_key(&ctx), ContextCounts { total, words });
        }
        let index = p
            .vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Ok(NGramModel {
            config: p.config,
            vocab: p.vocab,
            index,
            contexts,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    crc32: u32,
    payload_len: u64,
}

/// context ids with their (word id, count) pairs
type ContextRows = Vec<(Vec<u32>, Vec<(u32, u32)>)>;

#[derive(Serialize, Deserialize)]
struct Payload {
    config: NGramConfig,
    vocab: Vec<String>,
    contexts: ContextRows,
}

/// Stats over `word_surprisals` (END included); empty title gives the flagged zero stats.
pub fn title_surprisal_stats<S: AsRef<str>>(model: &NGramModel, words: &[S]) -> SurprisalStats {
    if words.is_empty() {
        return SurprisalStats::empty();
    }
    SurprisalStats::from_values(&model.word_surprisals(words))
}

/// Same aggregation over a tag sequence.
pub fn pos_surprisal_stats<S: AsRef<str>>(model: &NGramModel, tags: &[S]) -> SurprisalStats {
    title_surprisal_stats(model, tags)
}
