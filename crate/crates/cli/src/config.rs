//! Pipeline configuration: built-in defaults, then a TOML file, then
//! command-line overrides, merged key by key.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use iggy_core::classify::{EnsembleConfig, FusionConfig, MlpConfig};
use iggy_core::corpus::CorpusFormat;
use iggy_core::lexicons::NbsvmConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// worker threads; `None` uses `IGGY_THREADS` or the logical core count
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// pinned feature spec; the canonical one for the resources otherwise
    pub spec: Option<PathBuf>,
    pub corpus: CorpusConfig,
    pub lm: LmConfig,
    pub lexicons: LexiconConfig,
    pub external: ExternalConfig,
    pub mlp: MlpConfig,
    pub fusion: FusionConfig,
    pub ensemble: EnsembleSection,
    pub rule: RuleSection,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// background title corpus the title LMs are trained on
    pub titles: Option<PathBuf>,
    /// one-line jokes for the joke LMs
    pub jokes: Option<PathBuf>,
    /// labeled dataset used by train/evaluate/report
    pub dataset: Option<PathBuf>,
    /// overrides the extension-based guess
    pub format: Option<CorpusFormat>,
    pub venue_map: Option<PathBuf>,
    /// `word_TAG` sentences for training the POS tagger
    pub tagged: Option<PathBuf>,
    /// Ig Nobel winner ids, one per line
    pub winners: Option<PathBuf>,
    pub tagger_epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub orders: Vec<usize>,
    pub smoothing_k: f64,
    pub min_count: u32,
    pub pos_min_count: u32,
    /// directory holding the files written by `build-lm`
    pub dir: Option<PathBuf>,
    /// also build one title LM per field when fields are known
    pub field_lms: bool,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            orders: vec![1, 2, 3],
            smoothing_k: 1.0,
            min_count: 2,
            pos_min_count: 1,
            dir: None,
            field_lms: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconConfig {
    pub aoa: Option<PathBuf>,
    pub funniness: Option<PathBuf>,
    pub valence: Option<PathBuf>,
    /// trained NBSVM model file
    pub nbsvm: Option<PathBuf>,
    /// `text,label` CSV; trains an NBSVM when no model file is given
    pub crude: Option<PathBuf>,
    pub nbsvm_config: NbsvmConfig,
    pub whitelist: Option<PathBuf>,
    pub blacklist: Option<PathBuf>,
    /// replaces the bundled Dale-Chall familiar-word list
    pub familiar: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExternalConfig {
    /// interchange JSONL files
    pub scores: Vec<PathBuf>,
    /// model tag whose embeddings feed the fusion model
    pub embeddings: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    /// base models: iggy, lr_bow, rule, fusion, max_noun_funniness, dale_chall_inverse
    pub bases: Vec<String>,
    /// fraction of the non-test titles held out to train the meta-classifier
    pub share: f64,
    /// fraction of the dataset kept aside for hold-out metrics; 0 disables
    pub test_share: f64,
    pub meta_features: bool,
    pub mlp: MlpConfig,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            bases: vec!["iggy".into(), "lr_bow".into()],
            share: iggy_core::corpus::split::ENSEMBLE_SHARE_OF_REMAINDER,
            test_share: 0.12,
            meta_features: true,
            mlp: EnsembleConfig::default().mlp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleSection {
    /// order of the title LM used for the global and per-field surprisal
    pub lm_order: usize,
    /// explicit candidate lists; missing lists come from the data
    pub aoa_low: Option<Vec<f64>>,
    pub funniness_high: Option<Vec<f64>>,
    pub surprisal_high_field: Option<Vec<f64>>,
    pub surprisal_high_global: Option<Vec<f64>>,
}

impl Default for RuleSection {
    fn default() -> Self {
        RuleSection {
            lm_order: 2,
            aoa_low: None,
            funniness_high: None,
            surprisal_high_field: None,
            surprisal_high_global: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// cross-validation folds; below 2 disables cross-validation in `train`
    pub folds: usize,
    /// models compared by `evaluate dataset` and `evaluate ig-retrieval`
    pub models: Vec<String>,
    pub annotations: Option<PathBuf>,
    /// "title" or "topic"
    pub question: String,
    pub ndcg_k: Vec<usize>,
    pub precision_step: usize,
    pub overlap_k: usize,
    pub top: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 5,
            models: vec!["iggy".into(), "lr_bow".into()],
            annotations: None,
            question: "title".into(),
            ndcg_k: vec![10, 50, 100, 300],
            precision_step: 10,
            overlap_k: 300,
            top: 300,
        }
    }
}

/// Parses `value` as a TOML literal, falling back to a plain string.
fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("malformed option key `{key}`");
    }
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let table = cur
            .as_table_mut()
            .with_context(|| format!("option `{key}`: `{p}` is not a section"))?;
        cur = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(toml::Table::new()));
    }
    let table = cur
        .as_table_mut()
        .with_context(|| format!("option `{key}` does not name a setting"))?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// One `key=value` override; `key` is dotted (`mlp.l2`, `corpus.dataset`).
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: Value,
}

impl Override {
    pub fn parse(s: &str) -> Result<Self> {
        let (k, v) = s
            .split_once('=')
            .with_context(|| format!("override `{s}` is not of the form key=value"))?;
        Ok(Override {
            key: k.trim().to_string(),
            value: parse_value(v.trim()),
        })
    }

    pub fn path(key: &str, path: &Path) -> Self {
        Override {
            key: key.to_string(),
            value: Value::String(path.display().to_string()),
        }
    }

    pub fn int(key: &str, v: u64) -> Self {
        Override {
            key: key.to_string(),
            value: Value::Integer(v as i64),
        }
    }
}

impl PipelineConfig {
    /// Defaults, then `file`, then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[Override]) -> Result<Self> {
        let mut root =
            Value::try_from(PipelineConfig::default()).context("serializing default config")?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let table: toml::Table = text
                .parse()
                .with_context(|| format!("parsing config {}", path.display()))?;
            merge(&mut root, Value::Table(table));
        }
        for o in overrides {
            set_dotted(&mut root, &o.key, o.value.clone())?;
        }
        let cfg: PipelineConfig = root.try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lm.orders.is_empty() || self.lm.orders.iter().any(|n| !(1..=3).contains(n)) {
            bail!(
                "lm.orders must list orders between 1 and 3, got {:?}",
                self.lm.orders
            );
        }
        if !(self.lm.smoothing_k.is_finite() && self.lm.smoothing_k > 0.0) {
            bail!("lm.smoothing_k must be positive");
        }
        if !(1..=3).contains(&self.rule.lm_order) {
            bail!("rule.lm_order must be 1, 2 or 3");
        }
        if !(self.ensemble.share > 0.0 && self.ensemble.share < 1.0) {
            bail!("ensemble.share must lie strictly between 0 and 1");
        }
        if !(0.0..1.0).contains(&self.ensemble.test_share) {
            bail!("ensemble.test_share must lie in [0, 1)");
        }
        if self.ensemble.bases.is_empty() {
            bail!("ensemble.bases is empty");
        }
        if !matches!(self.eval.question.as_str(), "title" | "topic") {
            bail!("eval.question must be `title` or `topic`");
        }
        if self.eval.precision_step == 0 || self.eval.ndcg_k.contains(&0) {
            bail!("eval cutoffs must be positive");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }

    /// Hex sha256 of the settings that can change results (thread count and
    /// output directory excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = None;
        c.out = None;
        let bytes = serde_json::to_vec(&c).unwrap_or_default();
        hex::encode(Sha256::digest(&bytes))
    }

    /// Explicit setting, then `IGGY_THREADS`, then all logical cores.
    pub fn thread_count(&self) -> Result<usize> {
        if let Some(n) = self.threads {
            return Ok(n);
        }
        match std::env::var("IGGY_THREADS") {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => bail!("IGGY_THREADS must be a positive integer, got `{v}`"),
            },
            Err(_) => Ok(std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)),
        }
    }

    pub fn corpus_format(&self, path: &Path) -> CorpusFormat {
        self.corpus
            .format
            .unwrap_or_else(|| CorpusFormat::from_path(path))
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        self.out
            .clone()
            .context("no output directory: pass --out DIR or set `out` in the config")
    }
}
