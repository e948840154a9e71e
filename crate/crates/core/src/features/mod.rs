//! The literature-inspired feature registry and its extraction.
//!
//! Families: unexpected language (LM surprisal), simple language (length,
//! readability, age of acquisition), crude language (NBSVM crudeness) and
//! funny language (noun funniness). "Perplexity" features use per-word
//! surprisal in nats.

pub mod extract;
pub mod readability;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use extract::{
    build_matrix, extract_features, read_matrix_csv, standardize, write_matrix_csv, FeatureMatrix,
    FeatureVector, StandardizationStats,
};
pub use readability::{
    ari, builtin_familiar_words, combined_product_stats, combined_ratio_stats, dale_chall,
};

use crate::error::{Error, Result};
use crate::lexicons::{ConnotationLists, NbsvmModel, WordValueTable};
use crate::lm::{ExternalScoreTable, NGramModel};
use crate::summary::Stat;

pub const SPEC_FORMAT: &str = "IGGY-SPEC-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Unexpected,
    Simple,
    Crude,
    Funny,
    Meta,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Unexpected => "unexpected",
            Family::Simple => "simple",
            Family::Crude => "crude",
            Family::Funny => "funny",
            Family::Meta => "meta",
        }
    }
}

/// Which resource and computation feeds a feature slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "arg")]
pub enum Source {
    TitleLm(u8),
    JokeLm(u8),
    PosLm(u8),
    External(String),
    TitleLength,
    WordLength,
    Ari,
    DaleChall,
    Aoa,
    SurprisalOverAoa(u8),
    Crudeness,
    SurprisalOverBenign(u8),
    NounFunniness,
    SurprisalTimesFunniness(u8),
}

impl Source {
    fn key(&self) -> String {
        match self {
            Source::TitleLm(n) => format!("title_lm{n}"),
            Source::JokeLm(n) => format!("joke_lm{n}"),
            Source::PosLm(n) => format!("pos_lm{n}"),
            Source::External(m) => format!("external_{m}"),
            Source::TitleLength => "title_length".into(),
            Source::WordLength => "word_length".into(),
            Source::Ari => "ari".into(),
            Source::DaleChall => "dale_chall".into(),
            Source::Aoa => "aoa".into(),
            Source::SurprisalOverAoa(n) => format!("surprisal_over_aoa_lm{n}"),
            Source::Crudeness => "crudeness".into(),
            Source::SurprisalOverBenign(n) => format!("surprisal_over_benign_lm{n}"),
            Source::NounFunniness => "noun_funniness".into(),
            Source::SurprisalTimesFunniness(n) => format!("surprisal_times_funniness_lm{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub family: Family,
    pub source: Source,
    pub stat: Stat,
}

impl FeatureDescriptor {
    pub fn new(family: Family, source: Source, stat: Stat) -> Self {
        let name = match stat {
            Stat::Scalar => format!("{}.{}", family.as_str(), source.key()),
            s => format!("{}.{}.{}", family.as_str(), source.key(), s.as_str()),
        };
        FeatureDescriptor {
            name,
            family,
            source,
            stat,
        }
    }
}

/// Ordered feature registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub format: String,
    pub features: Vec<FeatureDescriptor>,
}

impl FeatureSpec {
    pub fn new(features: Vec<FeatureDescriptor>) -> Result<Self> {
        let spec = FeatureSpec {
            format: SPEC_FORMAT.into(),
            features,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.format != SPEC_FORMAT {
            return Err(Error::Version {
                expected: SPEC_FORMAT.into(),
                found: self.format.clone(),
            });
        }
        let mut seen = BTreeSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate feature name `{}`",
                    f.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn count_by_family(&self) -> BTreeMap<Family, usize> {
        let mut out = BTreeMap::new();
        for f in &self.features {
            *out.entry(f.family).or_default() += 1;
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw.get("format").and_then(|v| v.as_str()).unwrap_or("");
        if found != SPEC_FORMAT {
            return Err(Error::Version {
                expected: SPEC_FORMAT.into(),
                found: found.into(),
            });
        }
        let spec: FeatureSpec = serde_json::from_value(raw)?;
        spec.validate()?;
        Ok(spec)
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

    /// Hex sha256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Everything extraction may draw on. Absent entries disable their features.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    /// Title-corpus LMs keyed by order.
    pub title_lms: BTreeMap<u8, NGramModel>,
    pub joke_lms: BTreeMap<u8, NGramModel>,
    pub pos_lms: BTreeMap<u8, NGramModel>,
    /// External per-word score tables keyed by model tag.
    pub external: BTreeMap<String, ExternalScoreTable>,
    pub aoa: Option<WordValueTable>,
    pub funniness: Option<WordValueTable>,
    pub valence: Option<WordValueTable>,
    pub nbsvm: Option<NbsvmModel>,
    /// Dale-Chall familiar words; the bundled list when `None`.
    pub familiar: Option<BTreeSet<String>>,
    pub connotation: Option<ConnotationLists>,
}

impl Resources {
    pub fn familiar_words(&self) -> &BTreeSet<String> {
        self.familiar
            .as_ref()
            .unwrap_or_else(|| builtin_familiar_words())
    }

    fn has_any(&self) -> bool {
        !(self.title_lms.is_empty()
            && self.joke_lms.is_empty()
            && self.pos_lms.is_empty()
            && self.external.is_empty()
            && self.aoa.is_none()
            && self.funniness.is_none()
            && self.nbsvm.is_none())
    }

    pub fn add_external(&mut self, table: ExternalScoreTable) {
        self.external.insert(table.model().to_string(), table);
    }
}

const SPREAD: [Stat; 3] = [Stat::Mean, Stat::Max, Stat::Var];
const FULL: [Stat; 4] = [Stat::Mean, Stat::Max, Stat::Min, Stat::Var];

/// The canonical registry for the given resources.
///
/// Per LM source (title, jokes, POS at each available order, then each
/// external model) mean/max/var surprisal; then title length, word length
/// mean/max/var, ARI, Dale-Chall, AoA mean/max/var and surprisal÷AoA per
/// title order; then crudeness and surprisal÷benign per title order; then
/// noun funniness mean/max/var and surprisal×funniness per title order.
pub fn default_feature_spec(resources: &Resources) -> Result<FeatureSpec> {
    if !resources.has_any() {
        return Err(Error::MissingResource(
            "no language models, lexicons or score tables supplied".into(),
        ));
    }
    let mut f = Vec::new();
    fn push_all(fam: Family, src: Source, stats: &[Stat], f: &mut Vec<FeatureDescriptor>) {
        for &s in stats {
            f.push(FeatureDescriptor::new(fam, src.clone(), s));
        }
    }
    use Family::*;
    for &n in resources.title_lms.keys() {
        push_all(Unexpected, Source::TitleLm(n), &SPREAD, &mut f);
    }
    for &n in resources.joke_lms.keys() {
        push_all(Unexpected, Source::JokeLm(n), &SPREAD, &mut f);
    }
    for &n in resources.pos_lms.keys() {
        push_all(Unexpected, Source::PosLm(n), &SPREAD, &mut f);
    }
    for m in resources.external.keys() {
        push_all(Unexpected, Source::External(m.clone()), &SPREAD, &mut f);
    }

    push_all(Simple, Source::TitleLength, &[Stat::Scalar], &mut f);
    push_all(Simple, Source::WordLength, &SPREAD, &mut f);
    push_all(Simple, Source::Ari, &[Stat::Scalar], &mut f);
    push_all(Simple, Source::DaleChall, &[Stat::Scalar], &mut f);
    if resources.aoa.is_some() {
        push_all(Simple, Source::Aoa, &SPREAD, &mut f);
        for &n in resources.title_lms.keys() {
            push_all(Simple, Source::SurprisalOverAoa(n), &FULL, &mut f);
        }
    }
    if resources.nbsvm.is_some() {
        push_all(Crude, Source::Crudeness, &[Stat::Scalar], &mut f);
        for &n in resources.title_lms.keys() {
            push_all(Crude, Source::SurprisalOverBenign(n), &FULL, &mut f);
        }
    }
    if resources.funniness.is_some() {
        push_all(Funny, Source::NounFunniness, &SPREAD, &mut f);
        for &n in resources.title_lms.keys() {
            push_all(Funny, Source::SurprisalTimesFunniness(n), &FULL, &mut f);
        }
    }
    FeatureSpec::new(f)
}

/// Fails when `spec` needs a resource that `resources` lacks.
pub fn check_resources(spec: &FeatureSpec, resources: &Resources) -> Result<()> {
    for f in &spec.features {
        let missing = match &f.source {
            Source::TitleLm(n) => !resources.title_lms.contains_key(n),
            Source::JokeLm(n) => !resources.joke_lms.contains_key(n),
            Source::PosLm(n) => !resources.pos_lms.contains_key(n),
            Source::External(m) => !resources.external.contains_key(m),
            Source::TitleLength | Source::WordLength | Source::Ari | Source::DaleChall => false,
            Source::Aoa => resources.aoa.is_none(),
            Source::SurprisalOverAoa(n) => {
                resources.aoa.is_none() || !resources.title_lms.contains_key(n)
            }
            Source::Crudeness => resources.nbsvm.is_none(),
            Source::SurprisalOverBenign(n) => {
                resources.nbsvm.is_none() || !resources.title_lms.contains_key(n)
            }
            Source::NounFunniness => resources.funniness.is_none(),
            Source::SurprisalTimesFunniness(n) => {
                resources.funniness.is_none() || !resources.title_lms.contains_key(n)
            }
        };
        if missing {
            return Err(Error::MissingResource(format!(
                "feature `{}` needs an unavailable resource",
                f.name
            )));
        }
    }
    Ok(())
}
