//! Classifiers: the feature MLP, fusion with frozen embeddings, a
//! bag-of-words baseline, the threshold rule, single-score models and the
//! stacking ensemble.

pub mod bow;
pub mod ensemble;
pub mod fusion;
pub mod io;
pub mod mlp;
pub mod nn;
pub mod rules;

use serde::{Deserialize, Serialize};

pub use bow::{train_logreg_bow, BowConfig, LinearBowModel};
pub use ensemble::{
    meta_features, train_stacking_ensemble, EnsembleConfig, EnsembleModel, MetaFeatures,
};
pub use fusion::{train_fusion, FusionConfig, FusionModel};
pub use io::{load_model, save_model, ModelFile, TrainedModel};
pub use mlp::{train_mlp, MlpConfig, MlpModel, TrainReport};
pub use rules::{
    build_rule_input, fit_rule_thresholds, rule_classify, RuleClassifier, RuleGrid, RuleInput,
    Thresholds,
};

use crate::corpus::tagger::NOUN_TAGS;
use crate::corpus::{words, TitleRecord};
use crate::error::{Error, Result};
use crate::features::readability::{dale_chall, sentence_count};
use crate::features::Resources;

/// Word positions tagged as nouns, or every position (and `true`) when the
/// record carries no tags.
pub(crate) fn noun_positions(record: &TitleRecord, n_words: usize) -> (Vec<usize>, bool) {
    match record.word_tags() {
        Some(tags) => (
            tags.iter()
                .enumerate()
                .filter(|(_, t)| NOUN_TAGS.contains(t))
                .map(|(i, _)| i)
                .collect(),
            false,
        ),
        None => ((0..n_words).collect(), true),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimpleScoreKind {
    MaxNounFunniness,
    DaleChallInverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpleScore {
    pub value: f64,
    /// no scorable noun (or no words) was found; value is 0
    pub flag: bool,
}

/// One-number scores where higher means funnier: the highest noun
/// funniness, or Dale-Chall negated.
pub fn simple_score(
    kind: SimpleScoreKind,
    record: &TitleRecord,
    resources: &Resources,
) -> Result<SimpleScore> {
    let tokens = record.tokens();
    let ws = words(&tokens);
    match kind {
        SimpleScoreKind::MaxNounFunniness => {
            let table = resources.funniness.as_ref().ok_or_else(|| {
                Error::MissingResource("noun funniness needs a funniness table".into())
            })?;
            let (positions, _) = noun_positions(record, ws.len());
            let best = positions
                .iter()
                .filter_map(|&i| table.get(ws[i]))
                .fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |a| a.max(v)))
                });
            Ok(match best {
                Some(v) => SimpleScore {
                    value: v,
                    flag: false,
                },
                None => SimpleScore {
                    value: 0.0,
                    flag: true,
                },
            })
        }
        SimpleScoreKind::DaleChallInverse => {
            let r = dale_chall(&ws, sentence_count(&tokens), resources.familiar_words());
            Ok(SimpleScore {
                value: if r.empty { 0.0 } else { -r.value },
                flag: r.empty,
            })
        }
    }
}
