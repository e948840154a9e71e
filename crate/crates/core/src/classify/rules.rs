use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::noun_positions;
use crate::corpus::{words, Field, TitleRecord};
use crate::error::{Error, Result};
use crate::features::Resources;
use crate::lexicons::ConnotationFlags;
use crate::lm::NGramModel;

pub const RULE_FORMAT: &str = "IGGY-RULE-1";

/// Per-noun values the rule looks at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NounObservation {
    pub word: String,
    pub aoa: Option<f64>,
    pub funniness: Option<f64>,
    pub surprisal_field: f64,
    pub surprisal_global: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleInput {
    pub id: String,
    pub field: Field,
    pub flags: ConnotationFlags,
    pub nouns: Vec<NounObservation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub aoa_low: f64,
    pub funniness_high: f64,
    pub surprisal_high_field: f64,
    pub surprisal_high_global: f64,
}

impl Thresholds {
    fn is_finite(&self) -> bool {
        [
            self.aoa_low,
            self.funniness_high,
            self.surprisal_high_field,
            self.surprisal_high_global,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleClassifier {
    pub format: String,
    pub thresholds: BTreeMap<Field, Thresholds>,
    /// used for fields without their own thresholds
    pub fallback: Thresholds,
    /// training accuracy per field, plus the fallback under `unknown`
    pub accuracy: BTreeMap<Field, f64>,
}

/// Candidate values per threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleGrid {
    pub aoa_low: Vec<f64>,
    pub funniness_high: Vec<f64>,
    pub surprisal_high_field: Vec<f64>,
    pub surprisal_high_global: Vec<f64>,
}

fn quantiles(mut values: Vec<f64>, qs: &[f64]) -> Vec<f64> {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return vec![0.0];
    }
    values.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = qs
        .iter()
        .map(|q| values[((values.len() - 1) as f64 * q).round() as usize])
        .collect();
    out.dedup();
    out
}

impl RuleGrid {
    /// AoA 3–10 in whole years; the other thresholds at noun-value quantiles.
    pub fn from_inputs(inputs: &[RuleInput]) -> Self {
        const QS: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95];
        let nouns = || inputs.iter().flat_map(|r| r.nouns.iter());
        RuleGrid {
            aoa_low: (3..=10).map(f64::from).collect(),
            funniness_high: quantiles(nouns().filter_map(|n| n.funniness).collect(), &QS),
            surprisal_high_field: quantiles(nouns().map(|n| n.surprisal_field).collect(), &QS),
            surprisal_high_global: quantiles(nouns().map(|n| n.surprisal_global).collect(), &QS),
        }
    }

    fn sorted(&self) -> Result<[Vec<f64>; 4]> {
        let mut out = [
            self.aoa_low.clone(),
            self.funniness_high.clone(),
            self.surprisal_high_field.clone(),
            self.surprisal_high_global.clone(),
        ];
        for (name, v) in [
            "aoa_low",
            "funniness_high",
            "surprisal_high_field",
            "surprisal_high_global",
        ]
        .iter()
        .zip(out.iter_mut())
        {
            if v.is_empty() {
                return Err(Error::invalid(format!("rule grid for `{name}` is empty")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "rule grid for `{name}` has a non-finite value"
                )));
            }
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        Ok(out)
    }

    pub fn cells(&self) -> usize {
        self.aoa_low.len()
            * self.funniness_high.len()
            * self.surprisal_high_field.len()
            * self.surprisal_high_global.len()
    }
}

/// The rule itself: a white-list noun without a black-list word, or a
/// low-AoA noun that is funny or surprising.
pub fn rule_decision(input: &RuleInput, t: &Thresholds) -> bool {
    if input.flags.has_white && !input.flags.has_black {
        return true;
    }
    input.nouns.iter().any(|n| {
        n.aoa.is_some_and(|a| a < t.aoa_low)
            && (n.funniness.is_some_and(|f| f > t.funniness_high)
                || n.surprisal_field > t.surprisal_high_field
                || n.surprisal_global > t.surprisal_high_global)
    })
}

impl RuleClassifier {
    pub fn thresholds_for(&self, field: Field) -> &Thresholds {
        self.thresholds.get(&field).unwrap_or(&self.fallback)
    }

    pub fn check(&self) -> Result<()> {
        if self.format != RULE_FORMAT {
            return Err(Error::Version {
                expected: RULE_FORMAT.into(),
                found: self.format.clone(),
            });
        }
        if !self.fallback.is_finite() || self.thresholds.values().any(|t| !t.is_finite()) {
            return Err(Error::invalid("rule thresholds must be finite"));
        }
        Ok(())
    }
}

pub fn rule_classify(rc: &RuleClassifier, input: &RuleInput) -> bool {
    rule_decision(input, rc.thresholds_for(input.field))
}

/// Exhaustive search; the first best cell in (aoa_low, surprisal_high_field,
/// surprisal_high_global, funniness_high) ascending order wins ties.
fn best_cell(inputs: &[&RuleInput], labels: &[bool], grid: &[Vec<f64>; 4]) -> (Thresholds, f64) {
    let [aoa, fun, sf, sg] = grid;
    let mut best: Option<(Thresholds, usize)> = None;
    for &a in aoa {
        for &f_ in sf {
            for &g in sg {
                for &u in fun {
                    let t = Thresholds {
                        aoa_low: a,
                        funniness_high: u,
                        surprisal_high_field: f_,
                        surprisal_high_global: g,
                    };
                    let correct = inputs
                        .iter()
                        .zip(labels)
                        .filter(|(r, y)| rule_decision(r, &t) == **y)
                        .count();
                    if best.is_none_or(|(_, c)| correct > c) {
                        best = Some((t, correct));
                    }
                }
            }
        }
    }
    let (t, c) = best.unwrap_or_else(|| unreachable!());
    (t, c as f64 / inputs.len().max(1) as f64)
}

/// Grid-searches one threshold set per field present in `inputs`, plus a
/// fallback fitted on all records.
pub fn fit_rule_thresholds(
    inputs: &[RuleInput],
    labels: &[bool],
    grid: &RuleGrid,
) -> Result<RuleClassifier> {
    if inputs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if inputs.is_empty() {
        return Err(Error::invalid("no records to fit rule thresholds on"));
    }
    let grid = grid.sorted()?;
    let all: Vec<&RuleInput> = inputs.iter().collect();
    let (fallback, fallback_acc) = best_cell(&all, labels, &grid);
    let mut thresholds = BTreeMap::new();
    let mut accuracy = BTreeMap::new();
    accuracy.insert(Field::Unknown, fallback_acc);
    for field in Field::KNOWN {
        let (rows, ys): (Vec<&RuleInput>, Vec<bool>) = inputs
            .iter()
            .zip(labels)
            .filter(|(r, _)| r.field == field)
            .map(|(r, y)| (r, *y))
            .unzip();
        if rows.is_empty() {
            continue;
        }
        let (t, acc) = best_cell(&rows, &ys, &grid);
        thresholds.insert(field, t);
        accuracy.insert(field, acc);
    }
    Ok(RuleClassifier {
        format: RULE_FORMAT.into(),
        thresholds,
        fallback,
        accuracy,
    })
}

/// Collects rule inputs. The field LM is used when one exists for the
/// record's field, otherwise the global LM.
pub fn build_rule_input(
    record: &TitleRecord,
    resources: &Resources,
    field_lms: &BTreeMap<Field, NGramModel>,
    global: &NGramModel,
) -> Result<RuleInput> {
    let aoa = resources
        .aoa
        .as_ref()
        .ok_or_else(|| Error::MissingResource("the rule classifier needs an AoA table".into()))?;
    let fun = resources.funniness.as_ref().ok_or_else(|| {
        Error::MissingResource("the rule classifier needs a funniness table".into())
    })?;
    let lists = resources.connotation.as_ref().ok_or_else(|| {
        Error::MissingResource("the rule classifier needs connotation lists".into())
    })?;
    let tokens = record.tokens();
    let ws = words(&tokens);
    let field_lm = field_lms.get(&record.field).unwrap_or(global);
    let s_field = field_lm.word_surprisals(&ws);
    let s_global = global.word_surprisals(&ws);
    let (positions, _) = noun_positions(record, ws.len());
    let nouns = positions
        .into_iter()
        .map(|i| NounObservation {
            word: ws[i].to_string(),
            aoa: aoa.get(ws[i]),
            funniness: fun.get(ws[i]),
            surprisal_field: s_field[i],
            surprisal_global: s_global[i],
        })
        .collect();
    Ok(RuleInput {
        id: record.id.clone(),
        field: record.field,
        flags: lists.flags(&ws),
        nouns,
    })
}
