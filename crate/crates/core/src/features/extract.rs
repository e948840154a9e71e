use std::collections::HashMap;
use std::io::{Read, Write};

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::readability::{ari, dale_chall, sentence_count};
use super::{
    check_resources, combined_product_stats, combined_ratio_stats, FeatureSpec, Resources, Source,
};
use crate::corpus::tagger::NOUN_TAGS;
use crate::corpus::{words, TitleRecord};
use crate::error::{Error, Result};
use crate::lexicons::{DEFAULT_AOA, DEFAULT_FUNNINESS};
use crate::summary::SummaryStats;

/// Feature values of one title, aligned with a [`FeatureSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: String,
    pub values: Vec<f64>,
    /// Slot computed from no data (empty title, zero lexicon coverage).
    pub missing: Vec<bool>,
    pub empty: bool,
    /// Noun features fell back to all words because the record had no tags.
    pub noun_fallback: bool,
}

/// Extracts one title's features. Pure in (record, resources, spec).
pub fn extract_features(
    record: &TitleRecord,
    resources: &Resources,
    spec: &FeatureSpec,
) -> Result<FeatureVector> {
    check_resources(spec, resources)?;
    extract_unchecked(record, resources, spec)
}

fn extract_unchecked(
    record: &TitleRecord,
    resources: &Resources,
    spec: &FeatureSpec,
) -> Result<FeatureVector> {
    let tokens = record.tokens();
    let ws = words(&tokens);
    if ws.is_empty() {
        return Ok(FeatureVector {
            id: record.id.clone(),
            values: vec![0.0; spec.len()],
            missing: vec![true; spec.len()],
            empty: true,
            noun_fallback: false,
        });
    }

    let mut title_surprisals: HashMap<u8, Vec<f64>> = HashMap::new();
    let mut per_word = |n: u8| -> Vec<f64> {
        title_surprisals
            .entry(n)
            .or_insert_with(|| resources.title_lms[&n].word_surprisals(&ws))
            .clone()
    };
    let word_count = ws.len();
    let mut noun_fallback = false;
    let mut values = Vec::with_capacity(spec.len());
    let mut missing = Vec::with_capacity(spec.len());

    for f in &spec.features {
        let (stats, slot_missing): (SummaryStats, bool) = match &f.source {
            Source::TitleLm(n) => (SummaryStats::from_values(&per_word(*n)), false),
            Source::JokeLm(n) => (
                SummaryStats::from_values(&resources.joke_lms[n].word_surprisals(&ws)),
                false,
            ),
            Source::PosLm(n) => {
                let tags = record.pos.as_ref().ok_or_else(|| {
                    Error::invalid(format!(
                        "record `{}` has no POS tags but the spec uses POS features",
                        record.id
                    ))
                })?;
                let s = SummaryStats::from_values(&resources.pos_lms[n].word_surprisals(tags));
                (s, false)
            }
            Source::External(m) => {
                let s = resources.external[m].stats(&record.id).ok_or_else(|| {
                    Error::MissingResource(format!("no `{m}` scores for title `{}`", record.id))
                })?;
                (s, s.empty)
            }
            Source::TitleLength => (SummaryStats::from_values(&[word_count as f64]), false),
            Source::WordLength => {
                let lens: Vec<f64> = ws.iter().map(|w| w.chars().count() as f64).collect();
                (SummaryStats::from_values(&lens), false)
            }
            Source::Ari => {
                let r = ari(&ws, sentence_count(&tokens));
                (SummaryStats::from_values(&[r.value]), r.empty)
            }
            Source::DaleChall => {
                let r = dale_chall(&ws, sentence_count(&tokens), resources.familiar_words());
                (SummaryStats::from_values(&[r.value]), r.empty)
            }
            Source::Aoa => {
                let l = resources
                    .aoa
                    .as_ref()
                    .map(|t| t.lookup_stats(&ws))
                    .unwrap_or_else(|| unreachable!());
                (l.stats, l.coverage == 0.0)
            }
            Source::SurprisalOverAoa(n) => {
                let table = resources.aoa.as_ref().unwrap_or_else(|| unreachable!());
                let s = per_word(*n);
                let denom: Vec<f64> = ws
                    .iter()
                    .map(|w| table.get(w).unwrap_or(DEFAULT_AOA))
                    .collect();
                (combined_ratio_stats(&s[..word_count], &denom)?, false)
            }
            Source::Crudeness => {
                let m = resources.nbsvm.as_ref().unwrap_or_else(|| unreachable!());
                (
                    SummaryStats::from_values(&[m.crudeness_prob(&record.text)]),
                    false,
                )
            }
            Source::SurprisalOverBenign(n) => {
                let m = resources.nbsvm.as_ref().unwrap_or_else(|| unreachable!());
                let s = per_word(*n);
                let denom: Vec<f64> = ws.iter().map(|w| m.word_benign_prob(w)).collect();
                (combined_ratio_stats(&s[..word_count], &denom)?, false)
            }
            Source::NounFunniness => {
                let table = resources
                    .funniness
                    .as_ref()
                    .unwrap_or_else(|| unreachable!());
                let nouns: Vec<&str> = match record.word_tags() {
                    Some(tags) => ws
                        .iter()
                        .zip(tags)
                        .filter(|(_, t)| NOUN_TAGS.contains(t))
                        .map(|(w, _)| *w)
                        .collect(),
                    None => {
                        noun_fallback = true;
                        ws.clone()
                    }
                };
                let l = table.lookup_stats(&nouns);
                (l.stats, l.coverage == 0.0)
            }
            Source::SurprisalTimesFunniness(n) => {
                let table = resources
                    .funniness
                    .as_ref()
                    .unwrap_or_else(|| unreachable!());
                let s = per_word(*n);
                let vals: Vec<f64> = ws
                    .iter()
                    .map(|w| table.get(w).unwrap_or(DEFAULT_FUNNINESS))
                    .collect();
                (combined_product_stats(&s[..word_count], &vals)?, false)
            }
        };
        let v = stats.get(f.stat);
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "feature `{}` is {v} for title `{}`",
                f.name, record.id
            )));
        }
        values.push(v);
        missing.push(slot_missing || stats.empty);
    }
    Ok(FeatureVector {
        id: record.id.clone(),
        values,
        missing,
        empty: false,
        noun_fallback,
    })
}

/// Row-per-title feature matrix with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Keeps only the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<FeatureMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::invalid(format!("no feature column `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureMatrix {
            ids: self.ids.clone(),
            names: names.iter().map(|s| s.to_string()).collect(),
            values: self.values.select(Axis(1), &idx),
        })
    }

    pub fn rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            names: self.names.clone(),
            values: self.values.select(Axis(0), idx),
        }
    }
}

/// Extracts all records in parallel; row order equals input order.
pub fn build_matrix(
    records: &[TitleRecord],
    resources: &Resources,
    spec: &FeatureSpec,
) -> Result<FeatureMatrix> {
    check_resources(spec, resources)?;
    let rows: Vec<Result<FeatureVector>> = records
        .par_iter()
        .map(|r| extract_unchecked(r, resources, spec))
        .collect();
    let mut values = Array2::zeros((records.len(), spec.len()));
    let mut ids = Vec::with_capacity(records.len());
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        for (j, v) in row.values.iter().enumerate() {
            values[[i, j]] = *v;
        }
        ids.push(row.id);
    }
    Ok(FeatureMatrix {
        ids,
        names: spec.names().into_iter().map(str::to_string).collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    /// population standard deviation
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl StandardizationStats {
    pub fn fit(values: &Array2<f64>) -> Self {
        let n = values.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(values.ncols());
        let mut std = Vec::with_capacity(values.ncols());
        let mut constant = Vec::with_capacity(values.ncols());
        for col in values.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            std.push(s);
            constant.push(values.nrows() == 0 || s <= 1e-12 * (1.0 + m.abs()));
        }
        StandardizationStats {
            mean,
            std,
            constant,
        }
    }

    pub fn apply(&self, values: &Array2<f64>) -> Result<Array2<f64>> {
        if values.ncols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "matrix has {} columns, standardization stats have {}",
                values.ncols(),
                self.mean.len()
            )));
        }
        let mut out = values.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            if self.constant[j] {
                continue;
            }
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        Ok(out)
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mean.len() {
            return Err(Error::Shape(format!(
                "row has {} values, expected {}",
                row.len(),
                self.mean.len()
            )));
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, v)| {
                if self.constant[j] {
                    *v
                } else {
                    (v - self.mean[j]) / self.std[j]
                }
            })
            .collect())
    }
}

/// Z-scores columns with `stats`, or with stats fitted on `values` when `None`.
pub fn standardize(
    values: &Array2<f64>,
    stats: Option<&StandardizationStats>,
) -> Result<(Array2<f64>, StandardizationStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => StandardizationStats::fit(values),
    };
    let out = stats.apply(values)?;
    Ok((out, stats))
}

/// CSV with an `id` column then one column per feature.
pub fn write_matrix_csv<W: Write>(w: W, m: &FeatureMatrix) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string()];
    header.extend(m.names.iter().cloned());
    wr.write_record(&header)?;
    for (i, id) in m.ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(m.values.row(i).iter().map(|v| v.to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(r: R, origin: &str) -> Result<FeatureMatrix> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("id") {
        return Err(Error::parse(origin, 1, "first column must be `id`"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        if rec.len() != names.len() + 1 {
            return Err(Error::parse(
                origin,
                line,
                format!("expected {} cells, found {}", names.len() + 1, rec.len()),
            ));
        }
        ids.push(rec[0].to_string());
        for cell in rec.iter().skip(1) {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(origin, line, format!("`{cell}` is not a number")))?;
            flat.push(v);
        }
    }
    let values = Array2::from_shape_vec((ids.len(), names.len()), flat)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok(FeatureMatrix { ids, names, values })
}
