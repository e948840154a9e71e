use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{train_mlp, MlpConfig, MlpModel, TrainReport};
use crate::corpus::{words, Field, TitleRecord};
use crate::error::{Error, Result};
use crate::features::readability::{dale_chall, sentence_count};
use crate::features::Resources;
use crate::lexicons::DEFAULT_AOA;

pub const ENSEMBLE_FORMAT: &str = "IGGY-ENS-1";
pub const FIELD_WIDTH: usize = Field::KNOWN.len();

/// Title-level inputs for the meta-classifier, one row per title.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaFeatures {
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

/// Title length, mean AoA (with an AoA table), Dale-Chall and a punctuation
/// flag; with a valence table also mean valence and mean distance from the
/// table's average valence.
pub fn meta_features(records: &[TitleRecord], resources: &Resources) -> MetaFeatures {
    let mut names = vec!["title_length".to_string()];
    if resources.aoa.is_some() {
        names.push("aoa_mean".into());
    }
    names.push("dale_chall".into());
    names.push("has_punctuation".into());
    let valence_centre = resources.valence.as_ref().map(|t| {
        let mut vals = t.values();
        vals.sort_by(f64::total_cmp);
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    });
    if valence_centre.is_some() {
        names.push("valence_mean".into());
        names.push("valence_strength".into());
    }
    let mut values = Array2::zeros((records.len(), names.len()));
    for (i, r) in records.iter().enumerate() {
        let tokens = r.tokens();
        let ws = words(&tokens);
        let mut row = vec![ws.len() as f64];
        if let Some(t) = &resources.aoa {
            let l = t.lookup_stats(&ws);
            row.push(if l.coverage > 0.0 {
                l.stats.mean
            } else {
                DEFAULT_AOA
            });
        }
        row.push(dale_chall(&ws, sentence_count(&tokens), resources.familiar_words()).value);
        row.push(f64::from(u8::from(tokens.iter().any(|t| !t.is_word))));
        if let (Some(t), Some(centre)) = (&resources.valence, valence_centre) {
            let found: Vec<f64> = ws.iter().filter_map(|w| t.get(w)).collect();
            let n = found.len().max(1) as f64;
            row.push(if found.is_empty() {
                centre
            } else {
                found.iter().sum::<f64>() / n
            });
            row.push(found.iter().map(|v| (v - centre).abs()).sum::<f64>() / n);
        }
        values.row_mut(i).assign(&Array1::from(row));
    }
    MetaFeatures { names, values }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub mlp: MlpConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            mlp: MlpConfig {
                hidden: vec![64],
                l2: 1e-3,
                ..MlpConfig::default()
            },
        }
    }
}

/// Stacking meta-classifier over base-model scores, field one-hot and
/// optional title meta-features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub format: String,
    pub spec_hash: Option<String>,
    pub base_tags: Vec<String>,
    pub meta_names: Vec<String>,
    pub mlp: MlpModel,
}

/// Row layout: base scores, 4-way field one-hot (all zero for unknown), meta-features.
pub fn ensemble_inputs(
    base_scores: &Array2<f64>,
    fields: &[Field],
    meta: Option<&Array2<f64>>,
) -> Result<Array2<f64>> {
    let n = base_scores.nrows();
    if fields.len() != n || meta.is_some_and(|m| m.nrows() != n) {
        return Err(Error::Shape(format!(
            "{n} base-score rows, {} fields, {} meta rows",
            fields.len(),
            meta.map(|m| m.nrows()).unwrap_or(n)
        )));
    }
    let b = base_scores.ncols();
    let m = meta.map(|m| m.ncols()).unwrap_or(0);
    let mut out = Array2::zeros((n, b + FIELD_WIDTH + m));
    for i in 0..n {
        for j in 0..b {
            out[[i, j]] = base_scores[[i, j]];
        }
        if let Some(k) = fields[i].one_hot_index() {
            out[[i, b + k]] = 1.0;
        }
        if let Some(meta) = meta {
            for j in 0..m {
                out[[i, b + FIELD_WIDTH + j]] = meta[[i, j]];
            }
        }
    }
    Ok(out)
}

/// Trains the meta-classifier. `base_scores` holds one row per title and
/// one column per base model, scored on a split the base models never saw.
/// Passing no meta-features gives the reduced variant (scores + field).
pub fn train_stacking_ensemble(
    base_tags: &[String],
    base_scores: &Array2<f64>,
    fields: &[Field],
    meta: Option<&MetaFeatures>,
    y: &[bool],
    config: &EnsembleConfig,
) -> Result<(EnsembleModel, TrainReport)> {
    if base_tags.len() != base_scores.ncols() || base_tags.is_empty() {
        return Err(Error::Shape(format!(
            "{} base tags for {} score columns",
            base_tags.len(),
            base_scores.ncols()
        )));
    }
    let x = ensemble_inputs(base_scores, fields, meta.map(|m| &m.values))?;
    let (mlp, report) = train_mlp(&x, y, &config.mlp)?;
    Ok((
        EnsembleModel {
            format: ENSEMBLE_FORMAT.into(),
            spec_hash: None,
            base_tags: base_tags.to_vec(),
            meta_names: meta.map(|m| m.names.clone()).unwrap_or_default(),
            mlp,
        },
        report,
    ))
}

impl EnsembleModel {
    pub fn input_width(&self) -> usize {
        self.base_tags.len() + FIELD_WIDTH + self.meta_names.len()
    }

    pub fn predict_proba(
        &self,
        base_scores: &Array2<f64>,
        fields: &[Field],
        meta: Option<&MetaFeatures>,
    ) -> Result<Array1<f64>> {
        let given: Vec<String> = meta.map(|m| m.names.clone()).unwrap_or_default();
        if given != self.meta_names {
            return Err(Error::Shape(format!(
                "ensemble expects meta-features {:?}, got {:?}",
                self.meta_names, given
            )));
        }
        let x = ensemble_inputs(base_scores, fields, meta.map(|m| &m.values))?;
        self.mlp.predict_proba(&x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::auc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Model A errs on every neuroscience title, model B on every biology title;
    /// each is right on 75 % of titles overall.
    fn anticorrelated(n: usize, seed: u64) -> (Array2<f64>, Vec<Field>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scores = Array2::zeros((n, 2));
        let mut fields = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = rng.gen_bool(0.5);
            let field = Field::KNOWN[i % 4];
            let a_wrong = field == Field::Neuroscience;
            let b_wrong = field == Field::Biology;
            let conf = |wrong: bool, rng: &mut ChaCha8Rng| {
                let p = rng.gen_range(0.55..0.95);
                if label != wrong {
                    p
                } else {
                    1.0 - p
                }
            };
            scores[[i, 0]] = conf(a_wrong, &mut rng);
            scores[[i, 1]] = conf(b_wrong, &mut rng);
            fields.push(field);
            y.push(label);
        }
        (scores, fields, y)
    }

    fn acc(p: &Array1<f64>, y: &[bool]) -> f64 {
        p.iter().zip(y).filter(|(p, y)| (**p > 0.5) == **y).count() as f64 / y.len() as f64
    }

    #[test]
    fn anticorrelated_bases_are_combined() {
        let (s, f, y) = anticorrelated(800, 1);
        let tags = vec!["a".to_string(), "b".to_string()];
        for j in 0..2 {
            let base = acc(&s.column(j).to_owned(), &y);
            assert!((0.7..0.8).contains(&base), "{base}");
        }
        let (m, _) =
            train_stacking_ensemble(&tags, &s, &f, None, &y, &EnsembleConfig::default()).unwrap();
        let (ts, tf, ty) = anticorrelated(400, 2);
        let p = m.predict_proba(&ts, &tf, None).unwrap();
        assert!(acc(&p, &ty) > 0.75, "{}", acc(&p, &ty));
    }

    #[test]
    fn single_base_keeps_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let make = |n: usize, rng: &mut ChaCha8Rng| {
            let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let s = Array2::from_shape_fn(
                (n, 1),
                |(i, _)| if y[i] { 0.6 } else { 0.4 } + rng.gen_range(-0.3..0.3),
            );
            let f: Vec<Field> = (0..n).map(|i| Field::KNOWN[i % 4]).collect();
            (s, f, y)
        };
        let (s, f, y) = make(600, &mut rng);
        let (m, _) = train_stacking_ensemble(
            &["base".into()],
            &s,
            &f,
            None,
            &y,
            &EnsembleConfig::default(),
        )
        .unwrap();
        let (ts, tf, ty) = make(400, &mut rng);
        let p = m.predict_proba(&ts, &tf, None).unwrap();
        let base_auc = auc(&ts.column(0).to_vec(), &ty).unwrap();
        let ens_auc = auc(&p.to_vec(), &ty).unwrap();
        assert!(ens_auc >= base_auc - 0.02, "{ens_auc} vs {base_auc}");
    }

    #[test]
    fn reduced_width() {
        let (s, f, y) = anticorrelated(40, 4);
        let cfg = EnsembleConfig {
            mlp: MlpConfig {
                max_epochs: 2,
                ..EnsembleConfig::default().mlp
            },
        };
        let (m, _) =
            train_stacking_ensemble(&["a".into(), "b".into()], &s, &f, None, &y, &cfg).unwrap();
        assert_eq!(m.input_width(), 2 + 4);
        assert_eq!(m.mlp.input_dim(), 6);
        assert!(train_stacking_ensemble(&["a".into()], &s, &f, None, &y, &cfg).is_err());
        assert!(
            train_stacking_ensemble(&["a".into(), "b".into()], &s, &f[..3], None, &y, &cfg)
                .is_err()
        );
    }

    #[test]
    fn meta_features_layout() {
        let aoa = crate::lexicons::WordValueTable::from_entries(
            crate::lexicons::TableKind::Aoa,
            crate::lexicons::DefaultPolicy::Skip,
            [("cat", 3.0)],
        )
        .unwrap();
        let res = Resources {
            aoa: Some(aoa),
            ..Default::default()
        };
        let recs = vec![
            TitleRecord::new("1", "The cat, again"),
            TitleRecord::new("2", "zzz"),
        ];
        let m = meta_features(&recs, &res);
        assert_eq!(
            m.names,
            ["title_length", "aoa_mean", "dale_chall", "has_punctuation"]
        );
        assert_eq!(m.values.row(0)[0], 3.0);
        assert_eq!(m.values.row(0)[1], 3.0);
        assert_eq!(m.values.row(1)[1], DEFAULT_AOA);
        assert_eq!(m.values.row(0)[3], 1.0);
        assert_eq!(m.values.row(1)[3], 0.0);
    }
}
