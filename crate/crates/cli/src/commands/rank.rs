use std::path::Path;

use anyhow::{anyhow, Context, Result};
use iggy_core::classify::{meta_features, ModelFile, TrainedModel};
use iggy_core::corpus::{Field, TitleRecord};
use iggy_core::eval::RankedList;
use iggy_core::features::FeatureSpec;
use ndarray::Array2;

use super::extract::SPEC_FILE;
use super::train::BASE_DIR;
use super::{finish, in_pool, start};
use crate::config::PipelineConfig;
use crate::context::{require_paths, simple_kind, Fitted, Learner, Prepared, Workspace};
use crate::manifest::RunManifest;

pub const RANKING_FILE: &str = "ranking.tsv";

/// Spec for a stored model: the configured one, else the spec file saved
/// next to the model, else the canonical spec for the loaded resources.
fn model_spec(
    ws: &Workspace,
    model_dir: &Path,
    inputs: &mut Vec<std::path::PathBuf>,
) -> Result<Option<FeatureSpec>> {
    if ws.spec_override.is_some() {
        return Ok(None);
    }
    let p = model_dir.join(SPEC_FILE);
    if p.exists() {
        inputs.push(p.clone());
        return Ok(Some(FeatureSpec::load(&p)?));
    }
    Ok(None)
}

fn as_fitted(model: TrainedModel) -> Result<(Learner, Fitted)> {
    Ok(match model {
        TrainedModel::Mlp(m) => (Learner::Iggy, Fitted::Mlp(m)),
        TrainedModel::Fusion(m) => (Learner::Fusion, Fitted::Fusion(m)),
        TrainedModel::Bow(m) => (Learner::LrBow, Fitted::Bow(m)),
        TrainedModel::Rule(m) => (Learner::Rule, Fitted::Rule(m)),
        TrainedModel::Ensemble(_) => return Err(anyhow!("an ensemble cannot be a base model")),
    })
}

/// Scores of a stored model for `records`; ensemble bases are read from
/// `base/` next to the model file.
pub(crate) fn score_model(
    ws: &Workspace,
    model: TrainedModel,
    model_dir: &Path,
    records: &[TitleRecord],
    inputs: &mut Vec<std::path::PathBuf>,
) -> Result<Vec<f64>> {
    let spec = model_spec(ws, model_dir, inputs)?;
    let check = |m: &dyn Fn(&FeatureSpec) -> iggy_core::Result<()>,
                 spec: &Option<FeatureSpec>|
     -> Result<()> {
        let s = match spec {
            Some(s) => s.clone(),
            None => ws.spec()?,
        };
        Ok(m(&s)?)
    };
    let idx: Vec<usize> = (0..records.len()).collect();
    match model {
        TrainedModel::Ensemble(ens) => {
            let mut learners = Vec::new();
            let mut fitted = Vec::new();
            for tag in &ens.base_tags {
                let l: Learner = tag.parse()?;
                let f = match l {
                    Learner::MaxNounFunniness | Learner::DaleChallInverse => Fitted::Simple {
                        kind: simple_kind(l),
                        threshold: 0.0,
                    },
                    _ => {
                        let p = model_dir.join(BASE_DIR).join(format!("{tag}.json"));
                        require_paths([("ensemble base model", p.as_path())])?;
                        inputs.push(p.clone());
                        as_fitted(TrainedModel::load(&p)?)?.1
                    }
                };
                learners.push(l);
                fitted.push(f);
            }
            if learners
                .iter()
                .any(|l| matches!(l, Learner::Iggy | Learner::Fusion))
            {
                check(&|s| ens.check_spec(s), &spec)?;
            }
            let prep = Prepared::new(ws, records, &learners, spec)?;
            let mut scores = Array2::zeros((records.len(), fitted.len()));
            for (j, f) in fitted.iter().enumerate() {
                for (i, s) in prep.score(f, &idx)?.into_iter().enumerate() {
                    scores[[i, j]] = s;
                }
            }
            let fields: Vec<Field> = records.iter().map(|r| r.field).collect();
            let meta = (!ens.meta_names.is_empty()).then(|| meta_features(records, &ws.resources));
            Ok(ens.predict_proba(&scores, &fields, meta.as_ref())?.to_vec())
        }
        other => {
            let (learner, fitted) = as_fitted(other)?;
            match &fitted {
                Fitted::Mlp(m) => check(&|s| m.check_spec(s), &spec)?,
                Fitted::Fusion(m) => check(&|s| m.check_spec(s), &spec)?,
                _ => {}
            }
            let prep = Prepared::new(ws, records, &[learner], spec)?;
            prep.score(&fitted, &idx)
        }
    }
}

/// Ranks `corpus` (default: `corpus.titles`) by a stored model's score,
/// highest first, ties by ascending id.
pub fn cmd_rank(
    cfg: &PipelineConfig,
    model_file: &Path,
    corpus: Option<&Path>,
    top: Option<usize>,
) -> Result<RunManifest> {
    let corpus = match corpus {
        Some(p) => p.to_path_buf(),
        None => cfg
            .corpus
            .titles
            .clone()
            .context("rank needs a corpus: pass one or set corpus.titles")?,
    };
    require_paths([("model", model_file), ("corpus", corpus.as_path())])?;
    let model = TrainedModel::load(model_file)?;
    let mut ws = Workspace::load(cfg)?;
    let model_dir = model_file.parent().unwrap_or(Path::new(".")).to_path_buf();
    in_pool(cfg, || {
        let records = ws.records(&corpus)?;
        let mut inputs = vec![model_file.to_path_buf()];
        let scores = score_model(&ws, model, &model_dir, &records, &mut inputs)?;
        let mut ranked = RankedList::from_scores(records.iter().map(|r| r.id.clone()).zip(scores))?;
        if let Some(k) = top {
            if k < ranked.len() {
                ranked = ranked.top(k);
            } else {
                log::warn!(
                    "--top {k} exceeds the corpus size {}; writing all titles",
                    ranked.len()
                );
            }
        }
        let mut run = start(cfg, "rank")?;
        run.inputs(ws.inputs.iter().cloned());
        run.inputs(inputs);
        run.write_with(RANKING_FILE, |w| Ok(ranked.write_tsv(w)?))?;
        log::info!("ranked {} titles", ranked.len());
        finish(run)
    })
}
