use std::io::Write;
use std::path::Path;

use anyhow::{bail, Result};
use iggy_core::classify::{
    meta_features, save_model, train_stacking_ensemble, EnsembleConfig, RuleClassifier, TrainReport,
};
use iggy_core::corpus::{split_dataset, Field, SplitSpec, TitleRecord};
use iggy_core::eval::{
    classification_report, cross_validate, write_metrics_csv, ClassificationReport, CvReport,
};
use ndarray::Array2;
use serde::Serialize;

use super::extract::SPEC_FILE;
use super::{finish, in_pool, start, write_train_report};
use crate::config::PipelineConfig;
use crate::context::{labels_of, parse_learners, Fitted, Learner, Prepared, Workspace};
use crate::manifest::{Run, RunManifest};

pub const MODEL_FILE: &str = "model.json";
pub const BASE_DIR: &str = "base";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Iggy,
    LrBow,
    Rule,
    Fusion,
    Ensemble,
}

impl ModelKind {
    fn learner(self) -> Option<Learner> {
        match self {
            ModelKind::Iggy => Some(Learner::Iggy),
            ModelKind::LrBow => Some(Learner::LrBow),
            ModelKind::Rule => Some(Learner::Rule),
            ModelKind::Fusion => Some(Learner::Fusion),
            ModelKind::Ensemble => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self.learner() {
            Some(l) => l.as_str(),
            None => "ensemble",
        }
    }
}

/// Writes a fitted model; single-score models have nothing to store.
pub(crate) fn save_fitted(path: &Path, fitted: &Fitted) -> Result<bool> {
    match fitted {
        Fitted::Mlp(m) => save_model(path, m)?,
        Fitted::Bow(m) => save_model(path, m)?,
        Fitted::Rule(m) => save_model(path, m)?,
        Fitted::Fusion(m) => save_model(path, m)?,
        Fitted::Simple { .. } => return Ok(false),
    }
    Ok(true)
}

#[derive(Debug, Serialize)]
struct TrainSummary<'a> {
    model: &'a str,
    titles: usize,
    positives: usize,
    seed: u64,
    spec_hash: Option<String>,
    train: ClassificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv: Option<&'a CvReport>,
}

fn cv_rows(name: &str, cv: &CvReport) -> Vec<(String, ClassificationReport)> {
    let mut rows: Vec<(String, ClassificationReport)> = cv
        .folds
        .iter()
        .enumerate()
        .map(|(i, r)| (format!("{name}/fold{}", i + 1), *r))
        .collect();
    rows.push((name.to_string(), cv.mean));
    rows
}

pub(crate) fn run_cv(
    prep: &Prepared,
    learner: Learner,
    y: &[bool],
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    let fold = |train: &[usize], test: &[usize]| -> Result<Vec<bool>> {
        let ytr: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let (fitted, _) = prep.fit(learner, train, &ytr)?;
        let scores = prep.score(&fitted, test)?;
        Ok(fitted.predict(&scores))
    };
    Ok(cross_validate(y, folds, seed, |train, test| {
        fold(train, test).map_err(|e| match e.downcast::<iggy_core::Error>() {
            Ok(core) => core,
            Err(other) => iggy_core::Error::InvalidInput(format!("{other:#}")),
        })
    })?)
}

fn write_rule_table(run: &mut Run, rc: &RuleClassifier) -> Result<String> {
    let mut rows: Vec<(String, iggy_core::classify::Thresholds, Option<f64>)> = rc
        .thresholds
        .iter()
        .map(|(f, t)| (f.to_string(), *t, rc.accuracy.get(f).copied()))
        .collect();
    rows.push((
        "fallback".into(),
        rc.fallback,
        rc.accuracy.get(&Field::Unknown).copied(),
    ));
    let mut table = String::from(
        "field,aoa_low,funniness_high,surprisal_high_field,surprisal_high_global,accuracy\n",
    );
    for (f, t, acc) in &rows {
        table.push_str(&format!(
            "{f},{},{},{},{},{}\n",
            t.aoa_low,
            t.funniness_high,
            t.surprisal_high_field,
            t.surprisal_high_global,
            acc.map_or(String::new(), |a| a.to_string())
        ));
    }
    run.write("thresholds.csv", &table)?;
    Ok(table)
}

/// Trains one model on the labeled dataset, with k-fold CV metrics when
/// `eval.folds` ≥ 2.
pub fn cmd_train(cfg: &PipelineConfig, kind: ModelKind) -> Result<RunManifest> {
    let mut ws = Workspace::load(cfg)?;
    let dataset = ws.dataset_path()?;
    in_pool(cfg, || {
        let records = ws.records(&dataset)?;
        let y = labels_of(&records)?;
        let Some(learner) = kind.learner() else {
            return train_ensemble(&ws, &records, &y);
        };
        let prep = Prepared::new(&ws, &records, &[learner], None)?;
        let mut run = start(cfg, &format!("train {}", kind.as_str()))?;
        run.inputs(ws.inputs.iter().cloned());

        let cv = if cfg.eval.folds >= 2 {
            let cv = run_cv(&prep, learner, &y, cfg.eval.folds, cfg.seed)?;
            log::info!(
                "{}-fold CV accuracy {:.4} ± {:.4}",
                cfg.eval.folds,
                cv.mean.accuracy,
                cv.std_accuracy
            );
            run.write_json("cv.json", &cv)?;
            run.write_with("metrics.csv", |w| {
                Ok(write_metrics_csv(w, &cv_rows(learner.as_str(), &cv))?)
            })?;
            Some(cv)
        } else {
            None
        };

        let all: Vec<usize> = (0..records.len()).collect();
        let (fitted, report) = prep.fit(learner, &all, &y)?;
        let scores = prep.score(&fitted, &all)?;
        let train = classification_report(&fitted.predict(&scores), &y)?;
        log::info!("training accuracy {:.4}", train.accuracy);
        save_fitted(&run.output_path(MODEL_FILE)?, &fitted)?;
        if let Some(spec) = &prep.spec {
            run.write(SPEC_FILE, spec.to_json()?)?;
        }
        if let Some(report) = &report {
            write_train_report(&mut run, "", report)?;
        }
        if let Fitted::Rule(rc) = &fitted {
            let table = write_rule_table(&mut run, rc)?;
            print!("{table}");
            std::io::stdout().flush()?;
        }
        run.write_json(
            "train_summary.json",
            &TrainSummary {
                model: learner.as_str(),
                titles: records.len(),
                positives: y.iter().filter(|v| **v).count(),
                seed: cfg.seed,
                spec_hash: prep.spec.as_ref().map(|s| s.hash()),
                train,
                cv: cv.as_ref(),
            },
        )?;
        finish(run)
    })
}

fn part<'a>(splits: &'a iggy_core::corpus::Splits, name: &str) -> &'a [TitleRecord] {
    splits.get(name).unwrap_or_default()
}

fn base_score_matrix(prep: &Prepared, fitted: &[Fitted]) -> Result<Array2<f64>> {
    let idx: Vec<usize> = (0..prep.records.len()).collect();
    let mut out = Array2::zeros((idx.len(), fitted.len()));
    for (j, f) in fitted.iter().enumerate() {
        for (i, s) in prep.score(f, &idx)?.into_iter().enumerate() {
            out[[i, j]] = s;
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct EnsembleSummary {
    bases: Vec<String>,
    base_titles: usize,
    meta_titles: usize,
    test_titles: usize,
    meta_features: Vec<String>,
    spec_hash: Option<String>,
    /// hold-out metrics per model, the ensemble last
    test: Vec<(String, ClassificationReport)>,
}

/// Bases on one split, the meta-classifier on their scores for a second,
/// hold-out metrics on a third.
fn train_ensemble(ws: &Workspace, records: &[TitleRecord], y: &[bool]) -> Result<RunManifest> {
    let cfg = &ws.cfg;
    let e = &cfg.ensemble;
    let bases = parse_learners(&e.bases)?;
    let t = e.test_share;
    let spec = SplitSpec::new(
        &["base", "meta", "test"],
        &[(1.0 - t) * (1.0 - e.share), (1.0 - t) * e.share, t],
        cfg.seed,
    );
    let splits = split_dataset(records, &spec)?;
    let (base_r, meta_r, test_r) = (
        part(&splits, "base"),
        part(&splits, "meta"),
        part(&splits, "test"),
    );
    log::info!(
        "ensemble split: {} base, {} meta, {} test titles",
        base_r.len(),
        meta_r.len(),
        test_r.len()
    );
    if t > 0.0 && test_r.is_empty() {
        bail!("the ensemble test split is empty; the dataset is too small for ensemble.test_share = {t}");
    }
    let shared_spec = if bases
        .iter()
        .any(|b| matches!(b, Learner::Iggy | Learner::Fusion))
    {
        Some(ws.spec()?)
    } else {
        None
    };
    let prep_base = Prepared::new(ws, base_r, &bases, shared_spec.clone())?;
    let prep_meta = Prepared::new(ws, meta_r, &bases, shared_spec.clone())?;
    let prep_test = Prepared::new(ws, test_r, &bases, shared_spec.clone())?;
    let y_base = labels_of(base_r)?;
    let y_meta = labels_of(meta_r)?;
    let y_test = labels_of(test_r)?;
    debug_assert_eq!(y_base.len() + y_meta.len() + y_test.len(), y.len());

    let mut run = start(cfg, "train ensemble")?;
    run.inputs(ws.inputs.iter().cloned());
    let idx: Vec<usize> = (0..base_r.len()).collect();
    let mut fitted = Vec::new();
    for b in &bases {
        let (f, report) = prep_base.fit(*b, &idx, &y_base)?;
        let tag = b.as_str();
        if !matches!(f, Fitted::Simple { .. }) {
            save_fitted(&run.output_path(&format!("{BASE_DIR}/{tag}.json"))?, &f)?;
        }
        if let Some(r) = &report {
            write_train_report(&mut run, &format!("{BASE_DIR}/{tag}_"), r)?;
        }
        fitted.push(f);
    }
    let tags: Vec<String> = bases.iter().map(|b| b.as_str().to_string()).collect();
    let meta_scores = base_score_matrix(&prep_meta, &fitted)?;
    let fields: Vec<Field> = meta_r.iter().map(|r| r.field).collect();
    let meta = e
        .meta_features
        .then(|| meta_features(meta_r, &ws.resources));
    let ecfg = EnsembleConfig { mlp: e.mlp.clone() };
    let (mut model, report): (_, TrainReport) =
        train_stacking_ensemble(&tags, &meta_scores, &fields, meta.as_ref(), &y_meta, &ecfg)?;
    model.spec_hash = shared_spec.as_ref().map(|s| s.hash());
    save_model(run.output_path(MODEL_FILE)?, &model)?;
    if let Some(spec) = &shared_spec {
        run.write(SPEC_FILE, spec.to_json()?)?;
    }
    write_train_report(&mut run, "", &report)?;

    let mut test = Vec::new();
    if !test_r.is_empty() {
        let scores = base_score_matrix(&prep_test, &fitted)?;
        for (j, (tag, f)) in tags.iter().zip(&fitted).enumerate() {
            let pred = f.predict(&scores.column(j).to_vec());
            test.push((tag.clone(), classification_report(&pred, &y_test)?));
        }
        let fields: Vec<Field> = test_r.iter().map(|r| r.field).collect();
        let tmeta = e
            .meta_features
            .then(|| meta_features(test_r, &ws.resources));
        let p = model.predict_proba(&scores, &fields, tmeta.as_ref())?;
        let pred: Vec<bool> = p.iter().map(|v| *v > 0.5).collect();
        let r = classification_report(&pred, &y_test)?;
        log::info!("ensemble hold-out accuracy {:.4}", r.accuracy);
        test.push(("ensemble".into(), r));
        run.write_with("metrics.csv", |w| Ok(write_metrics_csv(w, &test)?))?;
    }
    run.write_json(
        "train_summary.json",
        &EnsembleSummary {
            bases: tags,
            base_titles: base_r.len(),
            meta_titles: meta_r.len(),
            test_titles: test_r.len(),
            meta_features: model.meta_names.clone(),
            spec_hash: model.spec_hash.clone(),
            test,
        },
    )?;
    finish(run)
}
