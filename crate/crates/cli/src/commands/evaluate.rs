use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use iggy_core::corpus::{make_ig_retrieval_split, TitleRecord};
use iggy_core::eval::{
    aggregate_annotations, classification_report, ndcg_at_k, precision_at_k_curve,
    write_metrics_csv, AnnotationMatrix, ClassificationReport, CvReport, DecisionRule, RankedList,
};
use serde::Serialize;

use super::train::run_cv;
use super::{finish, in_pool, load_rankings, start, write_agreement};
use crate::config::PipelineConfig;
use crate::context::{labels_of, parse_learners, read_id_list, require_paths, Prepared, Workspace};
use crate::manifest::{Run, RunManifest};
use crate::plot::{line_chart, series_tsv, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Dataset,
    IgRetrieval,
    Wild,
}

pub(crate) fn question(cfg: &PipelineConfig) -> iggy_core::eval::Question {
    match cfg.eval.question.as_str() {
        "topic" => iggy_core::eval::Question::Topic,
        _ => iggy_core::eval::Question::Title,
    }
}

/// Writes the evaluation reports for `mode`. Wild mode reads the given
/// `name=path` rankings; the other modes train `eval.models` themselves.
pub fn cmd_evaluate(
    cfg: &PipelineConfig,
    mode: EvalMode,
    rankings: &[(String, PathBuf)],
) -> Result<RunManifest> {
    match mode {
        EvalMode::Dataset => eval_dataset(cfg),
        EvalMode::IgRetrieval => eval_retrieval(cfg),
        EvalMode::Wild => eval_wild(cfg, rankings),
    }
}

fn eval_dataset(cfg: &PipelineConfig) -> Result<RunManifest> {
    let learners = parse_learners(&cfg.eval.models)?;
    if cfg.eval.folds < 2 {
        bail!("dataset evaluation needs eval.folds ≥ 2");
    }
    let mut ws = Workspace::load(cfg)?;
    let dataset = ws.dataset_path()?;
    in_pool(cfg, || {
        let records = ws.records(&dataset)?;
        let y = labels_of(&records)?;
        let prep = Prepared::new(&ws, &records, &learners, None)?;
        let mut run = start(cfg, "evaluate dataset")?;
        run.inputs(ws.inputs.iter().cloned());
        let mut rows = Vec::new();
        let mut cvs: BTreeMap<String, CvReport> = BTreeMap::new();
        for l in &learners {
            let cv = run_cv(&prep, *l, &y, cfg.eval.folds, cfg.seed)?;
            log::info!(
                "{l}: accuracy {:.4} ± {:.4}",
                cv.mean.accuracy,
                cv.std_accuracy
            );
            rows.push((l.to_string(), cv.mean));
            cvs.insert(l.to_string(), cv);
        }
        run.write_with("metrics.csv", |w| Ok(write_metrics_csv(w, &rows)?))?;
        run.write_json("cv.json", &cvs)?;
        finish(run)
    })
}

#[derive(Debug, Serialize)]
struct RetrievalSummary {
    train_titles: usize,
    test_titles: usize,
    winners: usize,
    sampled_negatives: usize,
    test_ids: Vec<String>,
}

fn eval_retrieval(cfg: &PipelineConfig) -> Result<RunManifest> {
    let learners = parse_learners(&cfg.eval.models)?;
    let winners_path = cfg
        .corpus
        .winners
        .clone()
        .context("ig_retrieval needs the winners id list: set corpus.winners")?;
    require_paths([("corpus.winners", winners_path.as_path())])?;
    let winners = read_id_list(&winners_path)?;
    let mut ws = Workspace::load(cfg)?;
    let dataset = ws.dataset_path()?;
    in_pool(cfg, || {
        let records = ws.records(&dataset)?;
        labels_of(&records)?;
        let split = make_ig_retrieval_split(&records, &winners, cfg.seed, None)?;
        log::info!(
            "retrieval split: {} train, {} test ({} winners)",
            split.train.len(),
            split.test.len(),
            winners.len()
        );
        let n_train = split.train.len();
        let all: Vec<TitleRecord> = split.train.iter().chain(&split.test).cloned().collect();
        let y = labels_of(&all)?;
        let prep = Prepared::new(&ws, &all, &learners, None)?;
        let train: Vec<usize> = (0..n_train).collect();
        let test: Vec<usize> = (n_train..all.len()).collect();
        let ytr = &y[..n_train];
        let yte = &y[n_train..];

        let mut run = start(cfg, "evaluate ig_retrieval")?;
        run.inputs(ws.inputs.iter().cloned());
        run.input(&winners_path);
        let mut rows: Vec<(String, ClassificationReport)> = Vec::new();
        for l in &learners {
            let (f, _) = prep.fit(*l, &train, ytr)?;
            let pred = f.predict(&prep.score(&f, &test)?);
            let r = classification_report(&pred, yte)?;
            log::info!("{l}: accuracy {:.4}", r.accuracy);
            rows.push((l.to_string(), r));
        }
        run.write_with("metrics.csv", |w| Ok(write_metrics_csv(w, &rows)?))?;
        run.write_json(
            "split.json",
            &RetrievalSummary {
                train_titles: n_train,
                test_titles: split.test.len(),
                winners: winners.len(),
                sampled_negatives: split.test.len() - winners.len(),
                test_ids: split.test.iter().map(|r| r.id.clone()).collect(),
            },
        )?;
        finish(run)
    })
}

fn eval_wild(cfg: &PipelineConfig, rankings: &[(String, PathBuf)]) -> Result<RunManifest> {
    if rankings.is_empty() {
        bail!("wild evaluation needs at least one --ranking NAME=PATH");
    }
    let ann_path = cfg
        .eval
        .annotations
        .clone()
        .context("wild evaluation needs crowd annotations: set eval.annotations")?;
    let mut paths = vec![("eval.annotations", ann_path.as_path())];
    paths.extend(rankings.iter().map(|(_, p)| ("ranking", p.as_path())));
    require_paths(paths)?;
    let matrix = AnnotationMatrix::load(&ann_path)?;
    let q = question(cfg);
    let label_sets = [
        (
            "strict",
            aggregate_annotations(&matrix, DecisionRule::STRICT, q).labels,
        ),
        (
            "relaxed",
            aggregate_annotations(&matrix, DecisionRule::RELAXED, q).labels,
        ),
    ];
    in_pool(cfg, || {
        let mut run = start(cfg, "evaluate wild")?;
        run.input(&ann_path);
        let lists: Vec<(String, RankedList)> = load_rankings(&mut run, rankings)?
            .into_iter()
            .map(|(n, l)| (n, l.top(cfg.eval.top)))
            .collect();
        for (name, list) in &lists {
            let missing = list
                .ids()
                .filter(|id| !label_sets[0].1.contains_key(*id))
                .count();
            if missing > 0 {
                log::warn!("{name}: {missing} of {} ranked titles have no annotations and count as not funny", list.len());
            }
        }
        write_wild_reports(&mut run, &lists, &label_sets, cfg)?;
        write_agreement(&mut run, &lists, cfg.eval.overlap_k)?;
        finish(run)
    })
}

fn write_wild_reports(
    run: &mut Run,
    lists: &[(String, RankedList)],
    label_sets: &[(&str, BTreeMap<String, bool>)],
    cfg: &PipelineConfig,
) -> Result<()> {
    let mut ndcg_rows = String::from("model,labels,k,ndcg,no_relevant\n");
    let mut tsv_series = Vec::new();
    for (lname, labels) in label_sets {
        let mut series = Vec::new();
        for (name, list) in lists {
            let rel = list.relevance(|id| labels.get(id).copied().unwrap_or(false));
            for &k in &cfg.eval.ndcg_k {
                let n = ndcg_at_k(&rel, k)?;
                ndcg_rows.push_str(&format!("{name},{lname},{k},{},{}\n", n.value, n.all_zero));
            }
            if rel.is_empty() {
                continue;
            }
            let curve = precision_at_k_curve(&rel, cfg.eval.precision_step)?;
            series.push(Series {
                name: name.clone(),
                points: curve.iter().map(|(k, p)| (*k as f64, *p)).collect(),
            });
        }
        run.write(
            &format!("precision_at_k_{lname}.svg"),
            line_chart(
                &format!("Precision@k ({lname} labels)"),
                "k",
                "precision",
                &series,
            ),
        )?;
        tsv_series.extend(series.into_iter().map(|s| Series {
            name: format!("{}/{lname}", s.name),
            points: s.points,
        }));
    }
    run.write("ndcg.csv", ndcg_rows)?;
    run.write(
        "precision_at_k.tsv",
        series_tsv(&tsv_series, "k", "precision"),
    )?;
    run.write_with("labels_summary.csv", |w| {
        writeln!(w, "labels,annotated_titles,funny")?;
        for (lname, labels) in label_sets {
            writeln!(
                w,
                "{lname},{},{}",
                labels.len(),
                labels.values().filter(|v| **v).count()
            )?;
        }
        Ok(())
    })?;
    Ok(())
}
