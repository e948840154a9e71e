//! Metrics, cross-validation, ranking quality, crowd-label aggregation and
//! significance tests.

pub mod annotations;
pub mod ranking;
pub mod stats;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use annotations::{
    aggregate_annotations, select_decision_rule, AnnotationMatrix, DecisionRule, Question, Rating,
    Reference, RuleSelection,
};
pub use ranking::{ndcg_at_k, precision_at_k_curve, top_k_overlap, Ndcg, RankedList};
pub use stats::{
    feature_report, model_correlation_matrix, spearman, wilcoxon_signed_rank, TestResult,
};

use crate::error::{Error, Result};
use crate::summary::average_ranks;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// no positive predictions; precision reported as 0
    pub precision_undefined: bool,
    /// no positive gold labels; recall reported as 0
    pub recall_undefined: bool,
}

/// Accuracy plus precision and recall of class 1.
pub fn classification_report(pred: &[bool], gold: &[bool]) -> Result<ClassificationReport> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("classification report of zero items"));
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (p, g) in pred.iter().zip(gold) {
        correct += usize::from(p == g);
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(ClassificationReport {
        accuracy: correct as f64 / pred.len() as f64,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        precision_undefined: tp + fp == 0,
        recall_undefined: tp + fn_ == 0,
    })
}

/// Area under the ROC curve (Mann-Whitney, ties count half).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|y| **y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("AUC needs both classes"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, y)| **y)
        .map(|(r, _)| r)
        .sum();
    Ok((rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64)
}

/// Fold index per item; each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == class).collect();
        if idx.len() < k {
            return Err(Error::invalid(format!(
                "class {} has {} items, fewer than {k} folds",
                u8::from(class),
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            folds[i] = (j + offset) % k;
        }
        offset += labels.iter().filter(|y| **y == class).count();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<ClassificationReport>,
    pub mean: ClassificationReport,
    /// sample standard deviation over folds, per metric
    pub std_accuracy: f64,
    pub std_precision: f64,
    pub std_recall: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Stratified k-fold cross-validation. `train_predict(train, test)` fits on
/// the train indices and returns predictions for the test indices.
pub fn cross_validate<F>(
    labels: &[bool],
    k: usize,
    seed: u64,
    mut train_predict: F,
) -> Result<CvReport>
where
    F: FnMut(&[usize], &[usize]) -> Result<Vec<bool>>,
{
    let folds = stratified_folds(labels, k, seed)?;
    let mut reports = Vec::with_capacity(k);
    for f in 0..k {
        let test: Vec<usize> = (0..labels.len()).filter(|i| folds[*i] == f).collect();
        let train: Vec<usize> = (0..labels.len()).filter(|i| folds[*i] != f).collect();
        let pred = train_predict(&train, &test)?;
        let gold: Vec<bool> = test.iter().map(|i| labels[*i]).collect();
        reports.push(classification_report(&pred, &gold)?);
    }
    let (acc, sa) = mean_std(&reports.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    let (prec, sp) = mean_std(&reports.iter().map(|r| r.precision).collect::<Vec<_>>());
    let (rec, sr) = mean_std(&reports.iter().map(|r| r.recall).collect::<Vec<_>>());
    Ok(CvReport {
        mean: ClassificationReport {
            accuracy: acc,
            precision: prec,
            recall: rec,
            precision_undefined: reports.iter().any(|r| r.precision_undefined),
            recall_undefined: reports.iter().any(|r| r.recall_undefined),
        },
        folds: reports,
        std_accuracy: sa,
        std_precision: sp,
        std_recall: sr,
    })
}

/// CSV rows `model,accuracy,precision,recall`.
pub fn write_metrics_csv<W: Write>(w: W, rows: &[(String, ClassificationReport)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "accuracy", "precision", "recall"])?;
    for (name, r) in rows {
        out.write_record([
            name.clone(),
            format!("{:.6}", r.accuracy),
            format!("{:.6}", r.precision),
            format!("{:.6}", r.recall),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<metrics>", e))
}
