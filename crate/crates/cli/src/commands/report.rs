use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use iggy_core::eval::feature_report;
use iggy_core::eval::stats::write_feature_report_csv;
use iggy_core::features::{build_matrix, read_matrix_csv, FeatureMatrix};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{finish, in_pool, load_rankings, start, write_agreement};
use crate::config::PipelineConfig;
use crate::context::{labels_of, require_paths, Workspace};
use crate::manifest::RunManifest;

/// Keeps every minority-class row and a seeded sample of the majority
/// class of the same size (plus one when the total is odd).
pub(crate) fn balance(labels: &[bool], seed: u64) -> Vec<usize> {
    let pos: Vec<usize> = (0..labels.len()).filter(|i| labels[*i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|i| !labels[*i]).collect();
    let (small, mut big) = if pos.len() <= neg.len() {
        (pos, std::mem::take(&mut neg))
    } else {
        (neg, pos)
    };
    if big.len() > small.len() + 1 {
        big.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        big.truncate(small.len());
    }
    let mut keep: Vec<usize> = small.into_iter().chain(big).collect();
    keep.sort_unstable();
    keep
}

/// Per-feature Wilcoxon tests between funny and serious titles, plus
/// agreement between any given rankings.
pub fn cmd_report(
    cfg: &PipelineConfig,
    features: Option<&Path>,
    rankings: &[(String, PathBuf)],
) -> Result<RunManifest> {
    let mut paths: Vec<(&str, &Path)> = rankings
        .iter()
        .map(|(_, p)| ("ranking", p.as_path()))
        .collect();
    if let Some(f) = features {
        paths.push(("features", f));
    }
    require_paths(paths)?;
    let mut ws = Workspace::load(cfg)?;
    let dataset = ws.dataset_path()?;
    in_pool(cfg, || {
        let records = ws.records(&dataset)?;
        let by_id: BTreeMap<&str, bool> = records
            .iter()
            .map(|r| {
                r.label
                    .map(|y| (r.id.as_str(), y))
                    .with_context(|| format!("record `{}` has no label", r.id))
            })
            .collect::<Result<_>>()?;
        let mut run = start(cfg, "report")?;
        let matrix: FeatureMatrix = match features {
            Some(f) => {
                run.input(f);
                read_matrix_csv(BufReader::new(File::open(f)?), &f.display().to_string())?
            }
            None => build_matrix(&records, &ws.resources, &ws.spec()?)?,
        };
        run.inputs(ws.inputs.iter().cloned());
        let labels: Vec<bool> = match features {
            Some(_) => matrix
                .ids
                .iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .with_context(|| format!("feature row `{id}` is not in the dataset"))
                })
                .collect::<Result<_>>()?,
            None => labels_of(&records)?,
        };
        let keep = balance(&labels, cfg.seed);
        if keep.len() < labels.len() {
            log::warn!(
                "classes are unbalanced; testing on a seeded balanced subsample of {} of {} titles",
                keep.len(),
                labels.len()
            );
        }
        if keep.is_empty() {
            bail!("the dataset has no titles to compare");
        }
        let sub = matrix.rows(&keep);
        let sub_labels: Vec<bool> = keep.iter().map(|&i| labels[i]).collect();
        let rows = feature_report(&sub, &sub_labels, cfg.seed)?;
        run.write_with("feature_report.csv", |w| {
            Ok(write_feature_report_csv(w, &rows)?)
        })?;

        let lists = load_rankings(&mut run, rankings)?;
        write_agreement(&mut run, &lists, cfg.eval.overlap_k)?;
        finish(run)
    })
}
