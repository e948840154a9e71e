//! One function per subcommand. Each validates its inputs, runs inside a
//! worker pool of the configured size and returns the manifest it wrote.

mod aggregate;
mod build_lm;
mod evaluate;
mod extract;
mod rank;
mod report;
mod train;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use iggy_core::classify::TrainReport;
use iggy_core::eval::{model_correlation_matrix, top_k_overlap, RankedList};

use crate::config::PipelineConfig;
use crate::manifest::{Run, RunManifest};
use crate::plot::{line_chart, series_tsv, Series};

pub use aggregate::{cmd_aggregate, AggregateArgs};
pub use build_lm::cmd_build_lm;
pub use evaluate::{cmd_evaluate, EvalMode};
pub use extract::cmd_extract;
pub use rank::{cmd_rank, RANKING_FILE};
pub use report::cmd_report;
pub use train::{cmd_train, ModelKind, MODEL_FILE};

/// Runs `f` on a dedicated pool sized by the configured thread count.
pub(crate) fn in_pool<T: Send>(
    cfg: &PipelineConfig,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    let threads = cfg.thread_count()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    log::debug!("using {threads} worker threads");
    pool.install(f)
}

pub(crate) fn start(cfg: &PipelineConfig, command: &str) -> Result<Run> {
    Run::start(&cfg.out_dir()?, command, cfg.hash(), cfg.seed)
}

pub(crate) fn finish(run: Run) -> Result<RunManifest> {
    let dir = run.dir().to_path_buf();
    let m = run.finish()?;
    log::info!(
        "wrote {} files and the manifest to {}",
        m.outputs.len(),
        dir.display()
    );
    Ok(m)
}

/// `train_report.json` plus the loss curves as TSV and SVG.
pub(crate) fn write_train_report(run: &mut Run, prefix: &str, report: &TrainReport) -> Result<()> {
    run.write_json(&format!("{prefix}train_report.json"), report)?;
    let curve = |name: &str, v: &[f64]| Series {
        name: name.into(),
        points: v
            .iter()
            .enumerate()
            .map(|(i, l)| ((i + 1) as f64, *l))
            .collect(),
    };
    let mut series = vec![curve("train", &report.train_loss)];
    if !report.val_loss.is_empty() {
        series.push(curve("validation", &report.val_loss));
    }
    run.write(
        &format!("{prefix}loss_curve.tsv"),
        series_tsv(&series, "epoch", "loss"),
    )?;
    run.write(
        &format!("{prefix}loss_curve.svg"),
        line_chart("Training loss", "epoch", "loss", &series),
    )?;
    Ok(())
}

/// Reads `name=path` ranking arguments.
pub(crate) fn load_rankings(
    run: &mut Run,
    rankings: &[(String, PathBuf)],
) -> Result<Vec<(String, RankedList)>> {
    let mut out: Vec<(String, RankedList)> = Vec::new();
    for (name, path) in rankings {
        if out.iter().any(|(n, _)| n == name) {
            anyhow::bail!("ranking name `{name}` given twice");
        }
        let file = std::fs::File::open(path)
            .with_context(|| format!("opening ranking {}", path.display()))?;
        let list =
            RankedList::read_tsv(std::io::BufReader::new(file), &path.display().to_string())?;
        run.input(path);
        out.push((name.clone(), list));
    }
    Ok(out)
}

pub fn parse_ranking_arg(s: &str) -> Result<(String, PathBuf)> {
    match s.split_once('=') {
        Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n.to_string(), PathBuf::from(p))),
        Some(_) => anyhow::bail!("ranking `{s}` is not of the form NAME=PATH"),
        None => {
            let p = Path::new(s);
            let name = p
                .file_stem()
                .and_then(|s| s.to_str())
                .filter(|s| !s.is_empty())
                .with_context(|| format!("cannot name ranking `{s}`; use NAME=PATH"))?;
            Ok((name.to_string(), p.to_path_buf()))
        }
    }
}

/// Pairwise top-k overlap (`overlap.csv`) and Spearman correlation over
/// the ids every list shares (`correlation.csv`).
pub(crate) fn write_agreement(
    run: &mut Run,
    lists: &[(String, RankedList)],
    overlap_k: usize,
) -> Result<()> {
    if lists.len() < 2 {
        return Ok(());
    }
    let shortest = lists.iter().map(|(_, l)| l.len()).min().unwrap_or(0);
    let k = overlap_k.min(shortest);
    if k == 0 {
        log::warn!("a ranking is empty; skipping overlap and correlation");
        return Ok(());
    }
    if k < overlap_k {
        log::warn!("overlap cutoff lowered from {overlap_k} to {k}, the shortest ranking length");
    }
    run.write_with("overlap.csv", |w| {
        writeln!(w, "model_a,model_b,k,overlap")?;
        for (i, (na, a)) in lists.iter().enumerate() {
            for (nb, b) in &lists[i + 1..] {
                writeln!(w, "{na},{nb},{k},{}", top_k_overlap(a, b, k)?)?;
            }
        }
        Ok(())
    })?;

    let mut common: Option<std::collections::BTreeSet<&str>> = None;
    for (_, l) in lists {
        let ids: std::collections::BTreeSet<&str> = l.ids().collect();
        common = Some(match common {
            None => ids,
            Some(c) => c.intersection(&ids).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    if common.len() < 3 {
        log::warn!("rankings share {} ids; skipping correlation", common.len());
        return Ok(());
    }
    let tables: BTreeMap<String, BTreeMap<String, f64>> = lists
        .iter()
        .map(|(n, l)| {
            let t = l
                .entries()
                .iter()
                .filter(|(id, _)| common.contains(id.as_str()))
                .cloned()
                .collect();
            (n.clone(), t)
        })
        .collect();
    let cm = model_correlation_matrix(&tables)?;
    run.write_with("correlation.csv", |w| {
        writeln!(w, "model,{}", cm.models.join(","))?;
        for (i, m) in cm.models.iter().enumerate() {
            let row: Vec<String> = (0..cm.models.len())
                .map(|j| cm.values[[i, j]].to_string())
                .collect();
            writeln!(w, "{m},{}", row.join(","))?;
        }
        Ok(())
    })?;
    Ok(())
}
