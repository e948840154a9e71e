use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use iggy_core::features::{build_matrix, write_matrix_csv};

use super::{finish, in_pool, start};
use crate::config::PipelineConfig;
use crate::context::{require_paths, Workspace};
use crate::manifest::RunManifest;

pub const FEATURES_FILE: &str = "features.csv";
pub const SPEC_FILE: &str = "feature_spec.json";

/// Feature matrix for `corpus` (default: the labeled dataset).
pub fn cmd_extract(cfg: &PipelineConfig, corpus: Option<&Path>) -> Result<RunManifest> {
    let corpus = match corpus {
        Some(p) => p.to_path_buf(),
        None => cfg
            .corpus
            .dataset
            .clone()
            .context("extract needs a corpus: pass one or set corpus.dataset")?,
    };
    require_paths([("corpus", corpus.as_path())])?;
    let mut ws = Workspace::load(cfg)?;
    let spec = ws.spec()?;
    in_pool(cfg, || {
        let records = ws.records(&corpus)?;
        let mut run = start(cfg, "extract")?;
        let t = Instant::now();
        let matrix = build_matrix(&records, &ws.resources, &spec)?;
        log::info!(
            "extracted {} features for {} titles in {:.2}s",
            matrix.ncols(),
            matrix.nrows(),
            t.elapsed().as_secs_f64()
        );
        run.write_with(FEATURES_FILE, |w| Ok(write_matrix_csv(w, &matrix)?))?;
        run.write(SPEC_FILE, spec.to_json()?)?;
        run.inputs(ws.inputs.iter().cloned());
        finish(run)
    })
}
