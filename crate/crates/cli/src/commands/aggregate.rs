use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use iggy_core::eval::annotations::{
    read_expert_csv, read_gold_csv, write_labels_csv, write_rule_table_csv,
};
use iggy_core::eval::{
    aggregate_annotations, select_decision_rule, AnnotationMatrix, DecisionRule, Reference,
};

use super::evaluate::question;
use super::{finish, in_pool, start};
use crate::config::PipelineConfig;
use crate::context::require_paths;
use crate::manifest::RunManifest;

#[derive(Debug, Clone, Default)]
pub struct AggregateArgs {
    /// explicit rule `(k, m)`
    pub rule: Option<(usize, u8)>,
    /// pick the rule that best matches `gold` or `expert`
    pub select: bool,
    pub gold: Option<PathBuf>,
    pub expert: Option<PathBuf>,
}

/// Crowd ratings to binary labels by one (k, m) rule: funny iff at least k
/// raters scored at least m.
pub fn cmd_aggregate(cfg: &PipelineConfig, args: &AggregateArgs) -> Result<RunManifest> {
    let ann_path = cfg
        .eval
        .annotations
        .clone()
        .context("aggregate needs crowd annotations: set eval.annotations")?;
    let mut paths = vec![("eval.annotations", ann_path.as_path())];
    if let Some(p) = &args.gold {
        paths.push(("gold", p));
    }
    if let Some(p) = &args.expert {
        paths.push(("expert", p));
    }
    require_paths(paths)?;
    let reference = match (args.select, &args.gold, &args.expert, args.rule) {
        (true, _, _, Some(_)) => bail!("--rule and --select are mutually exclusive"),
        (true, Some(g), None, None) => {
            let origin = g.display().to_string();
            Some(Reference::Gold(read_gold_csv(File::open(g)?, &origin)?))
        }
        (true, None, Some(e), None) => {
            let origin = e.display().to_string();
            Some(Reference::Expert(read_expert_csv(File::open(e)?, &origin)?))
        }
        (true, _, _, None) => bail!("--select needs exactly one of --gold or --expert"),
        (false, None, None, _) => None,
        (false, _, _, _) => bail!("--gold and --expert only apply with --select"),
    };
    let rule = match args.rule {
        Some((k, m)) => Some(DecisionRule::new(k, m)?),
        None if reference.is_none() => {
            bail!("give a decision rule with --rule K,M or use --select")
        }
        None => None,
    };
    let matrix = AnnotationMatrix::from_csv(
        BufReader::new(File::open(&ann_path)?),
        &ann_path.display().to_string(),
    )?;
    let q = question(cfg);

    in_pool(cfg, || {
        let mut run = start(cfg, "aggregate")?;
        run.input(&ann_path);
        let rule = match (&reference, rule) {
            (Some(r), _) => {
                let sel =
                    select_decision_rule(&matrix, r, &DecisionRule::grid(matrix.max_raters()), q)?;
                run.write_with("rule_table.csv", |w| Ok(write_rule_table_csv(w, &sel)?))?;
                run.write_json("selected_rule.json", &sel.best)?;
                for p in args.gold.iter().chain(&args.expert) {
                    run.input(p);
                }
                println!("selected rule: k={} m={}", sel.best.k, sel.best.m);
                sel.best
            }
            (None, Some(rule)) => rule,
            (None, None) => unreachable!(),
        };
        let agg = aggregate_annotations(&matrix, rule, q);
        if !agg.under_rated.is_empty() {
            log::warn!(
                "{} titles have fewer than k={} ratings and can never be labeled funny",
                agg.under_rated.len(),
                rule.k
            );
        }
        log::info!(
            "rule k={} m={}: {} of {} titles funny",
            rule.k,
            rule.m,
            agg.labels.values().filter(|v| **v).count(),
            agg.labels.len()
        );
        run.write_with("labels.csv", |w| Ok(write_labels_csv(w, &agg)?))?;
        finish(run)
    })
}
