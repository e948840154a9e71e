use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use iggy_core::corpus::tagger::load_tagged_corpus;
use iggy_core::corpus::{
    assign_fields, load_corpus, tag_records, train_pos_tagger, words, Field, TaggerConfig,
    TitleRecord, VenueMap,
};
use iggy_core::lm::{train_ngram, NGramConfig, NGramModel};
use serde::Serialize;

use super::{finish, in_pool, start};
use crate::config::PipelineConfig;
use crate::context::{
    field_lm_file, joke_lm_file, pos_lm_file, require_paths, title_lm_file, TAGGER_FILE,
};
use crate::manifest::{Run, RunManifest};

#[derive(Debug, Serialize)]
struct LmSummary {
    file: String,
    source: String,
    order: usize,
    sequences: usize,
    tokens: usize,
    vocab: usize,
}

fn word_sequences(records: &[TitleRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| words(&r.tokens()).into_iter().map(str::to_string).collect())
        .collect()
}

fn train_and_save(
    run: &mut Run,
    file: String,
    seqs: &[Vec<String>],
    config: NGramConfig,
    summary: &mut Vec<LmSummary>,
) -> Result<NGramModel> {
    let t = Instant::now();
    let tokens: usize = seqs.iter().map(Vec::len).sum();
    let model = train_ngram(seqs, &config).with_context(|| format!("training {file}"))?;
    model.save(run.output_path(&file)?)?;
    let secs = t.elapsed().as_secs_f64();
    log::info!(
        "{file}: {} sequences, {tokens} tokens, vocab {} in {secs:.2}s ({:.0} tokens/s)",
        seqs.len(),
        model.vocab_size(),
        tokens as f64 / secs.max(1e-9)
    );
    summary.push(LmSummary {
        file,
        source: config.source_tag.clone(),
        order: config.order,
        sequences: seqs.len(),
        tokens,
        vocab: model.vocab_size(),
    });
    Ok(model)
}

/// Word LMs over the title and joke corpora, a POS tagger and POS LMs, and
/// per-field title LMs for the rule classifier.
pub fn cmd_build_lm(cfg: &PipelineConfig) -> Result<RunManifest> {
    let c = &cfg.corpus;
    let titles_path = c
        .titles
        .clone()
        .context("build-lm needs the title corpus: set corpus.titles")?;
    let mut paths = vec![("corpus.titles", titles_path.as_path())];
    if let Some(p) = &c.jokes {
        paths.push(("corpus.jokes", p));
    }
    if let Some(p) = &c.tagged {
        paths.push(("corpus.tagged", p));
    }
    if let Some(p) = &c.venue_map {
        paths.push(("corpus.venue_map", p));
    }
    require_paths(paths)?;
    let lm = &cfg.lm;

    in_pool(cfg, || {
        let mut run = start(cfg, "build-lm")?;
        let mut summary = Vec::new();
        let mut titles = load_corpus(&titles_path, cfg.corpus_format(&titles_path))?;
        run.input(&titles_path);
        if titles.is_empty() {
            bail!("title corpus {} is empty", titles_path.display());
        }

        let tagger = match &c.tagged {
            Some(p) => {
                run.input(p);
                let sentences = load_tagged_corpus(p)?;
                let tc = TaggerConfig {
                    epochs: c.tagger_epochs.unwrap_or(TaggerConfig::default().epochs),
                    seed: cfg.seed,
                    ..TaggerConfig::default()
                };
                let t = Instant::now();
                let (model, report) = train_pos_tagger(&sentences, &tc)?;
                log::info!(
                    "POS tagger: {} training sentences in {:.2}s, held-out accuracy {}",
                    report.train_sentences,
                    t.elapsed().as_secs_f64(),
                    report
                        .heldout_accuracy
                        .map_or("n/a".into(), |a| format!("{a:.4}"))
                );
                model.save(&run.output_path(TAGGER_FILE)?)?;
                run.write_json("tagger_report.json", &report)?;
                Some(model)
            }
            None => None,
        };

        let seqs = word_sequences(&titles);
        for &n in &lm.orders {
            let conf = NGramConfig::new(n, lm.smoothing_k, lm.min_count).with_source("titles");
            train_and_save(&mut run, title_lm_file(n), &seqs, conf, &mut summary)?;
        }

        if let Some(p) = &c.jokes {
            let jokes = load_corpus(p, cfg.corpus_format(p))?;
            run.input(p);
            let seqs = word_sequences(&jokes);
            for &n in &lm.orders {
                let conf = NGramConfig::new(n, lm.smoothing_k, lm.min_count).with_source("jokes");
                train_and_save(&mut run, joke_lm_file(n), &seqs, conf, &mut summary)?;
            }
        } else {
            log::info!("no joke corpus configured; skipping joke LMs");
        }

        if let Some(tagger) = &tagger {
            let t = Instant::now();
            tag_records(&mut titles, tagger);
            log::info!(
                "tagged {} titles in {:.2}s ({:.0} titles/s)",
                titles.len(),
                t.elapsed().as_secs_f64(),
                titles.len() as f64 / t.elapsed().as_secs_f64().max(1e-9)
            );
        }
        if titles.iter().all(|r| r.pos.is_some()) {
            let tags: Vec<Vec<String>> = titles
                .iter()
                .map(|r| r.pos.clone().unwrap_or_default())
                .collect();
            for &n in &lm.orders {
                let conf = NGramConfig::new(n, lm.smoothing_k, lm.pos_min_count).with_source("pos");
                train_and_save(&mut run, pos_lm_file(n), &tags, conf, &mut summary)?;
            }
        } else {
            log::info!("titles are untagged and no tagged corpus is configured; skipping POS LMs");
        }

        if lm.field_lms {
            if let Some(p) = &c.venue_map {
                let map = VenueMap::load(p)?;
                run.input(p);
                let matched = assign_fields(&mut titles, &map);
                log::info!("{matched} of {} titles matched a venue", titles.len());
            }
            let mut by_field: BTreeMap<Field, Vec<TitleRecord>> = BTreeMap::new();
            for r in &titles {
                if r.field != Field::Unknown {
                    by_field.entry(r.field).or_default().push(r.clone());
                }
            }
            let n = cfg.rule.lm_order;
            for (field, recs) in by_field {
                let conf = NGramConfig::new(n, lm.smoothing_k, lm.min_count)
                    .with_source(format!("titles:{field}"));
                train_and_save(
                    &mut run,
                    field_lm_file(field, n),
                    &word_sequences(&recs),
                    conf,
                    &mut summary,
                )?;
            }
        }

        run.write_json("lm_summary.json", &summary)?;
        finish(run)
    })
}
