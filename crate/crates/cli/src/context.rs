//! Loading resources and corpora, and a uniform fit/score interface over
//! every learner the commands train.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use iggy_core::classify::{
    build_rule_input, fit_rule_thresholds, rule_classify, simple_score, train_fusion,
    train_logreg_bow, train_mlp, BowConfig, FusionModel, LinearBowModel, MlpModel, RuleClassifier,
    RuleGrid, RuleInput, SimpleScoreKind, TrainReport,
};
use iggy_core::corpus::{assign_fields, load_corpus, Field, PosTaggerModel, TitleRecord, VenueMap};
use iggy_core::features::{
    build_matrix, check_resources, default_feature_spec, FeatureMatrix, FeatureSpec, Resources,
};
use iggy_core::lexicons::{
    load_crude_csv, load_word_list, train_nbsvm, ConnotationLists, DefaultPolicy, NbsvmModel,
    TableKind, WordValueTable,
};
use iggy_core::lm::{import_external_scores, NGramModel};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

pub const TAGGER_FILE: &str = "pos_tagger.json";

pub fn title_lm_file(n: usize) -> String {
    format!("title_lm{n}.lm")
}

pub fn joke_lm_file(n: usize) -> String {
    format!("joke_lm{n}.lm")
}

pub fn pos_lm_file(n: usize) -> String {
    format!("pos_lm{n}.lm")
}

pub fn field_lm_file(field: Field, n: usize) -> String {
    format!("field_{}_lm{n}.lm", field.as_str())
}

/// Fails listing every configured path that does not exist.
pub fn require_paths<'a>(paths: impl IntoIterator<Item = (&'a str, &'a Path)>) -> Result<()> {
    let missing: Vec<String> = paths
        .into_iter()
        .filter(|(_, p)| !p.exists())
        .map(|(k, p)| format!("{k} = {}", p.display()))
        .collect();
    if !missing.is_empty() {
        bail!("missing input files: {}", missing.join(", "));
    }
    Ok(())
}

/// Resources, tagger and venue map for one command, plus every file read.
pub struct Workspace {
    pub cfg: PipelineConfig,
    pub resources: Resources,
    pub tagger: Option<PosTaggerModel>,
    pub venue_map: Option<VenueMap>,
    /// title LMs per field at `rule.lm_order`
    pub field_lms: BTreeMap<Field, NGramModel>,
    pub spec_override: Option<FeatureSpec>,
    pub inputs: Vec<PathBuf>,
}

fn configured_paths(cfg: &PipelineConfig) -> Vec<(&'static str, &Path)> {
    let l = &cfg.lexicons;
    let mut out: Vec<(&'static str, &Path)> = [
        ("lexicons.aoa", l.aoa.as_deref()),
        ("lexicons.funniness", l.funniness.as_deref()),
        ("lexicons.valence", l.valence.as_deref()),
        ("lexicons.nbsvm", l.nbsvm.as_deref()),
        ("lexicons.crude", l.crude.as_deref()),
        ("lexicons.whitelist", l.whitelist.as_deref()),
        ("lexicons.blacklist", l.blacklist.as_deref()),
        ("lexicons.familiar", l.familiar.as_deref()),
        ("corpus.venue_map", cfg.corpus.venue_map.as_deref()),
        ("lm.dir", cfg.lm.dir.as_deref()),
        ("spec", cfg.spec.as_deref()),
    ]
    .into_iter()
    .filter_map(|(k, p)| p.map(|p| (k, p)))
    .collect();
    out.extend(
        cfg.external
            .scores
            .iter()
            .map(|p| ("external.scores", p.as_path())),
    );
    out
}

impl Workspace {
    /// Validates every configured path, then loads all resources.
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        require_paths(configured_paths(cfg))?;
        let mut inputs = Vec::new();
        let mut res = Resources::default();
        let l = &cfg.lexicons;

        let table = |p: &Option<PathBuf>,
                     kind,
                     inputs: &mut Vec<PathBuf>|
         -> Result<Option<WordValueTable>> {
            match p {
                None => Ok(None),
                Some(p) => {
                    inputs.push(p.clone());
                    Ok(Some(WordValueTable::load(p, kind, DefaultPolicy::Skip)?))
                }
            }
        };
        res.aoa = table(&l.aoa, TableKind::Aoa, &mut inputs)?;
        res.funniness = table(&l.funniness, TableKind::Funniness, &mut inputs)?;
        res.valence = table(&l.valence, TableKind::Valence, &mut inputs)?;
        for t in [&res.aoa, &res.funniness, &res.valence]
            .into_iter()
            .flatten()
        {
            for w in t.warnings() {
                log::warn!("{w}");
            }
        }
        res.nbsvm = match (&l.nbsvm, &l.crude) {
            (Some(p), _) => {
                inputs.push(p.clone());
                Some(NbsvmModel::load(p)?)
            }
            (None, Some(p)) => {
                inputs.push(p.clone());
                let docs = load_crude_csv(p)?;
                Some(train_nbsvm(&docs, &l.nbsvm_config)?)
            }
            (None, None) => None,
        };
        res.connotation = match (&l.whitelist, &l.blacklist) {
            (Some(w), Some(b)) => {
                inputs.push(w.clone());
                inputs.push(b.clone());
                Some(ConnotationLists::load(w, b)?)
            }
            (None, None) => None,
            _ => bail!("lexicons.whitelist and lexicons.blacklist must be given together"),
        };
        if let Some(p) = &l.familiar {
            inputs.push(p.clone());
            res.familiar = Some(load_word_list(p)?);
        }
        for p in &cfg.external.scores {
            inputs.push(p.clone());
            let t = import_external_scores(p)?;
            if res.external.contains_key(t.model()) {
                bail!("two external score files carry model tag `{}`", t.model());
            }
            res.add_external(t);
        }
        if let Some(tag) = &cfg.external.embeddings {
            let t = res.external.get(tag).ok_or_else(|| {
                anyhow!("external.embeddings names `{tag}` but no score file has that model tag")
            })?;
            if t.embedding_dim().is_none() {
                bail!("external score table `{tag}` carries no embeddings");
            }
        }

        let mut tagger = None;
        let mut field_lms = BTreeMap::new();
        if let Some(dir) = &cfg.lm.dir {
            let load = |name: String, inputs: &mut Vec<PathBuf>| -> Result<Option<NGramModel>> {
                let p = dir.join(name);
                if p.exists() {
                    inputs.push(p.clone());
                    Ok(Some(NGramModel::load(&p)?))
                } else {
                    Ok(None)
                }
            };
            for &n in &cfg.lm.orders {
                if let Some(m) = load(title_lm_file(n), &mut inputs)? {
                    res.title_lms.insert(n as u8, m);
                }
                if let Some(m) = load(joke_lm_file(n), &mut inputs)? {
                    res.joke_lms.insert(n as u8, m);
                }
                if let Some(m) = load(pos_lm_file(n), &mut inputs)? {
                    res.pos_lms.insert(n as u8, m);
                }
            }
            for f in Field::KNOWN {
                if let Some(m) = load(field_lm_file(f, cfg.rule.lm_order), &mut inputs)? {
                    field_lms.insert(f, m);
                }
            }
            let tp = dir.join(TAGGER_FILE);
            if tp.exists() {
                inputs.push(tp.clone());
                tagger = Some(PosTaggerModel::load(&tp)?);
            }
            if res.title_lms.is_empty() && res.joke_lms.is_empty() && res.pos_lms.is_empty() {
                log::warn!("no language models found in {}", dir.display());
            }
        }
        let venue_map = match &cfg.corpus.venue_map {
            Some(p) => {
                inputs.push(p.clone());
                Some(VenueMap::load(p)?)
            }
            None => None,
        };
        let spec_override = match &cfg.spec {
            Some(p) => {
                inputs.push(p.clone());
                Some(FeatureSpec::load(p)?)
            }
            None => None,
        };
        Ok(Workspace {
            cfg: cfg.clone(),
            resources: res,
            tagger,
            venue_map,
            field_lms,
            spec_override,
            inputs,
        })
    }

    /// Loads a corpus, maps venues to fields and POS-tags untagged records.
    pub fn records(&mut self, path: &Path) -> Result<Vec<TitleRecord>> {
        let mut records = load_corpus(path, self.cfg.corpus_format(path))?;
        self.inputs.push(path.to_path_buf());
        if let Some(map) = &self.venue_map {
            let matched = assign_fields(&mut records, map);
            log::info!("{matched} of {} records matched a venue", records.len());
        }
        if let Some(tagger) = &self.tagger {
            for r in records.iter_mut().filter(|r| r.pos.is_none()) {
                r.tag_with(tagger);
            }
        }
        Ok(records)
    }

    pub fn dataset_path(&self) -> Result<PathBuf> {
        let p = self
            .cfg
            .corpus
            .dataset
            .clone()
            .context("no labeled dataset: set corpus.dataset or pass --dataset")?;
        require_paths([("corpus.dataset", p.as_path())])?;
        Ok(p)
    }

    /// The pinned spec, or the canonical one for the loaded resources.
    pub fn spec(&self) -> Result<FeatureSpec> {
        let spec = match &self.spec_override {
            Some(s) => s.clone(),
            None => default_feature_spec(&self.resources)?,
        };
        check_resources(&spec, &self.resources)?;
        Ok(spec)
    }

    pub fn global_lm(&self) -> Result<&NGramModel> {
        self.resources
            .title_lms
            .get(&(self.cfg.rule.lm_order as u8))
            .with_context(|| {
                format!(
                    "the rule classifier needs {} in lm.dir",
                    title_lm_file(self.cfg.rule.lm_order)
                )
            })
    }

    pub fn rule_inputs(&self, records: &[TitleRecord]) -> Result<Vec<RuleInput>> {
        let global = self.global_lm()?;
        records
            .iter()
            .map(|r| {
                build_rule_input(r, &self.resources, &self.field_lms, global).map_err(Into::into)
            })
            .collect()
    }

    pub fn rule_grid(&self, inputs: &[RuleInput]) -> RuleGrid {
        let data = RuleGrid::from_inputs(inputs);
        let r = &self.cfg.rule;
        RuleGrid {
            aoa_low: r.aoa_low.clone().unwrap_or(data.aoa_low),
            funniness_high: r.funniness_high.clone().unwrap_or(data.funniness_high),
            surprisal_high_field: r
                .surprisal_high_field
                .clone()
                .unwrap_or(data.surprisal_high_field),
            surprisal_high_global: r
                .surprisal_high_global
                .clone()
                .unwrap_or(data.surprisal_high_global),
        }
    }

    /// Embedding rows for `records` from the `external.embeddings` table.
    pub fn embeddings(&self, records: &[TitleRecord]) -> Result<Array2<f64>> {
        let tag = self.cfg.external.embeddings.as_ref().context(
            "the fusion model needs external embeddings: set external.embeddings to a model tag",
        )?;
        let table = &self.resources.external[tag];
        let d = table
            .embedding_dim()
            .context("embedding table has no embeddings")?;
        let mut out = Array2::zeros((records.len(), d));
        for (i, r) in records.iter().enumerate() {
            let e = table.embedding(&r.id).with_context(|| {
                format!(
                    "external table `{tag}` has no embedding for title `{}`",
                    r.id
                )
            })?;
            for (j, v) in e.iter().enumerate() {
                out[[i, j]] = *v;
            }
        }
        Ok(out)
    }
}

/// Ids listed one per line; blank lines and `#` comments skipped.
pub fn read_id_list(path: &Path) -> Result<BTreeSet<String>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub fn labels_of(records: &[TitleRecord]) -> Result<Vec<bool>> {
    records
        .iter()
        .map(|r| {
            r.label
                .with_context(|| format!("record `{}` has no label", r.id))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Iggy,
    LrBow,
    Rule,
    Fusion,
    MaxNounFunniness,
    DaleChallInverse,
}

impl Learner {
    pub const ALL: [Learner; 6] = [
        Learner::Iggy,
        Learner::LrBow,
        Learner::Rule,
        Learner::Fusion,
        Learner::MaxNounFunniness,
        Learner::DaleChallInverse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Learner::Iggy => "iggy",
            Learner::LrBow => "lr_bow",
            Learner::Rule => "rule",
            Learner::Fusion => "fusion",
            Learner::MaxNounFunniness => "max_noun_funniness",
            Learner::DaleChallInverse => "dale_chall_inverse",
        }
    }

    fn needs_features(self) -> bool {
        matches!(self, Learner::Iggy | Learner::Fusion)
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Learner {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Learner::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| anyhow!("unknown model `{s}` (expected one of iggy, lr_bow, rule, fusion, max_noun_funniness, dale_chall_inverse)"))
    }
}

pub fn parse_learners(names: &[String]) -> Result<Vec<Learner>> {
    let mut out: Vec<Learner> = Vec::new();
    for n in names {
        let l: Learner = n.parse()?;
        if out.contains(&l) {
            bail!("model `{n}` listed twice");
        }
        out.push(l);
    }
    Ok(out)
}

/// A trained learner. Scores are higher-is-funnier; `threshold` turns them
/// into labels.
#[derive(Debug, Clone)]
pub enum Fitted {
    Mlp(MlpModel),
    Bow(LinearBowModel),
    Rule(RuleClassifier),
    Fusion(FusionModel),
    Simple {
        kind: SimpleScoreKind,
        threshold: f64,
    },
}

impl Fitted {
    pub fn threshold(&self) -> f64 {
        match self {
            Fitted::Simple { threshold, .. } => *threshold,
            _ => 0.5,
        }
    }

    pub fn predict(&self, scores: &[f64]) -> Vec<bool> {
        let t = self.threshold();
        scores.iter().map(|s| *s > t).collect()
    }
}

/// Cut between sorted distinct scores with the best training accuracy;
/// the lowest such cut wins ties.
pub fn best_threshold(scores: &[f64], y: &[bool]) -> f64 {
    let mut vals: Vec<f64> = scores.to_vec();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    let mut cuts = vec![vals.first().copied().unwrap_or(0.0) - 1.0];
    cuts.extend(vals.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    let mut best = (cuts[0], usize::MAX);
    for c in cuts {
        let correct = scores
            .iter()
            .zip(y)
            .filter(|(s, y)| (**s > c) == **y)
            .count();
        if best.1 == usize::MAX || correct > best.1 {
            best = (c, correct);
        }
    }
    best.0
}

/// Per-record inputs shared by all learners, computed once.
pub struct Prepared<'a> {
    pub ws: &'a Workspace,
    pub records: &'a [TitleRecord],
    pub spec: Option<FeatureSpec>,
    pub matrix: Option<FeatureMatrix>,
    pub embeddings: Option<Array2<f64>>,
    pub rule_inputs: Option<Vec<RuleInput>>,
}

impl<'a> Prepared<'a> {
    /// Builds everything the listed learners need, failing before any
    /// training when a resource is missing. `spec` defaults to
    /// [`Workspace::spec`].
    pub fn new(
        ws: &'a Workspace,
        records: &'a [TitleRecord],
        learners: &[Learner],
        spec: Option<FeatureSpec>,
    ) -> Result<Self> {
        let mut p = Prepared {
            ws,
            records,
            spec: None,
            matrix: None,
            embeddings: None,
            rule_inputs: None,
        };
        if learners.iter().any(|l| l.needs_features()) {
            let spec = match spec {
                Some(s) => {
                    check_resources(&s, &ws.resources)?;
                    s
                }
                None => ws.spec()?,
            };
            p.matrix = Some(build_matrix(records, &ws.resources, &spec)?);
            p.spec = Some(spec);
        }
        if learners.contains(&Learner::Fusion) {
            p.embeddings = Some(ws.embeddings(records)?);
        }
        if learners.contains(&Learner::Rule) {
            p.rule_inputs = Some(ws.rule_inputs(records)?);
        }
        if learners.contains(&Learner::MaxNounFunniness) && ws.resources.funniness.is_none() {
            bail!("max_noun_funniness needs lexicons.funniness");
        }
        Ok(p)
    }

    fn rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
        m.select(ndarray::Axis(0), idx)
    }

    pub fn fit(
        &self,
        learner: Learner,
        idx: &[usize],
        y: &[bool],
    ) -> Result<(Fitted, Option<TrainReport>)> {
        let cfg = &self.ws.cfg;
        match learner {
            Learner::Iggy => {
                let m = self
                    .matrix
                    .as_ref()
                    .context("feature matrix not prepared")?;
                let (mut model, report) = train_mlp(&Self::rows(&m.values, idx), y, &cfg.mlp)?;
                model.spec_hash = self.spec.as_ref().map(|s| s.hash());
                model.feature_names = m.names.clone();
                Ok((Fitted::Mlp(model), Some(report)))
            }
            Learner::Fusion => {
                let m = self
                    .matrix
                    .as_ref()
                    .context("feature matrix not prepared")?;
                let e = self
                    .embeddings
                    .as_ref()
                    .context("embeddings not prepared")?;
                let (mut model, report) = train_fusion(
                    &Self::rows(&m.values, idx),
                    &Self::rows(e, idx),
                    y,
                    &cfg.fusion,
                )?;
                model.spec_hash = self.spec.as_ref().map(|s| s.hash());
                model.feature_names = m.names.clone();
                Ok((Fitted::Fusion(model), Some(report)))
            }
            Learner::LrBow => {
                let texts: Vec<&str> = idx.iter().map(|&i| self.records[i].text.as_str()).collect();
                Ok((
                    Fitted::Bow(train_logreg_bow(&texts, y, &BowConfig::default())?),
                    None,
                ))
            }
            Learner::Rule => {
                let all = self
                    .rule_inputs
                    .as_ref()
                    .context("rule inputs not prepared")?;
                let inputs: Vec<RuleInput> = idx.iter().map(|&i| all[i].clone()).collect();
                let grid = self.ws.rule_grid(&inputs);
                Ok((Fitted::Rule(fit_rule_thresholds(&inputs, y, &grid)?), None))
            }
            Learner::MaxNounFunniness | Learner::DaleChallInverse => {
                let kind = simple_kind(learner);
                let scores = self.simple_scores(kind, idx)?;
                Ok((
                    Fitted::Simple {
                        kind,
                        threshold: best_threshold(&scores, y),
                    },
                    None,
                ))
            }
        }
    }

    fn simple_scores(&self, kind: SimpleScoreKind, idx: &[usize]) -> Result<Vec<f64>> {
        idx.iter()
            .map(|&i| Ok(simple_score(kind, &self.records[i], &self.ws.resources)?.value))
            .collect()
    }

    /// Scores for the records at `idx`.
    pub fn score(&self, fitted: &Fitted, idx: &[usize]) -> Result<Vec<f64>> {
        match fitted {
            Fitted::Mlp(model) => {
                let m = self
                    .matrix
                    .as_ref()
                    .context("feature matrix not prepared")?;
                Ok(model.predict_proba(&Self::rows(&m.values, idx))?.to_vec())
            }
            Fitted::Fusion(model) => {
                let m = self
                    .matrix
                    .as_ref()
                    .context("feature matrix not prepared")?;
                let e = self
                    .embeddings
                    .as_ref()
                    .context("embeddings not prepared")?;
                Ok(model
                    .predict_proba(&Self::rows(&m.values, idx), &Self::rows(e, idx))?
                    .to_vec())
            }
            Fitted::Bow(model) => {
                let texts: Vec<&str> = idx.iter().map(|&i| self.records[i].text.as_str()).collect();
                Ok(model.predict_proba(&texts))
            }
            Fitted::Rule(rc) => {
                let all = self
                    .rule_inputs
                    .as_ref()
                    .context("rule inputs not prepared")?;
                Ok(idx
                    .iter()
                    .map(|&i| f64::from(u8::from(rule_classify(rc, &all[i]))))
                    .collect())
            }
            Fitted::Simple { kind, .. } => self.simple_scores(*kind, idx),
        }
    }
}

pub fn simple_kind(l: Learner) -> SimpleScoreKind {
    match l {
        Learner::DaleChallInverse => SimpleScoreKind::DaleChallInverse,
        _ => SimpleScoreKind::MaxNounFunniness,
    }
}
