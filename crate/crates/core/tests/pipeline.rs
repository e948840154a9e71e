use std::collections::BTreeMap;

use iggy_core::classify::{
    build_rule_input, fit_rule_thresholds, io::model_from_json, io::model_to_json, rule_classify,
    train_logreg_bow, train_mlp, BowConfig, MlpConfig, MlpModel, ModelFile, RuleGrid,
};
use iggy_core::corpus::{Field, TitleRecord};
use iggy_core::eval::{cross_validate, ndcg_at_k, RankedList};
use iggy_core::features::{build_matrix, default_feature_spec, Resources};
use iggy_core::lexicons::{ConnotationLists, DefaultPolicy, TableKind, WordValueTable};
use iggy_core::lm::{train_ngram, NGramConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIMPLE: [&str; 10] = [
    "duck", "cat", "banana", "dog", "cake", "nose", "toe", "pizza", "frog", "sock",
];
const JARGON: [&str; 10] = [
    "spectroscopic",
    "heterogeneous",
    "polymerase",
    "asymptotic",
    "characterization",
    "myocardial",
    "electrochemical",
    "phosphorylation",
    "stochastic",
    "nanostructured",
];
const GLUE: [&str; 5] = ["of", "in", "the", "and", "for"];

fn title(rng: &mut ChaCha8Rng, funny: bool) -> String {
    let pool: &[&str] = if funny { &SIMPLE } else { &JARGON };
    let mut words = Vec::new();
    for i in 0..rng.gen_range(4..8) {
        if i % 2 == 1 {
            words.push(*GLUE.choose(rng).unwrap());
        } else {
            words.push(*pool.choose(rng).unwrap());
        }
    }
    words.join(" ")
}

fn dataset(n: usize, seed: u64) -> Vec<TitleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let funny = i % 2 == 0;
            let mut r = TitleRecord::new(format!("t{i:04}"), title(&mut rng, funny));
            r.label = Some(funny);
            r.field = Field::KNOWN[i % 4];
            r
        })
        .collect()
}

fn resources() -> Resources {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    // background corpus dominated by jargon, so simple words are surprising
    let background: Vec<Vec<String>> = (0..400)
        .map(|i| {
            title(&mut rng, i % 10 == 0)
                .split(' ')
                .map(str::to_string)
                .collect()
        })
        .collect();
    let mut res = Resources::default();
    for n in [1u8, 2] {
        let lm = train_ngram(&background, &NGramConfig::new(n as usize, 1.0, 1)).unwrap();
        res.title_lms.insert(n, lm);
    }
    let aoa = SIMPLE
        .iter()
        .map(|w| (*w, 3.0))
        .chain(JARGON.iter().map(|w| (*w, 14.0)))
        .chain(GLUE.iter().map(|w| (*w, 4.0)));
    res.aoa = Some(WordValueTable::from_entries(TableKind::Aoa, DefaultPolicy::Skip, aoa).unwrap());
    let fun = SIMPLE
        .iter()
        .map(|w| (*w, 3.2))
        .chain(JARGON.iter().map(|w| (*w, 1.8)));
    res.funniness =
        Some(WordValueTable::from_entries(TableKind::Funniness, DefaultPolicy::Skip, fun).unwrap());
    res.connotation = Some(
        ConnotationLists::new(
            ["banana".to_string()].into(),
            ["myocardial".to_string()].into(),
        )
        .unwrap(),
    );
    res
}

#[test]
fn features_to_cross_validated_mlp() {
    let records = dataset(120, 1);
    let res = resources();
    let spec = default_feature_spec(&res).unwrap();
    let matrix = build_matrix(&records, &res, &spec).unwrap();
    assert_eq!(matrix.nrows(), 120);
    assert_eq!(matrix.ncols(), spec.len());
    let y: Vec<bool> = records.iter().map(|r| r.label.unwrap()).collect();
    let cfg = MlpConfig {
        max_epochs: 100,
        ..Default::default()
    };
    let rep = cross_validate(&y, 5, 7, |train, test| {
        let xt = matrix.rows(train).values;
        let yt: Vec<bool> = train.iter().map(|i| y[*i]).collect();
        let (m, _) = train_mlp(&xt, &yt, &cfg)?;
        let p = m.predict_proba(&matrix.rows(test).values)?;
        Ok(p.iter().map(|v| *v > 0.5).collect())
    })
    .unwrap();
    assert!(rep.mean.accuracy > 0.95, "{rep:?}");
}

#[test]
fn ranking_puts_funny_titles_first() {
    let records = dataset(80, 2);
    let res = resources();
    let spec = default_feature_spec(&res).unwrap();
    let matrix = build_matrix(&records, &res, &spec).unwrap();
    let y: Vec<bool> = records.iter().map(|r| r.label.unwrap()).collect();
    let (mut model, _) = train_mlp(
        &matrix.values,
        &y,
        &MlpConfig {
            max_epochs: 80,
            ..Default::default()
        },
    )
    .unwrap();
    model.spec_hash = Some(spec.hash());
    model.feature_names = matrix.names.clone();
    let text = model_to_json(&model).unwrap();
    let back: MlpModel = model_from_json(&text).unwrap();
    back.check_spec(&spec).unwrap();

    let test = dataset(40, 3);
    let tm = build_matrix(&test, &res, &spec).unwrap();
    let p = back.predict_proba(&tm.values).unwrap();
    let ranked = RankedList::from_scores(tm.ids.iter().cloned().zip(p.iter().copied())).unwrap();
    let gold: BTreeMap<&str, bool> = test
        .iter()
        .map(|r| (r.id.as_str(), r.label.unwrap()))
        .collect();
    let rel = ranked.relevance(|id| gold[id]);
    assert!(ndcg_at_k(&rel, 10).unwrap().value > 0.9);
}

#[test]
fn rule_and_bow_baselines() {
    let records = dataset(60, 4);
    let res = resources();
    let y: Vec<bool> = records.iter().map(|r| r.label.unwrap()).collect();
    let global = res.title_lms[&2].clone();
    let inputs: Vec<_> = records
        .iter()
        .map(|r| build_rule_input(r, &res, &BTreeMap::new(), &global).unwrap())
        .collect();
    let rc = fit_rule_thresholds(&inputs, &y, &RuleGrid::from_inputs(&inputs)).unwrap();
    let correct = inputs
        .iter()
        .zip(&y)
        .filter(|(i, y)| rule_classify(&rc, i) == **y)
        .count();
    assert!(correct as f64 / y.len() as f64 > 0.9);
    assert_eq!(rc.thresholds.len(), 4);

    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let bow = train_logreg_bow(&texts, &y, &BowConfig::default()).unwrap();
    let held = dataset(40, 5);
    let p = bow.predict_proba(&held.iter().map(|r| r.text.as_str()).collect::<Vec<_>>());
    let acc = p
        .iter()
        .zip(&held)
        .filter(|(p, r)| (**p > 0.5) == r.label.unwrap())
        .count();
    assert_eq!(acc, 40);
}

#[test]
fn missing_resources_are_reported() {
    let records = dataset(4, 6);
    let res = Resources::default();
    let global = resources().title_lms[&1].clone();
    let err = build_rule_input(&records[0], &res, &BTreeMap::new(), &global).unwrap_err();
    assert!(err.to_string().contains("AoA"));
    assert!(default_feature_spec(&res).is_err());
}
