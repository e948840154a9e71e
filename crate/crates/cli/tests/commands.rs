mod common;

use std::path::PathBuf;

use common::{csv_rows, read_ranking, Fixture};
use iggy_cli::{
    cmd_aggregate, cmd_build_lm, cmd_evaluate, cmd_extract, cmd_rank, cmd_report, cmd_train,
    AggregateArgs, EvalMode, ModelKind, RunManifest, MANIFEST_NAME,
};

fn files_in(dir: &std::path::Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

fn code(out: &std::process::Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn toy_corpus_gives_three_word_lms() {
    let dir = tempfile::tempdir().unwrap();
    let titles = dir.path().join("t.txt");
    std::fs::write(
        &titles,
        "a study of ducks\nthe duck strikes back\nducks in space\non the origin of ducks\na duck walks into a lab\n",
    )
    .unwrap();
    let cfg_file = dir.path().join("c.toml");
    std::fs::write(
        &cfg_file,
        format!(
            "out = \"{lm}\"\n[corpus]\ntitles = \"{}\"\n[lm]\norders = [1, 2, 3]\ndir = \"{lm}\"\n",
            titles.display(),
            lm = dir.path().join("lm").display()
        ),
    )
    .unwrap();
    let cfg = iggy_cli::PipelineConfig::resolve(Some(&cfg_file), &[]).unwrap();
    let m = cmd_build_lm(&cfg).unwrap();
    let files = files_in(&dir.path().join("lm"));
    let lms: Vec<&String> = files.iter().filter(|f| f.ends_with(".lm")).collect();
    assert_eq!(lms, ["title_lm1.lm", "title_lm2.lm", "title_lm3.lm"]);
    assert!(files.contains(&MANIFEST_NAME.to_string()));
    assert_eq!(m.command, "build-lm");
}

#[test]
fn build_lm_is_deterministic() {
    let f = Fixture::new(20);
    let cfg = f.config_out("lm", &[]);
    let a = cmd_build_lm(&cfg).unwrap();
    let b = cmd_build_lm(&cfg).unwrap();
    assert_eq!(a.checksums(), b.checksums());
    let names: Vec<&str> = a.outputs.iter().map(|d| d.path.as_str()).collect();
    for want in [
        "title_lm1.lm",
        "title_lm2.lm",
        "joke_lm1.lm",
        "joke_lm2.lm",
        "pos_tagger.json",
        "pos_lm2.lm",
    ] {
        assert!(
            names.iter().any(|n| n.ends_with(want)),
            "{want} missing from {names:?}"
        );
    }
}

#[test]
fn extract_three_titles() {
    let f = Fixture::new(3);
    f.build_lms();
    let cfg = f.config_out("feat", &[]);
    let a = cmd_extract(&cfg, None).unwrap();
    let csv = f.read("feat/features.csv");
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 3);
    // 76 base columns, three for the single external model, plus the id
    assert_eq!(rows[0].len(), 1 + 79, "{}", csv.lines().next().unwrap());
    let b = cmd_extract(&cfg, None).unwrap();
    assert_eq!(a.checksums(), b.checksums());
    assert_eq!(csv, f.read("feat/features.csv"));
}

#[test]
fn pinned_spec_with_missing_joke_lm_fails_fast() {
    let f = Fixture::new(6);
    f.build_lms();
    cmd_extract(&f.config_out("feat", &[]), None).unwrap();
    let spec = f.path("feat/feature_spec.json");
    assert!(std::fs::read_to_string(&spec).unwrap().contains("joke_lm"));
    for n in [1, 2] {
        std::fs::remove_file(f.path(&format!("lm/joke_lm{n}.lm"))).unwrap();
    }
    let cfg = f.config_out("feat2", &[&format!("spec=\"{}\"", spec.display())]);
    let err = format!("{:#}", cmd_extract(&cfg, None).unwrap_err());
    assert!(err.contains("joke_lm"), "{err}");
    assert!(!f.path("feat2/features.csv").exists());
}

#[test]
fn train_iggy_then_rank() {
    let f = Fixture::new(40);
    f.build_lms();
    let cfg = f.config_out("iggy", &["eval.folds=5"]);
    let m = cmd_train(&cfg, ModelKind::Iggy).unwrap();
    let cv: serde_json::Value = serde_json::from_str(&f.read("iggy/cv.json")).unwrap();
    assert_eq!(cv["folds"].as_array().unwrap().len(), 5);
    assert_eq!(csv_rows(&f.read("iggy/metrics.csv")).len(), 6);
    assert!(f.path("iggy/model.json").exists());
    assert!(f.path("iggy/loss_curve.svg").exists());
    assert!(m
        .outputs
        .iter()
        .any(|d| d.path.ends_with("feature_spec.json")));

    let model = f.path("iggy/model.json");
    let data = f.path("dataset.jsonl");
    let rcfg = f.config_out("rank", &[]);
    cmd_rank(&rcfg, &model, Some(&data), None).unwrap();
    let ranking = read_ranking(&f.read("rank/ranking.tsv"));
    assert_eq!(ranking.len(), 40);
    assert!(ranking.windows(2).all(|w| w[0].1 >= w[1].1));
    // funny synthetic titles should dominate the top of the list
    let funny_top = ranking[..10]
        .iter()
        .filter(|(id, _)| f.labels.iter().any(|(l, y)| l == id && *y))
        .count();
    assert!(funny_top >= 8, "{funny_top}");

    cmd_rank(&rcfg, &model, Some(&data), Some(7)).unwrap();
    assert_eq!(read_ranking(&f.read("rank/ranking.tsv")).len(), 7);
}

#[test]
fn rank_ties_break_by_id() {
    let f = Fixture::new(20);
    f.build_lms();
    let cfg = f.config_out("bow", &["eval.folds=0"]);
    cmd_train(&cfg, ModelKind::LrBow).unwrap();
    let ties = f.path("ties.jsonl");
    std::fs::write(
        &ties,
        ["c", "a", "b"]
            .iter()
            .map(|id| format!("{{\"id\":\"{id}\",\"title\":\"duck of the cat\"}}\n"))
            .collect::<String>(),
    )
    .unwrap();
    cmd_rank(
        &f.config_out("rank", &[]),
        &f.path("bow/model.json"),
        Some(&ties),
        None,
    )
    .unwrap();
    let ids: Vec<String> = read_ranking(&f.read("rank/ranking.tsv"))
        .into_iter()
        .map(|r| r.0)
        .collect();
    assert_eq!(ids, ["a", "b", "c"]);
}

#[test]
fn train_rule_prints_thresholds() {
    let f = Fixture::new(30);
    f.build_lms();
    let out = f.iggy(&["--out", f.path("rule").to_str().unwrap(), "train", "rule"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let table = f.read("rule/thresholds.csv");
    assert!(stdout.contains(table.lines().next().unwrap()), "{stdout}");
    assert!(f.path("rule/model.json").exists());
}

#[test]
fn fusion_requires_embeddings() {
    let f = Fixture::new(30);
    f.build_lms();
    let out = f.iggy(&[
        "--out",
        f.path("fusion").to_str().unwrap(),
        "train",
        "fusion",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("embedding"));
    assert!(!f.path("fusion/model.json").exists());

    let cfg = f.config_out(
        "fusion",
        &["external.embeddings=\"toybert\"", "eval.folds=0"],
    );
    cmd_train(&cfg, ModelKind::Fusion).unwrap();
    cmd_rank(
        &f.config_out("fusion_rank", &["external.embeddings=\"toybert\""]),
        &f.path("fusion/model.json"),
        Some(&f.path("dataset.jsonl")),
        None,
    )
    .unwrap();
    assert_eq!(read_ranking(&f.read("fusion_rank/ranking.tsv")).len(), 30);
}

#[test]
fn ensemble_train_and_rank() {
    let f = Fixture::new(60);
    f.build_lms();
    let cfg = f.config_out(
        "ens",
        &[
            "ensemble.bases=[\"iggy\",\"lr_bow\",\"max_noun_funniness\"]",
            "ensemble.share=0.4",
        ],
    );
    cmd_train(&cfg, ModelKind::Ensemble).unwrap();
    assert!(f.path("ens/base/iggy.json").exists());
    assert!(f.path("ens/base/lr_bow.json").exists());
    assert!(!f.path("ens/base/max_noun_funniness.json").exists());
    assert_eq!(csv_rows(&f.read("ens/metrics.csv")).len(), 4);
    cmd_rank(
        &f.config_out("ens_rank", &[]),
        &f.path("ens/model.json"),
        Some(&f.path("dataset.jsonl")),
        None,
    )
    .unwrap();
    let ranking = read_ranking(&f.read("ens_rank/ranking.tsv"));
    assert_eq!(ranking.len(), 60);
    assert!(ranking.iter().all(|(_, s)| (0.0..=1.0).contains(s)));
}

#[test]
fn evaluate_dataset_and_retrieval() {
    let f = Fixture::new(40);
    f.build_lms();
    let cfg = f.config_out(
        "ev",
        &["eval.models=[\"iggy\",\"lr_bow\",\"dale_chall_inverse\"]"],
    );
    let a = cmd_evaluate(&cfg, EvalMode::Dataset, &[]).unwrap();
    let rows = csv_rows(&f.read("ev/metrics.csv"));
    let models: Vec<&str> = rows.iter().map(|r| r["model"].as_str()).collect();
    for m in ["iggy", "lr_bow", "dale_chall_inverse"] {
        assert!(models.contains(&m), "{models:?}");
    }
    let b = cmd_evaluate(&cfg, EvalMode::Dataset, &[]).unwrap();
    assert_eq!(a.checksums(), b.checksums());

    let cfg = f.config_out("ig", &["eval.models=[\"iggy\"]"]);
    cmd_evaluate(&cfg, EvalMode::IgRetrieval, &[]).unwrap();
    let split: serde_json::Value = serde_json::from_str(&f.read("ig/split.json")).unwrap();
    assert_eq!(split["winners"], 10);
    assert_eq!(split["sampled_negatives"], 10);
    assert_eq!(split["test_ids"].as_array().unwrap().len(), 20);
    assert!(!csv_rows(&f.read("ig/metrics.csv")).is_empty());
}

fn write_ranking(f: &Fixture, name: &str, ids: &[&str]) -> (String, PathBuf) {
    let path = f.path(&format!("{name}.tsv"));
    let mut s = String::from("id\tscore\trank\n");
    for (i, id) in ids.iter().enumerate() {
        s.push_str(&format!("{id}\t{}\t{}\n", 1.0 - i as f64 / 100.0, i + 1));
    }
    std::fs::write(&path, s).unwrap();
    (name.to_string(), path)
}

#[test]
fn evaluate_wild_writes_ndcg_and_plots() {
    let f = Fixture::new(40);
    let ids: Vec<&str> = f.labels.iter().map(|(id, _)| id.as_str()).collect();
    let funny_first: Vec<&str> = {
        let mut v: Vec<&str> = f
            .labels
            .iter()
            .filter(|(_, y)| *y)
            .map(|(id, _)| id.as_str())
            .collect();
        v.extend(
            f.labels
                .iter()
                .filter(|(_, y)| !*y)
                .map(|(id, _)| id.as_str()),
        );
        v
    };
    let mut reversed = funny_first.clone();
    reversed.reverse();
    let lists = vec![
        write_ranking(&f, "good", &funny_first),
        write_ranking(&f, "bad", &reversed),
        write_ranking(&f, "plain", &ids),
    ];
    let cfg = f.config_out("wild", &[]);
    let a = cmd_evaluate(&cfg, EvalMode::Wild, &lists).unwrap();
    let rows = csv_rows(&f.read("wild/ndcg.csv"));
    let ndcg = |model: &str, labels: &str, k: &str| -> f64 {
        rows.iter()
            .find(|r| r["model"] == model && r["labels"] == labels && r["k"] == k)
            .unwrap()["ndcg"]
            .parse()
            .unwrap()
    };
    assert!(ndcg("good", "relaxed", "10") > ndcg("bad", "relaxed", "10"));
    assert!((ndcg("good", "relaxed", "10") - 1.0).abs() < 1e-12);
    for file in [
        "precision_at_k_strict.svg",
        "precision_at_k_relaxed.svg",
        "precision_at_k.tsv",
        "labels_summary.csv",
        "overlap.csv",
        "correlation.csv",
    ] {
        assert!(f.path(&format!("wild/{file}")).exists(), "{file}");
    }
    let b = cmd_evaluate(&cfg, EvalMode::Wild, &lists).unwrap();
    assert_eq!(a.checksums(), b.checksums());
}

#[test]
fn aggregate_rules_and_selection() {
    let f = Fixture::new(40);
    let cfg = f.config_out("agg", &[]);
    let args = AggregateArgs {
        rule: Some((1, 3)),
        ..Default::default()
    };
    cmd_aggregate(&cfg, &args).unwrap();
    let rows = csv_rows(&f.read("agg/labels.csv"));
    assert_eq!(rows.len(), 40);

    let args = AggregateArgs {
        select: true,
        gold: Some(f.path("gold.csv")),
        ..Default::default()
    };
    let a = cmd_aggregate(&cfg, &args).unwrap();
    assert!(f.path("agg/rule_table.csv").exists());
    // funny titles have three raters scoring at least 3, serious ones two raters below 3
    let table = csv_rows(&f.read("agg/rule_table.csv"));
    let best = table.iter().find(|r| r["selected"] == "true").unwrap();
    assert_eq!(best["score"], "1", "{best:?}");
    let sel: serde_json::Value = serde_json::from_str(&f.read("agg/selected_rule.json")).unwrap();
    assert_eq!(sel["k"].to_string(), best["k"]);
    let b = cmd_aggregate(&cfg, &args).unwrap();
    assert_eq!(a.checksums(), b.checksums());
}

#[test]
fn aggregate_rejects_out_of_range_score() {
    let f = Fixture::new(10);
    let mut ann = f.read("annotations.csv");
    ann.push_str("t0001,w9,6,1\n");
    let lines = ann.lines().count();
    std::fs::write(f.path("annotations.csv"), ann).unwrap();
    let out = f.iggy(&[
        "--out",
        f.path("agg").to_str().unwrap(),
        "aggregate",
        "--rule",
        "1,3",
    ]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!(":{lines}")), "{err}");
}

#[test]
fn report_writes_feature_table() {
    let f = Fixture::new(40);
    f.build_lms();
    let lists = vec![
        write_ranking(&f, "x", &["t0000", "t0001", "t0002", "t0003"]),
        write_ranking(&f, "y", &["t0003", "t0002", "t0001", "t0000"]),
    ];
    let cfg = f.config_out("rep", &[]);
    let a = cmd_report(&cfg, None, &lists).unwrap();
    let rows = csv_rows(&f.read("rep/feature_report.csv"));
    assert_eq!(rows.len(), 79);
    let corr = f.read("rep/correlation.csv");
    assert!(corr.contains("x,1,-1"), "{corr}");
    let b = cmd_report(&cfg, None, &lists).unwrap();
    assert_eq!(a.checksums(), b.checksums());
}

#[test]
fn diverging_training_exits_numeric() {
    let f = Fixture::new(30);
    f.build_lms();
    let out = f.iggy(&[
        "--out",
        f.path("boom").to_str().unwrap(),
        "--mlp.adam.lr",
        "1e300",
        "--eval.folds",
        "0",
        "train",
        "iggy",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dotted_flag_overrides_config() {
    let f = Fixture::new(30);
    f.build_lms();
    let out = f.iggy(&[
        "--out",
        f.path("cv").to_str().unwrap(),
        "--eval.folds",
        "4",
        "train",
        "lr-bow",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cv: serde_json::Value = serde_json::from_str(&f.read("cv/cv.json")).unwrap();
    assert_eq!(cv["folds"].as_array().unwrap().len(), 4);
    let m = RunManifest::load(&f.path("cv").join(MANIFEST_NAME)).unwrap();
    assert_eq!(m.command, "train lr_bow");
}

#[test]
fn missing_input_exits_two() {
    let f = Fixture::new(10);
    let out = f.iggy(&[
        "--out",
        f.path("x").to_str().unwrap(),
        "extract",
        f.path("nope.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.jsonl"));
    let out = f.iggy(&["train", "no-such-model"]);
    assert_eq!(code(&out), 2);
}
