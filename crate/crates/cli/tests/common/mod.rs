#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iggy_cli::{Override, PipelineConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

pub const SIMPLE: [&str; 12] = [
    "duck", "cat", "banana", "dog", "cake", "nose", "toe", "pizza", "frog", "sock", "chicken",
    "butt",
];
pub const JARGON: [&str; 12] = [
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
    "regression",
    "catalysis",
];
pub const GLUE: [&str; 5] = ["of", "in", "the", "and", "for"];
pub const VENUES: [(&str, &str); 4] = [
    ("Journal of Neuro Things", "neuroscience"),
    ("Medical Letters", "medicine"),
    ("Cell Stuff", "biology"),
    ("Physics Review", "exact_sciences"),
];

pub fn title(rng: &mut ChaCha8Rng, funny: bool) -> String {
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

fn json_line(id: &str, text: &str, label: Option<bool>, venue: Option<&str>) -> String {
    let mut v = serde_json::json!({ "id": id, "title": text });
    if let Some(y) = label {
        v["label"] = serde_json::json!(u8::from(y));
    }
    if let Some(venue) = venue {
        v["venue"] = serde_json::json!(venue);
    }
    v.to_string()
}

/// A temporary workspace with a small synthetic corpus, lexicons, external
/// scores, annotations and a config file pointing at all of them.
pub struct Fixture {
    pub dir: TempDir,
    /// dataset ids with their labels, in file order
    pub labels: Vec<(String, bool)>,
}

impl Fixture {
    pub fn new(n_dataset: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Fixture {
            dir,
            labels: Vec::new(),
        };
        f.write_all(n_dataset)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: impl AsRef<[u8]>) {
        std::fs::write(self.path(name), text).unwrap();
    }

    fn write_all(mut self, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut titles = String::new();
        for i in 0..300 {
            let (venue, _) = VENUES[i % 4];
            writeln!(
                titles,
                "{}",
                json_line(
                    &format!("b{i:04}"),
                    &title(&mut rng, i % 10 == 0),
                    None,
                    Some(venue)
                )
            )
            .unwrap();
        }
        self.write("titles.jsonl", titles);

        let mut jokes = String::new();
        for _ in 0..150 {
            writeln!(jokes, "{}", title(&mut rng, true)).unwrap();
        }
        self.write("jokes.txt", jokes);

        let mut dataset = String::new();
        let mut external = String::new();
        for i in 0..n {
            let funny = i % 2 == 0;
            let id = format!("t{i:04}");
            let text = title(&mut rng, funny);
            let (venue, _) = VENUES[i % 4];
            writeln!(
                dataset,
                "{}",
                json_line(&id, &text, Some(funny), Some(venue))
            )
            .unwrap();
            let tokens: Vec<&str> = text.split(' ').collect();
            let scores: Vec<f64> = tokens
                .iter()
                .map(|w| if SIMPLE.contains(w) { 6.0 } else { 2.0 } + rng.gen_range(0.0..0.5))
                .collect();
            let sign = if funny { 1.0 } else { -1.0 };
            let embedding: Vec<f64> = (0..8)
                .map(|j| sign * (j as f64 + 1.0) * 0.1 + rng.gen_range(-0.05..0.05))
                .collect();
            let rec = serde_json::json!({
                "id": id, "model": "toybert", "tokens": tokens, "scores": scores, "embedding": embedding
            });
            writeln!(external, "{rec}").unwrap();
            self.labels.push((id, funny));
        }
        self.write("dataset.jsonl", dataset);
        self.write("external.jsonl", external);

        let mut venues = String::from("venue,field\n");
        for (v, f) in VENUES {
            writeln!(venues, "{v},{f}").unwrap();
        }
        self.write("venues.csv", venues);

        let table = |pairs: &mut dyn Iterator<Item = (&str, f64)>| {
            pairs
                .map(|(w, v)| format!("{w}\t{v}\n"))
                .collect::<String>()
        };
        self.write(
            "aoa.tsv",
            table(
                &mut SIMPLE
                    .iter()
                    .map(|w| (*w, 3.5))
                    .chain(JARGON.iter().map(|w| (*w, 14.0)))
                    .chain(GLUE.iter().map(|w| (*w, 4.0))),
            ),
        );
        self.write(
            "funniness.tsv",
            table(
                &mut SIMPLE
                    .iter()
                    .map(|w| (*w, 3.2))
                    .chain(JARGON.iter().map(|w| (*w, 1.7))),
            ),
        );
        self.write(
            "valence.tsv",
            table(
                &mut SIMPLE
                    .iter()
                    .map(|w| (*w, 6.5))
                    .chain(JARGON.iter().map(|w| (*w, 4.8))),
            ),
        );
        self.write("white.txt", "banana\nbutt\n");
        self.write("black.txt", "myocardial\n");
        let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
        std::fs::copy(fixtures.join("crude_toy.csv"), self.path("crude.csv")).unwrap();
        std::fs::copy(fixtures.join("tagged_toy.txt"), self.path("tagged.txt")).unwrap();

        // three raters per funny title and one per serious title
        let mut ann = String::from("title_id,worker_id,title_score,topic_score\n");
        let mut gold = String::from("title_id,label\n");
        for (id, funny) in self.labels.iter().take(40) {
            let raters = if *funny { 3 } else { 2 };
            for r in 0..raters {
                let s = if *funny {
                    rng.gen_range(3..=5)
                } else {
                    rng.gen_range(1..=2)
                };
                writeln!(ann, "{id},w{r},{s},{}", rng.gen_range(1..=5)).unwrap();
            }
            writeln!(gold, "{id},{}", u8::from(*funny)).unwrap();
        }
        self.write("annotations.csv", ann);
        self.write("gold.csv", gold);

        let winners: Vec<&str> = self
            .labels
            .iter()
            .filter(|(_, y)| *y)
            .take(10)
            .map(|(id, _)| id.as_str())
            .collect();
        self.write("winners.txt", winners.join("\n") + "\n");

        let config = format!(
            r#"seed = 3
threads = 2

[corpus]
titles = "{d}/titles.jsonl"
jokes = "{d}/jokes.txt"
dataset = "{d}/dataset.jsonl"
venue_map = "{d}/venues.csv"
tagged = "{d}/tagged.txt"
winners = "{d}/winners.txt"
tagger_epochs = 2

[lm]
orders = [1, 2, 3]
min_count = 1
dir = "{d}/lm"

[lexicons]
aoa = "{d}/aoa.tsv"
funniness = "{d}/funniness.tsv"
valence = "{d}/valence.tsv"
crude = "{d}/crude.csv"
whitelist = "{d}/white.txt"
blacklist = "{d}/black.txt"

[external]
scores = ["{d}/external.jsonl"]

[mlp]
hidden = [16]
max_epochs = 60

[fusion]
branch = [8]
head_hidden = [8]
max_epochs = 40

[ensemble.mlp]
hidden = [8]
max_epochs = 40

[eval]
folds = 3
annotations = "{d}/annotations.csv"
top = 50
ndcg_k = [5, 10]
precision_step = 5
overlap_k = 20
"#,
            d = self.dir.path().display()
        );
        self.write("config.toml", config);
        self
    }

    pub fn config(&self, overrides: &[&str]) -> PipelineConfig {
        let ov: Vec<Override> = overrides
            .iter()
            .map(|s| Override::parse(s).unwrap())
            .collect();
        PipelineConfig::resolve(Some(&self.path("config.toml")), &ov).unwrap()
    }

    /// Config writing to `out` under the fixture directory.
    pub fn config_out(&self, out: &str, overrides: &[&str]) -> PipelineConfig {
        let mut o: Vec<String> = vec![format!("out=\"{}\"", self.path(out).display())];
        o.extend(overrides.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = o.iter().map(String::as_str).collect();
        self.config(&refs)
    }

    /// Builds the language models into `lm/`.
    pub fn build_lms(&self) {
        iggy_cli::cmd_build_lm(&self.config_out("lm", &[])).unwrap();
    }

    pub fn iggy(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_iggy"))
            .arg("--config")
            .arg(self.path("config.toml"))
            .args(args)
            .env_remove("IGGY_THREADS")
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    }

    pub fn read(&self, rel: &str) -> String {
        std::fs::read_to_string(self.path(rel)).unwrap_or_else(|e| panic!("reading {rel}: {e}"))
    }
}

/// `ranking.tsv` rows as (id, score).
pub fn read_ranking(text: &str) -> Vec<(String, f64)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            (c[0].to_string(), c[1].parse().unwrap())
        })
        .collect()
}

pub fn csv_rows(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| {
            header
                .iter()
                .map(|h| h.to_string())
                .zip(l.split(',').map(str::to_string))
                .collect()
        })
        .collect()
}
