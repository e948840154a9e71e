use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::spearman;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Question {
    Title,
    Topic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub worker: String,
    pub title_score: u8,
    pub topic_score: u8,
}

impl Rating {
    pub fn score(&self, q: Question) -> u8 {
        match q {
            Question::Title => self.title_score,
            Question::Topic => self.topic_score,
        }
    }
}

/// Likert ratings (1–5) per title id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMatrix {
    pub ratings: BTreeMap<String, Vec<Rating>>,
}

fn score(field: &str, origin: &str, line: usize, name: &str) -> Result<u8> {
    match field.trim().parse::<u8>() {
        Ok(v) if (1..=5).contains(&v) => Ok(v),
        _ => Err(Error::parse(
            origin,
            line,
            format!("{name} `{field}` is not an integer in 1..5"),
        )),
    }
}

impl AnnotationMatrix {
    pub fn add(&mut self, title: impl Into<String>, rating: Rating) -> Result<()> {
        for s in [rating.title_score, rating.topic_score] {
            if !(1..=5).contains(&s) {
                return Err(Error::invalid(format!("score {s} is outside 1..5")));
            }
        }
        self.ratings.entry(title.into()).or_default().push(rating);
        Ok(())
    }

    /// CSV with header `title_id,worker_id,title_score,topic_score`.
    pub fn from_csv<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["title_id", "worker_id", "title_score", "topic_score"];
        if headers.iter().map(str::trim).ne(expected.iter().copied()) {
            return Err(Error::parse(
                origin,
                1,
                format!("expected header `{}`", expected.join(",")),
            ));
        }
        let mut m = AnnotationMatrix::default();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::parse(origin, line, e.to_string()))?;
            if row.len() != 4 {
                return Err(Error::parse(
                    origin,
                    line,
                    format!("expected 4 columns, found {}", row.len()),
                ));
            }
            let title = row[0].trim();
            if title.is_empty() {
                return Err(Error::parse(origin, line, "empty title_id"));
            }
            let rating = Rating {
                worker: row[1].trim().to_string(),
                title_score: score(&row[2], origin, line, "title_score")?,
                topic_score: score(&row[3], origin, line, "topic_score")?,
            };
            m.ratings.entry(title.to_string()).or_default().push(rating);
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(file, &path.display().to_string())
    }

    pub fn max_raters(&self) -> usize {
        self.ratings.values().map(Vec::len).max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }
}

/// Funny iff at least `k` raters gave a score of at least `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DecisionRule {
    pub k: usize,
    pub m: u8,
}

impl DecisionRule {
    pub const STRICT: DecisionRule = DecisionRule { k: 2, m: 3 };
    pub const RELAXED: DecisionRule = DecisionRule { k: 1, m: 3 };

    pub fn new(k: usize, m: u8) -> Result<Self> {
        if k == 0 || !(2..=5).contains(&m) {
            return Err(Error::invalid(format!(
                "decision rule needs k ≥ 1 and m in 2..5, got k={k}, m={m}"
            )));
        }
        Ok(DecisionRule { k, m })
    }

    pub fn applies(&self, scores: impl IntoIterator<Item = u8>) -> bool {
        scores.into_iter().filter(|s| *s >= self.m).count() >= self.k
    }

    /// Every k in 1..=max_raters with every m in 2..=5.
    pub fn grid(max_raters: usize) -> Vec<DecisionRule> {
        (1..=max_raters.max(1))
            .flat_map(|k| (2..=5).map(move |m| DecisionRule { k, m }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregated {
    pub labels: BTreeMap<String, bool>,
    /// titles with fewer than k ratings
    pub under_rated: Vec<String>,
}

pub fn aggregate_annotations(
    matrix: &AnnotationMatrix,
    rule: DecisionRule,
    question: Question,
) -> Aggregated {
    let mut labels = BTreeMap::new();
    let mut under_rated = Vec::new();
    for (id, rs) in &matrix.ratings {
        if rs.len() < rule.k {
            under_rated.push(id.clone());
        }
        labels.insert(
            id.clone(),
            rule.applies(rs.iter().map(|r| r.score(question))),
        );
    }
    Aggregated {
        labels,
        under_rated,
    }
}

/// What candidate rules are scored against.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// expert ratings; rules are scored by Spearman ρ
    Expert(BTreeMap<String, f64>),
    /// gold labels; rules are scored by accuracy
    Gold(BTreeMap<String, bool>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleScore {
    pub rule: DecisionRule,
    /// NaN when undefined (constant labels against expert ratings)
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSelection {
    pub best: DecisionRule,
    pub table: Vec<RuleScore>,
}

/// Scores every rule of the grid and returns the best; earlier grid
/// entries win ties and undefined scores never win.
pub fn select_decision_rule(
    matrix: &AnnotationMatrix,
    reference: &Reference,
    grid: &[DecisionRule],
    question: Question,
) -> Result<RuleSelection> {
    if grid.is_empty() {
        return Err(Error::invalid("decision-rule grid is empty"));
    }
    if matrix.is_empty() {
        return Err(Error::invalid("no annotations"));
    }
    for id in matrix.ratings.keys() {
        let covered = match reference {
            Reference::Expert(m) => m.contains_key(id),
            Reference::Gold(m) => m.contains_key(id),
        };
        if !covered {
            return Err(Error::invalid(format!(
                "reference has no entry for title `{id}`"
            )));
        }
    }
    let mut table = Vec::with_capacity(grid.len());
    for &rule in grid {
        let labels = aggregate_annotations(matrix, rule, question).labels;
        let score = match reference {
            Reference::Gold(gold) => {
                labels.iter().filter(|(id, y)| gold[*id] == **y).count() as f64
                    / labels.len() as f64
            }
            Reference::Expert(expert) => {
                let x: Vec<f64> = labels.values().map(|y| f64::from(u8::from(*y))).collect();
                let e: Vec<f64> = labels.keys().map(|id| expert[id]).collect();
                spearman(&x, &e).map(|r| r.statistic).unwrap_or(f64::NAN)
            }
        };
        table.push(RuleScore { rule, score });
    }
    let mut best: Option<RuleScore> = None;
    for s in &table {
        if s.score.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s.score > b.score) {
            best = Some(*s);
        }
    }
    let best = best
        .ok_or_else(|| {
            Error::invalid("no decision rule has a defined score against the reference")
        })?
        .rule;
    Ok(RuleSelection { best, table })
}

pub fn write_rule_table_csv<W: std::io::Write>(w: W, sel: &RuleSelection) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k", "m", "score", "selected"])?;
    for s in &sel.table {
        out.write_record([
            s.rule.k.to_string(),
            s.rule.m.to_string(),
            s.score.to_string(),
            (s.rule == sel.best).to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<rule table>", e))
}

pub fn write_labels_csv<W: std::io::Write>(w: W, agg: &Aggregated) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["title_id", "label"])?;
    for (id, y) in &agg.labels {
        out.write_record([id.as_str(), if *y { "1" } else { "0" }])?;
    }
    out.flush().map_err(|e| Error::io("<labels>", e))
}

/// Two-column CSV `title_id,<value>` read as gold labels (0/1).
pub fn read_gold_csv<R: Read>(reader: R, origin: &str) -> Result<BTreeMap<String, bool>> {
    let mut out = BTreeMap::new();
    for (id, v, line) in read_pairs(reader, origin)? {
        let y = match v.as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(Error::parse(
                    origin,
                    line,
                    format!("label `{other}` is not 0/1"),
                ))
            }
        };
        out.insert(id, y);
    }
    Ok(out)
}

/// Two-column CSV `title_id,<score>` read as expert ratings.
pub fn read_expert_csv<R: Read>(reader: R, origin: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (id, v, line) in read_pairs(reader, origin)? {
        let s: f64 = v
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(origin, line, format!("score `{v}` is not a number")))?;
        out.insert(id, s);
    }
    Ok(out)
}

fn read_pairs<R: Read>(reader: R, origin: &str) -> Result<Vec<(String, String, usize)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        if row.len() < 2 {
            return Err(Error::parse(origin, line, "expected two columns"));
        }
        out.push((row[0].trim().to_string(), row[1].trim().to_string(), line));
    }
    Ok(out)
}
