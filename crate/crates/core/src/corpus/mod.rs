//! Title corpora: ingestion, tokenization, tagging, venue→field mapping and splits.

pub mod split;
pub mod tagger;
pub mod tokenize;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use split::{make_ig_retrieval_split, split_dataset, IgRetrievalSplit, SplitSpec, Splits};
pub use tagger::{pos_tag, train_pos_tagger, PosTaggerModel, TaggerConfig};
pub use tokenize::{tokenize, words, Token};

use crate::error::{Error, Result};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Neuroscience,
    Medicine,
    Biology,
    ExactSciences,
    #[default]
    Unknown,
}

impl Field {
    pub const KNOWN: [Field; 4] = [
        Field::Neuroscience,
        Field::Medicine,
        Field::Biology,
        Field::ExactSciences,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::Neuroscience => "neuroscience",
            Field::Medicine => "medicine",
            Field::Biology => "biology",
            Field::ExactSciences => "exact_sciences",
            Field::Unknown => "unknown",
        }
    }

    /// Position in the 4-way one-hot encoding; `None` for unknown.
    pub fn one_hot_index(self) -> Option<usize> {
        Field::KNOWN.iter().position(|f| *f == self)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "neuroscience" => Ok(Field::Neuroscience),
            "medicine" => Ok(Field::Medicine),
            "biology" => Ok(Field::Biology),
            "exact_sciences" => Ok(Field::ExactSciences),
            "unknown" => Ok(Field::Unknown),
            other => Err(format!("unknown field `{other}`")),
        }
    }
}

/// One paper title.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TitleRecord {
    pub id: String,
    #[serde(rename = "title")]
    pub text: String,
    #[serde(default)]
    pub field: Field,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "label_serde")]
    pub label: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<Token>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<String>>,
}

mod label_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_u8(u8::from(*b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
        let v = Option::<u8>::deserialize(d)?;
        match v {
            None => Ok(None),
            Some(0) => Ok(Some(false)),
            Some(1) => Ok(Some(true)),
            Some(n) => Err(serde::de::Error::custom(format!(
                "label must be 0 or 1, got {n}"
            ))),
        }
    }
}

impl TitleRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        TitleRecord {
            id: id.into(),
            text: text.into(),
            field: Field::Unknown,
            label: None,
            venue: None,
            tokens: None,
            pos: None,
        }
    }

    /// Stored tokens, or a fresh tokenization of the text.
    pub fn tokens(&self) -> std::borrow::Cow<'_, [Token]> {
        match &self.tokens {
            Some(t) => std::borrow::Cow::Borrowed(t.as_slice()),
            None => std::borrow::Cow::Owned(tokenize(&self.text)),
        }
    }

    pub fn ensure_tokens(&mut self) {
        if self.tokens.is_none() {
            self.tokens = Some(tokenize(&self.text));
        }
    }

    /// Tokenizes (if needed) and tags with `model`, replacing any stored tags.
    pub fn tag_with(&mut self, model: &PosTaggerModel) {
        self.ensure_tokens();
        let tokens = self.tokens.as_deref().unwrap_or_default();
        self.pos = Some(pos_tag(model, tokens));
    }

    /// Tags of the word tokens only, aligned with [`words`].
    pub fn word_tags(&self) -> Option<Vec<&str>> {
        let pos = self.pos.as_ref()?;
        let tokens = self.tokens.as_ref()?;
        Some(
            tokens
                .iter()
                .zip(pos)
                .filter(|(t, _)| t.is_word)
                .map(|(_, p)| p.as_str())
                .collect(),
        )
    }

    fn check(&self) -> std::result::Result<(), String> {
        if let (Some(pos), Some(tokens)) = (&self.pos, &self.tokens) {
            if pos.len() != tokens.len() {
                return Err(format!(
                    "record `{}` has {} tags for {} tokens",
                    self.id,
                    pos.len(),
                    tokens.len()
                ));
            }
        }
        if self.pos.is_some() && self.tokens.is_none() {
            return Err(format!("record `{}` has tags but no tokens", self.id));
        }
        Ok(())
    }
}

/// Tokenizes and tags every record in parallel.
pub fn tag_records(records: &mut [TitleRecord], model: &PosTaggerModel) {
    use rayon::prelude::*;
    records.par_iter_mut().for_each(|r| r.tag_with(model));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
    PlainLines,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            "plain_lines" | "plain" | "lines" => Ok(CorpusFormat::PlainLines),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

impl CorpusFormat {
    /// Guess from a file extension; `.txt` and anything unknown read as plain lines.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            Some("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::PlainLines,
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Vec<TitleRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), format, &path.display().to_string())
}

/// Parses a corpus from any reader; `origin` names the source in errors.
pub fn read_corpus<R: Read>(
    reader: R,
    format: CorpusFormat,
    origin: &str,
) -> Result<Vec<TitleRecord>> {
    let records = match format {
        CorpusFormat::Jsonl => read_jsonl(BufReader::new(reader), origin)?,
        CorpusFormat::Tsv => read_tsv(BufReader::new(reader), origin)?,
        CorpusFormat::PlainLines => read_plain(BufReader::new(reader), origin)?,
    };
    Ok(records)
}

fn check_unique(records: &[(usize, TitleRecord)], origin: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (line, r) in records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::parse(
                origin,
                *line,
                format!("duplicate id `{}`", r.id),
            ));
        }
    }
    Ok(())
}

fn lines<R: BufRead>(reader: R, origin: &str) -> impl Iterator<Item = Result<(usize, String)>> {
    let origin = origin.to_string();
    reader.lines().enumerate().map(move |(i, line)| {
        line.map(|l| (i + 1, l))
            .map_err(|e| Error::parse(origin.clone(), i + 1, e.to_string()))
    })
}

fn read_jsonl<R: BufRead>(reader: R, origin: &str) -> Result<Vec<TitleRecord>> {
    let mut out = Vec::new();
    for item in lines(reader, origin) {
        let (line_no, line) = item?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
        let record =
            record_from_json(value, line_no).map_err(|m| Error::parse(origin, line_no, m))?;
        out.push((line_no, record));
    }
    check_unique(&out, origin)?;
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

fn record_from_json(mut value: Value, line_no: usize) -> std::result::Result<TitleRecord, String> {
    let obj = value.as_object_mut().ok_or("expected a JSON object")?;
    if !obj.contains_key("id") {
        obj.insert("id".into(), Value::String(line_no.to_string()));
    } else if let Some(Value::Number(n)) = obj.get("id") {
        let s = n.to_string();
        obj.insert("id".into(), Value::String(s));
    }
    if !obj.contains_key("title") {
        return Err("missing required key `title`".into());
    }
    if let Some(Value::Bool(b)) = obj.get("label") {
        let n = u8::from(*b);
        obj.insert("label".into(), Value::from(n));
    }
    let record: TitleRecord = serde_json::from_value(value).map_err(|e| e.to_string())?;
    record.check()?;
    Ok(record)
}

fn parse_label(s: &str) -> std::result::Result<Option<bool>, String> {
    match s.trim() {
        "" => Ok(None),
        "0" | "false" => Ok(Some(false)),
        "1" | "true" => Ok(Some(true)),
        other => Err(format!("label must be 0 or 1, got `{other}`")),
    }
}

/// Tab-separated with a header row naming the columns (`title` required;
/// `id`, `field`, `label`, `venue` optional).
fn read_tsv<R: BufRead>(reader: R, origin: &str) -> Result<Vec<TitleRecord>> {
    let mut it = lines(reader, origin);
    let header = match it.next() {
        Some(h) => h?.1,
        None => return Ok(Vec::new()),
    };
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    let col = |name: &str| columns.iter().position(|c| *c == name);
    let title_col =
        col("title").ok_or_else(|| Error::parse(origin, 1, "header lacks a `title` column"))?;
    let (id_col, field_col, label_col, venue_col) =
        (col("id"), col("field"), col("label"), col("venue"));

    let mut out = Vec::new();
    for item in it {
        let (line_no, line) = item?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        let get = |c: Option<usize>| c.and_then(|c| cells.get(c)).map(|s| s.trim());
        let text = get(Some(title_col))
            .ok_or_else(|| Error::parse(origin, line_no, "missing title cell"))?;
        let id = match get(id_col) {
            Some(s) if !s.is_empty() => s.to_string(),
            _ => line_no.to_string(),
        };
        let mut record = TitleRecord::new(id, text);
        if let Some(f) = get(field_col).filter(|s| !s.is_empty()) {
            record.field = f.parse().map_err(|m| Error::parse(origin, line_no, m))?;
        }
        if let Some(l) = get(label_col) {
            record.label = parse_label(l).map_err(|m| Error::parse(origin, line_no, m))?;
        }
        record.venue = get(venue_col).filter(|s| !s.is_empty()).map(str::to_string);
        out.push((line_no, record));
    }
    check_unique(&out, origin)?;
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

fn read_plain<R: BufRead>(reader: R, origin: &str) -> Result<Vec<TitleRecord>> {
    let mut out = Vec::new();
    for item in lines(reader, origin) {
        let (line_no, line) = item?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        out.push(TitleRecord::new(line_no.to_string(), text));
    }
    Ok(out)
}

/// Writes records as JSONL, one object per line.
pub fn write_jsonl<W: std::io::Write>(mut w: W, records: &[TitleRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

/// Venue name (lowercased) → field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VenueMap {
    map: HashMap<String, Field>,
}

impl VenueMap {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    /// CSV with header `venue,field`.
    pub fn from_reader<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let venue_col = headers.iter().position(|h| h == "venue");
        let field_col = headers.iter().position(|h| h == "field");
        let (venue_col, field_col) = match (venue_col, field_col) {
            (Some(v), Some(f)) => (v, f),
            _ => {
                return Err(Error::parse(
                    origin,
                    1,
                    "venue map header must be `venue,field`",
                ))
            }
        };
        let mut map = HashMap::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row?;
            let venue = row.get(venue_col).unwrap_or_default().to_lowercase();
            let field_str = row.get(field_col).unwrap_or_default();
            let field: Field = field_str
                .parse()
                .map_err(|m| Error::parse(origin, line, m))?;
            if field == Field::Unknown {
                return Err(Error::parse(
                    origin,
                    line,
                    "venue map fields must be one of the four known fields",
                ));
            }
            if venue.is_empty() {
                return Err(Error::parse(origin, line, "empty venue"));
            }
            match map.insert(venue.clone(), field) {
                Some(prev) if prev != field => {
                    return Err(Error::parse(
                        origin,
                        line,
                        format!("venue `{venue}` mapped to both {prev} and {field}"),
                    ))
                }
                _ => {}
            }
        }
        Ok(VenueMap { map })
    }

    pub fn get(&self, venue: &str) -> Option<Field> {
        self.map.get(&venue.trim().to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Sets the field of every record whose venue appears in `map`; returns how many matched.
pub fn assign_fields(records: &mut [TitleRecord], map: &VenueMap) -> usize {
    let mut matched = 0;
    for r in records.iter_mut() {
        if let Some(field) = r.venue.as_deref().and_then(|v| map.get(v)) {
            r.field = field;
            matched += 1;
        }
    }
    matched
}
