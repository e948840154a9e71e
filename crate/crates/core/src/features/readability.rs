//! Closed-form readability indices and per-word combined statistics.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use crate::corpus::Token;
use crate::error::{Error, Result};
use crate::summary::SummaryStats;

const BUILTIN_FAMILIAR: &str = include_str!("../../data/familiar_words.txt");

/// The bundled Dale-Chall familiar-word list.
pub fn builtin_familiar_words() -> &'static BTreeSet<String> {
    static LIST: OnceLock<BTreeSet<String>> = OnceLock::new();
    LIST.get_or_init(|| {
        BUILTIN_FAMILIAR
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_lowercase)
            .collect()
    })
}

/// A readability score; `empty` is set (and the value is 0) for a title without words.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readability {
    pub value: f64,
    pub empty: bool,
}

/// 1 + the number of sentence-final punctuation tokens.
pub fn sentence_count(tokens: &[Token]) -> usize {
    1 + tokens
        .iter()
        .filter(|t| !t.is_word && matches!(t.surface.as_str(), "." | "!" | "?" | "…"))
        .count()
}

/// Automated readability index: 4.71·chars/words + 0.5·words/sentences − 21.43.
pub fn ari<S: AsRef<str>>(words: &[S], sentences: usize) -> Readability {
    if words.is_empty() {
        return Readability {
            value: 0.0,
            empty: true,
        };
    }
    let w = words.len() as f64;
    let chars: usize = words.iter().map(|x| x.as_ref().chars().count()).sum();
    let s = sentences.max(1) as f64;
    Readability {
        value: 4.71 * (chars as f64 / w) + 0.5 * (w / s) - 21.43,
        empty: false,
    }
}

/// Dale-Chall: 0.1579·(% unfamiliar) + 0.0496·words/sentences, plus 3.6365 above 5 % unfamiliar.
pub fn dale_chall<S: AsRef<str>>(
    words: &[S],
    sentences: usize,
    familiar: &BTreeSet<String>,
) -> Readability {
    if words.is_empty() {
        return Readability {
            value: 0.0,
            empty: true,
        };
    }
    let w = words.len() as f64;
    let unfamiliar = words
        .iter()
        .filter(|x| !familiar.contains(x.as_ref()))
        .count() as f64;
    let pct = 100.0 * unfamiliar / w;
    let mut value = 0.1579 * pct + 0.0496 * (w / sentences.max(1) as f64);
    if pct > 5.0 {
        value += 3.6365;
    }
    Readability {
        value,
        empty: false,
    }
}

fn combined(a: &[f64], b: &[f64], op: impl Fn(f64, f64) -> f64) -> Result<SummaryStats> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "{} surprisals but {} per-word values",
            a.len(),
            b.len()
        )));
    }
    let values: Vec<f64> = a.iter().zip(b).map(|(x, y)| op(*x, *y)).collect();
    Ok(SummaryStats::from_values(&values))
}

/// Stats of per-word surprisal / denominator. Denominators must be positive.
pub fn combined_ratio_stats(surprisals: &[f64], denominators: &[f64]) -> Result<SummaryStats> {
    if let Some(d) = denominators.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::Numeric(format!(
            "ratio denominator {d} is not positive"
        )));
    }
    combined(surprisals, denominators, |s, d| s / d)
}

/// Stats of per-word surprisal × value.
pub fn combined_product_stats(surprisals: &[f64], values: &[f64]) -> Result<SummaryStats> {
    combined(surprisals, values, |s, v| s * v)
}
