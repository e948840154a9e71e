use std::collections::BTreeMap;
use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::summary::average_ranks;

/// Largest sample handled by exact enumeration.
pub const WILCOXON_EXACT_MAX_N: usize = 12;
pub const SPEARMAN_EXACT_MAX_N: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Calls `f` on every permutation of `items` (Heap's algorithm).
fn for_each_permutation(items: &mut [f64], f: &mut impl FnMut(&[f64])) {
    let n = items.len();
    let mut c = vec![0usize; n];
    f(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            f(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Spearman's ρ (Pearson on average ranks). Two-sided p from the t
/// approximation for n ≥ 10 and by exhaustive permutation below that.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::invalid("spearman needs at least two pairs"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("spearman input is not finite".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson(&rx, &ry)
        .ok_or_else(|| Error::invalid("spearman is undefined for a constant input"))?;
    let n = x.len();
    let p_value = if n <= SPEARMAN_EXACT_MAX_N {
        let mut perm = ry.clone();
        let (mut hits, mut total) = (0u64, 0u64);
        for_each_permutation(&mut perm, &mut |p| {
            let r = pearson(&rx, p).unwrap_or(0.0);
            total += 1;
            if r.abs() >= rho.abs() - 1e-12 {
                hits += 1;
            }
        });
        hits as f64 / total as f64
    } else if rho.abs() >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(e.to_string()))?;
        (2.0 * dist.cdf(-t.abs())).min(1.0)
    };
    Ok(TestResult {
        statistic: rho,
        p_value,
        n_effective: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    /// exact up to [`WILCOXON_EXACT_MAX_N`] pairs, normal approximation above
    Auto,
    Exact,
    Normal,
}

/// Signed ranks of the non-zero differences.
pub struct SignedRanks {
    /// average ranks of |d|, aligned with `positive`
    pub ranks: Vec<f64>,
    pub positive: Vec<bool>,
}

impl SignedRanks {
    pub fn new(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!("{} vs {} values", a.len(), b.len())));
        }
        let d: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(x, y)| x - y)
            .filter(|d| *d != 0.0)
            .collect();
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("wilcoxon input is not finite".into()));
        }
        if d.is_empty() {
            return Err(Error::invalid("all paired differences are zero"));
        }
        let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
        Ok(SignedRanks {
            ranks: average_ranks(&abs),
            positive: d.iter().map(|v| *v > 0.0).collect(),
        })
    }

    pub fn w_plus(&self) -> f64 {
        self.ranks
            .iter()
            .zip(&self.positive)
            .filter(|(_, p)| **p)
            .map(|(r, _)| r)
            .sum()
    }

    pub fn w_minus(&self) -> f64 {
        self.ranks
            .iter()
            .zip(&self.positive)
            .filter(|(_, p)| !**p)
            .map(|(r, _)| r)
            .sum()
    }

    /// min(W+, W−)
    pub fn statistic(&self) -> f64 {
        self.w_plus().min(self.w_minus())
    }

    /// Two-sided exact p: 2·P(T ≤ W) under random signs, by dynamic
    /// programming over doubled (integer) ranks.
    pub fn exact_p(&self) -> f64 {
        let doubled: Vec<usize> = self
            .ranks
            .iter()
            .map(|r| (2.0 * r).round() as usize)
            .collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0f64; max + 1];
        counts[0] = 1.0;
        let mut reach = 0;
        for &r in &doubled {
            for s in (0..=reach).rev() {
                if counts[s] > 0.0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let w2 = (2.0 * self.statistic()).round() as usize;
        let below: f64 = counts[..=w2].iter().sum();
        let total = 2f64.powi(self.ranks.len() as i32);
        (2.0 * below / total).min(1.0)
    }

    /// Normal approximation with continuity correction and tie-corrected variance.
    pub fn normal_p(&self) -> f64 {
        let n = self.ranks.len() as f64;
        let mean = n * (n + 1.0) / 4.0;
        let mut ties: BTreeMap<u64, f64> = BTreeMap::new();
        for r in &self.ranks {
            *ties.entry(r.to_bits()).or_default() += 1.0;
        }
        let tie_term: f64 = ties.values().map(|t| t * t * t - t).sum::<f64>() / 48.0;
        let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term;
        if var <= 0.0 {
            return 1.0;
        }
        let w = self.statistic();
        let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).unwrap_or_else(|_| unreachable!());
        (2.0 * normal.cdf(-z)).min(1.0)
    }
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult> {
    wilcoxon_with(a, b, PMethod::Auto)
}

pub fn wilcoxon_with(a: &[f64], b: &[f64], method: PMethod) -> Result<TestResult> {
    let sr = SignedRanks::new(a, b)?;
    let n = sr.ranks.len();
    let exact = match method {
        PMethod::Auto => n <= WILCOXON_EXACT_MAX_N,
        PMethod::Exact => true,
        PMethod::Normal => false,
    };
    Ok(TestResult {
        statistic: sr.statistic(),
        p_value: if exact { sr.exact_p() } else { sr.normal_p() },
        n_effective: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTest {
    pub feature: String,
    pub result: TestResult,
    /// the feature never differs between paired samples
    pub identical: bool,
}

/// One Wilcoxon test per feature between funny and serious samples.
///
/// Samples are paired by position after a seeded shuffle within each class;
/// the class sizes may differ by at most one and the surplus sample is left
/// out. Sorted by ascending p, ties by feature name.
pub fn feature_report(
    matrix: &FeatureMatrix,
    labels: &[bool],
    seed: u64,
) -> Result<Vec<FeatureTest>> {
    if matrix.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            matrix.nrows(),
            labels.len()
        )));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|i| labels[*i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|i| !labels[*i]).collect();
    if pos.len().abs_diff(neg.len()) > 1 {
        return Err(Error::invalid(format!(
            "feature report needs balanced classes, got {} vs {}",
            pos.len(),
            neg.len()
        )));
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("feature report needs both classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let n = pos.len().min(neg.len());
    let mut out = Vec::with_capacity(matrix.ncols());
    for (j, name) in matrix.names.iter().enumerate() {
        let a: Vec<f64> = pos[..n].iter().map(|&i| matrix.values[[i, j]]).collect();
        let b: Vec<f64> = neg[..n].iter().map(|&i| matrix.values[[i, j]]).collect();
        let (result, identical) = match wilcoxon_signed_rank(&a, &b) {
            Ok(r) => (r, false),
            Err(Error::InvalidInput(_)) => (
                TestResult {
                    statistic: 0.0,
                    p_value: 1.0,
                    n_effective: 0,
                },
                true,
            ),
            Err(e) => return Err(e),
        };
        out.push(FeatureTest {
            feature: name.clone(),
            result,
            identical,
        });
    }
    out.sort_by(|x, y| {
        x.result
            .p_value
            .total_cmp(&y.result.p_value)
            .then_with(|| x.feature.cmp(&y.feature))
    });
    Ok(out)
}

pub fn write_feature_report_csv<W: Write>(w: W, rows: &[FeatureTest]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["feature", "w", "p_value", "n_effective", "identical"])?;
    for r in rows {
        out.write_record([
            r.feature.clone(),
            r.result.statistic.to_string(),
            format!("{:e}", r.result.p_value),
            r.result.n_effective.to_string(),
            r.identical.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<feature report>", e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub models: Vec<String>,
    pub values: Array2<f64>,
}

/// Pairwise Spearman ρ between models scored on the same ids.
pub fn model_correlation_matrix(
    tables: &BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<CorrelationMatrix> {
    if tables.len() < 2 {
        return Err(Error::invalid(
            "correlation matrix needs at least two models",
        ));
    }
    let mut iter = tables.iter();
    let (first_name, first) = iter.next().unwrap_or_else(|| unreachable!());
    for (name, t) in iter {
        if t.len() != first.len() || t.keys().zip(first.keys()).any(|(a, b)| a != b) {
            return Err(Error::invalid(format!(
                "models `{first_name}` and `{name}` are not scored on the same ids"
            )));
        }
    }
    let models: Vec<String> = tables.keys().cloned().collect();
    let cols: Vec<Vec<f64>> = tables
        .values()
        .map(|t| t.values().copied().collect())
        .collect();
    let k = models.len();
    let mut values = Array2::zeros((k, k));
    for i in 0..k {
        values[[i, i]] = 1.0;
        for j in i + 1..k {
            let rho = spearman(&cols[i], &cols[j])?.statistic;
            values[[i, j]] = rho;
            values[[j, i]] = rho;
        }
    }
    Ok(CorrelationMatrix { models, values })
}
