//! Seeded, stratified dataset partitions.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Field, TitleRecord};
use crate::error::{Error, Result};

/// Share of the non-test remainder that goes to the ensemble-train split
/// when the retrieval split is re-partitioned 70/18/12.
pub const ENSEMBLE_SHARE_OF_REMAINDER: f64 = 18.0 / 88.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub names: Vec<String>,
    pub ratios: Vec<f64>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(names: &[&str], ratios: &[f64], seed: u64) -> Self {
        SplitSpec {
            names: names.iter().map(|s| s.to_string()).collect(),
            ratios: ratios.to_vec(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_ratios(&self.ratios)?;
        if self.names.len() != self.ratios.len() {
            return Err(Error::invalid("split names and ratios differ in length"));
        }
        let unique: BTreeSet<&String> = self.names.iter().collect();
        if unique.len() != self.names.len() {
            return Err(Error::invalid("split names must be unique"));
        }
        Ok(())
    }
}

fn validate_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.is_empty() {
        return Err(Error::invalid("no split ratios given"));
    }
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::invalid(
            "split ratios must be finite and non-negative",
        ));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Largest-remainder apportionment of `total` items; ties go to the earlier split.
pub fn largest_remainder(total: usize, ratios: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &s in order.iter().take(total.saturating_sub(assigned)) {
        counts[s] += 1;
    }
    counts
}

/// Assigns each item to a part so that every stratum is split in proportion
/// to `ratios` (each cell within one item of its exact quota) while the part
/// sizes follow the global largest-remainder apportionment.
///
/// Returns the part index per item. Deterministic given `seed`.
pub fn stratified_assignment<K: Ord + Clone>(
    keys: &[K],
    ratios: &[f64],
    seed: u64,
) -> Result<Vec<usize>> {
    validate_ratios(ratios)?;
    let parts = ratios.len();
    let mut cells: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        cells.entry(k.clone()).or_default().push(i);
    }
    let cell_sizes: Vec<usize> = cells.values().map(Vec::len).collect();
    let counts = cell_counts(&cell_sizes, ratios, &largest_remainder(keys.len(), ratios));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![usize::MAX; keys.len()];
    for (members, row) in cells.values().zip(&counts) {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        let mut it = members.into_iter();
        for (part, &n) in row.iter().enumerate().take(parts) {
            for idx in it.by_ref().take(n) {
                assignment[idx] = part;
            }
        }
    }
    debug_assert!(assignment.iter().all(|&a| a < parts));
    Ok(assignment)
}

/// Per-cell part counts: floor of each quota plus at most one extra item,
/// chosen by max-flow so that column totals hit `targets`.
fn cell_counts(cell_sizes: &[usize], ratios: &[f64], targets: &[usize]) -> Vec<Vec<usize>> {
    let quotas: Vec<Vec<f64>> = cell_sizes
        .iter()
        .map(|&n| ratios.iter().map(|r| r * n as f64).collect())
        .collect();
    let floors: Vec<Vec<usize>> = quotas
        .iter()
        .map(|row| row.iter().map(|q| q.floor() as usize).collect())
        .collect();
    let need: Vec<usize> = cell_sizes
        .iter()
        .zip(&floors)
        .map(|(&n, row)| n - row.iter().sum::<usize>())
        .collect();
    let mut demand: Vec<isize> = targets.iter().map(|&t| t as isize).collect();
    for row in &floors {
        for (s, &f) in row.iter().enumerate() {
            demand[s] -= f as isize;
        }
    }

    let attempt = |strict: bool| -> Option<Vec<Vec<bool>>> {
        if demand.iter().any(|&d| d < 0) {
            return None;
        }
        let allowed: Vec<Vec<bool>> = quotas
            .iter()
            .map(|row| {
                row.iter()
                    .zip(ratios)
                    .map(|(q, r)| {
                        if strict {
                            q - q.floor() > 1e-9
                        } else {
                            *r > 0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let demand: Vec<usize> = demand.iter().map(|&d| d as usize).collect();
        unit_flow(&need, &demand, &allowed, &quotas)
    };

    let extra = attempt(true).or_else(|| attempt(false));
    match extra {
        Some(extra) => floors
            .iter()
            .zip(extra)
            .map(|(row, add)| row.iter().zip(add).map(|(&f, a)| f + a as usize).collect())
            .collect(),
        // Unreachable in practice; fall back to independent per-cell rounding.
        None => cell_sizes
            .iter()
            .map(|&n| largest_remainder(n, ratios))
            .collect(),
    }
}

/// Bipartite max-flow with unit edge capacities. Returns the chosen edges
/// when every row need and column demand is met exactly.
fn unit_flow(
    need: &[usize],
    demand: &[usize],
    allowed: &[Vec<bool>],
    quotas: &[Vec<f64>],
) -> Option<Vec<Vec<bool>>> {
    let total: usize = need.iter().sum();
    if total != demand.iter().sum::<usize>() {
        return None;
    }
    let rows = need.len();
    let cols = demand.len();
    let mut used = vec![vec![false; cols]; rows];
    let mut col_load = vec![0usize; cols];
    // preferred column order per row: larger fractional remainder first
    let prefs: Vec<Vec<usize>> = quotas
        .iter()
        .map(|row| {
            let mut order: Vec<usize> = (0..cols).collect();
            order.sort_by(|&a, &b| {
                let fa = row[a] - row[a].floor();
                let fb = row[b] - row[b].floor();
                fb.total_cmp(&fa).then(a.cmp(&b))
            });
            order
        })
        .collect();

    fn augment(
        r: usize,
        seen: &mut [bool],
        used: &mut [Vec<bool>],
        col_load: &mut [usize],
        demand: &[usize],
        allowed: &[Vec<bool>],
        prefs: &[Vec<usize>],
    ) -> bool {
        for &c in &prefs[r] {
            if !allowed[r][c] || used[r][c] || seen[c] {
                continue;
            }
            seen[c] = true;
            if col_load[c] < demand[c] {
                used[r][c] = true;
                col_load[c] += 1;
                return true;
            }
            // column full: try to move one of its units to another column
            for r2 in 0..used.len() {
                if used[r2][c] {
                    used[r2][c] = false;
                    col_load[c] -= 1;
                    if augment(r2, seen, used, col_load, demand, allowed, prefs) {
                        used[r][c] = true;
                        col_load[c] += 1;
                        return true;
                    }
                    used[r2][c] = true;
                    col_load[c] += 1;
                }
            }
        }
        false
    }

    for (r, &n) in need.iter().enumerate().take(rows) {
        for _ in 0..n {
            let mut seen = vec![false; cols];
            if !augment(
                r,
                &mut seen,
                &mut used,
                &mut col_load,
                demand,
                allowed,
                &prefs,
            ) {
                return None;
            }
        }
    }
    Some(used)
}

/// Named parts of a split, in [`SplitSpec`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub parts: Vec<(String, Vec<TitleRecord>)>,
}

impl Splits {
    pub fn get(&self, name: &str) -> Option<&[TitleRecord]> {
        self.parts
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.as_slice())
    }
}

pub(crate) fn cell_key(r: &TitleRecord) -> (Option<bool>, Field) {
    (r.label, r.field)
}

/// Stratified (label, field) partition of `records`.
pub fn split_dataset(records: &[TitleRecord], spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let keys: Vec<_> = records.iter().map(cell_key).collect();
    let assignment = stratified_assignment(&keys, &spec.ratios, spec.seed)?;
    let mut parts: Vec<(String, Vec<TitleRecord>)> =
        spec.names.iter().map(|n| (n.clone(), Vec::new())).collect();
    for (record, part) in records.iter().zip(assignment) {
        parts[part].1.push(record.clone());
    }
    Ok(Splits { parts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IgRetrievalSplit {
    pub train: Vec<TitleRecord>,
    pub ensemble_train: Option<Vec<TitleRecord>>,
    pub test: Vec<TitleRecord>,
}

/// Test set = every winner plus an equal number of sampled negatives;
/// everything else trains. With `ensemble_share`, the remainder is further
/// split (stratified) into train and ensemble-train.
pub fn make_ig_retrieval_split(
    records: &[TitleRecord],
    winner_ids: &BTreeSet<String>,
    seed: u64,
    ensemble_share: Option<f64>,
) -> Result<IgRetrievalSplit> {
    let by_id: BTreeMap<&str, &TitleRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    for id in winner_ids {
        match by_id.get(id.as_str()) {
            None => {
                return Err(Error::invalid(format!(
                    "winner id `{id}` is not in the corpus"
                )))
            }
            Some(r) if r.label != Some(true) => {
                return Err(Error::invalid(format!(
                    "winner id `{id}` is not labeled funny"
                )))
            }
            Some(_) => {}
        }
    }
    let mut negatives: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.label == Some(false))
        .map(|(i, _)| i)
        .collect();
    if negatives.len() < winner_ids.len() {
        return Err(Error::invalid(format!(
            "need {} negatives for the retrieval test set, corpus has {}",
            winner_ids.len(),
            negatives.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    negatives.shuffle(&mut rng);
    let sampled: BTreeSet<usize> = negatives.into_iter().take(winner_ids.len()).collect();

    let mut test = Vec::new();
    let mut train = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if winner_ids.contains(&r.id) || sampled.contains(&i) {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    let has = |v: bool| train.iter().any(|r| r.label == Some(v));
    if !has(true) || !has(false) {
        return Err(Error::invalid(
            "retrieval split leaves the training set without both classes",
        ));
    }

    let ensemble_train = match ensemble_share {
        None => None,
        Some(share) => {
            let spec = SplitSpec::new(
                &["train", "ensemble_train"],
                &[1.0 - share, share],
                seed ^ 0x9E37,
            );
            let parts = split_dataset(&train, &spec)?;
            let mut it = parts.parts.into_iter().map(|(_, v)| v);
            train = it.next().unwrap_or_default();
            it.next()
        }
    };
    Ok(IgRetrievalSplit {
        train,
        ensemble_train,
        test,
    })
}
