use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ndcg {
    pub value: f64,
    /// no relevant item at all; value is 0
    pub all_zero: bool,
}

/// NDCG@k with binary gains and a log2(i + 1) discount (ranks from 1).
pub fn ndcg_at_k(relevance: &[bool], k: usize) -> Result<Ndcg> {
    if k == 0 {
        return Err(Error::invalid("ndcg cutoff k must be at least 1"));
    }
    let cut = k.min(relevance.len());
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = relevance[..cut]
        .iter()
        .enumerate()
        .filter(|(_, r)| **r)
        .map(|(i, _)| discount(i))
        .sum();
    let relevant = relevance.iter().filter(|r| **r).count();
    let idcg: f64 = (0..relevant.min(cut)).map(discount).sum();
    if idcg == 0.0 {
        return Ok(Ndcg {
            value: 0.0,
            all_zero: true,
        });
    }
    Ok(Ndcg {
        value: dcg / idcg,
        all_zero: false,
    })
}

/// Running precision at k = step, 2·step, … and at the full length.
pub fn precision_at_k_curve(relevance: &[bool], step: usize) -> Result<Vec<(usize, f64)>> {
    if step == 0 {
        return Err(Error::invalid("precision@k step must be at least 1"));
    }
    if relevance.is_empty() {
        return Err(Error::invalid("precision@k of an empty ranking"));
    }
    let mut hits = 0usize;
    let mut out = Vec::new();
    for (i, r) in relevance.iter().enumerate() {
        hits += usize::from(*r);
        let k = i + 1;
        if k % step == 0 || k == relevance.len() {
            out.push((k, hits as f64 / k as f64));
        }
    }
    Ok(out)
}

/// Ids with scores, highest score first; equal scores in ascending id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    entries: Vec<(String, f64)>,
}

impl RankedList {
    pub fn from_scores(items: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut entries: Vec<(String, f64)> = items.into_iter().collect();
        let mut seen = HashSet::new();
        for (id, s) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
            if !s.is_finite() {
                return Err(Error::Numeric(format!("score of `{id}` is {s}")));
            }
        }
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(RankedList { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn top(&self, k: usize) -> RankedList {
        RankedList {
            entries: self.entries[..k.min(self.entries.len())].to_vec(),
        }
    }

    /// Relevance in rank order; ids missing from `relevant` count as 0.
    pub fn relevance(&self, is_relevant: impl Fn(&str) -> bool) -> Vec<bool> {
        self.ids().map(is_relevant).collect()
    }

    /// Tab-separated with header `id score rank`, ranks from 1.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        let err = |e| Error::io("<ranking>", e);
        writeln!(w, "id\tscore\trank").map_err(err)?;
        for (i, (id, s)) in self.entries.iter().enumerate() {
            writeln!(w, "{id}\t{s}\t{}", i + 1).map_err(err)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R, origin: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let id = cols.next().unwrap_or("").to_string();
            let score = cols
                .next()
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::parse(origin, i + 1, "expected `id<TAB>score<TAB>rank`"))?;
            items.push((id, score));
        }
        Self::from_scores(items)
    }
}

/// |top_k(A) ∩ top_k(B)| / k
pub fn top_k_overlap(a: &RankedList, b: &RankedList, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("overlap cutoff k must be at least 1"));
    }
    if k > a.len().min(b.len()) {
        return Err(Error::invalid(format!(
            "overlap cutoff {k} exceeds list lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let ta: BTreeSet<&str> = a.ids().take(k).collect();
    let shared = b.ids().take(k).filter(|id| ta.contains(id)).count();
    Ok(shared as f64 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[true, true, false], 3).unwrap().value, 1.0);
        let v = ndcg_at_k(&[false, true, true], 3).unwrap().value;
        let expect = (1.0 / 3f64.log2() + 0.5) / (1.0 + 1.0 / 3f64.log2());
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 0.6934).abs() < 1e-4);
        let z = ndcg_at_k(&[false, false], 2).unwrap();
        assert!(z.all_zero && z.value == 0.0);
        assert!(ndcg_at_k(&[true], 0).is_err());
        // cutoff beyond the list
        assert_eq!(ndcg_at_k(&[true], 10).unwrap().value, 1.0);
    }

    #[test]
    fn precision_curve_examples() {
        let all = vec![true; 25];
        assert!(precision_at_k_curve(&all, 10)
            .unwrap()
            .iter()
            .all(|(_, p)| *p == 1.0));
        let alt: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        assert_eq!(precision_at_k_curve(&alt, 10).unwrap()[0], (10, 0.5));
        assert_eq!(
            precision_at_k_curve(&all, 10)
                .unwrap()
                .iter()
                .map(|p| p.0)
                .collect::<Vec<_>>(),
            [10, 20, 25]
        );
        assert!(precision_at_k_curve(&[], 10).is_err());
        assert!(precision_at_k_curve(&all, 0).is_err());
    }

    #[test]
    fn ranked_list_order_and_tsv() {
        let l = RankedList::from_scores([("b".into(), 0.5), ("a".into(), 0.5), ("c".into(), 0.9)])
            .unwrap();
        assert_eq!(l.ids().collect::<Vec<_>>(), ["c", "a", "b"]);
        let mut buf = Vec::new();
        l.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "c\t0.9\t1");
        assert_eq!(RankedList::read_tsv(text.as_bytes(), "r").unwrap(), l);
        assert!(RankedList::from_scores([("a".into(), 1.0), ("a".into(), 2.0)]).is_err());
        assert!(RankedList::from_scores([("a".into(), f64::NAN)]).is_err());
        assert_eq!(l.top(2).len(), 2);
    }

    #[test]
    fn overlap_against_set_oracle() {
        let ids: Vec<String> = (0..300).map(|i| format!("t{i:03}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut pa = ids.clone();
            pa.shuffle(&mut rng);
            let mut pb = ids.clone();
            pb.shuffle(&mut rng);
            let mk = |p: &[String]| {
                RankedList::from_scores(
                    p.iter()
                        .enumerate()
                        .map(|(i, id)| (id.clone(), -(i as f64))),
                )
                .unwrap()
            };
            let (a, b) = (mk(&pa), mk(&pb));
            let sa: BTreeSet<&String> = pa[..50].iter().collect();
            let sb: BTreeSet<&String> = pb[..50].iter().collect();
            let expect = sa.intersection(&sb).count() as f64 / 50.0;
            assert_eq!(top_k_overlap(&a, &b, 50).unwrap(), expect);
        }
        let a = RankedList::from_scores([("x".into(), 1.0), ("y".into(), 0.0)]).unwrap();
        let b = RankedList::from_scores([("z".into(), 1.0), ("w".into(), 0.0)]).unwrap();
        assert_eq!(top_k_overlap(&a, &a, 2).unwrap(), 1.0);
        assert_eq!(top_k_overlap(&a, &b, 2).unwrap(), 0.0);
        assert!(top_k_overlap(&a, &b, 0).is_err());
        assert!(top_k_overlap(&a, &b, 3).is_err());
    }

    proptest! {
        #[test]
        fn ndcg_bounded_and_one_iff_sorted(rel in prop::collection::vec(any::<bool>(), 1..12), k in 1usize..14) {
            let v = ndcg_at_k(&rel, k).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v.value));
            let cut = k.min(rel.len());
            let relevant = rel.iter().filter(|r| **r).count();
            let ideal_prefix = rel[..relevant.min(cut)].iter().all(|r| *r);
            if !v.all_zero {
                prop_assert_eq!((v.value - 1.0).abs() < 1e-12, ideal_prefix);
            }
        }

        #[test]
        fn precision_counts_are_integers(rel in prop::collection::vec(any::<bool>(), 1..60), step in 1usize..15) {
            for (k, p) in precision_at_k_curve(&rel, step).unwrap() {
                let hits = p * k as f64;
                prop_assert!((hits - hits.round()).abs() < 1e-9);
                prop_assert!(hits >= 0.0 && hits <= k as f64 + 1e-9);
                prop_assert_eq!(hits.round() as usize, rel[..k].iter().filter(|r| **r).count());
            }
        }
    }
}
