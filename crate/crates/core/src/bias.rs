//! Inverse-relation detection and trivial test triple counting.
//!
//! Relations `r` and `r'` are treated as inverses when, over the distinct
//! train triples, at least `threshold` of the `r` triples `(h, r, t)` have a
//! companion `(t, r', h)` and at least `threshold` of the `r'` triples have a
//! companion under `r`. A test triple `(h, r, t)` is trivial when some
//! inverse partner `r'` of `r` has `(t, r', h)` in train.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;
use serde_json::value::RawValue;

use crate::data::{Triple, Vocabulary};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversePair {
    pub r: usize,
    pub r_prime: usize,
    /// Fraction of `r` triples with an inverse under `r_prime`.
    pub forward_coverage: f64,
    /// Fraction of `r_prime` triples with an inverse under `r`.
    pub backward_coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub inverse_pairs: Vec<InversePair>,
    pub trivial_test_count: usize,
    pub trivial_test_percentage: f64,
    pub test_size: usize,
}

/// Returns, for every ordered relation pair `(r, r')` with a nonzero count,
/// the fraction of distinct `r` triples whose inverse exists under `r'`.
/// Also returns the number of distinct triples per relation.
fn coverage_table(train: &[Triple]) -> (BTreeMap<(usize, usize), f64>, HashMap<usize, usize>) {
    let distinct: HashSet<Triple> = train.iter().copied().collect();
    let mut rels_by_pair: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut per_relation: HashMap<usize, usize> = HashMap::new();
    for t in &distinct {
        rels_by_pair.entry((t.h, t.t)).or_default().push(t.r);
        *per_relation.entry(t.r).or_default() += 1;
    }
    let mut hits: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in &distinct {
        if let Some(rels) = rels_by_pair.get(&(t.t, t.h)) {
            for &rp in rels {
                *hits.entry((t.r, rp)).or_default() += 1;
            }
        }
    }
    let cov = hits
        .into_iter()
        .map(|((r, rp), n)| ((r, rp), n as f64 / per_relation[&r] as f64))
        .collect();
    (cov, per_relation)
}

/// Finds all inverse relation pairs in `train`. Each unordered pair is
/// emitted once with `r <= r_prime`; `r == r_prime` marks a symmetric
/// relation. Output is sorted by `(r, r_prime)`.
pub fn detect_inverse_pairs(train: &[Triple], threshold: f64) -> Result<Vec<InversePair>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Argument(format!("threshold {threshold} outside (0, 1]")));
    }
    let (cov, _) = coverage_table(train);
    let mut pairs = Vec::new();
    for (&(r, rp), &fwd) in &cov {
        if r > rp {
            continue;
        }
        let bwd = if r == rp { fwd } else { cov.get(&(rp, r)).copied().unwrap_or(0.0) };
        if fwd >= threshold && bwd >= threshold {
            pairs.push(InversePair {
                r,
                r_prime: rp,
                forward_coverage: fwd,
                backward_coverage: bwd,
            });
        }
    }
    Ok(pairs)
}

/// Counts test triples whose inverse under a detected partner relation is
/// already in train. Each test triple counts at most once.
pub fn count_trivial_test_triples(train: &[Triple], test: &[Triple], pairs: &[InversePair]) -> BiasReport {
    let mut partners: HashMap<usize, Vec<usize>> = HashMap::new();
    for p in pairs {
        partners.entry(p.r).or_default().push(p.r_prime);
        if p.r != p.r_prime {
            partners.entry(p.r_prime).or_default().push(p.r);
        }
    }
    let train_set: HashSet<Triple> = train.iter().copied().collect();
    let trivial = test
        .iter()
        .filter(|q| {
            partners.get(&q.r).is_some_and(|rs| {
                rs.iter()
                    .any(|&rp| train_set.contains(&Triple::new(q.t, rp, q.h)))
            })
        })
        .count();
    let pct = if test.is_empty() {
        0.0
    } else {
        100.0 * trivial as f64 / test.len() as f64
    };
    BiasReport {
        inverse_pairs: pairs.to_vec(),
        trivial_test_count: trivial,
        trivial_test_percentage: pct,
        test_size: test.len(),
    }
}

/// Detection followed by counting.
pub fn audit(train: &[Triple], test: &[Triple], threshold: f64) -> Result<BiasReport> {
    let pairs = detect_inverse_pairs(train, threshold)?;
    Ok(count_trivial_test_triples(train, test, &pairs))
}

#[derive(Serialize)]
struct PairDoc<'a> {
    r: &'a str,
    r_prime: &'a str,
    fwd: f64,
    bwd: f64,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    pairs: Vec<PairDoc<'a>>,
    trivial_count: usize,
    test_size: usize,
    trivial_pct: Box<RawValue>,
}

fn relation_label(vocab: Option<&Vocabulary>, r: usize, buf: &mut Vec<String>) -> usize {
    let name = vocab
        .and_then(|v| v.relation_name(r))
        .map(str::to_owned)
        .unwrap_or_else(|| r.to_string());
    buf.push(name);
    buf.len() - 1
}

impl BiasReport {
    /// Percentage with two decimals, e.g. `72.12`.
    pub fn percentage_text(&self) -> String {
        format!("{:.2}", self.trivial_test_percentage)
    }

    /// JSON document; pairs sorted by `(r, r_prime)`, relation names taken
    /// from `vocab` when given, percentage written with two decimals.
    pub fn to_json(&self, vocab: Option<&Vocabulary>) -> String {
        let mut sorted = self.inverse_pairs.clone();
        sorted.sort_by_key(|p| (p.r, p.r_prime));
        let mut names = Vec::new();
        let idx: Vec<(usize, usize)> = sorted
            .iter()
            .map(|p| {
                (
                    relation_label(vocab, p.r, &mut names),
                    relation_label(vocab, p.r_prime, &mut names),
                )
            })
            .collect();
        let doc = ReportDoc {
            pairs: sorted
                .iter()
                .zip(&idx)
                .map(|(p, &(a, b))| PairDoc {
                    r: &names[a],
                    r_prime: &names[b],
                    fwd: p.forward_coverage,
                    bwd: p.backward_coverage,
                })
                .collect(),
            trivial_count: self.trivial_test_count,
            test_size: self.test_size,
            trivial_pct: RawValue::from_string(self.percentage_text()).expect("formatted float is valid JSON"),
        };
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }

    /// Plain-text summary.
    pub fn summary(&self, vocab: Option<&Vocabulary>) -> String {
        let mut sorted = self.inverse_pairs.clone();
        sorted.sort_by_key(|p| (p.r, p.r_prime));
        let mut out = format!(
            "inverse pairs: {}\ntrivial test triples: {}/{} ({}%)\n",
            sorted.len(),
            self.trivial_test_count,
            self.test_size,
            self.percentage_text()
        );
        let mut names = Vec::new();
        for p in &sorted {
            let a = relation_label(vocab, p.r, &mut names);
            let b = relation_label(vocab, p.r_prime, &mut names);
            out.push_str(&format!(
                "  {}\t{}\tfwd={:.4}\tbwd={:.4}\n",
                names[a], names[b], p.forward_coverage, p.backward_coverage
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triples(v: &[(usize, usize, usize)]) -> Vec<Triple> {
        v.iter().map(|&(h, r, t)| Triple::new(h, r, t)).collect()
    }

    /// Direct O(|train|^2) search used as an oracle.
    fn brute_force_pairs(train: &[Triple], threshold: f64) -> Vec<(usize, usize, f64, f64)> {
        let mut distinct = train.to_vec();
        distinct.sort();
        distinct.dedup();
        let rels: Vec<usize> = {
            let mut r: Vec<usize> = distinct.iter().map(|t| t.r).collect();
            r.sort();
            r.dedup();
            r
        };
        let coverage = |r: usize, rp: usize| {
            let of_r: Vec<&Triple> = distinct.iter().filter(|t| t.r == r).collect();
            let covered = of_r
                .iter()
                .filter(|a| distinct.iter().any(|b| b.r == rp && b.h == a.t && b.t == a.h))
                .count();
            covered as f64 / of_r.len() as f64
        };
        let mut out = Vec::new();
        for &r in &rels {
            for &rp in rels.iter().filter(|&&x| x >= r) {
                let (f, b) = (coverage(r, rp), coverage(rp, r));
                if f >= threshold && b >= threshold {
                    out.push((r, rp, f, b));
                }
            }
        }
        out
    }

    #[test]
    fn detects_exact_inverse() {
        // a=0 b=1 c=2 d=3, r=0 s=1
        let train = triples(&[(0, 0, 1), (1, 1, 0), (2, 0, 3), (3, 1, 2)]);
        let pairs = detect_inverse_pairs(&train, 0.8).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].r, pairs[0].r_prime), (0, 1));
        assert_eq!((pairs[0].forward_coverage, pairs[0].backward_coverage), (1.0, 1.0));
    }

    #[test]
    fn no_companion_relation() {
        let train = triples(&[(0, 0, 1), (2, 0, 3)]);
        assert!(detect_inverse_pairs(&train, 0.8).unwrap().is_empty());
    }

    #[test]
    fn symmetric_relation_pairs_with_itself() {
        let train = triples(&[(0, 0, 1), (1, 0, 0)]);
        let pairs = detect_inverse_pairs(&train, 0.8).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].r, pairs[0].r_prime), (0, 0));
    }

    #[test]
    fn threshold_is_validated() {
        assert!(detect_inverse_pairs(&[], 0.0).is_err());
        assert!(detect_inverse_pairs(&[], 1.5).is_err());
        assert!(detect_inverse_pairs(&[], f64::NAN).is_err());
        assert!(detect_inverse_pairs(&[], 1.0).is_ok());
    }

    #[test]
    fn one_directional_coverage_is_not_enough() {
        // every r triple has an s inverse, but s has many extra triples
        let mut v = vec![(0, 0, 1), (1, 1, 0)];
        for i in 2..10 {
            v.push((i, 1, i + 10));
        }
        let pairs = detect_inverse_pairs(&triples(&v), 0.8).unwrap();
        assert!(pairs.is_empty());
    }

    #[test]
    fn single_trivial_triple() {
        let train = triples(&[(0, 0, 1)]);
        let test = triples(&[(1, 1, 0)]);
        let pairs = [InversePair {
            r: 0,
            r_prime: 1,
            forward_coverage: 1.0,
            backward_coverage: 1.0,
        }];
        let rep = count_trivial_test_triples(&train, &test, &pairs);
        assert_eq!(rep.trivial_test_count, 1);
        assert_eq!(rep.trivial_test_percentage, 100.0);
    }

    #[test]
    fn empty_test_split() {
        let rep = count_trivial_test_triples(&triples(&[(0, 0, 1)]), &[], &[]);
        assert_eq!(rep.test_size, 0);
        assert_eq!(rep.trivial_test_percentage, 0.0);
    }

    #[test]
    fn renders_empty_report() {
        let rep = count_trivial_test_triples(&[], &[], &[]);
        let json = rep.to_json(None);
        assert!(json.contains("\"pairs\": []"));
        assert!(json.contains("\"trivial_pct\": 0.00"));
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["trivial_pct"].as_f64(), Some(0.0));
    }

    #[test]
    fn renders_single_pair() {
        let train = triples(&[(0, 0, 1), (1, 1, 0)]);
        let test = triples(&[(2, 0, 3)]);
        let rep = audit(&train, &test, 0.8).unwrap();
        let v: serde_json::Value = serde_json::from_str(&rep.to_json(None)).unwrap();
        let pairs = v["pairs"].as_array().unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0]["fwd"].as_f64(), Some(1.0));
        assert_eq!(pairs[0]["bwd"].as_f64(), Some(1.0));
        assert_eq!(pairs[0]["r"], "0");
        assert_eq!(pairs[0]["r_prime"], "1");
    }

    #[test]
    fn percentage_has_two_decimals() {
        let rep = BiasReport {
            inverse_pairs: vec![],
            trivial_test_count: 3606,
            trivial_test_percentage: 100.0 * 3606.0 / 5000.0,
            test_size: 5000,
        };
        assert!(rep.to_json(None).contains("\"trivial_pct\": 72.12"));
        assert!(rep.summary(None).contains("(72.12%)"));
    }

    fn arb_kg() -> impl Strategy<Value = Vec<Triple>> {
        prop::collection::vec((0usize..12, 0usize..4, 0usize..12), 0..120).prop_map(|v| {
            let mut out = triples(&v);
            // seed some inverse structure so pairs actually appear
            let extra: Vec<Triple> = out
                .iter()
                .filter(|t| t.r == 0)
                .map(|t| Triple::new(t.t, 1, t.h))
                .collect();
            out.extend(extra);
            out
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(train in arb_kg(), threshold in 0.05f64..=1.0) {
            let got: Vec<_> = detect_inverse_pairs(&train, threshold).unwrap()
                .into_iter()
                .map(|p| (p.r, p.r_prime, p.forward_coverage, p.backward_coverage))
                .collect();
            let want = brute_force_pairs(&train, threshold);
            prop_assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                prop_assert_eq!((g.0, g.1), (w.0, w.1));
                prop_assert!((g.2 - w.2).abs() < 1e-12 && (g.3 - w.3).abs() < 1e-12);
            }
        }

        #[test]
        fn monotone_in_threshold(train in arb_kg(), test in arb_kg(), a in 0.05f64..=1.0, b in 0.05f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let r_lo = audit(&train, &test, lo).unwrap();
            let r_hi = audit(&train, &test, hi).unwrap();
            prop_assert!(r_hi.inverse_pairs.len() <= r_lo.inverse_pairs.len());
            prop_assert!(r_hi.trivial_test_count <= r_lo.trivial_test_count);
        }

        #[test]
        fn order_independent(train in arb_kg().prop_shuffle(), test in arb_kg()) {
            let mut sorted = train.clone();
            sorted.sort();
            let a = audit(&train, &test, 0.8).unwrap();
            let b = audit(&sorted, &test, 0.8).unwrap();
            prop_assert_eq!(a.to_json(None), b.to_json(None));
        }
    }
}
