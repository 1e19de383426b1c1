//! Entity ranking and the Hits@k / MR / MRR metrics.
//!
//! Each test triple is ranked twice, once replacing the head and once the
//! tail, against all `N_e` candidates. In the filtered protocol, candidates
//! other than the true entity that form a known triple are removed before
//! ranking. Ties count half: `rank = 1 + #greater + #equal / 2`.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Triple;
use crate::error::{Error, Result};
use crate::model::{CandidateScorer, ModelParams, ModelSpec, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    #[default]
    Filtered,
    Raw,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Protocol::Filtered => "filtered",
            Protocol::Raw => "raw",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankResult {
    pub triple: Triple,
    pub side: Side,
    pub rank: f64,
}

/// Tie-averaged rank of `scores[true_entity]` among all candidates,
/// skipping the entities in `excluded` (the true entity is never skipped).
/// `excluded` must not contain duplicates.
pub fn tie_averaged_rank(scores: &[f64], true_entity: usize, excluded: &[usize]) -> f64 {
    let target = scores[true_entity];
    let mut greater = 0usize;
    let mut equal = 0usize;
    for (e, &s) in scores.iter().enumerate() {
        if e == true_entity {
            continue;
        }
        if s > target {
            greater += 1;
        } else if s == target {
            equal += 1;
        }
    }
    for &e in excluded {
        if e == true_entity {
            continue;
        }
        let s = scores[e];
        if s > target {
            greater -= 1;
        } else if s == target {
            equal -= 1;
        }
    }
    1.0 + greater as f64 + equal as f64 / 2.0
}

/// Known answers per `(h, r)` and per `(r, t)`.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    tails: HashMap<(usize, usize), Vec<usize>>,
    heads: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    pub fn new(known: &HashSet<Triple>) -> Self {
        let mut idx = FilterIndex::default();
        for t in known {
            idx.tails.entry((t.h, t.r)).or_default().push(t.t);
            idx.heads.entry((t.r, t.t)).or_default().push(t.h);
        }
        idx
    }

    /// Entities `e` for which `side.replace(triple, e)` is known.
    pub fn known_answers(&self, triple: &Triple, side: Side) -> &[usize] {
        let hit = match side {
            Side::Tail => self.tails.get(&(triple.h, triple.r)),
            Side::Head => self.heads.get(&(triple.r, triple.t)),
        };
        hit.map_or(&[], Vec::as_slice)
    }
}

/// Ranks one side of `triple`; filtered when `known` is given, raw otherwise.
pub fn rank_entity(
    spec: &ModelSpec,
    params: &ModelParams,
    triple: &Triple,
    side: Side,
    known: Option<&HashSet<Triple>>,
) -> Result<RankResult> {
    let scorer = CandidateScorer::new(spec, params, side);
    let mut scores = vec![0.0; params.num_entities()];
    scorer.score_all(triple, &mut scores)?;
    let excluded: Vec<usize> = match known {
        Some(k) => (0..params.num_entities())
            .filter(|&e| k.contains(&side.replace(triple, e)))
            .collect(),
        None => Vec::new(),
    };
    Ok(RankResult {
        triple: *triple,
        side,
        rank: tie_averaged_rank(&scores, side.entity(triple), &excluded),
    })
}

/// Ranks both sides of every test triple. Output order: all tail ranks in
/// test order, then all head ranks.
pub fn rank_all(
    spec: &ModelSpec,
    params: &ModelParams,
    test: &[Triple],
    known: &HashSet<Triple>,
    protocol: Protocol,
) -> Result<Vec<RankResult>> {
    let filter = match protocol {
        Protocol::Filtered => Some(FilterIndex::new(known)),
        Protocol::Raw => None,
    };
    let ne = params.num_entities();
    let mut out = Vec::with_capacity(2 * test.len());
    for side in [Side::Tail, Side::Head] {
        let scorer = CandidateScorer::new(spec, params, side);
        let ranks: Vec<RankResult> = test
            .par_iter()
            .map_init(
                || vec![0.0; ne],
                |buf, q| {
                    scorer.score_all(q, buf)?;
                    let excluded = filter.as_ref().map_or(&[][..], |f| f.known_answers(q, side));
                    Ok(RankResult {
                        triple: *q,
                        side,
                        rank: tie_averaged_rank(buf, side.entity(q), excluded),
                    })
                },
            )
            .collect::<Result<_>>()?;
        out.extend(ranks);
    }
    Ok(out)
}

/// Metrics over a set of ranks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub mr: f64,
    pub mrr: f64,
    pub n: usize,
}

impl Metrics {
    pub fn from_ranks<I: IntoIterator<Item = f64>>(ranks: I) -> Self {
        let (mut n, mut h1, mut h3, mut h10, mut sum, mut rsum) = (0usize, 0usize, 0usize, 0usize, 0.0, 0.0);
        for r in ranks {
            n += 1;
            h1 += (r <= 1.0) as usize;
            h3 += (r <= 3.0) as usize;
            h10 += (r <= 10.0) as usize;
            sum += r;
            rsum += 1.0 / r;
        }
        let nf = n.max(1) as f64;
        Metrics {
            hits1: h1 as f64 / nf,
            hits3: h3 as f64 / nf,
            hits10: h10 as f64 / nf,
            mr: sum / nf,
            mrr: rsum / nf,
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub mr: f64,
    pub mrr: f64,
    /// Number of rank results (two per test triple).
    pub n_evaluated: usize,
    pub head: Metrics,
    pub tail: Metrics,
    pub protocol: Protocol,
}

impl EvalReport {
    pub fn from_ranks(ranks: &[RankResult], protocol: Protocol) -> Self {
        let all = Metrics::from_ranks(ranks.iter().map(|r| r.rank));
        let of_side = |s: Side| Metrics::from_ranks(ranks.iter().filter(|r| r.side == s).map(|r| r.rank));
        EvalReport {
            hits1: all.hits1,
            hits3: all.hits3,
            hits10: all.hits10,
            mr: all.mr,
            mrr: all.mrr,
            n_evaluated: all.n,
            head: of_side(Side::Head),
            tail: of_side(Side::Tail),
            protocol,
        }
    }

    /// JSON document for this report.
    pub fn document(&self, model: &str, dataset: &str) -> ReportDocument {
        ReportDocument {
            model: model.to_owned(),
            dataset: dataset.to_owned(),
            n_test: self.n_evaluated / 2,
            hits1: self.hits1,
            hits3: self.hits3,
            hits10: self.hits10,
            mr: self.mr,
            mrr: self.mrr,
            side_breakdown: SideBreakdown {
                head: self.head,
                tail: self.tail,
            },
            protocol: self.protocol,
        }
    }

    /// `Hits@10 (%)`, `MR`, `MRR` as a tab-separated row.
    pub fn table_row(&self) -> String {
        format!(
            "{:.2}\t{}\t{:.3}",
            100.0 * self.hits10,
            self.mr.round() as i64,
            self.mrr
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideBreakdown {
    pub head: Metrics,
    pub tail: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub model: String,
    pub dataset: String,
    pub n_test: usize,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub mr: f64,
    pub mrr: f64,
    pub side_breakdown: SideBreakdown,
    pub protocol: Protocol,
}

/// Link-prediction metrics of `params` on `test`.
pub fn evaluate(
    spec: &ModelSpec,
    params: &ModelParams,
    test: &[Triple],
    known: &HashSet<Triple>,
    protocol: Protocol,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Argument("nothing to evaluate".into()));
    }
    let ranks = rank_all(spec, params, test, known, protocol)?;
    Ok(EvalReport::from_ranks(&ranks, protocol))
}

/// One labelled row of a comparison table.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonRow<'a> {
    pub model: &'a str,
    pub dataset: &'a str,
    pub report: &'a EvalReport,
}

/// Tab-separated table, one row per report in the given order.
pub fn compare_reports(rows: &[ComparisonRow<'_>]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Argument("no reports to compare".into()));
    }
    let mut out = String::from("model\tdataset\tHits@10\tMR\tMRR\n");
    for row in rows {
        out.push_str(&format!("{}\t{}\t{}\n", row.model, row.dataset, row.report.table_row()));
    }
    Ok(out)
}
