//! Interaction perplexity, DCG/NDCG, reranking and annotation merging.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::UbmParameters;
use crate::error::{Error, Result};
use crate::grid::Session;
use crate::inference::persist::ModelParams;
use crate::inference::{session_occurrences, ParameterStore};
use crate::path::{DirectionPolicy, Linearization};
use crate::{clamp_prob, PROB_FLOOR};

/// Editorial judgement of one query-image pair.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnnotationRecord {
    pub query_id: String,
    pub image_id: String,
    /// 0 = not relevant, 1 = fairly relevant, 2 = very relevant.
    pub topical: u8,
    /// 0 = bad ... 4 = perfect.
    pub quality: u8,
}

impl AnnotationRecord {
    pub fn new(
        query_id: impl Into<String>,
        image_id: impl Into<String>,
        topical: u8,
        quality: u8,
    ) -> Result<Self> {
        merge_relevance(topical, quality)?;
        Ok(Self {
            query_id: query_id.into(),
            image_id: image_id.into(),
            topical,
            quality,
        })
    }

    pub fn relevance(&self) -> u8 {
        merge_relevance(self.topical, self.quality).expect("validated on construction")
    }
}

/// Five-level relevance: the topical grade when the image is at most fairly
/// relevant, the quality grade when it is very relevant.
pub fn merge_relevance(topical: u8, quality: u8) -> Result<u8> {
    if topical > 2 {
        return Err(Error::LabelOutOfRange(format!("topical relevance {topical} not in 0..=2")));
    }
    if quality > 4 {
        return Err(Error::LabelOutOfRange(format!("image quality {quality} not in 0..=4")));
    }
    Ok(if topical == 2 { quality } else { topical })
}

/// Anything that assigns interaction probabilities to the results of a page.
pub trait InteractionPredictor: Sync {
    /// Page size the predictor works on; sessions are truncated to it first.
    fn truncation(&self) -> usize;

    /// Interaction probability of every result, indexed in reading order.
    fn predict(&self, session: &Session) -> Vec<f64>;
}

/// Predicts the same probability everywhere.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPredictor {
    pub probability: f64,
    pub truncation: usize,
}

impl InteractionPredictor for ConstantPredictor {
    fn truncation(&self) -> usize {
        self.truncation
    }

    fn predict(&self, session: &Session) -> Vec<f64> {
        vec![self.probability; session.layout().total()]
    }
}

/// Grid-model interaction probability of every result given the observed
/// interaction pairs. Each pair whose path passes over a result gives it an
/// independent chance `alpha * gamma`; a result revisited by several pairs is
/// interacted with if any of them hits. Results on no path get the floor.
///
/// The fitted model is a conditional likelihood of each path given its two
/// ends, so this prediction sees the interaction sequence of the session.
pub fn gubm_predict_q(session: &Session, params: &ParameterStore, policy: DirectionPolicy) -> Vec<f64> {
    let lin = Linearization::new(session.layout(), policy);
    let mut miss: Vec<Option<f64>> = vec![None; lin.len()];
    for occ in session_occurrences(session, policy) {
        let p = clamp_prob(params.alpha(occ.query_id, occ.image_id) * params.gamma(occ.i, occ.m, occ.n));
        let slot = &mut miss[lin.row_major(occ.i)];
        *slot = Some(slot.unwrap_or(1.0) * (1.0 - p));
    }
    miss.into_iter()
        .map(|m| m.map_or(PROB_FLOOR, |m| clamp_prob(1.0 - m)))
        .collect()
}

impl InteractionPredictor for ParameterStore {
    fn truncation(&self) -> usize {
        ParameterStore::truncation(self)
    }

    fn predict(&self, session: &Session) -> Vec<f64> {
        gubm_predict_q(session, self, self.policy())
    }
}

impl InteractionPredictor for UbmParameters {
    fn truncation(&self) -> usize {
        UbmParameters::truncation(self)
    }

    fn predict(&self, session: &Session) -> Vec<f64> {
        UbmParameters::predict(self, session)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerplexityReport {
    /// Perplexity at each reading-order rank, starting at rank 0.
    pub per_rank: Vec<f64>,
    /// Number of sessions whose page reaches each rank.
    pub sessions_per_rank: Vec<usize>,
    /// Mean of the per-rank values.
    pub overall: f64,
}

impl PerplexityReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("rank\tsessions\tperplexity\n");
        for (r, (p, n)) in self.per_rank.iter().zip(&self.sessions_per_rank).enumerate() {
            let _ = writeln!(out, "{}\t{n}\t{p:.6}", r + 1);
        }
        let _ = writeln!(out, "overall\t\t{:.6}", self.overall);
        out
    }
}

/// Per-rank interaction perplexity. Ranks follow reading order (left to
/// right, top to bottom) whatever scan order the model was trained with.
pub fn perplexity<P: InteractionPredictor + ?Sized>(
    sessions: &[Session],
    predictor: &P,
) -> Result<PerplexityReport> {
    let per_session = sessions
        .par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let (s, _) = s.truncated(predictor.truncation())?;
            let q = predictor.predict(&s);
            let total = s.layout().total();
            if q.len() != total {
                return Err(Error::Numerical(format!(
                    "predictor returned {} probabilities for {total} results",
                    q.len()
                )));
            }
            let mut labels = vec![false; total];
            for e in s.events() {
                labels[s.layout().row_major(e.position)] = true;
            }
            q.iter()
                .zip(&labels)
                .map(|(&q, &hit)| {
                    let q = clamp_prob(q);
                    if !(q > 0.0 && q < 1.0) {
                        return Err(Error::Numerical(format!("prediction {q} outside (0, 1)")));
                    }
                    Ok(if hit { q.log2() } else { (1.0 - q).log2() })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let ranks = per_session.iter().map(Vec::len).max().unwrap_or(0);
    let mut sums = vec![0.0; ranks];
    let mut counts = vec![0usize; ranks];
    for terms in &per_session {
        for (r, t) in terms.iter().enumerate() {
            sums[r] += t;
            counts[r] += 1;
        }
    }
    let per_rank: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| 2f64.powf(-s / n as f64))
        .collect();
    let overall = if per_rank.is_empty() {
        1.0
    } else {
        per_rank.iter().sum::<f64>() / per_rank.len() as f64
    };
    Ok(PerplexityReport {
        per_rank,
        sessions_per_rank: counts,
        overall,
    })
}

/// Relative perplexity gain of model A over model B.
pub fn perplexity_improvement(a: f64, b: f64) -> f64 {
    (b - a) / (b - 1.0)
}

/// DCG with linear gain and a `log2(i + 1)` discount at 1-based position `i`.
pub fn dcg(scores: &[f64], depth: usize) -> f64 {
    scores
        .iter()
        .take(depth)
        .enumerate()
        .map(|(i, &r)| r / ((i + 2) as f64).log2())
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ndcg {
    pub value: f64,
    /// Set when no item has positive relevance; the value is then 0.
    pub degenerate: bool,
}

pub fn ndcg(scores: &[f64], depth: usize) -> Ndcg {
    let mut ideal = scores.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let best = dcg(&ideal, depth);
    if best <= 0.0 {
        return Ndcg {
            value: 0.0,
            degenerate: true,
        };
    }
    Ndcg {
        value: dcg(scores, depth) / best,
        degenerate: false,
    }
}

/// Source of relevance scores for reranking.
pub trait RelevanceSource {
    fn relevance(&self, query: &str, image: &str) -> f64;
}

impl RelevanceSource for ParameterStore {
    fn relevance(&self, query: &str, image: &str) -> f64 {
        self.alpha(query, image)
    }
}

impl RelevanceSource for UbmParameters {
    fn relevance(&self, query: &str, image: &str) -> f64 {
        self.alpha(query, image)
    }
}

impl RelevanceSource for ModelParams {
    fn relevance(&self, query: &str, image: &str) -> f64 {
        self.alpha(query, image)
    }
}

impl<F: Fn(&str, &str) -> f64> RelevanceSource for F {
    fn relevance(&self, query: &str, image: &str) -> f64 {
        self(query, image)
    }
}

/// Sorts candidates by estimated relevance, highest first. Ties keep their
/// original order.
pub fn rerank<S, R>(query: &str, candidates: &[S], source: &R) -> Vec<String>
where
    S: AsRef<str>,
    R: RelevanceSource + ?Sized,
{
    let mut scored: Vec<(f64, &str)> = candidates
        .iter()
        .map(|c| (source.relevance(query, c.as_ref()), c.as_ref()))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().map(|(_, c)| c.to_owned()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryNdcg {
    pub query_id: String,
    /// NDCG at each requested depth, keyed by depth.
    pub ndcg: BTreeMap<usize, f64>,
    pub degenerate: bool,
}

/// NDCG of a ranked list of images against merged editorial relevance.
/// Unjudged images count as relevance 0.
pub fn query_ndcg(
    query: &str,
    ranking: &[String],
    judgements: &BTreeMap<String, u8>,
    depths: &[usize],
) -> QueryNdcg {
    let scores: Vec<f64> = ranking
        .iter()
        .map(|u| judgements.get(u).copied().unwrap_or(0) as f64)
        .collect();
    let mut degenerate = false;
    let ndcg = depths
        .iter()
        .map(|&d| {
            let n = ndcg(&scores, d);
            degenerate |= n.degenerate;
            (d, n.value)
        })
        .collect();
    QueryNdcg {
        query_id: query.to_owned(),
        ndcg,
        degenerate,
    }
}
