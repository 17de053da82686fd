//! User-defined topics built on a trained topic model.
//!
//! A topic starts from seed words. The user accepts or rejects suggested
//! words; the documents most strongly matching the accepted words form a
//! centroid in topic space, and every document is scored by its cosine
//! distance to that centroid. Judging a few documents near the decision
//! boundary sets an additive correction so relevant documents land below 0.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::etl::{PhraseTable, Tier, TokenId, Vocabulary};
use crate::keyword::{parse_query, rank_order, KeywordIndex};
use crate::lda::{TermSpace, TopicDistribution, TopicModel};
use crate::text::StopWords;

pub const DEFAULT_CLEAR_HITS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum TopicError {
    #[error("{word:?} is not in the topic vocabulary; nearest spellings: {}", suggestions.join(", "))]
    UnknownWord { word: String, suggestions: Vec<String> },
    #[error("topic has no accepted words")]
    NoAcceptedWords,
    #[error("clear-hit count must be at least 1")]
    ZeroClearHits,
    #[error("no document contains enough accepted words; accept more words")]
    NoClearHits,
    #[error("topic has no centroid yet")]
    NoCentroid,
    #[error("calibration needs at least one relevant and one irrelevant judgment")]
    OneClassJudgments,
    #[error("judged-relevant documents are not closer than judged-irrelevant ones (mean {mean_relevant:.4} vs {mean_irrelevant:.4})")]
    InvertedJudgments { mean_relevant: f64, mean_irrelevant: f64 },
    #[error("topic is not calibrated")]
    NotCalibrated,
    #[error("unknown document {0:?}")]
    UnknownDoc(String),
    #[error("topic name is empty")]
    EmptyName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicStatus {
    Draft,
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryJudgment {
    pub doc_id: String,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTopic {
    pub topic_id: String,
    pub name: String,
    pub seed_words: Vec<String>,
    pub accepted_words: Vec<String>,
    pub rejected_words: Vec<String>,
    #[serde(default)]
    pub clear_hits: Vec<String>,
    pub centroid: Option<TopicDistribution>,
    pub correction: f64,
    pub status: TopicStatus,
    #[serde(default)]
    pub boundary_judgments: Vec<BoundaryJudgment>,
    /// Corpus minimum and maximum of the corrected distance.
    #[serde(default)]
    pub extremes: Option<(f64, f64)>,
}

impl UserTopic {
    /// A draft topic whose seed words start out accepted.
    pub fn new(topic_id: &str, name: &str, seed_words: &[String]) -> Result<Self, TopicError> {
        if name.trim().is_empty() {
            return Err(TopicError::EmptyName);
        }
        let mut seeds: Vec<String> = Vec::new();
        for s in seed_words {
            if !seeds.contains(s) {
                seeds.push(s.clone());
            }
        }
        Ok(UserTopic {
            topic_id: topic_id.to_string(),
            name: name.trim().to_string(),
            accepted_words: seeds.clone(),
            seed_words: seeds,
            rejected_words: Vec::new(),
            clear_hits: Vec::new(),
            centroid: None,
            correction: 0.0,
            status: TopicStatus::Draft,
            boundary_judgments: Vec::new(),
            extremes: None,
        })
    }

    /// Records a word judgment, moving the word between the accepted and
    /// rejected lists. Any calibration is dropped.
    pub fn judge_word(&mut self, word: &str, accept: bool) {
        self.accepted_words.retain(|w| w != word);
        self.rejected_words.retain(|w| w != word);
        if accept {
            self.accepted_words.push(word.to_string());
        } else {
            self.rejected_words.push(word.to_string());
        }
        self.reset_calibration();
    }

    fn reset_calibration(&mut self) {
        self.status = TopicStatus::Draft;
        self.correction = 0.0;
        self.extremes = None;
    }

    pub fn is_judged(&self, word: &str) -> bool {
        self.accepted_words.iter().chain(&self.rejected_words).any(|w| w == word)
    }
}

/// Everything topic definition reads from the index.
#[derive(Clone, Copy)]
pub struct TopicContext<'a> {
    pub model: &'a TopicModel,
    pub space: TermSpace,
    pub vocab: &'a Vocabulary,
    pub phrases: &'a PhraseTable,
    pub index: &'a KeywordIndex,
    pub stop_words: &'a StopWords,
}

impl TopicContext<'_> {
    /// Resolves user text to a single core word or phrase.
    pub fn resolve_term(&self, text: &str) -> Result<TokenId, TopicError> {
        let q = parse_query(text, self.vocab, self.phrases, self.stop_words);
        match q.terms.as_slice() {
            [term] => match term.id.filter(|&id| self.space.dense(id).is_some()) {
                Some(id) => Ok(id),
                None => Err(self.unknown(&term.text)),
            },
            _ => Err(self.unknown(text.trim())),
        }
    }

    fn unknown(&self, word: &str) -> TopicError {
        TopicError::UnknownWord {
            word: word.to_string(),
            suggestions: self.vocab.nearest_spellings(word, Tier::Core, 5),
        }
    }

    pub fn term_text(&self, id: TokenId) -> String {
        self.phrases
            .text(id, self.vocab)
            .or_else(|| self.vocab.word(id).map(str::to_string))
            .unwrap_or_default()
    }

    fn doc_index(&self, doc_id: &str) -> Result<u32, TopicError> {
        self.index
            .doc_index(doc_id)
            .ok_or_else(|| TopicError::UnknownDoc(doc_id.to_string()))
    }
}

/// `1 - cos(a, b)`, clamped at 0. A zero vector is at distance 1 from
/// everything.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0)
}

/// Arithmetic mean of distributions, renormalized.
pub fn mean_distribution(dists: &[TopicDistribution]) -> Option<TopicDistribution> {
    let first = dists.first()?;
    let mut acc = vec![0.0; first.len()];
    for d in dists {
        for (a, x) in acc.iter_mut().zip(d.as_slice()) {
            *a += x;
        }
    }
    let sum: f64 = acc.iter().sum();
    acc.iter_mut().for_each(|a| *a /= sum);
    Some(TopicDistribution(acc))
}

/// The `n` terms whose word-topic distribution is closest to the mean
/// distribution of `probe`, skipping the probe terms and `exclude`.
/// Distances are returned alongside, ties broken by dense id.
pub fn suggest_from(probe: &[u32], model: &TopicModel, exclude: &HashSet<u32>, n: usize) -> Vec<(u32, f64)> {
    if n == 0 || probe.is_empty() {
        return Vec::new();
    }
    let dists: Vec<TopicDistribution> = probe.iter().filter_map(|&w| model.word_topics(w).ok()).collect();
    let Some(target) = mean_distribution(&dists) else {
        return Vec::new();
    };
    let mut scored: Vec<(u32, f64)> = (0..model.n_words() as u32)
        .filter(|w| !probe.contains(w) && !exclude.contains(w))
        .map(|w| (w, cosine_distance(model.word_topics(w).unwrap().as_slice(), target.as_slice())))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(n);
    scored
}

/// Terms nearest to a single seed term.
pub fn suggest_related(seed: u32, model: &TopicModel, exclude: &HashSet<u32>, n: usize) -> Vec<(u32, f64)> {
    suggest_from(&[seed], model, exclude, n)
}

/// Suggestions for a topic, probing with its accepted words and skipping
/// everything already judged. Returns display text and distance.
pub fn suggest_for_topic(topic: &UserTopic, ctx: &TopicContext, n: usize) -> Result<Vec<(String, f64)>, TopicError> {
    let accepted = resolve_all(&topic.accepted_words, ctx)?;
    if accepted.is_empty() {
        return Err(TopicError::NoAcceptedWords);
    }
    let probe: Vec<u32> = accepted.iter().filter_map(|&t| ctx.space.dense(t)).collect();
    let exclude: HashSet<u32> = topic
        .rejected_words
        .iter()
        .filter_map(|w| ctx.resolve_term(w).ok())
        .filter_map(|t| ctx.space.dense(t))
        .collect();
    Ok(suggest_from(&probe, ctx.model, &exclude, n)
        .into_iter()
        .map(|(w, d)| (ctx.term_text(ctx.space.token(w)), d))
        .collect())
}

fn resolve_all(words: &[String], ctx: &TopicContext) -> Result<Vec<TokenId>, TopicError> {
    let mut out = Vec::new();
    for w in words {
        let id = ctx.resolve_term(w)?;
        if !out.contains(&id) {
            out.push(id);
        }
    }
    Ok(out)
}

/// The top `m` documents by summed per-term query-likelihood score over the
/// accepted terms, among documents containing at least two distinct
/// accepted terms (one when only one term is accepted).
pub fn clear_hits(terms: &[TokenId], index: &KeywordIndex, m: usize) -> Result<Vec<u32>, TopicError> {
    if terms.is_empty() {
        return Err(TopicError::NoAcceptedWords);
    }
    if m == 0 {
        return Err(TopicError::ZeroClearHits);
    }
    let mut distinct: Vec<TokenId> = terms.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let required = if distinct.len() == 1 { 1 } else { 2 };
    let smoothing: f64 = distinct
        .iter()
        .map(|&t| index.mu() * index.corpus_count(t) as f64 / index.n_tokens() as f64)
        .sum();
    let mut per_doc: HashMap<u32, (usize, u64)> = HashMap::new();
    for &t in &distinct {
        for &(doc, tf) in index.postings(t) {
            let e = per_doc.entry(doc).or_default();
            e.0 += 1;
            e.1 += tf as u64;
        }
    }
    let mut candidates: Vec<(u32, f64)> = per_doc
        .into_iter()
        .filter(|(_, (n, _))| *n >= required)
        .map(|(d, (_, tf))| (d, tf as f64 + smoothing))
        .collect();
    if candidates.is_empty() {
        return Err(TopicError::NoClearHits);
    }
    let ids = index.doc_ids();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| ids[a.0 as usize].cmp(&ids[b.0 as usize])));
    candidates.truncate(m);
    Ok(candidates.into_iter().map(|(d, _)| d).collect())
}

/// Mean document-topic distribution over the hits.
pub fn build_centroid(hits: &[u32], model: &TopicModel) -> Result<TopicDistribution, TopicError> {
    let dists = hits
        .iter()
        .map(|&d| model.doc_topics(d as usize).map_err(|_| TopicError::UnknownDoc(d.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    mean_distribution(&dists).ok_or(TopicError::NoClearHits)
}

/// Recomputes clear hits and the centroid from the accepted words. Any
/// calibration is dropped; stored boundary judgments are kept.
pub fn refresh(topic: &mut UserTopic, ctx: &TopicContext, m: usize) -> Result<(), TopicError> {
    topic.reset_calibration();
    topic.centroid = None;
    topic.clear_hits.clear();
    let terms = resolve_all(&topic.accepted_words, ctx)?;
    let hits = clear_hits(&terms, ctx.index, m)?;
    topic.centroid = Some(build_centroid(&hits, ctx.model)?);
    topic.clear_hits = hits.iter().map(|&d| ctx.index.doc_id(d).to_string()).collect();
    Ok(())
}

/// Cosine distance between a document's topic mix and the centroid.
pub fn raw_distance(doc: u32, topic: &UserTopic, model: &TopicModel) -> Result<f64, TopicError> {
    let centroid = topic.centroid.as_ref().ok_or(TopicError::NoCentroid)?;
    let dist = model
        .doc_topics(doc as usize)
        .map_err(|_| TopicError::UnknownDoc(doc.to_string()))?;
    Ok(cosine_distance(dist.as_slice(), centroid.as_slice()))
}

/// Raw distance of every document, in index order.
pub fn raw_distances(topic: &UserTopic, model: &TopicModel) -> Result<Vec<f64>, TopicError> {
    (0..model.n_docs() as u32).map(|d| raw_distance(d, topic, model)).collect()
}

/// Midpoint of the mean raw distance of relevant and irrelevant judgments.
pub fn midpoint_correction(relevant: &[f64], irrelevant: &[f64]) -> Result<f64, TopicError> {
    if relevant.is_empty() || irrelevant.is_empty() {
        return Err(TopicError::OneClassJudgments);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (r, i) = (mean(relevant), mean(irrelevant));
    if r >= i {
        return Err(TopicError::InvertedJudgments {
            mean_relevant: r,
            mean_irrelevant: i,
        });
    }
    Ok((r + i) / 2.0)
}

/// Merges new boundary judgments into the topic (a later judgment of the
/// same document wins), sets the correction from all of them and caches
/// the corpus extremes of the corrected distance.
pub fn calibrate(topic: &mut UserTopic, judgments: &[BoundaryJudgment], ctx: &TopicContext) -> Result<(), TopicError> {
    if topic.centroid.is_none() {
        return Err(TopicError::NoCentroid);
    }
    let mut merged = topic.boundary_judgments.clone();
    for j in judgments {
        ctx.doc_index(&j.doc_id)?;
        merged.retain(|m| m.doc_id != j.doc_id);
        merged.push(j.clone());
    }
    let raw = raw_distances(topic, ctx.model)?;
    let (mut rel, mut irr) = (Vec::new(), Vec::new());
    for j in &merged {
        let d = raw[ctx.doc_index(&j.doc_id)? as usize];
        if j.relevant { rel.push(d) } else { irr.push(d) }
    }
    let correction = midpoint_correction(&rel, &irr)?;
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min) - correction;
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max) - correction;
    topic.boundary_judgments = merged;
    topic.correction = correction;
    topic.extremes = Some((lo, hi));
    topic.status = TopicStatus::Calibrated;
    Ok(())
}

/// The `band` unjudged documents whose raw distance is nearest the current
/// threshold: the correction once calibrated, the median raw distance
/// while in draft. Ties go to the smaller doc id.
pub fn select_boundary(topic: &UserTopic, ctx: &TopicContext, band: usize) -> Result<Vec<u32>, TopicError> {
    let raw = raw_distances(topic, ctx.model)?;
    if band == 0 || raw.is_empty() {
        return Ok(Vec::new());
    }
    let threshold = match topic.status {
        TopicStatus::Calibrated => topic.correction,
        TopicStatus::Draft => median(&raw),
    };
    let judged: HashSet<&str> = topic.boundary_judgments.iter().map(|j| j.doc_id.as_str()).collect();
    let ids = ctx.index.doc_ids();
    let gaps: Vec<f64> = raw.iter().map(|d| -(d - threshold).abs()).collect();
    let mut docs: Vec<u32> = (0..raw.len() as u32)
        .filter(|&d| !judged.contains(ids[d as usize].as_str()))
        .collect();
    docs.sort_by(|&a, &b| rank_order(&gaps, ids, a, b));
    docs.truncate(band);
    Ok(docs)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Maps corrected distance linearly onto [0, 1], 1 at the corpus minimum.
pub fn score_from_corrected(corrected: f64, extremes: (f64, f64)) -> f64 {
    let (lo, hi) = extremes;
    if hi <= lo {
        return 1.0;
    }
    ((hi - corrected) / (hi - lo)).clamp(0.0, 1.0)
}

pub fn topic_score(doc: u32, topic: &UserTopic, model: &TopicModel) -> Result<f64, TopicError> {
    let extremes = calibrated_extremes(topic)?;
    Ok(score_from_corrected(raw_distance(doc, topic, model)? - topic.correction, extremes))
}

/// Topic score of every document, in index order.
pub fn topic_scores(topic: &UserTopic, model: &TopicModel) -> Result<Vec<f64>, TopicError> {
    let extremes = calibrated_extremes(topic)?;
    Ok(raw_distances(topic, model)?
        .into_iter()
        .map(|d| score_from_corrected(d - topic.correction, extremes))
        .collect())
}

fn calibrated_extremes(topic: &UserTopic) -> Result<(f64, f64), TopicError> {
    match (topic.status, topic.extremes) {
        (TopicStatus::Calibrated, Some(e)) => Ok(e),
        _ => Err(TopicError::NotCalibrated),
    }
}
