//! Latent Dirichlet allocation trained by collapsed Gibbs sampling.
//!
//! Each token holds a topic label. A sweep visits tokens document by
//! document, removes the token from the count matrices, and redraws its
//! topic with probability proportional to
//!
//! ```text
//! (wt[w][j] + beta) / (topic_total[j] + W * beta) * (dt[d][j] + alpha) / (doc_total[d] + T * alpha)
//! ```
//!
//! where every count excludes the token being resampled.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Result;
use crate::etl::{TokenId, TokenizedDocument};
use crate::format::{TextFile, TextWriter};

#[derive(Debug, Error, PartialEq)]
pub enum LdaError {
    #[error("topic count must be at least 1")]
    NoTopics,
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error("at least one sweep is required")]
    NoSweeps,
    #[error("alpha and beta must be positive and finite (alpha {alpha}, beta {beta})")]
    BadHyperparameter { alpha: f64, beta: f64 },
    #[error("word id {word} is outside the vocabulary of {n_words}")]
    WordOutOfRange { word: u32, n_words: usize },
    #[error("unknown document {0}")]
    UnknownDoc(usize),
    #[error("unknown word {0}")]
    UnknownWord(u32),
    #[error("model was saved without token assignments and cannot be resampled")]
    NotResumable,
}

/// Token streams over a dense word space `0..n_words`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdaCorpus {
    pub docs: Vec<Vec<u32>>,
    pub n_words: usize,
}

impl LdaCorpus {
    pub fn new(docs: Vec<Vec<u32>>, n_words: usize) -> std::result::Result<Self, LdaError> {
        if docs.is_empty() {
            return Err(LdaError::EmptyCorpus);
        }
        if let Some(&word) = docs.iter().flatten().find(|&&w| w as usize >= n_words) {
            return Err(LdaError::WordOutOfRange { word, n_words });
        }
        Ok(LdaCorpus { docs, n_words })
    }

    pub fn n_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }
}

/// Maps token ids onto the model's dense word space: core words keep their
/// ids, phrases follow at `core_len + (id - phrase_base)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSpace {
    pub core_len: u32,
    pub phrase_base: u32,
    pub n_phrases: u32,
}

impl TermSpace {
    pub fn new(core_len: usize, phrase_base: TokenId, n_phrases: usize) -> Self {
        TermSpace {
            core_len: core_len as u32,
            phrase_base,
            n_phrases: n_phrases as u32,
        }
    }

    pub fn n_terms(&self) -> usize {
        (self.core_len + self.n_phrases) as usize
    }

    pub fn dense(&self, token: TokenId) -> Option<u32> {
        if token < self.core_len {
            Some(token)
        } else if token >= self.phrase_base && token - self.phrase_base < self.n_phrases {
            Some(self.core_len + (token - self.phrase_base))
        } else {
            None
        }
    }

    pub fn token(&self, dense: u32) -> TokenId {
        if dense < self.core_len {
            dense
        } else {
            self.phrase_base + (dense - self.core_len)
        }
    }

    /// Model input from tokenized documents; tokens outside the space are
    /// dropped and document order is kept.
    pub fn corpus(&self, docs: &[TokenizedDocument]) -> std::result::Result<LdaCorpus, LdaError> {
        let docs = docs
            .iter()
            .map(|d| d.tokens.iter().filter_map(|&t| self.dense(t)).collect())
            .collect();
        LdaCorpus::new(docs, self.n_terms())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub n_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub n_sweeps: usize,
    pub seed: u64,
}

impl LdaConfig {
    /// `alpha = 50 / T`, `beta = 0.01`, 500 sweeps, seed 42.
    pub fn with_topics(n_topics: usize) -> Self {
        LdaConfig {
            n_topics,
            alpha: 50.0 / n_topics.max(1) as f64,
            beta: 0.01,
            n_sweeps: 500,
            seed: 42,
        }
    }

    fn validate(&self) -> std::result::Result<(), LdaError> {
        if self.n_topics == 0 {
            return Err(LdaError::NoTopics);
        }
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !ok(self.alpha) || !ok(self.beta) {
            return Err(LdaError::BadHyperparameter {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        Ok(())
    }
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self::with_topics(100)
    }
}

/// A probability vector over the latent topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicDistribution(pub Vec<f64>);

impl TopicDistribution {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map_or(0, |(i, _)| i)
    }

    fn normalized(mut v: Vec<f64>) -> Self {
        let sum: f64 = v.iter().sum();
        if sum > 0.0 {
            v.iter_mut().for_each(|x| *x /= sum);
        }
        TopicDistribution(v)
    }
}

/// Count matrices and token assignments of a topic model.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    n_topics: usize,
    n_words: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    sweeps: usize,
    /// word-major `n_words x n_topics`
    wt: Vec<u32>,
    /// doc-major `n_docs x n_topics`
    dt: Vec<u32>,
    topic_totals: Vec<u64>,
    doc_totals: Vec<u32>,
    docs: Vec<Vec<u32>>,
    assignments: Vec<Vec<u32>>,
}

/// Per-sweep statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepStats {
    pub tokens: usize,
    pub reassigned: usize,
}

impl TopicModel {
    pub fn n_topics(&self) -> usize {
        self.n_topics
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn n_docs(&self) -> usize {
        self.doc_totals.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn wt_count(&self, word: u32, topic: usize) -> u32 {
        self.wt[word as usize * self.n_topics + topic]
    }

    pub fn dt_count(&self, doc: usize, topic: usize) -> u32 {
        self.dt[doc * self.n_topics + topic]
    }

    pub fn topic_totals(&self) -> &[u64] {
        &self.topic_totals
    }

    pub fn doc_totals(&self) -> &[u32] {
        &self.doc_totals
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.assignments
    }

    pub fn docs(&self) -> &[Vec<u32>] {
        &self.docs
    }

    /// True when token assignments are present, so sweeps can continue.
    pub fn is_resumable(&self) -> bool {
        !self.assignments.is_empty() || self.doc_totals.iter().all(|&n| n == 0)
    }

    fn remove(&mut self, doc: usize, word: u32, topic: usize) {
        let t = self.n_topics;
        self.wt[word as usize * t + topic] -= 1;
        self.dt[doc * t + topic] -= 1;
        self.topic_totals[topic] -= 1;
        self.doc_totals[doc] -= 1;
    }

    fn add(&mut self, doc: usize, word: u32, topic: usize) {
        let t = self.n_topics;
        self.wt[word as usize * t + topic] += 1;
        self.dt[doc * t + topic] += 1;
        self.topic_totals[topic] += 1;
        self.doc_totals[doc] += 1;
    }

    /// Unnormalized topic weights for `word` in `doc` from the current
    /// counts, less one occurrence in topic `exclude` when given.
    fn weights_excluding(&self, doc: usize, word: u32, exclude: Option<usize>, out: &mut [f64]) -> f64 {
        let t = self.n_topics;
        let w_beta = self.n_words as f64 * self.beta;
        let own = |j: usize| if exclude == Some(j) { 1.0 } else { 0.0 };
        let doc_total = self.doc_totals[doc] as f64 - if exclude.is_some() { 1.0 } else { 0.0 };
        let doc_denominator = doc_total + t as f64 * self.alpha;
        let wt = &self.wt[word as usize * t..(word as usize + 1) * t];
        let dt = &self.dt[doc * t..(doc + 1) * t];
        let mut sum = 0.0;
        for j in 0..t {
            let p = (wt[j] as f64 - own(j) + self.beta) / (self.topic_totals[j] as f64 - own(j) + w_beta)
                * (dt[j] as f64 - own(j) + self.alpha)
                / doc_denominator;
            out[j] = p;
            sum += p;
        }
        sum
    }

    fn weights(&self, doc: usize, word: u32, out: &mut [f64]) -> f64 {
        self.weights_excluding(doc, word, None, out)
    }

    /// Topic distribution for one occurrence of `word` in `doc`, computed
    /// from the counts as they stand. The caller is expected to have removed
    /// the token's own assignment first.
    pub fn conditional(&self, doc: usize, word: u32) -> std::result::Result<TopicDistribution, LdaError> {
        if doc >= self.n_docs() {
            return Err(LdaError::UnknownDoc(doc));
        }
        if word as usize >= self.n_words {
            return Err(LdaError::UnknownWord(word));
        }
        let mut w = vec![0.0; self.n_topics];
        let sum = self.weights(doc, word, &mut w);
        w.iter_mut().for_each(|x| *x /= sum);
        Ok(TopicDistribution(w))
    }

    /// Conditional of the token at `position` in `doc`, with its current
    /// assignment removed. The model is left unchanged.
    pub fn token_conditional(&self, doc: usize, position: usize) -> std::result::Result<TopicDistribution, LdaError> {
        if self.assignments.is_empty() {
            return Err(LdaError::NotResumable);
        }
        let word = *self.docs.get(doc).and_then(|d| d.get(position)).ok_or(LdaError::UnknownDoc(doc))?;
        let topic = self.assignments[doc][position] as usize;
        let mut w = vec![0.0; self.n_topics];
        let sum = self.weights_excluding(doc, word, Some(topic), &mut w);
        w.iter_mut().for_each(|x| *x /= sum);
        Ok(TopicDistribution(w))
    }

    /// Smoothed document-topic proportions `(dt + alpha) / (n_d + T alpha)`.
    pub fn doc_topics(&self, doc: usize) -> std::result::Result<TopicDistribution, LdaError> {
        if doc >= self.n_docs() {
            return Err(LdaError::UnknownDoc(doc));
        }
        let t = self.n_topics;
        let denominator = self.doc_totals[doc] as f64 + t as f64 * self.alpha;
        Ok(TopicDistribution(
            (0..t).map(|j| (self.dt_count(doc, j) as f64 + self.alpha) / denominator).collect(),
        ))
    }

    /// A word's distribution over topics: the topic-word probabilities
    /// `(wt + beta) / (topic_total + W beta)` renormalized across topics.
    pub fn word_topics(&self, word: u32) -> std::result::Result<TopicDistribution, LdaError> {
        if word as usize >= self.n_words {
            return Err(LdaError::UnknownWord(word));
        }
        let w_beta = self.n_words as f64 * self.beta;
        Ok(TopicDistribution::normalized(
            (0..self.n_topics)
                .map(|j| (self.wt_count(word, j) as f64 + self.beta) / (self.topic_totals[j] as f64 + w_beta))
                .collect(),
        ))
    }

    /// The `n` words most often assigned to `topic`, ties broken by name.
    pub fn top_words<S: AsRef<str>>(&self, topic: usize, n: usize, names: &[S]) -> Vec<(u32, u32)> {
        let mut words: Vec<(u32, u32)> = (0..self.n_words as u32).map(|w| (w, self.wt_count(w, topic))).collect();
        let name = |w: u32| names.get(w as usize).map_or("", |s| s.as_ref());
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| name(a.0).cmp(name(b.0))));
        words.truncate(n);
        words
    }

    /// Recounts every matrix from the assignments and checks it against the
    /// stored counts.
    pub fn check_counts(&self) -> std::result::Result<(), String> {
        let t = self.n_topics;
        let mut wt = vec![0u32; self.wt.len()];
        let mut dt = vec![0u32; self.dt.len()];
        for (d, (doc, z)) in self.docs.iter().zip(&self.assignments).enumerate() {
            for (&w, &j) in doc.iter().zip(z) {
                wt[w as usize * t + j as usize] += 1;
                dt[d * t + j as usize] += 1;
            }
        }
        if !self.assignments.is_empty() && (wt != self.wt || dt != self.dt) {
            return Err("count matrices disagree with assignments".into());
        }
        for j in 0..t {
            let col: u64 = (0..self.n_words).map(|w| self.wt[w * t + j] as u64).sum();
            if col != self.topic_totals[j] {
                return Err(format!("topic {j}: word counts sum to {col}, total is {}", self.topic_totals[j]));
            }
        }
        for d in 0..self.n_docs() {
            let row: u32 = self.dt[d * t..(d + 1) * t].iter().sum();
            if row != self.doc_totals[d] {
                return Err(format!("doc {d}: topic counts sum to {row}, total is {}", self.doc_totals[d]));
            }
            if !self.docs.is_empty() && self.docs[d].len() != row as usize {
                return Err(format!("doc {d}: total {row} differs from its length"));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, with_assignments: bool) -> Result<()> {
        let t = self.n_topics;
        let mut w = TextWriter::new("lda-model");
        w.comment("wt\tword\ttopic\tcount | dt\tdoc\ttopic\tcount | doc\tindex\tword:topic ...")
            .meta("topics", t)
            .meta("alpha", self.alpha)
            .meta("beta", self.beta)
            .meta("seed", self.seed)
            .meta("sweeps", self.sweeps)
            .meta("words", self.n_words)
            .meta("docs", self.n_docs());
        for word in 0..self.n_words {
            for j in 0..t {
                let c = self.wt[word * t + j];
                if c > 0 {
                    w.row(&[&"wt", &word, &j, &c]);
                }
            }
        }
        for d in 0..self.n_docs() {
            for j in 0..t {
                let c = self.dt[d * t + j];
                if c > 0 {
                    w.row(&[&"dt", &d, &j, &c]);
                }
            }
        }
        if with_assignments {
            for (d, (doc, z)) in self.docs.iter().zip(&self.assignments).enumerate() {
                let pairs: Vec<String> = doc.iter().zip(z).map(|(w, j)| format!("{w}:{j}")).collect();
                w.row(&[&"doc", &d, &pairs.join(" ")]);
            }
        }
        w.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = TextFile::read(path, "lda-model")?;
        let t: usize = file.meta("topics")?;
        let n_words: usize = file.meta("words")?;
        let n_docs: usize = file.meta("docs")?;
        let mut model = TopicModel {
            n_topics: t,
            n_words,
            alpha: file.meta("alpha")?,
            beta: file.meta("beta")?,
            seed: file.meta("seed")?,
            sweeps: file.meta("sweeps")?,
            wt: vec![0; n_words * t],
            dt: vec![0; n_docs * t],
            topic_totals: vec![0; t],
            doc_totals: vec![0; n_docs],
            docs: Vec::new(),
            assignments: Vec::new(),
        };
        for (line, row) in &file.rows {
            let fields: Vec<&str> = row.split('\t').collect();
            match fields.as_slice() {
                ["wt", w, j, c] | ["dt", w, j, c] => {
                    let (a, j, c): (usize, usize, u32) =
                        (file.field(*line, w, "index")?, file.field(*line, j, "topic")?, file.field(*line, c, "count")?);
                    let limit = if fields[0] == "wt" { n_words } else { n_docs };
                    if a >= limit || j >= t {
                        return Err(file.error(*line, "index out of range"));
                    }
                    if fields[0] == "wt" {
                        model.wt[a * t + j] = c;
                        model.topic_totals[j] += c as u64;
                    } else {
                        model.dt[a * t + j] = c;
                        model.doc_totals[a] += c;
                    }
                }
                ["doc", d, pairs @ ..] if pairs.len() <= 1 => {
                    let d: usize = file.field(*line, d, "doc")?;
                    if d != model.docs.len() {
                        return Err(file.error(*line, "doc rows out of sequence"));
                    }
                    let mut words = Vec::new();
                    let mut topics = Vec::new();
                    for pair in pairs.first().copied().unwrap_or("").split_ascii_whitespace() {
                        let (w, j) = pair.split_once(':').ok_or_else(|| file.error(*line, "expected word:topic"))?;
                        words.push(file.field(*line, w, "word")?);
                        topics.push(file.field(*line, j, "topic")?);
                    }
                    model.docs.push(words);
                    model.assignments.push(topics);
                }
                _ => return Err(file.error(*line, "unrecognized row")),
            }
        }
        if !model.docs.is_empty() && model.docs.len() != n_docs {
            return Err(file.error(1, "assignment rows do not cover every document"));
        }
        model.check_counts().map_err(|m| file.error(1, m))?;
        Ok(model)
    }
}

/// Assigns every token a uniformly random topic drawn from `rng`.
pub fn init_with_rng(corpus: &LdaCorpus, config: &LdaConfig, rng: &mut impl Rng) -> std::result::Result<TopicModel, LdaError> {
    config.validate()?;
    if corpus.docs.is_empty() {
        return Err(LdaError::EmptyCorpus);
    }
    let t = config.n_topics;
    let mut model = TopicModel {
        n_topics: t,
        n_words: corpus.n_words,
        alpha: config.alpha,
        beta: config.beta,
        seed: config.seed,
        sweeps: 0,
        wt: vec![0; corpus.n_words * t],
        dt: vec![0; corpus.docs.len() * t],
        topic_totals: vec![0; t],
        doc_totals: vec![0; corpus.docs.len()],
        docs: corpus.docs.clone(),
        assignments: Vec::with_capacity(corpus.docs.len()),
    };
    for (d, doc) in corpus.docs.iter().enumerate() {
        let mut z = Vec::with_capacity(doc.len());
        for &w in doc {
            let j = rng.random_range(0..t);
            model.add(d, w, j);
            z.push(j as u32);
        }
        model.assignments.push(z);
    }
    Ok(model)
}

/// Random initial assignments from a generator seeded with `config.seed`.
pub fn init_assignments(corpus: &LdaCorpus, config: &LdaConfig) -> std::result::Result<TopicModel, LdaError> {
    init_with_rng(corpus, config, &mut ChaCha8Rng::seed_from_u64(config.seed))
}

/// Resamples every token once, documents in order and tokens in position
/// order.
pub fn gibbs_sweep(model: &mut TopicModel, rng: &mut impl Rng) -> std::result::Result<SweepStats, LdaError> {
    if !model.is_resumable() {
        return Err(LdaError::NotResumable);
    }
    let mut weights = vec![0.0; model.n_topics];
    let mut stats = SweepStats::default();
    for d in 0..model.docs.len() {
        for n in 0..model.docs[d].len() {
            let w = model.docs[d][n];
            let old = model.assignments[d][n] as usize;
            model.remove(d, w, old);
            let sum = model.weights(d, w, &mut weights);
            let mut u = rng.random::<f64>() * sum;
            let mut new = model.n_topics - 1;
            for (j, &p) in weights.iter().enumerate() {
                if u < p {
                    new = j;
                    break;
                }
                u -= p;
            }
            model.add(d, w, new);
            model.assignments[d][n] = new as u32;
            stats.tokens += 1;
            stats.reassigned += usize::from(new != old);
        }
    }
    model.sweeps += 1;
    Ok(stats)
}

/// Initializes and runs `config.n_sweeps` sweeps on one seeded stream.
pub fn train(corpus: &LdaCorpus, config: &LdaConfig) -> std::result::Result<TopicModel, LdaError> {
    train_with(corpus, config, |_, _| {})
}

/// [`train`] with a callback after each sweep.
pub fn train_with(
    corpus: &LdaCorpus,
    config: &LdaConfig,
    mut on_sweep: impl FnMut(usize, SweepStats),
) -> std::result::Result<TopicModel, LdaError> {
    if config.n_sweeps == 0 {
        return Err(LdaError::NoSweeps);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = init_with_rng(corpus, config, &mut rng)?;
    for i in 0..config.n_sweeps {
        let stats = gibbs_sweep(&mut model, &mut rng)?;
        on_sweep(i, stats);
    }
    Ok(model)
}
