//! Keyword search with an additively smoothed query-likelihood score.
//!
//! A term scores `n_in_doc + mu * n_in_corpus / n_tokens` in a document and
//! the scores of all query terms are multiplied. There is no document-length
//! normalization and no logarithm: the smoothed count itself is the score.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::etl::{PhraseTable, Tier, TokenId, TokenizedDocument, Vocabulary};
use crate::text::{normalize, StopWords};

pub const DEFAULT_MU: f64 = 1000.0;

/// Stands in for query words that have no id in the keyword tier. It has no
/// postings, so it scores zero everywhere.
pub const OUT_OF_VOCABULARY: TokenId = TokenId::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("index holds no tokens")]
    EmptyIndex,
    #[error("smoothing parameter mu must be positive, got {0}")]
    BadMu(f64),
    #[error("query is empty after normalization")]
    EmptyQuery,
}

/// Score of one term in one document.
pub fn qlm_term_score(n_in_doc: u64, n_in_corpus: u64, n_tokens: u64, mu: f64) -> Result<f64, SearchError> {
    if n_tokens == 0 {
        return Err(SearchError::EmptyIndex);
    }
    Ok(n_in_doc as f64 + mu * n_in_corpus as f64 / n_tokens as f64)
}

/// Postings and corpus statistics over the keyword-tier token streams.
#[derive(Debug, Clone)]
pub struct KeywordIndex {
    doc_ids: Vec<String>,
    doc_lookup: HashMap<String, u32>,
    /// token -> (doc index, in-document count), sorted by doc index.
    postings: HashMap<TokenId, Vec<(u32, u32)>>,
    corpus_counts: HashMap<TokenId, u64>,
    n_tokens: u64,
    mu: f64,
}

impl KeywordIndex {
    pub fn build(docs: &[TokenizedDocument], mu: f64) -> Result<Self, SearchError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(SearchError::BadMu(mu));
        }
        let mut postings: HashMap<TokenId, Vec<(u32, u32)>> = HashMap::new();
        let mut corpus_counts: HashMap<TokenId, u64> = HashMap::new();
        let mut n_tokens = 0u64;
        for (d, doc) in docs.iter().enumerate() {
            let mut tf: HashMap<TokenId, u32> = HashMap::new();
            for &t in &doc.tokens {
                *tf.entry(t).or_default() += 1;
            }
            n_tokens += doc.tokens.len() as u64;
            for (t, c) in tf {
                postings.entry(t).or_default().push((d as u32, c));
                *corpus_counts.entry(t).or_default() += c as u64;
            }
        }
        if n_tokens == 0 {
            return Err(SearchError::EmptyIndex);
        }
        let doc_ids: Vec<String> = docs.iter().map(|d| d.doc_id.clone()).collect();
        let doc_lookup = doc_ids.iter().enumerate().map(|(i, id)| (id.clone(), i as u32)).collect();
        Ok(KeywordIndex {
            doc_ids,
            doc_lookup,
            postings,
            corpus_counts,
            n_tokens,
            mu,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn n_tokens(&self) -> u64 {
        self.n_tokens
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_id(&self, doc: u32) -> &str {
        &self.doc_ids[doc as usize]
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<u32> {
        self.doc_lookup.get(doc_id).copied()
    }

    pub fn corpus_count(&self, token: TokenId) -> u64 {
        self.corpus_counts.get(&token).copied().unwrap_or(0)
    }

    pub fn in_doc_count(&self, token: TokenId, doc: u32) -> u64 {
        self.postings
            .get(&token)
            .and_then(|p| p.binary_search_by_key(&doc, |&(d, _)| d).ok().map(|i| p[i].1 as u64))
            .unwrap_or(0)
    }

    /// Documents containing `token` with their in-document counts.
    pub fn postings(&self, token: TokenId) -> &[(u32, u32)] {
        self.postings.get(&token).map_or(&[], Vec::as_slice)
    }

    fn smoothing(&self, token: TokenId) -> f64 {
        self.mu * self.corpus_count(token) as f64 / self.n_tokens as f64
    }

    /// Query scores for every document, in doc-index order.
    pub fn score_all(&self, terms: &[TokenId]) -> Vec<f64> {
        let mut scores = vec![1.0; self.n_docs()];
        let mut tf = vec![0u32; self.n_docs()];
        for &t in terms {
            tf.iter_mut().for_each(|c| *c = 0);
            for &(d, c) in self.postings(t) {
                tf[d as usize] = c;
            }
            let s = self.smoothing(t);
            for (score, &c) in scores.iter_mut().zip(&tf) {
                *score *= c as f64 + s;
            }
        }
        scores
    }
}

/// A document's query score and the per-term factors that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub doc_id: String,
    pub score: f64,
    pub per_term_scores: Vec<f64>,
}

/// Multiplies the per-term scores of `terms` for one document.
pub fn qlm_query_score(doc: u32, terms: &[TokenId], index: &KeywordIndex) -> ScoredHit {
    let per_term_scores: Vec<f64> = terms
        .iter()
        .map(|&t| index.in_doc_count(t, doc) as f64 + index.smoothing(t))
        .collect();
    let score = per_term_scores.iter().fold(1.0, |acc, s| acc * s);
    ScoredHit {
        doc_id: index.doc_id(doc).to_string(),
        score,
        per_term_scores,
    }
}

/// A normalized query term: its lemma (or phrase text) and keyword-tier id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTerm {
    pub text: String,
    pub id: Option<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedQuery {
    pub terms: Vec<QueryTerm>,
}

impl ParsedQuery {
    /// Term ids with out-of-vocabulary terms mapped to [`OUT_OF_VOCABULARY`].
    pub fn ids(&self) -> Vec<TokenId> {
        self.terms.iter().map(|t| t.id.unwrap_or(OUT_OF_VOCABULARY)).collect()
    }

    /// Query words outside the keyword tier.
    pub fn out_of_vocabulary(&self) -> Vec<String> {
        self.terms.iter().filter(|t| t.id.is_none()).map(|t| t.text.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Lemmatizes, stop-word filters and phrase-substitutes a query. Phrases
/// only form across runs of in-vocabulary words. Returns an empty query
/// when nothing survives.
pub fn parse_query(text: &str, vocab: &Vocabulary, phrases: &PhraseTable, stop_words: &StopWords) -> ParsedQuery {
    let lemmas: Vec<(String, Option<TokenId>)> = normalize(text, stop_words)
        .map(|l| {
            let id = vocab.id_in(&l, Tier::Keyword);
            (l, id)
        })
        .collect();
    let mut terms = Vec::with_capacity(lemmas.len());
    let mut i = 0;
    while i < lemmas.len() {
        let Some(_) = lemmas[i].1 else {
            terms.push(QueryTerm {
                text: lemmas[i].0.clone(),
                id: None,
            });
            i += 1;
            continue;
        };
        let run_end = lemmas[i..].iter().position(|l| l.1.is_none()).map_or(lemmas.len(), |p| i + p);
        let ids: Vec<TokenId> = lemmas[i..run_end].iter().filter_map(|l| l.1).collect();
        for id in phrases.substitute(&ids) {
            let text = match phrases.text(id, vocab) {
                Some(t) => t,
                None => vocab.word(id).unwrap_or_default().to_string(),
            };
            terms.push(QueryTerm { text, id: Some(id) });
        }
        i = run_end;
    }
    ParsedQuery { terms }
}

/// Orders documents by descending score, ascending doc id.
pub fn rank_order(scores: &[f64], doc_ids: &[String], a: u32, b: u32) -> Ordering {
    scores[b as usize]
        .total_cmp(&scores[a as usize])
        .then_with(|| doc_ids[a as usize].cmp(&doc_ids[b as usize]))
}

/// The `k` best document indices under [`rank_order`].
pub fn top_k(scores: &[f64], doc_ids: &[String], k: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    let cmp = |a: &u32, b: &u32| rank_order(scores, doc_ids, *a, *b);
    if k < order.len() {
        order.select_nth_unstable_by(k, cmp);
        order.truncate(k);
    }
    order.sort_unstable_by(cmp);
    order
}

/// Ranked keyword hits plus the query words that were not in the index.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub hits: Vec<ScoredHit>,
    pub out_of_vocabulary: Vec<String>,
}

/// Top-`k` documents for an already parsed query.
pub fn rank_parsed(query: &ParsedQuery, index: &KeywordIndex, k: usize) -> Result<Ranking, SearchError> {
    if query.is_empty() {
        return Err(SearchError::EmptyQuery);
    }
    let ids = query.ids();
    let scores = index.score_all(&ids);
    let hits = top_k(&scores, index.doc_ids(), k)
        .into_iter()
        .map(|d| qlm_query_score(d, &ids, index))
        .collect();
    Ok(Ranking {
        hits,
        out_of_vocabulary: query.out_of_vocabulary(),
    })
}

/// Normalizes `query` and returns the `k` best documents.
pub fn rank_by_keywords(
    query: &str,
    index: &KeywordIndex,
    vocab: &Vocabulary,
    phrases: &PhraseTable,
    stop_words: &StopWords,
    k: usize,
) -> Result<Ranking, SearchError> {
    rank_parsed(&parse_query(query, vocab, phrases, stop_words), index, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::etl::VocabularyConfig;
    use proptest::prelude::*;

    fn doc(id: &str, tokens: &[TokenId]) -> TokenizedDocument {
        TokenizedDocument {
            doc_id: id.into(),
            title: String::new(),
            tokens: tokens.to_vec(),
        }
    }

    #[test]
    fn term_score_examples() {
        assert_eq!(qlm_term_score(0, 5, 1000, 1000.0).unwrap(), 5.0);
        assert!((qlm_term_score(3, 40, 100_000, 1000.0).unwrap() - 3.4).abs() < 1e-12);
        assert_eq!(qlm_term_score(0, 0, 1000, 1000.0).unwrap(), 0.0);
        assert_eq!(qlm_term_score(1, 1, 0, 1000.0), Err(SearchError::EmptyIndex));
    }

    #[test]
    fn query_score_is_product_of_terms() {
        // 1000-token corpus. Token 0 occurs 5 times, never in "b": 0 + 5.
        // Token 1 occurs 4 times, 3 of them in "b": 3 + 4.
        let mut a = vec![0; 5];
        a.extend(std::iter::repeat_n(2, 991));
        a.push(1);
        let docs = [doc("a", &a), doc("b", &[1, 1, 1])];
        let index = KeywordIndex::build(&docs, 1000.0).unwrap();
        assert_eq!(index.n_tokens(), 1000);
        let hit = qlm_query_score(1, &[0, 1], &index);
        assert_eq!(hit.per_term_scores, vec![5.0, 7.0]);
        assert_eq!(hit.score, 35.0);
        let single = qlm_query_score(1, &[0], &index);
        assert_eq!(single.score, qlm_term_score(0, 5, 1000, 1000.0).unwrap());
        assert_eq!(qlm_query_score(0, &[0, OUT_OF_VOCABULARY], &index).score, 0.0);
    }

    #[test]
    fn product_of_five_and_three_point_four() {
        assert!((5.0f64 * 3.4 - 17.0).abs() < 1e-12);
    }

    #[test]
    fn bad_mu_and_empty_index_rejected() {
        assert_eq!(KeywordIndex::build(&[doc("a", &[0])], 0.0).unwrap_err(), SearchError::BadMu(0.0));
        assert_eq!(KeywordIndex::build(&[doc("a", &[])], 1.0).unwrap_err(), SearchError::EmptyIndex);
    }

    fn fixture() -> (Vocabulary, PhraseTable, KeywordIndex, StopWords) {
        let stop = StopWords::english();
        let vocab = Vocabulary::from_counts(
            [("tourism", 3), ("terrorism", 3), ("hotel", 2), ("bomb", 2)].map(|(w, c)| (w.to_string(), c)),
            VocabularyConfig::default(),
        );
        let id = |w| vocab.id_in(w, Tier::Keyword).unwrap();
        let docs = [
            doc("d1", &[id("tourism"), id("terrorism"), id("hotel")]),
            doc("d2", &[id("tourism"), id("tourism"), id("bomb")]),
            doc("d3", &[id("terrorism"), id("terrorism"), id("bomb")]),
            doc("d0", &[id("hotel")]),
        ];
        let index = KeywordIndex::build(&docs, DEFAULT_MU).unwrap();
        (vocab, PhraseTable::empty(4), index, stop)
    }

    #[test]
    fn two_term_query_ranks_by_product() {
        let (vocab, phrases, index, stop) = fixture();
        let r = rank_by_keywords("Tourism Terrorism", &index, &vocab, &phrases, &stop, 20).unwrap();
        assert_eq!(r.hits.len(), 4);
        for h in &r.hits {
            assert_eq!(h.per_term_scores.len(), 2);
            assert_eq!(h.score, h.per_term_scores[0] * h.per_term_scores[1]);
        }
        // s = 1000 * 3 / 10 = 300 for both terms.
        assert_eq!(r.hits[0].doc_id, "d1");
        assert_eq!(r.hits[0].score, 301.0 * 301.0);
        assert!(r.out_of_vocabulary.is_empty());
    }

    #[test]
    fn oov_term_zeroes_every_document_and_ties_break_by_id() {
        let (vocab, phrases, index, stop) = fixture();
        let r = rank_by_keywords("tourism zeppelin", &index, &vocab, &phrases, &stop, 3).unwrap();
        assert!(r.hits.iter().all(|h| h.score == 0.0));
        let ids: Vec<_> = r.hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["d0", "d1", "d2"]);
        assert_eq!(r.out_of_vocabulary, ["zeppelin"]);
    }

    #[test]
    fn empty_query_is_an_error() {
        let (vocab, phrases, index, stop) = fixture();
        let err = rank_by_keywords("the of in", &index, &vocab, &phrases, &stop, 3).unwrap_err();
        assert_eq!(err, SearchError::EmptyQuery);
    }

    #[test]
    fn identical_documents_tie_on_doc_id() {
        let docs = [doc("b", &[0, 1]), doc("a", &[1, 0])];
        let index = KeywordIndex::build(&docs, DEFAULT_MU).unwrap();
        let scores = index.score_all(&[0]);
        assert_eq!(scores[0], scores[1]);
        assert_eq!(top_k(&scores, index.doc_ids(), 5), vec![1, 0]);
    }

    #[test]
    fn query_phrases_substitute_within_known_runs() {
        let stop = StopWords::english();
        let vocab = Vocabulary::from_counts(
            [("prime", 2), ("minister", 2), ("said", 1)].map(|(w, c)| (w.to_string(), c)),
            VocabularyConfig::default(),
        );
        let id = |w| vocab.id_in(w, Tier::Core).unwrap();
        let docs = [
            doc("a", &[id("prime"), id("minister")]),
            doc("b", &[id("prime"), id("minister")]),
            doc("c", &[id("said")]),
        ];
        let corpus = crate::etl::extract_phrases(&docs, &vocab, 1.0);
        assert!(!corpus.is_empty());
        let q = parse_query("Prime Minister said", &vocab, &corpus, &stop);
        assert_eq!(q.terms[0].text, "prime minister");
        assert_eq!(q.terms.len(), 2);
        let q = parse_query("prime blorp minister", &vocab, &corpus, &stop);
        assert_eq!(q.terms.len(), 3);
    }

    proptest! {
        #[test]
        fn more_occurrences_never_lower_rank(
            tf in proptest::collection::vec((0u64..6, 0u64..6), 2..12),
            target in 0usize..12,
            extra in 1u64..5,
        ) {
            // Corpus statistics held fixed; only the target's in-document
            // count of the first query term grows.
            let target = target % tf.len();
            let (cf0, cf1, n) = (40, 25, 1000);
            let scores = |tf: &[(u64, u64)]| -> Vec<f64> {
                tf.iter().map(|&(a, b)| {
                    qlm_term_score(a, cf0, n, DEFAULT_MU).unwrap() * qlm_term_score(b, cf1, n, DEFAULT_MU).unwrap()
                }).collect()
            };
            let ids: Vec<String> = (0..tf.len()).map(|i| format!("d{i:02}")).collect();
            let rank_of = |s: &[f64]| top_k(s, &ids, usize::MAX).iter().position(|&d| d as usize == target).unwrap();
            let mut grown = tf.clone();
            grown[target].0 += extra;
            prop_assert!(rank_of(&scores(&grown)) <= rank_of(&scores(&tf)));
        }

        #[test]
        fn scores_nonnegative_and_zero_only_for_unknown_terms(
            docs in proptest::collection::vec(proptest::collection::vec(0u32..5, 1..10), 1..8),
            query in proptest::collection::vec(0u32..7, 1..4),
        ) {
            let docs: Vec<TokenizedDocument> = docs.iter().enumerate().map(|(i, t)| doc(&i.to_string(), t)).collect();
            let index = KeywordIndex::build(&docs, DEFAULT_MU).unwrap();
            let has_unknown = query.iter().any(|&t| index.corpus_count(t) == 0);
            for s in index.score_all(&query) {
                prop_assert!(s >= 0.0);
                prop_assert_eq!(s == 0.0, has_unknown);
            }
        }
    }
}
