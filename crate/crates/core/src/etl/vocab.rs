use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use super::{EtlError, RawDocument, TokenId};
use crate::error::Result;
use crate::format::{TextFile, TextWriter};
use crate::text::{normalize, StopWords};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabularyConfig {
    pub core_size: usize,
    pub keyword_size: usize,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        VocabularyConfig {
            core_size: 10_000,
            keyword_size: 100_000,
        }
    }
}

/// Which vocabulary tier a lookup is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    /// The small tier used for phrases and topic modeling.
    Core,
    /// The larger tier used by keyword search.
    Keyword,
}

/// Every surviving lemma ranked by descending corpus frequency (ties
/// lexicographic). A word's id is its rank, so the core tier is the id
/// prefix `0..core_len` and the keyword tier the prefix `0..keyword_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    ranked: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, TokenId>,
    core_len: usize,
    keyword_len: usize,
    n_tokens: u64,
}

impl Vocabulary {
    /// Ranks raw `(word, count)` pairs. Duplicate words are summed.
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>, config: VocabularyConfig) -> Self {
        let mut merged: HashMap<String, u64> = HashMap::new();
        for (w, c) in counts {
            *merged.entry(w).or_default() += c;
        }
        let mut pairs: Vec<(String, u64)> = merged.into_iter().collect();
        pairs.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let keyword_len = config.keyword_size.min(pairs.len());
        let core_len = config.core_size.min(keyword_len);
        Self::from_ranked(pairs, core_len, keyword_len)
    }

    fn from_ranked(pairs: Vec<(String, u64)>, core_len: usize, keyword_len: usize) -> Self {
        let n_tokens = pairs.iter().map(|(_, c)| c).sum();
        let index = pairs
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i as TokenId))
            .collect();
        let (ranked, counts) = pairs.into_iter().unzip();
        Vocabulary {
            ranked,
            counts,
            index,
            core_len,
            keyword_len,
            n_tokens,
        }
    }

    pub fn core_words(&self) -> &[String] {
        &self.ranked[..self.core_len]
    }

    pub fn keyword_words(&self) -> &[String] {
        &self.ranked[..self.keyword_len]
    }

    /// All counted words with their corpus frequency, in rank order.
    pub fn word_counts(&self) -> impl Iterator<Item = (&str, u64)> {
        self.ranked.iter().map(String::as_str).zip(self.counts.iter().copied())
    }

    pub fn core_len(&self) -> usize {
        self.core_len
    }

    pub fn keyword_len(&self) -> usize {
        self.keyword_len
    }

    /// Total surviving tokens, duplicates included.
    pub fn n_tokens(&self) -> u64 {
        self.n_tokens
    }

    pub fn count(&self, word: &str) -> u64 {
        self.index.get(word).map_or(0, |&i| self.counts[i as usize])
    }

    pub fn count_of(&self, id: TokenId) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        self.ranked.get(id as usize).map(String::as_str)
    }

    /// The word's id if it falls inside `tier`.
    pub fn id_in(&self, word: &str, tier: Tier) -> Option<TokenId> {
        let limit = match tier {
            Tier::Core => self.core_len,
            Tier::Keyword => self.keyword_len,
        };
        self.index.get(word).copied().filter(|&id| (id as usize) < limit)
    }

    /// Words from the whole ranked list closest in spelling to `word`.
    pub fn nearest_spellings(&self, word: &str, tier: Tier, n: usize) -> Vec<String> {
        let pool = match tier {
            Tier::Core => self.core_words(),
            Tier::Keyword => self.keyword_words(),
        };
        let mut scored: Vec<(usize, &String)> = pool.iter().map(|w| (strsim::levenshtein(word, w), w)).collect();
        scored.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        scored.into_iter().take(n).map(|(_, w)| w.clone()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = TextWriter::new("vocabulary");
        w.comment("rank\tword\tcount (rank 0 is the most frequent word)")
            .meta("core_size", self.core_len)
            .meta("keyword_size", self.keyword_len)
            .meta("n_tokens", self.n_tokens);
        for (rank, (word, count)) in self.word_counts().enumerate() {
            w.row(&[&rank, &word, &count]);
        }
        w.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = TextFile::read(path, "vocabulary")?;
        let core_len: usize = file.meta("core_size")?;
        let keyword_len: usize = file.meta("keyword_size")?;
        let n_tokens: u64 = file.meta("n_tokens")?;
        let mut pairs = Vec::with_capacity(file.rows.len());
        for (line, row) in &file.rows {
            let fields: Vec<&str> = row.split('\t').collect();
            let [rank, word, count] = fields[..] else {
                return Err(file.error(*line, "expected rank, word, count"));
            };
            let rank: usize = file.field(*line, rank, "rank")?;
            if rank != pairs.len() {
                return Err(file.error(*line, format!("rank {rank} out of sequence")));
            }
            pairs.push((word.to_string(), file.field(*line, count, "count")?));
        }
        if keyword_len > pairs.len() || core_len > keyword_len {
            return Err(file.error(1, "tier sizes exceed the word list"));
        }
        let vocab = Self::from_ranked(pairs, core_len, keyword_len);
        if vocab.n_tokens != n_tokens {
            return Err(file.error(1, "n_tokens does not match the sum of counts"));
        }
        Ok(vocab)
    }
}

/// Counts lemmatized, stop-word-filtered words over the corpus bodies and
/// ranks them into the two tiers.
pub fn build_vocabulary(
    corpus: &[RawDocument],
    stop_words: &StopWords,
    config: VocabularyConfig,
) -> Result<Vocabulary, EtlError> {
    if corpus.is_empty() {
        return Err(EtlError::EmptyCorpus);
    }
    let counts = corpus
        .par_iter()
        .fold(HashMap::<String, u64>::new, |mut acc, doc| {
            for lemma in normalize(&doc.body, stop_words) {
                *acc.entry(lemma).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (w, c) in b {
                *a.entry(w).or_default() += c;
            }
            a
        });
    if counts.is_empty() {
        return Err(EtlError::NoSurvivingWords);
    }
    Ok(Vocabulary::from_counts(counts, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(body: &str) -> RawDocument {
        RawDocument {
            doc_id: body.chars().take(8).collect(),
            title: String::new(),
            body: body.into(),
            entities: vec![],
        }
    }

    #[test]
    fn three_words_fill_both_tiers_by_count() {
        let corpus = [doc("storm storm storm gulf gulf mexico")];
        let v = build_vocabulary(&corpus, &StopWords::english(), VocabularyConfig::default()).unwrap();
        assert_eq!(v.core_words(), ["storm", "gulf", "mexico"]);
        assert_eq!(v.keyword_words(), ["storm", "gulf", "mexico"]);
        assert_eq!(v.n_tokens(), 6);
    }

    #[test]
    fn equal_counts_rank_lexicographically() {
        let corpus = [doc("zebra apple mango")];
        let v = build_vocabulary(&corpus, &StopWords::english(), VocabularyConfig::default()).unwrap();
        assert_eq!(v.core_words(), ["apple", "mango", "zebra"]);
    }

    #[test]
    fn core_cap_keeps_most_frequent() {
        // 12,000 distinct words with counts 1..=12,000: brute-force sort of
        // the synthetic counts gives the expected core tier.
        let counts: Vec<(String, u64)> = (1..=12_000u64).map(|c| (format!("w{c:05}"), c)).collect();
        let mut oracle = counts.clone();
        oracle.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let expected: Vec<String> = oracle.into_iter().take(10_000).map(|p| p.0).collect();
        let v = Vocabulary::from_counts(counts, VocabularyConfig::default());
        assert_eq!(v.core_words().len(), 10_000);
        assert_eq!(v.core_words(), expected.as_slice());
        assert_eq!(v.keyword_words().len(), 12_000);
    }

    #[test]
    fn stop_word_only_corpus_is_unusable() {
        let corpus = [doc("the of and")];
        let err = build_vocabulary(&corpus, &StopWords::english(), VocabularyConfig::default()).unwrap_err();
        assert!(matches!(err, EtlError::NoSurvivingWords));
        assert!(matches!(
            build_vocabulary(&[], &StopWords::english(), VocabularyConfig::default()),
            Err(EtlError::EmptyCorpus)
        ));
    }

    #[test]
    fn stop_words_absent_from_tiers() {
        let corpus = [doc("the storm in the gulf of mexico was over")];
        let stop = StopWords::english();
        let v = build_vocabulary(&corpus, &stop, VocabularyConfig::default()).unwrap();
        assert!(v.keyword_words().iter().all(|w| !stop.contains(w)));
    }

    #[test]
    fn save_load_round_trip() {
        let corpus = [doc("storm storm gulf mexico orange orange orange")];
        let v = build_vocabulary(&corpus, &StopWords::english(), VocabularyConfig { core_size: 2, keyword_size: 3 }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocabulary.tsv");
        v.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
    }

    proptest! {
        #[test]
        fn n_tokens_is_sum_of_counts_and_core_prefixes_keyword(
            bodies in proptest::collection::vec("[a-f]{2,3}( [a-f]{2,3}){0,20}", 1..8),
            core in 1usize..10,
            extra in 0usize..10,
        ) {
            let corpus: Vec<RawDocument> = bodies.iter().enumerate().map(|(i, b)| RawDocument {
                doc_id: i.to_string(), title: String::new(), body: b.clone(), entities: vec![],
            }).collect();
            let config = VocabularyConfig { core_size: core, keyword_size: core + extra };
            let v = build_vocabulary(&corpus, &StopWords::empty(), config).unwrap();
            prop_assert_eq!(v.n_tokens(), v.word_counts().map(|(_, c)| c).sum::<u64>());
            prop_assert!(v.keyword_words().starts_with(v.core_words()));
            let again = build_vocabulary(&corpus, &StopWords::empty(), config).unwrap();
            prop_assert_eq!(again, v);
        }
    }
}
