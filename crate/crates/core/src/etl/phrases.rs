use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use super::{TokenId, TokenizedDocument, Vocabulary};
use crate::error::Result;
use crate::format::{join_ids, parse_id_list, TextFile, TextWriter};

/// Observed bigram count minus its count expected under independence.
pub fn bigram_score(n_phrase: u64, n_word1: u64, n_word2: u64, n_tokens: u64) -> f64 {
    n_phrase as f64 - (n_word1 as f64 * n_word2 as f64) / n_tokens as f64
}

/// Trigram analogue of [`bigram_score`].
pub fn trigram_score(n_phrase: u64, n_word1: u64, n_word2: u64, n_word3: u64, n_tokens: u64) -> f64 {
    let n = n_tokens as f64;
    n_phrase as f64 - (n_word1 as f64 * n_word2 as f64 * n_word3 as f64) / (n * n)
}

/// Number of phrases kept for a core vocabulary of `core_len` words,
/// rounding half up.
pub fn phrase_budget(core_len: usize, fraction: f64) -> usize {
    // The epsilon keeps exact halves such as 0.15 * 10 from rounding down.
    (fraction * core_len as f64 + 0.5 + 1e-9).floor().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phrase {
    pub words: Vec<TokenId>,
    pub id: TokenId,
    pub score: f64,
    pub count: u64,
}

/// Kept bigrams and trigrams, each substituted as a single token.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseTable {
    phrases: Vec<Phrase>,
    budget: usize,
    base_id: TokenId,
    lookup: HashMap<Vec<TokenId>, TokenId>,
}

impl PhraseTable {
    fn new(phrases: Vec<Phrase>, budget: usize, base_id: TokenId) -> Self {
        let lookup = phrases.iter().map(|p| (p.words.clone(), p.id)).collect();
        PhraseTable {
            phrases,
            budget,
            base_id,
            lookup,
        }
    }

    pub fn empty(base_id: TokenId) -> Self {
        Self::new(Vec::new(), 0, base_id)
    }

    pub fn phrases(&self) -> &[Phrase] {
        &self.phrases
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn base_id(&self) -> TokenId {
        self.base_id
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn is_phrase(&self, id: TokenId) -> bool {
        id >= self.base_id && ((id - self.base_id) as usize) < self.phrases.len()
    }

    pub fn get(&self, id: TokenId) -> Option<&Phrase> {
        id.checked_sub(self.base_id).and_then(|i| self.phrases.get(i as usize))
    }

    pub fn lookup(&self, words: &[TokenId]) -> Option<TokenId> {
        self.lookup.get(words).copied()
    }

    /// Space-joined surface form of a phrase.
    pub fn text(&self, id: TokenId, vocab: &Vocabulary) -> Option<String> {
        let p = self.get(id)?;
        let words: Option<Vec<&str>> = p.words.iter().map(|&w| vocab.word(w)).collect();
        words.map(|w| w.join(" "))
    }

    /// Greedy left-to-right, longest-match-first substitution.
    pub fn substitute(&self, tokens: &[TokenId]) -> Vec<TokenId> {
        if self.phrases.is_empty() {
            return tokens.to_vec();
        }
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        while i < tokens.len() {
            let hit = [3usize, 2].into_iter().find_map(|n| {
                let window = tokens.get(i..i + n)?;
                self.lookup(window).map(|id| (id, n))
            });
            match hit {
                Some((id, n)) => {
                    out.push(id);
                    i += n;
                }
                None => {
                    out.push(tokens[i]);
                    i += 1;
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        let mut w = TextWriter::new("phrases");
        w.comment("words\tword_ids\tphrase_id\tscore\tcount")
            .meta("budget", self.budget)
            .meta("base_id", self.base_id);
        for p in &self.phrases {
            let text = self.text(p.id, vocab).unwrap_or_default();
            w.row(&[&text, &join_ids(&p.words), &p.id, &p.score, &p.count]);
        }
        w.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = TextFile::read(path, "phrases")?;
        let budget: usize = file.meta("budget")?;
        let base_id: TokenId = file.meta("base_id")?;
        let mut phrases = Vec::with_capacity(file.rows.len());
        for (line, row) in &file.rows {
            let fields: Vec<&str> = row.split('\t').collect();
            let [_, ids, id, score, count] = fields[..] else {
                return Err(file.error(*line, "expected words, word_ids, phrase_id, score, count"));
            };
            let id: TokenId = file.field(*line, id, "phrase id")?;
            if id != base_id + phrases.len() as TokenId {
                return Err(file.error(*line, format!("phrase id {id} out of sequence")));
            }
            phrases.push(Phrase {
                words: parse_id_list(&file, *line, ids)?,
                id,
                score: file.field(*line, score, "score")?,
                count: file.field(*line, count, "count")?,
            });
        }
        Ok(Self::new(phrases, budget, base_id))
    }
}

type NgramCounts = HashMap<Vec<TokenId>, u64>;

fn count_ngrams(corpus: &[TokenizedDocument]) -> NgramCounts {
    corpus
        .par_iter()
        .fold(NgramCounts::new, |mut acc, doc| {
            for n in [2, 3] {
                for w in doc.tokens.windows(n) {
                    *acc.entry(w.to_vec()).or_default() += 1;
                }
            }
            acc
        })
        .reduce(NgramCounts::new, |mut a, b| {
            for (k, c) in b {
                *a.entry(k).or_default() += c;
            }
            a
        })
}

/// Orders candidates by score, then raw count, then the words' text.
pub(crate) fn phrase_order(a: (f64, u64, &str), b: (f64, u64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then_with(|| a.2.cmp(b.2))
}

/// Scores every adjacent bigram and trigram of the token streams and keeps
/// the best positively scoring ones, up to `fraction` of the core size.
pub fn extract_phrases(corpus: &[TokenizedDocument], vocab: &Vocabulary, fraction: f64) -> PhraseTable {
    let budget = phrase_budget(vocab.core_len(), fraction);
    let base_id = vocab.keyword_len() as TokenId;
    let n_tokens = vocab.n_tokens();
    if budget == 0 || n_tokens == 0 {
        return PhraseTable::new(Vec::new(), budget, base_id);
    }

    let mut candidates: Vec<(f64, u64, String, Vec<TokenId>)> = count_ngrams(corpus)
        .into_iter()
        .filter_map(|(words, count)| {
            let c = |i: usize| vocab.count_of(words[i]);
            let score = match words.len() {
                2 => bigram_score(count, c(0), c(1), n_tokens),
                _ => trigram_score(count, c(0), c(1), c(2), n_tokens),
            };
            if score <= 0.0 {
                return None;
            }
            let text: Vec<&str> = words.iter().map(|&w| vocab.word(w).unwrap_or("")).collect();
            Some((score, count, text.join(" "), words))
        })
        .collect();
    candidates.sort_by(|a, b| phrase_order((a.0, a.1, &a.2), (b.0, b.1, &b.2)));
    candidates.truncate(budget);

    let phrases = candidates
        .into_iter()
        .enumerate()
        .map(|(i, (score, count, _, words))| Phrase {
            words,
            id: base_id + i as TokenId,
            score,
            count,
        })
        .collect();
    PhraseTable::new(phrases, budget, base_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::etl::VocabularyConfig;
    use proptest::prelude::*;

    #[test]
    fn bigram_examples() {
        assert_eq!(bigram_score(1, 10, 20, 200), 0.0);
        assert!((bigram_score(50, 60, 70, 100_000) - 49.958).abs() < 1e-12);
        assert_eq!(bigram_score(0, 10, 10, 100), -1.0);
    }

    #[test]
    fn trigram_examples() {
        // 40 * 50 * 20 / 200^2 = 1
        assert_eq!(trigram_score(1, 40, 50, 20, 200), 0.0);
        // 100^3 / 100^2 = 100
        assert_eq!(trigram_score(30, 100, 100, 100, 100), -70.0);
        assert_eq!(trigram_score(30, 100, 100, 100, 1000), 29.0);
        assert_eq!(trigram_score(5, 0, 10, 10, 100), 5.0);
    }

    #[test]
    fn budget_rounds_half_up() {
        assert_eq!(phrase_budget(100, 0.15), 15);
        assert_eq!(phrase_budget(10, 0.15), 2);
        assert_eq!(phrase_budget(3, 0.15), 0);
        assert_eq!(phrase_budget(10_000, 0.15), 1500);
    }

    fn table(entries: &[&[TokenId]]) -> PhraseTable {
        let phrases = entries
            .iter()
            .enumerate()
            .map(|(i, w)| Phrase {
                words: w.to_vec(),
                id: 100 + i as TokenId,
                score: 1.0,
                count: 1,
            })
            .collect();
        PhraseTable::new(phrases, entries.len(), 100)
    }

    #[test]
    fn substitution_replaces_phrase() {
        // [prime, minister, said] with "prime minister"
        let t = table(&[&[0, 1]]);
        assert_eq!(t.substitute(&[0, 1, 2]), vec![100, 2]);
        assert_eq!(t.substitute(&[2, 3, 2]), vec![2, 3, 2]);
    }

    #[test]
    fn trigram_beats_prefix_bigram() {
        let t = table(&[&[0, 1], &[0, 1, 2]]);
        let tokens = [0, 1, 2, 0, 1];
        // Enumerate both substitution orders: bigram-first would give
        // [100, 2, 100]; longest-match gives the trigram at position 0.
        let bigram_first = vec![100, 2, 100];
        let longest = vec![101, 100];
        let got = t.substitute(&tokens);
        assert_eq!(got, longest);
        assert_ne!(got, bigram_first);
    }

    fn tokenized(docs: &[Vec<TokenId>]) -> Vec<TokenizedDocument> {
        docs.iter()
            .enumerate()
            .map(|(i, t)| TokenizedDocument {
                doc_id: i.to_string(),
                title: String::new(),
                tokens: t.clone(),
            })
            .collect()
    }

    fn vocab_for(docs: &[Vec<TokenId>], names: &[&str]) -> Vocabulary {
        // Ranks must equal the ids used in the docs, so build counts then
        // re-map docs by rank in the caller.
        let mut counts: HashMap<String, u64> = HashMap::new();
        for d in docs {
            for &t in d {
                *counts.entry(names[t as usize].to_string()).or_default() += 1;
            }
        }
        Vocabulary::from_counts(counts, VocabularyConfig::default())
    }

    fn remap(docs: &[Vec<TokenId>], names: &[&str], vocab: &Vocabulary) -> Vec<Vec<TokenId>> {
        docs.iter()
            .map(|d| d.iter().map(|&t| vocab.id_in(names[t as usize], crate::etl::Tier::Core).unwrap()).collect())
            .collect()
    }

    #[test]
    fn repeated_single_word_yields_no_phrases() {
        let docs = vec![vec![0; 10]];
        let names = ["w"];
        let vocab = vocab_for(&docs, &names);
        let table = extract_phrases(&tokenized(&remap(&docs, &names, &vocab)), &vocab, 1.0);
        assert!(table.is_empty());
    }

    #[test]
    fn budget_caps_phrase_count() {
        let names: Vec<String> = (0..100).map(|i| format!("w{i:03}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let docs: Vec<Vec<TokenId>> = (0..100).map(|d| (0..100).map(|i| ((i * 7 + d) % 100) as TokenId).collect()).collect();
        let vocab = vocab_for(&docs, &names);
        let table = extract_phrases(&tokenized(&remap(&docs, &names, &vocab)), &vocab, 0.15);
        assert_eq!(table.budget(), 15);
        assert!(table.len() <= 15);
    }

    #[test]
    fn cooccurring_pair_ranks_first() {
        // 50 documents; "hong kong" always together, other words random.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let names = ["hong", "kong", "market", "rose", "trade", "talk", "bank", "rate"];
        let mut docs = Vec::new();
        for d in 0..50u32 {
            let mut t: Vec<TokenId> = (0..6).map(|_| rng.random_range(2..8)).collect();
            if d % 2 == 0 {
                t.insert((d % 5) as usize, 0);
                t.insert((d % 5) as usize + 1, 1);
            }
            docs.push(t);
        }
        let vocab = vocab_for(&docs, &names);
        let table = extract_phrases(&tokenized(&remap(&docs, &names, &vocab)), &vocab, 0.5);
        let first = &table.phrases()[0];
        assert_eq!(table.text(first.id, &vocab).unwrap(), "hong kong");
    }

    /// Exhaustive oracle: enumerate every word pair and triple, count it by
    /// scanning the documents, score, filter and sort.
    fn oracle(docs: &[Vec<TokenId>], vocab: &Vocabulary, fraction: f64) -> Vec<(Vec<TokenId>, f64, u64)> {
        let w = vocab.core_len() as TokenId;
        let occurrences = |pat: &[TokenId]| -> u64 {
            docs.iter()
                .map(|d| (0..d.len()).filter(|&i| d[i..].starts_with(pat)).count() as u64)
                .sum()
        };
        let n = vocab.n_tokens();
        let mut all = Vec::new();
        for a in 0..w {
            for b in 0..w {
                let c = occurrences(&[a, b]);
                let s = c as f64 - (vocab.count_of(a) * vocab.count_of(b)) as f64 / n as f64;
                all.push((vec![a, b], s, c));
                for x in 0..w {
                    let c = occurrences(&[a, b, x]);
                    let prod = (vocab.count_of(a) * vocab.count_of(b) * vocab.count_of(x)) as f64;
                    all.push((vec![a, b, x], c as f64 - prod / (n as f64 * n as f64), c));
                }
            }
        }
        let mut kept: Vec<_> = all.into_iter().filter(|p| p.1 > 0.0).collect();
        let text = |ids: &[TokenId]| ids.iter().map(|&i| vocab.word(i).unwrap()).collect::<Vec<_>>().join(" ");
        kept.sort_by(|a, b| phrase_order((a.1, a.2, &text(&a.0)), (b.1, b.2, &text(&b.0))));
        kept.truncate(phrase_budget(vocab.core_len(), fraction));
        kept
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn matches_exhaustive_oracle(
            docs in proptest::collection::vec(proptest::collection::vec(0u32..6, 0..30), 1..20),
            fraction in 0.2f64..3.0,
        ) {
            let names = ["aa", "bb", "cc", "dd", "ee", "ff"];
            prop_assume!(docs.iter().any(|d| !d.is_empty()));
            let vocab = vocab_for(&docs, &names);
            let docs = remap(&docs, &names, &vocab);
            let table = extract_phrases(&tokenized(&docs), &vocab, fraction);
            let expected = oracle(&docs, &vocab, fraction);
            let got: Vec<_> = table.phrases().iter().map(|p| (p.words.clone(), p.score, p.count)).collect();
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn substitution_never_grows(tokens in proptest::collection::vec(0u32..4, 0..40)) {
            let t = table(&[&[0, 1], &[1, 2, 3], &[2, 2]]);
            let out = t.substitute(&tokens);
            prop_assert!(out.len() <= tokens.len());
            // Expanding the phrases back reproduces the input.
            let expanded: Vec<TokenId> = out.iter().flat_map(|&id| match t.get(id) {
                Some(p) => p.words.clone(),
                None => vec![id],
            }).collect();
            prop_assert_eq!(expanded, tokens);
        }

        #[test]
        fn zero_when_counts_cancel(a in 1u64..2000, b in 1u64..2000, k in 1u64..50) {
            // n_word1 = a*k, n_word2 = b, n_tokens = a gives an expected count of b*k.
            prop_assert_eq!(bigram_score(b * k, a * k, b, a), 0.0);
            prop_assert_eq!(trigram_score(b * k, a * k, b, a, a), 0.0);
        }
    }
}
