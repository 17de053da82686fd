//! Corpus extract-transform-load: raw documents to vocabulary, token
//! streams and the phrase table.

pub(crate) mod corpus;
mod phrases;
mod vocab;

pub use corpus::{load_corpus, parse_jsonl, RawDocument};
pub use phrases::{bigram_score, phrase_budget, trigram_score, extract_phrases, Phrase, PhraseTable};
pub use vocab::{build_vocabulary, Tier, Vocabulary, VocabularyConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{normalize, StopWords};

/// Token ids share one space: word ids are vocabulary ranks and phrase ids
/// start right after the keyword tier.
pub type TokenId = u32;

#[derive(Debug, Error)]
pub enum EtlError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no words survive stop-word filtering; corpus is unusable")]
    NoSurvivingWords,
    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),
    #[error("document {0:?} has an empty body")]
    EmptyBody(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A document as an ordered list of token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub doc_id: String,
    pub title: String,
    pub tokens: Vec<TokenId>,
}

impl TokenizedDocument {
    /// True when no token survived normalization.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Maps a document body onto word ids of the chosen tier. Stop words and
/// lemmas outside the tier are dropped; source order is preserved.
pub fn tokenize_tier(doc: &RawDocument, vocab: &Vocabulary, stop_words: &StopWords, tier: Tier) -> TokenizedDocument {
    let tokens = normalize(&doc.body, stop_words)
        .filter_map(|lemma| vocab.id_in(&lemma, tier))
        .collect();
    TokenizedDocument {
        doc_id: doc.doc_id.clone(),
        title: doc.title.clone(),
        tokens,
    }
}

/// Tokenizes against the core vocabulary.
pub fn tokenize(doc: &RawDocument, vocab: &Vocabulary, stop_words: &StopWords) -> TokenizedDocument {
    tokenize_tier(doc, vocab, stop_words, Tier::Core)
}

/// Greedy left-to-right, longest-match-first phrase substitution.
pub fn apply_phrases(doc: &TokenizedDocument, table: &PhraseTable) -> TokenizedDocument {
    TokenizedDocument {
        doc_id: doc.doc_id.clone(),
        title: doc.title.clone(),
        tokens: table.substitute(&doc.tokens),
    }
}
