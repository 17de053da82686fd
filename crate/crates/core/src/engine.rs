//! The on-disk index and the operations served over it.
//!
//! An index directory holds:
//!
//! | file | contents |
//! |---|---|
//! | `index.json` | manifest: sizes and build parameters |
//! | `documents.jsonl` | the raw documents |
//! | `stopwords.txt` | stop list used at build time |
//! | `vocabulary.tsv`, `phrases.tsv` | ranked words and the phrase table |
//! | `tokens.tsv` | core-tier streams with phrases substituted (topic model input) |
//! | `keyword_tokens.tsv` | keyword-tier streams with phrases substituted |
//! | `structure.tsv`, `entities.jsonl` | knowledge structure and per-document entity mass |
//! | `model.tsv` | trained topic model |
//! | `registry.json` | user topics and roles |

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entities::{EntityRelevance, EntityStore, Exclusions, KnowledgeStructure};
use crate::error::{Error, Result};
use crate::etl::{
    apply_phrases, build_vocabulary, extract_phrases, tokenize_tier, PhraseTable, RawDocument, Tier, TokenizedDocument,
    Vocabulary, VocabularyConfig,
};
use crate::eval::{EvalQuery, EvalError, Strategy};
use crate::format::{join_ids, parse_id_list, write_atomic, TextFile, TextWriter, FORMAT_VERSION};
use crate::keyword::{parse_query, KeywordIndex, DEFAULT_MU};
use crate::lda::{train_with, LdaConfig, SweepStats, TermSpace, TopicModel};
use crate::registry::Registry;
use crate::role::{entity_scores, role_search, CombinedHit, Role, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2};
use crate::text::StopWords;
use crate::topics::{
    self, calibrate, raw_distances, refresh, select_boundary, suggest_for_topic, topic_scores, BoundaryJudgment,
    TopicContext, TopicError, UserTopic, DEFAULT_CLEAR_HITS,
};

pub const MANIFEST_FILE: &str = "index.json";
pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const VOCABULARY_FILE: &str = "vocabulary.tsv";
pub const PHRASES_FILE: &str = "phrases.tsv";
pub const TOKENS_FILE: &str = "tokens.tsv";
pub const KEYWORD_TOKENS_FILE: &str = "keyword_tokens.tsv";
pub const STRUCTURE_FILE: &str = "structure.tsv";
pub const ENTITIES_FILE: &str = "entities.jsonl";
pub const MODEL_FILE: &str = "model.tsv";
pub const REGISTRY_FILE: &str = "registry.json";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtlConfig {
    pub vocabulary: VocabularyConfig,
    pub phrase_fraction: f64,
    pub mu: f64,
}

impl Default for EtlConfig {
    fn default() -> Self {
        EtlConfig {
            vocabulary: VocabularyConfig::default(),
            phrase_fraction: 0.15,
            mu: DEFAULT_MU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureInfo {
    pub nodes: usize,
    pub edges: usize,
    pub labeled_docs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub config: LdaConfig,
    pub n_terms: usize,
    pub n_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub n_docs: usize,
    pub empty_docs: usize,
    pub n_tokens: u64,
    pub vocabulary_words: usize,
    pub core_len: usize,
    pub keyword_len: usize,
    pub n_phrases: usize,
    pub phrase_base: u32,
    pub phrase_fraction: f64,
    pub mu: f64,
    pub structure: Option<StructureInfo>,
    pub model: Option<ModelInfo>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.line(), e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::format(&path, 1, format!("unsupported format version {}", m.format_version)));
        }
        Ok(m)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())
    }
}

fn save_tokens(path: &Path, tier: &str, docs: &[TokenizedDocument]) -> Result<()> {
    let mut w = TextWriter::new("tokens");
    w.comment("doc_id\ttoken ids").meta("tier", tier).meta("docs", docs.len());
    for d in docs {
        w.row(&[&d.doc_id, &join_ids(&d.tokens)]);
    }
    w.save(path)
}

fn load_tokens(path: &Path, documents: &[RawDocument]) -> Result<Vec<TokenizedDocument>> {
    let file = TextFile::read(path, "tokens")?;
    if file.rows.len() != documents.len() {
        return Err(Error::Inconsistent(format!(
            "{} has {} rows for {} documents",
            path.display(),
            file.rows.len(),
            documents.len()
        )));
    }
    file.rows
        .iter()
        .zip(documents)
        .map(|((line, row), doc)| {
            let (id, ids) = row.split_once('\t').unwrap_or((row.as_str(), ""));
            if id != doc.doc_id {
                return Err(file.error(*line, format!("expected doc {:?}, found {id:?}", doc.doc_id)));
            }
            Ok(TokenizedDocument {
                doc_id: doc.doc_id.clone(),
                title: doc.title.clone(),
                tokens: parse_id_list(&file, *line, ids)?,
            })
        })
        .collect()
}

fn load_documents(dir: &Path) -> Result<Vec<RawDocument>> {
    let path = dir.join(DOCUMENTS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(crate::etl::parse_jsonl(&text, &path.display().to_string())?)
}

/// Builds vocabulary, phrase table and token streams for `corpus` and
/// writes a fresh index into `out`.
pub fn run_etl(corpus: Vec<RawDocument>, stop_words: &StopWords, config: &EtlConfig, out: &Path) -> Result<Manifest> {
    crate::etl::corpus::validate(&corpus)?;
    let vocab = build_vocabulary(&corpus, stop_words, config.vocabulary)?;
    let core: Vec<TokenizedDocument> = corpus
        .par_iter()
        .map(|d| tokenize_tier(d, &vocab, stop_words, Tier::Core))
        .collect();
    let phrases = extract_phrases(&core, &vocab, config.phrase_fraction);
    let core: Vec<TokenizedDocument> = core.par_iter().map(|d| apply_phrases(d, &phrases)).collect();
    let keyword: Vec<TokenizedDocument> = corpus
        .par_iter()
        .map(|d| apply_phrases(&tokenize_tier(d, &vocab, stop_words, Tier::Keyword), &phrases))
        .collect();
    KeywordIndex::build(&keyword, config.mu)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let docs: String = corpus
        .iter()
        .map(|d| serde_json::to_string(d).expect("document serializes") + "\n")
        .collect();
    write_atomic(&out.join(DOCUMENTS_FILE), docs.as_bytes())?;
    write_atomic(&out.join(STOPWORDS_FILE), stop_words.to_text().as_bytes())?;
    vocab.save(&out.join(VOCABULARY_FILE))?;
    phrases.save(&out.join(PHRASES_FILE), &vocab)?;
    save_tokens(&out.join(TOKENS_FILE), "core", &core)?;
    save_tokens(&out.join(KEYWORD_TOKENS_FILE), "keyword", &keyword)?;
    for stale in [STRUCTURE_FILE, ENTITIES_FILE, MODEL_FILE] {
        let _ = std::fs::remove_file(out.join(stale));
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        n_docs: corpus.len(),
        empty_docs: keyword.iter().filter(|d| d.is_empty()).count(),
        n_tokens: vocab.n_tokens(),
        vocabulary_words: vocab.word_counts().count(),
        core_len: vocab.core_len(),
        keyword_len: vocab.keyword_len(),
        n_phrases: phrases.len(),
        phrase_base: phrases.base_id(),
        phrase_fraction: config.phrase_fraction,
        mu: config.mu,
        structure: None,
        model: None,
    };
    manifest.save(out)?;
    Ok(manifest)
}

/// Labels every indexed document against `ks` and stores the structure
/// and the entity distributions in the index.
pub fn attach_structure(dir: &Path, ks: &KnowledgeStructure) -> Result<Manifest> {
    let mut manifest = Manifest::load(dir)?;
    let documents = load_documents(dir)?;
    let store = EntityStore::build(&documents, ks);
    ks.save(&dir.join(STRUCTURE_FILE))?;
    store.save(&dir.join(ENTITIES_FILE))?;
    manifest.structure = Some(StructureInfo {
        nodes: ks.nodes().len(),
        edges: ks.edges().len(),
        labeled_docs: store.docs().iter().filter(|r| !r.is_empty()).count(),
    });
    manifest.save(dir)?;
    Ok(manifest)
}

/// Trains the topic model on the core token streams and stores it.
pub fn train_topics(dir: &Path, config: &LdaConfig, on_sweep: impl FnMut(usize, SweepStats)) -> Result<Manifest> {
    let mut manifest = Manifest::load(dir)?;
    let documents = load_documents(dir)?;
    let core = load_tokens(&dir.join(TOKENS_FILE), &documents)?;
    let space = TermSpace::new(manifest.core_len, manifest.phrase_base, manifest.n_phrases);
    let corpus = space.corpus(&core)?;
    let model = train_with(&corpus, config, on_sweep)?;
    model.save(&dir.join(MODEL_FILE), true)?;
    manifest.model = Some(ModelInfo {
        config: *config,
        n_terms: space.n_terms(),
        n_tokens: corpus.n_tokens(),
    });
    manifest.save(dir)?;
    Ok(manifest)
}

/// Everything read-only about an index, loaded into memory.
pub struct Index {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub documents: Vec<RawDocument>,
    pub vocab: Vocabulary,
    pub phrases: PhraseTable,
    pub stop_words: StopWords,
    pub keyword: KeywordIndex,
    pub space: TermSpace,
    pub model: Option<TopicModel>,
    pub structure: Option<KnowledgeStructure>,
    pub entities: Option<EntityStore>,
    positions: HashMap<String, usize>,
}

impl Index {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Manifest::load(dir)?;
        let documents = load_documents(dir)?;
        let vocab = Vocabulary::load(&dir.join(VOCABULARY_FILE))?;
        let phrases = PhraseTable::load(&dir.join(PHRASES_FILE))?;
        let stop_path = dir.join(STOPWORDS_FILE);
        let stop_words = StopWords::from_file(&stop_path).map_err(|e| Error::io(&stop_path, e))?;
        let keyword_docs = load_tokens(&dir.join(KEYWORD_TOKENS_FILE), &documents)?;
        let keyword = KeywordIndex::build(&keyword_docs, manifest.mu)?;
        let space = TermSpace::new(vocab.core_len(), phrases.base_id(), phrases.len());
        if documents.len() != manifest.n_docs || phrases.base_id() != manifest.phrase_base {
            return Err(Error::Inconsistent("manifest does not match the index files".into()));
        }
        let model = match dir.join(MODEL_FILE) {
            p if p.exists() => {
                let m = TopicModel::load(&p)?;
                if m.n_docs() != documents.len() || m.n_words() != space.n_terms() {
                    return Err(Error::Inconsistent("topic model was trained on a different index".into()));
                }
                Some(m)
            }
            _ => None,
        };
        let structure = match dir.join(STRUCTURE_FILE) {
            p if p.exists() => Some(crate::entities::load_structure(&p, &Exclusions::none())?),
            _ => None,
        };
        let entities = match dir.join(ENTITIES_FILE) {
            p if p.exists() => Some(EntityStore::load(&p)?),
            _ => None,
        };
        let positions = documents.iter().enumerate().map(|(i, d)| (d.doc_id.clone(), i)).collect();
        Ok(Index {
            dir: dir.to_path_buf(),
            manifest,
            documents,
            vocab,
            phrases,
            stop_words,
            keyword,
            space,
            model,
            structure,
            entities,
            positions,
        })
    }

    pub fn document(&self, doc_id: &str) -> Result<&RawDocument> {
        self.positions
            .get(doc_id)
            .map(|&i| &self.documents[i])
            .ok_or_else(|| Error::NotFound {
                kind: "document",
                id: doc_id.to_string(),
            })
    }

    pub fn model(&self) -> Result<&TopicModel> {
        self.model.as_ref().ok_or(Error::Missing("topic model (run train)"))
    }

    pub fn structure(&self) -> Result<(&KnowledgeStructure, &EntityStore)> {
        match (&self.structure, &self.entities) {
            (Some(ks), Some(store)) => Ok((ks, store)),
            _ => Err(Error::Missing("knowledge structure (run entities)")),
        }
    }

    pub fn topic_context(&self) -> Result<TopicContext<'_>> {
        Ok(TopicContext {
            model: self.model()?,
            space: self.space,
            vocab: &self.vocab,
            phrases: &self.phrases,
            index: &self.keyword,
            stop_words: &self.stop_words,
        })
    }

    /// The `n` most frequent terms of every model topic.
    pub fn model_topics(&self, n: usize) -> Result<Vec<Vec<String>>> {
        let model = self.model()?;
        let ctx = self.topic_context()?;
        let names: Vec<String> = (0..model.n_words() as u32).map(|w| ctx.term_text(self.space.token(w))).collect();
        Ok((0..model.n_topics())
            .map(|j| model.top_words(j, n, &names).into_iter().map(|(w, _)| names[w as usize].clone()).collect())
            .collect())
    }

    /// Ranks under an explicit role. `topic` must be the role's topic when
    /// it has one.
    pub fn search_with_role(&self, query: &str, role: &Role, topic: Option<&UserTopic>, k: usize) -> Result<Vec<CombinedHit>> {
        let parsed = parse_query(query, &self.vocab, &self.phrases, &self.stop_words);
        let topic_scores = match (&role.user_topic, topic) {
            (Some(_), Some(t)) => Some(topic_scores(t, self.model()?)?),
            (Some(id), None) => return Err(Error::NotFound { kind: "topic", id: id.clone() }),
            (None, _) => None,
        };
        let entity_scores = match &role.entity_target {
            Some(target) => {
                let (ks, store) = self.structure()?;
                Some(entity_scores(&self.keyword, store, target, ks)?)
            }
            None => None,
        };
        Ok(role_search(&parsed, role, &self.keyword, topic_scores.as_deref(), entity_scores.as_deref(), k)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub rank: usize,
    pub title: String,
    #[serde(flatten)]
    pub hit: CombinedHit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub terms: Vec<String>,
    pub out_of_vocabulary: Vec<String>,
    pub role: Option<Role>,
    pub hits: Vec<SearchHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentInfo {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    pub entities: Option<EntityRelevance>,
    pub topic_distribution: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDoc {
    pub doc_id: String,
    pub title: String,
    pub raw_distance: f64,
    pub corrected_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub word: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub manifest: Manifest,
    pub registry_version: u64,
    pub topics: usize,
    pub roles: usize,
}

/// A registry object together with the registry version its write produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub version: u64,
    #[serde(flatten)]
    pub item: T,
}

/// An index plus its topic and role registry. Reads run concurrently;
/// registry writes are serialized and persisted before they become
/// visible.
pub struct Engine {
    index: Index,
    registry: RwLock<Registry>,
    registry_path: PathBuf,
}

impl Engine {
    pub fn open(dir: &Path) -> Result<Self> {
        let index = Index::load(dir)?;
        let registry_path = dir.join(REGISTRY_FILE);
        let registry = Registry::load(&registry_path)?;
        Ok(Engine {
            index,
            registry: RwLock::new(registry),
            registry_path,
        })
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    /// A copy of the registry as of now.
    pub fn registry(&self) -> Registry {
        self.registry.read().expect("registry lock").clone()
    }

    fn write<T>(&self, expected: Option<u64>, f: impl FnOnce(&mut Registry) -> Result<T>) -> Result<Versioned<T>> {
        let mut guard = self.registry.write().expect("registry lock");
        if let Some(v) = expected {
            if v != guard.version() {
                return Err(crate::registry::RegistryError::StaleVersion {
                    expected: v,
                    actual: guard.version(),
                }
                .into());
            }
        }
        let mut next = guard.clone();
        let out = f(&mut next)?;
        next.save(&self.registry_path)?;
        let version = next.version();
        *guard = next;
        Ok(Versioned { version, item: out })
    }

    pub fn stats(&self) -> Stats {
        let reg = self.registry.read().expect("registry lock");
        Stats {
            manifest: self.index.manifest.clone(),
            registry_version: reg.version(),
            topics: reg.topics().count(),
            roles: reg.roles().count(),
        }
    }

    /// Keyword search, or role search when `role_id` is given.
    pub fn search(&self, query: &str, role_id: Option<&str>, k: usize) -> Result<SearchResponse> {
        let reg = self.registry();
        let role = match role_id {
            Some(id) => Some(reg.role(id)?.clone()),
            None => None,
        };
        let effective = role.clone().unwrap_or_else(|| Role::keyword_only("keyword"));
        let topic = match &effective.user_topic {
            Some(t) => Some(reg.topic(t)?),
            None => None,
        };
        let parsed = parse_query(query, &self.index.vocab, &self.index.phrases, &self.index.stop_words);
        let hits = self.index.search_with_role(query, &effective, topic, k)?;
        Ok(SearchResponse {
            query: query.to_string(),
            terms: parsed.terms.iter().filter(|t| t.id.is_some()).map(|t| t.text.clone()).collect(),
            out_of_vocabulary: parsed.out_of_vocabulary(),
            role,
            hits: hits
                .into_iter()
                .enumerate()
                .map(|(i, hit)| SearchHit {
                    rank: i + 1,
                    title: self.index.document(&hit.doc_id).map(|d| d.title.clone()).unwrap_or_default(),
                    hit,
                })
                .collect(),
        })
    }

    pub fn document(&self, doc_id: &str) -> Result<DocumentInfo> {
        let doc = self.index.document(doc_id)?;
        let topic_distribution = match (&self.index.model, self.index.keyword.doc_index(doc_id)) {
            (Some(m), Some(d)) => Some(m.doc_topics(d as usize)?.0),
            _ => None,
        };
        Ok(DocumentInfo {
            doc_id: doc.doc_id.clone(),
            title: doc.title.clone(),
            body: doc.body.clone(),
            entities: self.index.entities.as_ref().and_then(|s| s.get(doc_id).cloned()),
            topic_distribution,
        })
    }

    /// The `n` most frequent terms of every model topic.
    pub fn model_topics(&self, n: usize) -> Result<Vec<Vec<String>>> {
        self.index.model_topics(n)
    }

    fn canonical(&self, ctx: &TopicContext, words: &[String]) -> Result<Vec<String>, TopicError> {
        words.iter().map(|w| ctx.resolve_term(w).map(|id| ctx.term_text(id))).collect()
    }

    /// Creates a draft topic from seed words. The centroid is built right
    /// away when the seeds already have clear hits.
    pub fn create_topic(&self, name: &str, seeds: &[String], expected: Option<u64>) -> Result<Versioned<UserTopic>> {
        let ctx = self.index.topic_context()?;
        let seeds = self.canonical(&ctx, seeds)?;
        self.write(expected, |reg| {
            let mut topic = UserTopic::new(&reg.next_topic_id(), name, &seeds)?;
            match refresh(&mut topic, &ctx, DEFAULT_CLEAR_HITS) {
                Ok(()) | Err(TopicError::NoClearHits | TopicError::NoAcceptedWords) => {}
                Err(e) => return Err(e.into()),
            }
            reg.put_topic(topic.clone(), None)?;
            Ok(topic)
        })
    }

    pub fn topic(&self, topic_id: &str) -> Result<UserTopic> {
        Ok(self.registry().topic(topic_id)?.clone())
    }

    pub fn suggestions(&self, topic_id: &str, n: usize) -> Result<Vec<Suggestion>> {
        let topic = self.topic(topic_id)?;
        let ctx = self.index.topic_context()?;
        Ok(suggest_for_topic(&topic, &ctx, n)?
            .into_iter()
            .map(|(word, distance)| Suggestion { word, distance })
            .collect())
    }

    /// Applies word judgments and rebuilds the clear hits and centroid.
    pub fn judge_words(&self, topic_id: &str, accept: &[String], reject: &[String], expected: Option<u64>) -> Result<Versioned<UserTopic>> {
        let ctx = self.index.topic_context()?;
        let accept = self.canonical(&ctx, accept)?;
        let reject = self.canonical(&ctx, reject)?;
        self.write(expected, |reg| {
            let mut topic = reg.topic(topic_id)?.clone();
            for w in &accept {
                topic.judge_word(w, true);
            }
            for w in &reject {
                topic.judge_word(w, false);
            }
            refresh(&mut topic, &ctx, DEFAULT_CLEAR_HITS)?;
            reg.put_topic(topic.clone(), None)?;
            Ok(topic)
        })
    }

    pub fn boundary(&self, topic_id: &str, band: usize) -> Result<Vec<BoundaryDoc>> {
        let topic = self.topic(topic_id)?;
        let ctx = self.index.topic_context()?;
        let raw = raw_distances(&topic, ctx.model)?;
        Ok(select_boundary(&topic, &ctx, band)?
            .into_iter()
            .map(|d| {
                let doc = &self.index.documents[d as usize];
                BoundaryDoc {
                    doc_id: doc.doc_id.clone(),
                    title: doc.title.clone(),
                    raw_distance: raw[d as usize],
                    corrected_distance: raw[d as usize] - topic.correction,
                }
            })
            .collect())
    }

    pub fn calibrate(&self, topic_id: &str, judgments: &[BoundaryJudgment], expected: Option<u64>) -> Result<Versioned<UserTopic>> {
        let ctx = self.index.topic_context()?;
        self.write(expected, |reg| {
            let mut topic = reg.topic(topic_id)?.clone();
            calibrate(&mut topic, judgments, &ctx)?;
            reg.put_topic(topic.clone(), None)?;
            Ok(topic)
        })
    }

    /// Documents ordered by corrected distance to a calibrated topic.
    pub fn topic_ranking(&self, topic_id: &str, k: usize) -> Result<Vec<BoundaryDoc>> {
        let topic = self.topic(topic_id)?;
        let model = self.index.model()?;
        let raw = raw_distances(&topic, model)?;
        let scores = topics::topic_scores(&topic, model)?;
        Ok(crate::keyword::top_k(&scores, self.index.keyword.doc_ids(), k)
            .into_iter()
            .map(|d| {
                let doc = &self.index.documents[d as usize];
                BoundaryDoc {
                    doc_id: doc.doc_id.clone(),
                    title: doc.title.clone(),
                    raw_distance: raw[d as usize],
                    corrected_distance: raw[d as usize] - topic.correction,
                }
            })
            .collect())
    }

    /// Creates a role. Weights default to 0.07 for the topic and 0.90 for
    /// the entity target when those are given. The target may be a node id
    /// or name and is stored as the node id.
    pub fn create_role(
        &self,
        name: &str,
        entity: Option<&str>,
        topic: Option<&str>,
        lambda1: Option<f64>,
        lambda2: Option<f64>,
        expected: Option<u64>,
    ) -> Result<Versioned<Role>> {
        let target = match entity {
            Some(e) => {
                let (ks, _) = self.index.structure()?;
                let node = ks
                    .resolve(e)
                    .ok_or_else(|| crate::entities::StructureError::UnknownTarget(e.to_string()))?;
                Some(node.id.clone())
            }
            None => None,
        };
        let l1 = lambda1.unwrap_or(if topic.is_some() { DEFAULT_LAMBDA1 } else { 0.0 });
        let l2 = lambda2.unwrap_or(if target.is_some() { DEFAULT_LAMBDA2 } else { 0.0 });
        self.write(expected, |reg| {
            let role = Role::new(&reg.next_role_id(), name, target, topic.map(str::to_string), l1, l2)?;
            reg.put_role(role.clone(), None)?;
            Ok(role)
        })
    }

    /// Adds a fully specified role (id included), replacing any role with
    /// the same id.
    pub fn put_role(&self, role: Role, expected: Option<u64>) -> Result<u64> {
        role.validate()?;
        if let Some(target) = &role.entity_target {
            let (ks, _) = self.index.structure()?;
            if ks.node(target).is_none() {
                return Err(crate::entities::StructureError::UnknownTarget(target.clone()).into());
            }
        }
        Ok(self.write(expected, |reg| Ok(reg.put_role(role, None)?))?.version)
    }

    /// Adds a fully specified topic, replacing any topic with the same id.
    pub fn put_topic(&self, topic: UserTopic, expected: Option<u64>) -> Result<u64> {
        Ok(self.write(expected, |reg| Ok(reg.put_topic(topic, None)?))?.version)
    }

    /// Evaluation strategy by name: `keyword`, `keyword+location` (the
    /// query's location appended to its text), `keyword+entity` (the
    /// location as entity target) or `role` (the query's registry role).
    pub fn strategy(&self, name: &str) -> Result<EngineStrategy<'_>, EvalError> {
        let kind = match name {
            "keyword" => StrategyKind::Keyword,
            "keyword+location" => StrategyKind::KeywordLocation,
            "keyword+entity" => StrategyKind::KeywordEntity,
            "role" => StrategyKind::Role,
            other => return Err(EvalError::UnknownStrategy(other.to_string())),
        };
        Ok(EngineStrategy {
            engine: self,
            name: name.to_string(),
            kind,
            registry: self.registry(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StrategyKind {
    Keyword,
    KeywordLocation,
    KeywordEntity,
    Role,
}

pub struct EngineStrategy<'a> {
    engine: &'a Engine,
    name: String,
    kind: StrategyKind,
    registry: Registry,
}

impl EngineStrategy<'_> {
    fn run(&self, q: &EvalQuery, k: usize) -> Result<Vec<CombinedHit>> {
        let index = &self.engine.index;
        let location = || {
            q.location
                .as_deref()
                .ok_or(Error::NotFound { kind: "location for query", id: q.query_id.clone() })
        };
        match self.kind {
            StrategyKind::Keyword => index.search_with_role(&q.text, &Role::keyword_only("keyword"), None, k),
            StrategyKind::KeywordLocation => {
                index.search_with_role(&format!("{} {}", q.text, location()?), &Role::keyword_only("keyword"), None, k)
            }
            StrategyKind::KeywordEntity => {
                let (ks, _) = index.structure()?;
                let target = ks
                    .resolve(location()?)
                    .ok_or_else(|| crate::entities::StructureError::UnknownTarget(location().unwrap_or("").to_string()))?;
                let role = Role::new("keyword+entity", "keyword+entity", Some(target.id.clone()), None, 0.0, DEFAULT_LAMBDA2)?;
                index.search_with_role(&q.text, &role, None, k)
            }
            StrategyKind::Role => {
                let id = q.role.as_deref().ok_or(Error::NotFound { kind: "role for query", id: q.query_id.clone() })?;
                let role = self.registry.role(id)?;
                let topic = match &role.user_topic {
                    Some(t) => Some(self.registry.topic(t)?),
                    None => None,
                };
                index.search_with_role(&q.text, role, topic, k)
            }
        }
    }
}

impl Strategy for EngineStrategy<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn rank(&self, query: &EvalQuery, k: usize) -> std::result::Result<Vec<String>, String> {
        self.run(query, k)
            .map(|hits| hits.into_iter().map(|h| h.doc_id).collect())
            .map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};

    fn small_index() -> (tempfile::TempDir, crate::synth::SynthCorpus) {
        let corpus = generate(&SynthSpec {
            docs_per_cell: 8,
            ..SynthSpec::default()
        });
        let dir = tempfile::tempdir().unwrap();
        run_etl(corpus.documents.clone(), &StopWords::english(), &EtlConfig::default(), dir.path()).unwrap();
        attach_structure(dir.path(), corpus.structure.as_ref().unwrap()).unwrap();
        let config = LdaConfig {
            n_sweeps: 30,
            ..LdaConfig::with_topics(3)
        };
        train_topics(dir.path(), &config, |_, _| {}).unwrap();
        (dir, corpus)
    }

    #[test]
    fn index_round_trip_and_search() {
        let (dir, corpus) = small_index();
        let engine = Engine::open(dir.path()).unwrap();
        let m = &engine.index().manifest;
        assert_eq!(m.n_docs, 72);
        assert!(m.structure.is_some() && m.model.is_some());
        let q = &corpus.query_words[0][0];
        let res = engine.search(q, None, 5).unwrap();
        assert_eq!(res.hits.len(), 5);
        assert_eq!(res.terms, vec![q.clone()]);
        assert!(res.hits.windows(2).all(|w| w[0].hit.combined >= w[1].hit.combined));
        let doc = engine.document(&res.hits[0].hit.doc_id).unwrap();
        assert_eq!(doc.topic_distribution.unwrap().len(), 3);
        assert!(doc.entities.is_some());
        assert!(matches!(engine.document("nope"), Err(Error::NotFound { .. })));
        assert!(matches!(engine.search("the of", None, 5), Err(Error::Role(_))));
    }

    #[test]
    fn topic_and_role_workflow_persists() {
        let (dir, corpus) = small_index();
        let engine = Engine::open(dir.path()).unwrap();
        let seed = corpus.topic_words[0][0].clone();
        let created = engine.create_topic("disasters", &[seed], Some(0)).unwrap();
        assert_eq!(created.version, 1);
        let topic = created.item;
        assert!(topic.centroid.is_some());
        let suggestions = engine.suggestions(&topic.topic_id, 3).unwrap();
        assert_eq!(suggestions.len(), 3);
        let accept: Vec<String> = suggestions.iter().map(|s| s.word.clone()).collect();
        let topic = engine.judge_words(&topic.topic_id, &accept, &[], None).unwrap().item;
        let boundary = engine.boundary(&topic.topic_id, 72).unwrap();
        let judgments: Vec<BoundaryJudgment> = boundary
            .iter()
            .map(|b| BoundaryJudgment {
                doc_id: b.doc_id.clone(),
                relevant: corpus.labels.iter().any(|l| l.doc_id == b.doc_id && l.topic == 0),
            })
            .collect();
        let topic = engine.calibrate(&topic.topic_id, &judgments, None).unwrap().item;
        let stale = engine.calibrate(&topic.topic_id, &judgments, Some(0));
        assert!(matches!(stale, Err(Error::Registry(_))));

        let region = &corpus.region_names[0];
        let role = engine.create_role("analyst", Some(region), Some(&topic.topic_id), None, None, None).unwrap().item;
        assert_eq!(role.entity_target.as_deref(), Some("R0"));
        assert_eq!((role.lambda1, role.lambda2), (DEFAULT_LAMBDA1, DEFAULT_LAMBDA2));
        let res = engine.search(&corpus.query_words[0][0], Some(&role.role_id), 10).unwrap();
        assert!(res.hits.iter().all(|h| h.hit.topic_score.is_some() && h.hit.entity_score.is_some()));

        let reopened = Engine::open(dir.path()).unwrap();
        assert_eq!(reopened.registry(), engine.registry());
        assert_eq!(reopened.topic_ranking(&topic.topic_id, 5).unwrap().len(), 5);
        assert!(matches!(
            engine.create_role("x", Some("Atlantis"), None, None, None, None),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn unknown_seed_is_reported_with_spellings() {
        let (dir, _) = small_index();
        let engine = Engine::open(dir.path()).unwrap();
        match engine.create_topic("t", &["zzzzqqq".into()], None) {
            Err(Error::Topic(TopicError::UnknownWord { suggestions, .. })) => assert!(!suggestions.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn strategies_by_name() {
        let (dir, corpus) = small_index();
        let engine = Engine::open(dir.path()).unwrap();
        assert!(matches!(engine.strategy("magic"), Err(EvalError::UnknownStrategy(_))));
        let q = &corpus.queries[0];
        for name in ["keyword", "keyword+location", "keyword+entity"] {
            let s = engine.strategy(name).unwrap();
            assert_eq!(s.rank(q, 7).unwrap().len(), 7, "{name}");
        }
        assert!(engine.strategy("role").unwrap().rank(q, 5).is_err());
    }
}
