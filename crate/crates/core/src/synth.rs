//! Deterministic synthetic corpora with known topics, places and relevance.
//!
//! Every document belongs to one topic and, when regions are enabled, one
//! region. Topic text is sampled from disjoint per-topic vocabularies.
//! Documents mention cities of their region (occasionally one from another
//! region) and sometimes the region name itself. Each topic owns a few
//! query words that appear in about half of its documents and in a small
//! share of the others. A query pairs one of those words with a region;
//! the relevant documents are the ones with that topic and that region.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entities::{Exclusions, KnowledgeStructure, Layer, StructureBuilder};
use crate::error::{Error, Result};
use crate::etl::RawDocument;
use crate::eval::{EvalQuery, Qrels};
use crate::format::write_atomic;
use crate::lda::TopicModel;
use crate::text::{lemmatize, StopWords};

const THEMES: [(&str, &[&str]); 6] = [
    (
        "disaster",
        &[
            "earthquake", "flood", "storm", "hurricane", "tornado", "wildfire", "rescue", "evacuation", "damage",
            "casualty", "victim", "debris", "tremor", "aftershock", "landslide", "drought", "famine", "shelter",
            "relief", "collapse", "volcano", "eruption", "tsunami", "cyclone", "blizzard", "avalanche", "emergency",
            "survivor", "injury", "rubble", "magnitude", "epicenter", "ambulance", "firefighter", "quake", "toll",
            "disaster", "flooding", "mudslide", "wreckage",
        ],
    ),
    (
        "economy",
        &[
            "market", "stock", "bank", "inflation", "currency", "dollar", "export", "import", "tariff", "growth",
            "recession", "budget", "deficit", "debt", "bond", "yield", "investor", "profit", "revenue", "price",
            "wage", "unemployment", "credit", "loan", "interest", "finance", "treasury", "equity", "dividend",
            "merger", "commodity", "earning", "economy", "trader", "shareholder", "lender", "mortgage", "rate",
            "economist", "monetary",
        ],
    ),
    (
        "sport",
        &[
            "soccer", "football", "basketball", "tennis", "hockey", "baseball", "cricket", "golf", "rugby", "match",
            "tournament", "championship", "league", "coach", "player", "team", "goal", "medal", "olympic",
            "stadium", "referee", "striker", "goalkeeper", "season", "final", "victory", "defeat", "trophy",
            "athlete", "marathon", "cycling", "boxing", "swimming", "sprint", "racket", "pitch", "umpire", "sport",
            "midfielder", "playoff",
        ],
    ),
    (
        "politics",
        &[
            "election", "parliament", "minister", "president", "senate", "vote", "ballot", "campaign", "party",
            "coalition", "cabinet", "policy", "reform", "legislation", "treaty", "diplomat", "embassy", "sanction",
            "summit", "negotiation", "opposition", "referendum", "governor", "mayor", "congress", "lawmaker", "veto",
            "constitution", "court", "verdict", "protest", "rally", "candidate", "regime", "government", "politician",
            "senator", "incumbent", "electorate", "ministry",
        ],
    ),
    (
        "health",
        &[
            "hospital", "doctor", "nurse", "patient", "vaccine", "virus", "disease", "infection", "clinic",
            "surgery", "medicine", "drug", "therapy", "cancer", "diabetes", "epidemic", "pandemic", "symptom",
            "diagnosis", "treatment", "pharmacy", "antibiotic", "immunity", "fever", "influenza", "cholera",
            "malaria", "transplant", "cardiology", "pediatric", "dose", "health", "wellness", "nutrition", "obesity",
            "surgeon", "physician", "outbreak", "vaccination", "pathogen",
        ],
    ),
    (
        "technology",
        &[
            "computer", "software", "internet", "network", "server", "chip", "processor", "robot", "satellite",
            "smartphone", "device", "app", "code", "algorithm", "database", "cloud", "encryption", "hacker",
            "startup", "silicon", "semiconductor", "laptop", "browser", "website", "platform", "broadband",
            "wireless", "sensor", "drone", "battery", "gadget", "cyber", "digital", "data", "innovation", "engineer",
            "telecom", "programmer", "bandwidth", "microchip",
        ],
    ),
];

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v", "z", "sh"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_topics: usize,
    /// 0 disables places, mentions and the structure.
    pub n_regions: usize,
    pub countries_per_region: usize,
    pub cities_per_country: usize,
    /// Documents per (topic, region) cell, or per topic without regions.
    pub docs_per_cell: usize,
    pub doc_len: usize,
    pub topic_vocab: usize,
    pub background_vocab: usize,
    pub background_rate: f64,
    pub min_mentions: usize,
    pub max_mentions: usize,
    pub foreign_mention_rate: f64,
    pub region_literal_rate: f64,
    pub query_words_per_topic: usize,
    pub query_on_rate: f64,
    pub query_off_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_topics: 3,
            n_regions: 3,
            countries_per_region: 2,
            cities_per_country: 2,
            docs_per_cell: 40,
            doc_len: 60,
            topic_vocab: 30,
            background_vocab: 0,
            background_rate: 0.0,
            min_mentions: 1,
            max_mentions: 3,
            foreign_mention_rate: 0.2,
            region_literal_rate: 0.3,
            query_words_per_topic: 2,
            query_on_rate: 0.5,
            query_off_rate: 0.1,
            seed: 1,
        }
    }
}

impl SynthSpec {
    /// Topic text only: no places and no query words.
    pub fn topics_only(n_topics: usize, docs_per_topic: usize, seed: u64) -> Self {
        SynthSpec {
            n_topics,
            n_regions: 0,
            docs_per_cell: docs_per_topic,
            query_words_per_topic: 0,
            seed,
            ..SynthSpec::default()
        }
    }

    pub fn n_docs(&self) -> usize {
        self.n_topics * self.docs_per_cell * self.n_regions.max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocLabel {
    pub doc_id: String,
    pub topic: usize,
    pub region: Option<usize>,
}

/// The role a query's relevance is defined by: one topic in one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRole {
    pub role_id: String,
    pub topic: usize,
    pub region: usize,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub documents: Vec<RawDocument>,
    pub labels: Vec<DocLabel>,
    pub structure: Option<KnowledgeStructure>,
    pub qrels: Qrels,
    pub queries: Vec<EvalQuery>,
    pub roles: Vec<SynthRole>,
    pub topic_names: Vec<String>,
    pub topic_words: Vec<Vec<String>>,
    pub query_words: Vec<Vec<String>>,
    /// Node ids of the regions.
    pub region_ids: Vec<String>,
    pub region_names: Vec<String>,
}

struct Names {
    rng: ChaCha8Rng,
    taken: HashSet<String>,
    stop: StopWords,
    exclusions: Exclusions,
}

impl Names {
    fn fresh(&mut self, syllables: usize) -> String {
        loop {
            let mut s = String::new();
            for _ in 0..syllables {
                s.push_str(ONSETS.choose(&mut self.rng).unwrap());
                s.push_str(VOWELS.choose(&mut self.rng).unwrap());
            }
            if self.usable(&s) {
                self.taken.insert(s.clone());
                return s;
            }
        }
    }

    fn usable(&self, w: &str) -> bool {
        !self.taken.contains(w) && !self.stop.contains(w) && !self.exclusions.contains(w) && lemmatize(w) == w
    }

    fn claim(&mut self, w: &str) -> bool {
        if self.usable(w) {
            self.taken.insert(w.to_string());
            true
        } else {
            false
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
}

/// Generates the corpus described by `spec`. Identical specs give
/// identical output.
pub fn generate(spec: &SynthSpec) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut names = Names {
        rng: ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed),
        taken: HashSet::new(),
        stop: StopWords::english(),
        exclusions: Exclusions::shipped(),
    };

    let mut topic_names = Vec::new();
    let mut topic_words = Vec::new();
    let mut query_words = Vec::new();
    for t in 0..spec.n_topics {
        let (theme, list): (String, &[&str]) = match THEMES.get(t) {
            Some((name, list)) => (name.to_string(), list),
            None => (format!("topic{t}"), &[]),
        };
        let mut pool = list.iter().filter(|w| names.claim(w)).map(|w| w.to_string());
        let mut words: Vec<String> = pool.by_ref().take(spec.topic_vocab).collect();
        let mut queries: Vec<String> = pool.take(spec.query_words_per_topic).collect();
        while words.len() < spec.topic_vocab {
            words.push(names.fresh(3));
        }
        while queries.len() < spec.query_words_per_topic {
            queries.push(names.fresh(3));
        }
        topic_names.push(theme);
        topic_words.push(words);
        query_words.push(queries);
    }
    let background: Vec<String> = (0..spec.background_vocab).map(|_| names.fresh(3)).collect();

    // regions[r] = (id, name, cities as (id, name))
    let mut regions: Vec<(String, String, Vec<String>)> = Vec::new();
    let mut builder = StructureBuilder::new();
    for r in 0..spec.n_regions {
        let region_id = format!("R{r}");
        let region_name = capitalize(&names.fresh(3));
        builder.node(&region_id, &region_name, Layer::Region, &[]);
        let mut cities = Vec::new();
        for c in 0..spec.countries_per_region {
            let country_id = format!("R{r}C{c}");
            builder.node(&country_id, &capitalize(&names.fresh(3)), Layer::Country, &[]);
            builder.edge(&region_id, &country_id, 1.0);
            for k in 0..spec.cities_per_country {
                let city_id = format!("R{r}C{c}K{k}");
                let city_name = capitalize(&names.fresh(2));
                builder.node(&city_id, &city_name, Layer::CityOrPerson, &[]);
                builder.edge(&country_id, &city_id, 1.0);
                cities.push(city_name);
            }
        }
        regions.push((region_id, region_name, cities));
    }
    let structure = (spec.n_regions > 0).then(|| builder.build(&Exclusions::none()).expect("generated structure is valid"));

    let mut documents = Vec::with_capacity(spec.n_docs());
    let mut labels = Vec::with_capacity(spec.n_docs());
    let cells: Vec<(usize, Option<usize>)> = (0..spec.n_topics)
        .flat_map(|t| {
            let regions: Vec<Option<usize>> = if spec.n_regions == 0 { vec![None] } else { (0..spec.n_regions).map(Some).collect() };
            regions.into_iter().map(move |r| (t, r))
        })
        .collect();
    for &(t, r) in &cells {
        for _ in 0..spec.docs_per_cell {
            let doc_id = format!("syn-{:05}", documents.len() + 1);
            let mut words: Vec<String> = (0..spec.doc_len)
                .map(|_| {
                    if !background.is_empty() && rng.random_bool(spec.background_rate) {
                        background.choose(&mut rng).unwrap().clone()
                    } else {
                        topic_words[t].choose(&mut rng).unwrap().clone()
                    }
                })
                .collect();
            let mut insert = |w: String, rng: &mut ChaCha8Rng| {
                let at = rng.random_range(0..=words.len());
                words.insert(at, w);
            };
            for (qt, qs) in query_words.iter().enumerate() {
                let rate = if qt == t { spec.query_on_rate } else { spec.query_off_rate };
                for q in qs {
                    if rng.random_bool(rate) {
                        let times = if qt == t { rng.random_range(1..=2) } else { 1 };
                        for _ in 0..times {
                            insert(q.clone(), &mut rng);
                        }
                    }
                }
            }
            if let Some(r) = r {
                let n = rng.random_range(spec.min_mentions..=spec.max_mentions.max(spec.min_mentions));
                for _ in 0..n {
                    insert(regions[r].2.choose(&mut rng).unwrap().clone(), &mut rng);
                }
                if spec.n_regions > 1 && rng.random_bool(spec.foreign_mention_rate) {
                    let other = (r + rng.random_range(1..spec.n_regions)) % spec.n_regions;
                    insert(regions[other].2.choose(&mut rng).unwrap().clone(), &mut rng);
                }
                if rng.random_bool(spec.region_literal_rate) {
                    insert(regions[r].1.clone(), &mut rng);
                }
            }
            let title = format!("{} report {}", capitalize(&topic_words[t][0]), documents.len() + 1);
            documents.push(RawDocument {
                doc_id: doc_id.clone(),
                title,
                body: words.join(" "),
                entities: Vec::new(),
            });
            labels.push(DocLabel { doc_id, topic: t, region: r });
        }
    }

    let mut qrels = Qrels::default();
    let mut queries = Vec::new();
    let mut roles = Vec::new();
    for &(t, r) in &cells {
        let role_id = r.map(|r| format!("role-t{t}-r{r}"));
        if let Some(r) = r {
            roles.push(SynthRole {
                role_id: role_id.clone().unwrap(),
                topic: t,
                region: r,
            });
        }
        for q in &query_words[t] {
            let query_id = (101 + queries.len()).to_string();
            for l in labels.iter().filter(|l| l.topic == t && l.region == r) {
                qrels.insert(&query_id, &l.doc_id, true);
            }
            queries.push(EvalQuery {
                query_id,
                text: q.clone(),
                location: r.map(|r| regions[r].1.clone()),
                role: role_id.clone(),
            });
        }
    }

    SynthCorpus {
        spec: spec.clone(),
        documents,
        labels,
        structure,
        qrels,
        queries,
        roles,
        topic_names,
        topic_words,
        query_words,
        region_ids: regions.iter().map(|r| r.0.clone()).collect(),
        region_names: regions.iter().map(|r| r.1.clone()).collect(),
    }
}

impl SynthCorpus {
    /// Writes `corpus/documents.jsonl`, `structure.tsv` (with regions),
    /// `qrels.txt`, `queries.jsonl` and `labels.jsonl` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let corpus = dir.join("corpus");
        std::fs::create_dir_all(&corpus).map_err(|e| Error::io(&corpus, e))?;
        let jsonl = |items: Vec<String>| items.into_iter().map(|l| l + "\n").collect::<String>();
        let docs = jsonl(self.documents.iter().map(|d| serde_json::to_string(d).unwrap()).collect());
        write_atomic(&corpus.join("documents.jsonl"), docs.as_bytes())?;
        if let Some(ks) = &self.structure {
            ks.save(&dir.join("structure.tsv"))?;
        }
        write_atomic(&dir.join("qrels.txt"), self.qrels.to_text().as_bytes())?;
        let queries = jsonl(self.queries.iter().map(|q| serde_json::to_string(q).unwrap()).collect());
        write_atomic(&dir.join("queries.jsonl"), queries.as_bytes())?;
        let labels = jsonl(self.labels.iter().map(|l| serde_json::to_string(l).unwrap()).collect());
        write_atomic(&dir.join("labels.jsonl"), labels.as_bytes())
    }

    /// Topic label of each document, in corpus order.
    pub fn topic_labels(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.topic).collect()
    }
}

/// Share of tokens whose assigned topic is the majority topic of their
/// planted block, and whether the blocks' majority topics are distinct.
pub fn block_purity(model: &TopicModel, blocks: &[usize]) -> (f64, bool) {
    let n_blocks = blocks.iter().max().map_or(0, |m| m + 1);
    let t = model.n_topics();
    let mut counts = vec![vec![0usize; t]; n_blocks];
    for (d, z) in model.assignments().iter().enumerate() {
        for &j in z {
            counts[blocks[d]][j as usize] += 1;
        }
    }
    let total: usize = counts.iter().flatten().sum();
    let mut majority = Vec::new();
    let mut kept = 0;
    for row in &counts {
        let (j, &c) = row.iter().enumerate().max_by_key(|&(j, &c)| (c, std::cmp::Reverse(j))).unwrap();
        majority.push(j);
        kept += c;
    }
    let distinct = majority.iter().collect::<HashSet<_>>().len() == majority.len();
    (if total == 0 { 0.0 } else { kept as f64 / total as f64 }, distinct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entities::{entity_distribution, label_entities};
    use crate::lda::{train, LdaCorpus, LdaConfig};
    use crate::text::normalize;

    #[test]
    fn sizes_and_labels() {
        let c = generate(&SynthSpec::topics_only(3, 100, 1));
        assert_eq!(c.documents.len(), 300);
        assert_eq!(c.labels.iter().filter(|l| l.topic == 2).count(), 100);
        assert!(c.structure.is_none() && c.queries.is_empty());
        let full = generate(&SynthSpec::default());
        assert_eq!(full.documents.len(), 360);
        assert_eq!(full.queries.len(), 18);
        assert_eq!(full.roles.len(), 9);
        assert_eq!(full.qrels.n_relevant("101"), 40);
    }

    #[test]
    fn same_spec_same_corpus() {
        let a = generate(&SynthSpec::default());
        let b = generate(&SynthSpec::default());
        assert_eq!(a.documents, b.documents);
        assert_eq!(a.qrels, b.qrels);
        let c = generate(&SynthSpec { seed: 2, ..SynthSpec::default() });
        assert_ne!(a.documents, c.documents);
    }

    #[test]
    fn vocabularies_are_disjoint_and_survive_normalization() {
        let c = generate(&SynthSpec { n_topics: 8, background_vocab: 20, background_rate: 0.1, ..SynthSpec::default() });
        let mut seen = HashSet::new();
        for w in c.topic_words.iter().chain(&c.query_words).flatten() {
            assert!(seen.insert(w.clone()), "{w} reused");
            assert_eq!(normalize(w, &StopWords::english()).collect::<Vec<_>>(), vec![w.clone()]);
        }
        for name in &c.region_names {
            assert!(!seen.contains(&name.to_lowercase()));
        }
    }

    #[test]
    fn mentions_resolve_to_the_document_region() {
        let c = generate(&SynthSpec::default());
        let ks = c.structure.as_ref().unwrap();
        // At least one own-region mention, at most one foreign one.
        let mut majority = 0;
        for (doc, label) in c.documents.iter().zip(&c.labels) {
            let rel = entity_distribution(&doc.doc_id, &label_entities(doc, ks), ks).unwrap();
            let own = rel.region_dist.get(&c.region_ids[label.region.unwrap()]).copied().unwrap_or(0.0);
            majority += usize::from(own >= 0.5);
        }
        assert_eq!(majority, c.documents.len());
    }

    #[test]
    fn lda_recovers_planted_blocks() {
        let c = generate(&SynthSpec::topics_only(3, 60, 3));
        let words: Vec<String> = c.topic_words.concat();
        let docs: Vec<Vec<u32>> = c
            .documents
            .iter()
            .map(|d| d.body.split(' ').map(|w| words.iter().position(|x| x == w).unwrap() as u32).collect())
            .collect();
        let model = train(&LdaCorpus::new(docs, words.len()).unwrap(), &LdaConfig { n_sweeps: 100, ..LdaConfig::with_topics(3) }).unwrap();
        let (purity, distinct) = block_purity(&model, &c.topic_labels());
        assert!(purity >= 0.9 && distinct, "{purity}");
    }

    #[test]
    fn written_files_load_back() {
        let c = generate(&SynthSpec {
            docs_per_cell: 3,
            ..SynthSpec::default()
        });
        let dir = tempfile::tempdir().unwrap();
        c.write_to(dir.path()).unwrap();
        assert_eq!(crate::etl::load_corpus(&dir.path().join("corpus")).unwrap(), c.documents);
        assert_eq!(crate::eval::load_qrels(&dir.path().join("qrels.txt")).unwrap(), c.qrels);
        assert_eq!(crate::eval::load_queries(&dir.path().join("queries.jsonl")).unwrap(), c.queries);
        let ks = crate::entities::load_structure(&dir.path().join("structure.tsv"), &Exclusions::none()).unwrap();
        assert_eq!(ks.nodes().len(), c.structure.unwrap().nodes().len());
    }
}
