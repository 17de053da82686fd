//! Geographic knowledge structure and per-document entity relevance.
//!
//! The structure is a three-layer weighted DAG: regions, countries, and
//! cities or people. Mentions found in a document are propagated upward
//! along the edges and normalized per layer, so a document that only names
//! Tehran is still relevant to Iran and to the Middle East.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::etl::RawDocument;
use crate::format::{write_atomic, TextFile, TextWriter};
use crate::text::surface_tokens;

const DEFAULT_EXCLUSIONS: &str = include_str!("../data/exclusions.txt");

/// Cities below this population are not added by the GeoNames converter.
pub const MIN_CITY_POPULATION: u64 = 30_000;

#[derive(Debug, Error, PartialEq)]
pub enum StructureError {
    #[error("{record}: duplicate node id {id:?}")]
    DuplicateNode { record: String, id: String },
    #[error("{record}: unknown node {id:?}")]
    UnknownNode { record: String, id: String },
    #[error("{record}: edge {parent:?} -> {child:?} must go region -> country or country -> city/person")]
    BadLayerEdge {
        record: String,
        parent: String,
        child: String,
    },
    #[error("{record}: edge weight {weight} is outside (0, 1]")]
    BadWeight { record: String, weight: f64 },
    #[error("cycle through node {id:?}")]
    Cycle { id: String },
    #[error("node {id:?} has no parent")]
    Orphan { id: String },
    #[error("name {name:?} refers to both {first:?} and {second:?}")]
    Ambiguous {
        name: String,
        first: String,
        second: String,
    },
    #[error("{record}: {reason}")]
    Malformed { record: String, reason: String },
    #[error("unknown entity target {0:?}")]
    UnknownTarget(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Region,
    Country,
    CityOrPerson,
}

impl Layer {
    fn parse(s: &str) -> Option<Layer> {
        match s {
            "region" => Some(Layer::Region),
            "country" => Some(Layer::Country),
            "city" | "person" | "city_or_person" => Some(Layer::CityOrPerson),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Layer::Region => "region",
            Layer::Country => "country",
            Layer::CityOrPerson => "city",
        }
    }

    fn child(self) -> Option<Layer> {
        match self {
            Layer::Region => Some(Layer::Country),
            Layer::Country => Some(Layer::CityOrPerson),
            Layer::CityOrPerson => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub name: String,
    pub layer: Layer,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub parent: String,
    pub child: String,
    pub weight: f64,
}

/// Names removed from the structure because they collide with common words.
#[derive(Debug, Clone, Default)]
pub struct Exclusions(HashSet<String>);

impl Exclusions {
    pub fn shipped() -> Self {
        Self::parse(DEFAULT_EXCLUSIONS)
    }

    pub fn parse(text: &str) -> Self {
        Exclusions(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn none() -> Self {
        Exclusions(HashSet::new())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(&name.to_lowercase())
    }
}

/// Nodes and weighted edges before validation. `record` labels point back
/// at the source (file line or caller-chosen description) for errors.
#[derive(Debug, Clone, Default)]
pub struct StructureBuilder {
    nodes: Vec<(String, Node)>,
    edges: Vec<(String, Edge)>,
}

impl StructureBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, id: &str, name: &str, layer: Layer, aliases: &[&str]) -> &mut Self {
        let record = format!("node {id}");
        self.push_node(
            record,
            Node {
                id: id.into(),
                name: name.into(),
                layer,
                aliases: aliases.iter().map(|a| a.to_string()).collect(),
            },
        )
    }

    pub fn edge(&mut self, parent: &str, child: &str, weight: f64) -> &mut Self {
        let record = format!("edge {parent} -> {child}");
        self.push_edge(
            record,
            Edge {
                parent: parent.into(),
                child: child.into(),
                weight,
            },
        )
    }

    fn push_node(&mut self, record: String, node: Node) -> &mut Self {
        self.nodes.push((record, node));
        self
    }

    fn push_edge(&mut self, record: String, edge: Edge) -> &mut Self {
        self.edges.push((record, edge));
        self
    }

    /// Applies the exclusion list and validates the result.
    pub fn build(self, exclusions: &Exclusions) -> Result<KnowledgeStructure, StructureError> {
        let mut by_id: HashMap<String, usize> = HashMap::new();
        let mut nodes: Vec<Node> = Vec::with_capacity(self.nodes.len());
        let mut dropped: HashSet<String> = HashSet::new();
        for (record, mut node) in self.nodes {
            if by_id.contains_key(&node.id) || dropped.contains(&node.id) {
                return Err(StructureError::DuplicateNode { record, id: node.id });
            }
            if node.layer == Layer::CityOrPerson && exclusions.contains(&node.name) {
                dropped.insert(node.id);
                continue;
            }
            node.aliases.retain(|a| !exclusions.contains(a));
            by_id.insert(node.id.clone(), nodes.len());
            nodes.push(node);
        }

        let mut parents: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes.len()];
        let mut resolved = Vec::with_capacity(self.edges.len());
        for (record, edge) in &self.edges {
            if dropped.contains(&edge.parent) || dropped.contains(&edge.child) {
                continue;
            }
            let lookup = |id: &str| {
                by_id.get(id).copied().ok_or_else(|| StructureError::UnknownNode {
                    record: record.clone(),
                    id: id.to_string(),
                })
            };
            let (p, c) = (lookup(&edge.parent)?, lookup(&edge.child)?);
            if !(edge.weight > 0.0 && edge.weight <= 1.0) {
                return Err(StructureError::BadWeight {
                    record: record.clone(),
                    weight: edge.weight,
                });
            }
            if parents[c].iter().any(|&(q, _)| q == p) {
                return Err(StructureError::Malformed {
                    record: record.clone(),
                    reason: "duplicate edge".into(),
                });
            }
            parents[c].push((p, edge.weight));
            resolved.push((record, p, c));
        }

        if let Some(id) = find_cycle(&parents) {
            return Err(StructureError::Cycle { id: nodes[id].id.clone() });
        }
        for (record, p, c) in resolved {
            if nodes[p].layer.child() != Some(nodes[c].layer) {
                return Err(StructureError::BadLayerEdge {
                    record: record.clone(),
                    parent: nodes[p].id.clone(),
                    child: nodes[c].id.clone(),
                });
            }
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.layer != Layer::Region && parents[i].is_empty() {
                return Err(StructureError::Orphan { id: node.id.clone() });
            }
        }

        let mut matcher: HashMap<Vec<String>, usize> = HashMap::new();
        let mut max_len = 0;
        for (i, node) in nodes.iter().enumerate() {
            for name in std::iter::once(&node.name).chain(&node.aliases) {
                let key: Vec<String> = surface_tokens(name).collect();
                if key.is_empty() {
                    continue;
                }
                max_len = max_len.max(key.len());
                if let Some(&other) = matcher.get(&key) {
                    if other != i {
                        return Err(StructureError::Ambiguous {
                            name: name.clone(),
                            first: nodes[other].id.clone(),
                            second: node.id.clone(),
                        });
                    }
                }
                matcher.insert(key, i);
            }
        }

        Ok(KnowledgeStructure {
            nodes,
            by_id,
            parents,
            matcher,
            max_len,
        })
    }
}

fn find_cycle(parents: &[Vec<(usize, f64)>]) -> Option<usize> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit(n: usize, parents: &[Vec<(usize, f64)>], state: &mut [u8]) -> Option<usize> {
        state[n] = 1;
        for &(p, _) in &parents[n] {
            match state[p] {
                1 => return Some(p),
                0 => {
                    if let Some(c) = visit(p, parents, state) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        state[n] = 2;
        None
    }
    let mut state = vec![0u8; parents.len()];
    (0..parents.len()).find_map(|n| if state[n] == 0 { visit(n, parents, &mut state) } else { None })
}

/// A validated region/country/city hierarchy.
#[derive(Debug, Clone)]
pub struct KnowledgeStructure {
    nodes: Vec<Node>,
    by_id: HashMap<String, usize>,
    parents: Vec<Vec<(usize, f64)>>,
    matcher: HashMap<Vec<String>, usize>,
    max_len: usize,
}

impl KnowledgeStructure {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.by_id.get(id).map(|&i| &self.nodes[i])
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        for (c, ps) in self.parents.iter().enumerate() {
            for &(p, weight) in ps {
                edges.push(Edge {
                    parent: self.nodes[p].id.clone(),
                    child: self.nodes[c].id.clone(),
                    weight,
                });
            }
        }
        edges
    }

    /// Parents of a node with their raw edge weights.
    pub fn parents(&self, id: &str) -> Vec<(&str, f64)> {
        self.by_id.get(id).map_or_else(Vec::new, |&i| {
            self.parents[i].iter().map(|&(p, w)| (self.nodes[p].id.as_str(), w)).collect()
        })
    }

    /// Finds a node by id, or by name or alias (case-insensitive).
    pub fn resolve(&self, id_or_name: &str) -> Option<&Node> {
        if let Some(n) = self.node(id_or_name) {
            return Some(n);
        }
        let key: Vec<String> = surface_tokens(id_or_name).collect();
        self.matcher.get(&key).map(|&i| &self.nodes[i])
    }

    fn to_builder(&self) -> StructureBuilder {
        let mut b = StructureBuilder::new();
        for n in &self.nodes {
            b.push_node(format!("node {}", n.id), n.clone());
        }
        for e in self.edges() {
            b.push_edge(format!("edge {} -> {}", e.parent, e.child), e);
        }
        b
    }

    pub fn to_text(&self) -> String {
        let mut w = TextWriter::new("knowledge-structure");
        w.comment("node\tid\tlayer\tname\taliases (|-separated)")
            .comment("edge\tparent\tchild\tweight");
        for n in &self.nodes {
            w.row(&[&"node", &n.id, &n.layer.as_str(), &n.name, &n.aliases.join("|")]);
        }
        for e in self.edges() {
            w.row(&[&"edge", &e.parent, &e.child, &e.weight]);
        }
        w.finish()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    /// Counts name and alias occurrences in raw text with greedy
    /// longest-match, case-insensitive, on word boundaries.
    fn match_text(&self, text: &str, counts: &mut BTreeMap<usize, u64>) {
        let tokens: Vec<String> = surface_tokens(text).collect();
        let mut i = 0;
        while i < tokens.len() {
            let longest = (1..=self.max_len.min(tokens.len() - i))
                .rev()
                .find_map(|n| self.matcher.get(&tokens[i..i + n]).map(|&node| (node, n)));
            match longest {
                Some((node, n)) => {
                    *counts.entry(node).or_default() += 1;
                    i += n;
                }
                None => i += 1,
            }
        }
    }
}

/// Parses the structure file format and validates it.
pub fn parse_structure(text: &str, exclusions: &Exclusions) -> Result<KnowledgeStructure, StructureError> {
    let file = TextFile::parse(Path::new("structure"), "knowledge-structure", text).map_err(|e| {
        StructureError::Malformed {
            record: "header".into(),
            reason: e.to_string(),
        }
    })?;
    let mut b = StructureBuilder::new();
    for (line, row) in &file.rows {
        let fields: Vec<&str> = row.split('\t').collect();
        let record = format!("line {line}");
        let malformed = |reason: &str| StructureError::Malformed {
            record: record.clone(),
            reason: reason.into(),
        };
        match fields.as_slice() {
            ["node", id, layer, name, rest @ ..] if rest.len() <= 1 => {
                let layer = Layer::parse(layer).ok_or_else(|| malformed(&format!("unknown layer {layer:?}")))?;
                let aliases: Vec<String> = rest
                    .first()
                    .map(|a| a.split('|').map(str::trim).filter(|a| !a.is_empty()).map(String::from).collect())
                    .unwrap_or_default();
                b.push_node(
                    format!("line {line} (node {id})"),
                    Node {
                        id: id.to_string(),
                        name: name.to_string(),
                        layer,
                        aliases,
                    },
                );
            }
            ["edge", parent, child, weight] => {
                let weight: f64 = weight.parse().map_err(|_| malformed(&format!("bad weight {weight:?}")))?;
                b.push_edge(
                    format!("line {line} (edge {parent} -> {child})"),
                    Edge {
                        parent: parent.to_string(),
                        child: child.to_string(),
                        weight,
                    },
                );
            }
            _ => return Err(malformed("expected a node or edge record")),
        }
    }
    b.build(exclusions)
}

pub fn load_structure(path: &Path, exclusions: &Exclusions) -> Result<KnowledgeStructure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_structure(&text, exclusions)?)
}

/// Counts entity mentions in the document title and body, plus one count
/// for each resolvable pre-labeled entity. Returned in structure order.
pub fn label_entities(doc: &RawDocument, ks: &KnowledgeStructure) -> Vec<(String, u64)> {
    let mut counts = BTreeMap::new();
    ks.match_text(&doc.title, &mut counts);
    ks.match_text(&doc.body, &mut counts);
    for label in &doc.entities {
        if let Some(node) = ks.resolve(label) {
            *counts.entry(ks.by_id[&node.id]).or_default() += 1;
        }
    }
    counts.into_iter().map(|(i, c)| (ks.nodes[i].id.clone(), c)).collect()
}

/// A document's entity mass per layer. Each non-empty map sums to one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityRelevance {
    pub doc_id: String,
    pub country_dist: BTreeMap<String, f64>,
    pub region_dist: BTreeMap<String, f64>,
    /// Share of the country-layer mass contributed by each mentioned city
    /// or person.
    #[serde(default)]
    pub city_dist: BTreeMap<String, f64>,
}

impl EntityRelevance {
    pub fn is_empty(&self) -> bool {
        self.country_dist.is_empty() && self.region_dist.is_empty()
    }
}

fn normalized(mass: BTreeMap<usize, f64>, total: f64, ks: &KnowledgeStructure) -> BTreeMap<String, f64> {
    if total <= 0.0 {
        return BTreeMap::new();
    }
    mass.into_iter()
        .filter(|&(_, m)| m > 0.0)
        .map(|(i, m)| (ks.nodes[i].id.clone(), m / total))
        .collect()
}

/// Propagates mention counts up the hierarchy. A node's mass is split over
/// its parents in proportion to the edge weights.
pub fn entity_distribution(
    doc_id: &str,
    mentions: &[(String, u64)],
    ks: &KnowledgeStructure,
) -> Result<EntityRelevance, StructureError> {
    let mut by_layer: [BTreeMap<usize, f64>; 3] = Default::default();
    for (id, count) in mentions {
        let &i = ks.by_id.get(id).ok_or_else(|| StructureError::UnknownTarget(id.clone()))?;
        *by_layer[ks.nodes[i].layer as usize].entry(i).or_default() += *count as f64;
    }

    let mut city_routed: BTreeMap<usize, f64> = BTreeMap::new();
    for (upper, lower) in [(Layer::Country, Layer::CityOrPerson), (Layer::Region, Layer::Country)] {
        let lower_mass = std::mem::take(&mut by_layer[lower as usize]);
        for (&node, &mass) in &lower_mass {
            let parents = &ks.parents[node];
            let total_weight: f64 = parents.iter().map(|(_, w)| w).sum();
            for &(p, w) in parents {
                *by_layer[upper as usize].entry(p).or_default() += mass * w / total_weight;
            }
            if lower == Layer::CityOrPerson {
                city_routed.insert(node, mass);
            }
        }
        by_layer[lower as usize] = lower_mass;
    }

    let country_total: f64 = by_layer[Layer::Country as usize].values().sum();
    let region_total: f64 = by_layer[Layer::Region as usize].values().sum();
    let [region_mass, country_mass, _] = by_layer;
    Ok(EntityRelevance {
        doc_id: doc_id.to_string(),
        country_dist: normalized(country_mass, country_total, ks),
        region_dist: normalized(region_mass, region_total, ks),
        city_dist: normalized(city_routed, country_total, ks),
    })
}

/// Entity relevance for every indexed document, in index order.
#[derive(Debug, Clone, Default)]
pub struct EntityStore {
    docs: Vec<EntityRelevance>,
    lookup: HashMap<String, usize>,
}

impl EntityStore {
    pub fn new(docs: Vec<EntityRelevance>) -> Self {
        let lookup = docs.iter().enumerate().map(|(i, d)| (d.doc_id.clone(), i)).collect();
        EntityStore { docs, lookup }
    }

    /// Labels and propagates every document.
    pub fn build(corpus: &[RawDocument], ks: &KnowledgeStructure) -> Self {
        use rayon::prelude::*;
        let docs = corpus
            .par_iter()
            .map(|d| {
                let mentions = label_entities(d, ks);
                entity_distribution(&d.doc_id, &mentions, ks).expect("labels come from the structure")
            })
            .collect();
        Self::new(docs)
    }

    pub fn get(&self, doc_id: &str) -> Option<&EntityRelevance> {
        self.lookup.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn docs(&self) -> &[EntityRelevance] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for d in &self.docs {
            out.push_str(&serde_json::to_string(d).expect("plain data serializes"));
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut docs = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            docs.push(serde_json::from_str(line).map_err(|e| Error::format(path, i + 1, e.to_string()))?);
        }
        Ok(Self::new(docs))
    }
}

/// The document's relevance to `target`, read from the layer the target
/// lives on. Documents without entities score zero.
pub fn entity_score(rel: Option<&EntityRelevance>, target: &str, ks: &KnowledgeStructure) -> Result<f64, StructureError> {
    let node = ks.node(target).ok_or_else(|| StructureError::UnknownTarget(target.to_string()))?;
    let Some(rel) = rel else { return Ok(0.0) };
    let dist = match node.layer {
        Layer::Region => &rel.region_dist,
        Layer::Country => &rel.country_dist,
        Layer::CityOrPerson => &rel.city_dist,
    };
    Ok(dist.get(target).copied().unwrap_or(0.0))
}

/// Outcome of a GeoNames import.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GeonamesReport {
    pub added: usize,
    pub below_population: usize,
    pub unknown_country: usize,
    pub name_collisions: usize,
    pub excluded: usize,
}

/// Adds cities from a GeoNames-style table to a base structure of regions
/// and countries.
///
/// Rows are tab-separated. Three-column rows are `name, country, population`;
/// rows with 15 or more columns are read as the GeoNames dump layout (name in
/// column 2, country code in column 9, population in column 15). The country
/// field is resolved against node ids, names and aliases. Cities whose name
/// collides with an existing entry are skipped, keeping the first.
pub fn convert_geonames(
    base: &KnowledgeStructure,
    table: &str,
    exclusions: &Exclusions,
    min_population: u64,
) -> Result<(KnowledgeStructure, GeonamesReport), StructureError> {
    let mut builder = base.to_builder();
    let mut report = GeonamesReport::default();
    let mut taken: HashSet<Vec<String>> = base.matcher.keys().cloned().collect();
    let mut ids: HashSet<String> = base.by_id.keys().cloned().collect();
    for (n, line) in table.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (name, country, population) = match fields.len() {
            3 => (fields[0], fields[1], fields[2]),
            len if len >= 15 => (fields[1], fields[8], fields[14]),
            _ => {
                return Err(StructureError::Malformed {
                    record: format!("geonames line {}", n + 1),
                    reason: "expected 3 or at least 15 tab-separated columns".into(),
                })
            }
        };
        let population: u64 = population.trim().parse().map_err(|_| StructureError::Malformed {
            record: format!("geonames line {}", n + 1),
            reason: format!("bad population {population:?}"),
        })?;
        if population < min_population {
            report.below_population += 1;
            continue;
        }
        let Some(country) = base.resolve(country).filter(|c| c.layer == Layer::Country) else {
            report.unknown_country += 1;
            continue;
        };
        if exclusions.contains(name) {
            report.excluded += 1;
            continue;
        }
        let key: Vec<String> = surface_tokens(name).collect();
        if key.is_empty() || !taken.insert(key) {
            report.name_collisions += 1;
            continue;
        }
        let mut id = format!("{}/{}", country.id, name);
        let mut k = 2;
        while !ids.insert(id.clone()) {
            id = format!("{}/{} {k}", country.id, name);
            k += 1;
        }
        builder.node(&id, name, Layer::CityOrPerson, &[]);
        builder.edge(&country.id, &id, 1.0);
        report.added += 1;
    }
    Ok((builder.build(exclusions)?, report))
}
