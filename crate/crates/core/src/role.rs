//! Roles and the combined ranking.
//!
//! A role pairs an optional entity target with an optional user topic.
//! Role search ranks documents by
//!
//! ```text
//! combined = lambda1 * topic_z + lambda2 * entity_z + (1 - lambda1 - lambda2) * qlm
//! ```
//!
//! where the topic and entity scores are z-scored over the candidate set
//! and the query-likelihood score is used as is.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entities::{entity_score, EntityStore, KnowledgeStructure, StructureError};
use crate::keyword::{top_k, KeywordIndex, ParsedQuery};

pub const DEFAULT_LAMBDA1: f64 = 0.07;
pub const DEFAULT_LAMBDA2: f64 = 0.90;
pub const MIN_CANDIDATES: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum RoleError {
    #[error("role name is empty")]
    EmptyName,
    #[error("weights must be non-negative with lambda1 + lambda2 <= 1 (lambda1 {lambda1}, lambda2 {lambda2})")]
    BadWeights { lambda1: f64, lambda2: f64 },
    #[error("lambda1 is {0} but the role has no topic")]
    TopicWeightWithoutTopic(f64),
    #[error("lambda2 is {0} but the role has no entity target")]
    EntityWeightWithoutTarget(f64),
    #[error("z-score of an empty set")]
    EmptyInput,
    #[error("query is empty and the role has no topic or entity target")]
    EmptyQuery,
    #[error("role needs {0} scores that were not supplied")]
    MissingScores(&'static str),
    #[error("score vector has {got} entries for {expected} documents")]
    ScoreLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Role {
    pub role_id: String,
    pub name: String,
    pub entity_target: Option<String>,
    pub user_topic: Option<String>,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Role {
    pub fn new(
        role_id: &str,
        name: &str,
        entity_target: Option<String>,
        user_topic: Option<String>,
        lambda1: f64,
        lambda2: f64,
    ) -> Result<Self, RoleError> {
        let role = Role {
            role_id: role_id.to_string(),
            name: name.trim().to_string(),
            entity_target,
            user_topic,
            lambda1,
            lambda2,
        };
        role.validate()?;
        Ok(role)
    }

    /// A role with neither prong; its ranking is plain keyword search.
    pub fn keyword_only(role_id: &str) -> Self {
        Role {
            role_id: role_id.to_string(),
            name: role_id.to_string(),
            entity_target: None,
            user_topic: None,
            lambda1: 0.0,
            lambda2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), RoleError> {
        if self.name.is_empty() {
            return Err(RoleError::EmptyName);
        }
        let (l1, l2) = (self.lambda1, self.lambda2);
        if !(l1 >= 0.0 && l2 >= 0.0 && l1 + l2 <= 1.0 + 1e-12) {
            return Err(RoleError::BadWeights { lambda1: l1, lambda2: l2 });
        }
        if self.user_topic.is_none() && l1 != 0.0 {
            return Err(RoleError::TopicWeightWithoutTopic(l1));
        }
        if self.entity_target.is_none() && l2 != 0.0 {
            return Err(RoleError::EntityWeightWithoutTarget(l2));
        }
        Ok(())
    }

    pub fn keyword_weight(&self) -> f64 {
        1.0 - self.lambda1 - self.lambda2
    }
}

/// Standardizes values with the population standard deviation. Zero
/// spread maps everything to 0.
pub fn zscore(values: &[f64]) -> Result<Vec<f64>, RoleError> {
    if values.is_empty() {
        return Err(RoleError::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

pub fn combined_score(qlm: f64, topic_z: f64, entity_z: f64, role: &Role) -> f64 {
    role.lambda1 * topic_z + role.lambda2 * entity_z + role.keyword_weight() * qlm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedHit {
    pub doc_id: String,
    pub qlm_score: f64,
    pub topic_score: Option<f64>,
    pub entity_score: Option<f64>,
    pub topic_z: f64,
    pub entity_z: f64,
    pub combined: f64,
}

/// Per-document scores for every document of the index, in index order.
#[derive(Debug, Clone, Copy)]
pub struct Prongs<'a> {
    pub qlm: &'a [f64],
    pub topic: Option<&'a [f64]>,
    pub entity: Option<&'a [f64]>,
}

/// Builds the candidate set from each prong's top `k_prime` documents,
/// z-scores the topic and entity prongs over it and returns the top `k`
/// by combined score (ties by doc id).
pub fn combine_candidates(prongs: Prongs, doc_ids: &[String], role: &Role, k: usize, k_prime: usize) -> Result<Vec<CombinedHit>, RoleError> {
    let n = doc_ids.len();
    for v in [Some(prongs.qlm), prongs.topic, prongs.entity].into_iter().flatten() {
        if v.len() != n {
            return Err(RoleError::ScoreLength { expected: n, got: v.len() });
        }
    }
    let mut candidates: BTreeSet<u32> = top_k(prongs.qlm, doc_ids, k_prime).into_iter().collect();
    for v in [prongs.topic, prongs.entity].into_iter().flatten() {
        candidates.extend(top_k(v, doc_ids, k_prime));
    }
    let candidates: Vec<u32> = candidates.into_iter().collect();
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let standardized = |v: Option<&[f64]>| -> Result<Vec<f64>, RoleError> {
        match v {
            Some(v) => zscore(&candidates.iter().map(|&d| v[d as usize]).collect::<Vec<_>>()),
            None => Ok(vec![0.0; candidates.len()]),
        }
    };
    let topic_z = standardized(prongs.topic)?;
    let entity_z = standardized(prongs.entity)?;
    let mut hits: Vec<CombinedHit> = candidates
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let qlm = prongs.qlm[d as usize];
            CombinedHit {
                doc_id: doc_ids[d as usize].clone(),
                qlm_score: qlm,
                topic_score: prongs.topic.map(|v| v[d as usize]),
                entity_score: prongs.entity.map(|v| v[d as usize]),
                topic_z: topic_z[i],
                entity_z: entity_z[i],
                combined: combined_score(qlm, topic_z[i], entity_z[i], role),
            }
        })
        .collect();
    hits.sort_by(|a, b| b.combined.total_cmp(&a.combined).then_with(|| a.doc_id.cmp(&b.doc_id)));
    hits.truncate(k);
    Ok(hits)
}

/// Entity score of every indexed document for `target`.
pub fn entity_scores(index: &KeywordIndex, store: &EntityStore, target: &str, ks: &KnowledgeStructure) -> Result<Vec<f64>, StructureError> {
    index
        .doc_ids()
        .iter()
        .map(|id| entity_score(store.get(id), target, ks))
        .collect()
}

/// Ranks by the role's combined score. `topic` and `entity` hold the
/// per-document scores for the role's topic and target and must be present
/// when the role uses them. An empty query with a role prong gives every
/// document the same keyword score of 1.
pub fn role_search(
    query: &ParsedQuery,
    role: &Role,
    index: &KeywordIndex,
    topic: Option<&[f64]>,
    entity: Option<&[f64]>,
    k: usize,
) -> Result<Vec<CombinedHit>, RoleError> {
    role.validate()?;
    let topic = match role.user_topic {
        Some(_) => Some(topic.ok_or(RoleError::MissingScores("topic"))?),
        None => None,
    };
    let entity = match role.entity_target {
        Some(_) => Some(entity.ok_or(RoleError::MissingScores("entity"))?),
        None => None,
    };
    let qlm = if query.is_empty() {
        if topic.is_none() && entity.is_none() {
            return Err(RoleError::EmptyQuery);
        }
        vec![1.0; index.n_docs()]
    } else {
        index.score_all(&query.ids())
    };
    let prongs = Prongs { qlm: &qlm, topic, entity };
    combine_candidates(prongs, index.doc_ids(), role, k, k.max(MIN_CANDIDATES))
}
