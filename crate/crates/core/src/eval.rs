//! Precision-at-k evaluation of retrieval strategies against relevance
//! judgments in TREC qrels format (`qid 0 docid rel`).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: query {query} judges {doc_id} twice")]
    Duplicate { line: usize, query: String, doc_id: String },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("strategy {strategy} failed on query {query}: {message}")]
    Strategy { strategy: String, query: String, message: String },
}

/// Binary relevance judgments keyed by query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judged: HashMap<String, HashMap<String, bool>>,
}

impl Qrels {
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut qrels = Qrels::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            let [qid, _, doc_id, rel] = fields[..] else {
                return Err(EvalError::Parse {
                    line: line_no,
                    message: format!("expected 4 fields, found {}", fields.len()),
                });
            };
            let rel: i64 = rel.parse().map_err(|_| EvalError::Parse {
                line: line_no,
                message: format!("bad relevance {rel:?}"),
            })?;
            if !qrels.insert(qid, doc_id, rel > 0) {
                return Err(EvalError::Duplicate {
                    line: line_no,
                    query: qid.to_string(),
                    doc_id: doc_id.to_string(),
                });
            }
        }
        Ok(qrels)
    }

    /// Adds a judgment; false if the pair was already judged.
    pub fn insert(&mut self, query: &str, doc_id: &str, relevant: bool) -> bool {
        self.judged
            .entry(query.to_string())
            .or_default()
            .insert(doc_id.to_string(), relevant)
            .is_none()
    }

    pub fn judgment(&self, query: &str, doc_id: &str) -> Option<bool> {
        self.judged.get(query)?.get(doc_id).copied()
    }

    pub fn is_relevant(&self, query: &str, doc_id: &str) -> bool {
        self.judgment(query, doc_id) == Some(true)
    }

    pub fn n_relevant(&self, query: &str) -> usize {
        self.judged.get(query).map_or(0, |m| m.values().filter(|&&r| r).count())
    }

    pub fn len(&self) -> usize {
        self.judged.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Judgments as qrels lines, sorted by query then document.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(&String, &String, bool)> = self
            .judged
            .iter()
            .flat_map(|(q, m)| m.iter().map(move |(d, &r)| (q, d, r)))
            .collect();
        rows.sort();
        let mut out = String::new();
        for (q, d, r) in rows {
            let _ = writeln!(out, "{q} 0 {d} {}", u8::from(r));
        }
        out
    }
}

pub fn load_qrels(path: &Path) -> Result<Qrels> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Qrels::parse(&text).map_err(|e| match e {
        EvalError::Parse { line, message } => Error::format(path, line, message),
        other => other.into(),
    })
}

/// Fraction of the top `k` that is judged relevant. Unjudged documents
/// count as irrelevant, and short rankings are not padded out.
pub fn precision_at_k<S: AsRef<str>>(ranked: &[S], query: &str, qrels: &Qrels, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let hits = ranked.iter().take(k).filter(|d| qrels.is_relevant(query, d.as_ref())).count();
    Ok(hits as f64 / k as f64)
}

/// One benchmark query. `location` and `role` feed the strategies that
/// use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub query_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

/// Reads one JSON query per line.
pub fn parse_queries(text: &str) -> Result<Vec<EvalQuery>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_queries(path: &Path) -> Result<Vec<EvalQuery>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_queries(&text).map_err(|e| match e {
        EvalError::Parse { line, message } => Error::format(path, line, message),
        other => other.into(),
    })
}

/// A named way of ranking documents for a query.
pub trait Strategy: Sync {
    fn name(&self) -> &str;
    fn rank(&self, query: &EvalQuery, k: usize) -> std::result::Result<Vec<String>, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub strategies: Vec<String>,
    pub queries: Vec<String>,
    /// `precision[s][q]` for strategy `s` and query `q`.
    pub precision: Vec<Vec<f64>>,
    pub means: Vec<f64>,
}

#[derive(Serialize)]
struct ReportRecord<'a> {
    strategy: &'a str,
    query_id: &'a str,
    k: usize,
    precision: f64,
    relevant: usize,
}

impl EvalReport {
    pub fn mean(&self, strategy: &str) -> Option<f64> {
        self.strategies.iter().position(|s| s == strategy).map(|i| self.means[i])
    }

    /// Aligned table of relevant-in-top-k counts, one row per strategy.
    pub fn to_table(&self) -> String {
        let width = self.strategies.iter().map(String::len).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = write!(out, "{:width$}", "strategy");
        for q in &self.queries {
            let _ = write!(out, " {q:>6}");
        }
        let _ = writeln!(out, " {:>8} {:>8}", "mean", format!("P@{}", self.k));
        for (s, name) in self.strategies.iter().enumerate() {
            let _ = write!(out, "{name:width$}");
            for p in &self.precision[s] {
                let _ = write!(out, " {:>6}", (p * self.k as f64).round() as usize);
            }
            let _ = writeln!(out, " {:>8.2} {:>8.4}", self.means[s] * self.k as f64, self.means[s]);
        }
        let _ = writeln!(
            out,
            "cells: relevant documents in the top {}; unjudged documents count as irrelevant",
            self.k
        );
        out
    }

    /// One JSON record per strategy and query.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (s, name) in self.strategies.iter().enumerate() {
            for (q, qid) in self.queries.iter().enumerate() {
                let p = self.precision[s][q];
                let rec = ReportRecord {
                    strategy: name,
                    query_id: qid,
                    k: self.k,
                    precision: p,
                    relevant: (p * self.k as f64).round() as usize,
                };
                let _ = writeln!(out, "{}", serde_json::to_string(&rec).expect("record serializes"));
            }
        }
        out
    }
}

/// Runs every strategy on every query (queries in parallel) and averages
/// precision at `k` per strategy.
pub fn run_benchmark(strategies: &[&dyn Strategy], queries: &[EvalQuery], qrels: &Qrels, k: usize) -> Result<EvalReport, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let mut precision = Vec::with_capacity(strategies.len());
    for s in strategies {
        let row = queries
            .par_iter()
            .map(|q| {
                let ranked = s.rank(q, k).map_err(|message| EvalError::Strategy {
                    strategy: s.name().to_string(),
                    query: q.query_id.clone(),
                    message,
                })?;
                precision_at_k(&ranked, &q.query_id, qrels, k)
            })
            .collect::<Result<Vec<f64>, EvalError>>()?;
        precision.push(row);
    }
    let means = precision
        .iter()
        .map(|row| if row.is_empty() { 0.0 } else { row.iter().sum::<f64>() / row.len() as f64 })
        .collect();
    Ok(EvalReport {
        k,
        strategies: strategies.iter().map(|s| s.name().to_string()).collect(),
        queries: queries.iter().map(|q| q.query_id.clone()).collect(),
        precision,
        means,
    })
}
