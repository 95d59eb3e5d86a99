// SPDX-License-Identifier: Apache-2.0

//! Lexical BM25 retrieval over spec chunks.
//!
//! Queries are built only through [`make_query`], so every [`Query`] follows
//! the description template. Scoring uses the signal's tokens; the template
//! words are identical across queries and carry no ranking information.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::SpecChunk;

pub const QUERY_PREFIX: &str = "What is the description of ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Query {
    target_signal: String,
    text: String,
}

impl Query {
    pub fn target_signal(&self) -> &str {
        &self.target_signal
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("signal name is empty")]
    EmptySignal,
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
}

pub fn make_query(signal: &str) -> Result<Query, RetrievalError> {
    let s = signal.trim();
    if s.is_empty() {
        return Err(RetrievalError::EmptySignal);
    }
    Ok(Query {
        target_signal: s.to_string(),
        text: format!("{QUERY_PREFIX}{s}?"),
    })
}

/// Lowercases and splits on anything outside `[a-z0-9_]`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RankedChunk {
    pub chunk: SpecChunk,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct Index {
    params: Bm25Params,
    chunks: Vec<SpecChunk>,
    doc_len: Vec<usize>,
    avgdl: f64,
    /// term -> (chunk index, term frequency), ascending chunk index
    postings: BTreeMap<String, Vec<(usize, u32)>>,
}

pub fn build_index(chunks: &[SpecChunk], params: Bm25Params) -> Result<Index, RetrievalError> {
    if chunks.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
    let mut doc_len = Vec::with_capacity(chunks.len());
    for (i, c) in chunks.iter().enumerate() {
        let toks = tokenize(&c.text);
        doc_len.push(toks.len());
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in toks {
            *tf.entry(t).or_default() += 1;
        }
        for (t, n) in tf {
            postings.entry(t).or_default().push((i, n));
        }
    }
    let avgdl = doc_len.iter().sum::<usize>() as f64 / chunks.len() as f64;
    Ok(Index {
        params,
        chunks: chunks.to_vec(),
        doc_len,
        avgdl,
        postings,
    })
}

impl Index {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.chunks.len() as f64;
        let df = df as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Up to `k` chunks with positive score, best first, ties by chunk id.
    pub fn retrieve(&self, query: &Query, k: usize) -> Vec<RankedChunk> {
        let mut terms = tokenize(&query.target_signal);
        terms.sort();
        terms.dedup();
        let Bm25Params { k1, b } = self.params;
        let mut scores = vec![0.0f64; self.chunks.len()];
        for t in &terms {
            let Some(post) = self.postings.get(t) else { continue };
            let idf = self.idf(post.len());
            for &(d, tf) in post {
                let tf = tf as f64;
                let norm = 1.0 - b + b * self.doc_len[d] as f64 / self.avgdl;
                scores[d] += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores
            .into_iter()
            .enumerate()
            .filter(|&(_, s)| s > 0.0)
            .collect();
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.chunks[a.0].chunk_id.cmp(&self.chunks[b.0].chunk_id))
        });
        ranked
            .into_iter()
            .take(k)
            .map(|(d, score)| RankedChunk {
                chunk: self.chunks[d].clone(),
                score,
            })
            .collect()
    }

    /// Debug view: parameters, document lengths, and term postings by chunk id.
    pub fn dump(&self) -> serde_json::Value {
        let postings: BTreeMap<&str, Vec<(&str, u32)>> = self
            .postings
            .iter()
            .map(|(t, p)| {
                (
                    t.as_str(),
                    p.iter()
                        .map(|&(d, tf)| (self.chunks[d].chunk_id.as_str(), tf))
                        .collect(),
                )
            })
            .collect();
        let docs: Vec<serde_json::Value> = self
            .chunks
            .iter()
            .zip(&self.doc_len)
            .map(|(c, l)| serde_json::json!({"chunk_id": c.chunk_id, "length": l}))
            .collect();
        serde_json::json!({
            "k1": self.params.k1,
            "b": self.params.b,
            "avgdl": self.avgdl,
            "documents": docs,
            "postings": postings,
        })
    }
}
