// SPDX-License-Identifier: Apache-2.0

//! Contextual entity extraction and worklist expansion.
//!
//! Per signal, two prompts ask for the entities that describe the signal
//! itself (`TARGET`) and every entity in its description (`CONTEXT`). The
//! purely contextual set is computed locally as `CONTEXT - TARGET`, and its
//! members are queued for their own round until nothing new appears.

use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{render_excerpts, SpecChunk};
use crate::llm::{LlmError, ModelSettings, Session, StageTag};
use crate::retrieval::{make_query, Index};

/// A signal, bit, or register name. Equality, ordering, and hashing use only
/// the canonical form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntityName {
    pub canonical: String,
    pub surface: String,
}

impl PartialEq for EntityName {
    fn eq(&self, other: &Self) -> bool {
        self.canonical == other.canonical
    }
}

impl Eq for EntityName {}

impl Hash for EntityName {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.canonical.hash(state);
    }
}

impl PartialOrd for EntityName {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EntityName {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical.cmp(&other.canonical)
    }
}

impl std::fmt::Display for EntityName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.canonical)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EntityError {
    #[error("entity name is empty")]
    EmptyEntity,
    #[error("entity name {0:?} contains whitespace")]
    InvalidEntity(String),
    #[error("unparseable {stage} response: {reason}: {response:?}")]
    UnparseableResponse {
        stage: StageTag,
        reason: String,
        response: String,
    },
    #[error("no chunks to extract entities from")]
    NoChunks,
    #[error("worklist did not converge within {} rounds", .0.iterations)]
    RoundLimitExceeded(Box<ExpansionResult>),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Retrieval(#[from] crate::retrieval::RetrievalError),
}

static BIT_SUFFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[[0-9]+(:[0-9]+)?\]$").unwrap());
static IDENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z_][A-Za-z0-9_]*(\[[0-9]+(:[0-9]+)?\])?$").unwrap());

/// Trims, strips one trailing `[i]` or `[msb:lsb]`, and lowercases.
pub fn normalize_entity(raw: &str) -> Result<EntityName, EntityError> {
    let t = raw.trim();
    let base = BIT_SUFFIX.replace(t, "");
    let canonical = base.trim().to_lowercase();
    if canonical.is_empty() {
        return Err(EntityError::EmptyEntity);
    }
    if canonical.chars().any(char::is_whitespace) {
        return Err(EntityError::InvalidEntity(raw.to_string()));
    }
    Ok(EntityName {
        canonical,
        surface: raw.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySets {
    pub target_signal: EntityName,
    pub e_target: BTreeSet<EntityName>,
    pub e_context: BTreeSet<EntityName>,
    pub e_final: BTreeSet<EntityName>,
    /// Retrieval rank order.
    pub source_chunk_ids: Vec<String>,
}

/// `context - (target ∩ context)`.
pub fn finalize_context(
    e_target: &BTreeSet<EntityName>,
    e_context: &BTreeSet<EntityName>,
) -> BTreeSet<EntityName> {
    let overlap: BTreeSet<&EntityName> = e_target.intersection(e_context).collect();
    e_context
        .iter()
        .filter(|e| !overlap.contains(e))
        .cloned()
        .collect()
}

/// Parses `"<HEADER>: a, b[3], c"` or `"<HEADER>: (none)"` from the first line.
pub fn parse_entity_line(
    response: &str,
    header: &str,
    stage: StageTag,
) -> Result<BTreeSet<EntityName>, EntityError> {
    let bad = |reason: &str| EntityError::UnparseableResponse {
        stage,
        reason: reason.to_string(),
        response: response.to_string(),
    };
    let first = response.lines().next().unwrap_or("").trim_end();
    let rest = first
        .strip_prefix(header)
        .and_then(|r| r.strip_prefix(": "))
        .ok_or_else(|| bad(&format!("first line must start with \"{header}: \"")))?;
    if rest.trim() == "(none)" {
        return Ok(BTreeSet::new());
    }
    let mut out = BTreeSet::new();
    for item in rest.split(',') {
        let item = item.trim();
        if !IDENT.is_match(item) {
            return Err(bad(&format!("{item:?} is not an identifier")));
        }
        out.insert(normalize_entity(item)?);
    }
    Ok(out)
}

const SYSTEM: &str = "You analyse hardware specification text and name the signals, \
registers, and bits it mentions. Follow the requested answer format exactly.";

fn target_prompt(signal: &EntityName, excerpts: &str) -> String {
    format!(
        "Target signal: {}\n\nSpecification excerpts:\n{excerpts}\
Task: list the names (signals, registers, bit fields) that directly describe the target \
signal itself, including aliases and its own bits.\n\
Answer on one line as `TARGET: name1, name2` or `TARGET: (none)`.\n",
        signal.canonical
    )
}

fn context_prompt(signal: &EntityName, target: &BTreeSet<EntityName>, excerpts: &str) -> String {
    let t: Vec<&str> = target.iter().map(|e| e.canonical.as_str()).collect();
    let t = if t.is_empty() { "(none)".to_string() } else { t.join(", ") };
    format!(
        "Target signal: {}\nNames describing the target: {t}\n\nSpecification excerpts:\n{excerpts}\
Task: list every signal, register, or bit name that appears in the description of the \
target signal, whether or not it describes the target itself.\n\
Answer on one line as `CONTEXT: name1, name2` or `CONTEXT: (none)`.\n",
        signal.canonical
    )
}

pub fn extract_entities(
    signal: &EntityName,
    chunks: &[&SpecChunk],
    session: &Session,
    model: &ModelSettings,
) -> Result<EntitySets, EntityError> {
    if chunks.is_empty() {
        return Err(EntityError::NoChunks);
    }
    let (excerpts, ids) = render_excerpts(chunks.iter().copied(), usize::MAX);
    let req = model.request(StageTag::EntityTarget, SYSTEM, target_prompt(signal, &excerpts));
    let resp = session.complete(&req)?;
    let e_target = parse_entity_line(&resp.response_text, "TARGET", StageTag::EntityTarget)?;
    let req = model.request(
        StageTag::EntityContext,
        SYSTEM,
        context_prompt(signal, &e_target, &excerpts),
    );
    let resp = session.complete(&req)?;
    let e_context = parse_entity_line(&resp.response_text, "CONTEXT", StageTag::EntityContext)?;
    let e_final = finalize_context(&e_target, &e_context);
    Ok(EntitySets {
        target_signal: signal.clone(),
        e_target,
        e_context,
        e_final,
        source_chunk_ids: ids,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    pub seed: EntityName,
    /// Visit order.
    pub visited: Vec<EntityName>,
    pub rounds: Vec<EntitySets>,
    pub accumulated_chunks: BTreeSet<String>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ExpansionLimits {
    pub k: usize,
    pub max_rounds: usize,
}

impl Default for ExpansionLimits {
    fn default() -> Self {
        ExpansionLimits { k: 5, max_rounds: 64 }
    }
}

/// FIFO worklist from `seed`. A signal whose query retrieves nothing gets an
/// empty round and no prompt. Hitting `max_rounds` with work left returns
/// [`EntityError::RoundLimitExceeded`] carrying the partial result.
pub fn expand_worklist(
    seed: &EntityName,
    index: &Index,
    session: &Session,
    model: &ModelSettings,
    limits: ExpansionLimits,
) -> Result<ExpansionResult, EntityError> {
    let mut queue = VecDeque::from([seed.clone()]);
    let mut enqueued: BTreeSet<EntityName> = BTreeSet::from([seed.clone()]);
    let mut result = ExpansionResult {
        seed: seed.clone(),
        visited: Vec::new(),
        rounds: Vec::new(),
        accumulated_chunks: BTreeSet::new(),
        iterations: 0,
        converged: false,
    };
    while let Some(current) = queue.pop_front() {
        if result.iterations >= limits.max_rounds.max(1) {
            queue.push_front(current);
            return Err(EntityError::RoundLimitExceeded(Box::new(result)));
        }
        let ranked = index.retrieve(&make_query(&current.canonical)?, limits.k);
        let sets = if ranked.is_empty() {
            EntitySets {
                target_signal: current.clone(),
                e_target: BTreeSet::new(),
                e_context: BTreeSet::new(),
                e_final: BTreeSet::new(),
                source_chunk_ids: Vec::new(),
            }
        } else {
            let chunks: Vec<&SpecChunk> = ranked.iter().map(|r| &r.chunk).collect();
            extract_entities(&current, &chunks, session, model)?
        };
        result.accumulated_chunks.extend(sets.source_chunk_ids.iter().cloned());
        for e in &sets.e_final {
            if enqueued.insert(e.clone()) {
                queue.push_back(e.clone());
            }
        }
        result.visited.push(current);
        result.rounds.push(sets);
        result.iterations += 1;
    }
    result.converged = true;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SpecChunk;
    use crate::llm::{FnBackend, PromptRequest};
    use crate::retrieval::{build_index, Bm25Params};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn n(s: &str) -> EntityName {
        normalize_entity(s).unwrap()
    }

    fn set(names: &[&str]) -> BTreeSet<EntityName> {
        names.iter().map(|s| n(s)).collect()
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(n("ctr[7]").canonical, "ctr");
        assert_eq!(n("CTR").canonical, "ctr");
        assert_eq!(n(" prer[15:8] ").canonical, "prer");
        assert_eq!(n("CTR").surface, "CTR");
        assert_eq!(n("ctr[7]"), n("CTR"));
        assert!(matches!(normalize_entity("  "), Err(EntityError::EmptyEntity)));
        assert!(matches!(normalize_entity("a b"), Err(EntityError::InvalidEntity(_))));
    }

    #[test]
    fn finalize_examples() {
        assert_eq!(finalize_context(&set(&["a", "b"]), &set(&["b", "c"])), set(&["c"]));
        assert!(finalize_context(&set(&["a"]), &set(&[])).is_empty());
        assert!(finalize_context(&set(&["a", "b"]), &set(&["a", "b"])).is_empty());
    }

    #[test]
    fn grammar() {
        let t = parse_entity_line("TARGET: ctr, core_en", "TARGET", StageTag::EntityTarget).unwrap();
        assert_eq!(t, set(&["ctr", "core_en"]));
        let c = parse_entity_line("CONTEXT: (none)\nmore prose", "CONTEXT", StageTag::EntityContext).unwrap();
        assert!(c.is_empty());
        for bad in [
            "here are some entities: ctr",
            "TARGET:ctr",
            "TARGET: ",
            "TARGET: ctr,, sr",
            "TARGET: ctr[7:]",
            "TARGET: 7ctr",
        ] {
            assert!(
                parse_entity_line(bad, "TARGET", StageTag::EntityTarget).is_err(),
                "{bad}"
            );
        }
    }

    fn chunk(id: &str, text: &str) -> SpecChunk {
        SpecChunk {
            chunk_id: id.into(),
            doc_id: "d".into(),
            ordinal: 0,
            text: text.into(),
            char_span: (0, text.len()),
            core_start: 0,
        }
    }

    /// Backend answering from an adjacency map keyed by the target line.
    fn graph_session(edges: BTreeMap<String, Vec<String>>) -> Session {
        Session::live(FnBackend(move |r: &PromptRequest| {
            let sig = r.user_text.lines().next().unwrap().trim_start_matches("Target signal: ").to_string();
            Ok(match r.stage_tag {
                StageTag::EntityTarget => format!("TARGET: {sig}"),
                _ => match edges.get(&sig) {
                    Some(v) if !v.is_empty() => format!("CONTEXT: {sig}, {}", v.join(", ")),
                    _ => "CONTEXT: (none)".to_string(),
                },
            })
        }))
    }

    fn graph_index(nodes: &[String]) -> Index {
        let chunks: Vec<SpecChunk> = nodes
            .iter()
            .map(|s| chunk(&format!("c_{s}"), &format!("{s} is a signal.")))
            .collect();
        build_index(&chunks, Bm25Params::default()).unwrap()
    }

    #[test]
    fn fixture_example_sets() {
        let s = Session::live(FnBackend(|r: &PromptRequest| {
            Ok(match r.stage_tag {
                StageTag::EntityTarget => "TARGET: ctr, core_en".into(),
                _ => "CONTEXT: core_en, sr, prer".into(),
            })
        }));
        let c = chunk("x", "ctr text");
        let sets = extract_entities(&n("ctr"), &[&c], &s, &ModelSettings::default()).unwrap();
        assert_eq!(sets.e_target, set(&["ctr", "core_en"]));
        assert_eq!(sets.e_context, set(&["core_en", "sr", "prer"]));
        assert_eq!(sets.e_final, set(&["sr", "prer"]));
        assert_eq!(sets.source_chunk_ids, vec!["x"]);
    }

    #[test]
    fn chain_and_cycle_expansion() {
        let nodes: Vec<String> = ["seed", "a", "b"].iter().map(|s| s.to_string()).collect();
        let idx = graph_index(&nodes);
        let edges = BTreeMap::from([
            ("seed".to_string(), vec!["a".to_string()]),
            ("a".to_string(), vec!["b".to_string()]),
        ]);
        let r = expand_worklist(&n("seed"), &idx, &graph_session(edges), &ModelSettings::default(), ExpansionLimits::default())
            .unwrap();
        assert_eq!(r.visited, vec![n("seed"), n("a"), n("b")]);
        assert_eq!(r.iterations, 3);

        let edges = BTreeMap::from([
            ("seed".to_string(), vec!["a".to_string()]),
            ("a".to_string(), vec!["seed".to_string()]),
        ]);
        let r = expand_worklist(&n("seed"), &idx, &graph_session(edges), &ModelSettings::default(), ExpansionLimits::default())
            .unwrap();
        assert_eq!(r.iterations, 2);
        assert!(r.converged);
    }

    #[test]
    fn empty_retrieval_makes_no_call() {
        let idx = graph_index(&["other".to_string()]);
        let s = graph_session(BTreeMap::new());
        let r = expand_worklist(&n("seed"), &idx, &s, &ModelSettings::default(), ExpansionLimits::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(s.call_count(), 0);
    }

    #[test]
    fn round_limit_returns_partial() {
        let nodes: Vec<String> = (0..5).map(|i| format!("n{i}")).collect();
        let edges = (0..4).map(|i| (format!("n{i}"), vec![format!("n{}", i + 1)])).collect();
        let limits = ExpansionLimits { k: 5, max_rounds: 2 };
        match expand_worklist(&n("n0"), &graph_index(&nodes), &graph_session(edges), &ModelSettings::default(), limits) {
            Err(EntityError::RoundLimitExceeded(partial)) => {
                assert_eq!(partial.iterations, 2);
                assert!(!partial.converged);
            }
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn finalize_is_difference(
            t in proptest::collection::btree_set("[a-e]{1,2}", 0..10),
            c in proptest::collection::btree_set("[a-e]{1,2}", 0..10),
        ) {
            let t: BTreeSet<EntityName> = t.iter().map(|s| n(s)).collect();
            let c: BTreeSet<EntityName> = c.iter().map(|s| n(s)).collect();
            let f = finalize_context(&t, &c);
            prop_assert_eq!(&f, &c.difference(&t).cloned().collect());
            prop_assert!(f.is_disjoint(&t));
        }

        #[test]
        fn accumulated_chunks_never_shrink(extra in 0usize..4) {
            let nodes: Vec<String> = (0..6).map(|i| format!("n{i}")).collect();
            let edges = (0..5).map(|i| (format!("n{i}"), vec![format!("n{}", (i + 1 + extra) % 6)])).collect();
            let r = expand_worklist(&n("n0"), &graph_index(&nodes), &graph_session(edges), &ModelSettings::default(), ExpansionLimits::default()).unwrap();
            let mut acc = BTreeSet::new();
            for round in &r.rounds {
                let before = acc.len();
                acc.extend(round.source_chunk_ids.iter().cloned());
                prop_assert!(acc.len() >= before);
            }
            prop_assert_eq!(acc, r.accumulated_chunks);
        }
    }
}
