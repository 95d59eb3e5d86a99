// SPDX-License-Identifier: Apache-2.0

//! Verification objectives for one signal, drawn from its retrieved chunks.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{render_excerpts, SpecChunk};
use crate::entity::{normalize_entity, EntityError, EntityName};
use crate::llm::{LlmError, ModelSettings, Session, StageTag};
use crate::rtl::RtlDesign;

pub const DEFAULT_CONTEXT_BUDGET: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerTag {
    TopLevel,
    SubLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationObjective {
    pub objective_id: String,
    pub target_signal: EntityName,
    pub statement: String,
    /// Response order, target last if the response omitted it.
    pub involved_signals: Vec<EntityName>,
    pub layer_tags: BTreeSet<LayerTag>,
    pub provenance_chunk_ids: Vec<String>,
    /// Set when no involved signal resolves in the design.
    pub unresolved: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ObjectiveError {
    #[error("unparseable objective response line {line}: {reason}")]
    UnparseableResponse { line: usize, reason: String },
    #[error("response for {0} contains no OBJ lines")]
    NoObjectives(String),
    #[error("no chunks for {0}")]
    NoChunks(String),
    #[error("objective {0}: none of its signals is declared in the design")]
    UnresolvedSignals(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

const SYSTEM: &str = "You are a hardware verification engineer. You turn specification text \
into precise, checkable verification objectives.";

pub fn objective_prompt(signal: &EntityName, excerpts: &str) -> String {
    format!(
        "Target signal: {}\n\nSpecification excerpts:\n{excerpts}\
Work step by step:\n\
1. Collect what the excerpts say about the target signal, including register maps, \
timing diagrams, and state descriptions.\n\
2. Note structural facts: which registers or modules drive or consume it, at the top \
level and inside submodules.\n\
3. Note temporal relations: what must hold before, while, or after it changes.\n\
4. State each checkable behaviour as one objective.\n\
Finish with one line per objective, exactly:\n\
OBJ: <objective statement> | SIGNALS: <comma-separated signal names>\n",
        signal.canonical
    )
}

/// Parses every `OBJ:` line. Other lines are reasoning and are skipped.
pub fn parse_objectives(
    response: &str,
    signal: &EntityName,
    provenance: &[String],
) -> Result<Vec<VerificationObjective>, ObjectiveError> {
    let mut out = Vec::new();
    for (i, raw) in response.lines().enumerate() {
        let line = raw.trim();
        let Some(rest) = line.strip_prefix("OBJ:") else { continue };
        let bad = |reason: String| ObjectiveError::UnparseableResponse { line: i + 1, reason };
        let (stmt, sigs) = rest
            .rsplit_once("| SIGNALS:")
            .ok_or_else(|| bad("missing \"| SIGNALS:\" field".into()))?;
        let statement = stmt.trim();
        if statement.is_empty() {
            return Err(bad("empty objective statement".into()));
        }
        let mut involved: Vec<EntityName> = Vec::new();
        let sigs = sigs.trim();
        if !sigs.is_empty() && sigs != "(none)" {
            for s in sigs.split(',') {
                let e = normalize_entity(s).map_err(|e: EntityError| bad(e.to_string()))?;
                if !e.canonical.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
                    || e.canonical.as_bytes()[0].is_ascii_digit()
                {
                    return Err(bad(format!("{:?} is not an identifier", s.trim())));
                }
                if !involved.contains(&e) {
                    involved.push(e);
                }
            }
        }
        if !involved.contains(signal) {
            involved.push(signal.clone());
        }
        out.push(VerificationObjective {
            objective_id: format!("{}_obj{}", signal.canonical, out.len()),
            target_signal: signal.clone(),
            statement: statement.to_string(),
            involved_signals: involved,
            layer_tags: BTreeSet::new(),
            provenance_chunk_ids: provenance.to_vec(),
            unresolved: false,
        });
    }
    if out.is_empty() {
        return Err(ObjectiveError::NoObjectives(signal.canonical.clone()));
    }
    Ok(out)
}

/// `chunks` in retrieval rank order; those past `budget` bytes are left out
/// of both the prompt and the provenance.
pub fn generate_objectives(
    signal: &EntityName,
    chunks: &[&SpecChunk],
    session: &Session,
    model: &ModelSettings,
    budget: usize,
) -> Result<Vec<VerificationObjective>, ObjectiveError> {
    if chunks.is_empty() {
        return Err(ObjectiveError::NoChunks(signal.canonical.clone()));
    }
    let (excerpts, ids) = render_excerpts(chunks.iter().copied(), budget);
    let req = model.request(StageTag::Objective, SYSTEM, objective_prompt(signal, &excerpts));
    let resp = session.complete(&req)?;
    parse_objectives(&resp.response_text, signal, &ids)
}

pub fn classify_layers(
    objective: &VerificationObjective,
    design: &RtlDesign,
) -> Result<BTreeSet<LayerTag>, ObjectiveError> {
    let mut tags = BTreeSet::new();
    for s in &objective.involved_signals {
        let Ok(loc) = design.locate_signal(&s.canonical) else { continue };
        if loc.refs.iter().any(|r| r.module_path.is_empty()) {
            tags.insert(LayerTag::TopLevel);
        } else {
            tags.insert(LayerTag::SubLevel);
        }
    }
    if tags.is_empty() {
        return Err(ObjectiveError::UnresolvedSignals(objective.objective_id.clone()));
    }
    Ok(tags)
}

/// Fills `layer_tags`, flagging objectives whose signals all fail to resolve.
pub fn apply_layers(objectives: &mut [VerificationObjective], design: &RtlDesign) {
    for o in objectives {
        match classify_layers(o, design) {
            Ok(t) => {
                o.layer_tags = t;
                o.unresolved = false;
            }
            Err(_) => {
                o.layer_tags.clear();
                o.unresolved = true;
            }
        }
    }
}
