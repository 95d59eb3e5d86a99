// SPDX-License-Identifier: Apache-2.0

//! Maps objectives, through their signal chains, to the code segments that
//! define each chain signal: declarations, defining assignments, and the
//! instantiations that bind it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chain::SignalChain;
use crate::entity::EntityName;
use crate::llm::{LlmError, ModelSettings, Session, StageTag};
use crate::objective::VerificationObjective;
use crate::rtl::{RtlDesign, SignalRef, SourceSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Port,
    Declaration,
    Assignment,
    Instantiation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSegment {
    pub file: String,
    /// 1-based, inclusive.
    pub line_span: (u32, u32),
    pub module: String,
    pub matched_signals: BTreeSet<EntityName>,
    pub segment_kind: SegmentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResult {
    pub objective_id: String,
    pub chains_used: Vec<String>,
    pub segments: Vec<CodeSegment>,
    pub unresolved_signals: BTreeSet<EntityName>,
}

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("signal {0} is not declared in module {1}")]
    SignalNotFound(String, String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

fn entity(name: &str) -> EntityName {
    EntityName {
        canonical: name.to_lowercase(),
        surface: name.to_string(),
    }
}

fn segment(span: &SourceSpan, module: &str, signal: &str, kind: SegmentKind) -> CodeSegment {
    CodeSegment {
        file: span.file.clone(),
        line_span: (span.line_start, span.line_end),
        module: module.to_string(),
        matched_signals: BTreeSet::from([entity(signal)]),
        segment_kind: kind,
    }
}

/// Declaration, defining-assignment, and binding segments of one signal.
/// Positional connections carry no formal name and are not reported.
pub fn match_segments(signal: &SignalRef, design: &RtlDesign) -> Result<Vec<CodeSegment>, BridgeError> {
    let not_found = || BridgeError::SignalNotFound(signal.signal.clone(), signal.module.clone());
    let def = design.module(&signal.module).ok_or_else(not_found)?;
    let name = signal.signal.as_str();
    let mut out = Vec::new();
    if let Some(p) = def.port(name) {
        out.push(segment(&p.span, &def.name, name, SegmentKind::Port));
        if let Some(ns) = &p.net_span {
            out.push(segment(ns, &def.name, name, SegmentKind::Declaration));
        }
    } else if let Some(n) = def.nets.iter().find(|n| n.name == name) {
        out.push(segment(&n.span, &def.name, name, SegmentKind::Declaration));
    } else {
        return Err(not_found());
    }
    for a in def.assigns.iter().filter(|a| a.lhs == name) {
        out.push(segment(&a.source_span, &def.name, name, SegmentKind::Assignment));
    }
    for inst in &def.instances {
        if inst.connections.iter().any(|c| c.actual_signals.iter().any(|s| s == name)) {
            out.push(segment(&inst.span, &def.name, name, SegmentKind::Instantiation));
        }
    }
    if let Some((inst_name, parent_path)) = signal.module_path.split_last() {
        if let Some(parent) = design.module_at(parent_path) {
            for inst in parent.instances.iter().filter(|i| &i.name == inst_name) {
                if inst.connections.iter().any(|c| c.named && c.formal == name) {
                    out.push(segment(&inst.span, &parent.name, name, SegmentKind::Instantiation));
                }
            }
        }
    }
    Ok(out)
}

/// Merges segments with the same location and kind, then orders by file and
/// line.
pub fn dedup_segments(segs: impl IntoIterator<Item = CodeSegment>) -> Vec<CodeSegment> {
    let mut merged: BTreeMap<(String, (u32, u32), SegmentKind, String), BTreeSet<EntityName>> = BTreeMap::new();
    for s in segs {
        merged
            .entry((s.file, s.line_span, s.segment_kind, s.module))
            .or_default()
            .extend(s.matched_signals);
    }
    merged
        .into_iter()
        .map(|((file, line_span, segment_kind, module), matched_signals)| CodeSegment {
            file,
            line_span,
            module,
            matched_signals,
            segment_kind,
        })
        .collect()
}

pub fn bridge(
    objectives: &[VerificationObjective],
    chains: &[SignalChain],
    design: &RtlDesign,
) -> Vec<BridgeResult> {
    objectives
        .iter()
        .map(|o| bridge_one(o, chains, design))
        .collect()
}

fn bridge_one(o: &VerificationObjective, chains: &[SignalChain], design: &RtlDesign) -> BridgeResult {
    let involved: BTreeSet<&str> = o.involved_signals.iter().map(|e| e.canonical.as_str()).collect();
    let used: Vec<&SignalChain> = chains
        .iter()
        .filter(|c| involved.contains(c.origin.signal.to_lowercase().as_str()))
        .collect();
    let signals: BTreeSet<&SignalRef> = used.iter().flat_map(|c| c.nodes()).collect();
    let mut segs = Vec::new();
    for s in signals {
        // chain nodes come from this design's graph, so lookup cannot fail
        segs.extend(match_segments(s, design).unwrap_or_default());
    }
    let segments = dedup_segments(segs);
    let covered: BTreeSet<&EntityName> = segments.iter().flat_map(|s| s.matched_signals.iter()).collect();
    let unresolved_signals = o
        .involved_signals
        .iter()
        .filter(|e| !covered.contains(e))
        .cloned()
        .collect();
    BridgeResult {
        objective_id: o.objective_id.clone(),
        chains_used: used.iter().map(|c| c.chain_id.clone()).collect(),
        segments,
        unresolved_signals,
    }
}

/// Source text of a segment.
pub fn segment_text(design: &RtlDesign, seg: &CodeSegment) -> String {
    design
        .file(&seg.file)
        .map(|f| f.slice_lines(seg.line_span.0, seg.line_span.1))
        .unwrap_or_default()
}

/// Disagreement between the structural segments and the model's picks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub objective_id: String,
    /// `file:start-end` ranges the model named that overlap no structural segment.
    pub model_only: Vec<String>,
    /// Structural segments the model did not name.
    pub structural_only: Vec<String>,
}

const SYSTEM: &str = "You locate the Verilog code that defines the signals a verification \
objective talks about.";

/// Asks the model which source lines define the objective's signals and
/// compares its answer with the structural result. Response lines of the form
/// `SEGMENT: file:start-end` are read; everything else is ignored.
pub fn cross_check(
    objective: &VerificationObjective,
    result: &BridgeResult,
    design: &RtlDesign,
    session: &Session,
    model: &ModelSettings,
) -> Result<CrossCheck, BridgeError> {
    let mut listing = String::new();
    for f in &design.files {
        listing.push_str(&format!("// file: {}\n", f.path));
        for (i, line) in f.text.lines().enumerate() {
            listing.push_str(&format!("{:4}: {line}\n", i + 1));
        }
    }
    let sigs: Vec<&str> = objective.involved_signals.iter().map(|e| e.canonical.as_str()).collect();
    let user = format!(
        "Objective {}: {}\nSignals: {}\n\nDesign source with line numbers:\n{listing}\n\
Scan the source and list every declaration, assignment, or instantiation that defines one of \
the signals, one per line as `SEGMENT: <file>:<first line>-<last line>`.\n",
        objective.objective_id,
        objective.statement,
        sigs.join(", ")
    );
    let resp = session.complete(&model.request(StageTag::Bridge, SYSTEM, user))?;
    let mut picks: Vec<(String, u32, u32)> = Vec::new();
    for line in resp.response_text.lines() {
        let Some(rest) = line.trim().strip_prefix("SEGMENT:") else { continue };
        let Some((file, range)) = rest.trim().rsplit_once(':') else { continue };
        let Some((a, b)) = range.split_once('-') else { continue };
        if let (Ok(a), Ok(b)) = (a.trim().parse(), b.trim().parse()) {
            picks.push((file.to_string(), a, b));
        }
    }
    let overlaps = |f: &str, a: u32, b: u32, s: &CodeSegment| s.file == f && a <= s.line_span.1 && s.line_span.0 <= b;
    let model_only = picks
        .iter()
        .filter(|(f, a, b)| !result.segments.iter().any(|s| overlaps(f, *a, *b, s)))
        .map(|(f, a, b)| format!("{f}:{a}-{b}"))
        .collect();
    let structural_only = result
        .segments
        .iter()
        .filter(|s| !picks.iter().any(|(f, a, b)| overlaps(f, *a, *b, s)))
        .map(|s| format!("{}:{}-{}", s.file, s.line_span.0, s.line_span.1))
        .collect();
    Ok(CrossCheck {
        objective_id: objective.objective_id.clone(),
        model_only,
        structural_only,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::extract_chains;
    use crate::entity::normalize_entity;
    use crate::llm::{FnBackend, PromptRequest};
    use crate::rtl::{build_connectivity, parse_design, SourceFile};

    const SRC: &str = "module child(input p, output q);
  assign q = p;
endmodule
module top(input a, input clk, output b, output y);
  wire w;
  reg r;
  assign w = a;
  always @(posedge clk) r <= w;
  always @(posedge clk) if (a) r <= 1'b0;
  child u1 (.p(w), .q(b));
  child u2 (.p(w), .q(y));
endmodule
";

    fn design() -> RtlDesign {
        parse_design(&[SourceFile::new("t.v", SRC)], None).unwrap()
    }

    fn kinds(segs: &[CodeSegment]) -> Vec<(SegmentKind, u32)> {
        segs.iter().map(|s| (s.segment_kind, s.line_span.0)).collect()
    }

    #[test]
    fn unassigned_port_has_only_its_declaration() {
        let d = design();
        let s = match_segments(&d.signal_ref(&[], "clk").unwrap(), &d).unwrap();
        assert_eq!(kinds(&s), vec![(SegmentKind::Port, 4)]);
    }

    #[test]
    fn reg_in_two_always_blocks() {
        let d = design();
        let s = match_segments(&d.signal_ref(&[], "r").unwrap(), &d).unwrap();
        assert_eq!(
            kinds(&s),
            vec![(SegmentKind::Declaration, 6), (SegmentKind::Assignment, 8), (SegmentKind::Assignment, 9)]
        );
    }

    #[test]
    fn signal_bound_into_two_instances() {
        let d = design();
        let s = match_segments(&d.signal_ref(&[], "w").unwrap(), &d).unwrap();
        assert_eq!(
            kinds(&s),
            vec![
                (SegmentKind::Declaration, 5),
                (SegmentKind::Assignment, 7),
                (SegmentKind::Instantiation, 10),
                (SegmentKind::Instantiation, 11)
            ]
        );
    }

    #[test]
    fn child_port_includes_parent_binding() {
        let d = design();
        let s = match_segments(&d.signal_ref(&["u1".to_string()], "p").unwrap(), &d).unwrap();
        assert_eq!(
            kinds(&s),
            vec![(SegmentKind::Port, 1), (SegmentKind::Instantiation, 10)]
        );
        assert_eq!(s[1].module, "top");
    }

    fn objective(sigs: &[&str]) -> VerificationObjective {
        VerificationObjective {
            objective_id: "o_obj0".into(),
            target_signal: normalize_entity(sigs[0]).unwrap(),
            statement: "s".into(),
            involved_signals: sigs.iter().map(|s| normalize_entity(s).unwrap()).collect(),
            layer_tags: Default::default(),
            provenance_chunk_ids: vec![],
            unresolved: false,
        }
    }

    #[test]
    fn bridge_covers_chain_signals() {
        let d = design();
        let g = build_connectivity(&d);
        let chains = extract_chains(&g, &d.signal_ref(&[], "a").unwrap(), 32).unwrap();
        let r = &bridge(&[objective(&["a", "nonexistent"])], &chains, &d)[0];
        assert_eq!(r.chains_used.len(), chains.len());
        let covered: BTreeSet<String> = r
            .segments
            .iter()
            .flat_map(|s| s.matched_signals.iter().map(|e| e.canonical.clone()))
            .collect();
        for c in &chains {
            for n in c.nodes() {
                assert!(covered.contains(&n.signal.to_lowercase()), "{}", n.signal);
            }
        }
        assert_eq!(r.unresolved_signals, BTreeSet::from([normalize_entity("nonexistent").unwrap()]));
        let mut sorted = r.segments.clone();
        sorted.sort_by_key(|s| (s.file.clone(), s.line_span));
        assert_eq!(sorted, r.segments);
        for s in &r.segments {
            let text = segment_text(&d, s);
            assert!(s.matched_signals.iter().any(|m| text.contains(&m.surface)));
        }
    }

    #[test]
    fn no_matching_chain_means_all_unresolved() {
        let d = design();
        let r = &bridge(&[objective(&["a", "b"])], &[], &d)[0];
        assert!(r.segments.is_empty());
        assert_eq!(r.unresolved_signals.len(), 2);
    }

    #[test]
    fn cross_check_reports_both_sides() {
        let d = design();
        let g = build_connectivity(&d);
        let chains = extract_chains(&g, &d.signal_ref(&[], "clk").unwrap(), 32).unwrap();
        let o = objective(&["clk"]);
        let r = &bridge(std::slice::from_ref(&o), &chains, &d)[0];
        let s = Session::live(FnBackend(|_: &PromptRequest| {
            Ok("clk is a port.\nSEGMENT: t.v:4-4\nSEGMENT: t.v:2-2".to_string())
        }));
        let cc = cross_check(&o, r, &d, &s, &ModelSettings::default()).unwrap();
        assert_eq!(cc.model_only, vec!["t.v:2-2"]);
        assert!(cc.structural_only.iter().all(|x| x != "t.v:4-4"));
    }
}
