// SPDX-License-Identifier: Apache-2.0

//! Cross-layer signal chains: simple dataflow paths through the connectivity
//! graph starting at a signal's highest occurrence in the hierarchy.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::llm::{LlmError, ModelSettings, Session, StageTag};
use crate::rtl::{EdgeKind, RtlDesign, SignalGraph, SignalRef};

pub const DEFAULT_MAX_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalChain {
    pub chain_id: String,
    pub origin: SignalRef,
    pub links: Vec<SignalRef>,
    /// `edge_kinds[i]` labels the step into `links[i]`.
    pub edge_kinds: Vec<EdgeKind>,
    /// Stopped by the depth limit or by a successor already on the chain.
    pub truncated: bool,
}

impl SignalChain {
    pub fn nodes(&self) -> impl Iterator<Item = &SignalRef> {
        std::iter::once(&self.origin).chain(self.links.iter())
    }

    /// `module.signal` names joined with ` -> `.
    pub fn display(&self) -> String {
        self.nodes().map(SignalRef::qualified).collect::<Vec<_>>().join(" -> ")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("origin {0} is not a node of the graph")]
    OriginNotInGraph(String),
    #[error("max_depth must be at least 1")]
    InvalidDepth,
    #[error("unparseable chain response: {reason}: {response:?}")]
    UnparseableResponse { reason: String, response: String },
    #[error("model chain {} diverges from the design: {reason}", .chain.display())]
    ChainDivergence { chain: Box<SignalChain>, reason: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Lowest edge kind between two adjacent nodes.
fn kind_between(graph: &SignalGraph, from: usize, to: usize) -> EdgeKind {
    graph
        .edges_between(from, to)
        .map(|e| e.kind)
        .min()
        .expect("adjacent nodes share an edge")
}

/// All maximal simple paths from `origin`, in lexicographic node order.
pub fn extract_chains(
    graph: &SignalGraph,
    origin: &SignalRef,
    max_depth: usize,
) -> Result<Vec<SignalChain>, ChainError> {
    Ok(extract_chains_capped(graph, origin, max_depth, usize::MAX)?.0)
}

/// Like [`extract_chains`] but stops after `max_chains`; the flag reports
/// whether any chain was dropped.
pub fn extract_chains_capped(
    graph: &SignalGraph,
    origin: &SignalRef,
    max_depth: usize,
    max_chains: usize,
) -> Result<(Vec<SignalChain>, bool), ChainError> {
    if max_depth == 0 {
        return Err(ChainError::InvalidDepth);
    }
    let start = graph
        .id_of(origin)
        .ok_or_else(|| ChainError::OriginNotInGraph(origin.path_name()))?;
    let mut paths: Vec<(Vec<usize>, bool)> = Vec::new();
    let mut on_path = vec![false; graph.node_count()];
    let mut path = vec![start];
    on_path[start] = true;
    let capped = dfs(graph, max_depth, max_chains, &mut path, &mut on_path, &mut paths);

    let chains = paths
        .into_iter()
        .enumerate()
        .map(|(i, (p, truncated))| SignalChain {
            chain_id: format!("{}#{i}", origin.path_name()),
            origin: graph.nodes[p[0]].clone(),
            links: p[1..].iter().map(|&n| graph.nodes[n].clone()).collect(),
            edge_kinds: p.windows(2).map(|w| kind_between(graph, w[0], w[1])).collect(),
            truncated,
        })
        .collect();
    Ok((chains, capped))
}

/// Returns true once the cap has been hit.
fn dfs(
    graph: &SignalGraph,
    max_depth: usize,
    max_chains: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<(Vec<usize>, bool)>,
) -> bool {
    let last = *path.last().unwrap();
    let succ = graph.successors(last);
    let open: Vec<usize> = succ.iter().copied().filter(|&s| !on_path[s]).collect();
    if path.len() > max_depth || open.is_empty() {
        if out.len() >= max_chains {
            return true;
        }
        out.push((path.clone(), !succ.is_empty()));
        return false;
    }
    for s in open {
        path.push(s);
        on_path[s] = true;
        let capped = dfs(graph, max_depth, max_chains, path, on_path, out);
        on_path[s] = false;
        path.pop();
        if capped {
            return true;
        }
    }
    false
}

/// True iff every adjacent pair of the chain is an edge of `graph`.
pub fn check_propagation(chain: &SignalChain, graph: &SignalGraph) -> bool {
    let ids: Option<Vec<usize>> = chain.nodes().map(|n| graph.id_of(n)).collect();
    match ids {
        Some(ids) => ids.windows(2).all(|w| graph.has_edge(w[0], w[1])),
        None => false,
    }
}

const SYSTEM: &str = "You trace how a signal propagates through Verilog RTL, one derivation \
step at a time. Answer with the requested final line.";

static NEXT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^NEXT:\s*([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)$").unwrap());

pub enum ChainStep {
    Next { module: String, signal: String },
    End,
}

/// Reads the last non-empty line: `NEXT: module.signal` or `(end)`.
pub fn parse_chain_step(response: &str) -> Result<ChainStep, ChainError> {
    let last = response.lines().map(str::trim).rfind(|l| !l.is_empty()).unwrap_or("");
    if last == "(end)" {
        return Ok(ChainStep::End);
    }
    let c = NEXT.captures(last).ok_or_else(|| ChainError::UnparseableResponse {
        reason: "last line is neither `NEXT: module.signal` nor `(end)`".into(),
        response: response.to_string(),
    })?;
    Ok(ChainStep::Next {
        module: c[1].to_string(),
        signal: c[2].to_string(),
    })
}

fn chain_prompt(design: &RtlDesign, current: &SignalRef, so_far: &[SignalRef]) -> String {
    let def = design.module(&current.module).expect("chain node module exists");
    let src = design
        .file(&def.source_span.file)
        .map(|f| f.slice_lines(def.source_span.line_start, def.source_span.line_end))
        .unwrap_or_default();
    let trail: Vec<String> = so_far.iter().map(SignalRef::qualified).collect();
    format!(
        "Current signal: {}\nInstance path: /{}\nChain so far: {}\n\n\
Enclosing module source:\n```verilog\n{src}\n```\n\n\
Reason step by step about which signal is computed from the current signal, either by an \
assignment in this module or through a port connection into another module. Pick the \
single most relevant derived signal that is not already on the chain.\n\
End with exactly one line: `NEXT: <module>.<signal>` or `(end)` if nothing derives from it.\n",
        current.qualified(),
        current.module_path.join("/"),
        trail.join(" -> "),
    )
}

/// Prompted chain walk, validated against `graph` before it is returned.
pub fn llm_chain(
    design: &RtlDesign,
    graph: &SignalGraph,
    origin: &SignalRef,
    session: &Session,
    model: &ModelSettings,
    max_depth: usize,
) -> Result<SignalChain, ChainError> {
    let start = graph
        .id_of(origin)
        .ok_or_else(|| ChainError::OriginNotInGraph(origin.path_name()))?;
    let mut chain = SignalChain {
        chain_id: format!("{}#llm", origin.path_name()),
        origin: graph.nodes[start].clone(),
        links: Vec::new(),
        edge_kinds: Vec::new(),
        truncated: false,
    };
    let mut path = vec![start];
    let diverge = |chain: &SignalChain, reason: String| ChainError::ChainDivergence {
        chain: Box::new(chain.clone()),
        reason,
    };
    loop {
        let cur = *path.last().unwrap();
        if path.len() > max_depth {
            chain.truncated = !graph.successors(cur).is_empty();
            break;
        }
        let so_far: Vec<SignalRef> = chain.nodes().cloned().collect();
        let req = model.request(
            StageTag::Chain,
            SYSTEM,
            chain_prompt(design, &graph.nodes[cur], &so_far),
        );
        let resp = session.complete(&req)?;
        let (module, signal) = match parse_chain_step(&resp.response_text)? {
            ChainStep::End => break,
            ChainStep::Next { module, signal } => (module, signal),
        };
        // prefer a successor; otherwise any instance of that module
        let next = graph
            .successors(cur)
            .iter()
            .copied()
            .find(|&s| graph.nodes[s].module == module && graph.nodes[s].signal == signal)
            .or_else(|| {
                (0..graph.node_count())
                    .find(|&n| graph.nodes[n].module == module && graph.nodes[n].signal == signal)
            });
        let Some(next) = next else {
            return Err(diverge(&chain, format!("{module}.{signal} is not declared in the design")));
        };
        if path.contains(&next) {
            return Err(diverge(&chain, format!("{module}.{signal} is already on the chain")));
        }
        chain.links.push(graph.nodes[next].clone());
        if !graph.has_edge(cur, next) {
            chain.edge_kinds.push(EdgeKind::Continuous);
            return Err(diverge(
                &chain,
                format!("no dataflow edge {} -> {module}.{signal}", graph.nodes[cur].qualified()),
            ));
        }
        chain.edge_kinds.push(kind_between(graph, cur, next));
        path.push(next);
    }
    if !check_propagation(&chain, graph) {
        return Err(diverge(&chain, "chain fails the propagation check".into()));
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FnBackend, PromptRequest};
    use crate::rtl::{build_connectivity, parse_design, Edge, EdgeOrigin, SourceFile, SourceSpan};
    use std::collections::BTreeSet;
    use std::sync::Mutex;

    fn node(name: &str) -> SignalRef {
        SignalRef {
            module_path: vec![],
            signal: name.to_string(),
            module: "m".into(),
            decl_span: SourceSpan {
                file: "f".into(),
                line_start: 1,
                line_end: 1,
            },
        }
    }

    pub(crate) fn toy(n: usize, edges: &[(usize, usize)]) -> SignalGraph {
        let nodes = (0..n).map(|i| node(&format!("n{i:02}"))).collect();
        let edges = edges
            .iter()
            .map(|&(a, b)| Edge {
                from: a,
                to: b,
                kind: EdgeKind::Continuous,
                origin: EdgeOrigin::Assign {
                    module_path: vec![],
                    module: "m".into(),
                    assign_index: 0,
                    rhs_signal: String::new(),
                },
            })
            .collect();
        SignalGraph::from_parts(nodes, edges)
    }

    fn names(c: &SignalChain) -> Vec<String> {
        c.nodes().map(|n| n.signal.clone()).collect()
    }

    #[test]
    fn isolated_linear_and_fanout() {
        let g = toy(1, &[]);
        let c = extract_chains(&g, &g.nodes[0], 32).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].links.is_empty() && !c[0].truncated);

        let g = toy(3, &[(0, 1), (1, 2)]);
        let c = extract_chains(&g, &g.nodes[0], 32).unwrap();
        assert_eq!(c.iter().map(names).collect::<Vec<_>>(), vec![vec!["n00", "n01", "n02"]]);

        // a->b, a->c->d
        let g = toy(4, &[(0, 1), (0, 2), (2, 3)]);
        let c = extract_chains(&g, &g.nodes[0], 32).unwrap();
        assert_eq!(
            c.iter().map(names).collect::<Vec<_>>(),
            vec![vec!["n00", "n01"], vec!["n00", "n02", "n03"]]
        );
        assert!(c.iter().all(|c| check_propagation(c, &g)));
    }

    #[test]
    fn cycles_and_depth_truncate() {
        let g = toy(3, &[(0, 1), (1, 2), (2, 0)]);
        let c = extract_chains(&g, &g.nodes[0], 32).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].truncated);
        let g = toy(4, &[(0, 1), (1, 2), (2, 3)]);
        let c = extract_chains(&g, &g.nodes[0], 2).unwrap();
        assert_eq!(names(&c[0]), vec!["n00", "n01", "n02"]);
        assert!(c[0].truncated);
        let self_loop = toy(1, &[(0, 0)]);
        let c = extract_chains(&self_loop, &self_loop.nodes[0], 4).unwrap();
        assert!(c[0].truncated && c[0].links.is_empty());
    }

    #[test]
    fn propagation_check() {
        let g = toy(3, &[(0, 1), (1, 2)]);
        let bad = SignalChain {
            chain_id: "x".into(),
            origin: g.nodes[0].clone(),
            links: vec![g.nodes[2].clone()],
            edge_kinds: vec![EdgeKind::Continuous],
            truncated: false,
        };
        assert!(!check_propagation(&bad, &g));
        let single = SignalChain {
            links: vec![],
            edge_kinds: vec![],
            ..bad
        };
        assert!(check_propagation(&single, &g));
    }

    #[test]
    fn cap_reports_drop() {
        // complete binary fan-out of depth 3: 8 leaves
        let edges: Vec<(usize, usize)> = (0..7).flat_map(|i| [(i, 2 * i + 1), (i, 2 * i + 2)]).collect();
        let g = toy(15, &edges);
        let (c, capped) = extract_chains_capped(&g, &g.nodes[0], 32, 5).unwrap();
        assert_eq!(c.len(), 5);
        assert!(capped);
        let (c, capped) = extract_chains_capped(&g, &g.nodes[0], 32, 8).unwrap();
        assert_eq!(c.len(), 8);
        assert!(!capped);
    }

    #[test]
    fn errors() {
        let g = toy(2, &[]);
        assert!(matches!(
            extract_chains(&g, &node("zz"), 3),
            Err(ChainError::OriginNotInGraph(_))
        ));
        assert!(matches!(extract_chains(&g, &g.nodes[0], 0), Err(ChainError::InvalidDepth)));
    }

    fn small_design() -> (RtlDesign, SignalGraph) {
        let d = parse_design(
            &[SourceFile::new(
                "m.v",
                "module m(input a, output b, output c);\nassign b = a;\nassign c = 1'b0;\nendmodule\n",
            )],
            None,
        )
        .unwrap();
        let g = build_connectivity(&d);
        (d, g)
    }

    fn scripted(answers: Vec<&'static str>) -> Session {
        let q = Mutex::new(answers.into_iter());
        Session::live(FnBackend(move |r: &PromptRequest| {
            assert!(r.user_text.starts_with("Current signal: "));
            Ok(q.lock().unwrap().next().expect("enough answers").to_string())
        }))
    }

    #[test]
    fn llm_chain_follows_valid_answers() {
        let (d, g) = small_design();
        let a = d.signal_ref(&[], "a").unwrap();
        let s = scripted(vec!["b is assigned from a.\nNEXT: m.b", "(end)"]);
        let c = llm_chain(&d, &g, &a, &s, &ModelSettings::default(), 8).unwrap();
        assert_eq!(names(&c), vec!["a", "b"]);
        assert!(check_propagation(&c, &g));

        let s = scripted(vec!["(end)"]);
        let c = llm_chain(&d, &g, &a, &s, &ModelSettings::default(), 8).unwrap();
        assert!(c.links.is_empty());
    }

    #[test]
    fn llm_chain_divergence_and_grammar() {
        let (d, g) = small_design();
        let a = d.signal_ref(&[], "a").unwrap();
        let s = scripted(vec!["NEXT: m.c"]);
        assert!(matches!(
            llm_chain(&d, &g, &a, &s, &ModelSettings::default(), 8),
            Err(ChainError::ChainDivergence { .. })
        ));
        let s = scripted(vec!["NEXT: nowhere.x"]);
        assert!(matches!(
            llm_chain(&d, &g, &a, &s, &ModelSettings::default(), 8),
            Err(ChainError::ChainDivergence { .. })
        ));
        let s = scripted(vec!["I think b"]);
        assert!(matches!(
            llm_chain(&d, &g, &a, &s, &ModelSettings::default(), 8),
            Err(ChainError::UnparseableResponse { .. })
        ));
    }

    #[test]
    fn chain_ids_are_unique() {
        let edges: Vec<(usize, usize)> = vec![(0, 1), (0, 2), (1, 3), (2, 3)];
        let g = toy(4, &edges);
        let c = extract_chains(&g, &g.nodes[0], 8).unwrap();
        let ids: BTreeSet<_> = c.iter().map(|c| c.chain_id.clone()).collect();
        assert_eq!(ids.len(), c.len());
    }
}
