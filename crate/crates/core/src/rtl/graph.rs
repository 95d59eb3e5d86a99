// SPDX-License-Identifier: Apache-2.0

//! Signal connectivity over the elaborated instance tree.
//!
//! Nodes are declared signals at an instance path. Each edge is justified by
//! exactly one (AssignEdge, rhs signal) pair or one port binding.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ast::Direction;
use super::design::{RtlDesign, SignalRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Continuous,
    Procedural,
    PortBinding,
}

/// What produced an edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EdgeOrigin {
    Assign {
        module_path: Vec<String>,
        module: String,
        assign_index: usize,
        rhs_signal: String,
    },
    Binding {
        parent_path: Vec<String>,
        instance: String,
        formal: String,
        actual_signal: String,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    pub origin: EdgeOrigin,
}

/// Directed multigraph. Successor lists are deduplicated and sorted by node
/// order, which is the `SignalRef` order.
#[derive(Debug, Clone, Serialize)]
pub struct SignalGraph {
    pub nodes: Vec<SignalRef>,
    pub edges: Vec<Edge>,
    #[serde(skip)]
    succ: Vec<Vec<usize>>,
    #[serde(skip)]
    index: BTreeMap<(Vec<String>, String), usize>,
}

impl SignalGraph {
    /// Builds a graph from raw parts; `edges` endpoints index into `nodes`.
    pub fn from_parts(nodes: Vec<SignalRef>, edges: Vec<Edge>) -> SignalGraph {
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| nodes[a].cmp(&nodes[b]));
        let mut remap = vec![0; nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let nodes: Vec<SignalRef> = order.iter().map(|&i| nodes[i].clone()).collect();
        let edges: Vec<Edge> = edges
            .into_iter()
            .map(|mut e| {
                e.from = remap[e.from];
                e.to = remap[e.to];
                e
            })
            .collect();
        let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nodes.len()];
        for e in &edges {
            succ[e.from].insert(e.to);
        }
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| ((n.module_path.clone(), n.signal.clone()), i))
            .collect();
        SignalGraph {
            nodes,
            edges,
            succ: succ.into_iter().map(|s| s.into_iter().collect()).collect(),
            index,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn successors(&self, n: usize) -> &[usize] {
        &self.succ[n]
    }

    pub fn node_id(&self, path: &[String], signal: &str) -> Option<usize> {
        self.index.get(&(path.to_vec(), signal.to_string())).copied()
    }

    pub fn id_of(&self, r: &SignalRef) -> Option<usize> {
        self.node_id(&r.module_path, &r.signal)
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.succ[from].binary_search(&to).is_ok()
    }

    /// Edges from `from` to `to`, in insertion order.
    pub fn edges_between(&self, from: usize, to: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == from && e.to == to)
    }

    /// Same nodes, every edge reversed.
    pub fn reversed(&self) -> SignalGraph {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                from: e.to,
                to: e.from,
                ..e.clone()
            })
            .collect();
        SignalGraph::from_parts(self.nodes.clone(), edges)
    }

    /// Edge list as `(from, to, kind)` display triples.
    pub fn dump(&self) -> Vec<(String, String, EdgeKind)> {
        self.edges
            .iter()
            .map(|e| {
                (
                    self.nodes[e.from].path_name(),
                    self.nodes[e.to].path_name(),
                    e.kind,
                )
            })
            .collect()
    }
}

pub fn build_connectivity(design: &RtlDesign) -> SignalGraph {
    let mut nodes = Vec::new();
    let mut ids: BTreeMap<(Vec<String>, String), usize> = BTreeMap::new();
    for inst in &design.hierarchy {
        let def = &design.modules[&inst.module];
        for sig in def.signal_names() {
            let r = design.signal_ref(&inst.path, sig).expect("declared signal");
            ids.insert((inst.path.clone(), sig.to_string()), nodes.len());
            nodes.push(r);
        }
    }
    let id = |path: &[String], sig: &str| ids[&(path.to_vec(), sig.to_string())];

    let mut edges = Vec::new();
    for inst in &design.hierarchy {
        let def = &design.modules[&inst.module];
        for (ai, a) in def.assigns.iter().enumerate() {
            let kind = match a.kind {
                super::design::AssignKind::Continuous => EdgeKind::Continuous,
                super::design::AssignKind::Procedural => EdgeKind::Procedural,
                super::design::AssignKind::PortBinding => EdgeKind::PortBinding,
            };
            for rhs in &a.rhs_signals {
                edges.push(Edge {
                    from: id(&inst.path, rhs),
                    to: id(&inst.path, &a.lhs),
                    kind,
                    origin: EdgeOrigin::Assign {
                        module_path: inst.path.clone(),
                        module: def.name.clone(),
                        assign_index: ai,
                        rhs_signal: rhs.clone(),
                    },
                });
            }
        }
        for child in &def.instances {
            let child_def = &design.modules[&child.module];
            let mut child_path = inst.path.clone();
            child_path.push(child.name.clone());
            for conn in &child.connections {
                let dir = child_def.port(&conn.formal).expect("linked").direction;
                let formal = id(&child_path, &conn.formal);
                for actual in &conn.actual_signals {
                    let actual_id = id(&inst.path, actual);
                    let origin = EdgeOrigin::Binding {
                        parent_path: inst.path.clone(),
                        instance: child.name.clone(),
                        formal: conn.formal.clone(),
                        actual_signal: actual.clone(),
                    };
                    let mut push = |from, to| {
                        edges.push(Edge {
                            from,
                            to,
                            kind: EdgeKind::PortBinding,
                            origin: origin.clone(),
                        })
                    };
                    match dir {
                        Direction::Input => push(actual_id, formal),
                        Direction::Output => push(formal, actual_id),
                        Direction::Inout => {
                            push(actual_id, formal);
                            push(formal, actual_id);
                        }
                    }
                }
            }
        }
    }
    SignalGraph::from_parts(nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtl::design::{parse_design, SourceFile};

    fn graph(src: &str) -> (RtlDesign, SignalGraph) {
        let d = parse_design(&[SourceFile::new("t.v", src)], None).unwrap();
        let g = build_connectivity(&d);
        (d, g)
    }

    #[test]
    fn assign_edges_follow_dataflow() {
        let (_, g) = graph("module m(input a, input b, output y); assign y = a & b; endmodule");
        let a = g.node_id(&[], "a").unwrap();
        let y = g.node_id(&[], "y").unwrap();
        assert!(g.has_edge(a, y));
        assert!(!g.has_edge(y, a));
        assert_eq!(g.edges.len(), 2);
    }

    #[test]
    fn bindings_respect_direction() {
        let (_, g) = graph(
            "module c(input i, output o, inout io); assign o = i; endmodule
             module t(input x, output y, inout z); c u (.i(x), .o(y), .io(z)); endmodule",
        );
        let u = vec!["u".to_string()];
        let (x, ci) = (g.node_id(&[], "x").unwrap(), g.node_id(&u, "i").unwrap());
        let (y, co) = (g.node_id(&[], "y").unwrap(), g.node_id(&u, "o").unwrap());
        let (z, cio) = (g.node_id(&[], "z").unwrap(), g.node_id(&u, "io").unwrap());
        assert!(g.has_edge(x, ci) && !g.has_edge(ci, x));
        assert!(g.has_edge(co, y) && !g.has_edge(y, co));
        assert!(g.has_edge(z, cio) && g.has_edge(cio, z));
        assert!(g.has_edge(ci, co));
    }

    #[test]
    fn reversed_swaps_every_edge() {
        let (_, g) = graph("module m(input a, output y); assign y = a; endmodule");
        let r = g.reversed();
        let a = r.node_id(&[], "a").unwrap();
        let y = r.node_id(&[], "y").unwrap();
        assert!(r.has_edge(y, a) && !r.has_edge(a, y));
    }

    #[test]
    fn parameters_do_not_become_nodes() {
        let (_, g) = graph(
            "module m #(parameter W = 2) (input [W-1:0] a, output [W-1:0] y); assign y = a + W; endmodule",
        );
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges.len(), 1);
    }
}
