// SPDX-License-Identifier: Apache-2.0

//! Structural checks on the three-module I2C fixture against hand counts and
//! independent scans.

mod common;

use std::collections::BTreeSet;

use assertgen::bridge::{bridge, match_segments, segment_text, SegmentKind};
use assertgen::chain::{check_propagation, extract_chains_capped};
use assertgen::entity::EntityName;
use assertgen::objective::VerificationObjective;
use assertgen::rtl::build_connectivity;
use common::*;

#[test]
fn module_counts_match_manifest() {
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(i2c_dir().join("manifest.json")).unwrap()).unwrap();
    let d = i2c_design();
    assert_eq!(d.root_module, manifest["root_module"]);
    let mods = manifest["modules"].as_object().unwrap();
    assert_eq!(d.modules.len(), mods.len());
    for (name, want) in mods {
        let m = d.module(name).unwrap();
        let got = serde_json::json!({
            "ports": m.ports.len(),
            "nets": m.nets.len(),
            "instances": m.instances.len(),
            "assigns": m.assigns.len(),
        });
        assert_eq!(&got, want, "{name}");
    }
    let paths: Vec<String> = d.hierarchy.iter().map(|n| n.path.join("/")).collect();
    let want: Vec<String> = manifest["hierarchy"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(paths, want);
    assert!(d.warnings.is_empty(), "{:?}", d.warnings);
}

#[test]
fn edges_match_syntax_tree_scan() {
    let d = i2c_design();
    let g = build_connectivity(&d);
    let got: BTreeSet<(String, String)> = g.dump().into_iter().map(|(a, b, _)| (a, b)).collect();
    let want = naive_edges(&d, "i2c_master_top");
    let missing: Vec<_> = want.difference(&got).collect();
    let extra: Vec<_> = got.difference(&want).collect();
    assert!(missing.is_empty() && extra.is_empty(), "missing {missing:?}\nextra {extra:?}");
}

#[test]
fn segments_match_grep_scan_for_every_signal() {
    let d = i2c_design();
    let files = i2c_sources();
    let g = build_connectivity(&d);
    for node in &g.nodes {
        let got: BTreeSet<SegKey> = match_segments(node, &d)
            .unwrap()
            .into_iter()
            .map(|s| key(&s))
            .collect();
        let want = grep_segments(&files, &node.module, &node.signal, node.module_path.last().map(String::as_str));
        assert_eq!(got, want, "{}", node.path_name());
    }
}

fn key(s: &assertgen::bridge::CodeSegment) -> SegKey {
    let kind = match s.segment_kind {
        SegmentKind::Port => "port",
        SegmentKind::Declaration => "declaration",
        SegmentKind::Assignment => "assignment",
        SegmentKind::Instantiation => "instantiation",
    };
    (s.file.clone(), s.line_span.0, s.line_span.1, kind, s.module.clone())
}

#[test]
fn bridged_segments_contain_their_signals() {
    let d = i2c_design();
    let g = build_connectivity(&d);
    let names = ["ctr", "cr", "irq_flag", "wb_inta_o", "sda_padoen_o"];
    let mut chains = Vec::new();
    let objectives: Vec<VerificationObjective> = names
        .iter()
        .map(|n| {
            let origin = d.locate_signal(n).unwrap().module0;
            chains.extend(extract_chains_capped(&g, &origin, 32, 8).unwrap().0);
            let e = EntityName { canonical: n.to_string(), surface: n.to_string() };
            VerificationObjective {
                objective_id: format!("{n}_obj0"),
                target_signal: e.clone(),
                statement: format!("{n} behaves"),
                involved_signals: vec![e],
                layer_tags: Default::default(),
                provenance_chunk_ids: vec![],
                unresolved: false,
            }
        })
        .collect();
    assert!(chains.iter().all(|c| check_propagation(c, &g)));
    for r in bridge(&objectives, &chains, &d) {
        assert!(r.unresolved_signals.is_empty());
        for s in &r.segments {
            let text = segment_text(&d, s);
            let hit = s.matched_signals.iter().any(|m| {
                regex::Regex::new(&format!(r"\b{}\b", regex::escape(&m.surface))).unwrap().is_match(&text)
            });
            assert!(hit, "{s:?}\n{text}");
        }
    }
}
