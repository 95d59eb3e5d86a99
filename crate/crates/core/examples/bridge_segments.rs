// SPDX-License-Identifier: Apache-2.0

//! Bridges a hand-written objective to the RTL lines that define its signals.
//!
//! ```text
//! cargo run --example bridge_segments -- [signal ...]
//! ```

use std::path::PathBuf;

use assertgen::bridge::{bridge, segment_text};
use assertgen::chain::extract_chains_capped;
use assertgen::entity::normalize_entity;
use assertgen::objective::VerificationObjective;
use assertgen::rtl::{build_connectivity, parse_design, SourceFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut signals: Vec<String> = std::env::args().skip(1).collect();
    if signals.is_empty() {
        signals = vec!["cr".into(), "irq_flag".into()];
    }
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/i2c");
    let files = ["rtl/i2c_master_top.v", "rtl/i2c_master_byte_ctrl.v", "rtl/i2c_master_bit_ctrl.v"]
        .iter()
        .map(|p| Ok(SourceFile::new(*p, std::fs::read_to_string(dir.join(p))?)))
        .collect::<Result<Vec<_>, std::io::Error>>()?;
    let design = parse_design(&files, Some("i2c_master_top"))?;
    let graph = build_connectivity(&design);

    let involved = signals.iter().map(|s| normalize_entity(s)).collect::<Result<Vec<_>, _>>()?;
    let objective = VerificationObjective {
        objective_id: format!("{}_obj0", involved[0].canonical),
        target_signal: involved[0].clone(),
        statement: format!("{} follows {}", signals[0], signals[1..].join(", ")),
        involved_signals: involved,
        layer_tags: Default::default(),
        provenance_chunk_ids: vec![],
        unresolved: false,
    };
    // one hop is enough to show the defining lines of each signal
    let mut chains = Vec::new();
    for s in &signals {
        chains.extend(extract_chains_capped(&graph, &design.locate_signal(s)?.module0, 1, 8)?.0);
    }
    for r in bridge(&[objective], &chains, &design) {
        println!("{}: {} segments from {} chains", r.objective_id, r.segments.len(), r.chains_used.len());
        for seg in &r.segments {
            println!("--- {}:{}-{} {:?} in {}", seg.file, seg.line_span.0, seg.line_span.1, seg.segment_kind, seg.module);
            println!("{}", segment_text(&design, seg).trim_end());
        }
        if !r.unresolved_signals.is_empty() {
            println!("unresolved: {:?}", r.unresolved_signals);
        }
    }
    Ok(())
}
