// SPDX-License-Identifier: Apache-2.0

//! Enumerates propagation chains from one signal of the I2C design.
//!
//! ```text
//! cargo run --example signal_chains -- [signal] [max_depth] [--reverse]
//! ```

use std::path::PathBuf;

use assertgen::chain::{check_propagation, extract_chains_capped};
use assertgen::rtl::{build_connectivity, parse_design, SourceFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let reverse = args.iter().any(|a| a == "--reverse");
    let mut pos = args.iter().filter(|a| !a.starts_with("--"));
    let signal = pos.next().cloned().unwrap_or_else(|| "ctr".into());
    let depth: usize = pos.next().map(|d| d.parse()).transpose()?.unwrap_or(6);

    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/i2c");
    let files = ["rtl/i2c_master_top.v", "rtl/i2c_master_byte_ctrl.v", "rtl/i2c_master_bit_ctrl.v"]
        .iter()
        .map(|p| Ok(SourceFile::new(*p, std::fs::read_to_string(dir.join(p))?)))
        .collect::<Result<Vec<_>, std::io::Error>>()?;
    let design = parse_design(&files, Some("i2c_master_top"))?;

    let mut graph = build_connectivity(&design);
    if reverse {
        graph = graph.reversed();
    }
    let origin = design.locate_signal(&signal)?.module0;
    let (chains, capped) = extract_chains_capped(&graph, &origin, depth, 20)?;
    for c in &chains {
        assert!(check_propagation(c, &graph));
        println!("{}{}", c.display(), if c.truncated { "  (truncated)" } else { "" });
    }
    println!("{} chains from {}{}", chains.len(), origin.path_name(), if capped { ", capped at 20" } else { "" });
    Ok(())
}
