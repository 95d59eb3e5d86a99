// SPDX-License-Identifier: Apache-2.0

//! Parses Verilog files and prints the elaborated hierarchy, module
//! interfaces, and connectivity size.
//!
//! ```text
//! cargo run --example rtl_hierarchy -- [--top NAME] [file.v ...]
//! ```

use std::path::PathBuf;

use assertgen::rtl::{build_connectivity, parse_design, SourceFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut top = None;
    let mut paths = Vec::new();
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        if a == "--top" {
            top = args.next();
        } else {
            paths.push(PathBuf::from(a));
        }
    }
    if paths.is_empty() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/i2c/rtl");
        paths = ["i2c_master_top.v", "i2c_master_byte_ctrl.v", "i2c_master_bit_ctrl.v"]
            .iter()
            .map(|f| dir.join(f))
            .collect();
        top.get_or_insert_with(|| "i2c_master_top".to_string());
    }
    let files = paths
        .iter()
        .map(|p| Ok(SourceFile::new(p.display().to_string(), std::fs::read_to_string(p)?)))
        .collect::<Result<Vec<_>, std::io::Error>>()?;

    let design = parse_design(&files, top.as_deref())?;
    println!("root: {}", design.root_module);
    for node in &design.hierarchy {
        let depth = node.path.len();
        let name = node.path.last().map_or("(root)", String::as_str);
        println!("{:indent$}{name}: {}", "", node.module, indent = 2 * depth);
    }
    for m in design.modules.values() {
        println!(
            "{:<24} ports {:>3}  nets {:>3}  instances {:>2}  assigns {:>3}",
            m.name,
            m.ports.len(),
            m.nets.len(),
            m.instances.len(),
            m.assigns.len()
        );
    }
    let g = build_connectivity(&design);
    println!("graph: {} nodes, {} edges", g.node_count(), g.dump().len());
    for w in &design.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
