// SPDX-License-Identifier: Apache-2.0

//! Validates assertion text against the I2C design and prints diagnostics.
//! Reads assertions from a file (one per line) or uses a built-in sample.
//!
//! ```text
//! cargo run --example sva_validate -- [assertions.txt]
//! ```

use std::path::PathBuf;

use assertgen::rtl::{parse_design, SourceFile};
use assertgen::sva::{has_errors, parse_sva_response, render_file, validate_sva};

const SAMPLE: &str = "\
assert property @(posedge i2c_master_top.wb_clk_i) (i2c_master_top.wb_ack_o |-> i2c_master_top.wb_cyc_i);
assert property @(posedge i2c_master_top.wb_clk_i) (!i2c_master_top.ctr[7] |-> ##1 !i2c_master_top.tip);
assert property @(negedge i2c_master_top.wb_clk_i) (i2c_master_top.irq_flag);
assert property @(posedge i2c_master_top.wb_clk_i) (done |-> i2c_master_top.nosuch);
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match std::env::args().nth(1) {
        Some(p) => std::fs::read_to_string(p)?,
        None => SAMPLE.to_string(),
    };
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/i2c");
    let files = ["rtl/i2c_master_top.v", "rtl/i2c_master_byte_ctrl.v", "rtl/i2c_master_bit_ctrl.v"]
        .iter()
        .map(|p| Ok(SourceFile::new(*p, std::fs::read_to_string(dir.join(p))?)))
        .collect::<Result<Vec<_>, std::io::Error>>()?;
    let design = parse_design(&files, Some("i2c_master_top"))?;

    let mut accepted = Vec::new();
    for a in parse_sva_response(&text, "example")? {
        let diags = validate_sva(&a, &design);
        println!("{} {}", if has_errors(&diags) { "REJECT" } else { "ACCEPT" }, a.raw_text);
        for d in &diags {
            println!("    {:?} {:?} at {:?}: {}", d.severity, d.rule, d.span, d.message);
        }
        if !has_errors(&diags) {
            accepted.push(a);
        }
    }
    println!();
    print!("{}", render_file(&accepted, "example"));
    Ok(())
}
