// SPDX-License-Identifier: Apache-2.0

//! Generates seeded mutants of the I2C design, then scores a verdict table and
//! the bundled formal report.
//!
//! ```text
//! cargo run --example mutation_lab -- [seed] [max_mutants]
//! ```

use std::collections::BTreeSet;
use std::path::PathBuf;

use assertgen::mutation::{compute_bdr, generate_mutants, ingest_fpv_report, MutationOperator, Verdict};
use assertgen::rtl::{parse_design, SourceFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let max: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(12);

    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/i2c");
    let files = ["rtl/i2c_master_top.v", "rtl/i2c_master_byte_ctrl.v", "rtl/i2c_master_bit_ctrl.v"]
        .iter()
        .map(|p| Ok(SourceFile::new(*p, std::fs::read_to_string(dir.join(p))?)))
        .collect::<Result<Vec<_>, std::io::Error>>()?;
    let design = parse_design(&files, Some("i2c_master_top"))?;

    let ops: BTreeSet<MutationOperator> = MutationOperator::ALL.into_iter().collect();
    let mutants = generate_mutants(&design, &ops, seed, max)?;
    for m in &mutants {
        let s = &m.spec;
        println!("{} {:<18} {}:{}", s.mutant_id, s.operator, s.location.file, s.location.line);
        println!("    - {}", s.original_text.trim());
        println!("    + {}", s.mutated_text.trim());
    }

    // pretend every third mutant was caught by the assertion set
    let verdicts: Vec<Verdict> = mutants
        .iter()
        .enumerate()
        .map(|(i, m)| Verdict { mutant_id: m.spec.mutant_id.clone(), detected: i % 3 == 0 })
        .collect();
    let bdr = compute_bdr(&verdicts)?;
    println!("BDR {:?} ({:?}/{:?})", bdr.bdr_percent, bdr.detected_mutants, bdr.total_mutants);

    let fpv = ingest_fpv_report(&dir.join("fpv/i2c_report.csv"), "i2c")?;
    println!(
        "FPR {:?}  COI {:?}  PC {:?}  ({} assertions, {} timeouts counted as passes)",
        fpv.fpr_percent, fpv.coi_percent, fpv.pc_percent, fpv.sva_total, fpv.timeout_passes
    );
    Ok(())
}
