// SPDX-License-Identifier: Apache-2.0

//! Expands the entity worklist from a seed signal over the I2C specification,
//! answering prompts from the scripted rules instead of a model.
//!
//! ```text
//! cargo run --example entity_expansion -- [seed]
//! ```

use std::path::PathBuf;

use assertgen::corpus::{ingest_document, ChunkPolicy, SpecDocument};
use assertgen::entity::{expand_worklist, normalize_entity, ExpansionLimits};
use assertgen::llm::{ModelSettings, ScriptedBackend, Session};
use assertgen::retrieval::{build_index, Bm25Params};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).unwrap_or_else(|| "ctr".into());
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/i2c");

    let doc = SpecDocument::from_file(&dir.join("spec/i2c_master.md"))?;
    let chunks = ingest_document(&doc, &ChunkPolicy { max_chars: 900, overlap_chars: 150 })?;
    let index = build_index(&chunks, Bm25Params::default())?;
    let script: ScriptedBackend = toml::from_str(&std::fs::read_to_string(dir.join("scripted_responses.toml"))?)?;
    let session = Session::live(script);

    let limits = ExpansionLimits { k: 4, max_rounds: 32 };
    let r = expand_worklist(&normalize_entity(&seed)?, &index, &session, &ModelSettings::default(), limits)?;
    for round in &r.rounds {
        let names = |s: &std::collections::BTreeSet<_>| {
            s.iter().map(|e: &assertgen::entity::EntityName| e.canonical.as_str()).collect::<Vec<_>>().join(", ")
        };
        println!("{:<14} -> [{}]", round.target_signal.canonical, names(&round.e_final));
    }
    println!(
        "visited {} signals in {} iterations, {} chunks, converged: {}",
        r.visited.len(),
        r.iterations,
        r.accumulated_chunks.len(),
        r.converged
    );
    Ok(())
}
