// SPDX-License-Identifier: Apache-2.0

//! Chunks a specification and ranks the chunks for one signal name.
//!
//! ```text
//! cargo run --example chunk_and_retrieve -- [signal] [document.md]
//! ```

use std::path::PathBuf;

use assertgen::corpus::{ingest_document, ChunkPolicy, SpecDocument};
use assertgen::retrieval::{build_index, make_query, Bm25Params};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let signal = args.next().unwrap_or_else(|| "ctr".into());
    let spec = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/i2c/spec/i2c_master.md"));

    let doc = SpecDocument::from_file(&spec)?;
    let policy = ChunkPolicy { max_chars: 900, overlap_chars: 150 };
    let chunks = ingest_document(&doc, &policy)?;
    println!("{} ({}): {} chunks", doc.title, doc.doc_id, chunks.len());

    let index = build_index(&chunks, Bm25Params::default())?;
    for hit in index.retrieve(&make_query(&signal)?, 4) {
        let first = hit.chunk.text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        println!("{:>7.3}  {:<24} {:?}  {first}", hit.score, hit.chunk.chunk_id, hit.chunk.char_span);
    }
    Ok(())
}
