// SPDX-License-Identifier: Apache-2.0

//! Re-records the desk I2C fixture store from the scripted answers.
//!
//! Runs every LLM-backed stage in record mode with a [`ScriptedBackend`] in
//! place of a model endpoint, then sorts the store by digest so the file is
//! stable under version control. Pass a config path to record another design:
//!
//! ```text
//! cargo run --example record_fixtures -- [assertgen.toml] [scripted_responses.toml]
//! ```

use std::path::PathBuf;
use std::time::Duration;

use assertgen::config::RunConfig;
use assertgen::llm::{Mode, ScriptedBackend, Session};
use assertgen::pipeline::{Overrides, Pipeline};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixture_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/i2c");
    let mut args = std::env::args().skip(1);
    let config_path = args.next().map(PathBuf::from).unwrap_or(fixture_dir.join("assertgen.toml"));
    let script_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or(fixture_dir.join("scripted_responses.toml"));

    // replay configs require the store to exist, so start from an empty one
    let raw: toml::Value = toml::from_str(&std::fs::read_to_string(&config_path)?)?;
    let rel = raw
        .get("llm")
        .and_then(|l| l.get("fixture_path"))
        .and_then(|p| p.as_str())
        .ok_or("config has no llm.fixture_path")?;
    let store = config_path.parent().unwrap_or(".".as_ref()).join(rel);
    std::fs::write(&store, "")?;

    let mut config = RunConfig::load(&config_path)?;
    let scratch = tempfile::tempdir()?;
    config.output.dir = scratch.path().to_path_buf();
    // record the cross-check prompts too so replay runs may enable it
    config.bridge.llm_cross_check = true;

    let script: ScriptedBackend = toml::from_str(&std::fs::read_to_string(&script_path)?)?;
    let session = Session::open(Mode::Record, Some(&store), Some(Box::new(script)))?
        .with_retry(0, Duration::ZERO);
    let pipeline = Pipeline::new(config, Overrides::default()).with_session(session);
    let report = pipeline.run()?;
    for (stage, r) in &report.stages {
        println!("{stage:<10} {:?}", r.counts);
        for w in &r.warnings {
            println!("           warning: {w}");
        }
    }

    let text = std::fs::read_to_string(&store)?;
    let mut lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    lines.sort_unstable();
    lines.dedup();
    std::fs::write(&store, lines.join("\n") + "\n")?;
    println!("{} exchanges written to {}", lines.len(), store.display());
    Ok(())
}
