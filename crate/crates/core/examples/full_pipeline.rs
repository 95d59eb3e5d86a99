// SPDX-License-Identifier: Apache-2.0

//! Runs every stage over a scratch copy of the I2C fixture in replay mode and
//! prints the run report and the emitted assertions.
//!
//! ```text
//! cargo run --example full_pipeline
//! ```

use std::path::{Path, PathBuf};

use assertgen::config::RunConfig;
use assertgen::pipeline::{Overrides, Pipeline, Stage};

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for e in std::fs::read_dir(from)? {
        let p = e?.path();
        if p.is_file() {
            std::fs::copy(&p, to.join(p.file_name().unwrap()))?;
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/i2c");
    // replay digests cover the relative input paths, so keep the layout
    let scratch = tempfile::tempdir()?;
    for sub in ["spec", "rtl", "fpv"] {
        copy_dir(&fixture.join(sub), &scratch.path().join(sub))?;
    }
    for f in ["assertgen.toml", "llm_fixtures.jsonl"] {
        std::fs::copy(fixture.join(f), scratch.path().join(f))?;
    }

    let config = RunConfig::load(&scratch.path().join("assertgen.toml"))?;
    let pipeline = Pipeline::new(config, Overrides::default());
    pipeline.run()?;
    pipeline.run_stage(Stage::Mutate)?;
    let report = pipeline.load_report()?;
    println!("run {} (seed {}, llm {})", report.run_id, report.seed_signal, report.llm_mode);
    for (stage, r) in &report.stages {
        println!("{stage:<10} {:<6} {:?}", r.status, r.counts);
        for w in &r.warnings {
            println!("           warning: {w}");
        }
    }
    println!();
    print!("{}", std::fs::read_to_string(pipeline.out_dir().join("out.sva"))?);
    Ok(())
}
