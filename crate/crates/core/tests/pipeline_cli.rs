// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use assertgen::config::RunConfig;
use assertgen::pipeline::{Overrides, Pipeline, PipelineError, Stage};
use common::*;

fn pipeline(cfg: &Path) -> Pipeline {
    Pipeline::new(RunConfig::load(cfg).unwrap(), Overrides::default())
}

fn without_durations(mut snap: BTreeMap<String, Vec<u8>>) -> BTreeMap<String, Vec<u8>> {
    let mut report: serde_json::Value = serde_json::from_slice(&snap["run_report.json"]).unwrap();
    for (_, st) in report["stages"].as_object_mut().unwrap() {
        st.as_object_mut().unwrap().remove("duration_ms");
    }
    snap.insert("run_report.json".into(), serde_json::to_vec(&report).unwrap());
    snap
}

fn assertgen(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_assertgen")).args(args).output().unwrap()
}

#[test]
fn stage_by_stage_matches_full_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(&replay_workspace(a.path(), "")).run().unwrap();
    let cfg = replay_workspace(b.path(), "");
    // a fresh pipeline per stage, as separate invocations would see it
    for st in Stage::RUN {
        pipeline(&cfg).run_stage(st).unwrap();
    }
    let sa = without_durations(snapshot(&a.path().join("out")));
    let sb = without_durations(snapshot(&b.path().join("out")));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(&sb[k] == v, "{k} differs");
    }
}

#[test]
fn rerunning_a_stage_reproduces_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_workspace(dir.path(), "");
    pipeline(&cfg).run().unwrap();
    let out = dir.path().join("out");
    let bridge = std::fs::read(out.join("bridge.json")).unwrap();
    let sva = std::fs::read(out.join("out.sva")).unwrap();
    std::fs::remove_file(out.join("bridge.json")).unwrap();
    std::fs::remove_file(out.join("out.sva")).unwrap();
    let p = pipeline(&cfg);
    p.run_stage(Stage::Bridge).unwrap();
    p.run_stage(Stage::Sva).unwrap();
    assert_eq!(std::fs::read(out.join("bridge.json")).unwrap(), bridge);
    assert_eq!(std::fs::read(out.join("out.sva")).unwrap(), sva);
}

#[test]
fn missing_upstream_artifact_is_a_stage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_workspace(dir.path(), "");
    for st in [Stage::Entities, Stage::Objectives, Stage::Chains, Stage::Bridge, Stage::Sva] {
        let err = pipeline(&cfg).run_stage(st).unwrap_err();
        assert!(matches!(err, PipelineError::MissingUpstreamArtifact { .. }), "{st:?}: {err}");
        assert_eq!(err.exit_code(), 3);
    }
    let report = pipeline(&cfg).load_report().unwrap();
    assert!(report.stages.values().all(|r| r.status == "failed"));
}

#[test]
fn mutate_after_run_ingests_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_workspace(dir.path(), "");
    let p = pipeline(&cfg);
    p.run().unwrap();
    let rec = p.run_stage(Stage::Mutate).unwrap();
    assert_eq!(rec.counts["mutants"], 40);
    let report = p.load_report().unwrap();
    assert!(!report.stages.is_empty());
}

#[test]
fn cli_run_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_workspace(dir.path(), "");
    let o = assertgen(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/out.sva").exists());
    let o = assertgen(&["chains", "--config", cfg.to_str().unwrap(), "--top", "i2c_master_top", "--reverse-chains"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn cli_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(assertgen(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[inputs\nseed_signal = 3").unwrap();
    assert_eq!(assertgen(&["ingest", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let cfg = replay_workspace(dir.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("mode = \"replay\"", "mode = \"telepathy\"");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(assertgen(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(assertgen(&["run"]).status.code(), Some(2));
}

#[test]
fn cli_stage_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_workspace(dir.path(), "");
    // replay against an empty store misses on the first prompt
    std::fs::write(dir.path().join("llm_fixtures.jsonl"), "").unwrap();
    let o = assertgen(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/run_report.json")).unwrap()).unwrap();
    assert_eq!(report["stages"]["ingest"]["status"], "ok");
    assert_eq!(report["stages"]["entities"]["status"], "failed");

    let fresh = tempfile::tempdir().unwrap();
    let cfg = replay_workspace(fresh.path(), "");
    let o = assertgen(&["bridge", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
