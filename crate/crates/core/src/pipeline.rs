// SPDX-License-Identifier: Apache-2.0

//! Stage orchestration over an output directory.
//!
//! Every stage reads its inputs from artifacts persisted by earlier stages, so
//! `run` and the stage subcommands in order produce the same files. Each stage
//! updates its own entry in `run_report.json`; `duration_ms` is the only
//! field that varies between identical replay runs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bridge::{bridge, cross_check, BridgeResult};
use crate::chain::{extract_chains_capped, SignalChain};
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{ChunkStore, SpecChunk, SpecDocument};
use crate::entity::{expand_worklist, normalize_entity, EntityError, ExpansionLimits, ExpansionResult};
use crate::llm::{open_session, Session};
use crate::mutation::{
    collect_verdicts, compute_bdr, generate_mutants, ingest_fpv_report, write_mutants, write_verdicts,
    MetricsRecord,
};
use crate::objective::{apply_layers, generate_objectives, ObjectiveError, VerificationObjective};
use crate::retrieval::{build_index, make_query, Index};
use crate::rtl::tree::file_tree;
use crate::rtl::{build_connectivity, parse_design, RtlDesign, SignalGraph, SourceFile};
use crate::sva::{build_sva_prompt, emit_file, has_errors, parse_sva_response, validate_sva, SvaError};
use crate::to_json_pretty;

pub const CORPUS_DIR: &str = "corpus";
pub const ENTITIES: &str = "entities.json";
pub const OBJECTIVES: &str = "objectives.json";
pub const CHAINS: &str = "chains.json";
pub const BRIDGE: &str = "bridge.json";
pub const CROSS_CHECK: &str = "bridge_cross_check.json";
pub const DIAGNOSTICS: &str = "diagnostics.json";
pub const SVA_OUT: &str = "out.sva";
pub const REPORT: &str = "run_report.json";
pub const MUTANTS_DIR: &str = "mutants";
pub const MUTANTS: &str = "mutants.json";
pub const VERDICTS: &str = "verdicts.csv";
pub const METRICS: &str = "metrics.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Entities,
    Objectives,
    Chains,
    Bridge,
    Sva,
    Mutate,
}

impl Stage {
    /// Stages executed by a full run, in order.
    pub const RUN: [Stage; 6] = [
        Stage::Ingest,
        Stage::Entities,
        Stage::Objectives,
        Stage::Chains,
        Stage::Bridge,
        Stage::Sva,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Entities => "entities",
            Stage::Objectives => "objectives",
            Stage::Chains => "chains",
            Stage::Bridge => "bridge",
            Stage::Sva => "sva",
            Stage::Mutate => "mutate",
        }
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Stage::Mutate]
            .into_iter()
            .chain(Stage::RUN)
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage}: upstream artifact {path} is missing; run the earlier stages first")]
    MissingUpstreamArtifact { stage: Stage, path: String },
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    /// Process exit code: 2 for configuration problems, 3 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 3,
        }
    }
}

fn fail(stage: Stage) -> impl Fn(&dyn std::fmt::Display) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// Command-line switches layered over the config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub top: Option<String>,
    pub reverse_chains: bool,
    pub dump_index: bool,
    pub dump_ast: bool,
    pub dump_graph: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: String,
    pub counts: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub seed_signal: String,
    pub llm_mode: String,
    pub stages: BTreeMap<Stage, StageRecord>,
}

/// Per-origin summary written next to the chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginRecord {
    pub signal: String,
    pub origin: String,
    pub chain_count: usize,
    /// More chains existed than `limits.max_chains`.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainsArtifact {
    pub reverse: bool,
    pub max_depth: usize,
    pub max_chains: usize,
    pub origins: Vec<OriginRecord>,
    /// Involved signals not declared anywhere in the design.
    pub unlocated: Vec<String>,
    pub chains: Vec<SignalChain>,
}

#[derive(Default)]
struct Outcome {
    counts: BTreeMap<String, usize>,
    warnings: Vec<String>,
}

impl Outcome {
    fn count(&mut self, k: &str, v: usize) {
        self.counts.insert(k.to_string(), v);
    }
}

pub struct Pipeline {
    config: RunConfig,
    overrides: Overrides,
    session: OnceLock<Session>,
}

impl Pipeline {
    pub fn new(config: RunConfig, overrides: Overrides) -> Pipeline {
        Pipeline {
            config,
            overrides,
            session: OnceLock::new(),
        }
    }

    /// Uses `session` for every prompt instead of opening one from the config.
    pub fn with_session(self, session: Session) -> Pipeline {
        let _ = self.session.set(session);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.output.dir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    fn session(&self, stage: Stage) -> Result<&Session, PipelineError> {
        if let Some(s) = self.session.get() {
            return Ok(s);
        }
        let mode = self.config.mode()?;
        let fixture = self.config.llm.fixture_path.clone().unwrap_or_default();
        let s = open_session(mode, &fixture)
            .map_err(|e| fail(stage)(&e))?
            .with_max_in_flight(self.config.llm.max_in_flight);
        Ok(self.session.get_or_init(|| s))
    }

    fn calls(&self) -> usize {
        self.session.get().map_or(0, Session::call_count)
    }

    /// Every stage of a full run, stopping at the first failure. The report
    /// starts fresh.
    pub fn run(&self) -> Result<RunReport, PipelineError> {
        let _ = std::fs::remove_file(self.path(REPORT));
        for st in Stage::RUN {
            self.run_stage(st)?;
        }
        self.load_report()
    }

    /// Runs one stage and records it in the report, failure included.
    pub fn run_stage(&self, stage: Stage) -> Result<StageRecord, PipelineError> {
        std::fs::create_dir_all(self.out_dir()).map_err(|e| fail(stage)(&e))?;
        let started = Instant::now();
        let calls_before = self.calls();
        let result = match stage {
            Stage::Ingest => self.ingest(),
            Stage::Entities => self.entities(),
            Stage::Objectives => self.objectives(),
            Stage::Chains => self.chains(),
            Stage::Bridge => self.bridge(),
            Stage::Sva => self.sva(),
            Stage::Mutate => self.mutate(),
        };
        let duration_ms = started.elapsed().as_millis() as u64;
        let record = match &result {
            Ok(o) => {
                let mut counts = o.counts.clone();
                if matches!(stage, Stage::Entities | Stage::Objectives | Stage::Sva | Stage::Bridge) {
                    counts.insert("llm_calls".into(), self.calls() - calls_before);
                }
                StageRecord {
                    status: "ok".into(),
                    counts,
                    warnings: o.warnings.clone(),
                    error: None,
                    duration_ms,
                }
            }
            Err(e) => StageRecord {
                status: "failed".into(),
                error: Some(e.to_string()),
                duration_ms,
                ..Default::default()
            },
        };
        let mut report = self.load_report().unwrap_or_default();
        report.run_id = self.config.run_id().to_string();
        report.seed_signal = self.config.inputs.seed_signal.clone();
        report.llm_mode = self.config.llm.mode.clone();
        report.stages.insert(stage, record.clone());
        self.write(stage, REPORT, &to_json_pretty(&report))?;
        result.map(|_| record)
    }

    pub fn load_report(&self) -> Result<RunReport, PipelineError> {
        self.read(Stage::Ingest, REPORT)
    }

    fn write(&self, stage: Stage, name: &str, text: &str) -> Result<(), PipelineError> {
        std::fs::write(self.path(name), text).map_err(|e| fail(stage)(&e))
    }

    fn read<T: DeserializeOwned>(&self, stage: Stage, name: &str) -> Result<T, PipelineError> {
        let p = self.path(name);
        let text = std::fs::read_to_string(&p).map_err(|_| PipelineError::MissingUpstreamArtifact {
            stage,
            path: p.display().to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| fail(stage)(&format!("{}: {e}", p.display())))
    }

    // ------------------------------------------------------------ inputs

    fn corpus(&self, stage: Stage) -> Result<ChunkStore, PipelineError> {
        let dir = self.path(CORPUS_DIR);
        if !dir.join("manifest.json").is_file() {
            return Err(PipelineError::MissingUpstreamArtifact {
                stage,
                path: dir.display().to_string(),
            });
        }
        ChunkStore::load(&dir).map_err(|e| fail(stage)(&e))
    }

    fn index(&self, stage: Stage, store: &ChunkStore) -> Result<Index, PipelineError> {
        let chunks: Vec<SpecChunk> = store.chunks().cloned().collect();
        build_index(&chunks, self.config.bm25()).map_err(|e| fail(stage)(&e))
    }

    /// The design with file paths shown relative to the config directory.
    pub fn design(&self, stage: Stage) -> Result<RtlDesign, PipelineError> {
        let mut files = Vec::new();
        for p in &self.config.inputs.rtl_paths {
            let text = std::fs::read_to_string(p).map_err(|e| fail(stage)(&format!("{}: {e}", p.display())))?;
            files.push(SourceFile::new(self.config.display_path(p), text));
        }
        let top = self.overrides.top.as_deref().or(self.config.inputs.top_module.as_deref());
        parse_design(&files, top).map_err(|e| fail(stage)(&e))
    }

    fn graph(&self, design: &RtlDesign) -> SignalGraph {
        let g = build_connectivity(design);
        if self.reverse() {
            g.reversed()
        } else {
            g
        }
    }

    fn reverse(&self) -> bool {
        self.overrides.reverse_chains || self.config.chains.reverse
    }

    // ------------------------------------------------------------ stages

    fn ingest(&self) -> Result<Outcome, PipelineError> {
        let st = Stage::Ingest;
        let docs = self
            .config
            .inputs
            .spec_paths
            .iter()
            .map(|p| SpecDocument::from_file(p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| fail(st)(&e))?;
        let store = ChunkStore::build(&docs, self.config.chunking).map_err(|e| fail(st)(&e))?;
        let dir = self.path(CORPUS_DIR);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| fail(st)(&e))?;
        }
        store.save(&dir).map_err(|e| fail(st)(&e))?;
        if self.overrides.dump_index {
            let idx = self.index(st, &store)?;
            self.write(st, "index.json", &to_json_pretty(&idx.dump()))?;
        }
        let mut o = Outcome::default();
        o.count("documents", docs.len());
        o.count("chunks", store.len());
        Ok(o)
    }

    fn entities(&self) -> Result<Outcome, PipelineError> {
        let st = Stage::Entities;
        let store = self.corpus(st)?;
        let index = self.index(st, &store)?;
        let seed = normalize_entity(&self.config.inputs.seed_signal).map_err(|e| fail(st)(&e))?;
        let limits = ExpansionLimits {
            k: self.config.retrieval.k,
            max_rounds: self.config.limits.max_rounds,
        };
        let session = self.session(st)?;
        match expand_worklist(&seed, &index, session, &self.config.model(), limits) {
            Ok(r) => {
                self.write(st, ENTITIES, &to_json_pretty(&r))?;
                let mut o = Outcome::default();
                o.count("visited", r.visited.len());
                o.count("rounds", r.iterations);
                o.count("chunks", r.accumulated_chunks.len());
                Ok(o)
            }
            Err(EntityError::RoundLimitExceeded(partial)) => {
                // keep the partial expansion for inspection
                self.write(st, ENTITIES, &to_json_pretty(&*partial))?;
                Err(fail(st)(&format!(
                    "worklist not exhausted after {} rounds (limits.max_rounds)",
                    partial.iterations
                )))
            }
            Err(e) => Err(fail(st)(&e)),
        }
    }

    fn objectives(&self) -> Result<Outcome, PipelineError> {
        let st = Stage::Objectives;
        let ents: ExpansionResult = self.read(st, ENTITIES)?;
        let store = self.corpus(st)?;
        let index = self.index(st, &store)?;
        let design = self.design(st)?;
        let session = self.session(st)?;
        let model = self.config.model();
        let results = par_map(&ents.visited, self.config.llm.max_in_flight, |sig| {
            let query = make_query(&sig.canonical).map_err(|e| ObjectiveError::NoChunks(e.to_string()))?;
            let ranked = index.retrieve(&query, self.config.retrieval.k);
            let chunks: Vec<&SpecChunk> = ranked.iter().map(|r| &r.chunk).collect();
            generate_objectives(sig, &chunks, session, &model, self.config.limits.context_budget)
        });
        let mut o = Outcome::default();
        let mut all = Vec::new();
        for (sig, r) in ents.visited.iter().zip(results) {
            match r {
                Ok(v) => all.extend(v),
                Err(ObjectiveError::Llm(e)) => return Err(fail(st)(&e)),
                Err(e) => o.warnings.push(format!("{}: {e}", sig.canonical)),
            }
        }
        apply_layers(&mut all, &design);
        self.write(st, OBJECTIVES, &to_json_pretty(&all))?;
        o.count("objectives", all.len());
        o.count("unresolved", all.iter().filter(|x| x.unresolved).count());
        Ok(o)
    }

    fn chains(&self) -> Result<Outcome, PipelineError> {
        let st = Stage::Chains;
        let objs: Vec<VerificationObjective> = self.read(st, OBJECTIVES)?;
        let design = self.design(st)?;
        let graph = self.graph(&design);
        if self.overrides.dump_ast {
            let asts: Vec<serde_json::Value> = design
                .asts
                .iter()
                .map(|a| serde_json::json!({ "path": a.path, "tree": file_tree(a) }))
                .collect();
            self.write(st, "ast.json", &to_json_pretty(&asts))?;
        }
        if self.overrides.dump_graph {
            self.write(st, "graph.json", &to_json_pretty(&graph))?;
        }
        let signals: BTreeSet<&str> = objs
            .iter()
            .flat_map(|x| x.involved_signals.iter().map(|e| e.canonical.as_str()))
            .collect();
        let (max_depth, max_chains) = (self.config.limits.max_depth, self.config.limits.max_chains);
        let mut art = ChainsArtifact {
            reverse: self.reverse(),
            max_depth,
            max_chains,
            origins: Vec::new(),
            unlocated: Vec::new(),
            chains: Vec::new(),
        };
        let mut o = Outcome::default();
        for s in signals {
            let Ok(loc) = design.locate_signal(s) else {
                art.unlocated.push(s.to_string());
                continue;
            };
            let (chains, capped) =
                extract_chains_capped(&graph, &loc.module0, max_depth, max_chains).map_err(|e| fail(st)(&e))?;
            if capped {
                o.warnings.push(format!(
                    "{}: more than {max_chains} chains, kept the first {max_chains}",
                    loc.module0.path_name()
                ));
            }
            art.origins.push(OriginRecord {
                signal: s.to_string(),
                origin: loc.module0.path_name(),
                chain_count: chains.len(),
                capped,
            });
            art.chains.extend(chains);
        }
        self.write(st, CHAINS, &to_json_pretty(&art))?;
        o.count("origins", art.origins.len());
        o.count("chains", art.chains.len());
        o.count("capped_origins", art.origins.iter().filter(|r| r.capped).count());
        o.count("unlocated", art.unlocated.len());
        Ok(o)
    }

    fn bridge(&self) -> Result<Outcome, PipelineError> {
        let st = Stage::Bridge;
        let objs: Vec<VerificationObjective> = self.read(st, OBJECTIVES)?;
        let chains: ChainsArtifact = self.read(st, CHAINS)?;
        let design = self.design(st)?;
        let results = bridge(&objs, &chains.chains, &design);
        let mut o = Outcome::default();
        o.count("results", results.len());
        o.count("segments", results.iter().map(|r| r.segments.len()).sum());
        o.count("unresolved_signals", results.iter().map(|r| r.unresolved_signals.len()).sum());
        if self.config.bridge.llm_cross_check {
            let session = self.session(st)?;
            let model = self.config.model();
            let checks = par_map(&objs, self.config.llm.max_in_flight, |obj| {
                let r = results.iter().find(|r| r.objective_id == obj.objective_id).expect("one result per objective");
                cross_check(obj, r, &design, session, &model)
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| fail(st)(&e))?;
            o.count(
                "cross_check_disagreements",
                checks.iter().map(|c| c.model_only.len() + c.structural_only.len()).sum(),
            );
            self.write(st, CROSS_CHECK, &to_json_pretty(&checks))?;
        }
        let by_id: BTreeMap<String, BridgeResult> =
            results.into_iter().map(|r| (r.objective_id.clone(), r)).collect();
        self.write(st, BRIDGE, &to_json_pretty(&by_id))?;
        Ok(o)
    }

    fn sva(&self) -> Result<Outcome, PipelineError> {
        let st = Stage::Sva;
        let objs: Vec<VerificationObjective> = self.read(st, OBJECTIVES)?;
        let bridged: BTreeMap<String, BridgeResult> = self.read(st, BRIDGE)?;
        let chains: ChainsArtifact = self.read(st, CHAINS)?;
        let design = self.design(st)?;
        let session = self.session(st)?;
        let model = self.config.model();
        let by_chain: BTreeMap<&str, &SignalChain> =
            chains.chains.iter().map(|c| (c.chain_id.as_str(), c)).collect();
        let mut o = Outcome::default();
        let responses = par_map(&objs, self.config.llm.max_in_flight, |obj| {
            let Some(br) = bridged.get(&obj.objective_id) else {
                return Ok(None);
            };
            let used: Vec<SignalChain> = br
                .chains_used
                .iter()
                .filter_map(|id| by_chain.get(id.as_str()).map(|c| (*c).clone()))
                .collect();
            let req = build_sva_prompt(obj, &br.segments, &used, &design, &model);
            session.complete(&req).map(|x| Some(x.response_text))
        });
        let (mut kept, mut diagnostics, mut parsed) = (Vec::new(), Vec::new(), 0usize);
        for (obj, r) in objs.iter().zip(responses) {
            let text = match r {
                Ok(Some(t)) => t,
                Ok(None) => {
                    o.warnings.push(format!("{}: no bridge result", obj.objective_id));
                    continue;
                }
                Err(e) => return Err(fail(st)(&e)),
            };
            match parse_sva_response(&text, &obj.objective_id) {
                Ok(asserts) => {
                    parsed += asserts.len();
                    for a in asserts {
                        let d = validate_sva(&a, &design);
                        let bad = has_errors(&d);
                        diagnostics.extend(d);
                        if !bad {
                            kept.push(a);
                        }
                    }
                }
                Err(e @ SvaError::NoAssertionsFound(_)) => o.warnings.push(e.to_string()),
                Err(e) => return Err(fail(st)(&e)),
            }
        }
        self.write(st, DIAGNOSTICS, &to_json_pretty(&diagnostics))?;
        emit_file(&kept, &design, &self.path(SVA_OUT), self.config.run_id()).map_err(|e| fail(st)(&e))?;
        o.count("assertions_parsed", parsed);
        o.count("assertions_emitted", kept.len());
        o.count(
            "error_diagnostics",
            diagnostics.iter().filter(|d| d.severity == crate::sva::Severity::Error).count(),
        );
        o.count(
            "warning_diagnostics",
            diagnostics.iter().filter(|d| d.severity == crate::sva::Severity::Warning).count(),
        );
        Ok(o)
    }

    fn mutate(&self) -> Result<Outcome, PipelineError> {
        let st = Stage::Mutate;
        let design = self.design(st)?;
        let ops = self.config.operators()?;
        let m = &self.config.mutation;
        let mutants =
            generate_mutants(&design, &ops, m.seed, self.config.limits.max_mutants).map_err(|e| fail(st)(&e))?;
        let dir = self.path(MUTANTS_DIR);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| fail(st)(&e))?;
        }
        let dirs = write_mutants(&design, &mutants, &dir).map_err(|e| fail(st)(&e))?;
        let specs: Vec<_> = mutants.iter().map(|x| &x.spec).collect();
        self.write(st, MUTANTS, &to_json_pretty(&specs))?;
        let mut o = Outcome::default();
        o.count("mutants", mutants.len());
        let mut metrics = MetricsRecord {
            design_id: m.design_id.clone().unwrap_or_else(|| design.root_module.clone()),
            ..Default::default()
        };
        if let Some(cmd) = &m.verdict_command {
            let verdicts = collect_verdicts(cmd, &dirs, m.workers).map_err(|e| fail(st)(&e))?;
            write_verdicts(&verdicts, &self.path(VERDICTS)).map_err(|e| fail(st)(&e))?;
            metrics = metrics.merge(compute_bdr(&verdicts).map_err(|e| fail(st)(&e))?);
            o.count("detected", verdicts.iter().filter(|v| v.detected).count());
        } else {
            o.warnings.push("mutation.verdict_command not set; BDR not computed".into());
        }
        if let Some(report) = &m.fpv_report {
            let id = metrics.design_id.clone();
            metrics = metrics.merge(ingest_fpv_report(report, &id).map_err(|e| fail(st)(&e))?);
        }
        self.write(st, METRICS, &to_json_pretty(&metrics))?;
        Ok(o)
    }
}

/// Order-preserving map over `items` with at most `workers` threads.
fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    let size = items.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(size)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}
