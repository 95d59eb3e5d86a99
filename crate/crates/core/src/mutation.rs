// SPDX-License-Identifier: Apache-2.0

//! Single-edit RTL mutants, external verdict collection, and the four
//! evaluation metrics (FPR, COI, PC, BDR).
//!
//! Percentages are computed in integer hundredths with half-up rounding, so
//! `114 / 366` is exactly `31.15`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rtl::parser::parse_source;
use crate::rtl::tree::{file_tree, Tree};
use crate::rtl::{parse_design, RtlDesign, RtlError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOperator {
    NegateCondition,
    ReplaceBinaryOp,
    FlipConstantBit,
    SwapAssignRhsOperands,
    StuckAtZero,
    StuckAtOne,
}

impl MutationOperator {
    pub const ALL: [MutationOperator; 6] = [
        MutationOperator::NegateCondition,
        MutationOperator::ReplaceBinaryOp,
        MutationOperator::FlipConstantBit,
        MutationOperator::SwapAssignRhsOperands,
        MutationOperator::StuckAtZero,
        MutationOperator::StuckAtOne,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MutationOperator::NegateCondition => "negate_condition",
            MutationOperator::ReplaceBinaryOp => "replace_binary_op",
            MutationOperator::FlipConstantBit => "flip_constant_bit",
            MutationOperator::SwapAssignRhsOperands => "swap_assign_rhs_operands",
            MutationOperator::StuckAtZero => "stuck_at_zero",
            MutationOperator::StuckAtOne => "stuck_at_one",
        }
    }
}

impl fmt::Display for MutationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MutationOperator {
    type Err = MutationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MutationOperator::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| MutationError::UnknownOperator(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantLocation {
    pub file: String,
    pub line: u32,
    /// Pre-order index in the file's structural tree.
    pub node_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantSpec {
    pub mutant_id: String,
    pub operator: MutationOperator,
    pub location: MutantLocation,
    /// Source lines covering the mutated node, before and after.
    pub original_text: String,
    pub mutated_text: String,
}

/// A mutant together with the full text of the file it edits.
#[derive(Debug, Clone)]
pub struct Mutant {
    pub spec: MutantSpec,
    pub mutated_source: String,
}

#[derive(Debug, thiserror::Error)]
pub enum MutationError {
    #[error("no applicable mutation sites for the selected operators")]
    NoApplicableSites,
    #[error("unknown mutation operator {0:?}")]
    UnknownOperator(String),
    #[error("max_mutants must be positive")]
    InvalidLimit,
    #[error("no verdicts to aggregate")]
    EmptyVerdicts,
    #[error("mutant id {0} appears twice")]
    DuplicateMutant(String),
    #[error("{path}: schema mismatch: {reason}")]
    SchemaMismatch { path: String, reason: String },
    #[error("verdict command for {mutant}: {reason}")]
    VerdictCommand { mutant: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Rtl(#[from] RtlError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MutationError + '_ {
    move |source| MutationError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ------------------------------------------------------------------ sites

/// One candidate edit: replace `src[start..end]` with one of `candidates`,
/// tried in order until the result is a valid single-node mutant.
#[derive(Debug, Clone)]
struct Site {
    operator: MutationOperator,
    file_idx: usize,
    node_index: usize,
    start: usize,
    end: usize,
    line: u32,
    candidates: Vec<String>,
}

fn replacement_op(op: &str) -> Option<&'static str> {
    Some(match op {
        "&" => "|",
        "|" => "&",
        "&&" => "||",
        "||" => "&&",
        "^" => "&",
        "+" => "-",
        "-" => "+",
        "==" => "!=",
        "!=" => "==",
        "===" => "!==",
        "!==" => "===",
        "<" => ">=",
        ">=" => "<",
        ">" => "<=",
        "<=" => ">",
        "<<" => ">>",
        ">>" => "<<",
        _ => return None,
    })
}

/// Operand order matters for these, so a swap is not an equivalent mutant.
fn non_commutative(op: &str) -> bool {
    matches!(op, "-" | "/" | "%" | "<" | "<=" | ">" | ">=" | "<<" | ">>" | "<<<" | ">>>" | "**")
}

/// The literal with its least significant bit inverted, if the literal has a
/// known value in that bit.
pub fn flip_lsb(lit: &str) -> Option<String> {
    let (prefix, base, digits) = match lit.find('\'') {
        Some(q) => {
            let rest = &lit[q + 1..];
            let signed = rest.starts_with(['s', 'S']);
            let rest = if signed { &rest[1..] } else { rest };
            let base = rest.chars().next()?.to_ascii_lowercase();
            let digits_at = q + 1 + usize::from(signed) + 1;
            (&lit[..digits_at], base, &lit[digits_at..])
        }
        None => ("", 'd', lit),
    };
    let trimmed = digits.trim_end_matches('_');
    let last = trimmed.chars().last()?;
    let radix = match base {
        'b' => 2,
        'o' => 8,
        'd' => 10,
        'h' => 16,
        _ => return None,
    };
    if radix == 10 {
        let clean: String = trimmed.chars().filter(|c| *c != '_').collect();
        let v: u128 = clean.parse().ok()?;
        return Some(format!("{prefix}{}", v ^ 1));
    }
    let d = last.to_digit(radix)?;
    let flipped = std::char::from_digit(d ^ 1, radix)?;
    let flipped = if last.is_ascii_uppercase() { flipped.to_ascii_uppercase() } else { flipped };
    Some(format!("{prefix}{}{flipped}", &trimmed[..trimmed.len() - 1]))
}

/// Walks `t`, recording sites for every operator. `behav` is set inside the
/// right-hand sides of continuous assignments and inside always bodies.
fn collect_sites(t: &Tree, src: &str, file_idx: usize, ops: &BTreeSet<MutationOperator>) -> Vec<Site> {
    let mut out = Vec::new();
    let mut idx = 0usize;
    walk(t, src, file_idx, ops, false, &mut idx, &mut out);
    out
}

fn text(src: &str, t: &Tree) -> String {
    src[t.span.start..t.span.end].to_string()
}

fn push_site(
    out: &mut Vec<Site>,
    ops: &BTreeSet<MutationOperator>,
    file_idx: usize,
    operator: MutationOperator,
    node: &Tree,
    node_index: usize,
    candidates: Vec<String>,
) {
    if ops.contains(&operator) && !candidates.is_empty() {
        out.push(Site {
            operator,
            file_idx,
            node_index,
            start: node.span.start,
            end: node.span.end,
            line: node.span.line_start,
            candidates,
        });
    }
}

fn walk(
    t: &Tree,
    src: &str,
    file_idx: usize,
    ops: &BTreeSet<MutationOperator>,
    behav: bool,
    idx: &mut usize,
    out: &mut Vec<Site>,
) {
    let me = *idx;
    *idx += 1;
    if behav {
        match t.kind {
            "binary" => {
                if let (Some(new_op), Some(op)) = (replacement_op(&t.label), t.op_span) {
                    let (s, e) = (t.span.start, t.span.end);
                    let plain = format!("{}{new_op}{}", &src[s..op.start], &src[op.end..e]);
                    let lhs = text(src, &t.children[0]);
                    let rhs = text(src, &t.children[1]);
                    push_site(
                        out,
                        ops,
                        file_idx,
                        MutationOperator::ReplaceBinaryOp,
                        t,
                        me,
                        vec![plain, format!("(({lhs}) {new_op} ({rhs}))")],
                    );
                }
            }
            "number" => {
                if let Some(f) = flip_lsb(&t.label) {
                    push_site(out, ops, file_idx, MutationOperator::FlipConstantBit, t, me, vec![f]);
                }
            }
            _ => {}
        }
    }
    // condition nodes: first child of `if` and `ternary`
    let cond_parent = behav && matches!(t.kind, "if" | "ternary");
    // assignment right-hand sides: last child of `assign_pair` / `assign_stmt`
    let rhs_parent = t.kind == "assign_pair" || (behav && t.kind == "assign_stmt");
    let n = t.children.len();
    for (i, c) in t.children.iter().enumerate() {
        let child_index = *idx;
        if cond_parent && i == 0 {
            let cond = text(src, c);
            // a condition already in parens takes a bare `!`; validation rejects it otherwise
            let mut candidates = Vec::new();
            if cond.starts_with('(') && cond.ends_with(')') {
                candidates.push(format!("!{cond}"));
            }
            candidates.push(format!("!({cond})"));
            push_site(out, ops, file_idx, MutationOperator::NegateCondition, c, child_index, candidates);
        }
        if rhs_parent && i == n - 1 {
            let stuck = [(MutationOperator::StuckAtZero, "0"), (MutationOperator::StuckAtOne, "~0")];
            for (op, lit) in stuck {
                let already = parse_expr_tree(lit).is_some_and(|lt| lt == *c);
                if !already {
                    push_site(out, ops, file_idx, op, c, child_index, vec![lit.to_string()]);
                }
            }
            if c.kind == "binary" && non_commutative(&c.label) && c.children[0] != c.children[1] {
                let (l, r) = (text(src, &c.children[0]), text(src, &c.children[1]));
                push_site(
                    out,
                    ops,
                    file_idx,
                    MutationOperator::SwapAssignRhsOperands,
                    c,
                    child_index,
                    vec![format!("{r} {} {l}", c.label), format!("(({r}) {} ({l}))", c.label)],
                );
            }
        }
        let child_behav = match t.kind {
            "assign_pair" => i == 1,
            "always" => c.kind != "sens_list" && c.kind != "sens_star",
            // loop init and step are not design logic
            "for" => behav && (i == 1 || i == 3),
            "delay" => false,
            _ => behav,
        } && c.kind != "delay";
        walk(c, src, file_idx, ops, child_behav, idx, out);
    }
}

fn parse_expr_tree(s: &str) -> Option<Tree> {
    crate::rtl::parser::parse_expression("<lit>", s)
        .ok()
        .map(|e| crate::rtl::tree::expr_tree(&e))
}

fn line_bounds(src: &str, start: usize, end: usize) -> (usize, usize) {
    let ls = src[..start].rfind('\n').map_or(0, |i| i + 1);
    let le = src[end..].find('\n').map_or(src.len(), |i| end + i);
    (ls, le)
}

/// Applies the first candidate that re-parses and differs from the original
/// in exactly the site's node.
fn realize(site: &Site, design: &RtlDesign, trees: &[Tree]) -> Option<(String, String, String)> {
    let src = &design.files[site.file_idx].text;
    let orig = &trees[site.file_idx];
    for cand in &site.candidates {
        let mutated = format!("{}{cand}{}", &src[..site.start], &src[site.end..]);
        let Ok(parsed) = parse_source(&design.files[site.file_idx].path, &mutated) else { continue };
        let diff = orig.diff(&file_tree(&parsed.file));
        if diff.len() != 1 || orig.index_of_path(&diff[0]) != Some(site.node_index) {
            continue;
        }
        let mut files = design.files.clone();
        files[site.file_idx].text = mutated.clone();
        if parse_design(&files, Some(&design.root_module)).is_err() {
            continue;
        }
        let (ls, le) = line_bounds(src, site.start, site.end);
        let shift = cand.len() as isize - (site.end - site.start) as isize;
        let original_text = src[ls..le].trim().to_string();
        let mutated_text = mutated[ls..(le as isize + shift) as usize].trim().to_string();
        return Some((original_text, mutated_text, mutated));
    }
    None
}

/// Every valid single-edit site of the selected operators, in operator,
/// file, then tree order.
pub fn enumerate_mutants(design: &RtlDesign, operators: &BTreeSet<MutationOperator>) -> Vec<Mutant> {
    let trees: Vec<Tree> = design.asts.iter().map(file_tree).collect();
    let per_op: Vec<Vec<Mutant>> = std::thread::scope(|scope| {
        let handles: Vec<_> = operators
            .iter()
            .map(|&op| {
                let trees = &trees;
                scope.spawn(move || {
                    let only = BTreeSet::from([op]);
                    let mut out = Vec::new();
                    for (fi, t) in trees.iter().enumerate() {
                        for site in collect_sites(t, &design.files[fi].text, fi, &only) {
                            if let Some((o, m, full)) = realize(&site, design, trees) {
                                out.push(Mutant {
                                    spec: MutantSpec {
                                        mutant_id: String::new(),
                                        operator: site.operator,
                                        location: MutantLocation {
                                            file: design.files[fi].path.clone(),
                                            line: site.line,
                                            node_index: site.node_index,
                                        },
                                        original_text: o,
                                        mutated_text: m,
                                    },
                                    mutated_source: full,
                                });
                            }
                        }
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("mutant worker")).collect()
    });
    per_op.into_iter().flatten().collect()
}

/// Samples up to `max_mutants` of the enumerated mutants with a seeded
/// ChaCha8 generator; ids are `m{ordinal:04}_{operator}` in enumeration order.
pub fn generate_mutants(
    design: &RtlDesign,
    operators: &BTreeSet<MutationOperator>,
    seed: u64,
    max_mutants: usize,
) -> Result<Vec<Mutant>, MutationError> {
    if max_mutants == 0 {
        return Err(MutationError::InvalidLimit);
    }
    let all = enumerate_mutants(design, operators);
    if all.is_empty() {
        return Err(MutationError::NoApplicableSites);
    }
    let chosen: Vec<Mutant> = if all.len() > max_mutants {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks = rand::seq::index::sample(&mut rng, all.len(), max_mutants).into_vec();
        picks.sort_unstable();
        let mut all: Vec<Option<Mutant>> = all.into_iter().map(Some).collect();
        picks.into_iter().map(|i| all[i].take().expect("distinct")).collect()
    } else {
        all
    };
    Ok(chosen
        .into_iter()
        .enumerate()
        .map(|(i, mut m)| {
            m.spec.mutant_id = format!("m{i:04}_{}", m.spec.operator);
            m
        })
        .collect())
}

/// Writes one directory per mutant holding every design file (the mutated
/// one substituted) and `mutant.json`. Returns the directories in order.
pub fn write_mutants(design: &RtlDesign, mutants: &[Mutant], out_dir: &Path) -> Result<Vec<PathBuf>, MutationError> {
    let mut dirs = Vec::new();
    for m in mutants {
        let dir = out_dir.join(&m.spec.mutant_id);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for f in &design.files {
            let name = Path::new(&f.path).file_name().map_or_else(|| f.path.clone(), |n| n.to_string_lossy().into_owned());
            let body = if f.path == m.spec.location.file { &m.mutated_source } else { &f.text };
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(io_err(&p))?;
        }
        let p = dir.join("mutant.json");
        std::fs::write(&p, crate::to_json_pretty(&m.spec)).map_err(io_err(&p))?;
        dirs.push(dir);
    }
    Ok(dirs)
}

// --------------------------------------------------------------- verdicts

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub mutant_id: String,
    pub detected: bool,
}

/// Runs `command` once per mutant directory with at most `workers` processes
/// alive. `{mutant_dir}` and `{mutant_id}` in the template are substituted;
/// the template is split on whitespace, no shell is involved. A run must exit
/// 0 and print `DETECTED` or `SURVIVED` as its last non-empty stdout line.
pub fn collect_verdicts(command: &str, mutant_dirs: &[PathBuf], workers: usize) -> Result<Vec<Verdict>, MutationError> {
    let words: Vec<&str> = command.split_whitespace().collect();
    if words.is_empty() {
        return Err(MutationError::VerdictCommand {
            mutant: String::new(),
            reason: "empty command template".into(),
        });
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Verdict, MutationError>>>> =
        Mutex::new((0..mutant_dirs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(mutant_dirs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(dir) = mutant_dirs.get(i) else { break };
                let r = run_one(&words, dir);
                results.lock().expect("verdict results")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("verdict results")
        .into_iter()
        .map(|r| r.expect("every mutant visited"))
        .collect()
}

fn run_one(words: &[&str], dir: &Path) -> Result<Verdict, MutationError> {
    let id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let fail = |reason: String| MutationError::VerdictCommand { mutant: id.clone(), reason };
    let subst = |w: &str| w.replace("{mutant_dir}", &dir.display().to_string()).replace("{mutant_id}", &id);
    let out = Command::new(subst(words[0]))
        .args(words[1..].iter().map(|w| subst(w)))
        .output()
        .map_err(|e| fail(e.to_string()))?;
    if !out.status.success() {
        return Err(fail(format!("exited with {}", out.status)));
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    match stdout.lines().rev().map(str::trim).find(|l| !l.is_empty()) {
        Some("DETECTED") => Ok(Verdict { mutant_id: id.clone(), detected: true }),
        Some("SURVIVED") => Ok(Verdict { mutant_id: id.clone(), detected: false }),
        other => Err(fail(format!("expected DETECTED or SURVIVED, got {other:?}"))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VerdictRow {
    mutant_id: String,
    verdict: String,
}

pub fn write_verdicts(verdicts: &[Verdict], path: &Path) -> Result<(), MutationError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for v in verdicts {
        w.serialize(VerdictRow {
            mutant_id: v.mutant_id.clone(),
            verdict: if v.detected { "DETECTED" } else { "SURVIVED" }.into(),
        })
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_verdicts(path: &Path) -> Result<Vec<Verdict>, MutationError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["mutant_id", "verdict"] {
        return Err(schema(path, format!("header {:?}, expected mutant_id,verdict", header)));
    }
    let mut out = Vec::new();
    for row in r.deserialize::<VerdictRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let detected = match row.verdict.to_ascii_uppercase().as_str() {
            "DETECTED" => true,
            "SURVIVED" => false,
            v => return Err(schema(path, format!("verdict {v:?} for {}", row.mutant_id))),
        };
        out.push(Verdict { mutant_id: row.mutant_id, detected });
    }
    Ok(out)
}

fn schema(path: &Path, reason: String) -> MutationError {
    MutationError::SchemaMismatch {
        path: path.display().to_string(),
        reason,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> MutationError {
    schema(path, e.to_string())
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub design_id: String,
    pub fpr_percent: Option<f64>,
    pub coi_percent: Option<f64>,
    pub pc_percent: Option<f64>,
    pub bdr_percent: Option<f64>,
    pub sva_total: usize,
    pub timeout_passes: usize,
    pub detected_mutants: Option<usize>,
    pub total_mutants: Option<usize>,
}

impl MetricsRecord {
    /// Fills every field of `self` that `other` has set.
    pub fn merge(mut self, other: MetricsRecord) -> MetricsRecord {
        self.fpr_percent = other.fpr_percent.or(self.fpr_percent);
        self.coi_percent = other.coi_percent.or(self.coi_percent);
        self.pc_percent = other.pc_percent.or(self.pc_percent);
        self.bdr_percent = other.bdr_percent.or(self.bdr_percent);
        self.detected_mutants = other.detected_mutants.or(self.detected_mutants);
        self.total_mutants = other.total_mutants.or(self.total_mutants);
        if other.sva_total > 0 {
            self.sva_total = other.sva_total;
            self.timeout_passes = other.timeout_passes;
        }
        self
    }
}

/// `100 * num / den` in hundredths, rounded half-up. `den > 0`.
pub fn percent_hundredths(num: u64, den: u64) -> u64 {
    (20_000 * num + den) / (2 * den)
}

fn hundredths_to_f64(h: u64) -> f64 {
    h as f64 / 100.0
}

pub fn compute_bdr(verdicts: &[Verdict]) -> Result<MetricsRecord, MutationError> {
    if verdicts.is_empty() {
        return Err(MutationError::EmptyVerdicts);
    }
    let mut seen = BTreeSet::new();
    for v in verdicts {
        if !seen.insert(v.mutant_id.as_str()) {
            return Err(MutationError::DuplicateMutant(v.mutant_id.clone()));
        }
    }
    let detected = verdicts.iter().filter(|v| v.detected).count();
    Ok(MetricsRecord {
        bdr_percent: Some(hundredths_to_f64(percent_hundredths(detected as u64, verdicts.len() as u64))),
        detected_mutants: Some(detected),
        total_mutants: Some(verdicts.len()),
        ..Default::default()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropertyStatus {
    Proven,
    Cex,
    Timeout,
    Error,
}

const FPV_HEADER: [&str; 4] = ["property_id", "status", "coi_percent", "pc_percent"];

/// Parses a decimal percentage with at most two fractional digits into
/// hundredths.
fn parse_hundredths(s: &str) -> Option<u64> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() || frac.len() > 2 || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let frac = format!("{frac:0<2}");
    let v = int.parse::<u64>().ok()? * 100 + frac.parse::<u64>().ok()?;
    (v <= 10_000).then_some(v)
}

fn mean_hundredths(vals: &[u64]) -> Option<f64> {
    if vals.is_empty() {
        return None;
    }
    let n = vals.len() as u64;
    let sum: u64 = vals.iter().sum();
    Some(hundredths_to_f64((2 * sum + n) / (2 * n)))
}

/// Reads a formal-tool report. A timed-out property counts as passing; COI
/// and PC are averaged over the rows that report them.
pub fn ingest_fpv_report(report: &Path, design_id: &str) -> Result<MetricsRecord, MutationError> {
    let mut r = csv::Reader::from_path(report).map_err(|e| csv_err(report, e))?;
    let header = r.headers().map_err(|e| csv_err(report, e))?.clone();
    if header.iter().collect::<Vec<_>>() != FPV_HEADER {
        return Err(schema(report, format!("header {:?}, expected {}", header, FPV_HEADER.join(","))));
    }
    let (mut total, mut pass, mut timeouts) = (0u64, 0u64, 0usize);
    let (mut coi, mut pc) = (Vec::new(), Vec::new());
    let mut ids = BTreeSet::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(report, e))?;
        let row = i + 2;
        let id = rec[0].trim().to_string();
        if id.is_empty() || !ids.insert(id.clone()) {
            return Err(schema(report, format!("row {row}: empty or repeated property_id {id:?}")));
        }
        let status = match rec[1].trim() {
            "proven" => PropertyStatus::Proven,
            "cex" => PropertyStatus::Cex,
            "timeout" => PropertyStatus::Timeout,
            "error" => PropertyStatus::Error,
            s => return Err(schema(report, format!("row {row}: unknown status {s:?}"))),
        };
        total += 1;
        match status {
            PropertyStatus::Proven => pass += 1,
            PropertyStatus::Timeout => {
                pass += 1;
                timeouts += 1;
            }
            PropertyStatus::Cex | PropertyStatus::Error => {}
        }
        for (col, acc) in [(2, &mut coi), (3, &mut pc)] {
            let cell = rec[col].trim();
            if !cell.is_empty() {
                let v = parse_hundredths(cell)
                    .ok_or_else(|| schema(report, format!("row {row}: bad percentage {cell:?}")))?;
                acc.push(v);
            }
        }
    }
    if total == 0 {
        return Err(schema(report, "no property rows".into()));
    }
    Ok(MetricsRecord {
        design_id: design_id.to_string(),
        fpr_percent: Some(hundredths_to_f64(percent_hundredths(pass, total))),
        coi_percent: mean_hundredths(&coi),
        pc_percent: mean_hundredths(&pc),
        sva_total: total as usize,
        timeout_passes: timeouts,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtl::SourceFile;
    use std::io::Write;

    fn design(src: &str) -> RtlDesign {
        parse_design(&[SourceFile::new("t.v", src)], None).unwrap()
    }

    fn only(op: MutationOperator) -> BTreeSet<MutationOperator> {
        BTreeSet::from([op])
    }

    #[test]
    fn and_becomes_or() {
        let d = design("module m(input a, input c, output b);\n  assign b = a & c;\nendmodule\n");
        let m = generate_mutants(&d, &only(MutationOperator::ReplaceBinaryOp), 7, 10).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].spec.original_text, "assign b = a & c;");
        assert_eq!(m[0].spec.mutated_text, "assign b = a | c;");
        assert_eq!(m[0].spec.location.line, 2);
    }

    #[test]
    fn negate_if_condition() {
        let d = design(
            "module m(input clk, input en, input d, output reg q);\n  always @(posedge clk) if (en) q <= d;\nendmodule\n",
        );
        let m = generate_mutants(&d, &only(MutationOperator::NegateCondition), 7, 10).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m[0].spec.mutated_text.contains("if (!(en))"), "{}", m[0].spec.mutated_text);
    }

    #[test]
    fn precedence_change_falls_back_to_parentheses() {
        // `a | b & c` with `&` -> `|` would reassociate without the parens
        let d = design("module m(input a, input b, input c, output y);\n  assign y = a | b & c;\nendmodule\n");
        let m = enumerate_mutants(&d, &only(MutationOperator::ReplaceBinaryOp));
        assert_eq!(m.len(), 2);
        assert!(m.iter().any(|x| x.spec.mutated_text == "assign y = a | ((b) | (c));"));
        assert!(m.iter().any(|x| x.spec.mutated_text == "assign y = a & b & c;"
            || x.spec.mutated_text == "assign y = ((a) & (b & c));"));
    }

    #[test]
    fn every_operator_yields_one_node_edits() {
        let d = design(
            "module m(input clk, input [3:0] a, input [3:0] b, output reg [3:0] q, output y);
  assign y = (a < b) ? 1'b1 : 1'b0;
  always @(posedge clk) begin
    if (a == 4'd3) q <= a - b;
    else q <= 4'hA;
  end
endmodule
",
        );
        let all: BTreeSet<_> = MutationOperator::ALL.into_iter().collect();
        let ms = enumerate_mutants(&d, &all);
        let ops: BTreeSet<_> = ms.iter().map(|m| m.spec.operator).collect();
        assert_eq!(ops, all);
        let orig = file_tree(&d.asts[0]);
        for m in &ms {
            let t = file_tree(&parse_source("t.v", &m.mutated_source).unwrap().file);
            assert_eq!(orig.diff(&t).len(), 1, "{:?}", m.spec);
            assert_ne!(m.spec.original_text, m.spec.mutated_text);
        }
        // the sensitivity list and stuck-at on an existing constant are not sites
        assert!(ms.iter().all(|m| !m.spec.mutated_text.contains("negedge")));
    }

    #[test]
    fn sampling_is_seeded() {
        let d = design(
            "module m(input a, input b, input c, output x, output y, output z);
  assign x = a & b;
  assign y = b | c;
  assign z = a ^ c;
endmodule
",
        );
        let all: BTreeSet<_> = MutationOperator::ALL.into_iter().collect();
        let total = enumerate_mutants(&d, &all).len();
        let a = generate_mutants(&d, &all, 7, 4).unwrap();
        let b = generate_mutants(&d, &all, 7, 4).unwrap();
        assert_eq!(a.len(), 4);
        assert!(total > 4);
        assert_eq!(
            a.iter().map(|m| &m.spec).collect::<Vec<_>>(),
            b.iter().map(|m| &m.spec).collect::<Vec<_>>()
        );
        assert!(matches!(
            generate_mutants(&d, &only(MutationOperator::NegateCondition), 7, 4),
            Err(MutationError::NoApplicableSites)
        ));
    }

    #[test]
    fn literal_flips() {
        assert_eq!(flip_lsb("1'b0").as_deref(), Some("1'b1"));
        assert_eq!(flip_lsb("4'hA").as_deref(), Some("4'hB"));
        assert_eq!(flip_lsb("8'sd6").as_deref(), Some("8'sd7"));
        assert_eq!(flip_lsb("3").as_deref(), Some("2"));
        assert_eq!(flip_lsb("4'b10_1_").as_deref(), Some("4'b10_0"));
        assert_eq!(flip_lsb("2'bx"), None);
    }

    fn v(id: usize, d: bool) -> Verdict {
        Verdict { mutant_id: format!("m{id}"), detected: d }
    }

    #[test]
    fn bdr_arithmetic() {
        let bdr = |det: usize, n: usize| {
            let vs: Vec<_> = (0..n).map(|i| v(i, i < det)).collect();
            compute_bdr(&vs).unwrap().bdr_percent.unwrap()
        };
        assert_eq!(bdr(0, 10), 0.0);
        assert_eq!(bdr(10, 10), 100.0);
        assert_eq!(bdr(3, 8), 37.5);
        assert_eq!(bdr(114, 366), 31.15);
        assert!(matches!(compute_bdr(&[]), Err(MutationError::EmptyVerdicts)));
        assert!(matches!(compute_bdr(&[v(1, true), v(1, false)]), Err(MutationError::DuplicateMutant(_))));
    }

    #[test]
    fn half_up_matches_decimal_rounding() {
        // 1/8 = 12.5% exactly; 1/6 = 16.666..% -> 16.67; 1/800 = 0.125% -> 0.13
        assert_eq!(percent_hundredths(1, 8), 1250);
        assert_eq!(percent_hundredths(1, 6), 1667);
        assert_eq!(percent_hundredths(1, 800), 13);
    }

    fn report(rows: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "property_id,status,coi_percent,pc_percent\n{rows}").unwrap();
        f
    }

    #[test]
    fn timeout_counts_as_pass() {
        let f = report("p0,proven,90.00,50.00\np1,proven,,\np2,cex,80,40\np3,timeout,70.5,\n");
        let m = ingest_fpv_report(f.path(), "d").unwrap();
        assert_eq!(m.fpr_percent, Some(75.0));
        assert_eq!(m.timeout_passes, 1);
        assert_eq!(m.sva_total, 4);
        // (9000 + 8000 + 7050) / 3 = 8016.67 -> 80.17
        assert_eq!(m.coi_percent, Some(80.17));
        assert_eq!(m.pc_percent, Some(45.0));
    }

    #[test]
    fn report_schema_is_enforced() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "id,status\np0,proven\n").unwrap();
        assert!(matches!(ingest_fpv_report(f.path(), "d"), Err(MutationError::SchemaMismatch { .. })));
        let f = report("p0,maybe,,\n");
        assert!(matches!(ingest_fpv_report(f.path(), "d"), Err(MutationError::SchemaMismatch { .. })));
        let f = report("p0,proven,101,\n");
        assert!(matches!(ingest_fpv_report(f.path(), "d"), Err(MutationError::SchemaMismatch { .. })));
    }

    #[test]
    fn verdict_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        let vs = vec![v(0, true), v(1, false)];
        write_verdicts(&vs, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "mutant_id,verdict\nm0,DETECTED\nm1,SURVIVED\n");
        assert_eq!(read_verdicts(&p).unwrap(), vs);
    }

    #[cfg(unix)]
    #[test]
    fn subprocess_verdicts() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("judge.sh");
        std::fs::write(
            &script,
            "#!/bin/sh\ncase \"$1\" in *m0*) echo checking; echo DETECTED;; *m1*) echo SURVIVED;; *) exit 4;; esac\n",
        )
        .unwrap();
        let mut dirs = Vec::new();
        for id in ["m0", "m1"] {
            let d = dir.path().join(id);
            std::fs::create_dir(&d).unwrap();
            dirs.push(d);
        }
        let cmd = format!("sh {} {{mutant_dir}}", script.display());
        let got = collect_verdicts(&cmd, &dirs, 2).unwrap();
        assert_eq!(got, vec![v(0, true), v(1, false)]);
        let bad = dir.path().join("m9");
        std::fs::create_dir(&bad).unwrap();
        assert!(matches!(
            collect_verdicts(&cmd, &[bad], 1),
            Err(MutationError::VerdictCommand { .. })
        ));
    }

    #[test]
    fn mutant_directories() {
        let d = design("module m(input a, input c, output b);\n  assign b = a & c;\nendmodule\n");
        let m = generate_mutants(&d, &only(MutationOperator::ReplaceBinaryOp), 7, 10).unwrap();
        let out = tempfile::tempdir().unwrap();
        let dirs = write_mutants(&d, &m, out.path()).unwrap();
        let text = std::fs::read_to_string(dirs[0].join("t.v")).unwrap();
        assert!(text.contains("a | c"));
        let spec: MutantSpec = serde_json::from_str(&std::fs::read_to_string(dirs[0].join("mutant.json")).unwrap()).unwrap();
        assert_eq!(spec, m[0].spec);
    }
}
