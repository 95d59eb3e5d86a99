// SPDX-License-Identifier: Apache-2.0

//! Assertion prompts, response parsing, template and binding validation, and
//! `.sva` file emission.
//!
//! Every assertion has the statement form
//! `assert property @(posedge M.S) (BODY);` where every signal, clock
//! included, is written `module.signal` with `module` the declaring module.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::bridge::{segment_text, CodeSegment};
use crate::chain::SignalChain;
use crate::llm::{ModelSettings, PromptRequest, StageTag};
use crate::objective::VerificationObjective;
use crate::rtl::RtlDesign;

pub const BINDING_FORMAT: &str = "{source_module_name}.{signal_name}";
pub const TEMPLATE: &str = "assert property @(posedge {source_module_name}.{signal_name})";
pub const NO_SEGMENTS: &str = "NO CODE SEGMENTS RESOLVED";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvaAssertion {
    pub assertion_id: String,
    pub objective_id: String,
    /// Empty when the statement has no recognizable clocking event.
    pub clock_binding: String,
    pub property_body: String,
    pub bound_signals: BTreeSet<String>,
    /// The statement with whitespace runs collapsed, ending in `;`.
    pub raw_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    TemplateViolation,
    UnknownBinding,
    UnqualifiedSignal,
    UnbalancedParens,
    EmptyBody,
    BodySyntax,
    UnknownConstruct,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub assertion_id: String,
    pub rule: Rule,
    pub message: String,
    /// Character offsets into `raw_text`, end exclusive.
    pub span: (usize, usize),
}

#[derive(Debug, thiserror::Error)]
pub enum SvaError {
    #[error("no assertion statements in the response for {0}")]
    NoAssertionsFound(String),
    #[error("assertions with error diagnostics cannot be emitted: {}", .0.join(", "))]
    ValidationGate(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const SYSTEM: &str = "You are a formal verification engineer writing SystemVerilog Assertions \
for an RTL design.";

pub fn build_sva_prompt(
    objective: &VerificationObjective,
    segments: &[CodeSegment],
    chains: &[SignalChain],
    design: &RtlDesign,
    model: &ModelSettings,
) -> PromptRequest {
    let mut u = String::new();
    let sigs: Vec<&str> = objective.involved_signals.iter().map(|e| e.canonical.as_str()).collect();
    let _ = writeln!(u, "Objective id: {}", objective.objective_id);
    let _ = writeln!(u, "Objective: {}", objective.statement);
    let _ = writeln!(u, "Signals: {}\n", sigs.join(", "));
    if !chains.is_empty() {
        u.push_str("Signal chains through the design hierarchy:\n");
        for c in chains {
            let _ = writeln!(u, "  {}", c.display());
        }
        u.push('\n');
    }
    if segments.is_empty() {
        let _ = writeln!(
            u,
            "{NO_SEGMENTS}: no RTL code was matched to this objective; rely on the signal names above.\n"
        );
    } else {
        u.push_str("Related RTL code:\n");
        for s in segments {
            let kind = serde_json::to_value(s.segment_kind).expect("kind serializes");
            let _ = writeln!(
                u,
                "// {}:{}-{} ({}, module {})",
                s.file,
                s.line_span.0,
                s.line_span.1,
                kind.as_str().unwrap_or_default(),
                s.module
            );
            u.push_str(&segment_text(design, s));
            u.push('\n');
        }
        u.push('\n');
    }
    let _ = write!(
        u,
        "Constraints:\n\
1. Reference every signal, the clock included, as {BINDING_FORMAT}, where source_module_name \
is the module that declares the signal.\n\
2. Every assertion follows the template {TEMPLATE} followed by the parenthesized property and a \
semicolon.\n\
3. Use only boolean expressions, |->, |=>, ##N delays, $rose, $fell, $stable, $past, and, or, not, \
and parentheses.\n\
Write one assertion per line and nothing else.\n"
    );
    model.request(StageTag::Sva, SYSTEM, u)
}

static WS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());
static CLOCK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^assert property\s*@\(\s*posedge\s+([A-Za-z_][A-Za-z0-9_]*\.[A-Za-z_][A-Za-z0-9_]*)\s*\)").unwrap()
});
/// Any clocking event, for statements that miss the template.
static ANY_CLOCK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^assert property\s*@\([^()]*\)").unwrap());
static QUALIFIED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)\b").unwrap());

/// One assertion from a single statement `assert property ... ;`.
fn assertion_from(stmt: &str, assertion_id: String, objective_id: &str) -> SvaAssertion {
    let raw_text = WS.replace_all(stmt.trim(), " ").into_owned();
    let (clock_binding, rest) = match CLOCK.captures(&raw_text) {
        Some(c) => (c[1].to_string(), &raw_text[c.get(0).expect("match").end()..]),
        None => {
            let skip = ANY_CLOCK.find(&raw_text).map_or("assert property".len(), |m| m.end());
            (String::new(), &raw_text[skip..])
        }
    };
    let property_body = strip_outer_parens(rest.trim().trim_end_matches(';').trim()).to_string();
    let bound_signals = QUALIFIED
        .captures_iter(&raw_text)
        .map(|c| format!("{}.{}", &c[1], &c[2]))
        .collect();
    SvaAssertion {
        assertion_id,
        objective_id: objective_id.to_string(),
        clock_binding,
        property_body,
        bound_signals,
        raw_text,
    }
}

/// `s` without one pair of parentheses enclosing all of it.
fn strip_outer_parens(s: &str) -> &str {
    if !s.starts_with('(') || !s.ends_with(')') {
        return s;
    }
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 && i != s.len() - 1 {
                    return s;
                }
            }
            _ => {}
        }
    }
    if depth == 0 {
        s[1..s.len() - 1].trim()
    } else {
        s
    }
}

/// Each `assert property` statement up to its `;`, ids `{objective}_a{n}`.
/// A statement with no terminating `;` runs to the end of its line.
pub fn parse_sva_response(text: &str, objective_id: &str) -> Result<Vec<SvaAssertion>, SvaError> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(at) = rest.find("assert property") {
        let tail = &rest[at..];
        let end = match tail.find(';') {
            Some(semi) => semi + 1,
            None => tail.find('\n').unwrap_or(tail.len()),
        };
        let id = format!("{objective_id}_a{}", out.len());
        out.push(assertion_from(&tail[..end], id, objective_id));
        rest = &tail[end..];
    }
    if out.is_empty() {
        return Err(SvaError::NoAssertionsFound(objective_id.to_string()));
    }
    Ok(out)
}

// ------------------------------------------------------------- validation

const KNOWN_FUNCS: &[&str] = &["$rose", "$fell", "$stable", "$past"];
const OUT_OF_SUBSET: &[&str] = &[
    "throughout",
    "within",
    "intersect",
    "first_match",
    "disable",
    "iff",
    "until",
    "s_until",
    "until_with",
    "eventually",
    "s_eventually",
    "nexttime",
    "always",
    "implies",
    "if",
    "case",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Qualified(String, String),
    Number,
    SysFunc(String),
    Delay(String),
    Op(&'static str),
}

const OPS: &[&str] = &[
    "|->", "|=>", "===", "!==", "<<<", ">>>", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "~&", "~|",
    "~^", "^~", "[*", "[=", "[->", "(", ")", "[", "]", ":", ",", "!", "~", "&", "|", "^", "+", "-", "*", "/",
    "%", "<", ">", "?",
];

static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:[0-9][0-9_]*)?'[sS]?[bBoOdDhH][0-9a-fA-FxXzZ_?]+|^'[01xXzZ]|^[0-9][0-9_]*").unwrap()
});
static WORD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\$?[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?").unwrap()
});
static DELAY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^##(\[[^\]]*\]|[0-9]+)").unwrap());

/// Tokens with their byte offsets in the body.
fn lex_body(body: &str) -> Result<Vec<(Tok, usize, usize)>, (String, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < body.len() {
        let r = &body[i..];
        let c = r.chars().next().expect("non-empty");
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let (tok, len) = if let Some(m) = DELAY.captures(r) {
            (Tok::Delay(m[1].to_string()), m[0].len())
        } else if let Some(m) = NUMBER.find(r) {
            (Tok::Number, m.end())
        } else if let Some(m) = WORD.find(r) {
            let w = m.as_str();
            let tok = if w.starts_with('$') {
                Tok::SysFunc(w.to_string())
            } else if let Some((a, b)) = w.split_once('.') {
                Tok::Qualified(a.to_string(), b.to_string())
            } else {
                Tok::Name(w.to_string())
            };
            (tok, m.end())
        } else if let Some(op) = OPS.iter().find(|o| r.starts_with(**o)) {
            (Tok::Op(op), op.len())
        } else {
            return Err((format!("unexpected character {c:?}"), i));
        };
        out.push((tok, i, i + len));
        i += len;
    }
    Ok(out)
}

/// Recursive-descent check of the property subset.
///
/// ```text
/// prop  := or ( ("|->" | "|=>") prop )?
/// or    := and ( "or" and )*
/// and   := unary ( "and" unary )*
/// unary := "not" unary | seq
/// seq   := delay? expr ( delay expr )*
/// expr  := boolean expression over qualified names, numbers, selects,
///          $rose/$fell/$stable/$past calls, and parenthesized props
/// ```
struct BodyParser<'a> {
    toks: &'a [(Tok, usize, usize)],
    pos: usize,
}

type PResult = Result<(), (String, usize)>;

fn binary_prec(op: &str) -> Option<u8> {
    Some(match op {
        "*" | "/" | "%" => 10,
        "+" | "-" => 9,
        "<<" | ">>" | "<<<" | ">>>" => 8,
        "<" | "<=" | ">" | ">=" => 7,
        "==" | "!=" | "===" | "!==" => 6,
        "&" => 5,
        "^" | "~^" | "^~" => 4,
        "|" => 3,
        "&&" => 2,
        "||" => 1,
        _ => return None,
    })
}

impl BodyParser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }
    fn at(&self) -> usize {
        self.toks.get(self.pos).map_or_else(|| self.toks.last().map_or(0, |t| t.2), |t| t.1)
    }
    fn fail(&self, msg: &str) -> PResult {
        Err((msg.to_string(), self.at()))
    }
    fn eat_op(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }
    fn eat_word(&mut self, w: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Name(n)) if n == w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }
    fn expect_op(&mut self, op: &str) -> PResult {
        if self.eat_op(op) {
            Ok(())
        } else {
            self.fail(&format!("expected `{op}`"))
        }
    }

    fn whole(&mut self) -> PResult {
        self.prop()?;
        if self.pos != self.toks.len() {
            return self.fail("unexpected trailing tokens");
        }
        Ok(())
    }

    fn prop(&mut self) -> PResult {
        self.or()?;
        if self.eat_op("|->") || self.eat_op("|=>") {
            self.prop()?;
        }
        Ok(())
    }

    fn or(&mut self) -> PResult {
        self.and()?;
        while self.eat_word("or") {
            self.and()?;
        }
        Ok(())
    }

    fn and(&mut self) -> PResult {
        self.unary()?;
        while self.eat_word("and") {
            self.unary()?;
        }
        Ok(())
    }

    fn unary(&mut self) -> PResult {
        if self.eat_word("not") {
            return self.unary();
        }
        self.seq()
    }

    fn delay(&mut self) -> Result<bool, (String, usize)> {
        if let Some(Tok::Delay(d)) = self.peek() {
            if !d.bytes().all(|b| b.is_ascii_digit()) {
                return Err((format!("delay range ##{d} is outside the subset"), self.at()));
            }
            self.pos += 1;
            return Ok(true);
        }
        Ok(false)
    }

    fn seq(&mut self) -> PResult {
        self.delay()?;
        self.expr(0)?;
        while self.delay()? {
            self.expr(0)?;
        }
        Ok(())
    }

    fn expr(&mut self, min: u8) -> PResult {
        self.operand()?;
        loop {
            let Some(Tok::Op(op)) = self.peek() else { break };
            let Some(p) = binary_prec(op) else { break };
            if p <= min {
                break;
            }
            self.pos += 1;
            self.expr(p)?;
        }
        Ok(())
    }

    fn operand(&mut self) -> PResult {
        for u in ["!", "~", "-", "&", "|", "^", "~&", "~|", "~^"] {
            if self.eat_op(u) {
                return self.operand();
            }
        }
        match self.peek().cloned() {
            Some(Tok::Qualified(..)) => {
                self.pos += 1;
                self.selects()
            }
            // bare names already carry an UnqualifiedSignal diagnostic
            Some(Tok::Name(n)) if !matches!(n.as_str(), "and" | "or" | "not") => {
                self.pos += 1;
                self.selects()
            }
            Some(Tok::Number) => {
                self.pos += 1;
                Ok(())
            }
            Some(Tok::SysFunc(f)) if KNOWN_FUNCS.contains(&f.as_str()) => {
                self.pos += 1;
                self.expect_op("(")?;
                self.expr(0)?;
                if f == "$past" && self.eat_op(",") {
                    self.expr(0)?;
                }
                self.expect_op(")")
            }
            Some(Tok::Op("(")) => {
                self.pos += 1;
                self.prop()?;
                self.expect_op(")")?;
                self.selects()
            }
            _ => self.fail("expected an operand"),
        }
    }

    fn selects(&mut self) -> PResult {
        while self.eat_op("[") {
            self.expr(0)?;
            if self.eat_op(":") {
                self.expr(0)?;
            }
            self.expect_op("]")?;
        }
        Ok(())
    }
}

fn char_span(text: &str, start: usize, end: usize) -> (usize, usize) {
    (text[..start].chars().count(), text[..end].chars().count())
}

/// All diagnostics for one assertion; empty means it conforms.
pub fn validate_sva(a: &SvaAssertion, design: &RtlDesign) -> Vec<Diagnostic> {
    let raw = &a.raw_text;
    let mut out = Vec::new();
    let mut diag = |severity, rule, message: String, start: usize, end: usize| {
        out.push(Diagnostic {
            severity,
            assertion_id: a.assertion_id.clone(),
            rule,
            message,
            span: char_span(raw, start, end),
        })
    };
    let full = (0, raw.len());

    // (a) statement form
    let clock_end = CLOCK.find(raw).map(|m| m.end());
    match clock_end {
        None => diag(
            Severity::Error,
            Rule::TemplateViolation,
            "statement does not start with `assert property @(posedge module.signal)`".into(),
            full.0,
            full.1,
        ),
        Some(ce) => {
            let tail = raw[ce..].trim_end();
            let ok = tail.ends_with(';') && {
                let inner = tail[..tail.len() - 1].trim();
                inner.starts_with('(') && strip_outer_parens(inner).len() + 2 <= inner.len()
            };
            if !ok {
                diag(
                    Severity::Error,
                    Rule::TemplateViolation,
                    "property must be one parenthesized expression followed by `;`".into(),
                    ce,
                    raw.len(),
                );
            }
        }
    }

    // body-level rules
    let body = a.property_body.as_str();
    let body_at = raw.find(body).filter(|_| !body.is_empty()).unwrap_or(0);
    if body.is_empty() {
        diag(Severity::Error, Rule::EmptyBody, "property body is empty".into(), full.0, full.1);
    } else {
        let mut depth = 0i32;
        let mut bad = None;
        for (i, c) in body.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth < 0 && bad.is_none() {
                        bad = Some(i);
                    }
                }
                _ => {}
            }
        }
        if bad.is_some() || depth != 0 {
            let at = body_at + bad.unwrap_or(body.len());
            diag(Severity::Error, Rule::UnbalancedParens, "unbalanced parentheses in property".into(), at, at);
        } else {
            match lex_body(body) {
                Err((msg, at)) => diag(Severity::Error, Rule::BodySyntax, msg, body_at + at, body_at + at + 1),
                Ok(toks) => {
                    let mut outside = false;
                    for (t, s, e) in &toks {
                        let (s, e) = (body_at + s, body_at + e);
                        match t {
                            Tok::Name(n) if OUT_OF_SUBSET.contains(&n.as_str()) => {
                                outside = true;
                                diag(Severity::Warning, Rule::UnknownConstruct, format!("`{n}` is outside the checked subset"), s, e);
                            }
                            Tok::Name(n) if n == "and" || n == "or" || n == "not" => {}
                            Tok::Name(n) => diag(
                                Severity::Error,
                                Rule::UnqualifiedSignal,
                                format!("`{n}` must be written as module.signal"),
                                s,
                                e,
                            ),
                            Tok::SysFunc(f) if !KNOWN_FUNCS.contains(&f.as_str()) => {
                                outside = true;
                                diag(Severity::Warning, Rule::UnknownConstruct, format!("`{f}` is outside the checked subset"), s, e);
                            }
                            Tok::Op(op @ ("[*" | "[=" | "[->")) => {
                                outside = true;
                                diag(Severity::Warning, Rule::UnknownConstruct, format!("repetition `{op}` is outside the checked subset"), s, e);
                            }
                            Tok::Delay(d) if !d.bytes().all(|b| b.is_ascii_digit()) => {
                                outside = true;
                                diag(Severity::Warning, Rule::UnknownConstruct, format!("delay range `##{d}` is outside the checked subset"), s, e);
                            }
                            _ => {}
                        }
                    }
                    if !outside {
                        let mut p = BodyParser { toks: &toks, pos: 0 };
                        if let Err((msg, at)) = p.whole() {
                            diag(Severity::Error, Rule::BodySyntax, msg, body_at + at, body_at + at);
                        }
                    }
                }
            }
        }
    }

    // (b) bindings, clock included
    for m in QUALIFIED.captures_iter(raw) {
        let whole = m.get(0).expect("match");
        let (module, signal) = (&m[1], &m[2]);
        let known = design
            .module(module)
            .map(|d| d.declares(signal) || d.params.contains(signal));
        let msg = match known {
            None => format!("module `{module}` is not defined in the design"),
            Some(false) => format!("`{signal}` is not declared in module `{module}`"),
            Some(true) => continue,
        };
        diag(Severity::Error, Rule::UnknownBinding, msg, whole.start(), whole.end());
    }
    out
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

// ---------------------------------------------------------------- files

const META: &str = "// assertion_id: ";

/// File text: a header with the run id, then per assertion a metadata
/// comment and the statement, ordered by assertion id.
pub fn render_file(assertions: &[SvaAssertion], run_id: &str) -> String {
    let mut sorted: Vec<&SvaAssertion> = assertions.iter().collect();
    sorted.sort_by(|a, b| a.assertion_id.cmp(&b.assertion_id));
    let mut s = format!("// assertgen run {run_id}\n// assertions: {}\n", sorted.len());
    for a in sorted {
        let _ = write!(s, "\n{META}{} objective_id: {}\n{}\n", a.assertion_id, a.objective_id, a.raw_text);
    }
    s
}

/// Writes the file after re-validating every assertion against `design`.
pub fn emit_file(
    assertions: &[SvaAssertion],
    design: &RtlDesign,
    out_path: &Path,
    run_id: &str,
) -> Result<(), SvaError> {
    let failing: Vec<String> = assertions
        .iter()
        .filter(|a| has_errors(&validate_sva(a, design)))
        .map(|a| a.assertion_id.clone())
        .collect();
    if !failing.is_empty() {
        return Err(SvaError::ValidationGate(failing));
    }
    std::fs::write(out_path, render_file(assertions, run_id)).map_err(|source| SvaError::Io {
        path: out_path.display().to_string(),
        source,
    })
}

/// Reads an emitted file back, taking ids from the metadata comments.
pub fn parse_sva_file(text: &str) -> Vec<SvaAssertion> {
    let mut out = Vec::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let Some(meta) = line.strip_prefix(META) else { continue };
        let Some((id, obj)) = meta.split_once(" objective_id: ") else { continue };
        if let Some(stmt) = lines.next() {
            out.push(assertion_from(stmt, id.to_string(), obj));
        }
    }
    out
}
