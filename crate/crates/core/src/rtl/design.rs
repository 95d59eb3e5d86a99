// SPDX-License-Identifier: Apache-2.0

//! Elaboration-free design model: per-module declarations, dataflow edges,
//! instance bindings, and the instance tree rooted at the top module.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ast::{self, ModuleItem, PortHeader, Stmt};
use super::parser::parse_source;
use super::{RtlError, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        SourceFile {
            path: path.into(),
            text: text.into(),
        }
    }

    /// Lines `start..=end` (1-based) joined with newlines.
    pub fn slice_lines(&self, start: u32, end: u32) -> String {
        self.text
            .lines()
            .skip(start.saturating_sub(1) as usize)
            .take((end + 1).saturating_sub(start) as usize)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// File plus inclusive 1-based line range.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file: String,
    pub line_start: u32,
    pub line_end: u32,
}

impl SourceSpan {
    fn of(file: &str, span: Span) -> SourceSpan {
        SourceSpan {
            file: file.to_string(),
            line_start: span.line_start,
            line_end: span.line_end,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Port {
    pub name: String,
    pub direction: ast::Direction,
    pub width: Option<u32>,
    pub span: SourceSpan,
    /// Separate `reg`/`wire` declaration of a non-ANSI port.
    pub net_span: Option<SourceSpan>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Net {
    pub name: String,
    pub kind: ast::NetKind,
    pub width: Option<u32>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignKind {
    Continuous,
    Procedural,
    PortBinding,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssignEdge {
    pub lhs: String,
    pub bit_select: Option<String>,
    pub rhs_signals: BTreeSet<String>,
    pub kind: AssignKind,
    /// Statement span; widened to the whole always block for procedural writes.
    pub source_span: SourceSpan,
    /// The assignment statement itself.
    pub stmt_span: SourceSpan,
}

#[derive(Debug, Clone, Serialize)]
pub struct PortConnection {
    pub formal: String,
    pub actual_text: Option<String>,
    pub actual_signals: Vec<String>,
    /// Named (`.formal(actual)`) rather than positional.
    pub named: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Instance {
    pub name: String,
    pub module: String,
    pub connections: Vec<PortConnection>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModuleDef {
    pub name: String,
    pub ports: Vec<Port>,
    pub nets: Vec<Net>,
    pub instances: Vec<Instance>,
    pub assigns: Vec<AssignEdge>,
    pub params: BTreeSet<String>,
    pub source_span: SourceSpan,
}

impl ModuleDef {
    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn declares(&self, name: &str) -> bool {
        self.port(name).is_some() || self.nets.iter().any(|n| n.name == name)
    }

    /// Declared name matching `name` case-insensitively.
    pub fn find_signal_ci(&self, name: &str) -> Option<&str> {
        self.ports
            .iter()
            .map(|p| p.name.as_str())
            .chain(self.nets.iter().map(|n| n.name.as_str()))
            .find(|n| n.eq_ignore_ascii_case(name))
    }

    /// Declaration span of a signal (port declaration first).
    pub fn decl_span(&self, name: &str) -> Option<&SourceSpan> {
        self.port(name)
            .map(|p| &p.span)
            .or_else(|| self.nets.iter().find(|n| n.name == name).map(|n| &n.span))
    }

    pub fn signal_names(&self) -> Vec<&str> {
        self.ports
            .iter()
            .map(|p| p.name.as_str())
            .chain(self.nets.iter().map(|n| n.name.as_str()))
            .collect()
    }
}

/// One node of the elaborated instance tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstanceNode {
    pub path: Vec<String>,
    pub module: String,
}

/// A declared signal at a position in the instance tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignalRef {
    pub module_path: Vec<String>,
    pub signal: String,
    pub module: String,
    pub decl_span: SourceSpan,
}

impl SignalRef {
    /// `module.signal`, the qualified form used in assertions.
    pub fn qualified(&self) -> String {
        format!("{}.{}", self.module, self.signal)
    }

    /// Instance path from the root, `/`-separated, then the signal.
    pub fn path_name(&self) -> String {
        if self.module_path.is_empty() {
            self.signal.clone()
        } else {
            format!("{}/{}", self.module_path.join("/"), self.signal)
        }
    }
}

/// Result of [`RtlDesign::locate_signal`].
#[derive(Debug, Clone, Serialize)]
pub struct Located {
    pub refs: Vec<SignalRef>,
    /// The occurrence closest to the root.
    pub module0: SignalRef,
}

#[derive(Debug, Clone)]
pub struct RtlDesign {
    pub files: Vec<SourceFile>,
    pub asts: Vec<ast::SourceFile>,
    pub modules: BTreeMap<String, ModuleDef>,
    pub root_module: String,
    pub hierarchy: Vec<InstanceNode>,
    pub warnings: Vec<String>,
}

impl RtlDesign {
    pub fn module(&self, name: &str) -> Option<&ModuleDef> {
        self.modules.get(name)
    }

    pub fn file(&self, path: &str) -> Option<&SourceFile> {
        self.files.iter().find(|f| f.path == path)
    }

    pub fn root(&self) -> &ModuleDef {
        &self.modules[&self.root_module]
    }

    /// Every declaration whose name matches `name` case-insensitively, across
    /// the instance tree, ordered by path depth then path.
    pub fn locate_signal(&self, name: &str) -> Result<Located, RtlError> {
        let mut refs = Vec::new();
        for node in &self.hierarchy {
            let def = &self.modules[&node.module];
            if let Some(declared) = def.find_signal_ci(name) {
                refs.push(SignalRef {
                    module_path: node.path.clone(),
                    signal: declared.to_string(),
                    module: def.name.clone(),
                    decl_span: def.decl_span(declared).cloned().expect("declared"),
                });
            }
        }
        refs.sort_by(|a, b| {
            (a.module_path.len(), &a.module_path).cmp(&(b.module_path.len(), &b.module_path))
        });
        match refs.first().cloned() {
            Some(module0) => Ok(Located { refs, module0 }),
            None => Err(RtlError::SignalNotFound(name.to_string())),
        }
    }

    /// Module name at an instance path.
    pub fn module_at(&self, path: &[String]) -> Option<&ModuleDef> {
        self.hierarchy
            .iter()
            .find(|n| n.path == path)
            .and_then(|n| self.modules.get(&n.module))
    }

    pub fn signal_ref(&self, path: &[String], signal: &str) -> Option<SignalRef> {
        let def = self.module_at(path)?;
        let span = def.decl_span(signal)?;
        Some(SignalRef {
            module_path: path.to_vec(),
            signal: signal.to_string(),
            module: def.name.clone(),
            decl_span: span.clone(),
        })
    }
}

/// Parses and links a design. `top` selects the root when several modules
/// are never instantiated.
pub fn parse_design(files: &[SourceFile], top: Option<&str>) -> Result<RtlDesign, RtlError> {
    if files.is_empty() {
        return Err(RtlError::NoFiles);
    }
    let mut warnings = Vec::new();
    let mut asts = Vec::new();
    let mut modules: BTreeMap<String, ModuleDef> = BTreeMap::new();
    for f in files {
        let parsed = parse_source(&f.path, &f.text)?;
        warnings.extend(parsed.warnings);
        for item in &parsed.file.items {
            if let ast::FileItem::Module(m) = item {
                let def = lower_module(&f.path, m, &mut warnings)?;
                if let Some(prev) = modules.get(&def.name) {
                    return Err(RtlError::DuplicateModule {
                        name: def.name.clone(),
                        first: prev.source_span.file.clone(),
                        second: f.path.clone(),
                    });
                }
                modules.insert(def.name.clone(), def);
            }
        }
        asts.push(parsed.file);
    }
    if modules.is_empty() {
        return Err(RtlError::NoModules);
    }
    link(&mut modules)?;

    let instantiated: BTreeSet<&str> = modules
        .values()
        .flat_map(|m| m.instances.iter().map(|i| i.module.as_str()))
        .collect();
    let tops: Vec<String> = modules
        .keys()
        .filter(|m| !instantiated.contains(m.as_str()))
        .cloned()
        .collect();
    let root_module = match top {
        Some(t) if modules.contains_key(t) => t.to_string(),
        Some(t) => return Err(RtlError::UnknownTop(t.to_string())),
        None => match tops.len() {
            1 => tops[0].clone(),
            0 => return Err(RtlError::RecursiveInstantiation(modules.keys().next().unwrap().clone())),
            _ => return Err(RtlError::MultipleTops(tops)),
        },
    };
    let hierarchy = build_hierarchy(&modules, &root_module)?;
    Ok(RtlDesign {
        files: files.to_vec(),
        asts,
        modules,
        root_module,
        hierarchy,
        warnings,
    })
}

fn build_hierarchy(
    modules: &BTreeMap<String, ModuleDef>,
    root: &str,
) -> Result<Vec<InstanceNode>, RtlError> {
    let mut out = Vec::new();
    let mut stack = vec![(Vec::<String>::new(), root.to_string(), vec![root.to_string()])];
    while let Some((path, module, ancestors)) = stack.pop() {
        let def = &modules[&module];
        for inst in def.instances.iter().rev() {
            if ancestors.contains(&inst.module) {
                return Err(RtlError::RecursiveInstantiation(inst.module.clone()));
            }
            let mut child_path = path.clone();
            child_path.push(inst.name.clone());
            let mut child_anc = ancestors.clone();
            child_anc.push(inst.module.clone());
            stack.push((child_path, inst.module.clone(), child_anc));
        }
        out.push(InstanceNode { path, module });
    }
    Ok(out)
}

fn link(modules: &mut BTreeMap<String, ModuleDef>) -> Result<(), RtlError> {
    let port_lists: BTreeMap<String, Vec<String>> = modules
        .iter()
        .map(|(k, m)| (k.clone(), m.ports.iter().map(|p| p.name.clone()).collect()))
        .collect();
    for def in modules.values_mut() {
        for inst in &mut def.instances {
            let ports = port_lists
                .get(&inst.module)
                .ok_or_else(|| RtlError::UnresolvedInstance {
                    parent: def.name.clone(),
                    instance: inst.name.clone(),
                    module: inst.module.clone(),
                })?;
            for (i, conn) in inst.connections.iter_mut().enumerate() {
                if conn.named {
                    if !ports.contains(&conn.formal) {
                        return Err(RtlError::UnknownPort {
                            parent: def.name.clone(),
                            instance: inst.name.clone(),
                            module: inst.module.clone(),
                            port: conn.formal.clone(),
                        });
                    }
                } else {
                    conn.formal = ports.get(i).cloned().ok_or_else(|| RtlError::UnknownPort {
                        parent: def.name.clone(),
                        instance: inst.name.clone(),
                        module: inst.module.clone(),
                        port: format!("#{i}"),
                    })?;
                }
            }
        }
    }
    Ok(())
}

fn const_width(r: &Option<ast::Range>) -> Option<u32> {
    let Some(r) = r else { return Some(1) };
    let num = |e: &ast::Expr| match &e.kind {
        ast::ExprKind::Number(n) if n.bytes().all(|b| b.is_ascii_digit() || b == b'_') => {
            n.replace('_', "").parse::<i64>().ok()
        }
        _ => None,
    };
    let (m, l) = (num(&r.msb)?, num(&r.lsb)?);
    Some((m - l).unsigned_abs() as u32 + 1)
}

struct Lowering<'a> {
    file: &'a str,
    declared: BTreeSet<String>,
    params: BTreeSet<String>,
    warnings: &'a mut Vec<String>,
    module: String,
}

impl Lowering<'_> {
    /// Keeps declared signals; parameters drop silently, anything else is an
    /// implicit net and is reported.
    fn signals<'e>(&mut self, names: impl IntoIterator<Item = &'e str>) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for n in names {
            if self.declared.contains(n) {
                out.insert(n.to_string());
            } else if !self.params.contains(n) {
                self.warnings.push(format!(
                    "{}: module {}: '{}' is not declared (implicit net ignored)",
                    self.file, self.module, n
                ));
            }
        }
        out
    }

    fn procedural(
        &mut self,
        stmt: &Stmt,
        control: &[String],
        block_span: &SourceSpan,
        out: &mut Vec<AssignEdge>,
    ) {
        match stmt {
            Stmt::Block { stmts, .. } => {
                for s in stmts {
                    self.procedural(s, control, block_span, out);
                }
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                let mut inner = control.to_vec();
                inner.extend(cond.idents().into_iter().map(String::from));
                self.procedural(then_branch, &inner, block_span, out);
                if let Some(e) = else_branch {
                    self.procedural(e, &inner, block_span, out);
                }
            }
            Stmt::Case { expr, items, .. } => {
                let mut inner = control.to_vec();
                inner.extend(expr.idents().into_iter().map(String::from));
                for item in items {
                    let mut item_ctl = inner.clone();
                    for l in &item.labels {
                        item_ctl.extend(l.idents().into_iter().map(String::from));
                    }
                    self.procedural(&item.body, &item_ctl, block_span, out);
                }
            }
            Stmt::For {
                init,
                cond,
                step,
                body,
                ..
            } => {
                let mut inner = control.to_vec();
                inner.extend(cond.idents().into_iter().map(String::from));
                self.procedural(init, control, block_span, out);
                self.procedural(step, &inner, block_span, out);
                self.procedural(body, &inner, block_span, out);
            }
            Stmt::Assign { lhs, rhs, span, .. } => {
                let (targets, index_reads) = lhs.lvalue_targets();
                let mut reads: Vec<&str> = rhs.idents();
                reads.extend(index_reads);
                reads.extend(control.iter().map(String::as_str));
                let rhs_signals = self.signals(reads);
                for (lhs, bit_select) in targets {
                    if !self.declared.contains(&lhs) {
                        self.warnings.push(format!(
                            "{}: module {}: assignment to undeclared '{}'",
                            self.file, self.module, lhs
                        ));
                        continue;
                    }
                    out.push(AssignEdge {
                        lhs,
                        bit_select,
                        rhs_signals: rhs_signals.clone(),
                        kind: AssignKind::Procedural,
                        source_span: block_span.clone(),
                        stmt_span: SourceSpan::of(self.file, *span),
                    });
                }
            }
            Stmt::SysTask { .. } | Stmt::Null { .. } => {}
        }
    }

    fn continuous(&mut self, lhs: &ast::Expr, rhs: &ast::Expr, span: Span, out: &mut Vec<AssignEdge>) {
        let (targets, index_reads) = lhs.lvalue_targets();
        let mut reads = rhs.idents();
        reads.extend(index_reads);
        let rhs_signals = self.signals(reads);
        for (lhs, bit_select) in targets {
            if !self.declared.contains(&lhs) {
                self.warnings.push(format!(
                    "{}: module {}: assignment to undeclared '{}'",
                    self.file, self.module, lhs
                ));
                continue;
            }
            let s = SourceSpan::of(self.file, span);
            out.push(AssignEdge {
                lhs,
                bit_select,
                rhs_signals: rhs_signals.clone(),
                kind: AssignKind::Continuous,
                source_span: s.clone(),
                stmt_span: s,
            });
        }
    }
}

fn lower_module(file: &str, m: &ast::Module, warnings: &mut Vec<String>) -> Result<ModuleDef, RtlError> {
    let name = m.name.name.clone();
    let mut ports: Vec<Port> = Vec::new();
    let mut nets: Vec<Net> = Vec::new();
    let mut params = BTreeSet::new();
    let dup = |sig: &str| RtlError::DuplicateSignal {
        module: name.clone(),
        signal: sig.to_string(),
    };

    for p in &m.params {
        params.extend(p.assigns.iter().map(|(n, _)| n.name.clone()));
    }
    let header_names: Vec<String> = match &m.header {
        PortHeader::NonAnsi(names) => names.iter().map(|n| n.name.clone()).collect(),
        PortHeader::Ansi(decls) => {
            for d in decls {
                for n in &d.names {
                    if ports.iter().any(|p| p.name == n.name) {
                        return Err(dup(&n.name));
                    }
                    ports.push(Port {
                        name: n.name.clone(),
                        direction: d.direction,
                        width: const_width(&d.range),
                        span: SourceSpan::of(file, d.span),
                        net_span: None,
                    });
                }
            }
            Vec::new()
        }
    };

    // declarations first, so that statements can be checked against them
    for item in &m.items {
        match item {
            ModuleItem::Port(d) => {
                for n in &d.names {
                    if ports.iter().any(|p| p.name == n.name) {
                        return Err(dup(&n.name));
                    }
                    if !header_names.contains(&n.name) {
                        warnings.push(format!(
                            "{file}: module {name}: port '{}' declared but not in the port list",
                            n.name
                        ));
                    }
                    ports.push(Port {
                        name: n.name.clone(),
                        direction: d.direction,
                        width: const_width(&d.range),
                        span: SourceSpan::of(file, d.span),
                        net_span: None,
                    });
                }
            }
            ModuleItem::Param(p) => params.extend(p.assigns.iter().map(|(n, _)| n.name.clone())),
            _ => {}
        }
    }
    for item in &m.items {
        if let ModuleItem::Net(n) = item {
            for d in &n.declarators {
                let span = SourceSpan::of(file, n.span);
                if let Some(port) = ports.iter_mut().find(|p| p.name == d.name.name) {
                    if port.net_span.is_some() {
                        return Err(dup(&d.name.name));
                    }
                    port.net_span = Some(span);
                    if port.width.is_none() || n.range.is_some() {
                        port.width = const_width(&n.range);
                    }
                } else if nets.iter().any(|x| x.name == d.name.name) {
                    return Err(dup(&d.name.name));
                } else {
                    nets.push(Net {
                        name: d.name.name.clone(),
                        kind: n.kind,
                        width: const_width(&n.range),
                        span,
                    });
                }
            }
        }
    }
    for h in &header_names {
        if !ports.iter().any(|p| &p.name == h) {
            return Err(RtlError::Syntax {
                file: file.to_string(),
                line: m.span.line_start,
                message: format!("port '{h}' of module {name} has no direction declaration"),
            });
        }
    }
    // non-ANSI ports follow the header order
    if !header_names.is_empty() {
        ports.sort_by_key(|p| header_names.iter().position(|h| *h == p.name).unwrap_or(usize::MAX));
    }

    let declared: BTreeSet<String> = ports
        .iter()
        .map(|p| p.name.clone())
        .chain(nets.iter().map(|n| n.name.clone()))
        .collect();
    let mut lw = Lowering {
        file,
        declared,
        params: params.clone(),
        warnings,
        module: name.clone(),
    };
    let mut assigns = Vec::new();
    let mut instances = Vec::new();
    for item in &m.items {
        match item {
            ModuleItem::Net(n) => {
                for d in &n.declarators {
                    if let Some(init) = &d.init {
                        let lhs = ast::Expr {
                            kind: ast::ExprKind::Ident(d.name.name.clone()),
                            span: d.name.span,
                        };
                        lw.continuous(&lhs, init, n.span, &mut assigns);
                    }
                }
            }
            ModuleItem::Assign(a) => {
                for (l, r) in &a.assigns {
                    lw.continuous(l, r, a.span, &mut assigns);
                }
            }
            ModuleItem::Always(a) => {
                let block_span = SourceSpan::of(file, a.span);
                lw.procedural(&a.body, &[], &block_span, &mut assigns);
            }
            ModuleItem::Instance(inst) => {
                for d in &inst.instances {
                    let mut connections = Vec::new();
                    for (i, c) in d.conns.iter().enumerate() {
                        let (formal, expr, named) = match c {
                            ast::Connection::Named { port, expr } => (port.name.clone(), expr, true),
                            ast::Connection::Positional(expr) => (format!("#{i}"), expr, false),
                        };
                        let actual_signals = match expr {
                            Some(e) => lw.signals(e.idents()).into_iter().collect(),
                            None => Vec::new(),
                        };
                        connections.push(PortConnection {
                            formal,
                            actual_text: expr.as_ref().map(super::print::expr_to_string),
                            actual_signals,
                            named,
                        });
                    }
                    instances.push(Instance {
                        name: d.name.name.clone(),
                        module: inst.module.name.clone(),
                        connections,
                        span: SourceSpan::of(file, inst.span),
                    });
                }
            }
            // initial blocks carry no synthesizable dataflow
            ModuleItem::Initial(_) | ModuleItem::Opaque(_) => {}
            ModuleItem::Port(_) | ModuleItem::Param(_) => {}
        }
    }
    Ok(ModuleDef {
        name,
        ports,
        nets,
        instances,
        assigns,
        params,
        source_span: SourceSpan::of(file, m.span),
    })
}
