// SPDX-License-Identifier: Apache-2.0

//! Fixture loading and independent oracles shared by the integration tests
//! and the acceptance harness. Nothing here calls the code under test to
//! compute an expected value.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use assertgen::rtl::ast::{self, ExprKind, FileItem, ModuleItem, PortHeader, Stmt};
use assertgen::rtl::{parse_design, RtlDesign, SourceFile};
use regex::Regex;

pub fn testdata() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata")
}

pub fn i2c_dir() -> PathBuf {
    testdata().join("i2c")
}

pub const I2C_RTL: [&str; 3] = [
    "rtl/i2c_master_top.v",
    "rtl/i2c_master_byte_ctrl.v",
    "rtl/i2c_master_bit_ctrl.v",
];

pub fn i2c_sources() -> Vec<SourceFile> {
    I2C_RTL
        .iter()
        .map(|p| SourceFile::new(*p, std::fs::read_to_string(i2c_dir().join(p)).unwrap()))
        .collect()
}

pub fn i2c_design() -> RtlDesign {
    parse_design(&i2c_sources(), Some("i2c_master_top")).unwrap()
}

/// Copies the fixture inputs and the replay config into `scratch`, so the
/// relative input paths (and therefore the recorded prompts) stay the same.
/// `extra` is appended to the config. Returns the config path; artifacts go
/// to `scratch/out`.
pub fn replay_workspace(scratch: &Path, extra: &str) -> PathBuf {
    for sub in ["spec", "rtl", "fpv"] {
        let dst = scratch.join(sub);
        std::fs::create_dir_all(&dst).unwrap();
        for e in std::fs::read_dir(i2c_dir().join(sub)).unwrap() {
            let p = e.unwrap().path();
            std::fs::copy(&p, dst.join(p.file_name().unwrap())).unwrap();
        }
    }
    std::fs::copy(i2c_dir().join("llm_fixtures.jsonl"), scratch.join("llm_fixtures.jsonl")).unwrap();
    let mut text = std::fs::read_to_string(i2c_dir().join("assertgen.toml")).unwrap();
    text.push_str(extra);
    let path = scratch.join("assertgen.toml");
    std::fs::write(&path, text).unwrap();
    path
}

/// Every file under `dir` as relative path -> bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

// ---------------------------------------------------------------- entities

/// Breadth-first closure of `seed` over an adjacency map.
pub fn bfs_reach(seed: &str, adj: &BTreeMap<String, Vec<String>>) -> BTreeSet<String> {
    let mut seen = BTreeSet::from([seed.to_string()]);
    let mut q = VecDeque::from([seed.to_string()]);
    while let Some(n) = q.pop_front() {
        for m in adj.get(&n).into_iter().flatten() {
            if seen.insert(m.clone()) {
                q.push_back(m.clone());
            }
        }
    }
    seen
}

// ------------------------------------------------------------------ chains

/// Maximal simple paths from `start`, built breadth-first over partial paths.
/// A path ends when it has `max_depth` edges or every successor is already on
/// it. Each result carries whether its last node had any successor at all.
pub fn maximal_simple_paths(
    succ: &[Vec<usize>],
    start: usize,
    max_depth: usize,
) -> BTreeSet<(Vec<usize>, bool)> {
    let mut out = BTreeSet::new();
    let mut q = VecDeque::from([vec![start]]);
    while let Some(p) = q.pop_front() {
        let last = *p.last().unwrap();
        let ext: Vec<usize> = succ[last].iter().copied().filter(|s| !p.contains(s)).collect();
        if p.len() - 1 == max_depth || ext.is_empty() {
            out.insert((p, !succ[last].is_empty()));
            continue;
        }
        for s in ext {
            let mut np = p.clone();
            np.push(s);
            q.push_back(np);
        }
    }
    out
}

// ------------------------------------------------------------------- graph

fn idents(e: &ast::Expr, out: &mut BTreeSet<String>) {
    match &e.kind {
        ExprKind::Ident(n) => {
            out.insert(n.clone());
        }
        ExprKind::Macro(_) | ExprKind::Number(_) | ExprKind::Str(_) => {}
        ExprKind::Index { base, index } => {
            idents(base, out);
            idents(index, out);
        }
        ExprKind::Slice { base, left, right, .. } => {
            idents(base, out);
            idents(left, out);
            idents(right, out);
        }
        ExprKind::Unary { operand, .. } => idents(operand, out),
        ExprKind::Binary { lhs, rhs, .. } => {
            idents(lhs, out);
            idents(rhs, out);
        }
        ExprKind::Ternary { cond, then_expr, else_expr } => {
            idents(cond, out);
            idents(then_expr, out);
            idents(else_expr, out);
        }
        ExprKind::Concat(v) | ExprKind::Call { args: v, .. } => v.iter().for_each(|x| idents(x, out)),
        ExprKind::Replicate { count, items } => {
            idents(count, out);
            items.iter().for_each(|x| idents(x, out));
        }
    }
}

/// (written base names, names read by target selects)
fn targets(e: &ast::Expr) -> (Vec<String>, BTreeSet<String>) {
    let mut reads = BTreeSet::new();
    let mut written = Vec::new();
    let mut stack = vec![e];
    while let Some(x) = stack.pop() {
        match &x.kind {
            ExprKind::Ident(n) => written.push(n.clone()),
            ExprKind::Index { base, index } => {
                idents(index, &mut reads);
                stack.push(base);
            }
            ExprKind::Slice { base, left, right, .. } => {
                idents(left, &mut reads);
                idents(right, &mut reads);
                stack.push(base);
            }
            ExprKind::Concat(v) => stack.extend(v.iter()),
            _ => idents(x, &mut reads),
        }
    }
    (written, reads)
}

struct ModInfo {
    declared: BTreeSet<String>,
    dirs: BTreeMap<String, ast::Direction>,
    /// Port names in header order, for positional connections.
    order: Vec<String>,
    /// (lhs, reads) pairs; reads include enclosing control expressions.
    flows: Vec<(String, BTreeSet<String>)>,
    /// (module, instance, [(formal, actual names)])
    insts: Vec<(String, String, Vec<(String, BTreeSet<String>)>)>,
}

fn walk(s: &Stmt, ctl: &BTreeSet<String>, flows: &mut Vec<(String, BTreeSet<String>)>) {
    match s {
        Stmt::Block { stmts, .. } => stmts.iter().for_each(|x| walk(x, ctl, flows)),
        Stmt::If { cond, then_branch, else_branch, .. } => {
            let mut c = ctl.clone();
            idents(cond, &mut c);
            walk(then_branch, &c, flows);
            if let Some(e) = else_branch {
                walk(e, &c, flows);
            }
        }
        Stmt::Case { expr, items, .. } => {
            let mut c = ctl.clone();
            idents(expr, &mut c);
            for it in items {
                let mut ci = c.clone();
                it.labels.iter().for_each(|l| idents(l, &mut ci));
                walk(&it.body, &ci, flows);
            }
        }
        Stmt::For { init, cond, step, body, .. } => {
            walk(init, ctl, flows);
            let mut c = ctl.clone();
            idents(cond, &mut c);
            walk(step, &c, flows);
            walk(body, &c, flows);
        }
        Stmt::Assign { lhs, rhs, .. } => {
            let (w, mut r) = targets(lhs);
            idents(rhs, &mut r);
            r.extend(ctl.iter().cloned());
            for n in w {
                flows.push((n, r.clone()));
            }
        }
        Stmt::SysTask { .. } | Stmt::Null { .. } => {}
    }
}

fn mod_info(m: &ast::Module) -> ModInfo {
    let mut info = ModInfo {
        declared: BTreeSet::new(),
        dirs: BTreeMap::new(),
        order: Vec::new(),
        flows: Vec::new(),
        insts: Vec::new(),
    };
    match &m.header {
        PortHeader::NonAnsi(names) => info.order.extend(names.iter().map(|i| i.name.clone())),
        PortHeader::Ansi(ports) => {
            for p in ports {
                for n in &p.names {
                    info.order.push(n.name.clone());
                    info.declared.insert(n.name.clone());
                    info.dirs.insert(n.name.clone(), p.direction);
                }
            }
        }
    }
    for item in &m.items {
        match item {
            ModuleItem::Port(p) => {
                for n in &p.names {
                    info.declared.insert(n.name.clone());
                    info.dirs.insert(n.name.clone(), p.direction);
                }
            }
            ModuleItem::Net(d) => {
                for x in &d.declarators {
                    info.declared.insert(x.name.name.clone());
                    if let Some(init) = &x.init {
                        let mut r = BTreeSet::new();
                        idents(init, &mut r);
                        info.flows.push((x.name.name.clone(), r));
                    }
                }
            }
            ModuleItem::Assign(a) => {
                for (l, r) in &a.assigns {
                    let (w, mut reads) = targets(l);
                    idents(r, &mut reads);
                    for n in w {
                        info.flows.push((n, reads.clone()));
                    }
                }
            }
            ModuleItem::Always(a) => walk(&a.body, &BTreeSet::new(), &mut info.flows),
            ModuleItem::Instance(i) => {
                for d in &i.instances {
                    let conns = d
                        .conns
                        .iter()
                        .enumerate()
                        .filter_map(|(k, c)| {
                            let (formal, expr) = match c {
                                ast::Connection::Named { port, expr } => (port.name.clone(), expr),
                                ast::Connection::Positional(expr) => (format!("#{k}"), expr),
                            };
                            let e = expr.as_ref()?;
                            let mut s = BTreeSet::new();
                            idents(e, &mut s);
                            Some((formal, s))
                        })
                        .collect();
                    info.insts.push((i.module.name.clone(), d.name.name.clone(), conns));
                }
            }
            ModuleItem::Param(_) | ModuleItem::Initial(_) | ModuleItem::Opaque(_) => {}
        }
    }
    info
}

/// Edge set `(from, to)` of `path/signal` names, computed straight from the
/// syntax trees: every read of an assignment (control included) flows to
/// each written signal, and named port bindings follow the port direction.
pub fn naive_edges(design: &RtlDesign, root: &str) -> BTreeSet<(String, String)> {
    let mut mods = BTreeMap::new();
    for f in &design.asts {
        for it in &f.items {
            if let FileItem::Module(m) = it {
                mods.insert(m.name.name.clone(), mod_info(m));
            }
        }
    }
    let name = |path: &[String], s: &str| {
        if path.is_empty() {
            s.to_string()
        } else {
            format!("{}/{s}", path.join("/"))
        }
    };
    let mut out = BTreeSet::new();
    let mut todo = vec![(Vec::<String>::new(), root.to_string())];
    while let Some((path, m)) = todo.pop() {
        let info = &mods[&m];
        for (lhs, reads) in &info.flows {
            for r in reads.iter().filter(|r| info.declared.contains(*r)) {
                out.insert((name(&path, r), name(&path, lhs)));
            }
        }
        for (cm, inst, conns) in &info.insts {
            let child = &mods[cm];
            let mut cpath = path.clone();
            cpath.push(inst.clone());
            for (formal, actuals) in conns {
                let formal = match formal.strip_prefix('#') {
                    Some(k) => &child.order[k.parse::<usize>().unwrap()],
                    None => formal,
                };
                let dir = child.dirs[formal];
                for a in actuals.iter().filter(|a| info.declared.contains(*a)) {
                    let (p, c) = (name(&path, a), name(&cpath, formal));
                    match dir {
                        ast::Direction::Input => {
                            out.insert((p, c));
                        }
                        ast::Direction::Output => {
                            out.insert((c, p));
                        }
                        ast::Direction::Inout => {
                            out.insert((p.clone(), c.clone()));
                            out.insert((c, p));
                        }
                    }
                }
            }
            todo.push((cpath, cm.clone()));
        }
    }
    out
}

// ------------------------------------------------------------------ bridge

/// One expected segment: (file, first line, last line, kind, module).
pub type SegKey = (String, u32, u32, &'static str, String);

struct TextModule {
    file: String,
    name: String,
    /// 0-based line indices into the file, inclusive.
    first: usize,
    last: usize,
    header_end: usize,
}

fn text_modules(files: &[SourceFile]) -> Vec<TextModule> {
    let start = Regex::new(r"^\s*module\s+(\w+)").unwrap();
    let mut out = Vec::new();
    for f in files {
        let lines: Vec<&str> = f.text.lines().collect();
        let mut i = 0;
        while i < lines.len() {
            if let Some(c) = start.captures(lines[i]) {
                let first = i;
                let header_end = (i..lines.len()).find(|&j| lines[j].contains(");")).unwrap();
                let last = (i..lines.len()).find(|&j| lines[j].trim() == "endmodule").unwrap();
                out.push(TextModule {
                    file: f.path.clone(),
                    name: c[1].to_string(),
                    first,
                    last,
                    header_end,
                });
                i = last;
            }
            i += 1;
        }
    }
    out
}

/// Run of non-blank lines around `at`.
fn paragraph(lines: &[&str], at: usize) -> (usize, usize) {
    let mut a = at;
    while a > 0 && !lines[a - 1].trim().is_empty() {
        a -= 1;
    }
    let mut b = at;
    while b + 1 < lines.len() && !lines[b + 1].trim().is_empty() {
        b += 1;
    }
    (a, b)
}

/// Grep-style scan of the fixture text for the lines that define `signal` in
/// `module`, instantiated as `parent_instance` unless it is the root.
/// Relies on the fixture's layout: one declaration per line and items
/// separated by blank lines.
pub fn grep_segments(
    files: &[SourceFile],
    module: &str,
    signal: &str,
    parent_instance: Option<&str>,
) -> BTreeSet<SegKey> {
    let mods = text_modules(files);
    let tm = mods.iter().find(|m| m.name == module).expect("module in text");
    let text = &files.iter().find(|f| f.path == tm.file).unwrap().text;
    let lines: Vec<&str> = text.lines().collect();
    let s = regex::escape(signal);
    let port_hdr = Regex::new(&format!(r"^\s*(input|output|inout)\b[^;]*\b{s}\s*,?\s*$")).unwrap();
    let port_body = Regex::new(&format!(r"^\s*(input|output|inout)\b[^;]*\b{s}\s*;")).unwrap();
    let net = Regex::new(&format!(r"^\s*(wire|reg|logic|integer)\b[^;=]*\b{s}\s*(;|=)")).unwrap();
    let net_init = Regex::new(&format!(r"^\s*(wire|reg|logic)\b[^;=]*\b{s}\s*=")).unwrap();
    let cont = Regex::new(&format!(r"^\s*assign\s+{s}\b[^=]*=")).unwrap();
    let proc_ = Regex::new(&format!(r"^\s*(?:[\w']+\s*:\s*)?{s}\s*(?:\[[^\]]*\])?\s*<?=[^=]")).unwrap();
    let inst_head = Regex::new(r"^\s*(\w+)\s+(?:#\(.*\)\s*)?(\w+)\s*\($").unwrap();
    let binds = Regex::new(&format!(r"\.\w+\s*\([^)]*\b{s}\b[^)]*\)")).unwrap();

    let mut out = BTreeSet::new();
    let key = |a: usize, b: usize, kind: &'static str, m: &str| {
        (tm.file.clone(), a as u32 + 1, b as u32 + 1, kind, m.to_string())
    };
    for i in tm.first..=tm.last {
        let l = lines[i];
        let in_header = i <= tm.header_end;
        if (in_header && port_hdr.is_match(l)) || (!in_header && port_body.is_match(l)) {
            out.insert(key(i, i, "port", module));
        }
    }
    for i in tm.header_end + 1..=tm.last {
        let l = lines[i];
        if net.is_match(l) {
            out.insert(key(i, i, "declaration", module));
        }
        if net_init.is_match(l) || cont.is_match(l) {
            out.insert(key(i, i, "assignment", module));
        } else if proc_.is_match(l) && !l.trim_start().starts_with("localparam") {
            let (a, b) = paragraph(&lines, i);
            assert!(lines[a].trim_start().starts_with("always"), "{}:{}", tm.file, i + 1);
            out.insert(key(a, b, "assignment", module));
        }
        if let Some(c) = inst_head.captures(l) {
            if c[1] != *"module" {
                let (a, b) = paragraph(&lines, i);
                if lines[a..=b].iter().any(|x| binds.is_match(x)) {
                    out.insert(key(a, b, "instantiation", module));
                }
            }
        }
    }
    if let Some(inst) = parent_instance {
        // the parent is whichever module instantiates `inst`
        let formal = Regex::new(&format!(r"\.{s}\s*\(")).unwrap();
        for pm in &mods {
            let ptext = &files.iter().find(|f| f.path == pm.file).unwrap().text;
            let plines: Vec<&str> = ptext.lines().collect();
            for i in pm.header_end + 1..=pm.last {
                let Some(c) = inst_head.captures(plines[i]) else { continue };
                if &c[2] == inst {
                    let (a, b) = paragraph(&plines, i);
                    if plines[a..=b].iter().any(|x| formal.is_match(x)) {
                        out.insert((pm.file.clone(), a as u32 + 1, b as u32 + 1, "instantiation", pm.name.clone()));
                    }
                }
            }
        }
    }
    out
}
