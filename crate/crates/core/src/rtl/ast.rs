// SPDX-License-Identifier: Apache-2.0

//! Syntax tree for the supported Verilog subset.
//!
//! Every node carries a [`Span`] into its source file. Spans are positional
//! metadata only; structural comparison goes through [`super::tree`], which
//! drops them.

use serde::Serialize;

/// Byte range plus the 1-based inclusive line range it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line_start: u32,
    pub line_end: u32,
}

impl Span {
    pub fn join(self, other: Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
            line_start: self.line_start.min(other.line_start),
            line_end: self.line_end.max(other.line_end),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct SourceFile {
    pub path: String,
    pub items: Vec<FileItem>,
}

#[derive(Debug, Clone)]
pub enum FileItem {
    Module(Module),
    Opaque(Opaque),
}

/// A construct outside the subset, kept verbatim.
#[derive(Debug, Clone)]
pub struct Opaque {
    pub keyword: String,
    pub text: String,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct Module {
    pub name: Ident,
    pub params: Vec<ParamDecl>,
    pub header: PortHeader,
    pub items: Vec<ModuleItem>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum PortHeader {
    /// `module m(a, b);` with directions declared in the body.
    NonAnsi(Vec<Ident>),
    /// `module m(input a, output [3:0] b);`
    Ansi(Vec<PortDecl>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
    Inout,
}

impl Direction {
    pub fn keyword(self) -> &'static str {
        match self {
            Direction::Input => "input",
            Direction::Output => "output",
            Direction::Inout => "inout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Wire,
    Reg,
    Logic,
    Integer,
    Genvar,
}

impl NetKind {
    pub fn keyword(self) -> &'static str {
        match self {
            NetKind::Wire => "wire",
            NetKind::Reg => "reg",
            NetKind::Logic => "logic",
            NetKind::Integer => "integer",
            NetKind::Genvar => "genvar",
        }
    }

    pub fn from_keyword(s: &str) -> Option<NetKind> {
        Some(match s {
            "wire" => NetKind::Wire,
            "reg" => NetKind::Reg,
            "logic" => NetKind::Logic,
            "integer" => NetKind::Integer,
            "genvar" => NetKind::Genvar,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Range {
    pub msb: Expr,
    pub lsb: Expr,
}

#[derive(Debug, Clone)]
pub struct PortDecl {
    pub direction: Direction,
    pub net_kind: Option<NetKind>,
    pub signed: bool,
    pub range: Option<Range>,
    pub names: Vec<Ident>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct NetDecl {
    pub kind: NetKind,
    pub signed: bool,
    pub range: Option<Range>,
    pub declarators: Vec<NetDeclarator>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct NetDeclarator {
    pub name: Ident,
    /// Unpacked dimension, `reg [7:0] mem [0:15]`.
    pub array: Option<Range>,
    /// `wire x = expr;` net declaration assignment.
    pub init: Option<Expr>,
}

#[derive(Debug, Clone)]
pub struct ParamDecl {
    pub local: bool,
    pub type_kw: Option<String>,
    pub range: Option<Range>,
    pub assigns: Vec<(Ident, Expr)>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum ModuleItem {
    Port(PortDecl),
    Net(NetDecl),
    Param(ParamDecl),
    Assign(ContAssign),
    Always(Always),
    Initial(Initial),
    Instance(Instantiation),
    Opaque(Opaque),
}

impl ModuleItem {
    pub fn span(&self) -> Span {
        match self {
            ModuleItem::Port(p) => p.span,
            ModuleItem::Net(n) => n.span,
            ModuleItem::Param(p) => p.span,
            ModuleItem::Assign(a) => a.span,
            ModuleItem::Always(a) => a.span,
            ModuleItem::Initial(i) => i.span,
            ModuleItem::Instance(i) => i.span,
            ModuleItem::Opaque(o) => o.span,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContAssign {
    pub delay: Option<Expr>,
    pub assigns: Vec<(Expr, Expr)>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlwaysKind {
    Always,
    AlwaysFf,
    AlwaysComb,
    AlwaysLatch,
}

impl AlwaysKind {
    pub fn keyword(self) -> &'static str {
        match self {
            AlwaysKind::Always => "always",
            AlwaysKind::AlwaysFf => "always_ff",
            AlwaysKind::AlwaysComb => "always_comb",
            AlwaysKind::AlwaysLatch => "always_latch",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Always {
    pub kind: AlwaysKind,
    pub sensitivity: Option<Sensitivity>,
    pub body: Stmt,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum Sensitivity {
    Star,
    List(Vec<EventExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Posedge,
    Negedge,
}

#[derive(Debug, Clone)]
pub struct EventExpr {
    pub edge: Option<Edge>,
    pub expr: Expr,
}

#[derive(Debug, Clone)]
pub struct Initial {
    pub body: Stmt,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    Case,
    Casez,
    Casex,
}

impl CaseKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CaseKind::Case => "case",
            CaseKind::Casez => "casez",
            CaseKind::Casex => "casex",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaseItem {
    /// Empty for `default`.
    pub labels: Vec<Expr>,
    pub body: Stmt,
}

#[derive(Debug, Clone)]
pub enum Stmt {
    Block {
        label: Option<String>,
        stmts: Vec<Stmt>,
        span: Span,
    },
    If {
        cond: Expr,
        then_branch: Box<Stmt>,
        else_branch: Option<Box<Stmt>>,
        span: Span,
    },
    Case {
        kind: CaseKind,
        expr: Expr,
        items: Vec<CaseItem>,
        span: Span,
    },
    Assign {
        blocking: bool,
        lhs: Expr,
        delay: Option<Expr>,
        rhs: Expr,
        span: Span,
    },
    For {
        init: Box<Stmt>,
        cond: Expr,
        step: Box<Stmt>,
        body: Box<Stmt>,
        span: Span,
    },
    SysTask {
        name: String,
        args: Vec<Expr>,
        span: Span,
    },
    Null {
        span: Span,
    },
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::Block { span, .. }
            | Stmt::If { span, .. }
            | Stmt::Case { span, .. }
            | Stmt::Assign { span, .. }
            | Stmt::For { span, .. }
            | Stmt::SysTask { span, .. }
            | Stmt::Null { span } => *span,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instantiation {
    pub module: Ident,
    pub params: Vec<Connection>,
    pub instances: Vec<InstanceDecl>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct InstanceDecl {
    pub name: Ident,
    pub conns: Vec<Connection>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum Connection {
    Named { port: Ident, expr: Option<Expr> },
    Positional(Option<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceKind {
    /// `[msb:lsb]`
    Fixed,
    /// `[base+:width]`
    Up,
    /// `[base-:width]`
    Down,
}

impl SliceKind {
    pub fn token(self) -> &'static str {
        match self {
            SliceKind::Fixed => ":",
            SliceKind::Up => "+:",
            SliceKind::Down => "-:",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Ident(String),
    Macro(String),
    Number(String),
    Str(String),
    Index {
        base: Box<Expr>,
        index: Box<Expr>,
    },
    Slice {
        base: Box<Expr>,
        kind: SliceKind,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Unary {
        op: &'static str,
        operand: Box<Expr>,
    },
    Binary {
        op: &'static str,
        op_span: Span,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Ternary {
        cond: Box<Expr>,
        then_expr: Box<Expr>,
        else_expr: Box<Expr>,
    },
    Concat(Vec<Expr>),
    Replicate {
        count: Box<Expr>,
        items: Vec<Expr>,
    },
    Call {
        name: String,
        args: Vec<Expr>,
    },
}

impl Expr {
    /// Identifiers read by this expression, in first-occurrence order.
    pub fn idents(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_idents(&mut out);
        let mut seen = std::collections::HashSet::new();
        out.retain(|n| seen.insert(*n));
        out
    }

    fn collect_idents<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.kind {
            ExprKind::Ident(n) => out.push(n),
            ExprKind::Macro(_) | ExprKind::Number(_) | ExprKind::Str(_) => {}
            ExprKind::Index { base, index } => {
                base.collect_idents(out);
                index.collect_idents(out);
            }
            ExprKind::Slice {
                base, left, right, ..
            } => {
                base.collect_idents(out);
                left.collect_idents(out);
                right.collect_idents(out);
            }
            ExprKind::Unary { operand, .. } => operand.collect_idents(out),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.collect_idents(out);
                rhs.collect_idents(out);
            }
            ExprKind::Ternary {
                cond,
                then_expr,
                else_expr,
            } => {
                cond.collect_idents(out);
                then_expr.collect_idents(out);
                else_expr.collect_idents(out);
            }
            ExprKind::Concat(items) | ExprKind::Call { args: items, .. } => {
                for e in items {
                    e.collect_idents(out);
                }
            }
            ExprKind::Replicate { count, items } => {
                count.collect_idents(out);
                for e in items {
                    e.collect_idents(out);
                }
            }
        }
    }

    /// Base signal names written when this expression is an assignment target,
    /// each with the bit-select text that narrowed it (if any), plus the
    /// identifiers read by index expressions on the target.
    pub fn lvalue_targets(&self) -> (Vec<(String, Option<String>)>, Vec<&str>) {
        let mut targets = Vec::new();
        let mut reads = Vec::new();
        self.collect_lvalues(&mut targets, &mut reads);
        (targets, reads)
    }

    fn collect_lvalues<'a>(
        &'a self,
        targets: &mut Vec<(String, Option<String>)>,
        reads: &mut Vec<&'a str>,
    ) {
        match &self.kind {
            ExprKind::Ident(n) => targets.push((n.clone(), None)),
            ExprKind::Index { base, index } => {
                if let Some(name) = base.base_name() {
                    targets.push((name.to_string(), Some(super::print::expr_to_string(index))));
                }
                index.collect_idents(reads);
            }
            ExprKind::Slice {
                base,
                kind,
                left,
                right,
            } => {
                if let Some(name) = base.base_name() {
                    targets.push((
                        name.to_string(),
                        Some(format!(
                            "{}{}{}",
                            super::print::expr_to_string(left),
                            kind.token(),
                            super::print::expr_to_string(right)
                        )),
                    ));
                }
                left.collect_idents(reads);
                right.collect_idents(reads);
            }
            ExprKind::Concat(items) => {
                for e in items {
                    e.collect_lvalues(targets, reads);
                }
            }
            _ => self.collect_idents(reads),
        }
    }

    /// Innermost identifier under any chain of index/slice selects.
    pub fn base_name(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Ident(n) => Some(n),
            ExprKind::Index { base, .. } | ExprKind::Slice { base, .. } => base.base_name(),
            _ => None,
        }
    }
}
