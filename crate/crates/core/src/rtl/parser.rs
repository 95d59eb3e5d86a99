// SPDX-License-Identifier: Apache-2.0

//! Recursive-descent parser for the supported Verilog subset.
//!
//! Constructs outside the subset (`generate`, `function`, `task`, `specify`,
//! and top-level `interface`/`package`/`program`/`class`) are captured as
//! [`Opaque`] regions with a warning instead of failing the parse.

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::RtlError;

/// Parse result for one file.
#[derive(Debug)]
pub struct Parsed {
    pub file: SourceFile,
    pub warnings: Vec<String>,
}

pub fn parse_source(path: &str, src: &str) -> Result<Parsed, RtlError> {
    let lexed = tokenize(path, src)?;
    let mut p = Parser {
        path,
        src,
        toks: lexed.tokens,
        pos: 0,
        warnings: lexed.warnings,
    };
    let file = p.file()?;
    Ok(Parsed {
        file,
        warnings: p.warnings,
    })
}

/// Parses a single module item (used to check that a sliced span re-parses
/// to the same kind of construct).
pub fn parse_module_item(path: &str, src: &str) -> Result<ModuleItem, RtlError> {
    let lexed = tokenize(path, src)?;
    let mut p = Parser {
        path,
        src,
        toks: lexed.tokens,
        pos: 0,
        warnings: lexed.warnings,
    };
    let item = p
        .module_item()?
        .ok_or_else(|| p.err("expected a module item"))?;
    if !p.at_eof() {
        return Err(p.err("trailing tokens after module item"));
    }
    Ok(item)
}

/// Parses a standalone expression.
pub fn parse_expression(path: &str, src: &str) -> Result<Expr, RtlError> {
    let lexed = tokenize(path, src)?;
    let mut p = Parser {
        path,
        src,
        toks: lexed.tokens,
        pos: 0,
        warnings: lexed.warnings,
    };
    let e = p.expr()?;
    if !p.at_eof() {
        return Err(p.err("trailing tokens after expression"));
    }
    Ok(e)
}

const OPAQUE_ITEMS: &[(&str, &str)] = &[
    ("generate", "endgenerate"),
    ("function", "endfunction"),
    ("task", "endtask"),
    ("specify", "endspecify"),
];

const OPAQUE_TOP: &[(&str, &str)] = &[
    ("interface", "endinterface"),
    ("package", "endpackage"),
    ("program", "endprogram"),
    ("class", "endclass"),
    ("primitive", "endprimitive"),
];

const KEYWORDS: &[&str] = &[
    "module", "endmodule", "input", "output", "inout", "wire", "reg", "logic", "integer",
    "genvar", "parameter", "localparam", "assign", "always", "always_ff", "always_comb",
    "always_latch", "initial", "begin", "end", "if", "else", "case", "casez", "casex", "endcase",
    "default", "for", "posedge", "negedge", "or", "signed", "generate", "endgenerate", "function",
    "endfunction", "task", "endtask",
];

struct Parser<'a> {
    path: &'a str,
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
    warnings: Vec<String>,
}

fn binary_prec(op: &str) -> Option<u8> {
    Some(match op {
        "**" => 12,
        "*" | "/" | "%" => 11,
        "+" | "-" => 10,
        "<<" | ">>" | "<<<" | ">>>" => 9,
        "<" | "<=" | ">" | ">=" => 8,
        "==" | "!=" | "===" | "!==" => 7,
        "&" => 6,
        "^" | "^~" | "~^" => 5,
        "|" => 4,
        "&&" => 3,
        "||" => 2,
        _ => return None,
    })
}

const UNARY_OPS: &[&str] = &["+", "-", "!", "~", "&", "|", "^", "~&", "~|", "~^", "^~"];

impl<'a> Parser<'a> {
    fn tok(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn kind(&self) -> &TokenKind {
        &self.toks[self.pos].kind
    }

    fn peek_kind(&self, off: usize) -> &TokenKind {
        let i = (self.pos + off).min(self.toks.len() - 1);
        &self.toks[i].kind
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn at_eof(&self) -> bool {
        matches!(self.kind(), TokenKind::Eof)
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if !matches!(t.kind, TokenKind::Eof) {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> RtlError {
        let t = self.tok();
        let found = match &t.kind {
            TokenKind::Eof => "end of file".to_string(),
            _ => format!("'{}'", &self.src[t.span.start..t.span.end]),
        };
        RtlError::Syntax {
            file: self.path.to_string(),
            line: t.span.line_start,
            message: format!("{}, found {}", msg.into(), found),
        }
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.kind(), TokenKind::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.kind(), TokenKind::Ident(s) if s == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<Span, RtlError> {
        if self.is_op(op) {
            Ok(self.advance().span)
        } else {
            Err(self.err(format!("expected '{op}'")))
        }
    }

    fn ident(&mut self) -> Result<Ident, RtlError> {
        match self.kind() {
            TokenKind::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let name = s.clone();
                let span = self.advance().span;
                Ok(Ident { name, span })
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    // ---------------------------------------------------------------- file

    fn file(&mut self) -> Result<SourceFile, RtlError> {
        let mut items = Vec::new();
        while !self.at_eof() {
            if self.is_kw("module") || self.is_kw("macromodule") {
                items.push(FileItem::Module(self.module()?));
            } else if let Some((kw, end)) = OPAQUE_TOP.iter().find(|(kw, _)| self.is_kw(kw)) {
                items.push(FileItem::Opaque(self.opaque(kw, end)?));
            } else if self.eat_op(";") {
            } else {
                return Err(self.err("expected 'module'"));
            }
        }
        Ok(SourceFile {
            path: self.path.to_string(),
            items,
        })
    }

    /// Skips from an opening keyword to its matching closing keyword.
    fn opaque(&mut self, open: &str, close: &str) -> Result<Opaque, RtlError> {
        let start = self.advance().span;
        let mut depth = 1usize;
        loop {
            if self.at_eof() {
                return Err(self.err(format!("unterminated '{open}' region")));
            }
            if self.is_kw(open) {
                depth += 1;
            } else if self.is_kw(close) {
                depth -= 1;
                if depth == 0 {
                    break;
                }
            }
            self.advance();
        }
        let end = self.advance().span;
        let span = start.join(end);
        self.warnings.push(format!(
            "{}:{}: unsupported '{}' region kept opaque",
            self.path, start.line_start, open
        ));
        Ok(Opaque {
            keyword: open.to_string(),
            text: self.src[span.start..span.end].to_string(),
            span,
        })
    }

    // -------------------------------------------------------------- module

    fn module(&mut self) -> Result<Module, RtlError> {
        let start = self.advance().span;
        let name = self.ident()?;
        let mut params = Vec::new();
        if self.eat_op("#") {
            self.expect_op("(")?;
            if !self.is_op(")") {
                loop {
                    let decl_start = self.span();
                    let local = if self.eat_kw("parameter") {
                        false
                    } else {
                        self.eat_kw("localparam")
                    };
                    let (type_kw, range) = self.param_type()?;
                    let mut assigns = vec![self.param_assign()?];
                    // names after a comma without a new `parameter` keyword
                    // belong to the same declaration
                    while self.is_op(",")
                        && !matches!(self.peek_kind(1), TokenKind::Ident(s) if s == "parameter" || s == "localparam")
                    {
                        self.advance();
                        assigns.push(self.param_assign()?);
                    }
                    params.push(ParamDecl {
                        local,
                        type_kw,
                        range,
                        assigns,
                        span: decl_start.join(self.prev_span()),
                    });
                    if !self.eat_op(",") {
                        break;
                    }
                }
            }
            self.expect_op(")")?;
        }
        let header = if self.eat_op("(") {
            let h = self.port_header()?;
            self.expect_op(")")?;
            h
        } else {
            PortHeader::NonAnsi(Vec::new())
        };
        self.expect_op(";")?;
        let mut items = Vec::new();
        while !self.is_kw("endmodule") {
            if self.at_eof() {
                return Err(self.err("expected 'endmodule'"));
            }
            if let Some(item) = self.module_item()? {
                items.push(item);
            }
        }
        let end = self.advance().span;
        Ok(Module {
            name,
            params,
            header,
            items,
            span: start.join(end),
        })
    }

    fn param_type(&mut self) -> Result<(Option<String>, Option<Range>), RtlError> {
        let mut type_kw = None;
        for kw in ["integer", "real", "time", "signed"] {
            if self.eat_kw(kw) {
                type_kw = Some(kw.to_string());
                break;
            }
        }
        let range = if self.is_op("[") {
            Some(self.range()?)
        } else {
            None
        };
        Ok((type_kw, range))
    }

    fn param_assign(&mut self) -> Result<(Ident, Expr), RtlError> {
        let name = self.ident()?;
        self.expect_op("=")?;
        let value = self.expr()?;
        Ok((name, value))
    }

    fn direction(&self) -> Option<Direction> {
        match self.kind() {
            TokenKind::Ident(s) => match s.as_str() {
                "input" => Some(Direction::Input),
                "output" => Some(Direction::Output),
                "inout" => Some(Direction::Inout),
                _ => None,
            },
            _ => None,
        }
    }

    fn port_header(&mut self) -> Result<PortHeader, RtlError> {
        if self.is_op(")") {
            return Ok(PortHeader::NonAnsi(Vec::new()));
        }
        if self.direction().is_none() {
            let mut names = vec![self.ident()?];
            while self.eat_op(",") {
                names.push(self.ident()?);
            }
            return Ok(PortHeader::NonAnsi(names));
        }
        let mut decls = Vec::new();
        loop {
            let start = self.span();
            let direction = self
                .direction()
                .ok_or_else(|| self.err("expected port direction"))?;
            self.advance();
            let (net_kind, signed, range) = self.net_type()?;
            let mut names = vec![self.ident()?];
            while self.is_op(",") && self.direction_at(1).is_none() {
                self.advance();
                names.push(self.ident()?);
            }
            decls.push(PortDecl {
                direction,
                net_kind,
                signed,
                range,
                names,
                span: start.join(self.prev_span()),
            });
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(PortHeader::Ansi(decls))
    }

    fn direction_at(&self, off: usize) -> Option<Direction> {
        match self.peek_kind(off) {
            TokenKind::Ident(s) if s == "input" => Some(Direction::Input),
            TokenKind::Ident(s) if s == "output" => Some(Direction::Output),
            TokenKind::Ident(s) if s == "inout" => Some(Direction::Inout),
            _ => None,
        }
    }

    fn net_type(&mut self) -> Result<(Option<NetKind>, bool, Option<Range>), RtlError> {
        let mut kind = None;
        if let TokenKind::Ident(s) = self.kind() {
            if let Some(k) = NetKind::from_keyword(s) {
                kind = Some(k);
                self.advance();
            }
        }
        let signed = self.eat_kw("signed");
        let range = if self.is_op("[") {
            Some(self.range()?)
        } else {
            None
        };
        Ok((kind, signed, range))
    }

    fn range(&mut self) -> Result<Range, RtlError> {
        self.expect_op("[")?;
        let msb = self.expr()?;
        self.expect_op(":")?;
        let lsb = self.expr()?;
        self.expect_op("]")?;
        Ok(Range { msb, lsb })
    }

    // ---------------------------------------------------------------- items

    fn module_item(&mut self) -> Result<Option<ModuleItem>, RtlError> {
        let start = self.span();
        if self.eat_op(";") {
            return Ok(None);
        }
        if let Some(direction) = self.direction() {
            self.advance();
            let (net_kind, signed, range) = self.net_type()?;
            let mut names = vec![self.ident()?];
            while self.eat_op(",") {
                names.push(self.ident()?);
            }
            self.expect_op(";")?;
            return Ok(Some(ModuleItem::Port(PortDecl {
                direction,
                net_kind,
                signed,
                range,
                names,
                span: start.join(self.prev_span()),
            })));
        }
        let word = match self.kind() {
            TokenKind::Ident(s) => s.clone(),
            _ => return Err(self.err("expected module item")),
        };
        if let Some(kind) = NetKind::from_keyword(&word) {
            self.advance();
            let signed = self.eat_kw("signed");
            let range = if self.is_op("[") {
                Some(self.range()?)
            } else {
                None
            };
            let mut declarators = Vec::new();
            loop {
                let name = self.ident()?;
                let array = if self.is_op("[") {
                    Some(self.range()?)
                } else {
                    None
                };
                let init = if self.eat_op("=") {
                    Some(self.expr()?)
                } else {
                    None
                };
                declarators.push(NetDeclarator { name, array, init });
                if !self.eat_op(",") {
                    break;
                }
            }
            self.expect_op(";")?;
            return Ok(Some(ModuleItem::Net(NetDecl {
                kind,
                signed,
                range,
                declarators,
                span: start.join(self.prev_span()),
            })));
        }
        match word.as_str() {
            "parameter" | "localparam" => {
                self.advance();
                let (type_kw, range) = self.param_type()?;
                let mut assigns = vec![self.param_assign()?];
                while self.eat_op(",") {
                    assigns.push(self.param_assign()?);
                }
                self.expect_op(";")?;
                Ok(Some(ModuleItem::Param(ParamDecl {
                    local: word == "localparam",
                    type_kw,
                    range,
                    assigns,
                    span: start.join(self.prev_span()),
                })))
            }
            "assign" => {
                self.advance();
                let delay = self.delay()?;
                let mut assigns = Vec::new();
                loop {
                    let lhs = self.lvalue()?;
                    self.expect_op("=")?;
                    let rhs = self.expr()?;
                    assigns.push((lhs, rhs));
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op(";")?;
                Ok(Some(ModuleItem::Assign(ContAssign {
                    delay,
                    assigns,
                    span: start.join(self.prev_span()),
                })))
            }
            "always" | "always_ff" | "always_comb" | "always_latch" => {
                self.advance();
                let kind = match word.as_str() {
                    "always" => AlwaysKind::Always,
                    "always_ff" => AlwaysKind::AlwaysFf,
                    "always_comb" => AlwaysKind::AlwaysComb,
                    _ => AlwaysKind::AlwaysLatch,
                };
                let sensitivity = if self.eat_op("@") {
                    Some(self.sensitivity()?)
                } else {
                    None
                };
                let body = self.stmt()?;
                Ok(Some(ModuleItem::Always(Always {
                    kind,
                    sensitivity,
                    body,
                    span: start.join(self.prev_span()),
                })))
            }
            "initial" => {
                self.advance();
                let body = self.stmt()?;
                Ok(Some(ModuleItem::Initial(Initial {
                    body,
                    span: start.join(self.prev_span()),
                })))
            }
            _ => {
                if let Some((kw, end)) = OPAQUE_ITEMS.iter().find(|(kw, _)| *kw == word) {
                    return Ok(Some(ModuleItem::Opaque(self.opaque(kw, end)?)));
                }
                if KEYWORDS.contains(&word.as_str()) {
                    return Err(self.err("unexpected keyword"));
                }
                self.instantiation().map(|i| Some(ModuleItem::Instance(i)))
            }
        }
    }

    fn delay(&mut self) -> Result<Option<Expr>, RtlError> {
        if !self.eat_op("#") {
            return Ok(None);
        }
        if self.is_op("(") {
            Ok(Some(self.primary()?))
        } else {
            let start = self.span();
            match self.kind().clone() {
                TokenKind::Number(n) => {
                    self.advance();
                    Ok(Some(Expr {
                        kind: ExprKind::Number(n),
                        span: start,
                    }))
                }
                TokenKind::Ident(_) => {
                    let id = self.ident()?;
                    Ok(Some(Expr {
                        kind: ExprKind::Ident(id.name),
                        span: id.span,
                    }))
                }
                _ => Err(self.err("expected delay value")),
            }
        }
    }

    fn sensitivity(&mut self) -> Result<Sensitivity, RtlError> {
        if self.eat_op("*") {
            return Ok(Sensitivity::Star);
        }
        self.expect_op("(")?;
        if self.eat_op("*") {
            self.expect_op(")")?;
            return Ok(Sensitivity::Star);
        }
        let mut events = Vec::new();
        loop {
            let edge = if self.eat_kw("posedge") {
                Some(Edge::Posedge)
            } else if self.eat_kw("negedge") {
                Some(Edge::Negedge)
            } else {
                None
            };
            let expr = self.expr()?;
            events.push(EventExpr { edge, expr });
            if !(self.eat_kw("or") || self.eat_op(",")) {
                break;
            }
        }
        self.expect_op(")")?;
        Ok(Sensitivity::List(events))
    }

    fn instantiation(&mut self) -> Result<Instantiation, RtlError> {
        let start = self.span();
        let module = self.ident()?;
        let mut params = Vec::new();
        if self.eat_op("#") {
            self.expect_op("(")?;
            params = self.connections()?;
            self.expect_op(")")?;
        }
        let mut instances = Vec::new();
        loop {
            let inst_start = self.span();
            let name = self.ident()?;
            self.expect_op("(")?;
            let conns = self.connections()?;
            self.expect_op(")")?;
            instances.push(InstanceDecl {
                name,
                conns,
                span: inst_start.join(self.prev_span()),
            });
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(";")?;
        Ok(Instantiation {
            module,
            params,
            instances,
            span: start.join(self.prev_span()),
        })
    }

    fn connections(&mut self) -> Result<Vec<Connection>, RtlError> {
        let mut conns = Vec::new();
        if self.is_op(")") {
            return Ok(conns);
        }
        loop {
            if self.eat_op(".") {
                let port = self.ident()?;
                self.expect_op("(")?;
                let expr = if self.is_op(")") {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect_op(")")?;
                conns.push(Connection::Named { port, expr });
            } else if self.is_op(",") || self.is_op(")") {
                conns.push(Connection::Positional(None));
            } else {
                conns.push(Connection::Positional(Some(self.expr()?)));
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(conns)
    }

    // ----------------------------------------------------------- statements

    fn stmt(&mut self) -> Result<Stmt, RtlError> {
        let start = self.span();
        if self.eat_op(";") {
            return Ok(Stmt::Null { span: start });
        }
        if let TokenKind::SysIdent(name) = self.kind().clone() {
            self.advance();
            let mut args = Vec::new();
            if self.eat_op("(") {
                if !self.is_op(")") {
                    loop {
                        args.push(self.expr()?);
                        if !self.eat_op(",") {
                            break;
                        }
                    }
                }
                self.expect_op(")")?;
            }
            self.expect_op(";")?;
            return Ok(Stmt::SysTask {
                name,
                args,
                span: start.join(self.prev_span()),
            });
        }
        if self.eat_kw("begin") {
            let mut label = None;
            if self.eat_op(":") {
                label = Some(self.ident()?.name);
            }
            let mut stmts = Vec::new();
            while !self.is_kw("end") {
                if self.at_eof() {
                    return Err(self.err("expected 'end'"));
                }
                stmts.push(self.stmt()?);
            }
            self.advance();
            if label.is_some() && self.eat_op(":") {
                self.ident()?;
            }
            return Ok(Stmt::Block {
                label,
                stmts,
                span: start.join(self.prev_span()),
            });
        }
        if self.eat_kw("if") {
            self.expect_op("(")?;
            let cond = self.expr()?;
            self.expect_op(")")?;
            let then_branch = Box::new(self.stmt()?);
            let else_branch = if self.eat_kw("else") {
                Some(Box::new(self.stmt()?))
            } else {
                None
            };
            return Ok(Stmt::If {
                cond,
                then_branch,
                else_branch,
                span: start.join(self.prev_span()),
            });
        }
        for kind in [CaseKind::Case, CaseKind::Casez, CaseKind::Casex] {
            if self.eat_kw(kind.keyword()) {
                return self.case_body(kind, start);
            }
        }
        if self.eat_kw("for") {
            self.expect_op("(")?;
            let init = Box::new(self.assignment(true)?);
            self.expect_op(";")?;
            let cond = self.expr()?;
            self.expect_op(";")?;
            let step = Box::new(self.assignment(true)?);
            self.expect_op(")")?;
            let body = Box::new(self.stmt()?);
            return Ok(Stmt::For {
                init,
                cond,
                step,
                body,
                span: start.join(self.prev_span()),
            });
        }
        let s = self.assignment(false)?;
        self.expect_op(";")?;
        match s {
            Stmt::Assign {
                blocking,
                lhs,
                delay,
                rhs,
                ..
            } => Ok(Stmt::Assign {
                blocking,
                lhs,
                delay,
                rhs,
                span: start.join(self.prev_span()),
            }),
            other => Ok(other),
        }
    }

    fn case_body(&mut self, kind: CaseKind, start: Span) -> Result<Stmt, RtlError> {
        self.expect_op("(")?;
        let expr = self.expr()?;
        self.expect_op(")")?;
        let mut items = Vec::new();
        while !self.is_kw("endcase") {
            if self.at_eof() {
                return Err(self.err("expected 'endcase'"));
            }
            let labels = if self.eat_kw("default") {
                self.eat_op(":");
                Vec::new()
            } else {
                let mut labels = vec![self.expr()?];
                while self.eat_op(",") {
                    labels.push(self.expr()?);
                }
                self.expect_op(":")?;
                labels
            };
            let body = self.stmt()?;
            items.push(CaseItem { labels, body });
        }
        self.advance();
        Ok(Stmt::Case {
            kind,
            expr,
            items,
            span: start.join(self.prev_span()),
        })
    }

    /// `lhs = rhs` or `lhs <= rhs` without the trailing semicolon.
    fn assignment(&mut self, blocking_only: bool) -> Result<Stmt, RtlError> {
        let start = self.span();
        let lhs = self.lvalue()?;
        let blocking = if self.eat_op("=") {
            true
        } else if !blocking_only && self.eat_op("<=") {
            false
        } else {
            return Err(self.err("expected '=' or '<='"));
        };
        let delay = self.delay()?;
        let rhs = self.expr()?;
        Ok(Stmt::Assign {
            blocking,
            lhs,
            delay,
            rhs,
            span: start.join(self.prev_span()),
        })
    }

    fn lvalue(&mut self) -> Result<Expr, RtlError> {
        let start = self.span();
        if self.eat_op("{") {
            let mut items = vec![self.lvalue()?];
            while self.eat_op(",") {
                items.push(self.lvalue()?);
            }
            self.expect_op("}")?;
            return Ok(Expr {
                kind: ExprKind::Concat(items),
                span: start.join(self.prev_span()),
            });
        }
        let id = self.ident()?;
        let base = Expr {
            kind: ExprKind::Ident(id.name),
            span: id.span,
        };
        self.selects(base)
    }

    // ---------------------------------------------------------- expressions

    fn expr(&mut self) -> Result<Expr, RtlError> {
        let start = self.span();
        let cond = self.binary(0)?;
        if self.eat_op("?") {
            let then_expr = self.expr()?;
            self.expect_op(":")?;
            let else_expr = self.expr()?;
            return Ok(Expr {
                kind: ExprKind::Ternary {
                    cond: Box::new(cond),
                    then_expr: Box::new(then_expr),
                    else_expr: Box::new(else_expr),
                },
                span: start.join(self.prev_span()),
            });
        }
        Ok(cond)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, RtlError> {
        let start = self.span();
        let mut lhs = self.unary()?;
        loop {
            let (op, prec) = match self.kind() {
                TokenKind::Op(op) => match binary_prec(op) {
                    Some(p) if p > min_prec => (*op, p),
                    _ => break,
                },
                _ => break,
            };
            let op_span = self.advance().span;
            // `**` is right-associative
            let next_min = if op == "**" { prec - 1 } else { prec };
            let rhs = self.binary(next_min)?;
            lhs = Expr {
                kind: ExprKind::Binary {
                    op,
                    op_span,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span: start.join(self.prev_span()),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, RtlError> {
        let start = self.span();
        if let TokenKind::Op(op) = self.kind() {
            if let Some(op) = UNARY_OPS.iter().find(|u| **u == *op) {
                self.advance();
                let operand = self.unary()?;
                return Ok(Expr {
                    kind: ExprKind::Unary {
                        op,
                        operand: Box::new(operand),
                    },
                    span: start.join(self.prev_span()),
                });
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, RtlError> {
        let start = self.span();
        let base = match self.kind().clone() {
            TokenKind::Number(n) => {
                self.advance();
                Expr {
                    kind: ExprKind::Number(n),
                    span: start,
                }
            }
            TokenKind::Str(s) => {
                self.advance();
                Expr {
                    kind: ExprKind::Str(s),
                    span: start,
                }
            }
            TokenKind::Macro(m) => {
                self.advance();
                Expr {
                    kind: ExprKind::Macro(m),
                    span: start,
                }
            }
            TokenKind::SysIdent(name) => {
                self.advance();
                let args = if self.is_op("(") { self.call_args()? } else { Vec::new() };
                Expr {
                    kind: ExprKind::Call { name, args },
                    span: start.join(self.prev_span()),
                }
            }
            TokenKind::Ident(_) => {
                let id = self.ident()?;
                if self.is_op("(") {
                    let args = self.call_args()?;
                    Expr {
                        kind: ExprKind::Call {
                            name: id.name,
                            args,
                        },
                        span: start.join(self.prev_span()),
                    }
                } else {
                    Expr {
                        kind: ExprKind::Ident(id.name),
                        span: id.span,
                    }
                }
            }
            TokenKind::Op("(") => {
                self.advance();
                let inner = self.expr()?;
                self.expect_op(")")?;
                // parenthesized: widen the span to cover the parens
                Expr {
                    kind: inner.kind,
                    span: start.join(self.prev_span()),
                }
            }
            TokenKind::Op("{") => {
                self.advance();
                let first = self.expr()?;
                if self.eat_op("{") {
                    let mut items = vec![self.expr()?];
                    while self.eat_op(",") {
                        items.push(self.expr()?);
                    }
                    self.expect_op("}")?;
                    self.expect_op("}")?;
                    Expr {
                        kind: ExprKind::Replicate {
                            count: Box::new(first),
                            items,
                        },
                        span: start.join(self.prev_span()),
                    }
                } else {
                    let mut items = vec![first];
                    while self.eat_op(",") {
                        items.push(self.expr()?);
                    }
                    self.expect_op("}")?;
                    Expr {
                        kind: ExprKind::Concat(items),
                        span: start.join(self.prev_span()),
                    }
                }
            }
            _ => return Err(self.err("expected expression")),
        };
        self.selects(base)
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, RtlError> {
        self.expect_op("(")?;
        let mut args = Vec::new();
        if !self.is_op(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        self.expect_op(")")?;
        Ok(args)
    }

    fn selects(&mut self, mut base: Expr) -> Result<Expr, RtlError> {
        let start = base.span;
        while self.eat_op("[") {
            let left = self.expr()?;
            let kind = if self.eat_op(":") {
                Some(SliceKind::Fixed)
            } else if self.eat_op("+:") {
                Some(SliceKind::Up)
            } else if self.eat_op("-:") {
                Some(SliceKind::Down)
            } else {
                None
            };
            base = match kind {
                Some(kind) => {
                    let right = self.expr()?;
                    self.expect_op("]")?;
                    Expr {
                        kind: ExprKind::Slice {
                            base: Box::new(base),
                            kind,
                            left: Box::new(left),
                            right: Box::new(right),
                        },
                        span: start.join(self.prev_span()),
                    }
                }
                None => {
                    self.expect_op("]")?;
                    Expr {
                        kind: ExprKind::Index {
                            base: Box::new(base),
                            index: Box::new(left),
                        },
                        span: start.join(self.prev_span()),
                    }
                }
            };
        }
        Ok(base)
    }
}
