// SPDX-License-Identifier: Apache-2.0

//! Canonical pretty-printer. Nested binary and ternary operands are always
//! parenthesized so that printing then re-parsing yields the same tree.

use std::fmt::Write;

use super::ast::*;

pub fn print_file(file: &SourceFile) -> String {
    let mut out = String::new();
    for (i, item) in file.items.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match item {
            FileItem::Module(m) => print_module(&mut out, m),
            FileItem::Opaque(o) => {
                out.push_str(&o.text);
                out.push('\n');
            }
        }
    }
    out
}

fn print_module(out: &mut String, m: &Module) {
    write!(out, "module {}", m.name.name).unwrap();
    if !m.params.is_empty() {
        out.push_str(" #(");
        for (i, p) in m.params.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&param_text(p));
        }
        out.push(')');
    }
    match &m.header {
        PortHeader::NonAnsi(names) if names.is_empty() => {}
        PortHeader::NonAnsi(names) => {
            let names: Vec<&str> = names.iter().map(|n| n.name.as_str()).collect();
            write!(out, " ({})", names.join(", ")).unwrap();
        }
        PortHeader::Ansi(decls) => {
            out.push_str(" (\n");
            for (i, d) in decls.iter().enumerate() {
                out.push_str("    ");
                out.push_str(&port_text(d));
                if i + 1 < decls.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push(')');
        }
    }
    out.push_str(";\n");
    for item in &m.items {
        print_item(out, item);
    }
    out.push_str("endmodule\n");
}

fn range_text(r: &Range) -> String {
    format!("[{}:{}]", expr_to_string(&r.msb), expr_to_string(&r.lsb))
}

fn param_text(p: &ParamDecl) -> String {
    let mut s = String::from(if p.local { "localparam" } else { "parameter" });
    if let Some(t) = &p.type_kw {
        s.push(' ');
        s.push_str(t);
    }
    if let Some(r) = &p.range {
        s.push(' ');
        s.push_str(&range_text(r));
    }
    let assigns: Vec<String> = p
        .assigns
        .iter()
        .map(|(n, e)| format!("{} = {}", n.name, expr_to_string(e)))
        .collect();
    s.push(' ');
    s.push_str(&assigns.join(", "));
    s
}

fn port_text(d: &PortDecl) -> String {
    let mut s = String::from(d.direction.keyword());
    if let Some(k) = d.net_kind {
        s.push(' ');
        s.push_str(k.keyword());
    }
    if d.signed {
        s.push_str(" signed");
    }
    if let Some(r) = &d.range {
        s.push(' ');
        s.push_str(&range_text(r));
    }
    let names: Vec<&str> = d.names.iter().map(|n| n.name.as_str()).collect();
    s.push(' ');
    s.push_str(&names.join(", "));
    s
}

fn delay_text(d: &Expr) -> String {
    match d.kind {
        ExprKind::Number(_) | ExprKind::Ident(_) => format!("#{}", expr_to_string(d)),
        _ => format!("#({})", expr_to_string(d)),
    }
}

fn print_item(out: &mut String, item: &ModuleItem) {
    match item {
        ModuleItem::Port(d) => writeln!(out, "    {};", port_text(d)).unwrap(),
        ModuleItem::Net(n) => {
            let mut s = String::from(n.kind.keyword());
            if n.signed {
                s.push_str(" signed");
            }
            if let Some(r) = &n.range {
                s.push(' ');
                s.push_str(&range_text(r));
            }
            let decls: Vec<String> = n
                .declarators
                .iter()
                .map(|d| {
                    let mut t = d.name.name.clone();
                    if let Some(a) = &d.array {
                        t.push(' ');
                        t.push_str(&range_text(a));
                    }
                    if let Some(init) = &d.init {
                        t.push_str(" = ");
                        t.push_str(&expr_to_string(init));
                    }
                    t
                })
                .collect();
            writeln!(out, "    {} {};", s, decls.join(", ")).unwrap();
        }
        ModuleItem::Param(p) => writeln!(out, "    {};", param_text(p)).unwrap(),
        ModuleItem::Assign(a) => {
            out.push_str("    assign ");
            if let Some(d) = &a.delay {
                out.push_str(&delay_text(d));
                out.push(' ');
            }
            let pairs: Vec<String> = a
                .assigns
                .iter()
                .map(|(l, r)| format!("{} = {}", expr_to_string(l), expr_to_string(r)))
                .collect();
            out.push_str(&pairs.join(", "));
            out.push_str(";\n");
        }
        ModuleItem::Always(a) => {
            write!(out, "    {}", a.kind.keyword()).unwrap();
            match &a.sensitivity {
                None => {}
                Some(Sensitivity::Star) => out.push_str(" @(*)"),
                Some(Sensitivity::List(events)) => {
                    let evs: Vec<String> = events
                        .iter()
                        .map(|e| {
                            let edge = match e.edge {
                                Some(Edge::Posedge) => "posedge ",
                                Some(Edge::Negedge) => "negedge ",
                                None => "",
                            };
                            format!("{edge}{}", expr_to_string(&e.expr))
                        })
                        .collect();
                    write!(out, " @({})", evs.join(" or ")).unwrap();
                }
            }
            out.push('\n');
            print_stmt(out, &a.body, 2);
        }
        ModuleItem::Initial(i) => {
            out.push_str("    initial\n");
            print_stmt(out, &i.body, 2);
        }
        ModuleItem::Instance(inst) => {
            write!(out, "    {}", inst.module.name).unwrap();
            if !inst.params.is_empty() {
                write!(out, " #({})", conns_text(&inst.params)).unwrap();
            }
            let decls: Vec<String> = inst
                .instances
                .iter()
                .map(|d| format!("{} ({})", d.name.name, conns_text(&d.conns)))
                .collect();
            writeln!(out, " {};", decls.join(", ")).unwrap();
        }
        ModuleItem::Opaque(o) => {
            // Verbatim text starts at the keyword; its own indentation was not captured.
            out.push_str("    ");
            out.push_str(&o.text);
            out.push('\n');
        }
    }
}

fn conns_text(conns: &[Connection]) -> String {
    let parts: Vec<String> = conns
        .iter()
        .map(|c| match c {
            Connection::Named { port, expr } => format!(
                ".{}({})",
                port.name,
                expr.as_ref().map(expr_to_string).unwrap_or_default()
            ),
            Connection::Positional(e) => e.as_ref().map(expr_to_string).unwrap_or_default(),
        })
        .collect();
    parts.join(", ")
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn print_stmt(out: &mut String, s: &Stmt, level: usize) {
    indent(out, level);
    print_stmt_inline(out, s, level);
}

fn print_stmt_inline(out: &mut String, s: &Stmt, level: usize) {
    match s {
        Stmt::Null { .. } => out.push_str(";\n"),
        Stmt::Block { label, stmts, .. } => {
            out.push_str("begin");
            if let Some(l) = label {
                write!(out, " : {l}").unwrap();
            }
            out.push('\n');
            for st in stmts {
                print_stmt(out, st, level + 1);
            }
            indent(out, level);
            out.push_str("end\n");
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => {
            writeln!(out, "if ({})", expr_to_string(cond)).unwrap();
            print_stmt(out, then_branch, level + 1);
            if let Some(e) = else_branch {
                indent(out, level);
                out.push_str("else\n");
                print_stmt(out, e, level + 1);
            }
        }
        Stmt::Case {
            kind, expr, items, ..
        } => {
            writeln!(out, "{} ({})", kind.keyword(), expr_to_string(expr)).unwrap();
            for item in items {
                indent(out, level + 1);
                if item.labels.is_empty() {
                    out.push_str("default:\n");
                } else {
                    let labels: Vec<String> = item.labels.iter().map(expr_to_string).collect();
                    writeln!(out, "{}:", labels.join(", ")).unwrap();
                }
                print_stmt(out, &item.body, level + 2);
            }
            indent(out, level);
            out.push_str("endcase\n");
        }
        Stmt::Assign { .. } => {
            out.push_str(&assign_text(s));
            out.push_str(";\n");
        }
        Stmt::For {
            init,
            cond,
            step,
            body,
            ..
        } => {
            writeln!(
                out,
                "for ({}; {}; {})",
                assign_text(init),
                expr_to_string(cond),
                assign_text(step)
            )
            .unwrap();
            print_stmt(out, body, level + 1);
        }
        Stmt::SysTask { name, args, .. } => {
            if args.is_empty() {
                writeln!(out, "{name};").unwrap();
            } else {
                let args: Vec<String> = args.iter().map(expr_to_string).collect();
                writeln!(out, "{name}({});", args.join(", ")).unwrap();
            }
        }
    }
}

fn assign_text(s: &Stmt) -> String {
    match s {
        Stmt::Assign {
            blocking,
            lhs,
            delay,
            rhs,
            ..
        } => {
            let op = if *blocking { "=" } else { "<=" };
            let delay = delay
                .as_ref()
                .map(|d| format!("{} ", delay_text(d)))
                .unwrap_or_default();
            format!("{} {op} {delay}{}", expr_to_string(lhs), expr_to_string(rhs))
        }
        _ => String::new(),
    }
}

fn wrapped(e: &Expr) -> String {
    match e.kind {
        ExprKind::Binary { .. } | ExprKind::Ternary { .. } | ExprKind::Unary { .. } => {
            format!("({})", expr_to_string(e))
        }
        _ => expr_to_string(e),
    }
}

fn select_base(e: &Expr) -> String {
    match e.kind {
        ExprKind::Ident(_) | ExprKind::Index { .. } | ExprKind::Slice { .. } => expr_to_string(e),
        _ => format!("({})", expr_to_string(e)),
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Ident(n) => n.clone(),
        ExprKind::Macro(m) => format!("`{m}"),
        ExprKind::Number(n) => n.clone(),
        ExprKind::Str(s) => format!("\"{s}\""),
        ExprKind::Index { base, index } => {
            format!("{}[{}]", select_base(base), expr_to_string(index))
        }
        ExprKind::Slice {
            base,
            kind,
            left,
            right,
        } => format!(
            "{}[{}{}{}]",
            select_base(base),
            expr_to_string(left),
            kind.token(),
            expr_to_string(right)
        ),
        ExprKind::Unary { op, operand } => format!("{op}{}", wrapped(operand)),
        ExprKind::Binary { op, lhs, rhs, .. } => {
            format!("{} {op} {}", wrapped(lhs), wrapped(rhs))
        }
        ExprKind::Ternary {
            cond,
            then_expr,
            else_expr,
        } => format!(
            "{} ? {} : {}",
            wrapped(cond),
            wrapped(then_expr),
            wrapped(else_expr)
        ),
        ExprKind::Concat(items) => {
            let parts: Vec<String> = items.iter().map(expr_to_string).collect();
            format!("{{{}}}", parts.join(", "))
        }
        ExprKind::Replicate { count, items } => {
            let parts: Vec<String> = items.iter().map(expr_to_string).collect();
            format!("{{{}{{{}}}}}", wrapped(count), parts.join(", "))
        }
        ExprKind::Call { name, args } => {
            let parts: Vec<String> = args.iter().map(expr_to_string).collect();
            format!("{name}({})", parts.join(", "))
        }
    }
}
