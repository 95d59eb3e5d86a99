// SPDX-License-Identifier: Apache-2.0

//! Uniform labelled-tree view of the syntax tree.
//!
//! Equality ignores spans, so two trees compare equal exactly when the
//! underlying syntax is structurally identical. The same view gives every
//! node a stable pre-order index, which mutation sites refer to.

use serde::Serialize;

use super::ast::*;

#[derive(Debug, Clone, Serialize)]
pub struct Tree {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub label: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Tree>,
    #[serde(skip)]
    pub span: Span,
    /// Operator token span for binary nodes.
    #[serde(skip)]
    pub op_span: Option<Span>,
}

impl PartialEq for Tree {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.label == other.label && self.children == other.children
    }
}

impl Eq for Tree {}

impl Tree {
    fn new(kind: &'static str, label: impl Into<String>, span: Span) -> Tree {
        Tree {
            kind,
            label: label.into(),
            children: Vec::new(),
            span,
            op_span: None,
        }
    }

    fn with(mut self, children: Vec<Tree>) -> Tree {
        self.children = children;
        self
    }

    /// Nodes in pre-order; a node's position is its index.
    pub fn preorder(&self) -> Vec<&Tree> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            out.push(t);
            for c in t.children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(Tree::node_count).sum::<usize>()
    }

    /// Paths (child-index sequences) of the minimal differing nodes.
    ///
    /// A node is reported when its kind, label, or arity differ, or when two
    /// or more of its children differ and the children are a permutation of
    /// one another (an operand swap is one edit at the parent).
    pub fn diff(&self, other: &Tree) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        diff_into(self, other, &mut Vec::new(), &mut out);
        out
    }

    /// Pre-order index of the node at `path`.
    pub fn index_of_path(&self, path: &[usize]) -> Option<usize> {
        let mut idx = 0usize;
        let mut node = self;
        for &step in path {
            if step >= node.children.len() {
                return None;
            }
            idx += 1;
            for sibling in &node.children[..step] {
                idx += sibling.node_count();
            }
            node = &node.children[step];
        }
        Some(idx)
    }
}

fn diff_into(a: &Tree, b: &Tree, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if a == b {
        return;
    }
    if a.kind != b.kind || a.label != b.label || a.children.len() != b.children.len() {
        out.push(path.clone());
        return;
    }
    let differing: Vec<usize> = (0..a.children.len())
        .filter(|&i| a.children[i] != b.children[i])
        .collect();
    if differing.len() >= 2 && is_permutation(&a.children, &b.children) {
        out.push(path.clone());
        return;
    }
    for i in differing {
        path.push(i);
        diff_into(&a.children[i], &b.children[i], path, out);
        path.pop();
    }
}

fn is_permutation(a: &[Tree], b: &[Tree]) -> bool {
    let mut used = vec![false; b.len()];
    a.iter().all(|x| {
        match (0..b.len()).find(|&j| !used[j] && b[j] == *x) {
            Some(j) => {
                used[j] = true;
                true
            }
            None => false,
        }
    })
}

pub fn file_tree(file: &SourceFile) -> Tree {
    let children = file
        .items
        .iter()
        .map(|item| match item {
            FileItem::Module(m) => module_tree(m),
            FileItem::Opaque(o) => opaque_tree(o),
        })
        .collect();
    Tree::new("file", "", Span::default()).with(children)
}

fn opaque_tree(o: &Opaque) -> Tree {
    Tree::new("opaque", format!("{}\n{}", o.keyword, o.text), o.span)
}

pub fn module_tree(m: &Module) -> Tree {
    let mut children: Vec<Tree> = m.params.iter().map(param_tree).collect();
    children.push(match &m.header {
        PortHeader::NonAnsi(names) => Tree::new("nonansi_header", "", m.span)
            .with(names.iter().map(name_tree).collect()),
        PortHeader::Ansi(decls) => {
            Tree::new("ansi_header", "", m.span).with(decls.iter().map(port_tree).collect())
        }
    });
    children.extend(m.items.iter().map(item_tree));
    Tree::new("module", m.name.name.clone(), m.span).with(children)
}

fn name_tree(n: &Ident) -> Tree {
    Tree::new("name", n.name.clone(), n.span)
}

fn range_tree(r: &Range) -> Tree {
    Tree::new("range", "", r.msb.span.join(r.lsb.span)).with(vec![expr_tree(&r.msb), expr_tree(&r.lsb)])
}

fn param_tree(p: &ParamDecl) -> Tree {
    let label = format!(
        "{}|{}",
        if p.local { "localparam" } else { "parameter" },
        p.type_kw.as_deref().unwrap_or("")
    );
    let mut children: Vec<Tree> = p.range.iter().map(range_tree).collect();
    children.extend(
        p.assigns
            .iter()
            .map(|(n, e)| Tree::new("param_assign", n.name.clone(), n.span).with(vec![expr_tree(e)])),
    );
    Tree::new("param_decl", label, p.span).with(children)
}

fn port_tree(d: &PortDecl) -> Tree {
    let label = format!(
        "{}|{}|{}",
        d.direction.keyword(),
        d.net_kind.map(NetKind::keyword).unwrap_or(""),
        d.signed
    );
    let mut children: Vec<Tree> = d.range.iter().map(range_tree).collect();
    children.extend(d.names.iter().map(name_tree));
    Tree::new("port_decl", label, d.span).with(children)
}

fn wrap(kind: &'static str, e: &Expr) -> Tree {
    Tree::new(kind, "", e.span).with(vec![expr_tree(e)])
}

pub fn item_tree(item: &ModuleItem) -> Tree {
    match item {
        ModuleItem::Port(d) => port_tree(d),
        ModuleItem::Net(n) => {
            let mut children: Vec<Tree> = n.range.iter().map(range_tree).collect();
            for d in &n.declarators {
                let mut dc = Vec::new();
                if let Some(a) = &d.array {
                    dc.push(Tree::new("array", "", d.name.span).with(vec![range_tree(a)]));
                }
                if let Some(init) = &d.init {
                    dc.push(wrap("init", init));
                }
                children.push(Tree::new("declarator", d.name.name.clone(), d.name.span).with(dc));
            }
            Tree::new("net_decl", format!("{}|{}", n.kind.keyword(), n.signed), n.span)
                .with(children)
        }
        ModuleItem::Param(p) => param_tree(p),
        ModuleItem::Assign(a) => {
            let mut children: Vec<Tree> = a.delay.iter().map(|d| wrap("delay", d)).collect();
            for (l, r) in &a.assigns {
                children.push(
                    Tree::new("assign_pair", "", l.span.join(r.span))
                        .with(vec![expr_tree(l), expr_tree(r)]),
                );
            }
            Tree::new("cont_assign", "", a.span).with(children)
        }
        ModuleItem::Always(a) => {
            let mut children = Vec::new();
            match &a.sensitivity {
                None => {}
                Some(Sensitivity::Star) => children.push(Tree::new("sens_star", "", a.span)),
                Some(Sensitivity::List(events)) => {
                    let evs = events
                        .iter()
                        .map(|e| {
                            let edge = match e.edge {
                                Some(Edge::Posedge) => "posedge",
                                Some(Edge::Negedge) => "negedge",
                                None => "",
                            };
                            Tree::new("event", edge, e.expr.span).with(vec![expr_tree(&e.expr)])
                        })
                        .collect();
                    children.push(Tree::new("sens_list", "", a.span).with(evs));
                }
            }
            children.push(stmt_tree(&a.body));
            Tree::new("always", a.kind.keyword(), a.span).with(children)
        }
        ModuleItem::Initial(i) => Tree::new("initial", "", i.span).with(vec![stmt_tree(&i.body)]),
        ModuleItem::Instance(inst) => {
            let mut children = vec![Tree::new("params", "", inst.span)
                .with(inst.params.iter().map(conn_tree).collect())];
            for d in &inst.instances {
                children.push(
                    Tree::new("instance", d.name.name.clone(), d.span)
                        .with(d.conns.iter().map(conn_tree).collect()),
                );
            }
            Tree::new("instantiation", inst.module.name.clone(), inst.span).with(children)
        }
        ModuleItem::Opaque(o) => opaque_tree(o),
    }
}

fn conn_tree(c: &Connection) -> Tree {
    match c {
        Connection::Named { port, expr } => Tree::new("named_conn", port.name.clone(), port.span)
            .with(expr.iter().map(expr_tree).collect()),
        Connection::Positional(e) => Tree::new(
            "positional_conn",
            "",
            e.as_ref().map(|e| e.span).unwrap_or_default(),
        )
        .with(e.iter().map(expr_tree).collect()),
    }
}

pub fn stmt_tree(s: &Stmt) -> Tree {
    match s {
        Stmt::Block { label, stmts, span } => {
            Tree::new("block", label.clone().unwrap_or_default(), *span)
                .with(stmts.iter().map(stmt_tree).collect())
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
            span,
        } => {
            let mut children = vec![expr_tree(cond), stmt_tree(then_branch)];
            if let Some(e) = else_branch {
                children.push(Tree::new("else", "", e.span()).with(vec![stmt_tree(e)]));
            }
            Tree::new("if", "", *span).with(children)
        }
        Stmt::Case {
            kind,
            expr,
            items,
            span,
        } => {
            let mut children = vec![expr_tree(expr)];
            for item in items {
                let mut ic: Vec<Tree> = item.labels.iter().map(expr_tree).collect();
                ic.push(stmt_tree(&item.body));
                let label = if item.labels.is_empty() { "default" } else { "" };
                children.push(Tree::new("case_item", label, item.body.span()).with(ic));
            }
            Tree::new("case", kind.keyword(), *span).with(children)
        }
        Stmt::Assign {
            blocking,
            lhs,
            delay,
            rhs,
            span,
        } => {
            let mut children = vec![expr_tree(lhs)];
            if let Some(d) = delay {
                children.push(wrap("delay", d));
            }
            children.push(expr_tree(rhs));
            let label = if *blocking { "blocking" } else { "nonblocking" };
            Tree::new("assign_stmt", label, *span).with(children)
        }
        Stmt::For {
            init,
            cond,
            step,
            body,
            span,
        } => Tree::new("for", "", *span).with(vec![
            stmt_tree(init),
            expr_tree(cond),
            stmt_tree(step),
            stmt_tree(body),
        ]),
        Stmt::SysTask { name, args, span } => {
            Tree::new("systask", name.clone(), *span).with(args.iter().map(expr_tree).collect())
        }
        Stmt::Null { span } => Tree::new("null", "", *span),
    }
}

pub fn expr_tree(e: &Expr) -> Tree {
    let t = |kind, label: &str| Tree::new(kind, label, e.span);
    match &e.kind {
        ExprKind::Ident(n) => t("ident", n),
        ExprKind::Macro(m) => t("macro", m),
        ExprKind::Number(n) => t("number", n),
        ExprKind::Str(s) => t("str", s),
        ExprKind::Index { base, index } => t("index", "").with(vec![expr_tree(base), expr_tree(index)]),
        ExprKind::Slice {
            base,
            kind,
            left,
            right,
        } => t("slice", kind.token()).with(vec![expr_tree(base), expr_tree(left), expr_tree(right)]),
        ExprKind::Unary { op, operand } => t("unary", op).with(vec![expr_tree(operand)]),
        ExprKind::Binary {
            op,
            op_span,
            lhs,
            rhs,
        } => {
            let mut node = t("binary", op).with(vec![expr_tree(lhs), expr_tree(rhs)]);
            node.op_span = Some(*op_span);
            node
        }
        ExprKind::Ternary {
            cond,
            then_expr,
            else_expr,
        } => t("ternary", "").with(vec![expr_tree(cond), expr_tree(then_expr), expr_tree(else_expr)]),
        ExprKind::Concat(items) => t("concat", "").with(items.iter().map(expr_tree).collect()),
        ExprKind::Replicate { count, items } => {
            let mut children = vec![expr_tree(count)];
            children.extend(items.iter().map(expr_tree));
            t("replicate", "").with(children)
        }
        ExprKind::Call { name, args } => t("call", name).with(args.iter().map(expr_tree).collect()),
    }
}
