//! AST shape metrics over the Python abstract grammar.
//!
//! Counting follows the abstract grammar: every statement, expression,
//! arguments/arg, keyword, alias, withitem, comprehension, exception
//! handler, match case, pattern, and operator symbol is one node.
//! Expression-context markers (load/store/delete) and type-ignore
//! placeholders are bookkeeping, not structure, and are excluded.
//!
//! Depth counts nodes on the longest root-to-leaf path (the module root has
//! depth 1). Width is the maximum number of nodes found at any single depth.

use rustpython_parser::ast;
use rustpython_parser::{parse, Mode};

/// Shape of a parsed module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AstMetrics {
    pub depth: usize,
    pub width: usize,
    pub nodes: usize,
}

/// A syntax error surfaced as a value, consumed downstream as parse_ok=false.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error: {message}")]
pub struct ParseFailure {
    pub message: String,
}

/// Parse code and measure the tree, or report the syntax error.
pub fn ast_metrics(code: &str) -> Result<AstMetrics, ParseFailure> {
    let module = parse(code, Mode::Module, "<submission>").map_err(|e| ParseFailure {
        message: e.to_string(),
    })?;
    let mut shape = Shape::default();
    match &module {
        ast::Mod::Module(m) => {
            shape.node(1);
            for stmt in &m.body {
                walk_stmt(stmt, 2, &mut shape);
            }
        }
        // Mode::Module always yields Mod::Module.
        _ => unreachable!("module parse mode"),
    }
    Ok(AstMetrics {
        depth: shape.levels.len(),
        width: shape.levels.iter().copied().max().unwrap_or(0),
        nodes: shape.levels.iter().sum(),
    })
}

#[derive(Debug, Default)]
struct Shape {
    /// levels[d-1] = number of nodes at depth d.
    levels: Vec<usize>,
}

impl Shape {
    fn node(&mut self, depth: usize) {
        if self.levels.len() < depth {
            self.levels.resize(depth, 0);
        }
        self.levels[depth - 1] += 1;
    }
}

fn walk_stmts(stmts: &[ast::Stmt], depth: usize, shape: &mut Shape) {
    for stmt in stmts {
        walk_stmt(stmt, depth, shape);
    }
}

fn walk_exprs(exprs: &[ast::Expr], depth: usize, shape: &mut Shape) {
    for expr in exprs {
        walk_expr(expr, depth, shape);
    }
}

fn walk_opt_expr(expr: &Option<Box<ast::Expr>>, depth: usize, shape: &mut Shape) {
    if let Some(e) = expr {
        walk_expr(e, depth, shape);
    }
}

fn walk_stmt(stmt: &ast::Stmt, depth: usize, shape: &mut Shape) {
    shape.node(depth);
    let child = depth + 1;
    match stmt {
        ast::Stmt::FunctionDef(s) => {
            walk_arguments(&s.args, child, shape);
            walk_stmts(&s.body, child, shape);
            walk_exprs(&s.decorator_list, child, shape);
            walk_opt_expr(&s.returns, child, shape);
            walk_type_params(&s.type_params, child, shape);
        }
        ast::Stmt::AsyncFunctionDef(s) => {
            walk_arguments(&s.args, child, shape);
            walk_stmts(&s.body, child, shape);
            walk_exprs(&s.decorator_list, child, shape);
            walk_opt_expr(&s.returns, child, shape);
            walk_type_params(&s.type_params, child, shape);
        }
        ast::Stmt::ClassDef(s) => {
            walk_exprs(&s.bases, child, shape);
            for kw in &s.keywords {
                walk_keyword(kw, child, shape);
            }
            walk_stmts(&s.body, child, shape);
            walk_exprs(&s.decorator_list, child, shape);
            walk_type_params(&s.type_params, child, shape);
        }
        ast::Stmt::Return(s) => walk_opt_expr(&s.value, child, shape),
        ast::Stmt::Delete(s) => walk_exprs(&s.targets, child, shape),
        ast::Stmt::Assign(s) => {
            walk_exprs(&s.targets, child, shape);
            walk_expr(&s.value, child, shape);
        }
        ast::Stmt::TypeAlias(s) => {
            walk_expr(&s.name, child, shape);
            walk_type_params(&s.type_params, child, shape);
            walk_expr(&s.value, child, shape);
        }
        ast::Stmt::AugAssign(s) => {
            walk_expr(&s.target, child, shape);
            shape.node(child); // operator symbol
            walk_expr(&s.value, child, shape);
        }
        ast::Stmt::AnnAssign(s) => {
            walk_expr(&s.target, child, shape);
            walk_expr(&s.annotation, child, shape);
            walk_opt_expr(&s.value, child, shape);
        }
        ast::Stmt::For(s) => {
            walk_expr(&s.target, child, shape);
            walk_expr(&s.iter, child, shape);
            walk_stmts(&s.body, child, shape);
            walk_stmts(&s.orelse, child, shape);
        }
        ast::Stmt::AsyncFor(s) => {
            walk_expr(&s.target, child, shape);
            walk_expr(&s.iter, child, shape);
            walk_stmts(&s.body, child, shape);
            walk_stmts(&s.orelse, child, shape);
        }
        ast::Stmt::While(s) => {
            walk_expr(&s.test, child, shape);
            walk_stmts(&s.body, child, shape);
            walk_stmts(&s.orelse, child, shape);
        }
        ast::Stmt::If(s) => {
            walk_expr(&s.test, child, shape);
            walk_stmts(&s.body, child, shape);
            walk_stmts(&s.orelse, child, shape);
        }
        ast::Stmt::With(s) => {
            for item in &s.items {
                walk_withitem(item, child, shape);
            }
            walk_stmts(&s.body, child, shape);
        }
        ast::Stmt::AsyncWith(s) => {
            for item in &s.items {
                walk_withitem(item, child, shape);
            }
            walk_stmts(&s.body, child, shape);
        }
        ast::Stmt::Match(s) => {
            walk_expr(&s.subject, child, shape);
            for case in &s.cases {
                walk_match_case(case, child, shape);
            }
        }
        ast::Stmt::Raise(s) => {
            walk_opt_expr(&s.exc, child, shape);
            walk_opt_expr(&s.cause, child, shape);
        }
        ast::Stmt::Try(s) => {
            walk_stmts(&s.body, child, shape);
            for handler in &s.handlers {
                walk_except_handler(handler, child, shape);
            }
            walk_stmts(&s.orelse, child, shape);
            walk_stmts(&s.finalbody, child, shape);
        }
        ast::Stmt::TryStar(s) => {
            walk_stmts(&s.body, child, shape);
            for handler in &s.handlers {
                walk_except_handler(handler, child, shape);
            }
            walk_stmts(&s.orelse, child, shape);
            walk_stmts(&s.finalbody, child, shape);
        }
        ast::Stmt::Assert(s) => {
            walk_expr(&s.test, child, shape);
            walk_opt_expr(&s.msg, child, shape);
        }
        ast::Stmt::Import(s) => {
            for _alias in &s.names {
                shape.node(child);
            }
        }
        ast::Stmt::ImportFrom(s) => {
            for _alias in &s.names {
                shape.node(child);
            }
        }
        // Global/Nonlocal carry bare identifiers, which are not nodes.
        ast::Stmt::Global(_) | ast::Stmt::Nonlocal(_) => {}
        ast::Stmt::Expr(s) => walk_expr(&s.value, child, shape),
        ast::Stmt::Pass(_) | ast::Stmt::Break(_) | ast::Stmt::Continue(_) => {}
    }
}

fn walk_expr(expr: &ast::Expr, depth: usize, shape: &mut Shape) {
    shape.node(depth);
    let child = depth + 1;
    match expr {
        ast::Expr::BoolOp(e) => {
            shape.node(child); // boolean operator symbol
            walk_exprs(&e.values, child, shape);
        }
        ast::Expr::NamedExpr(e) => {
            walk_expr(&e.target, child, shape);
            walk_expr(&e.value, child, shape);
        }
        ast::Expr::BinOp(e) => {
            walk_expr(&e.left, child, shape);
            shape.node(child); // operator symbol
            walk_expr(&e.right, child, shape);
        }
        ast::Expr::UnaryOp(e) => {
            shape.node(child); // operator symbol
            walk_expr(&e.operand, child, shape);
        }
        ast::Expr::Lambda(e) => {
            walk_arguments(&e.args, child, shape);
            walk_expr(&e.body, child, shape);
        }
        ast::Expr::IfExp(e) => {
            walk_expr(&e.test, child, shape);
            walk_expr(&e.body, child, shape);
            walk_expr(&e.orelse, child, shape);
        }
        ast::Expr::Dict(e) => {
            for key in e.keys.iter().flatten() {
                walk_expr(key, child, shape);
            }
            walk_exprs(&e.values, child, shape);
        }
        ast::Expr::Set(e) => walk_exprs(&e.elts, child, shape),
        ast::Expr::ListComp(e) => {
            walk_expr(&e.elt, child, shape);
            for gen in &e.generators {
                walk_comprehension(gen, child, shape);
            }
        }
        ast::Expr::SetComp(e) => {
            walk_expr(&e.elt, child, shape);
            for gen in &e.generators {
                walk_comprehension(gen, child, shape);
            }
        }
        ast::Expr::DictComp(e) => {
            walk_expr(&e.key, child, shape);
            walk_expr(&e.value, child, shape);
            for gen in &e.generators {
                walk_comprehension(gen, child, shape);
            }
        }
        ast::Expr::GeneratorExp(e) => {
            walk_expr(&e.elt, child, shape);
            for gen in &e.generators {
                walk_comprehension(gen, child, shape);
            }
        }
        ast::Expr::Await(e) => walk_expr(&e.value, child, shape),
        ast::Expr::Yield(e) => walk_opt_expr(&e.value, child, shape),
        ast::Expr::YieldFrom(e) => walk_expr(&e.value, child, shape),
        ast::Expr::Compare(e) => {
            walk_expr(&e.left, child, shape);
            for _op in &e.ops {
                shape.node(child); // one symbol per comparison
            }
            walk_exprs(&e.comparators, child, shape);
        }
        ast::Expr::Call(e) => {
            walk_expr(&e.func, child, shape);
            walk_exprs(&e.args, child, shape);
            for kw in &e.keywords {
                walk_keyword(kw, child, shape);
            }
        }
        ast::Expr::FormattedValue(e) => {
            walk_expr(&e.value, child, shape);
            walk_opt_expr(&e.format_spec, child, shape);
        }
        ast::Expr::JoinedStr(e) => walk_exprs(&e.values, child, shape),
        ast::Expr::Constant(_) => {}
        ast::Expr::Attribute(e) => walk_expr(&e.value, child, shape),
        ast::Expr::Subscript(e) => {
            walk_expr(&e.value, child, shape);
            walk_expr(&e.slice, child, shape);
        }
        ast::Expr::Starred(e) => walk_expr(&e.value, child, shape),
        ast::Expr::Name(_) => {}
        ast::Expr::List(e) => walk_exprs(&e.elts, child, shape),
        ast::Expr::Tuple(e) => walk_exprs(&e.elts, child, shape),
        ast::Expr::Slice(e) => {
            walk_opt_expr(&e.lower, child, shape);
            walk_opt_expr(&e.upper, child, shape);
            walk_opt_expr(&e.step, child, shape);
        }
    }
}

fn walk_arguments(args: &ast::Arguments, depth: usize, shape: &mut Shape) {
    shape.node(depth);
    let child = depth + 1;
    // Defaults are children of the arguments node, alongside each arg.
    for arg in args.posonlyargs.iter().chain(&args.args) {
        walk_arg(&arg.def, child, shape);
        if let Some(default) = &arg.default {
            walk_expr(default, child, shape);
        }
    }
    if let Some(vararg) = &args.vararg {
        walk_arg(vararg, child, shape);
    }
    for arg in &args.kwonlyargs {
        walk_arg(&arg.def, child, shape);
        if let Some(default) = &arg.default {
            walk_expr(default, child, shape);
        }
    }
    if let Some(kwarg) = &args.kwarg {
        walk_arg(kwarg, child, shape);
    }
}

fn walk_arg(arg: &ast::Arg, depth: usize, shape: &mut Shape) {
    shape.node(depth);
    if let Some(annotation) = &arg.annotation {
        walk_expr(annotation, depth + 1, shape);
    }
}

fn walk_keyword(kw: &ast::Keyword, depth: usize, shape: &mut Shape) {
    shape.node(depth);
    walk_expr(&kw.value, depth + 1, shape);
}

fn walk_withitem(item: &ast::WithItem, depth: usize, shape: &mut Shape) {
    shape.node(depth);
    let child = depth + 1;
    walk_expr(&item.context_expr, child, shape);
    if let Some(vars) = &item.optional_vars {
        walk_expr(vars, child, shape);
    }
}

fn walk_comprehension(gen: &ast::Comprehension, depth: usize, shape: &mut Shape) {
    shape.node(depth);
    let child = depth + 1;
    walk_expr(&gen.target, child, shape);
    walk_expr(&gen.iter, child, shape);
    walk_exprs(&gen.ifs, child, shape);
}

fn walk_except_handler(handler: &ast::ExceptHandler, depth: usize, shape: &mut Shape) {
    shape.node(depth);
    let child = depth + 1;
    match handler {
        ast::ExceptHandler::ExceptHandler(h) => {
            walk_opt_expr(&h.type_, child, shape);
            walk_stmts(&h.body, child, shape);
        }
    }
}

fn walk_match_case(case: &ast::MatchCase, depth: usize, shape: &mut Shape) {
    shape.node(depth);
    let child = depth + 1;
    walk_pattern(&case.pattern, child, shape);
    walk_opt_expr(&case.guard, child, shape);
    walk_stmts(&case.body, child, shape);
}

fn walk_pattern(pattern: &ast::Pattern, depth: usize, shape: &mut Shape) {
    shape.node(depth);
    let child = depth + 1;
    match pattern {
        ast::Pattern::MatchValue(p) => walk_expr(&p.value, child, shape),
        ast::Pattern::MatchSingleton(_) => {}
        ast::Pattern::MatchSequence(p) => {
            for sub in &p.patterns {
                walk_pattern(sub, child, shape);
            }
        }
        ast::Pattern::MatchMapping(p) => {
            walk_exprs(&p.keys, child, shape);
            for sub in &p.patterns {
                walk_pattern(sub, child, shape);
            }
        }
        ast::Pattern::MatchClass(p) => {
            walk_expr(&p.cls, child, shape);
            for sub in &p.patterns {
                walk_pattern(sub, child, shape);
            }
            for sub in &p.kwd_patterns {
                walk_pattern(sub, child, shape);
            }
        }
        ast::Pattern::MatchStar(_) => {}
        ast::Pattern::MatchAs(p) => {
            if let Some(sub) = &p.pattern {
                walk_pattern(sub, child, shape);
            }
        }
        ast::Pattern::MatchOr(p) => {
            for sub in &p.patterns {
                walk_pattern(sub, child, shape);
            }
        }
    }
}

fn walk_type_params(params: &[ast::TypeParam], depth: usize, shape: &mut Shape) {
    for param in params {
        shape.node(depth);
        if let ast::TypeParam::TypeVar(tv) = param {
            if let Some(bound) = &tv.bound {
                walk_expr(bound, depth + 1, shape);
            }
        }
    }
}
