// SPDX-License-Identifier: Apache-2.0
//! Canonical rendering of a syntax tree: 4-space indentation, one statement
//! per line, minimal parentheses. Comments are not preserved.

use std::fmt::Write;

use super::ast::*;

pub fn unparse(program: &Program) -> String {
    let mut out = String::new();
    block(&mut out, &program.statements, 0);
    out
}

pub fn unparse_expr(expr: &Expr) -> String {
    let mut out = String::new();
    expression(&mut out, expr, 0);
    out
}

fn block(out: &mut String, stmts: &[Stmt], level: usize) {
    for stmt in stmts {
        statement(out, stmt, level);
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn suite(out: &mut String, body: &[Stmt], level: usize) {
    out.push_str(":\n");
    if body.is_empty() {
        indent(out, level + 1);
        out.push_str("pass\n");
    } else {
        block(out, body, level + 1);
    }
}

fn import_names(out: &mut String, names: &[ImportName]) {
    for (i, n) in names.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&n.path);
        if let Some(alias) = &n.alias {
            let _ = write!(out, " as {alias}");
        }
    }
}

fn statement(out: &mut String, stmt: &Stmt, level: usize) {
    indent(out, level);
    match &stmt.kind {
        StmtKind::Assign { target, value } => {
            match target {
                Target::Name(n) => out.push_str(n),
                Target::Index { object, index } => {
                    expression(out, object, PREC_POSTFIX);
                    out.push('[');
                    expression(out, index, 0);
                    out.push(']');
                }
                Target::Attribute { object, name } => {
                    expression(out, object, PREC_POSTFIX);
                    out.push('.');
                    out.push_str(name);
                }
            }
            out.push_str(" = ");
            expression(out, value, 0);
            out.push('\n');
        }
        StmtKind::Expr(e) => {
            expression(out, e, 0);
            out.push('\n');
        }
        StmtKind::FunctionDef(f) => {
            let _ = write!(out, "def {}(", f.name);
            for (i, p) in f.params.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&p.name);
                if let Some(d) = &p.default {
                    out.push('=');
                    expression(out, d, 0);
                }
            }
            out.push(')');
            suite(out, &f.body, level);
        }
        StmtKind::Return(value) => {
            out.push_str("return");
            if let Some(v) = value {
                out.push(' ');
                expression(out, v, 0);
            }
            out.push('\n');
        }
        StmtKind::For { var, iter, body } => {
            let _ = write!(out, "for {var} in ");
            expression(out, iter, 0);
            suite(out, body, level);
        }
        StmtKind::While { cond, body } => {
            out.push_str("while ");
            expression(out, cond, 0);
            suite(out, body, level);
        }
        StmtKind::If { branches, orelse } => {
            for (i, (cond, body)) in branches.iter().enumerate() {
                if i > 0 {
                    indent(out, level);
                    out.push_str("elif ");
                } else {
                    out.push_str("if ");
                }
                expression(out, cond, 0);
                suite(out, body, level);
            }
            if let Some(body) = orelse {
                indent(out, level);
                out.push_str("else");
                suite(out, body, level);
            }
        }
        StmtKind::Break => out.push_str("break\n"),
        StmtKind::Continue => out.push_str("continue\n"),
        StmtKind::Pass => out.push_str("pass\n"),
        StmtKind::Import(names) => {
            out.push_str("import ");
            import_names(out, names);
            out.push('\n');
        }
        StmtKind::FromImport { module, names } => {
            let _ = write!(out, "from {module} import ");
            import_names(out, names);
            out.push('\n');
        }
    }
}

const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_NOT: u8 = 3;
const PREC_CMP: u8 = 4;
const PREC_ADD: u8 = 5;
const PREC_MUL: u8 = 6;
const PREC_UNARY: u8 = 7;
const PREC_POW: u8 = 8;
const PREC_POSTFIX: u8 = 9;

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Logical { op: LogicalOp::Or, .. } => PREC_OR,
        ExprKind::Logical { op: LogicalOp::And, .. } => PREC_AND,
        ExprKind::Unary { op: UnaryOp::Not, .. } => PREC_NOT,
        ExprKind::Compare { .. } => PREC_CMP,
        ExprKind::Binary { op: BinOp::Add | BinOp::Sub, .. } => PREC_ADD,
        ExprKind::Binary { op: BinOp::Pow, .. } => PREC_POW,
        ExprKind::Binary { .. } => PREC_MUL,
        ExprKind::Unary { op: UnaryOp::Neg, .. } => PREC_UNARY,
        _ => PREC_POSTFIX + 1,
    }
}

/// Writes `e`, parenthesized when its precedence is below `min`.
fn expression(out: &mut String, e: &Expr, min: u8) {
    let prec = precedence(e);
    let parens = prec < min;
    if parens {
        out.push('(');
    }
    match &e.kind {
        ExprKind::Int(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Float(v) => out.push_str(&float_literal(*v)),
        ExprKind::Str(s) => out.push_str(&quote(s)),
        ExprKind::Bool(true) => out.push_str("True"),
        ExprKind::Bool(false) => out.push_str("False"),
        ExprKind::None => out.push_str("None"),
        ExprKind::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expression(out, item, 0);
            }
            out.push(']');
        }
        ExprKind::Dict(entries) => {
            out.push('{');
            for (i, (k, v)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expression(out, k, 0);
                out.push_str(": ");
                expression(out, v, 0);
            }
            out.push('}');
        }
        ExprKind::Name(n) => out.push_str(n),
        ExprKind::Attribute { object, name } => {
            if matches!(object.kind, ExprKind::Int(_)) {
                // `1.x` would lex as a float.
                out.push('(');
                expression(out, object, 0);
                out.push(')');
            } else {
                expression(out, object, PREC_POSTFIX);
            }
            out.push('.');
            out.push_str(name);
        }
        ExprKind::Call { func, args, kwargs } => {
            expression(out, func, PREC_POSTFIX);
            out.push('(');
            let mut first = true;
            for a in args {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                expression(out, a, 0);
            }
            for (k, v) in kwargs {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                out.push_str(k);
                out.push('=');
                expression(out, v, 0);
            }
            out.push(')');
        }
        ExprKind::Index { object, index } => {
            expression(out, object, PREC_POSTFIX);
            out.push('[');
            expression(out, index, 0);
            out.push(']');
        }
        ExprKind::Unary { op: UnaryOp::Neg, operand } => {
            out.push('-');
            expression(out, operand, PREC_UNARY);
        }
        ExprKind::Unary { op: UnaryOp::Not, operand } => {
            out.push_str("not ");
            expression(out, operand, PREC_NOT);
        }
        ExprKind::Binary { op: BinOp::Pow, left, right } => {
            // Right-associative; the exponent may be a bare unary minus.
            expression(out, left, PREC_POSTFIX);
            out.push_str(" ** ");
            expression(out, right, PREC_UNARY);
        }
        ExprKind::Binary { op, left, right } => {
            expression(out, left, prec);
            let _ = write!(out, " {} ", op.symbol());
            expression(out, right, prec + 1);
        }
        ExprKind::Compare { first, rest } => {
            expression(out, first, PREC_CMP + 1);
            for (op, operand) in rest {
                let _ = write!(out, " {} ", op.symbol());
                expression(out, operand, PREC_CMP + 1);
            }
        }
        ExprKind::Logical { op, left, right } => {
            let word = match op {
                LogicalOp::And => "and",
                LogicalOp::Or => "or",
            };
            expression(out, left, prec);
            let _ = write!(out, " {word} ");
            expression(out, right, prec + 1);
        }
    }
    if parens {
        out.push(')');
    }
}

fn float_literal(v: f64) -> String {
    if v.is_infinite() {
        // No literal spelling exists; an overflowing literal reparses as inf.
        return "1e999".to_string();
    }
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'E']) || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
