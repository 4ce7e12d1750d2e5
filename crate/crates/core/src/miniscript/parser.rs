// SPDX-License-Identifier: Apache-2.0
//! Recursive-descent parser producing [`Program`].

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::SyntaxError;

const KEYWORDS: [&str; 19] = [
    "def", "return", "for", "in", "while", "if", "elif", "else", "break", "continue", "pass", "import", "from", "as",
    "and", "or", "not", "True", "False",
];

const MAX_NESTING: usize = 128;

pub fn parse(source: &str) -> Result<Program, SyntaxError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0, loop_depth: 0, in_function: false, nesting: 0 };
    let mut statements = Vec::new();
    while !p.at(&Tok::Eof) {
        if p.eat_newline() {
            continue;
        }
        p.statement(&mut statements)?;
    }
    Ok(Program { statements })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    loop_depth: usize,
    in_function: bool,
    nesting: usize,
}

type KeywordArgs = Vec<(String, Expr)>;

fn is_keyword(name: &str) -> bool {
    KEYWORDS.contains(&name) || name == "None"
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_tok(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_nth(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at(&self, tok: &Tok) -> bool {
        self.peek_tok() == tok
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(self.peek_tok(), Tok::Op(o) if *o == op)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek_tok(), Tok::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_newline(&mut self) -> bool {
        if self.at(&Tok::Newline) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError::new(self.peek().span, msg))
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, SyntaxError> {
        let found = describe(self.peek_tok());
        self.error(format!("expected {wanted}, found {found}"))
    }

    fn expect_op(&mut self, op: &str) -> Result<Span, SyntaxError> {
        if self.at_op(op) {
            Ok(self.advance().span)
        } else {
            self.unexpected(&format!("'{op}'"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("'{kw}'"))
        }
    }

    fn identifier(&mut self) -> Result<String, SyntaxError> {
        match self.peek_tok() {
            Tok::Name(n) if !is_keyword(n) => {
                let n = n.clone();
                self.advance();
                Ok(n)
            }
            _ => self.unexpected("identifier"),
        }
    }

    fn enter(&mut self) -> Result<(), SyntaxError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return self.error("too deeply nested");
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.nesting -= 1;
    }

    // ---- statements ----

    fn statement(&mut self, out: &mut Vec<Stmt>) -> Result<(), SyntaxError> {
        let span = self.peek().span;
        let kind = match self.peek_tok() {
            Tok::Name(n) if n == "def" => self.function_def()?,
            Tok::Name(n) if n == "for" => self.for_stmt()?,
            Tok::Name(n) if n == "while" => self.while_stmt()?,
            Tok::Name(n) if n == "if" => self.if_stmt()?,
            Tok::Indent => return self.error("unexpected indent"),
            _ => return self.simple_line(out),
        };
        out.push(Stmt { kind, span });
        Ok(())
    }

    /// One or more `;`-separated simple statements terminated by a newline.
    fn simple_line(&mut self, out: &mut Vec<Stmt>) -> Result<(), SyntaxError> {
        loop {
            let span = self.peek().span;
            let kind = self.simple_statement()?;
            out.push(Stmt { kind, span });
            if self.eat_op(";") {
                if self.at(&Tok::Newline) || self.at(&Tok::Eof) {
                    break;
                }
                continue;
            }
            break;
        }
        if self.eat_newline() || self.at(&Tok::Eof) {
            Ok(())
        } else {
            self.unexpected("end of line")
        }
    }

    fn simple_statement(&mut self) -> Result<StmtKind, SyntaxError> {
        if self.eat_kw("pass") {
            return Ok(StmtKind::Pass);
        }
        if self.at_kw("break") || self.at_kw("continue") {
            let is_break = self.at_kw("break");
            if self.loop_depth == 0 {
                let what = if is_break { "break" } else { "continue" };
                return self.error(format!("'{what}' outside loop"));
            }
            self.advance();
            return Ok(if is_break { StmtKind::Break } else { StmtKind::Continue });
        }
        if self.at_kw("return") {
            if !self.in_function {
                return self.error("'return' outside function");
            }
            self.advance();
            if self.at(&Tok::Newline) || self.at(&Tok::Eof) || self.at_op(";") {
                return Ok(StmtKind::Return(None));
            }
            return Ok(StmtKind::Return(Some(self.expression()?)));
        }
        if self.eat_kw("import") {
            let mut names = vec![self.import_name()?];
            while self.eat_op(",") {
                names.push(self.import_name()?);
            }
            return Ok(StmtKind::Import(names));
        }
        if self.eat_kw("from") {
            let module = self.dotted_name()?;
            self.expect_kw("import")?;
            let parens = self.eat_op("(");
            let mut names = vec![self.import_alias()?];
            while self.eat_op(",") {
                if parens && self.at_op(")") {
                    break;
                }
                names.push(self.import_alias()?);
            }
            if parens {
                self.expect_op(")")?;
            }
            return Ok(StmtKind::FromImport { module, names });
        }

        let expr = self.expression()?;
        let aug = match self.peek_tok() {
            Tok::Op("+=") => Some(BinOp::Add),
            Tok::Op("-=") => Some(BinOp::Sub),
            Tok::Op("*=") => Some(BinOp::Mul),
            Tok::Op("/=") => Some(BinOp::Div),
            Tok::Op("//=") => Some(BinOp::FloorDiv),
            Tok::Op("%=") => Some(BinOp::Mod),
            Tok::Op("**=") => Some(BinOp::Pow),
            _ => None,
        };
        if let Some(op) = aug {
            // `t += x` is sugar for `t = t + x`.
            let target = self.to_target(&expr)?;
            self.advance();
            let rhs = self.expression()?;
            let value =
                Expr { span: expr.span, kind: ExprKind::Binary { op, left: Box::new(expr), right: Box::new(rhs) } };
            return Ok(StmtKind::Assign { target, value });
        }
        if self.at_op("=") {
            let target = self.to_target(&expr)?;
            self.advance();
            let value = self.expression()?;
            if self.at_op("=") {
                return self.error("chained assignment is not supported");
            }
            return Ok(StmtKind::Assign { target, value });
        }
        Ok(StmtKind::Expr(expr))
    }

    fn to_target(&self, expr: &Expr) -> Result<Target, SyntaxError> {
        match &expr.kind {
            ExprKind::Name(n) => Ok(Target::Name(n.clone())),
            ExprKind::Index { object, index } => {
                Ok(Target::Index { object: (**object).clone(), index: (**index).clone() })
            }
            ExprKind::Attribute { object, name } => {
                Ok(Target::Attribute { object: (**object).clone(), name: name.clone() })
            }
            _ => Err(SyntaxError::new(expr.span, "cannot assign to expression")),
        }
    }

    fn dotted_name(&mut self) -> Result<String, SyntaxError> {
        let mut path = self.identifier()?;
        while self.eat_op(".") {
            path.push('.');
            path.push_str(&self.identifier()?);
        }
        Ok(path)
    }

    fn import_name(&mut self) -> Result<ImportName, SyntaxError> {
        let path = self.dotted_name()?;
        let alias = if self.eat_kw("as") { Some(self.identifier()?) } else { None };
        Ok(ImportName { path, alias })
    }

    fn import_alias(&mut self) -> Result<ImportName, SyntaxError> {
        if self.eat_op("*") {
            return Ok(ImportName { path: "*".into(), alias: None });
        }
        let path = self.identifier()?;
        let alias = if self.eat_kw("as") { Some(self.identifier()?) } else { None };
        Ok(ImportName { path, alias })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.expect_op(":")?;
        self.enter()?;
        let mut body = Vec::new();
        if self.eat_newline() {
            if !self.at(&Tok::Indent) {
                return self.unexpected("an indented block");
            }
            self.advance();
            while !self.at(&Tok::Dedent) && !self.at(&Tok::Eof) {
                if self.eat_newline() {
                    continue;
                }
                self.statement(&mut body)?;
            }
            if self.at(&Tok::Dedent) {
                self.advance();
            }
        } else {
            self.simple_line(&mut body)?;
        }
        self.leave();
        Ok(body)
    }

    fn function_def(&mut self) -> Result<StmtKind, SyntaxError> {
        self.expect_kw("def")?;
        let name = self.identifier()?;
        self.expect_op("(")?;
        let mut params: Vec<Param> = Vec::new();
        while !self.at_op(")") {
            let pspan = self.peek().span;
            let pname = self.identifier()?;
            if params.iter().any(|p| p.name == pname) {
                return Err(SyntaxError::new(pspan, format!("duplicate parameter '{pname}'")));
            }
            let default = if self.eat_op("=") { Some(self.expression()?) } else { None };
            if default.is_none() && params.iter().any(|p| p.default.is_some()) {
                return Err(SyntaxError::new(pspan, "parameter without a default follows parameter with a default"));
            }
            params.push(Param { name: pname, default });
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        let saved = (self.loop_depth, self.in_function);
        self.loop_depth = 0;
        self.in_function = true;
        let body = self.block();
        (self.loop_depth, self.in_function) = saved;
        Ok(StmtKind::FunctionDef(FunctionDef { name, params, body: body? }))
    }

    fn loop_body(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.loop_depth += 1;
        let body = self.block();
        self.loop_depth -= 1;
        body
    }

    fn for_stmt(&mut self) -> Result<StmtKind, SyntaxError> {
        self.expect_kw("for")?;
        let var = self.identifier()?;
        self.expect_kw("in")?;
        let iter = self.expression()?;
        let body = self.loop_body()?;
        Ok(StmtKind::For { var, iter, body })
    }

    fn while_stmt(&mut self) -> Result<StmtKind, SyntaxError> {
        self.expect_kw("while")?;
        let cond = self.expression()?;
        let body = self.loop_body()?;
        Ok(StmtKind::While { cond, body })
    }

    fn if_stmt(&mut self) -> Result<StmtKind, SyntaxError> {
        self.expect_kw("if")?;
        let mut branches = Vec::new();
        let cond = self.expression()?;
        branches.push((cond, self.block()?));
        let mut orelse = None;
        loop {
            if self.eat_kw("elif") {
                let cond = self.expression()?;
                branches.push((cond, self.block()?));
            } else if self.eat_kw("else") {
                orelse = Some(self.block()?);
                break;
            } else {
                break;
            }
        }
        Ok(StmtKind::If { branches, orelse })
    }

    // ---- expressions ----

    pub fn expression(&mut self) -> Result<Expr, SyntaxError> {
        self.enter()?;
        let e = self.or_expr();
        self.leave();
        e
    }

    fn or_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.and_expr()?;
        while self.at_kw("or") {
            self.advance();
            let right = self.and_expr()?;
            left = logical(LogicalOp::Or, left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.not_expr()?;
        while self.at_kw("and") {
            self.advance();
            let right = self.not_expr()?;
            left = logical(LogicalOp::And, left, right);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, SyntaxError> {
        if self.at_kw("not") {
            let span = self.advance().span;
            self.enter()?;
            let operand = self.not_expr();
            self.leave();
            return Ok(Expr { span, kind: ExprKind::Unary { op: UnaryOp::Not, operand: Box::new(operand?) } });
        }
        self.comparison()
    }

    fn comparison_op(&mut self) -> Option<CmpOp> {
        let op = match self.peek_tok() {
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::Ne,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::Ge,
            Tok::Name(n) if n == "in" => CmpOp::In,
            Tok::Name(n) if n == "not" && matches!(self.peek_nth(1), Tok::Name(m) if m == "in") => {
                self.advance();
                CmpOp::NotIn
            }
            _ => return None,
        };
        self.advance();
        Some(op)
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let first = self.arith()?;
        let mut rest = Vec::new();
        while let Some(op) = self.comparison_op() {
            rest.push((op, self.arith()?));
        }
        if rest.is_empty() {
            return Ok(first);
        }
        Ok(Expr { span: first.span, kind: ExprKind::Compare { first: Box::new(first), rest } })
    }

    fn arith(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek_tok() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => break,
            };
            self.advance();
            let right = self.term()?;
            left = binary(op, left, right);
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek_tok() {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                Tok::Op("//") => BinOp::FloorDiv,
                Tok::Op("%") => BinOp::Mod,
                _ => break,
            };
            self.advance();
            let right = self.unary()?;
            left = binary(op, left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.at_op("-") {
            let span = self.advance().span;
            self.enter()?;
            let operand = self.unary();
            self.leave();
            return Ok(Expr { span, kind: ExprKind::Unary { op: UnaryOp::Neg, operand: Box::new(operand?) } });
        }
        if self.at_op("+") {
            return self.error("unary '+' is not supported");
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.postfix()?;
        if self.eat_op("**") {
            self.enter()?;
            let exp = self.unary();
            self.leave();
            return Ok(binary(BinOp::Pow, base, exp?));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut expr = self.atom()?;
        loop {
            if self.eat_op(".") {
                let name = self.identifier()?;
                expr = Expr { span: expr.span, kind: ExprKind::Attribute { object: Box::new(expr), name } };
            } else if self.at_op("(") {
                self.advance();
                let (args, kwargs) = self.call_args()?;
                expr = Expr { span: expr.span, kind: ExprKind::Call { func: Box::new(expr), args, kwargs } };
            } else if self.at_op("[") {
                self.advance();
                if self.at_op(":") {
                    return self.error("slices are not supported");
                }
                let index = self.expression()?;
                if self.at_op(":") {
                    return self.error("slices are not supported");
                }
                self.expect_op("]")?;
                expr =
                    Expr { span: expr.span, kind: ExprKind::Index { object: Box::new(expr), index: Box::new(index) } };
            } else {
                return Ok(expr);
            }
        }
    }

    fn call_args(&mut self) -> Result<(Vec<Expr>, KeywordArgs), SyntaxError> {
        let mut args = Vec::new();
        let mut kwargs: Vec<(String, Expr)> = Vec::new();
        while !self.at_op(")") {
            if self.at_op("*") || self.at_op("**") {
                return self.error("star-arguments are not supported");
            }
            let is_kw =
                matches!(self.peek_tok(), Tok::Name(n) if !is_keyword(n)) && matches!(self.peek_nth(1), Tok::Op("="));
            if is_kw {
                let span = self.peek().span;
                let name = self.identifier()?;
                self.advance();
                if kwargs.iter().any(|(k, _)| *k == name) {
                    return Err(SyntaxError::new(span, format!("keyword argument repeated: {name}")));
                }
                kwargs.push((name, self.expression()?));
            } else {
                if !kwargs.is_empty() {
                    return self.error("positional argument follows keyword argument");
                }
                args.push(self.expression()?);
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok((args, kwargs))
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let token = self.peek().clone();
        let span = token.span;
        let kind = match token.tok {
            Tok::Int(v) => {
                self.advance();
                ExprKind::Int(v)
            }
            Tok::Float(v) => {
                self.advance();
                ExprKind::Float(v)
            }
            Tok::Str(s) => {
                self.advance();
                let mut s = s;
                // Adjacent literals concatenate.
                while let Tok::Str(next) = self.peek_tok() {
                    s.push_str(next);
                    self.advance();
                }
                ExprKind::Str(s)
            }
            Tok::Name(ref n) if n == "True" => {
                self.advance();
                ExprKind::Bool(true)
            }
            Tok::Name(ref n) if n == "False" => {
                self.advance();
                ExprKind::Bool(false)
            }
            Tok::Name(ref n) if n == "None" => {
                self.advance();
                ExprKind::None
            }
            Tok::Name(ref n) if !is_keyword(n) => {
                self.advance();
                ExprKind::Name(n.clone())
            }
            Tok::Op("(") => {
                self.advance();
                if self.at_op(")") {
                    return self.error("tuples are not supported");
                }
                let inner = self.expression()?;
                if self.at_op(",") {
                    return self.error("tuples are not supported");
                }
                self.expect_op(")")?;
                return Ok(inner);
            }
            Tok::Op("[") => {
                self.advance();
                let mut items = Vec::new();
                while !self.at_op("]") {
                    items.push(self.expression()?);
                    if self.at_kw("for") {
                        return self.error("comprehensions are not supported");
                    }
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op("]")?;
                ExprKind::List(items)
            }
            Tok::Op("{") => {
                self.advance();
                let mut entries = Vec::new();
                while !self.at_op("}") {
                    let key = self.expression()?;
                    if !self.at_op(":") {
                        return self.unexpected("':' in dict display");
                    }
                    self.advance();
                    let value = self.expression()?;
                    entries.push((key, value));
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op("}")?;
                ExprKind::Dict(entries)
            }
            _ => return self.unexpected("expression"),
        };
        Ok(Expr { kind, span })
    }
}

fn binary(op: BinOp, left: Expr, right: Expr) -> Expr {
    Expr { span: left.span, kind: ExprKind::Binary { op, left: Box::new(left), right: Box::new(right) } }
}

fn logical(op: LogicalOp, left: Expr, right: Expr) -> Expr {
    Expr { span: left.span, kind: ExprKind::Logical { op, left: Box::new(left), right: Box::new(right) } }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Name(n) => format!("'{n}'"),
        Tok::Int(v) => v.to_string(),
        Tok::Float(v) => v.to_string(),
        Tok::Str(_) => "string literal".into(),
        Tok::Op(o) => format!("'{o}'"),
        Tok::Newline => "end of line".into(),
        Tok::Indent => "indent".into(),
        Tok::Dedent => "dedent".into(),
        Tok::Eof => "end of input".into(),
    }
}
