// SPDX-License-Identifier: Apache-2.0
//! Random well-formed programs for fuzzing the parser and interpreter.
//!
//! Generated programs respect the parser's context rules (`break` only in
//! loops, `return` only in functions) but are otherwise unconstrained: they
//! loop forever, recurse without bound, build huge ranges and call the flow
//! API out of order.

use rand::Rng;

use super::ast::*;

const NAMES: [&str; 6] = ["a", "b", "c", "x", "y", "eda"];
const FUNCS: [&str; 2] = ["f", "g"];
const FLOW: [&str; 9] = [
    "setup",
    "run_synthesis",
    "floorplan",
    "placement",
    "cts",
    "global_route",
    "detail_route",
    "final_report",
    "get_metric",
];

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    loop_depth: usize,
    in_function: bool,
}

/// A program of up to `max_statements` top-level statements.
pub fn random_program<R: Rng>(rng: &mut R, max_statements: usize) -> Program {
    let mut g = Gen { rng, loop_depth: 0, in_function: false };
    let n = g.rng.random_range(1..=max_statements.max(1));
    let statements = (0..n).map(|_| g.stmt(3)).collect();
    Program { statements }
}

fn s(kind: StmtKind) -> Stmt {
    Stmt { kind, span: Span::default() }
}

fn e(kind: ExprKind) -> Expr {
    Expr { kind, span: Span::default() }
}

impl<R: Rng> Gen<'_, R> {
    fn pick<'a>(&mut self, items: &[&'a str]) -> &'a str {
        items[self.rng.random_range(0..items.len())]
    }

    fn block(&mut self, depth: u32) -> Vec<Stmt> {
        let n = self.rng.random_range(1..=3);
        (0..n).map(|_| self.stmt(depth)).collect()
    }

    fn stmt(&mut self, depth: u32) -> Stmt {
        let choice = if depth == 0 { self.rng.random_range(0..4) } else { self.rng.random_range(0..12) };
        match choice {
            0 => s(StmtKind::Assign { target: Target::Name(self.pick(&NAMES).into()), value: self.expr(2) }),
            1 => s(StmtKind::Expr(self.expr(2))),
            2 => match (self.loop_depth > 0, self.in_function, self.rng.random_range(0..3)) {
                (true, _, 0) => s(StmtKind::Break),
                (true, _, 1) => s(StmtKind::Continue),
                (_, true, _) => s(StmtKind::Return(Some(self.expr(1)))),
                _ => s(StmtKind::Pass),
            },
            3 => s(StmtKind::Expr(self.flow_call())),
            4 | 5 => {
                let var = self.pick(&NAMES).to_string();
                let iter = if self.rng.random_bool(0.5) {
                    let hi = self.rng.random_range(0..2000);
                    call(name("range"), vec![e(ExprKind::Int(hi))], vec![])
                } else {
                    self.expr(2)
                };
                self.loop_depth += 1;
                let body = self.block(depth - 1);
                self.loop_depth -= 1;
                s(StmtKind::For { var, iter, body })
            }
            6 => {
                let cond = if self.rng.random_bool(0.3) { e(ExprKind::Bool(true)) } else { self.expr(2) };
                self.loop_depth += 1;
                let body = self.block(depth - 1);
                self.loop_depth -= 1;
                s(StmtKind::While { cond, body })
            }
            7 | 8 => {
                let n = self.rng.random_range(1..=2);
                let branches = (0..n).map(|_| (self.expr(2), self.block(depth - 1))).collect();
                let orelse = self.rng.random_bool(0.5).then(|| self.block(depth - 1));
                s(StmtKind::If { branches, orelse })
            }
            9 if !self.in_function => {
                let fname = self.pick(&FUNCS).to_string();
                let params = ["p", "q"][..self.rng.random_range(0..=2)]
                    .iter()
                    .map(|p| Param { name: p.to_string(), default: None })
                    .collect();
                let saved = self.loop_depth;
                self.loop_depth = 0;
                self.in_function = true;
                let body = self.block(depth - 1);
                self.in_function = false;
                self.loop_depth = saved;
                s(StmtKind::FunctionDef(FunctionDef { name: fname, params, body }))
            }
            10 => s(StmtKind::Assign {
                target: Target::Index { object: name(self.pick(&NAMES)), index: self.expr(1) },
                value: self.expr(1),
            }),
            _ => s(StmtKind::Assign {
                target: Target::Name(self.pick(&NAMES).into()),
                value: call(name("chateda"), vec![], vec![]),
            }),
        }
    }

    fn flow_call(&mut self) -> Expr {
        let api = self.pick(&FLOW);
        let object = Box::new(name(if self.rng.random_bool(0.8) { "eda" } else { self.pick(&NAMES) }));
        let (args, kwargs) = match api {
            "setup" => {
                (vec![str_lit(self.pick(&["gcd", "aes", "nope"])), str_lit(self.pick(&["sky130", "asap7"]))], vec![])
            }
            "get_metric" => (
                vec![
                    str_lit(self.pick(&["final", "route", "synth", "bogus"])),
                    e(ExprKind::List(vec![str_lit(self.pick(&["area", "power", "wns", "slack"]))])),
                ],
                vec![],
            ),
            "floorplan" if self.rng.random_bool(0.5) => {
                let v = self.rng.random_range(0..120);
                (vec![], vec![("core_utilization".to_string(), e(ExprKind::Int(v)))])
            }
            _ => (vec![], vec![]),
        };
        call(e(ExprKind::Attribute { object, name: api.to_string() }), args, kwargs)
    }

    fn expr(&mut self, depth: u32) -> Expr {
        let leaf = depth == 0 || self.rng.random_bool(0.3);
        if leaf {
            return match self.rng.random_range(0..7) {
                0 => e(ExprKind::Int(self.rng.random_range(0..100))),
                1 => e(ExprKind::Float(self.rng.random_range(0..400) as f64 / 8.0)),
                2 => str_lit(self.pick(&["", "ab", "x\ny", "q\"t"])),
                3 => e(ExprKind::Bool(self.rng.random_bool(0.5))),
                4 => e(ExprKind::None),
                _ => name(self.pick(&NAMES)),
            };
        }
        let d = depth - 1;
        match self.rng.random_range(0..11) {
            0 => e(ExprKind::List((0..self.rng.random_range(0..3)).map(|_| self.expr(d)).collect())),
            1 => e(ExprKind::Dict(
                (0..self.rng.random_range(0..3)).map(|_| (str_lit(self.pick(&["k", "v"])), self.expr(d))).collect(),
            )),
            2 => {
                let f = self.pick(&["f", "g", "len", "abs", "max", "min", "print"]);
                let n = self.rng.random_range(0..3);
                call(name(f), (0..n).map(|_| self.expr(d)).collect(), vec![])
            }
            3 => e(ExprKind::Index { object: Box::new(self.expr(d)), index: Box::new(self.expr(d)) }),
            4 => e(ExprKind::Unary {
                op: if self.rng.random_bool(0.5) { UnaryOp::Neg } else { UnaryOp::Not },
                operand: Box::new(self.expr(d)),
            }),
            5..=7 => {
                let ops = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::FloorDiv, BinOp::Mod, BinOp::Pow];
                e(ExprKind::Binary {
                    op: ops[self.rng.random_range(0..ops.len())],
                    left: Box::new(self.expr(d)),
                    right: Box::new(self.expr(d)),
                })
            }
            8 => {
                let ops = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::In, CmpOp::NotIn];
                let n = self.rng.random_range(1..=2);
                let first = Box::new(self.expr(d));
                let rest = (0..n).map(|_| (ops[self.rng.random_range(0..ops.len())], self.expr(d))).collect();
                e(ExprKind::Compare { first, rest })
            }
            9 => e(ExprKind::Logical {
                op: if self.rng.random_bool(0.5) { LogicalOp::And } else { LogicalOp::Or },
                left: Box::new(self.expr(d)),
                right: Box::new(self.expr(d)),
            }),
            _ => self.flow_call(),
        }
    }
}

fn name(n: &str) -> Expr {
    e(ExprKind::Name(n.to_string()))
}

fn str_lit(v: &str) -> Expr {
    e(ExprKind::Str(v.to_string()))
}

fn call(func: Expr, args: Vec<Expr>, kwargs: Vec<(String, Expr)>) -> Expr {
    e(ExprKind::Call { func: Box::new(func), args, kwargs })
}
