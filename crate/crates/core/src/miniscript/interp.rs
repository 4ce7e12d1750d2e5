// SPDX-License-Identifier: Apache-2.0
//! Tree-walking evaluator with step, call-depth and flow-call budgets.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::ast::*;
use super::host::{ApiTrace, CallSummary, FlowHandle, TraceArg, TraceEntry};
use super::value::{Builtin, Closure, Value};
use crate::dse::{self, ParamRange, ParamSpace, TrialFailure, TuneError, TuneResult};
use crate::flowsim::{Catalog, FlowError, FlowSession, ParamMap, ParamValue, StageId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeLimits {
    pub max_steps: u64,
    pub max_call_depth: usize,
    pub max_flow_runs: u64,
}

impl Default for RuntimeLimits {
    fn default() -> Self {
        RuntimeLimits { max_steps: 1_000_000, max_call_depth: 64, max_flow_runs: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "error", rename_all = "snake_case")]
pub enum FaultKind {
    NameError,
    TypeFault,
    IndexFault,
    KeyFault,
    DivisionByZero,
    FlowError(FlowError),
    StepBudgetExceeded,
    CallDepthExceeded,
    FlowBudgetExceeded,
}

impl FaultKind {
    /// Budget faults end the whole run, even inside a tuning trial.
    pub fn is_budget(&self) -> bool {
        matches!(self, FaultKind::StepBudgetExceeded | FaultKind::CallDepthExceeded | FaultKind::FlowBudgetExceeded)
    }

    pub fn name(&self) -> &'static str {
        match self {
            FaultKind::NameError => "NameError",
            FaultKind::TypeFault => "TypeFault",
            FaultKind::IndexFault => "IndexFault",
            FaultKind::KeyFault => "KeyFault",
            FaultKind::DivisionByZero => "DivisionByZero",
            FaultKind::FlowError(_) => "FlowError",
            FaultKind::StepBudgetExceeded => "StepBudgetExceeded",
            FaultKind::CallDepthExceeded => "CallDepthExceeded",
            FaultKind::FlowBudgetExceeded => "FlowBudgetExceeded",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{}: {message} at {span}", kind.name())]
pub struct RuntimeFault {
    #[serde(flatten)]
    pub kind: FaultKind,
    pub message: String,
    pub span: Span,
}

/// Host-side bindings available to a script.
#[derive(Clone, Debug)]
pub struct HostEnv {
    pub catalog: Arc<Catalog>,
}

impl Default for HostEnv {
    fn default() -> Self {
        HostEnv { catalog: Catalog::builtin() }
    }
}

/// Notified around every flow-API call.
pub trait FlowObserver {
    fn call_started(&mut self, _handle: u32, _api: &str, _args: &BTreeMap<String, TraceArg>) {}
    fn call_finished(&mut self, _entry: &TraceEntry) {}
}

struct NoObserver;
impl FlowObserver for NoObserver {}

/// Everything a run produced, including partial results when it faulted.
#[derive(Debug)]
pub struct Execution {
    pub globals: IndexMap<String, Value>,
    pub trace: ApiTrace,
    pub output: String,
    pub tunes: Vec<TuneResult>,
    pub steps: u64,
    pub fault: Option<RuntimeFault>,
}

impl Execution {
    pub fn is_ok(&self) -> bool {
        self.fault.is_none()
    }
}

pub fn interpret(program: &Program, env: &HostEnv, limits: &RuntimeLimits) -> Execution {
    interpret_observed(program, env, limits, &mut NoObserver)
}

pub fn interpret_observed(
    program: &Program,
    env: &HostEnv,
    limits: &RuntimeLimits,
    observer: &mut dyn FlowObserver,
) -> Execution {
    let mut it = Interp {
        env,
        limits,
        steps: 0,
        depth: 0,
        flow_calls: 0,
        globals: IndexMap::new(),
        frames: Vec::new(),
        trace: Vec::new(),
        output: Vec::new(),
        next_handle: 0,
        tunes: Vec::new(),
        observer,
    };
    let fault = it.exec_block(&program.statements).err();
    Execution {
        globals: it.globals,
        trace: ApiTrace { entries: it.trace },
        output: it.output.join("\n"),
        tunes: it.tunes,
        steps: it.steps,
        fault,
    }
}

enum Flow {
    Normal,
    Break,
    Continue,
    Return(Value),
}

type Res<T> = Result<T, RuntimeFault>;

fn fault<T>(kind: FaultKind, span: Span, message: impl Into<String>) -> Res<T> {
    Err(RuntimeFault { kind, message: message.into(), span })
}

fn type_fault<T>(span: Span, message: impl Into<String>) -> Res<T> {
    fault(FaultKind::TypeFault, span, message)
}

const FLOW_METHODS: [&str; 9] = [
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

struct Interp<'a> {
    env: &'a HostEnv,
    limits: &'a RuntimeLimits,
    steps: u64,
    depth: usize,
    flow_calls: u64,
    globals: IndexMap<String, Value>,
    frames: Vec<HashMap<String, Value>>,
    trace: Vec<TraceEntry>,
    output: Vec<String>,
    next_handle: u32,
    tunes: Vec<TuneResult>,
    observer: &'a mut dyn FlowObserver,
}

impl Interp<'_> {
    /// Charges are taken before the work they pay for; an over-budget charge
    /// refuses the work and leaves the counter at the budget.
    fn charge(&mut self, n: u64, span: Span) -> Res<()> {
        let total = self.steps.saturating_add(n);
        if total > self.limits.max_steps {
            self.steps = self.limits.max_steps;
            return fault(
                FaultKind::StepBudgetExceeded,
                span,
                format!("exceeded {} evaluation steps", self.limits.max_steps),
            );
        }
        self.steps = total;
        Ok(())
    }

    fn tick(&mut self, span: Span) -> Res<()> {
        self.charge(1, span)
    }

    // ---- scopes ----

    fn lookup(&self, name: &str, span: Span) -> Res<Value> {
        if let Some(frame) = self.frames.last() {
            if let Some(v) = frame.get(name) {
                return Ok(v.clone());
            }
        }
        if let Some(v) = self.globals.get(name) {
            return Ok(v.clone());
        }
        if let Some(b) = Builtin::lookup(name) {
            return Ok(Value::Builtin(b));
        }
        fault(FaultKind::NameError, span, format!("name '{name}' is not defined"))
    }

    fn bind(&mut self, name: &str, value: Value) {
        match self.frames.last_mut() {
            Some(frame) => {
                frame.insert(name.to_string(), value);
            }
            None => {
                self.globals.insert(name.to_string(), value);
            }
        }
    }

    // ---- statements ----

    fn exec_block(&mut self, stmts: &[Stmt]) -> Res<Flow> {
        for stmt in stmts {
            match self.exec(stmt)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec(&mut self, stmt: &Stmt) -> Res<Flow> {
        self.tick(stmt.span)?;
        match &stmt.kind {
            StmtKind::Assign { target, value } => {
                let v = self.eval(value)?;
                self.assign(target, v, stmt.span)?;
            }
            StmtKind::Expr(e) => {
                self.eval(e)?;
            }
            StmtKind::FunctionDef(def) => {
                let mut defaults = Vec::with_capacity(def.params.len());
                for p in &def.params {
                    defaults.push(match &p.default {
                        Some(e) => Some(self.eval(e)?),
                        None => None,
                    });
                }
                let closure = Closure { def: def.clone(), defaults };
                self.bind(&def.name, Value::Function(Rc::new(closure)));
            }
            StmtKind::Return(value) => {
                let v = match value {
                    Some(e) => self.eval(e)?,
                    None => Value::None,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::For { var, iter, body } => {
                let seq = self.eval(iter)?;
                let items = self.iterate(seq, iter.span)?;
                for item in items {
                    self.bind(var, item);
                    match self.exec_block(body)? {
                        Flow::Break => break,
                        Flow::Continue | Flow::Normal => {}
                        ret @ Flow::Return(_) => return Ok(ret),
                    }
                }
            }
            StmtKind::While { cond, body } => loop {
                if !self.eval(cond)?.truthy() {
                    break;
                }
                match self.exec_block(body)? {
                    Flow::Break => break,
                    Flow::Continue | Flow::Normal => {}
                    ret @ Flow::Return(_) => return Ok(ret),
                }
            },
            StmtKind::If { branches, orelse } => {
                for (cond, body) in branches {
                    if self.eval(cond)?.truthy() {
                        return self.exec_block(body);
                    }
                }
                if let Some(body) = orelse {
                    return self.exec_block(body);
                }
            }
            StmtKind::Break => return Ok(Flow::Break),
            StmtKind::Continue => return Ok(Flow::Continue),
            StmtKind::Pass | StmtKind::Import(_) | StmtKind::FromImport { .. } => {}
        }
        Ok(Flow::Normal)
    }

    fn assign(&mut self, target: &Target, value: Value, span: Span) -> Res<()> {
        match target {
            Target::Name(n) => {
                self.bind(n, value);
                Ok(())
            }
            Target::Index { object, index } => {
                let obj = self.eval(object)?;
                let idx = self.eval(index)?;
                match (&obj, &idx) {
                    (Value::List(items), Value::Int(i)) => {
                        let mut items = items.borrow_mut();
                        let pos = normalize_index(*i, items.len()).ok_or(()).or_else(|_| {
                            fault(FaultKind::IndexFault, index.span, "list assignment index out of range")
                        })?;
                        items[pos] = value;
                        Ok(())
                    }
                    (Value::Map(entries), Value::Text(k)) => {
                        entries.borrow_mut().insert(k.to_string(), value);
                        Ok(())
                    }
                    (Value::Map(_), other) => {
                        type_fault(index.span, format!("dict keys must be str, not {}", other.type_name()))
                    }
                    (other, _) => {
                        type_fault(span, format!("'{}' object does not support item assignment", other.type_name()))
                    }
                }
            }
            Target::Attribute { object, name } => {
                let obj = self.eval(object)?;
                type_fault(span, format!("cannot set attribute '{name}' on '{}' object", obj.type_name()))
            }
        }
    }

    fn iterate(&mut self, v: Value, span: Span) -> Res<Vec<Value>> {
        match v {
            Value::List(items) => Ok(items.borrow().clone()),
            Value::Map(entries) => Ok(entries.borrow().keys().map(|k| Value::text(k)).collect()),
            Value::Text(s) => Ok(s.chars().map(|c| Value::text(&c.to_string())).collect()),
            other => type_fault(span, format!("'{}' object is not iterable", other.type_name())),
        }
    }

    // ---- expressions ----

    fn eval(&mut self, e: &Expr) -> Res<Value> {
        self.tick(e.span)?;
        match &e.kind {
            ExprKind::Int(v) => Ok(Value::Int(*v)),
            ExprKind::Float(v) => Ok(Value::Real(*v)),
            ExprKind::Str(s) => Ok(Value::text(s)),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::None => Ok(Value::None),
            ExprKind::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    out.push(self.eval(item)?);
                }
                Ok(Value::list(out))
            }
            ExprKind::Dict(entries) => {
                let mut out = IndexMap::new();
                for (k, v) in entries {
                    let key = match self.eval(k)? {
                        Value::Text(s) => s.to_string(),
                        other => {
                            return type_fault(k.span, format!("dict keys must be str, not {}", other.type_name()))
                        }
                    };
                    let value = self.eval(v)?;
                    out.insert(key, value);
                }
                Ok(Value::map(out))
            }
            ExprKind::Name(n) => self.lookup(n, e.span),
            ExprKind::Attribute { object, name } => {
                let obj = self.eval(object)?;
                self.attribute(obj, name, e.span)
            }
            ExprKind::Call { func, args, kwargs } => {
                let f = self.eval(func)?;
                let mut argv = Vec::with_capacity(args.len());
                for a in args {
                    argv.push(self.eval(a)?);
                }
                let mut kwv = Vec::with_capacity(kwargs.len());
                for (k, v) in kwargs {
                    kwv.push((k.clone(), self.eval(v)?));
                }
                self.call(f, argv, kwv, e.span)
            }
            ExprKind::Index { object, index } => {
                let obj = self.eval(object)?;
                let idx = self.eval(index)?;
                self.index(obj, idx, index.span)
            }
            ExprKind::Unary { op, operand } => {
                let v = self.eval(operand)?;
                match op {
                    UnaryOp::Not => Ok(Value::Bool(!v.truthy())),
                    UnaryOp::Neg => match v {
                        Value::Int(i) => {
                            i.checked_neg().map(Value::Int).map_or_else(|| type_fault(e.span, "integer overflow"), Ok)
                        }
                        Value::Real(r) => Ok(Value::Real(-r)),
                        other => type_fault(e.span, format!("bad operand type for unary -: '{}'", other.type_name())),
                    },
                }
            }
            ExprKind::Binary { op, left, right } => {
                let l = self.eval(left)?;
                let r = self.eval(right)?;
                self.binary(*op, l, r, e.span)
            }
            ExprKind::Compare { first, rest } => {
                let mut left = self.eval(first)?;
                for (op, operand) in rest {
                    let right = self.eval(operand)?;
                    if !compare(*op, &left, &right, operand.span)? {
                        return Ok(Value::Bool(false));
                    }
                    left = right;
                }
                Ok(Value::Bool(true))
            }
            ExprKind::Logical { op, left, right } => {
                let l = self.eval(left)?;
                match (op, l.truthy()) {
                    (LogicalOp::And, false) | (LogicalOp::Or, true) => Ok(l),
                    _ => self.eval(right),
                }
            }
        }
    }

    fn attribute(&mut self, obj: Value, name: &str, span: Span) -> Res<Value> {
        let ok = match &obj {
            Value::FlowHandle(_) => FLOW_METHODS.contains(&name),
            Value::List(_) => name == "append",
            Value::Map(_) => matches!(name, "get" | "keys" | "values"),
            // `chateda.chateda()` is accepted as a constructor spelling.
            Value::Builtin(Builtin::Chateda) if name == "chateda" => return Ok(obj),
            _ => false,
        };
        if !ok {
            return fault(
                FaultKind::NameError,
                span,
                format!("'{}' object has no attribute '{name}'", obj.type_name()),
            );
        }
        Ok(Value::Method { receiver: Box::new(obj), name: Rc::from(name) })
    }

    fn index(&mut self, obj: Value, idx: Value, span: Span) -> Res<Value> {
        match (&obj, &idx) {
            (Value::List(items), Value::Int(i)) => {
                let items = items.borrow();
                match normalize_index(*i, items.len()) {
                    Some(p) => Ok(items[p].clone()),
                    None => fault(FaultKind::IndexFault, span, "list index out of range"),
                }
            }
            (Value::Text(s), Value::Int(i)) => {
                let chars: Vec<char> = s.chars().collect();
                match normalize_index(*i, chars.len()) {
                    Some(p) => Ok(Value::text(&chars[p].to_string())),
                    None => fault(FaultKind::IndexFault, span, "string index out of range"),
                }
            }
            (Value::Map(entries), Value::Text(k)) => match entries.borrow().get(&**k) {
                Some(v) => Ok(v.clone()),
                None => fault(FaultKind::KeyFault, span, format!("key {} not found", idx.repr())),
            },
            (Value::List(_) | Value::Text(_), other) => {
                type_fault(span, format!("indices must be integers, not {}", other.type_name()))
            }
            (Value::Map(_), _) => fault(FaultKind::KeyFault, span, format!("key {} not found", idx.repr())),
            (other, _) => type_fault(span, format!("'{}' object is not subscriptable", other.type_name())),
        }
    }

    fn binary(&mut self, op: BinOp, l: Value, r: Value, span: Span) -> Res<Value> {
        use Value::{Int, Real};
        let unsupported = |l: &Value, r: &Value| {
            type_fault(
                span,
                format!("unsupported operand types for {}: '{}' and '{}'", op.symbol(), l.type_name(), r.type_name()),
            )
        };
        let overflow = || type_fault(span, "integer overflow");
        match (op, &l, &r) {
            (BinOp::Add, Value::Text(a), Value::Text(b)) => {
                self.charge((a.len() + b.len()) as u64, span)?;
                Ok(Value::text(&format!("{a}{b}")))
            }
            (BinOp::Add, Value::List(a), Value::List(b)) => {
                self.charge((a.borrow().len() + b.borrow().len()) as u64, span)?;
                let mut out = a.borrow().clone();
                out.extend(b.borrow().iter().cloned());
                Ok(Value::list(out))
            }
            (BinOp::Mul, Value::Text(s), Int(n)) | (BinOp::Mul, Int(n), Value::Text(s)) => {
                let n = (*n).max(0) as u64;
                self.charge(n.saturating_mul(s.len() as u64), span)?;
                Ok(Value::text(&s.repeat(n as usize)))
            }
            (BinOp::Mul, Value::List(items), Int(n)) | (BinOp::Mul, Int(n), Value::List(items)) => {
                let n = (*n).max(0) as u64;
                let items = items.borrow();
                self.charge(n.saturating_mul(items.len() as u64), span)?;
                let mut out = Vec::with_capacity(items.len() * n as usize);
                for _ in 0..n {
                    out.extend(items.iter().cloned());
                }
                Ok(Value::list(out))
            }
            (_, Int(a), Int(b)) => {
                let (a, b) = (*a, *b);
                match op {
                    BinOp::Add => a.checked_add(b).map(Int).map_or_else(overflow, Ok),
                    BinOp::Sub => a.checked_sub(b).map(Int).map_or_else(overflow, Ok),
                    BinOp::Mul => a.checked_mul(b).map(Int).map_or_else(overflow, Ok),
                    BinOp::Div => {
                        if b == 0 {
                            return fault(FaultKind::DivisionByZero, span, "division by zero");
                        }
                        Ok(Real(a as f64 / b as f64))
                    }
                    BinOp::FloorDiv | BinOp::Mod => {
                        if b == 0 {
                            return fault(FaultKind::DivisionByZero, span, "integer division or modulo by zero");
                        }
                        let (q, m) = match (a.checked_div(b), a.checked_rem(b)) {
                            (Some(q), Some(m)) => (q, m),
                            _ => return overflow(),
                        };
                        // Python floors toward negative infinity.
                        let (q, m) = if m != 0 && ((m < 0) != (b < 0)) { (q - 1, m + b) } else { (q, m) };
                        Ok(Int(if op == BinOp::FloorDiv { q } else { m }))
                    }
                    BinOp::Pow => {
                        if b >= 0 {
                            u32::try_from(b).ok().and_then(|e| a.checked_pow(e)).map(Int).map_or_else(overflow, Ok)
                        } else if a == 0 {
                            fault(FaultKind::DivisionByZero, span, "0 cannot be raised to a negative power")
                        } else {
                            Ok(Real((a as f64).powf(b as f64)))
                        }
                    }
                }
            }
            (_, Int(_) | Real(_), Int(_) | Real(_)) => {
                let a = l.as_f64().expect("numeric");
                let b = r.as_f64().expect("numeric");
                let v = match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return fault(FaultKind::DivisionByZero, span, "float division by zero");
                        }
                        a / b
                    }
                    BinOp::FloorDiv => {
                        if b == 0.0 {
                            return fault(FaultKind::DivisionByZero, span, "float floor division by zero");
                        }
                        (a / b).floor()
                    }
                    BinOp::Mod => {
                        if b == 0.0 {
                            return fault(FaultKind::DivisionByZero, span, "float modulo");
                        }
                        let m = a % b;
                        if m != 0.0 && ((m < 0.0) != (b < 0.0)) {
                            m + b
                        } else {
                            m
                        }
                    }
                    BinOp::Pow => {
                        if a == 0.0 && b < 0.0 {
                            return fault(FaultKind::DivisionByZero, span, "0.0 cannot be raised to a negative power");
                        }
                        let v = a.powf(b);
                        if v.is_nan() && !a.is_nan() && !b.is_nan() {
                            return type_fault(span, "power of a negative number has a complex result");
                        }
                        v
                    }
                };
                Ok(Real(v))
            }
            _ => unsupported(&l, &r),
        }
    }

    // ---- calls ----

    fn call(&mut self, f: Value, args: Vec<Value>, kwargs: Vec<(String, Value)>, span: Span) -> Res<Value> {
        match f {
            Value::Function(closure) => self.call_function(&closure, args, kwargs, span),
            Value::Builtin(b) => self.call_builtin(b, args, kwargs, span),
            Value::Method { receiver, name } => self.call_method(*receiver, &name, args, kwargs, span),
            other => type_fault(span, format!("'{}' object is not callable", other.type_name())),
        }
    }

    fn call_function(
        &mut self,
        closure: &Closure,
        args: Vec<Value>,
        kwargs: Vec<(String, Value)>,
        span: Span,
    ) -> Res<Value> {
        let def = &closure.def;
        if args.len() > def.params.len() {
            return type_fault(
                span,
                format!("{}() takes {} positional arguments but {} were given", def.name, def.params.len(), args.len()),
            );
        }
        let mut slots: Vec<Option<Value>> = vec![None; def.params.len()];
        for (slot, a) in slots.iter_mut().zip(args) {
            *slot = Some(a);
        }
        for (k, v) in kwargs {
            let Some(i) = def.params.iter().position(|p| p.name == k) else {
                return type_fault(span, format!("{}() got an unexpected keyword argument '{k}'", def.name));
            };
            if slots[i].is_some() {
                return type_fault(span, format!("{}() got multiple values for argument '{k}'", def.name));
            }
            slots[i] = Some(v);
        }
        let mut frame = HashMap::with_capacity(def.params.len());
        for ((param, slot), default) in def.params.iter().zip(slots).zip(&closure.defaults) {
            let v = match slot.or_else(|| default.clone()) {
                Some(v) => v,
                None => return type_fault(span, format!("{}() missing required argument '{}'", def.name, param.name)),
            };
            frame.insert(param.name.clone(), v);
        }
        if self.depth >= self.limits.max_call_depth {
            return fault(
                FaultKind::CallDepthExceeded,
                span,
                format!("call depth exceeded {}", self.limits.max_call_depth),
            );
        }
        self.depth += 1;
        self.frames.push(frame);
        let result = self.exec_block(&def.body);
        self.frames.pop();
        self.depth -= 1;
        match result? {
            Flow::Return(v) => Ok(v),
            _ => Ok(Value::None),
        }
    }

    fn call_builtin(&mut self, b: Builtin, args: Vec<Value>, kwargs: Vec<(String, Value)>, span: Span) -> Res<Value> {
        if b != Builtin::Tune && !kwargs.is_empty() {
            return type_fault(span, format!("{}() takes no keyword arguments", b.name()));
        }
        match b {
            Builtin::Chateda => {
                if !args.is_empty() {
                    return type_fault(span, "chateda() takes no arguments");
                }
                let id = self.next_handle;
                self.next_handle += 1;
                Ok(Value::FlowHandle(Rc::new(RefCell::new(FlowHandle { id, session: None }))))
            }
            Builtin::Print => {
                let line: Vec<String> = args.iter().map(Value::display).collect();
                let line = line.join(" ");
                self.charge(line.len() as u64, span)?;
                self.output.push(line);
                Ok(Value::None)
            }
            Builtin::Len => match args.as_slice() {
                [Value::List(items)] => Ok(Value::Int(items.borrow().len() as i64)),
                [Value::Map(entries)] => Ok(Value::Int(entries.borrow().len() as i64)),
                [Value::Text(s)] => Ok(Value::Int(s.chars().count() as i64)),
                [other] => type_fault(span, format!("object of type '{}' has no len()", other.type_name())),
                _ => type_fault(span, "len() takes exactly one argument"),
            },
            Builtin::Abs => match args.as_slice() {
                [Value::Int(i)] => {
                    i.checked_abs().map(Value::Int).map_or_else(|| type_fault(span, "integer overflow"), Ok)
                }
                [Value::Real(r)] => Ok(Value::Real(r.abs())),
                [other] => type_fault(span, format!("bad operand type for abs(): '{}'", other.type_name())),
                _ => type_fault(span, "abs() takes exactly one argument"),
            },
            Builtin::Range => {
                let ints: Vec<i64> = args
                    .iter()
                    .map(|a| match a {
                        Value::Int(i) => Ok(*i),
                        other => type_fault(span, format!("range() arguments must be int, not {}", other.type_name())),
                    })
                    .collect::<Res<_>>()?;
                let (start, stop, step) = match ints.as_slice() {
                    [stop] => (0, *stop, 1),
                    [start, stop] => (*start, *stop, 1),
                    [start, stop, step] => (*start, *stop, *step),
                    _ => return type_fault(span, "range() expects 1 to 3 arguments"),
                };
                if step == 0 {
                    return type_fault(span, "range() step must not be zero");
                }
                let len = if step > 0 {
                    if stop > start {
                        ((stop as i128 - start as i128 - 1) / step as i128 + 1) as u64
                    } else {
                        0
                    }
                } else if start > stop {
                    ((start as i128 - stop as i128 - 1) / (-(step as i128)) + 1) as u64
                } else {
                    0
                };
                self.charge(len, span)?;
                let values = (0..len).map(|k| Value::Int(start + k as i64 * step)).collect();
                Ok(Value::list(values))
            }
            Builtin::Min | Builtin::Max => {
                let items = match args.as_slice() {
                    [] => return type_fault(span, format!("{}() expects at least one argument", b.name())),
                    [single] => self.iterate(single.clone(), span)?,
                    _ => args,
                };
                let mut iter = items.into_iter();
                let Some(mut best) = iter.next() else {
                    return type_fault(span, format!("{}() arg is an empty sequence", b.name()));
                };
                for v in iter {
                    let better = if b == Builtin::Min {
                        compare(CmpOp::Lt, &v, &best, span)?
                    } else {
                        compare(CmpOp::Gt, &v, &best, span)?
                    };
                    if better {
                        best = v;
                    }
                }
                Ok(best)
            }
            Builtin::Tune => self.tune(args, kwargs, span),
        }
    }

    fn call_method(
        &mut self,
        receiver: Value,
        name: &str,
        args: Vec<Value>,
        kwargs: Vec<(String, Value)>,
        span: Span,
    ) -> Res<Value> {
        match receiver {
            Value::FlowHandle(handle) => self.flow_call(&handle, name, args, kwargs, span),
            Value::List(items) => {
                if !kwargs.is_empty() || args.len() != 1 {
                    return type_fault(span, "append() takes exactly one argument");
                }
                items.borrow_mut().extend(args);
                Ok(Value::None)
            }
            Value::Map(entries) => {
                if !kwargs.is_empty() {
                    return type_fault(span, format!("{name}() takes no keyword arguments"));
                }
                let entries = entries.borrow();
                match (name, args.as_slice()) {
                    ("keys", []) => Ok(Value::list(entries.keys().map(|k| Value::text(k)).collect())),
                    ("values", []) => Ok(Value::list(entries.values().cloned().collect())),
                    ("get", [Value::Text(k)]) => Ok(entries.get(&**k).cloned().unwrap_or(Value::None)),
                    ("get", [Value::Text(k), default]) => {
                        Ok(entries.get(&**k).cloned().unwrap_or_else(|| default.clone()))
                    }
                    _ => type_fault(span, format!("bad arguments to dict.{name}()")),
                }
            }
            other => type_fault(span, format!("'{}' object is not callable", other.type_name())),
        }
    }

    // ---- flow API ----

    fn flow_call(
        &mut self,
        handle: &Rc<RefCell<FlowHandle>>,
        api: &str,
        args: Vec<Value>,
        kwargs: Vec<(String, Value)>,
        span: Span,
    ) -> Res<Value> {
        let positional: &[&str] = match api {
            "setup" => &["design_name", "platform"],
            "get_metric" => &["stage", "metrics"],
            other => StageId::from_api_name(other).expect("flow method").parameters(),
        };
        if args.len() > positional.len() {
            return type_fault(span, format!("{api}() takes at most {} positional arguments", positional.len()));
        }
        let mut named: Vec<(String, Value)> = positional.iter().map(|n| n.to_string()).zip(args).collect();
        for (k, v) in kwargs {
            if named.iter().any(|(n, _)| *n == k) {
                return type_fault(span, format!("{api}() got multiple values for argument '{k}'"));
            }
            named.push((k, v));
        }

        // get_metric with a single metric name returns a scalar.
        let mut scalar = false;
        let mut trace_args = BTreeMap::new();
        for (k, v) in named {
            let arg = match (&*k, v) {
                ("metrics", Value::List(items)) if api == "get_metric" => {
                    let names = items
                        .borrow()
                        .iter()
                        .map(|m| match m {
                            Value::Text(s) => Ok(s.to_string()),
                            other => type_fault(span, format!("metric names must be str, not {}", other.type_name())),
                        })
                        .collect::<Res<Vec<_>>>()?;
                    scalar = names.len() == 1;
                    TraceArg::List(names)
                }
                ("metrics", Value::Text(s)) if api == "get_metric" => {
                    scalar = true;
                    TraceArg::List(vec![s.to_string()])
                }
                (_, Value::Int(i)) => TraceArg::Number(i as f64),
                (_, Value::Real(r)) => TraceArg::Number(r),
                (_, Value::Text(s)) => TraceArg::Text(s.to_string()),
                (_, other) => {
                    return type_fault(span, format!("{api}() argument '{k}' cannot be {}", other.type_name()))
                }
            };
            trace_args.insert(k, arg);
        }
        let required: &[&str] = match api {
            "setup" => &["design_name", "platform"],
            "get_metric" => &["stage", "metrics"],
            _ => &[],
        };
        for r in required {
            match trace_args.get(*r) {
                None => return type_fault(span, format!("{api}() missing required argument '{r}'")),
                Some(TraceArg::Text(_)) if *r != "metrics" => {}
                Some(TraceArg::List(_)) if *r == "metrics" => {}
                Some(_) => return type_fault(span, format!("{api}() argument '{r}' has the wrong type")),
            }
        }

        self.flow_calls += 1;
        if self.flow_calls > self.limits.max_flow_runs {
            return fault(
                FaultKind::FlowBudgetExceeded,
                span,
                format!("exceeded {} flow-API calls", self.limits.max_flow_runs),
            );
        }

        let id = handle.borrow().id;
        self.observer.call_started(id, api, &trace_args);
        let result = {
            let mut h = handle.borrow_mut();
            dispatch(&self.env.catalog, &mut h, api, &trace_args)
        };
        let entry = TraceEntry { handle: id, api: api.to_string(), args: trace_args, result };
        self.observer.call_finished(&entry);
        let value = match &entry.result {
            CallSummary::Failed { error } => {
                let error = error.clone();
                self.trace.push(entry);
                return fault(FaultKind::FlowError(error.clone()), span, error.to_string());
            }
            CallSummary::Metrics { values, .. } if scalar => Value::Real(values[0]),
            CallSummary::Metrics { values, .. } => Value::list(values.iter().map(|v| Value::Real(*v)).collect()),
            CallSummary::Setup { .. } | CallSummary::Stage { .. } => Value::None,
        };
        self.trace.push(entry);
        Ok(value)
    }

    // ---- tuning ----

    fn tune(&mut self, args: Vec<Value>, kwargs: Vec<(String, Value)>, span: Span) -> Res<Value> {
        let mut func = None;
        let mut space = None;
        let mut budget = None;
        let mut positional = args.into_iter();
        func = positional.next().or(func);
        space = positional.next().or(space);
        budget = positional.next().or(budget);
        if positional.next().is_some() {
            return type_fault(span, "tune() takes at most 3 positional arguments");
        }
        for (k, v) in kwargs {
            let slot = match k.as_str() {
                "func" | "fn" | "function" => &mut func,
                "param" | "params" | "space" | "param_space" => &mut space,
                "budget" => &mut budget,
                _ => return type_fault(span, format!("tune() got an unexpected keyword argument '{k}'")),
            };
            if slot.is_some() {
                return type_fault(span, format!("tune() got multiple values for argument '{k}'"));
            }
            *slot = Some(v);
        }
        let Some(func) = func else {
            return type_fault(span, "tune() missing the function to optimize");
        };
        let Some(space) = space else {
            return type_fault(span, "tune() missing the parameter space");
        };
        let budget = match budget {
            None | Some(Value::None) => None,
            Some(Value::Int(n)) if n > 0 => Some(n as usize),
            Some(other) => {
                return type_fault(span, format!("tune() budget must be a positive int, not {}", other.repr()))
            }
        };
        let (space, integral) = param_space(&space, span)?;

        let mut first_fault: Option<RuntimeFault> = None;
        let result = dse::tune_with(&space, budget, |point| {
            let kwargs: Vec<(String, Value)> = point
                .iter()
                .map(|(name, v)| {
                    let value = if integral.contains(name) { Value::Int(v.round() as i64) } else { Value::Real(*v) };
                    (name.clone(), value)
                })
                .collect();
            let outcome = self.call(func.clone(), Vec::new(), kwargs, span).and_then(|v| match v {
                Value::Int(i) => Ok(i as f64),
                Value::Real(r) => Ok(r),
                other => type_fault(span, format!("tune objective must be a number, got {}", other.type_name())),
            });
            match outcome {
                Ok(v) => Ok(v),
                Err(f) if f.kind.is_budget() => Err(TrialFailure::Abort(f)),
                Err(f) => {
                    let msg = f.to_string();
                    first_fault.get_or_insert(f);
                    Err(TrialFailure::Fault(msg))
                }
            }
        });
        let result = match result {
            Ok(r) => r,
            Err(TuneError::Aborted(f)) => return Err(f),
            Err(TuneError::Dse(dse::DseError::NoSuccessfulTrial { .. })) => {
                // Surface the first trial's own fault.
                return Err(first_fault.expect("failed trials recorded a fault"));
            }
            Err(TuneError::Dse(e)) => return type_fault(span, e.to_string()),
        };
        let mut best = IndexMap::new();
        for (name, v) in &result.best.params {
            let value = if integral.contains(name) { Value::Int(v.round() as i64) } else { Value::Real(*v) };
            best.insert(name.clone(), value);
        }
        let mut out = IndexMap::new();
        out.insert("best".to_string(), Value::map(best));
        out.insert("objective".to_string(), Value::Real(result.best.objective.expect("best trial is ok")));
        out.insert("evaluations".to_string(), Value::Int(result.evaluations as i64));
        self.tunes.push(result);
        Ok(Value::map(out))
    }
}

/// Converts `{"name": {"minmax": [lo, hi], "step": s}, ...}` into a space.
/// Axes declared entirely with integers yield integer arguments.
fn param_space(v: &Value, span: Span) -> Res<(ParamSpace, Vec<String>)> {
    let Value::Map(entries) = v else {
        return type_fault(span, format!("parameter space must be a dict, not {}", v.type_name()));
    };
    let mut space = ParamSpace::new();
    let mut integral = Vec::new();
    for (name, spec) in entries.borrow().iter() {
        let bad = || type_fault(span, format!("parameter '{name}' needs {{\"minmax\": [lo, hi], \"step\": s}}"));
        let Value::Map(spec) = spec else { return bad() };
        let spec = spec.borrow();
        let (Some(Value::List(minmax)), Some(step)) = (spec.get("minmax"), spec.get("step")) else {
            return bad();
        };
        let minmax = minmax.borrow();
        let [lo, hi] = minmax.as_slice() else { return bad() };
        let (Some(l), Some(h), Some(s)) = (lo.as_f64(), hi.as_f64(), step.as_f64()) else {
            return bad();
        };
        if let Err(e) = space.push(name, ParamRange::new(l, h, s)) {
            return type_fault(span, e.to_string());
        }
        if matches!((lo, hi, step), (Value::Int(_), Value::Int(_), Value::Int(_))) {
            integral.push(name.clone());
        }
    }
    Ok((space, integral))
}

/// Executes one flow-API call against the handle's session.
fn dispatch(catalog: &Catalog, handle: &mut FlowHandle, api: &str, args: &BTreeMap<String, TraceArg>) -> CallSummary {
    let text = |k: &str| match args.get(k) {
        Some(TraceArg::Text(s)) => Some(s.as_str()),
        _ => None,
    };
    let to_params = |skip: &[&str]| -> ParamMap {
        args.iter()
            .filter(|(k, _)| !skip.contains(&k.as_str()))
            .filter_map(|(k, v)| match v {
                TraceArg::Number(n) => Some((k.clone(), ParamValue::Number(*n))),
                TraceArg::Text(s) => Some((k.clone(), ParamValue::Text(s.clone()))),
                TraceArg::List(_) => None,
            })
            .collect()
    };
    match api {
        "setup" => {
            let (Some(design), Some(platform)) = (text("design_name"), text("platform")) else {
                unreachable!("setup arguments are checked by the caller");
            };
            match FlowSession::setup(catalog, design, platform, to_params(&["design_name", "platform"])) {
                Ok(s) => {
                    handle.session = Some(s);
                    CallSummary::Setup { design: design.to_string(), platform: platform.to_string() }
                }
                Err(error) => CallSummary::Failed { error },
            }
        }
        "get_metric" => {
            let stage = text("stage").unwrap_or_default();
            let Some(TraceArg::List(metrics)) = args.get("metrics") else {
                unreachable!("get_metric arguments are checked by the caller");
            };
            let Some(session) = handle.session.as_ref() else {
                return CallSummary::Failed { error: FlowError::StageNotRun(stage.to_string()) };
            };
            match session.get_metric(stage, metrics) {
                Ok(values) => CallSummary::Metrics { stage: stage.to_string(), values },
                Err(error) => CallSummary::Failed { error },
            }
        }
        other => {
            let stage = StageId::from_api_name(other).expect("flow method");
            let Some(session) = handle.session.as_mut() else {
                return CallSummary::Failed {
                    error: FlowError::StageOrderViolation { expected: StageId::Setup, got: stage },
                };
            };
            match session.run_stage(stage, &to_params(&[])) {
                Ok(metrics) => CallSummary::Stage { stage, metrics },
                Err(error) => CallSummary::Failed { error },
            }
        }
    }
}

fn normalize_index(i: i64, len: usize) -> Option<usize> {
    let len = len as i64;
    let p = if i < 0 { i + len } else { i };
    (0..len).contains(&p).then_some(p as usize)
}

fn compare(op: CmpOp, l: &Value, r: &Value, span: Span) -> Res<bool> {
    match op {
        CmpOp::Eq => return Ok(l.equals(r)),
        CmpOp::Ne => return Ok(!l.equals(r)),
        CmpOp::In | CmpOp::NotIn => {
            let found = match r {
                Value::List(items) => items.borrow().iter().any(|v| v.equals(l)),
                Value::Map(entries) => match l {
                    Value::Text(k) => entries.borrow().contains_key(&**k),
                    _ => false,
                },
                Value::Text(hay) => match l {
                    Value::Text(needle) => hay.contains(&**needle),
                    other => return type_fault(span, format!("'in <str>' requires str, not {}", other.type_name())),
                },
                other => return type_fault(span, format!("argument of type '{}' is not iterable", other.type_name())),
            };
            return Ok(found == (op == CmpOp::In));
        }
        _ => {}
    }
    let ord = match (l, r) {
        (Value::Int(a), Value::Int(b)) => a.partial_cmp(b),
        (Value::Int(_) | Value::Real(_), Value::Int(_) | Value::Real(_)) => {
            l.as_f64().expect("numeric").partial_cmp(&r.as_f64().expect("numeric"))
        }
        (Value::Text(a), Value::Text(b)) => a.partial_cmp(b),
        _ => {
            return type_fault(
                span,
                format!("'{}' not supported between '{}' and '{}'", op.symbol(), l.type_name(), r.type_name()),
            )
        }
    };
    // NaN compares false for every ordering operator.
    let Some(ord) = ord else { return Ok(false) };
    Ok(match op {
        CmpOp::Lt => ord.is_lt(),
        CmpOp::Le => ord.is_le(),
        CmpOp::Gt => ord.is_gt(),
        CmpOp::Ge => ord.is_ge(),
        _ => unreachable!("equality and membership handled above"),
    })
}
