// SPDX-License-Identifier: Apache-2.0
//! Runtime values.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use indexmap::IndexMap;

use super::ast::FunctionDef;
use super::host::FlowHandle;

/// A user-defined function together with its evaluated defaults.
#[derive(Debug)]
pub struct Closure {
    pub def: FunctionDef,
    pub defaults: Vec<Option<Value>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Chateda,
    Tune,
    Range,
    Len,
    Print,
    Min,
    Max,
    Abs,
}

impl Builtin {
    pub const ALL: [Builtin; 8] = [
        Builtin::Chateda,
        Builtin::Tune,
        Builtin::Range,
        Builtin::Len,
        Builtin::Print,
        Builtin::Min,
        Builtin::Max,
        Builtin::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Chateda => "chateda",
            Builtin::Tune => "tune",
            Builtin::Range => "range",
            Builtin::Len => "len",
            Builtin::Print => "print",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Abs => "abs",
        }
    }

    pub fn lookup(name: &str) -> Option<Builtin> {
        Builtin::ALL.into_iter().find(|b| b.name() == name)
    }
}

#[derive(Clone, Debug)]
pub enum Value {
    Int(i64),
    Real(f64),
    Text(Rc<str>),
    Bool(bool),
    None,
    List(Rc<RefCell<Vec<Value>>>),
    Map(Rc<RefCell<IndexMap<String, Value>>>),
    Function(Rc<Closure>),
    Builtin(Builtin),
    FlowHandle(Rc<RefCell<FlowHandle>>),
    /// A method looked up on a receiver, e.g. `eda.floorplan` or `xs.append`.
    Method {
        receiver: Box<Value>,
        name: Rc<str>,
    },
}

impl Value {
    pub fn text(s: &str) -> Value {
        Value::Text(Rc::from(s))
    }

    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Rc::new(RefCell::new(items)))
    }

    pub fn map(entries: IndexMap<String, Value>) -> Value {
        Value::Map(Rc::new(RefCell::new(entries)))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Real(_) => "float",
            Value::Text(_) => "str",
            Value::Bool(_) => "bool",
            Value::None => "NoneType",
            Value::List(_) => "list",
            Value::Map(_) => "dict",
            Value::Function(_) => "function",
            Value::Builtin(_) => "builtin_function",
            Value::FlowHandle(_) => "chateda",
            Value::Method { .. } => "method",
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::Int(v) => *v != 0,
            Value::Real(v) => *v != 0.0,
            Value::Text(s) => !s.is_empty(),
            Value::Bool(b) => *b,
            Value::None => false,
            Value::List(l) => !l.borrow().is_empty(),
            Value::Map(m) => !m.borrow().is_empty(),
            _ => true,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            _ => None,
        }
    }

    /// Python-style equality: numbers compare across Int/Real, containers
    /// compare structurally, callables and handles by identity.
    pub fn equals(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (a @ (Value::Int(_) | Value::Real(_)), b @ (Value::Int(_) | Value::Real(_))) => a.as_f64() == b.as_f64(),
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::None, Value::None) => true,
            (Value::List(a), Value::List(b)) => {
                Rc::ptr_eq(a, b) || {
                    let (a, b) = (a.borrow(), b.borrow());
                    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.equals(y))
                }
            }
            (Value::Map(a), Value::Map(b)) => {
                Rc::ptr_eq(a, b) || {
                    let (a, b) = (a.borrow(), b.borrow());
                    a.len() == b.len() && a.iter().all(|(k, v)| b.get(k).is_some_and(|w| v.equals(w)))
                }
            }
            (Value::Function(a), Value::Function(b)) => Rc::ptr_eq(a, b),
            (Value::Builtin(a), Value::Builtin(b)) => a == b,
            (Value::FlowHandle(a), Value::FlowHandle(b)) => Rc::ptr_eq(a, b),
            _ => false,
        }
    }

    /// Rendering used by `print` (strings unquoted at the top level).
    pub fn display(&self) -> String {
        match self {
            Value::Text(s) => s.to_string(),
            other => other.repr(),
        }
    }

    pub fn repr(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Real(v) => format_real(*v),
            Value::Text(s) => text_repr(s),
            Value::Bool(true) => "True".into(),
            Value::Bool(false) => "False".into(),
            Value::None => "None".into(),
            Value::List(items) => {
                let items = items.borrow();
                let parts: Vec<String> = items.iter().map(Value::repr).collect();
                format!("[{}]", parts.join(", "))
            }
            Value::Map(entries) => {
                let entries = entries.borrow();
                let parts: Vec<String> =
                    entries.iter().map(|(k, v)| format!("{}: {}", Value::text(k).repr(), v.repr())).collect();
                format!("{{{}}}", parts.join(", "))
            }
            Value::Function(f) => format!("<function {}>", f.def.name),
            Value::Builtin(b) => format!("<built-in function {}>", b.name()),
            Value::FlowHandle(_) => "<chateda>".into(),
            Value::Method { name, .. } => format!("<method {name}>"),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display())
    }
}

/// Single-quoted unless the text contains a single quote and no double quote.
fn text_repr(s: &str) -> String {
    let q = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(q);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == q => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                out.push_str(&format!("\\x{:02x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push(q);
    out
}

/// Formats a float the way Python's `repr` does for the common cases.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let abs = v.abs();
    if abs != 0.0 && !(1e-4..1e16).contains(&abs) {
        let s = format!("{v:e}");
        let (mantissa, exp) = s.split_once('e').expect("exponent form");
        let exp: i32 = exp.parse().expect("integer exponent");
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let s = format!("{v}");
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_formatting_follows_python() {
        assert_eq!(format_real(1.0), "1.0");
        assert_eq!(format_real(0.1), "0.1");
        assert_eq!(format_real(-2.5), "-2.5");
        assert_eq!(format_real(1e20), "1e+20");
        assert_eq!(format_real(1.5e-7), "1.5e-07");
        assert_eq!(format_real(f64::INFINITY), "inf");
    }

    #[test]
    fn reprs() {
        let l = Value::list(vec![Value::Int(1), Value::text("a"), Value::Real(2.0), Value::None]);
        assert_eq!(l.repr(), "[1, 'a', 2.0, None]");
        let mut m = IndexMap::new();
        m.insert("k".to_string(), Value::Bool(true));
        assert_eq!(Value::map(m).repr(), "{'k': True}");
        assert_eq!(Value::text("hi").display(), "hi");
        assert_eq!(Value::text("it's").repr(), "\"it's\"");
        assert_eq!(Value::text("a\nb").repr(), "'a\\nb'");
    }

    #[test]
    fn numeric_equality_crosses_types() {
        assert!(Value::Int(2).equals(&Value::Real(2.0)));
        assert!(!Value::Int(2).equals(&Value::text("2")));
        assert!(!Value::Bool(true).equals(&Value::Int(1)));
    }
}
