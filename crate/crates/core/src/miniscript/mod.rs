// SPDX-License-Identifier: Apache-2.0
//! A sandboxed Python subset for flow scripts.
//!
//! Scripts reach the outside world only through `chateda()` handles, whose
//! methods drive a [`FlowSession`](crate::flowsim::FlowSession) and are
//! recorded in an [`ApiTrace`]. The grammar lives in `docs/miniscript.ebnf`.

pub mod ast;
pub mod fuzz;
mod host;
mod interp;
mod lexer;
mod parser;
mod unparse;
mod value;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::{Program, Span};
pub use host::{ApiTrace, CallSummary, ReplayMismatch, TraceArg, TraceEntry};
pub use interp::{
    interpret, interpret_observed, Execution, FaultKind, FlowObserver, HostEnv, RuntimeFault, RuntimeLimits,
};
pub use parser::parse;
pub(crate) use unparse::quote;
pub use unparse::{unparse, unparse_expr};
pub use value::{format_real, Value};

/// The first error in a source text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

impl SyntaxError {
    pub(crate) fn new(span: Span, message: impl Into<String>) -> SyntaxError {
        SyntaxError { line: span.line, column: span.column, message: message.into() }
    }
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at {}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for SyntaxError {}

pub fn extract_api_sequence(trace: &ApiTrace) -> Vec<String> {
    trace.api_sequence()
}

/// Parses and runs `source` with the builtin catalog.
pub fn run_source(source: &str, limits: &RuntimeLimits) -> Result<Execution, SyntaxError> {
    let program = parse(source)?;
    Ok(interpret(&program, &HostEnv::default(), limits))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(src: &str) -> Execution {
        run_source(src, &RuntimeLimits::default()).expect("parses")
    }

    #[test]
    fn range_sum() {
        let ex = run("t=0\nfor i in range(4):\n    t = t + i\nprint(t)");
        assert!(ex.is_ok(), "{:?}", ex.fault);
        assert_eq!(ex.output, "6");
    }

    #[test]
    fn malformed_for_header() {
        let err = parse("for x in:").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn step_budget() {
        let limits = RuntimeLimits { max_steps: 1000, ..RuntimeLimits::default() };
        let ex = run_source("while True:\n    pass", &limits).unwrap();
        assert_eq!(ex.fault.unwrap().kind, FaultKind::StepBudgetExceeded);
    }

    #[test]
    fn call_depth() {
        let ex = run("def f(n):\n    return f(n + 1)\nf(0)");
        assert_eq!(ex.fault.unwrap().kind, FaultKind::CallDepthExceeded);
    }

    #[test]
    fn flow_budget() {
        let limits = RuntimeLimits { max_flow_runs: 3, ..RuntimeLimits::default() };
        let src = "e = chateda()\nfor i in range(10):\n    e.setup('gcd', 'sky130')";
        let ex = run_source(src, &limits).unwrap();
        assert_eq!(ex.fault.unwrap().kind, FaultKind::FlowBudgetExceeded);
        assert_eq!(ex.trace.len(), 3);
    }

    #[test]
    fn numeric_semantics() {
        let ex = run("print(7 / 2, 7 // 2, -7 // 2, -7 % 3, 2 ** 10, 1 == 1.0, 3 < 3.5)");
        assert_eq!(ex.output, "3.5 3 -4 2 1024 True True");
        let ex = run("x = 1 / 0");
        assert_eq!(ex.fault.unwrap().kind, FaultKind::DivisionByZero);
        let ex = run("x = 9223372036854775807 + 1");
        assert_eq!(ex.fault.unwrap().kind, FaultKind::TypeFault);
    }

    #[test]
    fn fault_kinds_and_spans() {
        let f = run("x = 1\ny = z").fault.unwrap();
        assert_eq!((f.kind, f.span), (FaultKind::NameError, Span::new(2, 5)));
        assert_eq!(run("[1][3]").fault.unwrap().kind, FaultKind::IndexFault);
        assert_eq!(run("{'a': 1}['b']").fault.unwrap().kind, FaultKind::KeyFault);
        assert_eq!(run("'a' + 1").fault.unwrap().kind, FaultKind::TypeFault);
        assert_eq!(run("import numpy\nnumpy.arange(3)").fault.unwrap().kind, FaultKind::NameError);
    }

    #[test]
    fn containers_and_functions() {
        let src = "\
def f(a, b=10):
    return a * b
xs = []
for k in ['p', 'q']:
    xs.append(k)
m = {'a': f(2), 'b': f(2, b=3)}
m['c'] = len(xs)
x = 5
x += 1
print(xs, m, m.get('z', 0), 'a' in m, max(3, 9, 4), min([2.5, 1]), abs(-4))
print(x)";
        let ex = run(src);
        assert!(ex.is_ok(), "{:?}", ex.fault);
        assert_eq!(ex.output, "['p', 'q'] {'a': 20, 'b': 6, 'c': 2} 0 True 9 1 4\n6");
    }

    #[test]
    fn full_flow_trace() {
        let src = "\
eda = chateda.chateda()
eda.setup(design_name='gcd', platform='sky130', verilog='gcd.v')
eda.run_synthesis()
eda.floorplan(core_utilization=60)
eda.placement()
eda.cts()
eda.global_route()
eda.detail_route()
eda.final_report()
area, = [eda.get_metric('final', ['area'])]
";
        // Tuple unpacking is outside the subset.
        assert!(parse(src).is_err());
        let src = src.replace("area, = [eda.get_metric('final', ['area'])]", "area = eda.get_metric('final', ['area'])\nboth = eda.get_metric('final', ['area', 'power'])\nprint(area == both[0])");
        let ex = run(&src);
        assert!(ex.is_ok(), "{:?}", ex.fault);
        assert_eq!(ex.output, "True");
        assert_eq!(
            extract_api_sequence(&ex.trace),
            [
                "setup",
                "run_synthesis",
                "floorplan",
                "placement",
                "cts",
                "global_route",
                "detail_route",
                "final_report",
                "get_metric",
                "get_metric"
            ]
        );
        ex.trace.replay(&crate::flowsim::Catalog::builtin()).unwrap();
        assert!(extract_api_sequence(&ApiTrace::default()).is_empty());
    }

    #[test]
    fn flow_errors_are_traced_then_raised() {
        let ex = run("e = chateda()\ne.run_synthesis()");
        let f = ex.fault.unwrap();
        assert!(matches!(f.kind, FaultKind::FlowError(crate::flowsim::FlowError::StageOrderViolation { .. })));
        assert_eq!(ex.trace.len(), 1);
        assert!(matches!(ex.trace.entries[0].result, CallSummary::Failed { .. }));
        ex.trace.replay(&crate::flowsim::Catalog::builtin()).unwrap();
    }

    #[test]
    fn tune_builtin() {
        let src = "\
def obj(u, d):
    return (u - 70) ** 2 + (d - 0.7) ** 2
r = tune(obj, {'u': {'minmax': [60, 80], 'step': 5}, 'd': {'minmax': [0.6, 0.8], 'step': 0.1}})
print(r['best']['u'], r['evaluations'])";
        let ex = run(src);
        assert!(ex.is_ok(), "{:?}", ex.fault);
        assert_eq!(ex.output, "70 15");
        assert_eq!(ex.tunes.len(), 1);
        assert!((ex.tunes[0].best.params["d"] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn tune_rejects_list_objective_and_rethrows_first_fault() {
        let src = "def f(u):\n    return [u]\ntune(f, {'u': {'minmax': [1, 2], 'step': 1}})";
        assert_eq!(run(src).fault.unwrap().kind, FaultKind::TypeFault);
        let src = "def f(u):\n    return 1 / (u - u)\ntune(fn=f, space={'u': {'minmax': [1, 2], 'step': 1}})";
        assert_eq!(run(src).fault.unwrap().kind, FaultKind::DivisionByZero);
    }

    #[test]
    fn attribute_assignment_is_a_type_fault() {
        assert_eq!(run("e = chateda()\ne.x = 1").fault.unwrap().kind, FaultKind::TypeFault);
        assert_eq!(run("e = chateda()\ne.nope()").fault.unwrap().kind, FaultKind::NameError);
    }
}
