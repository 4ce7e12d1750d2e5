// SPDX-License-Identifier: Apache-2.0
//! The offline oracle backend: keyword intents, regex slot extraction and
//! fixed plan/script templates.

use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;

use super::backend::Backend;
use super::plan::{Plan, Tool};
use super::prompt::{read_prompt, Message, Role};
use super::AgentError;
use crate::flowsim::{Catalog, StageId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleVariant {
    Oracle,
    BrokenCodegen,
    BrokenPlanner,
}

pub struct RuleBackend {
    variant: RuleVariant,
}

impl RuleBackend {
    pub fn new(variant: RuleVariant) -> RuleBackend {
        RuleBackend { variant }
    }
}

impl Backend for RuleBackend {
    fn name(&self) -> &str {
        match self.variant {
            RuleVariant::Oracle => "rule_based",
            RuleVariant::BrokenCodegen => "rule_broken_codegen",
            RuleVariant::BrokenPlanner => "rule_broken_planner",
        }
    }

    fn complete(&self, messages: &[Message]) -> Result<String, AgentError> {
        let Some((role, requirement)) = read_prompt(messages) else {
            return Ok("I can only answer planning or codegen prompts.".into());
        };
        let Some(task) = Task::from_requirement(requirement) else {
            return Ok("I could not find a design and platform in the requirement.".into());
        };
        Ok(match role {
            Role::Planning => {
                let mut plan = task.plan();
                if self.variant == RuleVariant::BrokenPlanner {
                    plan = drop_synthesis(plan);
                }
                format!("Here is the task breakdown.\n\n{}\n", plan.to_block())
            }
            Role::Codegen => {
                let mut script = task.script();
                if self.variant == RuleVariant::BrokenCodegen {
                    script = break_script(&script);
                }
                format!("```script\n{script}```\n")
            }
        })
    }
}

fn drop_synthesis(plan: Plan) -> Plan {
    let mut steps: Vec<_> = plan.steps.into_iter().filter(|s| s.tool != Tool::Synthesis).collect();
    for (i, s) in steps.iter_mut().enumerate() {
        s.index = i + 1;
    }
    Plan { steps, resume: plan.resume }
}

/// Drops the closing parenthesis of the first call line, which leaves the
/// brackets unbalanced no matter what follows.
fn break_script(script: &str) -> String {
    let mut out = String::with_capacity(script.len());
    let mut done = false;
    for line in script.split_inclusive('\n') {
        let body = line.trim_end_matches('\n');
        if !done && body.ends_with(')') {
            out.push_str(&body[..body.len() - 1]);
            out.push('\n');
            done = true;
        } else {
            out.push_str(line);
        }
    }
    out
}

/// Numbers are kept as written so scripts echo the requirement's literals.
type Num = String;

const UTIL: &str = "core_utilization";
const DENSITY: &str = "density";
const TNS: &str = "tns_end_percent";
const CLOCK: &str = "clock_period";

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Axis {
    pub name: &'static str,
    pub lo: Num,
    pub hi: Num,
    pub step: Num,
}

#[derive(Clone, Debug, PartialEq)]
enum Intent {
    FullFlow { end: StageId, metrics: Vec<&'static str> },
    GridSearch { axes: Vec<(&'static str, Vec<Num>)> },
    Tune { axes: Vec<Axis>, metric_stage: &'static str, budget: Option<Num> },
    Feedback { candidates: Vec<Num>, metric: &'static str },
}

#[derive(Clone, Debug, PartialEq)]
struct Task {
    design: String,
    platform: String,
    clock: Option<Num>,
    utilization: Option<Num>,
    density: Option<Num>,
    tns: Option<Num>,
    intent: Intent,
}

fn re(pattern: &str) -> Regex {
    Regex::new(pattern).expect("static pattern")
}

const NUM: &str = r"(\d+(?:\.\d+)?)";

static QUOTED: LazyLock<Regex> = LazyLock::new(|| re(r#"(?:"|``|“)([A-Za-z0-9_.\-]+)(?:"|''|”)"#));
static DESIGN_BEFORE: LazyLock<Regex> = LazyLock::new(|| re(r"\bdesign\s+([a-z0-9_]+)"));
static DESIGN_AFTER: LazyLock<Regex> = LazyLock::new(|| re(r"\b([a-z0-9_]+)\s+design\b"));
static PLATFORM_WORD: LazyLock<Regex> = LazyLock::new(|| re(r"\b([a-z0-9_]+)\b"));
static CLOCK_VALUE: LazyLock<Regex> =
    LazyLock::new(|| re(&format!(r"\b(?:clock|clk)[ _]period[^0-9.\n]{{0,20}}?\b{NUM}\b")));
static UTIL_VALUE: LazyLock<Regex> = LazyLock::new(|| re(&format!(r"\butili[sz]ation[^0-9.\n]{{0,20}}?\b{NUM}\b")));
static DENSITY_VALUE: LazyLock<Regex> = LazyLock::new(|| re(&format!(r"\bdensity[^0-9.\n]{{0,20}}?\b{NUM}\b")));
static TNS_VALUE: LazyLock<Regex> =
    LazyLock::new(|| re(&format!(r"\btns[ _]end[ _]percent[^0-9.\n]{{0,20}}?\b{NUM}\b")));
static RANGE: LazyLock<Regex> = LazyLock::new(|| {
    re(&format!(r"\bfrom\s+{NUM}\s*%?\s+to\s+{NUM}\s*%?[^\n]{{0,40}}?\b(?:step|increment)(?:\s+size)?\s+of\s+{NUM}"))
});
static LIST: LazyLock<Regex> = LazyLock::new(|| re(r"\[([0-9.,\s]+)\]"));
static BUDGET: LazyLock<Regex> =
    LazyLock::new(|| re(r"\b(?:at most|budget of|no more than|up to)\s+(\d+)\s+(?:evaluations|trials|runs)\b"));
static ROUTE_STAGE: LazyLock<Regex> = LazyLock::new(|| re(r"\b(?:once|after|when)\s+(?:the\s+)?routing\b"));

/// Keyword → tuned parameter, used to label ranges and lists.
const PARAM_KEYWORDS: [(&str, &str); 11] = [
    ("core utilization", UTIL),
    ("core_utilization", UTIL),
    ("utilization", UTIL),
    ("floorplan", UTIL),
    ("density", DENSITY),
    ("placement", DENSITY),
    ("violating paths", TNS),
    ("tns_end_percent", TNS),
    ("cts", TNS),
    ("clock period", CLOCK),
    ("clk period", CLOCK),
];

const DESIGN_ALIASES: [(&str, &str); 3] = [("processor", "ibex"), ("cpu", "ibex"), ("gpu", "high_end_gpu")];

fn capture(re: &Regex, text: &str) -> Option<Num> {
    re.captures(text).map(|c| c[1].to_string())
}

/// The parameter whose keyword occurs last in `window`.
fn nearest_param(window: &str) -> Option<&'static str> {
    PARAM_KEYWORDS
        .iter()
        .filter_map(|(kw, p)| window.rfind(kw).map(|pos| (pos + kw.len(), *p)))
        .max_by_key(|(end, _)| *end)
        .map(|(_, p)| p)
}

fn mentions(text: &str, words: &[&str]) -> bool {
    words.iter().any(|w| text.contains(w))
}

fn requested_metrics(text: &str) -> Vec<&'static str> {
    let mut out: Vec<&'static str> = ["area", "power", "wns", "tns"]
        .into_iter()
        .filter(|m| Regex::new(&format!(r"\b{m}\b")).expect("metric").is_match(text))
        .collect();
    if mentions(text, &["timing", "slack"]) && !out.contains(&"wns") {
        out.push("wns");
    }
    if out.is_empty() {
        out = vec!["area", "power"];
    }
    out
}

impl Task {
    fn from_requirement(requirement: &str) -> Option<Task> {
        let catalog = Catalog::builtin();
        let lower = requirement.to_lowercase();
        let quoted: Vec<String> = QUOTED.captures_iter(requirement).map(|c| c[1].to_string()).collect();
        let is_platform = |s: &str| catalog.platform(s).is_some();
        let is_design = |s: &str| catalog.design(s).is_some();
        let alias = |s: &str| DESIGN_ALIASES.iter().find(|(a, _)| *a == s).map(|(_, d)| d.to_string());

        let mut platform = quoted
            .iter()
            .find(|q| is_platform(q))
            .cloned()
            .or_else(|| PLATFORM_WORD.captures_iter(&lower).map(|c| c[1].to_string()).find(|w| is_platform(w)));
        let design = quoted.iter().find(|q| Some(*q) != platform.as_ref()).cloned().or_else(|| {
            DESIGN_BEFORE
                .captures_iter(&lower)
                .chain(DESIGN_AFTER.captures_iter(&lower))
                .map(|c| c[1].to_string())
                .find_map(|w| if is_design(&w) { Some(w) } else { alias(&w) })
        })?;
        if platform.is_none() {
            // A second quoted name is taken as the platform even if unknown.
            platform = quoted.iter().find(|q| **q != design).cloned();
        }
        let platform = platform?;

        let intent = Task::intent(&lower);
        Some(Task {
            design,
            platform,
            clock: capture(&CLOCK_VALUE, &lower),
            utilization: capture(&UTIL_VALUE, &lower),
            density: capture(&DENSITY_VALUE, &lower),
            tns: capture(&TNS_VALUE, &lower),
            intent,
        })
    }

    fn intent(lower: &str) -> Intent {
        if lower.contains("clock period")
            && mentions(lower, &["smallest", "minimum", "minimal", "minimize", "minimise"])
        {
            let candidates = LIST
                .captures(lower)
                .map(|c| split_list(&c[1]))
                .filter(|l| !l.is_empty())
                .unwrap_or_else(|| (1..=5).map(|i| i.to_string()).collect());
            let metric = if lower.contains("tns") && !lower.contains("wns") { "tns" } else { "wns" };
            return Intent::Feedback { candidates, metric };
        }

        let mut axes: Vec<Axis> = Vec::new();
        let mut window_start = 0;
        for m in RANGE.captures_iter(lower) {
            let whole = m.get(0).expect("match");
            let window = &lower[window_start..whole.end()];
            window_start = whole.end();
            if let Some(name) = nearest_param(window) {
                if axes.iter().all(|a| a.name != name) {
                    axes.push(Axis { name, lo: m[1].to_string(), hi: m[2].to_string(), step: m[3].to_string() });
                }
            }
        }
        let metric_stage = if ROUTE_STAGE.is_match(lower) { "route" } else { "final" };
        let budget = capture(&BUDGET, lower);
        if !axes.is_empty() {
            return Intent::Tune { axes, metric_stage, budget };
        }

        if mentions(lower, &["grid search", "grid-search", "sweep"]) {
            let mut axes: Vec<(&'static str, Vec<Num>)> = Vec::new();
            let wanted = [
                (UTIL, &["utilization", "core_utilization"][..], &["60", "70", "80"][..]),
                (CLOCK, &["clock period", "clk period", "clock_period"][..], &["2", "3", "4"][..]),
                (DENSITY, &["density"][..], &["0.6", "0.7", "0.8"][..]),
            ];
            for (name, keywords, default) in wanted {
                let Some(pos) = keywords.iter().filter_map(|k| lower.find(k)).min() else { continue };
                let values = LIST
                    .captures(&lower[pos..])
                    .filter(|c| c.get(0).expect("match").start() < 40)
                    .map(|c| split_list(&c[1]))
                    .filter(|l| !l.is_empty())
                    .unwrap_or_else(|| default.iter().map(|v| v.to_string()).collect());
                axes.push((name, values));
            }
            if axes.is_empty() {
                axes = wanted.iter().map(|(n, _, d)| (*n, d.iter().map(|v| v.to_string()).collect())).collect();
            }
            return Intent::GridSearch { axes };
        }

        if mentions(lower, &["tune", "tuning", "optimize", "optimise", "optimization", "optimisation"]) {
            let axes = vec![
                Axis { name: UTIL, lo: "60".into(), hi: "90".into(), step: "5".into() },
                Axis { name: DENSITY, lo: "0.6".into(), hi: "0.9".into(), step: "0.05".into() },
                Axis { name: TNS, lo: "30".into(), hi: "50".into(), step: "5".into() },
            ];
            return Intent::Tune { axes, metric_stage, budget };
        }

        let wants_metrics = mentions(
            lower,
            &["area", "power", "wns", "tns", "slack", "timing", "performance", "metric", "ppa", "evaluat"],
        );
        if wants_metrics {
            return Intent::FullFlow { end: StageId::Final, metrics: requested_metrics(lower) };
        }
        let whole_flow =
            mentions(lower, &["final", "report", "complete", "entire", "full flow", "whole", "end-to-end"]);
        let end = if whole_flow {
            StageId::Final
        } else if mentions(lower, &["detail route", "detail_route", "detailed rout", "routing"]) {
            StageId::DetailRoute
        } else if mentions(lower, &["global route", "global_route", "global rout"]) {
            StageId::GlobalRoute
        } else if mentions(lower, &["cts", "clock tree"]) {
            StageId::Cts
        } else if mentions(lower, &["placement", "place the"]) {
            StageId::Placement
        } else if lower.contains("floorplan") {
            StageId::Floorplan
        } else if lower.contains("synthes") {
            StageId::Synthesis
        } else {
            StageId::Final
        };
        Intent::FullFlow { end, metrics: Vec::new() }
    }

    fn stage_description(&self, stage: StageId) -> String {
        let fixed = |name: &str, v: &Option<Num>| v.as_ref().map(|v| format!(" with {name}={v}")).unwrap_or_default();
        match stage {
            StageId::Setup => format!("load design {} on platform {}", self.design, self.platform),
            StageId::Synthesis => format!("run logic synthesis{}", fixed(CLOCK, &self.clock)),
            StageId::Floorplan => format!("create the floorplan{}", fixed(UTIL, &self.utilization)),
            StageId::Placement => format!("place the cells{}", fixed(DENSITY, &self.density)),
            StageId::Cts => format!("build the clock tree{}", fixed(TNS, &self.tns)),
            StageId::GlobalRoute => "run global routing".into(),
            StageId::DetailRoute => "run detailed routing".into(),
            StageId::Final => "generate the final report".into(),
        }
    }

    fn plan(&self) -> Plan {
        let (end, extra): (StageId, Vec<(Tool, String)>) = match &self.intent {
            Intent::FullFlow { end, metrics } => {
                let extra = if metrics.is_empty() {
                    vec![]
                } else {
                    vec![(Tool::GetMetric, format!("read {} at the final stage", metrics.join(", ")))]
                };
                (*end, extra)
            }
            Intent::GridSearch { axes } => {
                let names: Vec<&str> = axes.iter().map(|(n, _)| *n).collect();
                (
                    StageId::Final,
                    vec![(
                        Tool::GetMetric,
                        format!("read area and power for every combination of {}", names.join(", ")),
                    )],
                )
            }
            Intent::Tune { axes, metric_stage, budget } => {
                let names: Vec<&str> = axes.iter().map(|a| a.name).collect();
                let end = if *metric_stage == "route" { StageId::DetailRoute } else { StageId::Final };
                (
                    end,
                    vec![
                        (Tool::GetMetric, format!("read area and power at the {metric_stage} stage")),
                        (
                            Tool::Tune,
                            format!(
                                "grid-search {} minimizing area*power{}",
                                names.join(", "),
                                budget.as_ref().map(|b| format!(" within {b} evaluations")).unwrap_or_default()
                            ),
                        ),
                    ],
                )
            }
            Intent::Feedback { candidates, metric } => (
                StageId::Final,
                vec![(
                    Tool::GetMetric,
                    format!(
                        "check final {metric} for clock periods {} and keep the smallest with {metric} >= 0",
                        candidates.join(", ")
                    ),
                )],
            ),
        };
        let mut steps: Vec<(Tool, String)> = StageId::ALL
            .into_iter()
            .filter(|s| *s <= end)
            .map(|s| (Tool::for_stage(s), self.stage_description(s)))
            .collect();
        if matches!(self.intent, Intent::GridSearch { .. }) {
            steps[0].1 = format!("{} once per parameter combination", steps[0].1);
        }
        steps.extend(extra);
        let refs: Vec<(Tool, &str)> = steps.iter().map(|(t, d)| (*t, d.as_str())).collect();
        Plan::new(&refs)
    }

    fn script(&self) -> String {
        let mut s = String::new();
        let d = &self.design;
        let p = &self.platform;
        match &self.intent {
            Intent::FullFlow { end, metrics } => {
                s.push_str("eda = chateda()\n");
                writeln!(s, "eda.setup(design_name={}, platform={})", q(d), q(p)).unwrap();
                for stage in StageId::ALL.into_iter().filter(|st| *st > StageId::Setup && st <= end) {
                    writeln!(s, "{}", self.stage_call("eda", stage, &[])).unwrap();
                }
                if !metrics.is_empty() {
                    let var = if metrics.len() == 1 { metrics[0] } else { "final_performance" };
                    writeln!(s, "{var} = eda.get_metric(\"final\", {})", list_literal(metrics)).unwrap();
                    writeln!(s, "print({var})").unwrap();
                }
            }
            Intent::GridSearch { axes } => {
                let loop_var = |n: &str| match n {
                    UTIL => "core_util",
                    CLOCK => "clk_period",
                    DENSITY => "density",
                    _ => "value",
                };
                let list_var = |n: &str| match n {
                    UTIL => "core_utils",
                    CLOCK => "clk_periods",
                    DENSITY => "densities",
                    _ => "values",
                };
                for (name, values) in axes {
                    writeln!(s, "{} = [{}]", list_var(name), values.join(", ")).unwrap();
                }
                let mut indent = String::new();
                for (name, _) in axes {
                    writeln!(s, "{indent}for {} in {}:", loop_var(name), list_var(name)).unwrap();
                    indent.push_str("    ");
                }
                let bound: Vec<(&str, &str)> = axes.iter().map(|(n, _)| (*n, loop_var(n))).collect();
                writeln!(s, "{indent}eda = chateda()").unwrap();
                writeln!(s, "{indent}eda.setup({}, {}, verilog={})", q(d), q(p), q(&format!("{d}.v"))).unwrap();
                for stage in StageId::ALL.into_iter().skip(1) {
                    writeln!(s, "{indent}{}", self.stage_call("eda", stage, &bound)).unwrap();
                }
                writeln!(s, "{indent}metrics = eda.get_metric(\"final\", [\"area\", \"power\"])").unwrap();
                let vars: Vec<&str> = bound.iter().map(|(_, v)| *v).collect();
                writeln!(s, "{indent}print({}, metrics)", vars.join(", ")).unwrap();
            }
            Intent::Tune { axes, metric_stage, budget } => {
                let params: Vec<&str> = axes.iter().map(|a| a.name).collect();
                let bound: Vec<(&str, &str)> = params.iter().map(|n| (*n, *n)).collect();
                writeln!(s, "def tuning_func({}):", params.join(", ")).unwrap();
                s.push_str("    eda = chateda()\n");
                writeln!(s, "    eda.setup(design_name={}, platform={})", q(d), q(p)).unwrap();
                let end = if *metric_stage == "route" { StageId::DetailRoute } else { StageId::Final };
                for stage in StageId::ALL.into_iter().filter(|st| *st > StageId::Setup && *st <= end) {
                    writeln!(s, "    {}", self.stage_call("eda", stage, &bound)).unwrap();
                }
                writeln!(s, "    metrics = eda.get_metric({}, [\"area\", \"power\"])", q(metric_stage)).unwrap();
                s.push_str("    return metrics[0] * metrics[1]\n");
                s.push_str("param_space = {\n");
                for a in axes {
                    writeln!(s, "    {}: {{\"minmax\": [{}, {}], \"step\": {}}},", q(a.name), a.lo, a.hi, a.step)
                        .unwrap();
                }
                s.push_str("}\n");
                match budget {
                    Some(b) => writeln!(s, "result = tune(tuning_func, param_space, budget={b})").unwrap(),
                    None => s.push_str("result = tune(tuning_func, param_space)\n"),
                }
                s.push_str("print(result[\"best\"], result[\"objective\"])\n");
            }
            Intent::Feedback { candidates, metric } => {
                s.push_str("def is_valid_clock_period(clock_period):\n");
                s.push_str("    eda = chateda()\n");
                writeln!(s, "    eda.setup(design_name={}, platform={})", q(d), q(p)).unwrap();
                for stage in StageId::ALL.into_iter().skip(1) {
                    writeln!(s, "    {}", self.stage_call("eda", stage, &[(CLOCK, CLOCK)])).unwrap();
                }
                writeln!(s, "    final_metrics = eda.get_metric(\"final\", [{}])", q(metric)).unwrap();
                s.push_str("    return final_metrics >= 0\n");
                writeln!(s, "clock_periods = [{}]", candidates.join(", ")).unwrap();
                s.push_str("smallest_valid_clock_period = 0\n");
                s.push_str("for clock_period in clock_periods:\n");
                s.push_str("    if is_valid_clock_period(clock_period):\n");
                s.push_str("        smallest_valid_clock_period = clock_period\n");
                s.push_str("        break\n");
                s.push_str("print(smallest_valid_clock_period)\n");
            }
        }
        s
    }

    /// One stage call. Tuned parameters in `bound` are passed by variable;
    /// otherwise any fixed value from the requirement is passed literally.
    fn stage_call(&self, handle: &str, stage: StageId, bound: &[(&str, &str)]) -> String {
        let param = match stage {
            StageId::Synthesis => Some((CLOCK, &self.clock)),
            StageId::Floorplan => Some((UTIL, &self.utilization)),
            StageId::Placement => Some((DENSITY, &self.density)),
            StageId::Cts => Some((TNS, &self.tns)),
            _ => None,
        };
        let arg = param.and_then(|(name, fixed)| {
            bound
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, var)| format!("{name}={var}"))
                .or_else(|| fixed.as_ref().map(|v| format!("{name}={v}")))
        });
        format!("{handle}.{}({})", stage.api_name(), arg.unwrap_or_default())
    }
}

fn split_list(body: &str) -> Vec<Num> {
    body.split(',').map(str::trim).filter(|v| !v.is_empty()).map(str::to_string).collect()
}

fn q(s: &str) -> String {
    crate::miniscript::quote(s)
}

fn list_literal(items: &[&str]) -> String {
    let quoted: Vec<String> = items.iter().map(|i| q(i)).collect();
    format!("[{}]", quoted.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(text: &str) -> Task {
        Task::from_requirement(text).expect("recognized")
    }

    #[test]
    fn slots() {
        let t = task("Perform routing for the processor design on the asap7 platform.");
        assert_eq!((t.design.as_str(), t.platform.as_str()), ("ibex", "asap7"));
        assert_eq!(t.intent, Intent::FullFlow { end: StageId::DetailRoute, metrics: vec![] });
        let t = task("For the design \"aes\" on \"nangate45\" platform, fix clock period to be 5. Write me a script to optimize area and power using the parameter tuning method.");
        assert_eq!(t.clock.as_deref(), Some("5"));
        assert!(matches!(t.intent, Intent::Tune { ref axes, metric_stage: "final", budget: None } if axes.len() == 3));
        assert!(Task::from_requirement("colorless green ideas sleep furiously").is_none());
    }

    #[test]
    fn ranges_attach_to_the_nearest_parameter() {
        let text = "Use \"gcd\" on \"sky130\".\n1. Keep the clock period static at 5 during the synthesis.\n2. At the floorplan stage, adjust only the core utilization, ranging it from 60% to 85% with a step of 5%.\n3. At the placement stage, try adjusting the density from 0.55 to 1 with an increment of 0.05.\n4. At the CTS stage, fix from 30% to 60% of the violating paths with a step of 5%.\nLastly, gather metrics once routing is finished.";
        let t = task(text);
        let Intent::Tune { axes, metric_stage, .. } = t.intent else { panic!() };
        assert_eq!(metric_stage, "route");
        let got: Vec<(&str, &str, &str, &str)> =
            axes.iter().map(|a| (a.name, a.lo.as_str(), a.hi.as_str(), a.step.as_str())).collect();
        assert_eq!(got, [(UTIL, "60", "85", "5"), (DENSITY, "0.55", "1", "0.05"), (TNS, "30", "60", "5")]);
    }

    #[test]
    fn broken_variants() {
        let script = "eda = chateda()\neda.setup(design_name=\"gcd\", platform=\"sky130\")\n";
        let broken = break_script(script);
        assert!(crate::miniscript::parse(script).is_ok());
        assert!(crate::miniscript::parse(&broken).is_err());
        let plan = task("Run the full flow for design gcd on sky130.").plan();
        let dropped = drop_synthesis(plan.clone());
        assert_eq!(dropped.steps.len(), plan.steps.len() - 1);
        assert!(dropped.validate().is_err());
    }

    #[test]
    fn tuning_budget_phrase() {
        let t = task("Tune the design \"gcd\" on \"sky130\" for area and power. Use at most 12 evaluations.");
        assert!(matches!(t.intent, Intent::Tune { budget: Some(ref b), .. } if b == "12"));
        assert!(t.script().contains("budget=12"));
        let ex = crate::miniscript::run_source(&t.script(), &Default::default()).unwrap();
        assert!(ex.is_ok());
        assert_eq!(ex.tunes[0].trials.len(), 12);
    }
}
