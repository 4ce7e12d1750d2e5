// SPDX-License-Identifier: Apache-2.0
//! The `edagent` command line. Exit codes: 0 success, 1 user error,
//! 2 infrastructure error.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use edagent_core::agent::{run_requirement, AgentError, Requirement, SessionReport};
use edagent_core::bench::{
    builtin_suite, export_jsonl, generate_instructions, import_jsonl, load_suite, render_training_sample,
    run_suite_with, validate_record, BenchError, Grade, DEFAULT_SEPARATOR,
};
use edagent_core::dse::{tune_parallel, write_trials_csv, ParamRange, ParamSpace};
use edagent_core::flowsim::{FlowSession, ParamMap, ParamValue, StageId};
use edagent_core::miniscript::{HostEnv, RuntimeLimits};
use quantlab::QuantReport;

use crate::config::HubConfig;
use crate::service::{backend_config, Hub, HubError};

#[derive(Debug, Parser)]
#[command(name = "edagent", version, about = "Plan, script and run flow-automation requirements")]
pub struct Cli {
    /// Service and backend configuration (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read requirements line by line and run each one.
    Repl(BackendArg),
    /// Run one requirement and print its report as JSON.
    Run {
        #[arg(long, short)]
        requirement: String,
        #[command(flatten)]
        backend: BackendArg,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grade a case suite and print the grade distribution.
    Eval {
        /// `builtin` or a suite TOML file.
        #[arg(long)]
        suite: String,
        #[command(flatten)]
        backend: BackendArg,
        /// Write the distribution report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Instruction dataset tooling.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Grid-search a small parameter space and print the trials as CSV.
    TuneDemo {
        #[arg(long, default_value = "gcd")]
        design: String,
        #[arg(long, default_value = "sky130")]
        platform: String,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Print the NF4 codebook and round-trip errors for a seeded matrix.
    QuantDump {
        #[arg(long, default_value_t = 4)]
        rows: usize,
        #[arg(long, default_value_t = 64)]
        cols: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Start the HTTP service.
    Serve {
        /// Overrides the configured port.
        #[arg(long)]
        port: Option<u16>,
        /// Overrides the configured session and artifact directory.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Address to bind.
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

#[derive(Debug, Args)]
struct BackendArg {
    /// remote, rule, broken-codegen or broken-planner.
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Generate and validate instruction records.
    Gen {
        #[arg(long, default_value_t = edagent_core::bench::DEFAULT_COUNT)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        backend: BackendArg,
    },
    /// Re-validate every record of a JSONL file.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Render validated records as loss-masked training samples (JSONL).
    Samples {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = DEFAULT_SEPARATOR)]
        separator: String,
    },
}

#[derive(Debug)]
pub enum CliError {
    User(String),
    Infra(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::User(_) => 1,
            CliError::Infra(_) => 2,
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        // A bad backend config or unset secret is fixable by the caller.
        match e {
            AgentError::Config(_) | AgentError::MissingSecret(_) => CliError::User(e.to_string()),
            e if e.is_infrastructure() => CliError::Infra(e.to_string()),
            e => CliError::User(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        if let BenchError::Agent(e) = e {
            return e.into();
        }
        if e.is_infrastructure() {
            CliError::Infra(e.to_string())
        } else {
            CliError::User(e.to_string())
        }
    }
}

impl From<HubError> for CliError {
    fn from(e: HubError) -> Self {
        match e {
            HubError::Infrastructure(m) => CliError::Infra(m),
            other => CliError::User(other.to_string()),
        }
    }
}

/// Unreadable input files are the caller's mistake.
fn input_err(e: BenchError) -> CliError {
    match e {
        BenchError::Io(e) => CliError::User(format!("cannot read input: {e}")),
        other => other.into(),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Infra(e.to_string())
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let help = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let text = e.render().to_string();
            if help {
                let _ = write!(stdout, "{text}");
                return 0;
            }
            let _ = write!(stderr, "{text}");
            return 1;
        }
    };
    match dispatch(cli, stdin, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let (CliError::User(m) | CliError::Infra(m)) = &e;
            let _ = writeln!(stderr, "error: {m}");
            e.code()
        }
    }
}

pub fn main() -> ExitCode {
    let stdin = std::io::stdin();
    let code = main_with(std::env::args_os(), &mut stdin.lock(), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code)
}

fn load_config(path: Option<&PathBuf>) -> Result<HubConfig, CliError> {
    match path {
        Some(p) => HubConfig::load(p).map_err(|e| CliError::User(e.to_string())),
        None => Ok(HubConfig::default()),
    }
}

struct Runner {
    config: HubConfig,
    env: HostEnv,
    limits: RuntimeLimits,
}

impl Runner {
    fn backend(&self, name: Option<&str>) -> Result<Box<dyn edagent_core::agent::Backend>, CliError> {
        Ok(backend_config(&self.config.backend, name)?.build()?)
    }

    fn run(&self, text: &str, backend: Option<&str>) -> Result<SessionReport, CliError> {
        let backend = self.backend(backend)?;
        Ok(run_requirement(
            &Requirement::new(text)?,
            backend.as_ref(),
            self.config.plan_retries,
            &self.env,
            &self.limits,
        )?)
    }
}

/// The exact bytes `run` prints for a report.
pub fn report_json(report: &SessionReport) -> String {
    serde_json::to_string_pretty(report).expect("reports serialize")
}

fn dispatch(cli: Cli, stdin: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(cli.config.as_ref())?;
    let runner = Runner { config, env: HostEnv::default(), limits: RuntimeLimits::default() };
    match cli.command {
        Command::Run { requirement, backend, out: path } => {
            let report = runner.run(&requirement, backend.backend.as_deref())?;
            let text = report_json(&report);
            match path {
                Some(p) => std::fs::write(p, text + "\n").map_err(io_err)?,
                None => writeln!(out, "{text}").map_err(io_err)?,
            }
        }
        Command::Repl(backend) => repl(&runner, backend.backend.as_deref(), stdin, out)?,
        Command::Eval { suite, backend, out: path } => {
            let cases = if suite == "builtin" { builtin_suite() } else { load_suite(&suite).map_err(input_err)? };
            let b = runner.backend(backend.backend.as_deref())?;
            let report = run_suite_with(&cases, b.as_ref(), &runner.env, &runner.limits)?;
            writeln!(out, "backend: {}  cases: {}", report.backend, report.per_case.len()).map_err(io_err)?;
            for g in [Grade::A, Grade::B, Grade::C] {
                writeln!(out, "{g:?}: {:.1}%", report.percent_of(g)).map_err(io_err)?;
            }
            for c in report.per_case.iter().filter(|c| c.grade != Grade::A) {
                writeln!(out, "  {} {:?}: {}", c.id, c.grade, c.reasons.join("; ")).map_err(io_err)?;
            }
            if let Some(p) = path {
                std::fs::write(p, serde_json::to_vec_pretty(&report).expect("serializes")).map_err(io_err)?;
            }
        }
        Command::Dataset(DatasetCommand::Gen { count, seed, out: path, backend }) => {
            let b = runner.backend(backend.backend.as_deref())?;
            let records = generate_instructions(count, b.as_ref(), seed, &runner.env, &runner.limits)?;
            export_jsonl(&records, &path)?;
            let ok = records.iter().filter(|r| r.validated).count();
            writeln!(out, "{} records, {ok} validated -> {}", records.len(), path.display()).map_err(io_err)?;
        }
        Command::Dataset(DatasetCommand::Validate { input }) => {
            let records = import_jsonl(&input).map_err(input_err)?;
            let mut bad = 0;
            for (i, r) in records.iter().enumerate() {
                let verdict = validate_record(r, &runner.env, &runner.limits);
                if verdict.is_ok() != r.validated {
                    bad += 1;
                    let why = verdict.err().unwrap_or_else(|| "passes but is flagged".into());
                    writeln!(err, "record {}: {why}", i + 1).map_err(io_err)?;
                }
            }
            writeln!(out, "{} records, {bad} with a stale validation flag", records.len()).map_err(io_err)?;
            if bad > 0 {
                return Err(CliError::User(format!("{bad} records disagree with their validation flag")));
            }
        }
        Command::Dataset(DatasetCommand::Samples { input, out: path, separator }) => {
            let records = import_jsonl(&input).map_err(input_err)?;
            let mut text = String::new();
            let mut n = 0;
            for r in records.iter().filter(|r| r.validated) {
                let s = render_training_sample(r, &separator)?;
                text.push_str(&serde_json::to_string(&s).expect("serializes"));
                text.push('\n');
                n += 1;
            }
            std::fs::write(&path, text).map_err(io_err)?;
            writeln!(out, "{n} samples -> {}", path.display()).map_err(io_err)?;
        }
        Command::TuneDemo { design, platform, budget } => tune_demo(&runner, &design, &platform, budget, out)?,
        Command::QuantDump { rows, cols, seed } => {
            if rows == 0 || cols == 0 {
                return Err(CliError::User("--rows and --cols must be positive".into()));
            }
            let r = QuantReport::compute(rows, cols, seed).map_err(|e| CliError::User(e.to_string()))?;
            writeln!(out, "{}", serde_json::to_string_pretty(&r).expect("serializes")).map_err(io_err)?;
        }
        Command::Serve { port, data_dir, host } => {
            let mut config = runner.config;
            if let Some(p) = port {
                config.port = p;
            }
            if let Some(d) = data_dir {
                config.data_dir = d;
            }
            serve(config, host)?;
        }
    }
    Ok(())
}

fn serve(config: HubConfig, host: std::net::IpAddr) -> Result<(), CliError> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .try_init();
    let addr = std::net::SocketAddr::new(host, config.port);
    let hub = Arc::new(Hub::open(config)?);
    let rt = tokio::runtime::Runtime::new().map_err(io_err)?;
    rt.block_on(crate::http::serve(hub, addr)).map_err(io_err)
}

fn repl(runner: &Runner, backend: Option<&str>, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let mut backend = backend.map(str::to_string);
    writeln!(out, "Enter a requirement per line; :backend NAME switches backends, :quit exits.").map_err(io_err)?;
    let mut line = String::new();
    loop {
        write!(out, "> ").map_err(io_err)?;
        out.flush().map_err(io_err)?;
        line.clear();
        if stdin.read_line(&mut line).map_err(io_err)? == 0 {
            return Ok(());
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == ":quit" || text == ":q" {
            return Ok(());
        }
        if let Some(name) = text.strip_prefix(":backend") {
            backend = Some(name.trim().to_string());
            writeln!(out, "backend: {}", name.trim()).map_err(io_err)?;
            continue;
        }
        // Bad input is reported and the loop continues; broken backends end it.
        match runner.run(text, backend.as_deref()) {
            Ok(report) => print_summary(&report, out).map_err(io_err)?,
            Err(CliError::User(m)) => writeln!(out, "error: {m}").map_err(io_err)?,
            Err(e) => return Err(e),
        }
    }
}

fn print_summary(report: &SessionReport, out: &mut dyn Write) -> std::io::Result<()> {
    match (&report.plan, &report.plan_error) {
        (_, Some(e)) => writeln!(out, "plan rejected: {}", serde_json::to_string(e).unwrap_or_default())?,
        (Some(p), None) => writeln!(out, "{}", p.to_block())?,
        (None, None) => {}
    }
    if let Some(s) = &report.script {
        writeln!(out, "```script\n{s}```")?;
    }
    if let Some(e) = &report.script_error {
        writeln!(out, "script rejected: {}", e.message)?;
    }
    if !report.output.is_empty() {
        write!(out, "{}", report.output)?;
    }
    for f in &report.faults {
        writeln!(out, "fault: {f}")?;
    }
    if let Some(m) = &report.metrics {
        writeln!(out, "final metrics: area={} power={} wns={} tns={}", m.area, m.power, m.wns, m.tns)?;
    }
    Ok(())
}

/// Area·power at the final stage over utilization, density and the
/// tolerated violating-path share.
fn tune_demo(
    runner: &Runner,
    design: &str,
    platform: &str,
    budget: Option<usize>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let catalog = &runner.env.catalog;
    FlowSession::setup_shared(catalog, design, platform).map_err(|e| CliError::User(e.to_string()))?;
    let space = ParamSpace::new()
        .with("core_utilization", ParamRange::new(50.0, 90.0, 10.0))
        .and_then(|s| s.with("density", ParamRange::new(0.6, 0.9, 0.1)))
        .and_then(|s| s.with("tns_end_percent", ParamRange::new(30.0, 50.0, 10.0)))
        .expect("demo space is valid");
    let eval = |p: &edagent_core::dse::ParamPoint| -> Result<f64, String> {
        let mut s = FlowSession::setup_shared(catalog, design, platform).map_err(|e| e.to_string())?;
        for stage in StageId::ALL.into_iter().skip(1) {
            let mut params = ParamMap::new();
            for name in stage.parameters() {
                if let Some(v) = p.get(*name) {
                    params.insert(name.to_string(), ParamValue::Number(*v));
                }
            }
            s.run_stage(stage, &params).map_err(|e| e.to_string())?;
        }
        let m = s.get_metric("final", &["area", "power"]).map_err(|e| e.to_string())?;
        Ok(m[0] * m[1])
    };
    let result = tune_parallel(eval, &space, budget).map_err(|e| CliError::User(e.to_string()))?;
    write_trials_csv(&space, &result.trials, &mut *out).map_err(|e| CliError::Infra(e.to_string()))?;
    let best: Vec<String> = result.best.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(
        out,
        "# best trial {} of {}: {} objective={}",
        result.best.index,
        result.evaluations,
        best.join(" "),
        result.best.objective.expect("best is ok")
    )
    .map_err(io_err)?;
    Ok(())
}
