pub mod catalog;
pub mod pipeline;
pub mod report;
pub mod scenario;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use report::{summarize, table_record, Report, REPORT_VERSION};
use scenario::{Scenario, BUNDLED};

pub const TIMING_FILE: &str = "timing.json";

/// Process exit status of the `wickcal` binary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Pass = 0,
    CheckFailed = 1,
    Usage = 2,
    Numerical = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: ExitCode::Usage, message: message.into() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn did_you_mean(candidates: &[&str]) -> String {
    if candidates.is_empty() {
        String::new()
    } else {
        format!("; did you mean {}?", candidates.join(", "))
    }
}

/// Resolves a file path or a bundled scenario name.
pub fn load_scenario(arg: &str) -> Result<Scenario, CliError> {
    let path = Path::new(arg);
    let (origin, text) = if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {arg}: {e}")))?;
        (arg.to_string(), text)
    } else if let Some(b) = scenario::bundled(arg) {
        (format!("bundled scenario {arg}"), b.text.to_string())
    } else {
        let near: Vec<&str> = BUNDLED
            .iter()
            .map(|b| b.name)
            .filter(|n| strsim::jaro_winkler(n, arg) >= 0.8)
            .collect();
        return Err(CliError::usage(format!(
            "{arg} is neither a file nor a bundled scenario{}",
            did_you_mean(&near)
        )));
    };
    Scenario::from_toml(&text).map_err(|e| CliError::usage(format!("{origin}: {e}")))
}

/// Splits and validates a `--checks` list.
pub fn parse_check_filter(list: &str) -> Result<Vec<String>, CliError> {
    let entries: Vec<String> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
    if entries.is_empty() {
        return Err(CliError::usage("--checks needs at least one name"));
    }
    for e in &entries {
        if !catalog::is_known(e) {
            return Err(CliError::usage(format!("unknown check {e}{}", did_you_mean(&catalog::suggest(e)))));
        }
    }
    Ok(entries)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub checks: Option<Vec<String>>,
    pub seed: Option<u64>,
}

pub struct RunOutput {
    pub report: Report,
    pub dir: PathBuf,
    pub timing: report::Timing,
}

impl RunOutput {
    pub fn exit_code(&self) -> ExitCode {
        if self.report.all_pass() {
            ExitCode::Pass
        } else {
            ExitCode::CheckFailed
        }
    }
}

pub fn run(mut s: Scenario, opts: &RunOptions) -> Result<RunOutput, CliError> {
    if let Some(seed) = opts.seed {
        s.seed = seed;
    }
    let outcome = pipeline::execute(&s, opts.checks.as_deref())
        .map_err(|e| CliError { code: ExitCode::Numerical, message: format!("numerical failure in {e}") })?;
    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from("wickcal-out").join(&s.name));
    let report = Report {
        report_version: REPORT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        summary: summarize(&outcome.checks),
        decay_tables: outcome.tables.iter().map(|(n, t)| table_record(n, t)).collect(),
        checks: outcome.checks,
        details: outcome.details,
        timing_file: TIMING_FILE.into(),
        scenario: s,
    };
    report::write_all(&dir, &report, &outcome.tables, &outcome.timing)
        .map_err(|e| CliError { code: ExitCode::Numerical, message: format!("cannot write {}: {e}", dir.display()) })?;
    Ok(RunOutput { report, dir, timing: outcome.timing })
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "non-finite".into())
}

/// Human-readable check table printed after a run.
pub fn render(out: &RunOutput) -> String {
    let mut s = String::new();
    let width = out.report.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &out.report.checks {
        let _ = writeln!(
            s,
            "{} {:width$}  {:>11} {} {:.1e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            fmt_value(c.measured),
            c.comparison.symbol(),
            c.tolerance,
        );
    }
    let sum = &out.report.summary;
    let _ = writeln!(
        s,
        "{}: {}/{} checks passed in {:.1} s; report at {}",
        out.report.scenario.name,
        sum.passed,
        sum.total,
        out.timing.total,
        out.dir.join("report.json").display()
    );
    s
}

pub fn list() -> String {
    let mut s = String::from("bundled scenarios:\n");
    for b in BUNDLED {
        let desc = Scenario::from_toml(b.text).map(|sc| sc.description).unwrap_or_default();
        let _ = writeln!(s, "  {:22} {desc}", b.name);
    }
    s.push_str("\nchecks:\n");
    for g in catalog::GROUPS {
        let _ = writeln!(s, "  {}", g.name);
        for c in catalog::members(g.name) {
            let _ = writeln!(s, "    {:34} {} {:.1e}", c.name, c.comparison.symbol(), c.tolerance);
        }
    }
    s
}

pub fn describe(name: &str) -> Result<String, CliError> {
    catalog::describe(name).ok_or_else(|| {
        CliError::usage(format!("unknown check or group {name}{}", did_you_mean(&catalog::suggest(name))))
    })
}
