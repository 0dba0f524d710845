use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wickcal::spectral_core::DecayTable;

use crate::catalog::{CheckSpec, Comparison};
use crate::scenario::Scenario;

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub stage: String,
    pub paper_anchor: String,
    /// `None` when the measurement is not a finite number.
    pub measured: Option<f64>,
    pub comparison: Comparison,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(spec: &CheckSpec, measured: f64, tolerance: f64) -> Self {
        let finite = measured.is_finite();
        Self {
            name: spec.name.into(),
            stage: spec.stage.name().into(),
            paper_anchor: spec.anchor.into(),
            measured: finite.then_some(measured),
            comparison: spec.comparison,
            tolerance,
            pass: finite && spec.comparison.holds(measured, tolerance),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TableRecord {
    pub name: String,
    pub file: String,
    pub m_list: Vec<i32>,
    pub rows: usize,
    /// Weighted constant per entry of `m_list`.
    pub constants: Vec<f64>,
    pub floor_limited_modes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub report_version: u32,
    pub tool_version: String,
    pub scenario: Scenario,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
    pub decay_tables: Vec<TableRecord>,
    /// Auxiliary measurements keyed by stage artifact.
    pub details: BTreeMap<String, serde_json::Value>,
    pub timing_file: String,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.summary.failed.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

pub fn summarize(checks: &[CheckRecord]) -> Summary {
    Summary {
        total: checks.len(),
        passed: checks.iter().filter(|c| c.pass).count(),
        failed: checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect(),
    }
}

pub fn table_record(name: &str, table: &DecayTable) -> TableRecord {
    let verdicts: Vec<_> = table.m_list.iter().map(|&m| table.verdict(m)).collect();
    TableRecord {
        name: name.into(),
        file: format!("{name}.csv"),
        m_list: table.m_list.clone(),
        rows: table.rows.len(),
        constants: verdicts.iter().map(|v| v.constant).collect(),
        floor_limited_modes: verdicts.first().map(|v| v.floor_limited_modes).unwrap_or(0),
    }
}

/// Wall-clock seconds per stage, kept out of the report so that reruns compare equal.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timing {
    pub stages: BTreeMap<String, f64>,
    pub total: f64,
}

pub fn write_all(
    dir: &Path,
    report: &Report,
    tables: &[(String, DecayTable)],
    timing: &Timing,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json())?;
    for (name, t) in tables {
        fs::write(dir.join(format!("{name}.csv")), t.to_csv())?;
    }
    let mut tj = serde_json::to_string_pretty(timing).expect("timing serializes");
    tj.push('\n');
    fs::write(dir.join(&report.timing_file), tj)
}
