use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Scalar,
    Gravity,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricSpec {
    /// `h_t = δ`.
    StaticFlat,
    /// Flat slicing `h_t = e^{2Ht} δ`.
    DeSitter { hubble: f64 },
    /// `h_t = (Σ_n c_n t^n) δ`.
    ConformalPolynomial { coeffs: Vec<f64> },
}

impl MetricSpec {
    pub fn is_static(&self) -> bool {
        match self {
            MetricSpec::StaticFlat => true,
            MetricSpec::DeSitter { hubble } => *hubble == 0.0,
            MetricSpec::ConformalPolynomial { coeffs } => coeffs.iter().skip(1).all(|c| *c == 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    #[default]
    Standard,
    /// The geometry identities are expected to fail.
    NegativeControl,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Geometry,
    Factorization,
    Euclidean,
    GaugeStates,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Geometry, Stage::Factorization, Stage::Euclidean, Stage::GaugeStates];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Geometry => "geometry",
            Stage::Factorization => "factorization",
            Stage::Euclidean => "euclidean",
            Stage::GaugeStates => "gauge-states",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_mass2() -> f64 {
    1.0
}
fn default_taylor() -> usize {
    6
}
fn default_t_half() -> f64 {
    1.0
}
fn default_s_nodes() -> usize {
    48
}
fn default_steps() -> usize {
    200
}
fn default_orders() -> Vec<i32> {
    vec![1, 2, 3]
}
fn default_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub model: ModelKind,
    pub dim: usize,
    pub n_per_axis: usize,
    pub metric: MetricSpec,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_mass2")]
    pub mass2: f64,
    #[serde(default = "default_taylor")]
    pub taylor_order: usize,
    /// Taylor order of the operator series handed to the factorization; defaults to `taylor_order`.
    #[serde(default)]
    pub factorization_order: Option<usize>,
    #[serde(default = "default_t_half")]
    pub t_half: f64,
    #[serde(default = "default_s_nodes")]
    pub s_nodes: usize,
    #[serde(default = "default_steps")]
    pub time_steps: usize,
    #[serde(default = "default_orders")]
    pub profile_orders: Vec<i32>,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub role: Role,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

/// A schema violation tied to one field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "field `{}`: {}", self.field, self.message)
    }
}

fn bad(field: &str, message: impl Into<String>) -> FieldError {
    FieldError { field: field.into(), message: message.into() }
}

/// Dotted key of the `key = value` line containing byte `pos`.
fn key_at(text: &str, pos: usize) -> Option<String> {
    let before = text.get(..pos)?;
    let line = before.rsplit('\n').next()?;
    let key = line.split_once('=')?.0.trim().trim_matches('"');
    let table = before
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && !l.starts_with("[["))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim());
    Some(match table {
        Some(t) => format!("{t}.{key}"),
        None => key.to_string(),
    })
}

impl Scenario {
    /// Parses and validates, filling in derived defaults.
    pub fn from_toml(text: &str) -> Result<Self, FieldError> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let named = msg.split('`').nth(1).filter(|_| msg.contains("field"));
            let field = named
                .map(String::from)
                .or_else(|| e.span().and_then(|r| key_at(text, r.start)))
                .unwrap_or_else(|| "<document>".into());
            let at = e.span().map(|r| format!(" (byte {})", r.start)).unwrap_or_default();
            FieldError { field, message: format!("{msg}{at}") }
        })?;
        s.validate()?;
        s.factorization_order.get_or_insert(s.taylor_order);
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad("schema_version", format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if self.name.trim().is_empty() {
            return Err(bad("name", "must not be empty"));
        }
        let dmin = if self.model == ModelKind::Gravity { 2 } else { 1 };
        if !(dmin..=3).contains(&self.dim) {
            return Err(bad("dim", format!("must lie in {dmin}..=3 for this model (got {})", self.dim)));
        }
        if self.n_per_axis < 4 || !self.n_per_axis.is_multiple_of(2) || self.n_per_axis > 256 {
            return Err(bad("n_per_axis", format!("must be even and in 4..=256 (got {})", self.n_per_axis)));
        }
        if self.n_per_axis.pow(self.dim as u32) > 1 << 15 {
            return Err(bad("n_per_axis", format!("{}^{} grid points exceed 32768", self.n_per_axis, self.dim)));
        }
        if !self.lambda.is_finite() {
            return Err(bad("lambda", "must be finite"));
        }
        if !self.mass2.is_finite() || self.mass2 < 0.0 {
            return Err(bad("mass2", format!("must be finite and non-negative (got {})", self.mass2)));
        }
        if !(1..=32).contains(&self.taylor_order) {
            return Err(bad("taylor_order", format!("must lie in 1..=32 (got {})", self.taylor_order)));
        }
        if let Some(o) = self.factorization_order {
            if !(1..=32).contains(&o) {
                return Err(bad("factorization_order", format!("must lie in 1..=32 (got {o})")));
            }
        }
        if !(self.t_half.is_finite() && self.t_half > 0.0) {
            return Err(bad("t_half", format!("must be positive (got {})", self.t_half)));
        }
        if !(8..=256).contains(&self.s_nodes) {
            return Err(bad("s_nodes", format!("must lie in 8..=256 (got {})", self.s_nodes)));
        }
        if self.time_steps < 2 || !self.time_steps.is_multiple_of(2) {
            return Err(bad("time_steps", format!("must be even and at least 2 (got {})", self.time_steps)));
        }
        if self.profile_orders.is_empty() {
            return Err(bad("profile_orders", "must not be empty"));
        }
        for (i, &m) in self.profile_orders.iter().enumerate() {
            if !(1..=catalog::MAX_ORDER).contains(&m) || self.profile_orders[..i].contains(&m) {
                return Err(bad("profile_orders", format!("entries must be distinct and in 1..={} (got {m})", catalog::MAX_ORDER)));
            }
        }
        if self.stages.is_empty() {
            return Err(bad("stages", "must not be empty"));
        }
        for (i, st) in self.stages.iter().enumerate() {
            if self.stages[..i].contains(st) {
                return Err(bad("stages", format!("`{st}` listed twice")));
            }
        }
        match &self.metric {
            MetricSpec::StaticFlat => {}
            MetricSpec::DeSitter { hubble } => {
                if !hubble.is_finite() || *hubble < 0.0 {
                    return Err(bad("metric.hubble", format!("must be finite and non-negative (got {hubble})")));
                }
            }
            MetricSpec::ConformalPolynomial { coeffs } => {
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(bad("metric.coeffs", "must be a non-empty list of finite numbers"));
                }
                if coeffs[0] <= 0.0 {
                    return Err(bad("metric.coeffs", format!("leading coefficient must be positive (got {})", coeffs[0])));
                }
            }
        }
        if self.role == Role::NegativeControl && self.model != ModelKind::Gravity {
            return Err(bad("role", "negative-control needs the gravity model"));
        }
        for (name, &tol) in &self.tolerances {
            if catalog::find(name).is_none() {
                let hint = catalog::suggest(name);
                let hint = if hint.is_empty() { String::new() } else { format!("; did you mean {}", hint.join(", ")) };
                return Err(bad(&format!("tolerances.{name}"), format!("unknown check{hint}")));
            }
            if !tol.is_finite() {
                return Err(bad(&format!("tolerances.{name}"), "must be finite"));
            }
        }
        Ok(())
    }

    pub fn runs(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    pub fn tolerance(&self, check: &catalog::CheckSpec) -> f64 {
        self.tolerances.get(check.name).copied().unwrap_or(check.tolerance)
    }

    pub fn factorization_order(&self) -> usize {
        self.factorization_order.unwrap_or(self.taylor_order)
    }
}

pub struct Bundled {
    pub name: &'static str,
    pub text: &'static str,
}

pub const BUNDLED: &[Bundled] = &[
    Bundled { name: "flat-static-1d", text: include_str!("../scenarios/flat-static-1d.toml") },
    Bundled { name: "flat-static-2d", text: include_str!("../scenarios/flat-static-2d.toml") },
    Bundled { name: "flat-static-3d", text: include_str!("../scenarios/flat-static-3d.toml") },
    Bundled { name: "desitter-3d", text: include_str!("../scenarios/desitter-3d.toml") },
    Bundled { name: "desitter-scalar-1d", text: include_str!("../scenarios/desitter-scalar-1d.toml") },
    Bundled { name: "non-einstein-control", text: include_str!("../scenarios/non-einstein-control.toml") },
];

pub fn bundled(name: &str) -> Option<&'static Bundled> {
    BUNDLED.iter().find(|b| b.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
model = "scalar"
dim = 1
n_per_axis = 8
metric = { preset = "static-flat" }
"#;

    #[test]
    fn defaults_are_filled() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.taylor_order, 6);
        assert_eq!(s.factorization_order, Some(6));
        assert_eq!(s.s_nodes, 48);
        assert_eq!(s.stages, Stage::ALL.to_vec());
        assert_eq!(s.role, Role::Standard);
    }

    #[test]
    fn field_errors_name_the_field() {
        let cases = [
            (MINIMAL.replace("n_per_axis = 8", "n_per_axis = 7"), "n_per_axis"),
            (MINIMAL.replace("dim = 1", "dim = 4"), "dim"),
            (MINIMAL.replace("dim = 1\n", ""), "dim"),
            (format!("{MINIMAL}bogus = 1\n"), "bogus"),
            (format!("{MINIMAL}t_half = -1.0\n"), "t_half"),
            (format!("{MINIMAL}[tolerances]\n\"hadamard.sum\" = 1e-9\n\"dtn.smothing\" = 1.0\n"), "tolerances.dtn.smothing"),
            (MINIMAL.replace("static-flat", "kerr"), "metric"),
            (MINIMAL.replace("model = \"scalar\"", "model = \"gravity\""), "dim"),
        ];
        for (text, field) in cases {
            let err = Scenario::from_toml(&text).unwrap_err();
            assert_eq!(err.field, field, "{err}");
        }
        let err = Scenario::from_toml(&format!("{MINIMAL}[tolerances]\n\"dtn.smothing\" = 1.0\n")).unwrap_err();
        assert!(err.message.contains("dtn.smoothing"), "{err}");
    }

    #[test]
    fn bundled_scenarios_parse() {
        for b in BUNDLED {
            let s = Scenario::from_toml(b.text).unwrap_or_else(|e| panic!("{}: {e}", b.name));
            assert_eq!(s.name, b.name);
        }
    }

    #[test]
    fn metric_presets_round_trip() {
        for m in [
            MetricSpec::StaticFlat,
            MetricSpec::DeSitter { hubble: 0.5 },
            MetricSpec::ConformalPolynomial { coeffs: vec![1.0, 0.0, 1.0] },
        ] {
            let s = Scenario { metric: m.clone(), ..Scenario::from_toml(MINIMAL).unwrap() };
            let back = Scenario::from_toml(&toml::to_string(&s).unwrap()).unwrap();
            assert_eq!(back, s);
        }
        assert!(!MetricSpec::DeSitter { hubble: 0.2 }.is_static());
        assert!(MetricSpec::ConformalPolynomial { coeffs: vec![2.0] }.is_static());
    }
}
