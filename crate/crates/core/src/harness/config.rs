//! Sweep configuration files (TOML).
//!
//! ```toml
//! [system]
//! channels = 12
//! lambda_s = 7.2
//! mu_p = 0.45
//! h_s = 1.0
//! r_s = 1.0
//!
//! [[scenario]]
//! label = "CAF(4,2)"
//! mode = "caf"
//! b_min = 2
//! b_max = 4
//!
//! [sweep]
//! variable = "lambda_p"
//! grid = [0.5, 1.0, 1.5]
//! engines = "both"
//!
//! [sim]
//! events = 1100000
//! replications = 20
//! seed = 2012
//! ```

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::des::SimConfig;
use crate::model::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Adaptive aggregation and fragmentation between `b_min` and `b_max`.
    Caf,
    /// Constant aggregation: `b_max == b_min`.
    Cca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub params: SystemParams,
    pub mode: Mode,
}

impl Scenario {
    pub fn caf(b_max: f64, b_min: f64, params: SystemParams) -> Self {
        Scenario {
            label: format!("CAF({b_max},{b_min})"),
            params: SystemParams { b_min, b_max, ..params },
            mode: Mode::Caf,
        }
    }

    pub fn cca(b: f64, params: SystemParams) -> Self {
        Scenario {
            label: format!("CCA({b},{b})"),
            params: SystemParams { b_min: b, b_max: b, ..params },
            mode: Mode::Cca,
        }
    }

    /// The five bandwidth settings compared in the reference evaluation.
    pub fn reference_set() -> Vec<Scenario> {
        let base = SystemParams::reference(1.0, 1.0, 0.5);
        vec![
            Scenario::caf(4.0, 2.0, base),
            Scenario::cca(4.0, base),
            Scenario::cca(2.0, base),
            Scenario::caf(4.0, 1.0, base),
            Scenario::caf(3.0, 2.0, base),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    LambdaP,
    LambdaS,
    MuP,
}

impl SweepVariable {
    pub fn apply(self, p: &SystemParams, value: f64) -> SystemParams {
        let mut p = *p;
        match self {
            SweepVariable::LambdaP => p.lambda_p = value,
            SweepVariable::LambdaS => p.lambda_s = value,
            SweepVariable::MuP => p.mu_p = value,
        }
        p
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::LambdaP => "lambda_p",
            SweepVariable::LambdaS => "lambda_s",
            SweepVariable::MuP => "mu_p",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engines {
    Analytical,
    Simulation,
    Both,
}

impl Engines {
    pub fn analytical(self) -> bool {
        matches!(self, Engines::Analytical | Engines::Both)
    }

    pub fn simulation(self) -> bool {
        matches!(self, Engines::Simulation | Engines::Both)
    }
}

/// Simulation settings shared by every sweep point; parameters and seeds
/// are filled in per point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub max_events: u64,
    pub warmup_events: u64,
    pub replications: u32,
    pub seed: u64,
    pub track_spectrum_map: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            max_events: SimConfig::DEFAULT_EVENTS,
            warmup_events: SimConfig::DEFAULT_EVENTS / 10,
            replications: SimConfig::DEFAULT_REPLICATIONS,
            seed: 0,
            track_spectrum_map: false,
        }
    }
}

impl SimSettings {
    /// Sets the event horizon and resets warm-up to a tenth of it.
    pub fn set_events(&mut self, max_events: u64) {
        self.max_events = max_events;
        self.warmup_events = max_events / 10;
    }

    pub fn config_for(&self, params: SystemParams, seed: u64) -> SimConfig {
        SimConfig {
            params,
            max_events: self.max_events,
            seed,
            replications: self.replications,
            warmup_events: self.warmup_events,
            track_spectrum_map: self.track_spectrum_map,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementSettings {
    /// Largest accepted relative error.
    pub tolerance: f64,
    /// Denominator floor for the two probabilities.
    pub probability_floor: f64,
}

impl Default for AgreementSettings {
    fn default() -> Self {
        AgreementSettings { tolerance: 0.03, probability_floor: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: Vec<Scenario>,
    pub sweep_variable: SweepVariable,
    pub grid: Vec<f64>,
    pub engines: Engines,
    pub sim: SimSettings,
    pub agreement: AgreementSettings,
}

/// λ_p ∈ {0.5, 1.0, …, 5.0}.
pub fn default_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 * 0.5).collect()
}

impl SweepSpec {
    /// All five reference scenarios over the default λ_p grid.
    pub fn reference() -> Self {
        SweepSpec {
            base: Scenario::reference_set(),
            sweep_variable: SweepVariable::LambdaP,
            grid: default_grid(),
            engines: Engines::Both,
            sim: SimSettings::default(),
            agreement: AgreementSettings::default(),
        }
    }

    /// Every violated invariant; locations are not known here.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut labels = HashSet::new();
        if self.base.is_empty() {
            out.push(Violation::new("scenario", None, "at least one scenario is required"));
        }
        for (k, s) in self.base.iter().enumerate() {
            check_scenario(k, s, None, &mut out);
            if !labels.insert(s.label.as_str()) {
                out.push(Violation::new(
                    format!("scenario[{k}].label"),
                    None,
                    format!("duplicate label `{}`", s.label),
                ));
            }
        }
        check_grid(self.sweep_variable, &self.grid, None, &mut out);
        check_sim(&self.sim, None, &mut out);
        if !(self.agreement.tolerance > 0.0) {
            out.push(Violation::new("agreement.tolerance", None, "must be > 0"));
        }
        if !(self.agreement.probability_floor >= 0.0) {
            out.push(Violation::new("agreement.probability_floor", None, "must be >= 0"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid { path: None, violations: v })
        }
    }
}

fn check_scenario(k: usize, s: &Scenario, line: Option<usize>, out: &mut Vec<Violation>) {
    if s.label.trim().is_empty() {
        out.push(Violation::new(format!("scenario[{k}].label"), line, "must not be empty"));
    }
    for (field, reason) in s.params.violations() {
        out.push(Violation::new(format!("scenario[{k}].{field}"), line, reason));
    }
    if s.mode == Mode::Cca && s.params.b_max != s.params.b_min {
        out.push(Violation::new(
            format!("scenario[{k}].b_max"),
            line,
            format!(
                "cca mode requires b_max == b_min, got b_max = {} and b_min = {}",
                s.params.b_max, s.params.b_min
            ),
        ));
    }
}

fn check_grid(var: SweepVariable, grid: &[f64], line: Option<usize>, out: &mut Vec<Violation>) {
    if grid.is_empty() {
        out.push(Violation::new("sweep.grid", line, "must not be empty"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        out.push(Violation::new("sweep.grid", line, "must be strictly increasing"));
    }
    let zero_ok = var == SweepVariable::LambdaP;
    if let Some(v) = grid
        .iter()
        .find(|&&v| !v.is_finite() || v < 0.0 || (v == 0.0 && !zero_ok))
    {
        let need = if zero_ok { ">= 0" } else { "> 0" };
        out.push(Violation::new("sweep.grid", line, format!("values must be {need}, got {v}")));
    }
}

fn check_sim(sim: &SimSettings, line: Option<usize>, out: &mut Vec<Violation>) {
    if sim.max_events == 0 {
        out.push(Violation::new("sim.events", line, "must be positive"));
    }
    if sim.warmup_events >= sim.max_events {
        out.push(Violation::new(
            "sim.warmup_events",
            line,
            format!("must be below events ({}), got {}", sim.max_events, sim.warmup_events),
        ));
    }
    if sim.replications == 0 {
        out.push(Violation::new("sim.replications", line, "must be at least 1"));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    /// 1-based line in the source file, when known.
    pub line: Option<usize>,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> Self {
        Violation { field: field.into(), line, message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: `{}` {}", self.field, self.message),
            None => write!(f, "`{}` {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("invalid configuration{}:\n{}", path_suffix(path), list(violations))]
    Invalid { path: Option<PathBuf>, violations: Vec<Violation> },
}

fn path_suffix(path: &Option<PathBuf>) -> String {
    path.as_ref().map(|p| format!(" {}", p.display())).unwrap_or_default()
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    system: Spanned<RawParams>,
    #[serde(rename = "scenario", default)]
    scenarios: Vec<Spanned<RawScenario>>,
    sweep: Option<Spanned<RawSweep>>,
    sim: Option<Spanned<RawSim>>,
    agreement: Option<Spanned<RawAgreement>>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
struct RawParams {
    channels: Option<u32>,
    lambda_p: Option<f64>,
    lambda_s: Option<f64>,
    mu_p: Option<f64>,
    h_s: Option<f64>,
    r_s: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    label: String,
    mode: Mode,
    b_min: f64,
    b_max: Option<f64>,
    channels: Option<u32>,
    lambda_p: Option<f64>,
    lambda_s: Option<f64>,
    mu_p: Option<f64>,
    h_s: Option<f64>,
    r_s: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    variable: Option<SweepVariable>,
    grid: Option<Vec<f64>>,
    engines: Option<Engines>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    events: Option<u64>,
    warmup_events: Option<u64>,
    replications: Option<u32>,
    seed: Option<u64>,
    track_spectrum_map: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgreement {
    tolerance: Option<f64>,
    probability_floor: Option<f64>,
}

fn line_of(src: &str, span: Range<usize>) -> usize {
    let end = span.start.min(src.len());
    src[..end].bytes().filter(|&b| b == b'\n').count() + 1
}

fn column_of(src: &str, offset: usize) -> usize {
    let end = offset.min(src.len());
    end - src[..end].rfind('\n').map_or(0, |k| k + 1) + 1
}

/// Reads, parses and validates a sweep configuration.
pub fn load_config(path: impl AsRef<Path>) -> Result<SweepSpec, ConfigError> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&src, path)
}

pub fn parse_config(src: &str, path: &Path) -> Result<SweepSpec, ConfigError> {
    let raw: RawFile = toml::from_str(src).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        ConfigError::Parse {
            path: path.to_path_buf(),
            line: line_of(src, offset..offset),
            column: column_of(src, offset),
            message: e.message().trim().to_string(),
        }
    })?;

    let mut violations = Vec::new();
    let system_line = line_of(src, raw.system.span());
    let system = *raw.system.get_ref();
    let reference = SystemParams::reference(1.0, 1.0, 1.0);

    let mut base = Vec::new();
    let mut lines = Vec::new();
    for sc in &raw.scenarios {
        let line = line_of(src, sc.span());
        let sc = sc.get_ref();
        let pick = |o: Option<f64>, s: Option<f64>, d: f64| o.or(s).unwrap_or(d);
        let params = SystemParams {
            channels: sc.channels.or(system.channels).unwrap_or(reference.channels),
            b_min: sc.b_min,
            b_max: sc.b_max.unwrap_or(match sc.mode {
                Mode::Cca => sc.b_min,
                Mode::Caf => f64::NAN,
            }),
            lambda_p: pick(sc.lambda_p, system.lambda_p, reference.lambda_p),
            lambda_s: pick(sc.lambda_s, system.lambda_s, reference.lambda_s),
            mu_p: pick(sc.mu_p, system.mu_p, reference.mu_p),
            h_s: pick(sc.h_s, system.h_s, reference.h_s),
            r_s: pick(sc.r_s, system.r_s, reference.r_s),
        };
        base.push(Scenario { label: sc.label.clone(), params, mode: sc.mode });
        lines.push(line);
    }
    if base.is_empty() {
        violations.push(Violation::new("scenario", Some(system_line), "at least one [[scenario]] is required"));
    }
    let mut labels = HashSet::new();
    for (k, (s, &line)) in base.iter().zip(&lines).enumerate() {
        if s.mode == Mode::Caf && s.params.b_max.is_nan() {
            violations.push(Violation::new(format!("scenario[{k}].b_max"), Some(line), "is required in caf mode"));
            continue;
        }
        check_scenario(k, s, Some(line), &mut violations);
        if !labels.insert(s.label.as_str()) {
            violations.push(Violation::new(
                format!("scenario[{k}].label"),
                Some(line),
                format!("duplicate label `{}`", s.label),
            ));
        }
    }

    let (sweep_variable, grid, engines, sweep_line) = match &raw.sweep {
        Some(sw) => {
            let line = line_of(src, sw.span());
            let sw = sw.get_ref();
            (
                sw.variable.unwrap_or(SweepVariable::LambdaP),
                sw.grid.clone().unwrap_or_else(default_grid),
                sw.engines.unwrap_or(Engines::Both),
                Some(line),
            )
        }
        None => (SweepVariable::LambdaP, default_grid(), Engines::Both, None),
    };
    check_grid(sweep_variable, &grid, sweep_line, &mut violations);

    let mut sim = SimSettings::default();
    if let Some(raw_sim) = &raw.sim {
        let line = line_of(src, raw_sim.span());
        let r = raw_sim.get_ref();
        if let Some(e) = r.events {
            sim.set_events(e);
        }
        if let Some(w) = r.warmup_events {
            sim.warmup_events = w;
        }
        if let Some(n) = r.replications {
            sim.replications = n;
        }
        if let Some(s) = r.seed {
            sim.seed = s;
        }
        if let Some(t) = r.track_spectrum_map {
            sim.track_spectrum_map = t;
        }
        check_sim(&sim, Some(line), &mut violations);
    }

    let mut agreement = AgreementSettings::default();
    if let Some(a) = &raw.agreement {
        let line = line_of(src, a.span());
        let r = a.get_ref();
        if let Some(t) = r.tolerance {
            agreement.tolerance = t;
            if !(t > 0.0) {
                violations.push(Violation::new("agreement.tolerance", Some(line), "must be > 0"));
            }
        }
        if let Some(f) = r.probability_floor {
            agreement.probability_floor = f;
            if !(f >= 0.0) {
                violations.push(Violation::new("agreement.probability_floor", Some(line), "must be >= 0"));
            }
        }
    }

    if !violations.is_empty() {
        return Err(ConfigError::Invalid { path: Some(path.to_path_buf()), violations });
    }
    Ok(SweepSpec { base, sweep_variable, grid, engines, sim, agreement })
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = r#"
[system]
channels = 12
lambda_s = 7.2
mu_p = 0.45
h_s = 1.0
r_s = 1.0

[[scenario]]
label = "CAF(4,2)"
mode = "caf"
b_min = 2
b_max = 4

[[scenario]]
label = "CCA(4,4)"
mode = "cca"
b_min = 4

[[scenario]]
label = "CCA(2,2)"
mode = "cca"
b_min = 2
b_max = 2

[[scenario]]
label = "CAF(4,1)"
mode = "caf"
b_min = 1
b_max = 4

[[scenario]]
label = "CAF(3,2)"
mode = "caf"
b_min = 2
b_max = 3

[sim]
events = 110000
replications = 4
seed = 11
"#;

    fn parse(src: &str) -> Result<SweepSpec, ConfigError> {
        parse_config(src, Path::new("test.toml"))
    }

    #[test]
    fn reference_config_parses() {
        let spec = parse(REFERENCE).unwrap();
        assert_eq!(spec.base.len(), 5);
        assert_eq!(spec.base[1].params.b_max, 4.0);
        assert_eq!(spec.base[0].params, SystemParams::reference(2.0, 4.0, spec.base[0].params.lambda_p));
        assert_eq!(spec.grid, default_grid());
        assert_eq!(spec.sim.max_events, 110_000);
        assert_eq!(spec.sim.warmup_events, 11_000);
        assert_eq!(spec.engines, Engines::Both);
        let labels: Vec<_> = spec.base.iter().map(|s| s.label.as_str()).collect();
        let want: Vec<_> = Scenario::reference_set().into_iter().map(|s| s.label).collect();
        assert_eq!(labels, want);
    }

    #[test]
    fn half_channel_minimum_is_rejected_with_line() {
        let src = REFERENCE.replace("b_min = 1\n", "b_min = 0.5\n");
        match parse(&src) {
            Err(ConfigError::Invalid { violations, .. }) => {
                assert_eq!(violations.len(), 1);
                assert_eq!(violations[0].field, "scenario[3].b_min");
                let line = violations[0].line.unwrap();
                let text: Vec<_> = src.lines().collect();
                assert!(text[line - 1].contains("[[scenario]]") || text[line - 1].contains("label"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn cca_with_unequal_bounds_is_rejected() {
        let src = REFERENCE.replace("mode = \"cca\"\nb_min = 4", "mode = \"cca\"\nb_min = 2\nb_max = 4");
        let err = parse(&src).unwrap_err();
        let ConfigError::Invalid { violations, .. } = err else { panic!() };
        assert!(violations.iter().any(|v| v.field == "scenario[1].b_max" && v.message.contains("cca")));
    }

    #[test]
    fn reports_every_violation() {
        let src = REFERENCE
            .replace("b_min = 1\n", "b_min = 0.5\n")
            .replace("replications = 4", "replications = 0")
            .replace("[sim]", "[sweep]\ngrid = [1.0, 0.5]\n\n[sim]");
        let ConfigError::Invalid { violations, .. } = parse(&src).unwrap_err() else { panic!() };
        let fields: Vec<_> = violations.iter().map(|v| v.field.as_str()).collect();
        assert_eq!(fields, vec!["scenario[3].b_min", "sweep.grid", "sim.replications"]);
        assert!(violations.iter().all(|v| v.line.is_some()));
    }

    #[test]
    fn parse_errors_carry_location() {
        let src = "[system]\nchannels = 12\nlambda_s = = 3\n";
        match parse(src) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let src = format!("{REFERENCE}\n[bogus]\nx = 1\n");
        assert!(matches!(parse(&src), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_config("/nonexistent/cfg.toml"), Err(ConfigError::Io { .. })));
    }

    #[test]
    fn programmatic_spec_validation() {
        let mut spec = SweepSpec::reference();
        assert!(spec.validate().is_ok());
        spec.base.push(spec.base[0].clone());
        spec.grid = vec![];
        let v = spec.violations();
        assert_eq!(v.len(), 2);
    }
}
