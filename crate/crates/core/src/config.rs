//! Run configuration.
//!
//! Configs are TOML documents. Every section and key is listed below; any
//! other key is rejected, as is a key given twice.
//!
//! ```toml
//! [coefficients]          # a0 b0 a1 b1 c1 a2 b2, all required if present
//! [machine]               # d h t_d0p t_q0p x_d x_dp x_q x_qp omega0 (alternative to [coefficients])
//! [plant]                 # x0 = [x1, x2, x3, x4], x_qp, x_dp (defaults to x_qp)
//! [inputs]                # u1 u2 y1_bus y2_bus: number or [[t, v], ...] table
//! [integration]           # step, horizon
//! [drem]                  # gamma (number or [g1, g2]), gain_scale ("auto" | number),
//!                         # poles, theta0, full_theta, angle ("arcsin" | "atan2"), enabled
//! [overparam]             # gamma (number, 5 diagonal entries or 5x5 rows), theta0, enabled
//! [gradient]              # gamma (number, 2 diagonal entries or 2x2 rows), x0, offset, enabled
//! [sweep]                 # drem_gamma, overparam_gamma, gradient_gamma: lists of numbers
//! [output]                # dir, label, columns
//! [report]                # threshold, hold
//! [verify]                # samples, seed, range
//! ```
//!
//! When both `[coefficients]` and `[machine]` are given, the coefficients win
//! and the machine constants only supply `x_qp`/`x_dp` defaults.

use std::path::PathBuf;

use serde::Deserialize;

use crate::baselines::scaled_identity;
use crate::drem::DEFAULT_POLES;
use crate::error::{Error, Result};
use crate::gpebo::AngleMode;
use crate::linalg::{Mat2, Mat5};
use crate::model::{derive_coefficients, DerivedCoefficients, MachineParams, PlantState};
use crate::output::{resolve_columns, COLUMNS};
use crate::sim::{DremSettings, GainScale, GradientSettings, InputSignals, OverparamSettings, Scenario, Signal};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    coefficients: Option<DerivedCoefficients>,
    machine: Option<MachineParams>,
    plant: Option<RawPlant>,
    inputs: Option<RawInputs>,
    integration: Option<RawIntegration>,
    drem: Option<RawDrem>,
    overparam: Option<RawOverparam>,
    gradient: Option<RawGradient>,
    sweep: Option<RawSweep>,
    output: Option<RawOutput>,
    report: Option<RawReport>,
    verify: Option<RawVerify>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    x0: Option<[f64; 4]>,
    x_qp: Option<f64>,
    x_dp: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInputs {
    u1: Option<Signal>,
    u2: Option<Signal>,
    y1_bus: Option<Signal>,
    y2_bus: Option<Signal>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegration {
    step: Option<f64>,
    horizon: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GainSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScaleSpec {
    Number(f64),
    Word(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrem {
    enabled: Option<bool>,
    gamma: Option<GainSpec>,
    gain_scale: Option<ScaleSpec>,
    poles: Option<[f64; 4]>,
    theta0: Option<[f64; 2]>,
    full_theta: Option<bool>,
    angle: Option<AngleMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverparam {
    enabled: Option<bool>,
    gamma: Option<GainSpec>,
    theta0: Option<[f64; 5]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGradient {
    enabled: Option<bool>,
    gamma: Option<GainSpec>,
    x0: Option<[f64; 2]>,
    offset: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    drem_gamma: Option<Vec<f64>>,
    overparam_gamma: Option<Vec<f64>>,
    gradient_gamma: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    label: Option<String>,
    columns: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    threshold: Option<f64>,
    hold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    samples: Option<usize>,
    seed: Option<u64>,
    range: Option<f64>,
}

/// Sweep lists; each entry becomes an independent run with one observer enabled.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSpec {
    pub drem_gamma: Vec<f64>,
    pub overparam_gamma: Vec<f64>,
    pub gradient_gamma: Vec<f64>,
}

impl SweepSpec {
    pub fn is_empty(&self) -> bool {
        self.drem_gamma.is_empty() && self.overparam_gamma.is_empty() && self.gradient_gamma.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputOptions {
    pub dir: PathBuf,
    pub label: String,
    pub columns: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportOptions {
    /// Bound on `‖(x̃3, x̃4)‖∞`.
    pub threshold: f64,
    /// Time the bound must hold (s).
    pub hold: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { threshold: 1e-3, hold: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub range: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { samples: 10_000, seed: 2024, range: 10.0 }
    }
}

/// Observer settings as configured, including sections with `enabled = false`.
/// Sweeps start from these.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObserverTemplates {
    pub drem: Option<DremSettings>,
    pub overparam: Option<OverparamSettings>,
    pub gradient: Option<GradientSettings>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub output: OutputOptions,
    pub sweep: SweepSpec,
    pub report: ReportOptions,
    pub verify: VerifyOptions,
    pub observers: ObserverTemplates,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn require<T>(value: Option<T>, key: &str, missing: &mut Vec<String>) -> Option<T> {
    if value.is_none() {
        missing.push(key.to_string());
    }
    value
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::validation(key, format!("must be a positive finite number, got {v}")))
    }
}

fn gain_matrix<const N: usize>(key: &str, spec: GainSpec) -> Result<[[f64; N]; N]> {
    let m = match spec {
        GainSpec::Scalar(g) => scaled_identity(positive(key, g)?),
        GainSpec::Diagonal(d) => {
            if d.len() != N {
                return Err(Error::validation(key, format!("expected {N} diagonal entries, got {}", d.len())));
            }
            let mut m = [[0.0; N]; N];
            for (i, v) in d.into_iter().enumerate() {
                m[i][i] = positive(key, v)?;
            }
            m
        }
        GainSpec::Matrix(rows) => {
            if rows.len() != N || rows.iter().any(|r| r.len() != N) {
                return Err(Error::validation(key, format!("expected a {N}x{N} matrix")));
            }
            let mut m = [[0.0; N]; N];
            for (i, row) in rows.into_iter().enumerate() {
                m[i].copy_from_slice(&row);
            }
            m
        }
    };
    crate::baselines::check_spd(key, &m).map_err(|e| Error::validation(key, e.to_string()))?;
    Ok(m)
}

fn drem_gains(spec: GainSpec) -> Result<[f64; 2]> {
    let key = "drem.gamma";
    match spec {
        GainSpec::Scalar(g) => {
            let g = positive(key, g)?;
            Ok([g, g])
        }
        GainSpec::Diagonal(d) if d.len() == 2 => Ok([positive(key, d[0])?, positive(key, d[1])?]),
        _ => Err(Error::validation(key, "expected a number or a list of two numbers")),
    }
}

fn sweep_list(key: &str, values: Option<Vec<f64>>, section_present: bool) -> Result<Vec<f64>> {
    let values = values.unwrap_or_default();
    if !values.is_empty() && !section_present {
        let section = key.trim_start_matches("sweep.").trim_end_matches("_gamma");
        return Err(Error::validation(key, format!("sweeping requires a [{section}] section")));
    }
    for v in &values {
        positive(key, *v)?;
    }
    Ok(values)
}

/// Parses and validates a TOML run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;

    let mut missing = Vec::new();
    let plant = raw.plant.unwrap_or_default();
    let inputs = raw.inputs.unwrap_or_default();
    let integration = raw.integration.unwrap_or_default();

    if raw.coefficients.is_none() && raw.machine.is_none() {
        missing.push("coefficients (or machine)".to_string());
    }
    let x0 = require(plant.x0, "plant.x0", &mut missing);
    let x_qp = plant.x_qp.or(raw.machine.map(|m| m.x_qp));
    let x_qp = require(x_qp, "plant.x_qp", &mut missing);
    let u1 = require(inputs.u1, "inputs.u1", &mut missing);
    let u2 = require(inputs.u2, "inputs.u2", &mut missing);
    let y1_bus = require(inputs.y1_bus, "inputs.y1_bus", &mut missing);
    let y2_bus = require(inputs.y2_bus, "inputs.y2_bus", &mut missing);
    let step = require(integration.step, "integration.step", &mut missing);
    let horizon = require(integration.horizon, "integration.horizon", &mut missing);
    let drem_gamma = raw.drem.as_ref().and_then(|d| d.gamma.as_ref()).is_some();
    if raw.drem.is_some() && !drem_gamma {
        missing.push("drem.gamma".to_string());
    }
    if raw.overparam.as_ref().is_some_and(|o| o.gamma.is_none()) {
        missing.push("overparam.gamma".to_string());
    }
    if raw.gradient.as_ref().is_some_and(|g| g.gamma.is_none()) {
        missing.push("gradient.gamma".to_string());
    }
    if !missing.is_empty() {
        return Err(Error::MissingKeys(missing));
    }
    let (x0, x_qp) = (x0.unwrap(), x_qp.unwrap());
    let (step, horizon) = (step.unwrap(), horizon.unwrap());

    let coefficients = match (raw.coefficients, raw.machine) {
        (Some(c), _) => c,
        (None, Some(m)) => derive_coefficients(&m).map_err(|e| Error::validation("machine", e.to_string()))?,
        (None, None) => unreachable!("checked above"),
    };
    coefficients
        .validate()
        .map_err(|e| Error::validation("coefficients", e.to_string()))?;
    if let (Some(m), Some(x)) = (raw.machine, plant.x_qp) {
        if m.x_qp != x {
            return Err(Error::validation("plant.x_qp", format!("{x} disagrees with machine.x_qp = {}", m.x_qp)));
        }
    }
    positive("plant.x_qp", x_qp)?;
    let x_dp = plant.x_dp.or(raw.machine.map(|m| m.x_dp)).unwrap_or(x_qp);
    if !crate::model::transient_reactances_equal(x_dp, x_qp) {
        return Err(Error::validation("plant.x_dp", format!("must equal x_qp ({x_qp}), got {x_dp}")));
    }
    positive("integration.step", step)?;
    positive("integration.horizon", horizon)?;
    if horizon < step {
        return Err(Error::validation("integration.horizon", format!("{horizon} is shorter than one step ({step})")));
    }

    let signals = InputSignals {
        u1: u1.unwrap(),
        u2: u2.unwrap(),
        y1_bus: y1_bus.unwrap(),
        y2_bus: y2_bus.unwrap(),
    };
    for (key, sig) in [
        ("inputs.u1", &signals.u1),
        ("inputs.u2", &signals.u2),
        ("inputs.y1_bus", &signals.y1_bus),
        ("inputs.y2_bus", &signals.y2_bus),
    ] {
        sig.validate(key).map_err(|e| Error::validation(key, e.to_string()))?;
    }

    let mut angle_mode = AngleMode::default();
    let drem_present = raw.drem.is_some();
    let (drem_on, drem) = match raw.drem {
        Some(d) => {
            angle_mode = d.angle.unwrap_or_default();
            let gain_scale = match d.gain_scale {
                None => GainScale::Auto,
                Some(ScaleSpec::Word(w)) if w == "auto" => GainScale::Auto,
                Some(ScaleSpec::Word(w)) => {
                    return Err(Error::validation("drem.gain_scale", format!("expected \"auto\" or a number, got {w:?}")))
                }
                Some(ScaleSpec::Number(v)) => GainScale::Fixed(positive("drem.gain_scale", v)?),
            };
            let poles = d.poles.unwrap_or(DEFAULT_POLES);
            crate::drem::validate_poles(&poles).map_err(|e| Error::validation("drem.poles", e.to_string()))?;
            let settings = DremSettings {
                gamma: drem_gains(d.gamma.expect("checked above"))?,
                gain_scale,
                poles,
                theta0: d.theta0.unwrap_or([0.0; 2]),
                full_theta: d.full_theta.unwrap_or(false),
            };
            (d.enabled.unwrap_or(true), Some(settings))
        }
        None => (false, None),
    };

    let overparam_present = raw.overparam.is_some();
    let (overparam_on, overparam) = match raw.overparam {
        Some(o) => {
            let gamma: Mat5 = gain_matrix("overparam.gamma", o.gamma.expect("checked above"))?;
            let settings = OverparamSettings { gamma, theta0: o.theta0.unwrap_or([0.0; 5]) };
            (o.enabled.unwrap_or(true), Some(settings))
        }
        None => (false, None),
    };

    let gradient_present = raw.gradient.is_some();
    let (gradient_on, gradient) = match raw.gradient {
        Some(g) => {
            let gamma: Mat2 = gain_matrix("gradient.gamma", g.gamma.expect("checked above"))?;
            let offset = g.offset.unwrap_or(0.0);
            if !offset.is_finite() {
                return Err(Error::validation("gradient.offset", "must be finite"));
            }
            let x0 = g.x0.unwrap_or([0.0; 2]).map(|v| v + offset);
            let settings = GradientSettings { gamma, x0 };
            (g.enabled.unwrap_or(true), Some(settings))
        }
        None => (false, None),
    };

    let sweep = raw.sweep.unwrap_or_default();
    let sweep = SweepSpec {
        drem_gamma: sweep_list("sweep.drem_gamma", sweep.drem_gamma, drem_present)?,
        overparam_gamma: sweep_list("sweep.overparam_gamma", sweep.overparam_gamma, overparam_present)?,
        gradient_gamma: sweep_list("sweep.gradient_gamma", sweep.gradient_gamma, gradient_present)?,
    };

    let output = raw.output.unwrap_or_default();
    let label = output.label.unwrap_or_else(|| "run".to_string());
    if label.is_empty() || label.contains(['/', '\\']) {
        return Err(Error::validation("output.label", format!("{label:?} is not a valid file stem")));
    }
    let columns = match output.columns {
        Some(cols) => resolve_columns(&cols).map_err(|e| Error::validation("output.columns", e.to_string()))?,
        None => COLUMNS.iter().map(|c| c.name.to_string()).collect(),
    };

    let report = raw.report.unwrap_or_default();
    let defaults = ReportOptions::default();
    let report = ReportOptions {
        threshold: positive("report.threshold", report.threshold.unwrap_or(defaults.threshold))?,
        hold: report.hold.unwrap_or(defaults.hold),
    };
    if !(report.hold >= 0.0 && report.hold.is_finite()) {
        return Err(Error::validation("report.hold", format!("must be non-negative, got {}", report.hold)));
    }

    let verify = raw.verify.unwrap_or_default();
    let vd = VerifyOptions::default();
    let verify = VerifyOptions {
        samples: verify.samples.unwrap_or(vd.samples),
        seed: verify.seed.unwrap_or(vd.seed),
        range: positive("verify.range", verify.range.unwrap_or(vd.range))?,
    };
    if verify.samples == 0 {
        return Err(Error::validation("verify.samples", "must be at least 1"));
    }

    let scenario = Scenario {
        label: label.clone(),
        coefficients,
        x_dp,
        x_qp,
        x0: PlantState::new(x0[0], x0[1], x0[2], x0[3]),
        inputs: signals,
        step,
        horizon,
        angle_mode,
        drem: drem.clone().filter(|_| drem_on),
        overparam: overparam.clone().filter(|_| overparam_on),
        gradient: gradient.clone().filter(|_| gradient_on),
    };
    scenario.validate().map_err(|e| Error::validation("scenario", e.to_string()))?;

    Ok(RunConfig {
        scenario,
        output: OutputOptions { dir: output.dir.unwrap_or_else(|| PathBuf::from("out")), label, columns },
        sweep,
        report,
        verify,
        observers: ObserverTemplates { drem, overparam, gradient },
    })
}

/// Presets shipped with the crate, by name.
pub const PRESETS: [(&str, &str); 3] = [
    ("smib_vi_a", include_str!("../presets/smib_vi_a.toml")),
    ("lemma1_cert", include_str!("../presets/lemma1_cert.toml")),
    ("drem_identities", include_str!("../presets/drem_identities.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Reads a config from a file path, falling back to a preset of that name.
pub fn load_config(path_or_preset: &str) -> Result<RunConfig> {
    let path = std::path::Path::new(path_or_preset);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return parse_config(&text);
    }
    match preset(path_or_preset) {
        Some(text) => parse_config(text),
        None => Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or preset"))),
    }
}
