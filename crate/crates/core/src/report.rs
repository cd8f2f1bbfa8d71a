//! Run summaries and the cross-observer comparison table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::ReportOptions;
use crate::drem::{mixing_residual, ExtendedRegression, FilterBank};
use crate::sim::Trajectory;

/// Bounds on the invariant checks attached to every report.
pub const MEASUREMENT_IDENTITY_TOL: f64 = 1e-9;
pub const TRANSITION_IDENTITY_TOL: f64 = 1e-6;
pub const CRAMER_AGREEMENT_TOL: f64 = 1e-10;

/// The overparameterized estimator starts at zero, where its consistency
/// error vanishes; its reference magnitude is taken at this time (s).
pub const CONSISTENCY_REFERENCE_TIME: f64 = 2.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverKind {
    GpeboDrem,
    Overparam,
    Gradient,
}

impl ObserverKind {
    pub fn name(self) -> &'static str {
        match self {
            ObserverKind::GpeboDrem => "gpebo_drem",
            ObserverKind::Overparam => "overparam",
            ObserverKind::Gradient => "gradient",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    /// `‖ê‖∞` at the reference time.
    pub reference: f64,
    pub peak: f64,
    pub terminal: f64,
    /// Terminal `‖ê‖∞` of the squared-first-components variant.
    pub terminal_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverReport {
    pub observer: ObserverKind,
    pub gain: f64,
    pub effective_gain: f64,
    /// `None` when the threshold is never held long enough within the horizon.
    pub convergence_time: Option<f64>,
    /// `|x̃3|, |x̃4|` at the final record.
    pub terminal_error: [f64; 2],
    /// `|x̃1|` at the final record, when the angle is estimated and in domain.
    pub terminal_angle_error: Option<f64>,
    pub consistency: Option<ConsistencySummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), passed: value <= tolerance, value, tolerance }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:.3e} (tolerance {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub step: f64,
    pub horizon: f64,
    pub threshold: f64,
    pub hold: f64,
    pub observers: Vec<ObserverReport>,
    /// `∫₀ᵀ Δ²`.
    pub excitation_integral: Option<f64>,
    /// `min |Δ|` after the filter settling time.
    pub min_abs_delta: Option<f64>,
    pub max_abs_delta: Option<f64>,
    pub max_cond_phi: Option<f64>,
    pub angle_domain_violations: usize,
    pub checks: Vec<CheckResult>,
}

impl RunReport {
    pub fn checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// First grid time after which `errors` stays below `threshold` for `hold`
/// seconds, with the whole hold window inside the record.
pub fn convergence_time(times: &[f64], errors: &[f64], threshold: f64, hold: f64) -> Option<f64> {
    let slack = 1e-9 * times.get(1).map_or(1.0, |t1| t1 - times[0]);
    let mut start: Option<usize> = None;
    for (k, (&t, &e)) in times.iter().zip(errors).enumerate() {
        if e < threshold {
            let s = *start.get_or_insert(k);
            if t - times[s] >= hold - slack {
                return Some(times[s]);
            }
        } else {
            start = None;
        }
    }
    None
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.is_nan() || m.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn observer_errors(traj: &Trajectory, kind: ObserverKind) -> Vec<f64> {
    traj.records
        .iter()
        .map(|r| match kind {
            ObserverKind::GpeboDrem => r.drem_error().map(|e| inf_norm(&e[1..])),
            ObserverKind::Overparam => r.overparam_error().map(|e| inf_norm(&e[1..])),
            ObserverKind::Gradient => r.gradient_error().map(|e| inf_norm(&e)),
        })
        .map(|e| e.unwrap_or(f64::NAN))
        .collect()
}

pub fn observer_report(traj: &Trajectory, kind: ObserverKind, opts: &ReportOptions) -> Option<ObserverReport> {
    let last = traj.records.last()?;
    let (gain, effective_gain, e) = match kind {
        ObserverKind::GpeboDrem => (traj.nominal_drem_gamma()?[0], traj.drem_gamma?[0], last.drem_error()?),
        ObserverKind::Overparam => {
            let g = traj.overparam_gamma?;
            (g, g, last.overparam_error()?)
        }
        ObserverKind::Gradient => {
            let g = traj.gradient_gamma?;
            let [e3, e4] = last.gradient_error()?;
            (g, g, [f64::NAN, e3, e4])
        }
    };
    let terminal_error = [e[1].abs(), e[2].abs()];
    let terminal_angle_error = Some(e[0].abs()).filter(|v| v.is_finite());
    let times = traj.times();
    let convergence_time = convergence_time(&times, &observer_errors(traj, kind), opts.threshold, opts.hold);
    let consistency = (kind == ObserverKind::Overparam).then(|| {
        let norms: Vec<f64> = traj.records.iter().map(|r| inf_norm(&r.overparam.unwrap().consistency)).collect();
        let k_ref = ((CONSISTENCY_REFERENCE_TIME / traj.step).round() as usize).min(norms.len() - 1);
        ConsistencySummary {
            reference: norms[k_ref],
            peak: norms.iter().copied().fold(0.0, f64::max),
            terminal: *norms.last().unwrap(),
            terminal_squared: inf_norm(&last.overparam.unwrap().consistency_squared),
        }
    });
    Some(ObserverReport {
        observer: kind,
        gain,
        effective_gain,
        convergence_time,
        terminal_error,
        terminal_angle_error,
        consistency,
    })
}

/// Invariant checks that every trajectory should satisfy to roundoff.
pub fn trajectory_checks(traj: &Trajectory) -> Vec<CheckResult> {
    let mut y1_identity = 0.0f64;
    let mut rotation = 0.0f64;
    let mut transition: Option<f64> = None;
    let mut cramer: Option<f64> = None;
    for r in &traj.records {
        let s = &r.signals;
        y1_identity = y1_identity.max((s.y1 - (r.x.x3 * r.x.x3 + r.x.x4 * r.x.x4)).abs());
        rotation = rotation.max((s.y2 * s.y2 + s.y3 * s.y3 - s.y1).abs());
        if let Some(e) = r.extension {
            let [p3, p4] = e.state.propagate(traj.theta_true);
            let d = (p3 - r.x.x3).abs().max((p4 - r.x.x4).abs());
            transition = Some(transition.unwrap_or(0.0).max(d));
        }
        if let (Some(d), Some(e), Some(poles)) = (r.drem, r.extension, traj.poles) {
            let bank = FilterBank { poles, states: d.filters };
            let res = mixing_residual(&ExtendedRegression::assemble(&bank, &e.regressor));
            cramer = Some(cramer.unwrap_or(0.0).max(res.cramer));
        }
    }
    let mut checks = vec![
        CheckResult::at_most("Y1 equals x3^2 + x4^2", y1_identity, MEASUREMENT_IDENTITY_TOL),
        CheckResult::at_most("Y2^2 + Y3^2 equals Y1", rotation, MEASUREMENT_IDENTITY_TOL),
    ];
    if let Some(v) = transition {
        checks.push(CheckResult::at_most("x34 equals xi + Phi theta", v, TRANSITION_IDENTITY_TOL));
    }
    if let Some(v) = cramer {
        checks.push(CheckResult::at_most("Cramer mixing matches adjugate", v, CRAMER_AGREEMENT_TOL));
    }
    checks
}

pub fn run_report(traj: &Trajectory, opts: &ReportOptions) -> RunReport {
    let observers = [ObserverKind::GpeboDrem, ObserverKind::Overparam, ObserverKind::Gradient]
        .into_iter()
        .filter_map(|k| observer_report(traj, k, opts))
        .collect();
    let settle = traj.settling_time();
    let deltas: Option<Vec<(f64, f64)>> = traj.records.iter().map(|r| r.drem.map(|d| (r.t, d.delta))).collect();
    let (min_abs_delta, max_abs_delta) = match &deltas {
        Some(ds) => {
            let after = ds.iter().filter(|(t, _)| *t >= settle).map(|(_, d)| d.abs());
            let min = after.fold(f64::INFINITY, f64::min);
            let max = ds.iter().map(|(_, d)| d.abs()).fold(0.0, f64::max);
            (Some(min).filter(|m| m.is_finite()), Some(max))
        }
        None => (None, None),
    };
    RunReport {
        label: traj.label.clone(),
        step: traj.step,
        horizon: traj.horizon,
        threshold: opts.threshold,
        hold: opts.hold,
        observers,
        excitation_integral: traj.records.last().and_then(|r| r.drem).map(|d| d.int_delta_sq),
        min_abs_delta,
        max_abs_delta,
        max_cond_phi: traj
            .records
            .iter()
            .map(|r| r.extension.map(|e| e.cond_phi))
            .collect::<Option<Vec<_>>>()
            .map(|c| c.into_iter().fold(0.0, f64::max)),
        angle_domain_violations: traj.angle_domain_violations,
        checks: trajectory_checks(traj),
    }
}

/// Convergence times ordered by increasing gain, non-converged runs as `+∞`.
fn times_by_gain(rows: &[(&RunReport, &ObserverReport)], kind: ObserverKind) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, o)| o.observer == kind)
        .map(|(_, o)| (o.gain, o.convergence_time.unwrap_or(f64::INFINITY)))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Strictly decreasing, treating `+∞ > +∞` as false.
pub fn strictly_decreasing(times: &[f64]) -> bool {
    times.windows(2).all(|w| w[1] < w[0])
}

fn fmt_time(t: Option<f64>) -> String {
    t.map_or("not converged".to_string(), |t| format!("{t:.3}"))
}

pub fn compare_report(reports: &[RunReport]) -> String {
    let rows: Vec<(&RunReport, &ObserverReport)> =
        reports.iter().flat_map(|r| r.observers.iter().map(move |o| (r, o))).collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:<11} {:>10} {:>11} {:>14} {:>11} {:>11} {:>11}",
        "run", "observer", "gain", "eff. gain", "t_conv [s]", "|x3 err|", "|x4 err|", "|e|(T)"
    );
    for (r, o) in &rows {
        let e = o.consistency.map_or("-".to_string(), |c| format!("{:.3e}", c.terminal));
        let _ = writeln!(
            out,
            "{:<28} {:<11} {:>10.3e} {:>11.3e} {:>14} {:>11.3e} {:>11.3e} {:>11}",
            r.label,
            o.observer.name(),
            o.gain,
            o.effective_gain,
            fmt_time(o.convergence_time),
            o.terminal_error[0],
            o.terminal_error[1],
            e
        );
    }

    for (r, o) in rows.iter().filter(|(_, o)| o.observer == ObserverKind::Overparam) {
        let c = o.consistency.expect("overparam rows carry consistency");
        let persists = c.terminal >= 0.1 * c.reference;
        if persists || o.convergence_time.is_none() {
            let _ = writeln!(
                out,
                "FLAG {} (gain {:.1e}): overparameterized estimate does not converge; |e|(T) = {:.3e}, reference {:.3e}{}",
                r.label,
                o.gain,
                c.terminal,
                c.reference,
                if o.convergence_time.is_none() { ", state error above threshold" } else { "" }
            );
        }
    }

    let drem = times_by_gain(&rows, ObserverKind::GpeboDrem);
    if drem.len() >= 2 {
        let times: Vec<f64> = drem.iter().map(|p| p.1).collect();
        let _ = writeln!(
            out,
            "gpebo_drem convergence time strictly decreasing in gain: {}",
            if strictly_decreasing(&times) { "yes" } else { "no" }
        );
    }
    let best = |kind| {
        times_by_gain(&rows, kind).into_iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
    };
    let (bd, bg) = (best(ObserverKind::GpeboDrem), best(ObserverKind::Gradient));
    if !drem.is_empty() && rows.iter().any(|(_, o)| o.observer == ObserverKind::Gradient) {
        let show = |t: f64| if t.is_finite() { format!("{t:.3} s") } else { "not converged".into() };
        let _ = writeln!(
            out,
            "time scales: best gpebo_drem {}, best gradient {}; gpebo_drem faster: {}",
            show(bd),
            show(bg),
            if bd < bg { "yes" } else { "no" }
        );
    }
    out
}
