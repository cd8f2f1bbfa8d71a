//! CSV emission of trajectories.
//!
//! Every value is written in scientific notation with 17 significant digits,
//! so a CSV round-trips to the exact `f64`. Columns that do not apply to a
//! run (an observer that was not enabled) are written as `NaN`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{Record, Trajectory};

pub struct Column {
    pub name: &'static str,
    pub get: fn(&Record) -> f64,
}

const NAN: f64 = f64::NAN;

macro_rules! col {
    ($name:literal, |$r:ident| $body:expr) => {
        Column { name: $name, get: |$r: &Record| $body }
    };
}

/// Known columns in their default order.
pub static COLUMNS: &[Column] = &[
    col!("t", |r| r.t),
    col!("x1", |r| r.x.x1),
    col!("x2", |r| r.x.x2),
    col!("x3", |r| r.x.x3),
    col!("x4", |r| r.x.x4),
    col!("u1", |r| r.inputs.u1),
    col!("u2", |r| r.inputs.u2),
    col!("y1", |r| r.pmu.y1),
    col!("y2", |r| r.pmu.y2),
    col!("y3", |r| r.pmu.y3),
    col!("y4", |r| r.pmu.y4),
    col!("y5", |r| r.pmu.y5),
    col!("y6", |r| r.pmu.y6),
    col!("z0", |r| r.signals.z0),
    col!("Y1", |r| r.signals.y1),
    col!("Y2", |r| r.signals.y2),
    col!("Y3", |r| r.signals.y3),
    col!("A11", |r| r.a.0[0][0]),
    col!("A12", |r| r.a.0[0][1]),
    col!("A21", |r| r.a.0[1][0]),
    col!("A22", |r| r.a.0[1][1]),
    col!("xi1", |r| r.extension.map_or(NAN, |e| e.state.xi[0])),
    col!("xi2", |r| r.extension.map_or(NAN, |e| e.state.xi[1])),
    col!("Phi11", |r| r.extension.map_or(NAN, |e| e.state.phi[0][0])),
    col!("Phi12", |r| r.extension.map_or(NAN, |e| e.state.phi[0][1])),
    col!("Phi21", |r| r.extension.map_or(NAN, |e| e.state.phi[1][0])),
    col!("Phi22", |r| r.extension.map_or(NAN, |e| e.state.phi[1][1])),
    col!("det_Phi", |r| r.extension.map_or(NAN, |e| e.det_phi)),
    col!("cond_Phi", |r| r.extension.map_or(NAN, |e| e.cond_phi)),
    col!("yE", |r| r.extension.map_or(NAN, |e| e.regressor.y_e)),
    col!("psi1", |r| r.extension.map_or(NAN, |e| e.regressor.psi[0])),
    col!("psi2", |r| r.extension.map_or(NAN, |e| e.regressor.psi[1])),
    col!("psi3", |r| r.extension.map_or(NAN, |e| e.regressor.psi[2])),
    col!("psi4", |r| r.extension.map_or(NAN, |e| e.regressor.psi[3])),
    col!("psi5", |r| r.extension.map_or(NAN, |e| e.regressor.psi[4])),
    col!("Delta", |r| r.drem.map_or(NAN, |d| d.delta)),
    col!("int_Delta_sq", |r| r.drem.map_or(NAN, |d| d.int_delta_sq)),
    col!("calY1", |r| r.drem.map_or(NAN, |d| d.cal_y[0])),
    col!("calY2", |r| r.drem.map_or(NAN, |d| d.cal_y[1])),
    col!("calY3", |r| r.drem.map_or(NAN, |d| d.cal_y[2])),
    col!("calY4", |r| r.drem.map_or(NAN, |d| d.cal_y[3])),
    col!("calY5", |r| r.drem.map_or(NAN, |d| d.cal_y[4])),
    col!("theta1_hat", |r| r.drem.map_or(NAN, |d| d.theta_hat[0])),
    col!("theta2_hat", |r| r.drem.map_or(NAN, |d| d.theta_hat[1])),
    col!("Theta1_hat", |r| full(r, 0)),
    col!("Theta2_hat", |r| full(r, 1)),
    col!("Theta3_hat", |r| full(r, 2)),
    col!("Theta4_hat", |r| full(r, 3)),
    col!("Theta5_hat", |r| full(r, 4)),
    col!("drem_x1_hat", |r| r.drem.map_or(NAN, |d| d.estimate.x1)),
    col!("drem_x3_hat", |r| r.drem.map_or(NAN, |d| d.estimate.x3)),
    col!("drem_x4_hat", |r| r.drem.map_or(NAN, |d| d.estimate.x4)),
    col!("drem_x1_err", |r| r.drem_error().map_or(NAN, |e| e[0])),
    col!("drem_x3_err", |r| r.drem_error().map_or(NAN, |e| e[1])),
    col!("drem_x4_err", |r| r.drem_error().map_or(NAN, |e| e[2])),
    col!("op_Theta1_hat", |r| r.overparam.map_or(NAN, |o| o.theta_hat[0])),
    col!("op_Theta2_hat", |r| r.overparam.map_or(NAN, |o| o.theta_hat[1])),
    col!("op_Theta3_hat", |r| r.overparam.map_or(NAN, |o| o.theta_hat[2])),
    col!("op_Theta4_hat", |r| r.overparam.map_or(NAN, |o| o.theta_hat[3])),
    col!("op_Theta5_hat", |r| r.overparam.map_or(NAN, |o| o.theta_hat[4])),
    col!("op_e1", |r| r.overparam.map_or(NAN, |o| o.consistency[0])),
    col!("op_e2", |r| r.overparam.map_or(NAN, |o| o.consistency[1])),
    col!("op_e3", |r| r.overparam.map_or(NAN, |o| o.consistency[2])),
    col!("op_e2_sq", |r| r.overparam.map_or(NAN, |o| o.consistency_squared[1])),
    col!("op_e3_sq", |r| r.overparam.map_or(NAN, |o| o.consistency_squared[2])),
    col!("op_x1_hat", |r| r.overparam.map_or(NAN, |o| o.estimate.x1)),
    col!("op_x3_hat", |r| r.overparam.map_or(NAN, |o| o.estimate.x3)),
    col!("op_x4_hat", |r| r.overparam.map_or(NAN, |o| o.estimate.x4)),
    col!("op_x1_err", |r| r.overparam_error().map_or(NAN, |e| e[0])),
    col!("op_x3_err", |r| r.overparam_error().map_or(NAN, |e| e[1])),
    col!("op_x4_err", |r| r.overparam_error().map_or(NAN, |e| e[2])),
    col!("grad_x3_hat", |r| r.gradient.map_or(NAN, |g| g.x34_hat[0])),
    col!("grad_x4_hat", |r| r.gradient.map_or(NAN, |g| g.x34_hat[1])),
    col!("grad_x3_err", |r| r.gradient_error().map_or(NAN, |e| e[0])),
    col!("grad_x4_err", |r| r.gradient_error().map_or(NAN, |e| e[1])),
];

fn full(r: &Record, i: usize) -> f64 {
    r.drem.and_then(|d| d.full_theta).map_or(NAN, |f| f[i])
}

pub fn column(name: &str) -> Option<&'static Column> {
    COLUMNS.iter().find(|c| c.name == name)
}

/// Checks a user column selection against the registry, keeping its order.
pub fn resolve_columns(names: &[String]) -> Result<Vec<String>> {
    if names.is_empty() {
        return Err(Error::InvalidParameters("column selection is empty".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if column(n).is_none() {
            return Err(Error::InvalidParameters(format!("unknown column `{n}`")));
        }
        if !seen.insert(n.as_str()) {
            return Err(Error::InvalidParameters(format!("column `{n}` selected twice")));
        }
    }
    Ok(names.to_vec())
}

pub fn render_csv(traj: &Trajectory, columns: &[String]) -> Result<String> {
    let cols: Vec<&Column> = columns
        .iter()
        .map(|n| column(n).ok_or_else(|| Error::InvalidParameters(format!("unknown column `{n}`"))))
        .collect::<Result<_>>()?;
    let mut out = String::with_capacity(traj.records.len() * cols.len() * 24);
    out.push_str(&columns.join(","));
    out.push('\n');
    for r in &traj.records {
        for (i, c) in cols.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{:.16e}", (c.get)(r)).expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_csv(traj: &Trajectory, columns: &[String], path: &Path) -> Result<()> {
    let text = render_csv(traj, columns)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
