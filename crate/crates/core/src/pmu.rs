//! PMU measurement map and the measurable signals built from it.
//!
//! Besides the raw channels `y1..y6` this module produces `z0`, the squared
//! voltage magnitude `Y1 = x3² + x4²`, the rotated pair `(Y2, Y3) = e^{J x1}(x3, x4)`
//! and the time-varying matrix `A(t)` that makes the `(x3, x4)` dynamics linear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DerivedCoefficients, PlantState};

/// Below this `Y1` (pu²) the derived signals are not computed.
pub const Y1_TOLERANCE: f64 = 1e-9;
/// Negative `y4²` radicands down to this value are clamped to zero.
pub const RADICAND_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PmuSample {
    /// Terminal voltage phase θ_t (rad).
    pub y1: f64,
    /// Terminal voltage magnitude V_t (pu).
    pub y2: f64,
    /// Terminal current phase φ_t (rad).
    pub y3: f64,
    /// Terminal current magnitude I_t (pu).
    pub y4: f64,
    /// Active power P_t (pu).
    pub y5: f64,
    /// Reactive power Q_t (pu).
    pub y6: f64,
}

impl PmuSample {
    pub fn to_array(self) -> [f64; 6] {
        [self.y1, self.y2, self.y3, self.y4, self.y5, self.y6]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivedSignals {
    pub z0: f64,
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
}

/// 2×2 matrix `A(t)` of the linear `(x3, x4)` dynamics, row-major.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasMatrix(pub [[f64; 2]; 2]);

impl MeasMatrix {
    pub const ZERO: MeasMatrix = MeasMatrix([[0.0; 2]; 2]);

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn mul_mat(&self, b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let a = &self.0;
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }
}

/// Samples the PMU channels at plant state `x` and bus signals `(y1, y2)`.
pub fn measure(x: &PlantState, y1: f64, y2: f64, x_qp: f64) -> Result<PmuSample> {
    if !(y2 > 0.0) {
        return Err(Error::InvalidParameters(format!("terminal voltage y2 must be positive, got {y2}")));
    }
    let (s, c) = (x.x1 - y1).sin_cos();
    let radicand = (x.x3 * x.x3 + x.x4 * x.x4 + y2 * y2 - 2.0 * y2 * (x.x4 * c + x.x3 * s)) / (x_qp * x_qp);
    let y4_sq = if radicand >= 0.0 {
        radicand
    } else if radicand >= -RADICAND_TOLERANCE {
        0.0
    } else {
        return Err(Error::InconsistentState(format!("negative terminal current radicand {radicand:e}")));
    };
    let y5 = y2 / x_qp * (x.x4 * s - x.x3 * c);
    let y6 = y2 / x_qp * (x.x4 * c + x.x3 * s - y2);
    Ok(PmuSample {
        y1,
        y2,
        y3: current_phase(x, y1, y2, x_qp),
        y4: y4_sq.sqrt(),
        y5,
        y6,
    })
}

/// Phase of the terminal current phasor `(Id + jIq) e^{j(x1 - π/2)}`, wrapped to (−π, π].
fn current_phase(x: &PlantState, y1: f64, y2: f64, x_qp: f64) -> f64 {
    let (id, iq) = dq_currents(x, y1, y2, x_qp, x_qp);
    if id == 0.0 && iq == 0.0 {
        return 0.0;
    }
    let phase = iq.atan2(id) + x.x1 - std::f64::consts::FRAC_PI_2;
    let wrapped = phase.sin().atan2(phase.cos());
    if wrapped == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        wrapped
    }
}

/// Direct- and quadrature-axis stator currents.
pub fn dq_currents(x: &PlantState, y1: f64, y2: f64, x_dp: f64, x_qp: f64) -> (f64, f64) {
    let (s, c) = (x.x1 - y1).sin_cos();
    ((x.x4 - y2 * c) / x_dp, (-x.x3 + y2 * s) / x_qp)
}

pub fn derived_signals(s: &PmuSample, x_qp: f64) -> Result<DerivedSignals> {
    if !(s.y2 > 0.0) {
        return Err(Error::InvalidParameters(format!("terminal voltage y2 must be positive, got {}", s.y2)));
    }
    let z0 = s.y6 + s.y2 * s.y2 / x_qp;
    let y1 = x_qp * x_qp * s.y4 * s.y4 + 2.0 * x_qp * s.y6 + s.y2 * s.y2;
    if !(y1 > Y1_TOLERANCE) {
        return Err(Error::LossOfObservability { t: f64::NAN, y1, tol: Y1_TOLERANCE });
    }
    // e^{J x1}(x3, x4) = e^{J y1} e^{J (x1 - y1)}(x3, x4)
    let p = -x_qp * s.y5 / s.y2;
    let q = x_qp * s.y6 / s.y2 + s.y2;
    let (sn, cs) = s.y1.sin_cos();
    Ok(DerivedSignals {
        z0,
        y1,
        y2: cs * p - sn * q,
        y3: sn * p + cs * q,
    })
}

pub fn meas_matrix(d: &DerivedSignals, s: &PmuSample, c: &DerivedCoefficients, x_qp: f64) -> Result<MeasMatrix> {
    if !(d.y1 > Y1_TOLERANCE) {
        return Err(Error::LossOfObservability { t: f64::NAN, y1: d.y1, tol: Y1_TOLERANCE });
    }
    let k2 = c.b2 * x_qp / d.y1;
    let k1 = c.b1 * x_qp / d.y1;
    Ok(MeasMatrix([
        [-c.a2 + k2 * d.z0, k2 * s.y5],
        [-k1 * s.y5, -c.a1 + k1 * d.z0],
    ]))
}

/// The alternative output map `N_{y2}(v)` with `v = (x1 - y1, x3, x4)`.
pub fn n_map(v: [f64; 3], y2: f64) -> [f64; 3] {
    let (s, c) = v[0].sin_cos();
    [
        -2.0 * y2 * (v[1] * c + v[2] * s),
        v[1] * s - v[2] * c,
        v[1] * c + v[2] * s,
    ]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Certificate {
    pub jacobian: [[f64; 3]; 3],
    pub null_vector: [f64; 3],
    /// `‖∇N · null_vector‖∞`.
    pub residual: f64,
}

impl Certificate {
    pub fn determinant(&self) -> f64 {
        crate::linalg::det3(&self.jacobian)
    }
}

/// Analytic Jacobian of [`n_map`] together with its explicit null direction.
pub fn noninjectivity_certificate(v: [f64; 3], y2: f64) -> Certificate {
    let (s, c) = v[0].sin_cos();
    let jacobian = [
        [2.0 * y2 * (v[1] * s - v[2] * c), -2.0 * y2 * c, -2.0 * y2 * s],
        [v[1] * c + v[2] * s, s, -c],
        [-v[1] * s + v[2] * c, c, s],
    ];
    let null_vector = [1.0, -v[2], v[1]];
    let residual = jacobian
        .iter()
        .map(|row| row.iter().zip(&null_vector).map(|(a, b)| a * b).sum::<f64>().abs())
        .fold(0.0, f64::max);
    Certificate {
        jacobian,
        null_vector,
        residual,
    }
}
