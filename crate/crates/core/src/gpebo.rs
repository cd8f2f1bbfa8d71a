//! Parameter-estimation-based observer for `(x3, x4)`.
//!
//! The dynamic extension `ξ̇ = A(t)ξ + (0, c1 u2)`, `Φ̇ = A(t)Φ` turns state
//! observation into estimating the constant `θ = (x3, x4)(0) - ξ(0)`, since
//! `(x3, x4) = ξ + Φθ`. Squaring that identity against the measured `Y1`
//! yields a regression `y_E = ψᵀΘ` in `Θ = (θ1, θ2, θ1θ2, θ1², θ2²)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::pmu::{DerivedSignals, MeasMatrix, Y1_TOLERANCE};

/// Slack allowed on the arcsin argument before it is treated as out of domain.
pub const ARCSIN_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionState {
    pub xi: [f64; 2],
    pub phi: Mat2,
}

impl Default for ExtensionState {
    fn default() -> Self {
        Self {
            xi: [0.0; 2],
            phi: [[1.0, 0.0], [0.0, 1.0]],
        }
    }
}

impl ExtensionState {
    pub(crate) const LEN: usize = 6;

    pub(crate) fn read(s: &[f64]) -> Self {
        Self {
            xi: [s[0], s[1]],
            phi: [[s[2], s[3]], [s[4], s[5]]],
        }
    }

    pub(crate) fn write(&self, out: &mut [f64]) {
        out[..6].copy_from_slice(&[self.xi[0], self.xi[1], self.phi[0][0], self.phi[0][1], self.phi[1][0], self.phi[1][1]]);
    }

    /// `ξ + Φθ`.
    pub fn propagate(&self, theta: [f64; 2]) -> [f64; 2] {
        let p = &self.phi;
        [
            self.xi[0] + p[0][0] * theta[0] + p[0][1] * theta[1],
            self.xi[1] + p[1][0] * theta[0] + p[1][1] * theta[1],
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorSample {
    pub y_e: f64,
    pub psi: [f64; 5],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate(pub [f64; 2]);

/// `Θ(θ) = (θ1, θ2, θ1θ2, θ1², θ2²)`.
pub fn lifted_parameters(theta: [f64; 2]) -> [f64; 5] {
    let [t1, t2] = theta;
    [t1, t2, t1 * t2, t1 * t1, t2 * t2]
}

/// Angle reconstruction rule for `x̂1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleMode {
    /// Principal-branch arcsin of the sine identity.
    #[default]
    Arcsin,
    /// Two-argument arctangent using both the sine and cosine identities.
    Atan2,
}

pub fn extension_rhs(e: &ExtensionState, a: &MeasMatrix, u2: f64, c1: f64) -> ExtensionState {
    let axi = a.mul_vec(e.xi);
    ExtensionState {
        xi: [axi[0], axi[1] + c1 * u2],
        phi: a.mul_mat(&e.phi),
    }
}

pub fn build_regressor(e: &ExtensionState, y1: f64) -> RegressorSample {
    let [xi1, xi2] = e.xi;
    let p = &e.phi;
    RegressorSample {
        y_e: y1 - (xi1 * xi1 + xi2 * xi2),
        psi: [
            2.0 * (p[0][0] * xi1 + p[1][0] * xi2),
            2.0 * (p[0][1] * xi1 + p[1][1] * xi2),
            2.0 * (p[0][0] * p[0][1] + p[1][0] * p[1][1]),
            p[0][0] * p[0][0] + p[1][0] * p[1][0],
            p[0][1] * p[0][1] + p[1][1] * p[1][1],
        ],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub x1: f64,
    pub x3: f64,
    pub x4: f64,
}

pub fn reconstruct_states(
    e: &ExtensionState,
    th: &ThetaEstimate,
    d: &DerivedSignals,
    mode: AngleMode,
) -> Result<Reconstruction> {
    if !(d.y1 > Y1_TOLERANCE) {
        return Err(Error::LossOfObservability { t: f64::NAN, y1: d.y1, tol: Y1_TOLERANCE });
    }
    let [x3, x4] = e.propagate(th.0);
    let sine = x3 * d.y3 - x4 * d.y2;
    let x1 = match mode {
        AngleMode::Arcsin => {
            let arg = sine / d.y1;
            if !(arg.abs() <= 1.0 + ARCSIN_SLACK) {
                return Err(Error::ReconstructionDomain { t: f64::NAN, arg });
            }
            arg.clamp(-1.0, 1.0).asin()
        }
        AngleMode::Atan2 => sine.atan2(x3 * d.y2 + x4 * d.y3),
    };
    Ok(Reconstruction { x1, x3, x4 })
}
