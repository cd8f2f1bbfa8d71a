//! Fourth-order flux-decay synchronous generator model.
//!
//! State `x = (δ, ω, E_d', E_q')`, inputs `u = (P_m, E_f)` and the terminal
//! bus phase/magnitude `(θ_t, V_t)` which are treated as exogenous signals.
//!
//! ```text
//! ẋ1 = x2
//! ẋ2 = -a0 x2 + b0 (u1 - y5)
//! ẋ3 = -a2 x3 + b2 y2 sin(x1 - y1)
//! ẋ4 = -a1 x4 + b1 y2 cos(x1 - y1) + c1 u2
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical machine constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineParams {
    /// Damping factor (pu).
    pub d: f64,
    /// Inertia constant (s).
    pub h: f64,
    /// Direct-axis transient open-circuit time constant (s).
    pub t_d0p: f64,
    /// Quadrature-axis transient open-circuit time constant (s).
    pub t_q0p: f64,
    pub x_d: f64,
    pub x_dp: f64,
    pub x_q: f64,
    pub x_qp: f64,
    /// Nominal synchronous speed (rad/s).
    pub omega0: f64,
}

impl MachineParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("D", self.d),
            ("H", self.h),
            ("T_d0p", self.t_d0p),
            ("T_q0p", self.t_q0p),
            ("x_d", self.x_d),
            ("x_dp", self.x_dp),
            ("x_q", self.x_q),
            ("x_qp", self.x_qp),
            ("omega0", self.omega0),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameters(format!("{name} must be positive, got {v}")));
            }
        }
        if !transient_reactances_equal(self.x_dp, self.x_qp) {
            return Err(Error::InvalidParameters(format!(
                "transient saliency is neglected: x_dp ({}) must equal x_qp ({})",
                self.x_dp, self.x_qp
            )));
        }
        Ok(())
    }
}

pub(crate) fn transient_reactances_equal(x_dp: f64, x_qp: f64) -> bool {
    (x_dp - x_qp).abs() <= 1e-12 * x_dp.abs().max(x_qp.abs())
}

/// Rate coefficients of the plant right-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedCoefficients {
    pub a0: f64,
    pub b0: f64,
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl DerivedCoefficients {
    /// Coefficient set of the single-machine infinite-bus experiment.
    pub const SMIB: DerivedCoefficients = DerivedCoefficients {
        a0: 13.2893,
        b0: 6.6447,
        a1: 0.268,
        b1: 0.1564,
        c1: 0.1116,
        a2: 7.7462,
        b2: 4.5204,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameters(format!(
                    "coefficient {name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("a0", self.a0),
            ("b0", self.b0),
            ("a1", self.a1),
            ("b1", self.b1),
            ("c1", self.c1),
            ("a2", self.a2),
            ("b2", self.b2),
        ]
    }
}

pub fn derive_coefficients(p: &MachineParams) -> Result<DerivedCoefficients> {
    p.validate()?;
    let c = DerivedCoefficients {
        a0: p.omega0 * p.d / (2.0 * p.h),
        b0: p.omega0 / (2.0 * p.h),
        a1: (1.0 / p.t_d0p) * (p.x_d / p.x_dp),
        b1: (1.0 / p.t_d0p) * (p.x_d - p.x_dp) / p.x_dp,
        c1: 1.0 / p.t_d0p,
        a2: (1.0 / p.t_q0p) * (p.x_q / p.x_qp),
        b2: (1.0 / p.t_q0p) * (p.x_q - p.x_qp) / p.x_qp,
    };
    c.validate()?;
    Ok(c)
}

/// `(δ, ω, E_d', E_q')`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

impl PlantState {
    pub const fn new(x1: f64, x2: f64, x3: f64, x4: f64) -> Self {
        Self { x1, x2, x3, x4 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// `x3² + x4²`, the squared internal voltage magnitude.
    pub fn voltage_sq(&self) -> f64 {
        self.x3 * self.x3 + self.x4 * self.x4
    }
}

/// Instantaneous inputs and exogenous bus signals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    /// Mechanical power `P_m` (pu).
    pub u1: f64,
    /// Field voltage `E_f` (pu).
    pub u2: f64,
    /// Terminal bus voltage phase `θ_t` (rad).
    pub y1_bus: f64,
    /// Terminal bus voltage magnitude `V_t` (pu).
    pub y2_bus: f64,
}

impl Inputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.y2_bus.is_finite() && self.y2_bus > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "terminal voltage magnitude must be positive, got {}",
                self.y2_bus
            )));
        }
        Ok(())
    }
}

/// Plant vector field; `y5` is the electrical power measured at the same state.
pub fn plant_rhs(x: &PlantState, u: &Inputs, c: &DerivedCoefficients, y5: f64) -> PlantState {
    let (s, co) = (x.x1 - u.y1_bus).sin_cos();
    PlantState {
        x1: x.x2,
        x2: -c.a0 * x.x2 + c.b0 * (u.u1 - y5),
        x3: -c.a2 * x.x3 + c.b2 * u.y2_bus * s,
        x4: -c.a1 * x.x4 + c.b1 * u.y2_bus * co + c.c1 * u.u2,
    }
}
