//! Dynamic regressor extension and mixing.
//!
//! The scalar regression `y_E = ψᵀΘ` is passed through the bank
//! `H(s) = col(1, d2/(s+d2), …, d5/(s+d5))`, stacked into `Y_E = ΨΘ` and
//! multiplied by `adj(Ψ)`, which leaves five decoupled scalar regressions
//! `𝒴_i = Δ Θ_i` with `Δ = det Ψ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpebo::RegressorSample;
use crate::linalg::{adjugate5, cramer5, det, mat_mul5, mat_vec5, max_abs, Mat5};

pub const DEFAULT_POLES: [f64; 4] = [2.0, 4.0, 6.0, 8.0];

/// Number of filtered channels: `y_E` followed by the five regressor entries.
pub const CHANNELS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub poles: [f64; 4],
    /// `states[k][c]`: output of filter `d_{k+2}/(s+d_{k+2})` on channel `c`.
    pub states: [[f64; CHANNELS]; 4],
}

impl FilterBank {
    pub const LEN: usize = 4 * CHANNELS;

    pub fn new(poles: [f64; 4]) -> Result<Self> {
        validate_poles(&poles)?;
        Ok(Self {
            poles,
            states: [[0.0; CHANNELS]; 4],
        })
    }

    pub(crate) fn read(poles: [f64; 4], s: &[f64]) -> Self {
        let mut states = [[0.0; CHANNELS]; 4];
        for (k, row) in states.iter_mut().enumerate() {
            row.copy_from_slice(&s[k * CHANNELS..(k + 1) * CHANNELS]);
        }
        Self { poles, states }
    }

    pub(crate) fn write_states(states: &[[f64; CHANNELS]; 4], out: &mut [f64]) {
        for (k, row) in states.iter().enumerate() {
            out[k * CHANNELS..(k + 1) * CHANNELS].copy_from_slice(row);
        }
    }
}

pub fn validate_poles(poles: &[f64; 4]) -> Result<()> {
    for (i, d) in poles.iter().enumerate() {
        if !(d.is_finite() && *d > 0.0) {
            return Err(Error::InvalidParameters(format!("filter pole d{} = {d} must be positive", i + 2)));
        }
        for (j, e) in poles.iter().enumerate().skip(i + 1) {
            if d == e {
                return Err(Error::InvalidParameters(format!(
                    "filter poles d{} and d{} coincide ({d}); the extended regressor would be singular",
                    i + 2,
                    j + 2
                )));
            }
        }
    }
    Ok(())
}

/// Unity-DC-gain first-order lags driven by `(y_E, ψ)`.
pub fn filter_rhs(f: &FilterBank, input: &RegressorSample) -> [[f64; CHANNELS]; 4] {
    let u = channel_input(input);
    let mut out = [[0.0; CHANNELS]; 4];
    for ((row, state), d) in out.iter_mut().zip(&f.states).zip(f.poles) {
        for ((o, x), v) in row.iter_mut().zip(state).zip(u) {
            *o = d * (v - x);
        }
    }
    out
}

fn channel_input(r: &RegressorSample) -> [f64; CHANNELS] {
    [r.y_e, r.psi[0], r.psi[1], r.psi[2], r.psi[3], r.psi[4]]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedRegression {
    pub y_e: [f64; 5],
    pub psi: Mat5,
}

impl ExtendedRegression {
    /// First row is the unfiltered regression, rows 2..5 the filter outputs.
    pub fn assemble(f: &FilterBank, r: &RegressorSample) -> Self {
        let mut y_e = [0.0; 5];
        let mut psi = [[0.0; 5]; 5];
        y_e[0] = r.y_e;
        psi[0] = r.psi;
        for (k, state) in f.states.iter().enumerate() {
            y_e[k + 1] = state[0];
            psi[k + 1].copy_from_slice(&state[1..]);
        }
        Self { y_e, psi }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MixedRegression {
    pub delta: f64,
    pub cal_y: [f64; 5],
}

pub fn mix(r: &ExtendedRegression) -> MixedRegression {
    MixedRegression {
        delta: det(&r.psi),
        cal_y: mat_vec5(&adjugate5(&r.psi), &r.y_e),
    }
}

/// `𝒴` by Cramer's rule, without forming the adjugate.
pub fn mix_cramer(r: &ExtendedRegression) -> [f64; 5] {
    cramer5(&r.psi, &r.y_e)
}

/// Residuals of the mixing identities, each divided by the magnitude its
/// terms are built from: `max|Ψ|⁵` for `adj(Ψ)Ψ - ΔI` and `max|Ψ|⁴ max|Y_E|`
/// for the difference between the adjugate and Cramer forms of `𝒴`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixingResidual {
    pub adjugate: f64,
    pub cramer: f64,
}

pub fn mixing_residual(r: &ExtendedRegression) -> MixingResidual {
    let adj = adjugate5(&r.psi);
    let prod = mat_mul5(&adj, &r.psi);
    let delta = det(&r.psi);
    let mut adj_err = 0.0f64;
    for (i, row) in prod.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let want = if i == j { delta } else { 0.0 };
            adj_err = adj_err.max((v - want).abs());
        }
    }
    let a = mat_vec5(&adj, &r.y_e);
    let c = mix_cramer(r);
    let mix_err = a.iter().zip(&c).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let m = max_abs(&r.psi);
    let y = max_abs(&[r.y_e]);
    let ratio = |err: f64, scale: f64| if scale > 0.0 { err / scale } else { err };
    MixingResidual {
        adjugate: ratio(adj_err, m.powi(5)),
        cramer: ratio(mix_err, m.powi(4) * y),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimators {
    pub gamma: [f64; 2],
    pub theta_hat: [f64; 2],
    /// All five `Θ̂_i`, each adapted with `gamma[0]`.
    pub full: Option<[f64; 5]>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarDerivative {
    pub theta_hat: [f64; 2],
    pub full: Option<[f64; 5]>,
}

/// `θ̂̇_k = -γ_k Δ (Δ θ̂_k - 𝒴_k)`.
pub fn scalar_update(est: &ScalarEstimators, m: &MixedRegression) -> ScalarDerivative {
    let step = |g: f64, th: f64, y: f64| -g * m.delta * (m.delta * th - y);
    ScalarDerivative {
        theta_hat: [
            step(est.gamma[0], est.theta_hat[0], m.cal_y[0]),
            step(est.gamma[1], est.theta_hat[1], m.cal_y[1]),
        ],
        full: est.full.map(|f| {
            let mut out = [0.0; 5];
            for ((o, th), y) in out.iter_mut().zip(f).zip(m.cal_y) {
                *o = step(est.gamma[0], th, y);
            }
            out
        }),
    }
}

/// Trapezoidal `∫ Δ²` over a uniform grid of spacing `h`.
pub fn excitation_integral(delta: &[f64], h: f64) -> f64 {
    cumulative_excitation(delta, h).last().copied().unwrap_or(0.0)
}

/// Running trapezoidal `∫₀^{t_k} Δ²` at every grid point.
pub fn cumulative_excitation(delta: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(delta.len());
    let mut acc = 0.0;
    for (k, d) in delta.iter().enumerate() {
        if k > 0 {
            let prev = delta[k - 1];
            acc += 0.5 * h * (prev * prev + d * d);
        }
        out.push(acc);
    }
    out
}
