//! Comparison schemes: a gradient estimator on the overparameterized
//! regression `y_E = ψᵀΘ`, and a gradient-descent observer that works
//! directly on `(x3, x4)` through the measured `Y1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpebo::RegressorSample;
use crate::linalg::{Mat2, Mat5};
use crate::pmu::MeasMatrix;

/// Rejects non-symmetric or non-positive-definite gains (Cholesky test).
pub fn check_spd<const N: usize>(name: &str, m: &[[f64; N]; N]) -> Result<()> {
    for i in 0..N {
        for j in 0..i {
            let tol = 1e-12 * m[i][j].abs().max(m[j][i].abs()).max(1.0);
            if (m[i][j] - m[j][i]).abs() > tol {
                return Err(Error::InvalidParameters(format!("{name} is not symmetric")));
            }
        }
    }
    let mut l = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let pivot = m[i][i] - s;
                if !(pivot > 0.0) || !pivot.is_finite() {
                    return Err(Error::InvalidParameters(format!("{name} is not positive definite")));
                }
                l[i][i] = pivot.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(())
}

pub fn scaled_identity<const N: usize>(gain: f64) -> [[f64; N]; N] {
    let mut m = [[0.0; N]; N];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = gain;
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverparamEstimator {
    pub theta_hat: [f64; 5],
    pub gamma: Mat5,
}

impl OverparamEstimator {
    pub fn new(gamma: Mat5, theta_hat: [f64; 5]) -> Result<Self> {
        check_spd("overparameterized gain", &gamma)?;
        Ok(Self { theta_hat, gamma })
    }

    fn gamma_psi(&self, psi: &[f64; 5]) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (o, row) in out.iter_mut().zip(&self.gamma) {
            *o = row.iter().zip(psi).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// Advances the estimator by `h` with the regressor frozen at `r`.
    ///
    /// `Γψψᵀ` has rank one with eigenvalue `λ = ψᵀΓψ`, so the frozen flow is
    /// `Θ̂ ← Θ̂ - (1 - e^{-λh})/λ · Γψ (ψᵀΘ̂ - y_E)`, stable for any gain.
    pub fn exact_step(&mut self, r: &RegressorSample, h: f64) {
        let gpsi = self.gamma_psi(&r.psi);
        let lambda: f64 = r.psi.iter().zip(&gpsi).map(|(a, b)| a * b).sum();
        let weight = if lambda > 0.0 {
            -(-lambda * h).exp_m1() / lambda
        } else {
            h
        };
        let residual = prediction_error(&self.theta_hat, r);
        for (th, g) in self.theta_hat.iter_mut().zip(gpsi) {
            *th -= weight * g * residual;
        }
    }
}

fn prediction_error(theta: &[f64; 5], r: &RegressorSample) -> f64 {
    r.psi.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() - r.y_e
}

/// `Θ̂̇ = -Γψ(ψᵀΘ̂ - y_E)`.
pub fn overparam_update(o: &OverparamEstimator, r: &RegressorSample) -> [f64; 5] {
    let e = prediction_error(&o.theta_hat, r);
    o.gamma_psi(&r.psi).map(|g| -g * e)
}

/// `(Θ1Θ2 - Θ3, Θ1 - Θ4², Θ2 - Θ5²)`, evaluated exactly as that expression reads.
pub fn consistency_error(t: &[f64; 5]) -> [f64; 3] {
    [t[0] * t[1] - t[2], t[0] - t[3] * t[3], t[1] - t[4] * t[4]]
}

/// `(Θ1Θ2 - Θ3, Θ1² - Θ4, Θ2² - Θ5)`, which vanishes on every lifted `Θ(θ)`.
pub fn consistency_error_squared(t: &[f64; 5]) -> [f64; 3] {
    [t[0] * t[1] - t[2], t[0] * t[0] - t[3], t[1] * t[1] - t[4]]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradObserverState {
    pub x34_hat: [f64; 2],
    pub gamma: Mat2,
}

impl GradObserverState {
    pub fn new(gamma: Mat2, x34_hat: [f64; 2]) -> Result<Self> {
        check_spd("gradient observer gain", &gamma)?;
        Ok(Self { x34_hat, gamma })
    }
}

/// `𝒯(x3, x4) = ¼ [Y1 - (x3² + x4²)]²`.
pub fn gradient_cost(y1: f64, x: [f64; 2]) -> f64 {
    let r = y1 - (x[0] * x[0] + x[1] * x[1]);
    0.25 * r * r
}

/// `Γ [Y1 - |x̂|²] x̂ + A x̂ + (0, c1 u2)`; the first term is `-Γ∇𝒯(x̂)`.
pub fn grad_observer_rhs(g: &GradObserverState, y1: f64, a: &MeasMatrix, u2: f64, c1: f64) -> [f64; 2] {
    let descent = descent_term(g, y1);
    let copy = a.mul_vec(g.x34_hat);
    [descent[0] + copy[0], descent[1] + copy[1] + c1 * u2]
}

pub fn descent_term(g: &GradObserverState, y1: f64) -> [f64; 2] {
    let [x3, x4] = g.x34_hat;
    let r = y1 - (x3 * x3 + x4 * x4);
    let m = &g.gamma;
    [r * (m[0][0] * x3 + m[0][1] * x4), r * (m[1][0] * x3 + m[1][1] * x4)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpebo::lifted_parameters;
    use proptest::prelude::*;

    #[test]
    fn spd_checks() {
        assert!(check_spd("g", &scaled_identity::<5>(1e6)).is_ok());
        assert!(check_spd("g", &[[1.0, 2.0], [2.0, 1.0]]).is_err());
        assert!(check_spd("g", &[[1.0, 0.5], [0.4, 1.0]]).is_err());
        assert!(OverparamEstimator::new(scaled_identity(-1.0), [0.0; 5]).is_err());
    }

    #[test]
    fn zero_regressor_freezes_estimate() {
        let o = OverparamEstimator::new(scaled_identity(1e6), [0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let r = RegressorSample { y_e: 3.0, psi: [0.0; 5] };
        assert_eq!(overparam_update(&o, &r), [0.0; 5]);
    }

    #[test]
    fn solution_manifold_is_stationary() {
        let o = OverparamEstimator::new(scaled_identity(1e8), [1.0, 0.0, 0.0, 0.0, 2.0]).unwrap();
        let r = RegressorSample { y_e: 0.5 + 2.0 * 1.25, psi: [0.5, 3.0, -1.0, 7.0, 1.25] };
        assert_eq!(overparam_update(&o, &r), [0.0; 5]);
    }

    #[test]
    fn exact_step_lands_on_manifold_for_huge_gain() {
        let mut o = OverparamEstimator::new(scaled_identity(1e8), [0.0; 5]).unwrap();
        let r = RegressorSample { y_e: 0.4, psi: [0.2, -0.1, 0.3, 1.0, 1.5] };
        o.exact_step(&r, 1e-3);
        assert!(prediction_error(&o.theta_hat, &r).abs() < 1e-12);
    }

    #[test]
    fn exact_step_matches_small_gain_flow() {
        // For λh ≪ 1 one frozen exact step agrees with an explicit Euler step to O((λh)²).
        let mut o = OverparamEstimator::new(scaled_identity(1e-2), [0.3, 0.1, 0.0, 0.2, 0.1]).unwrap();
        let r = RegressorSample { y_e: 0.4, psi: [0.2, -0.1, 0.3, 1.0, 1.5] };
        let d = overparam_update(&o, &r);
        let before = o.theta_hat;
        o.exact_step(&r, 1e-3);
        for k in 0..5 {
            assert!((o.theta_hat[k] - (before[k] + 1e-3 * d[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn consistency_error_cases() {
        assert_eq!(consistency_error(&[0.0; 5]), [0.0; 3]);
        assert_eq!(consistency_error(&[1.0, 1.0, 0.0, 0.0, 0.0]), [1.0, 1.0, 1.0]);
        // The squared-first variant vanishes on lifted parameters; the verbatim one only
        // where θ_k = θ_k⁴.
        let lifted = lifted_parameters([0.4, 0.3]);
        assert!(consistency_error_squared(&lifted).iter().all(|v| v.abs() < 1e-16));
        let verbatim = consistency_error(&lifted);
        assert_eq!(verbatim[0], 0.0);
        assert!((verbatim[1] - (0.4 - 0.4f64.powi(4))).abs() < 1e-15);
        assert_eq!(consistency_error(&lifted_parameters([1.0, 0.0])), [0.0; 3]);
    }

    #[test]
    fn descent_vanishes_on_measured_circle() {
        let g = GradObserverState::new(scaled_identity(50.0), [0.6, 0.8]).unwrap();
        assert_eq!(descent_term(&g, 1.0), [0.0, 0.0]);
        let a = MeasMatrix([[-1.0, 0.3], [0.2, -0.5]]);
        let d = grad_observer_rhs(&g, 1.0, &a, 0.1, 0.1116);
        let copy = a.mul_vec([0.6, 0.8]);
        assert_eq!(d, [copy[0], copy[1] + 0.1116 * 0.1]);
    }

    #[test]
    fn origin_is_stationary_for_descent() {
        let g = GradObserverState::new(scaled_identity(10.0), [0.0, 0.0]).unwrap();
        assert_eq!(descent_term(&g, 0.7), [0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn descent_is_negative_cost_gradient(x3 in -2.0..2.0f64, x4 in -2.0..2.0f64, y1 in 0.01..3.0f64, g in 0.1..20.0f64) {
            let gamma = [[g, 0.1 * g], [0.1 * g, 0.5 * g]];
            let st = GradObserverState::new(gamma, [x3, x4]).unwrap();
            let step = 1e-6;
            let grad = [
                (gradient_cost(y1, [x3 + step, x4]) - gradient_cost(y1, [x3 - step, x4])) / (2.0 * step),
                (gradient_cost(y1, [x3, x4 + step]) - gradient_cost(y1, [x3, x4 - step])) / (2.0 * step),
            ];
            let d = descent_term(&st, y1);
            for i in 0..2 {
                let expected = -(gamma[i][0] * grad[0] + gamma[i][1] * grad[1]);
                prop_assert!((d[i] - expected).abs() <= 1e-6 * (1.0 + expected.abs()), "{} vs {}", d[i], expected);
            }
        }

        #[test]
        fn overparam_is_steepest_descent(
            psi in proptest::array::uniform5(-2.0..2.0f64),
            theta in proptest::array::uniform5(-2.0..2.0f64),
            y_e in -3.0..3.0f64,
            scales in proptest::array::uniform5(0.1..10.0f64),
        ) {
            let mut gamma = [[0.0; 5]; 5];
            for i in 0..5 {
                gamma[i][i] = scales[i];
            }
            let o = OverparamEstimator::new(gamma, theta).unwrap();
            let r = RegressorSample { y_e, psi };
            let d = overparam_update(&o, &r);
            // dᵀΓ⁻¹d = (ψᵀΓψ) e² ≥ 0 and the cost ½e² never increases along d.
            let metric: f64 = (0..5).map(|i| d[i] * d[i] / scales[i]).sum();
            prop_assert!(metric >= 0.0);
            let e = prediction_error(&theta, &r);
            let rate: f64 = psi.iter().zip(&d).map(|(p, v)| p * v).sum::<f64>() * e;
            prop_assert!(rate <= 1e-12);
        }

        #[test]
        fn squared_error_vanishes_on_lifted(t1 in -5.0..5.0f64, t2 in -5.0..5.0f64) {
            let e = consistency_error_squared(&lifted_parameters([t1, t2]));
            prop_assert!(e.iter().all(|v| *v == 0.0));
        }
    }
}
