//! Fixed-step RK4 integration of the plant together with every enabled
//! observer as one composite vector field.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::baselines::{
    consistency_error, consistency_error_squared, grad_observer_rhs, GradObserverState, OverparamEstimator,
};
use crate::drem::{
    cumulative_excitation, filter_rhs, mix, mix_cramer, scalar_update, validate_poles, ExtendedRegression,
    FilterBank, ScalarEstimators, CHANNELS,
};
use crate::error::{Error, Result};
use crate::gpebo::{
    build_regressor, extension_rhs, reconstruct_states, AngleMode, ExtensionState, Reconstruction, RegressorSample,
    ThetaEstimate,
};
use crate::linalg::{cond2, det2, Mat2, Mat5};
use crate::model::{plant_rhs, transient_reactances_equal, DerivedCoefficients, Inputs, PlantState};
use crate::pmu::{derived_signals, meas_matrix, measure, DerivedSignals, MeasMatrix, PmuSample};

/// Condition number of Φ above which a warning is logged.
pub const PHI_CONDITION_WARNING: f64 = 1e8;

/// Bound on `h λ` for the real negative eigenvalues RK4 integrates stably.
pub const RK4_STABILITY_LIMIT: f64 = 2.78;

/// Classical fourth-order Runge–Kutta step.
///
/// `rhs(t, state, out)` writes the derivative into `out`.
pub fn rk4_step<F>(mut rhs: F, state: &[f64], t: f64, h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = state.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    let mut stage = |time: f64, x: &[f64], out: &mut [f64]| -> Result<()> {
        rhs(time, x, out)?;
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::IntegrationDiverged {
                t: time,
                what: format!("non-finite derivative in component {i}"),
            });
        }
        Ok(())
    };

    stage(t, state, &mut k1)?;
    for i in 0..n {
        tmp[i] = state[i] + 0.5 * h * k1[i];
    }
    stage(t + 0.5 * h, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = state[i] + 0.5 * h * k2[i];
    }
    stage(t + 0.5 * h, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = state[i] + h * k3[i];
    }
    stage(t + h, &tmp, &mut k4)?;

    let next: Vec<f64> = (0..n)
        .map(|i| state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if let Some(i) = next.iter().position(|v| !v.is_finite()) {
        return Err(Error::IntegrationDiverged {
            t: t + h,
            what: format!("non-finite state in component {i}"),
        });
    }
    Ok(next)
}

/// Constant or piecewise-constant input.
///
/// Tables are sampled left-continuously: on `(t_i, t_{i+1}]` the value is
/// `v_i`, and before the first breakpoint the first value holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Signal {
    Constant(f64),
    Table(Vec<(f64, f64)>),
}

impl Signal {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Signal::Constant(v) => *v,
            Signal::Table(points) => {
                let idx = points.partition_point(|(ti, _)| *ti < t);
                points[idx.saturating_sub(1)].1
            }
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        match self {
            Signal::Constant(v) if v.is_finite() => Ok(()),
            Signal::Constant(v) => Err(Error::InvalidParameters(format!("{name} = {v} is not finite"))),
            Signal::Table(points) => {
                if points.is_empty() {
                    return Err(Error::InvalidParameters(format!("{name} table is empty")));
                }
                if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                    return Err(Error::InvalidParameters(format!("{name} table has non-finite entries")));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidParameters(format!(
                        "{name} table times must be strictly increasing"
                    )));
                }
                Ok(())
            }
        }
    }

    fn min_value(&self) -> f64 {
        match self {
            Signal::Constant(v) => *v,
            Signal::Table(points) => points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSignals {
    pub u1: Signal,
    pub u2: Signal,
    pub y1_bus: Signal,
    pub y2_bus: Signal,
}

impl InputSignals {
    pub fn constant(u1: f64, u2: f64, y1_bus: f64, y2_bus: f64) -> Self {
        Self {
            u1: Signal::Constant(u1),
            u2: Signal::Constant(u2),
            y1_bus: Signal::Constant(y1_bus),
            y2_bus: Signal::Constant(y2_bus),
        }
    }

    pub fn at(&self, t: f64) -> Inputs {
        Inputs {
            u1: self.u1.at(t),
            u2: self.u2.at(t),
            y1_bus: self.y1_bus.at(t),
            y2_bus: self.y2_bus.at(t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GainScale {
    Fixed(f64),
    /// `1 / ∫₀ᵀ Δ²` from a pilot run; `Δ` does not depend on the estimator gains.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DremSettings {
    /// Nominal gains; the effective gain is `gamma * scale`.
    pub gamma: [f64; 2],
    pub gain_scale: GainScale,
    pub poles: [f64; 4],
    pub theta0: [f64; 2],
    /// Also adapt all five `Θ̂_i` for diagnostics.
    pub full_theta: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverparamSettings {
    pub gamma: Mat5,
    pub theta0: [f64; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientSettings {
    pub gamma: Mat2,
    pub x0: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub coefficients: DerivedCoefficients,
    pub x_dp: f64,
    pub x_qp: f64,
    pub x0: PlantState,
    pub inputs: InputSignals,
    pub step: f64,
    pub horizon: f64,
    pub angle_mode: AngleMode,
    pub drem: Option<DremSettings>,
    pub overparam: Option<OverparamSettings>,
    pub gradient: Option<GradientSettings>,
}

impl Scenario {
    /// Single-machine infinite-bus experiment: published coefficients,
    /// `x(0) = (0.1, 0.2, 0.4, 0.3)`, `u = (0.1, 0.1)`, bus at `1∠0`, all
    /// observer states zero.
    pub fn smib() -> Self {
        Self {
            label: "smib_vi_a".into(),
            coefficients: DerivedCoefficients::SMIB,
            x_dp: 0.0608,
            x_qp: 0.0608,
            x0: PlantState::new(0.1, 0.2, 0.4, 0.3),
            inputs: InputSignals::constant(0.1, 0.1, 0.0, 1.0),
            step: 1e-3,
            horizon: 40.0,
            angle_mode: AngleMode::Arcsin,
            drem: Some(DremSettings {
                gamma: [10.0, 10.0],
                gain_scale: GainScale::Auto,
                poles: crate::drem::DEFAULT_POLES,
                theta0: [0.0; 2],
                full_theta: true,
            }),
            overparam: None,
            gradient: None,
        }
    }

    pub fn without_observers(mut self) -> Self {
        self.drem = None;
        self.overparam = None;
        self.gradient = None;
        self
    }

    pub fn record_count(&self) -> usize {
        self.step_count() + 1
    }

    fn step_count(&self) -> usize {
        (self.horizon / self.step * (1.0 + 1e-12)).floor() as usize
    }

    /// Plant vector field at `(t, x)`.
    pub fn plant_derivative(&self, t: f64, x: &PlantState) -> Result<PlantState> {
        let u = self.inputs.at(t);
        let pmu = measure(x, u.y1_bus, u.y2_bus, self.x_qp).map_err(|e| e.at(t))?;
        Ok(plant_rhs(x, &u, &self.coefficients, pmu.y5))
    }

    /// Measured matrix `A(t)` for the plant at state `x`.
    pub fn meas_matrix_at(&self, t: f64, x: &PlantState) -> Result<MeasMatrix> {
        let u = self.inputs.at(t);
        let pmu = measure(x, u.y1_bus, u.y2_bus, self.x_qp).map_err(|e| e.at(t))?;
        let d = derived_signals(&pmu, self.x_qp).map_err(|e| e.at(t))?;
        meas_matrix(&d, &pmu, &self.coefficients, self.x_qp).map_err(|e| e.at(t))
    }

    fn needs_extension(&self) -> bool {
        self.drem.is_some() || self.overparam.is_some()
    }

    fn any_observer(&self) -> bool {
        self.needs_extension() || self.gradient.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        self.coefficients.validate()?;
        if !(self.x_qp > 0.0 && self.x_qp.is_finite()) {
            return Err(Error::InvalidParameters(format!("x_qp = {} must be positive", self.x_qp)));
        }
        if !transient_reactances_equal(self.x_dp, self.x_qp) {
            return Err(Error::InvalidParameters(format!(
                "x_dp ({}) must equal x_qp ({})",
                self.x_dp, self.x_qp
            )));
        }
        if !self.x0.is_finite() {
            return Err(Error::InvalidParameters("initial state is not finite".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameters(format!("step {} must be positive", self.step)));
        }
        if !(self.horizon >= self.step) {
            return Err(Error::InvalidParameters(format!(
                "horizon {} must be at least one step ({})",
                self.horizon, self.step
            )));
        }
        for (name, sig) in [
            ("u1", &self.inputs.u1),
            ("u2", &self.inputs.u2),
            ("y1_bus", &self.inputs.y1_bus),
            ("y2_bus", &self.inputs.y2_bus),
        ] {
            sig.validate(name)?;
        }
        if !(self.inputs.y2_bus.min_value() > 0.0) {
            return Err(Error::InvalidParameters("terminal voltage y2_bus must stay positive".into()));
        }
        if let Some(d) = &self.drem {
            validate_poles(&d.poles)?;
            if d.gamma.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                return Err(Error::InvalidParameters(format!("DREM gains {:?} must be positive", d.gamma)));
            }
            if let GainScale::Fixed(s) = d.gain_scale {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::InvalidParameters(format!("gain scale {s} must be positive")));
                }
            }
        }
        if let Some(o) = &self.overparam {
            OverparamEstimator::new(o.gamma, o.theta0)?;
        }
        if let Some(g) = &self.gradient {
            GradObserverState::new(g.gamma, g.x0)?;
        }
        Ok(())
    }
}

/// Offsets of each block inside the composite state vector.
#[derive(Clone, Copy, Debug)]
struct Layout {
    extension: Option<usize>,
    filters: Option<usize>,
    theta: Option<usize>,
    full: Option<usize>,
    gradient: Option<usize>,
    len: usize,
}

impl Layout {
    fn new(s: &Scenario) -> Self {
        let mut len = 4;
        let mut take = |n: usize, on: bool| {
            on.then(|| {
                let at = len;
                len += n;
                at
            })
        };
        let extension = take(ExtensionState::LEN, s.needs_extension());
        let filters = take(FilterBank::LEN, s.drem.is_some());
        let theta = take(2, s.drem.is_some());
        let full = take(5, s.drem.as_ref().is_some_and(|d| d.full_theta));
        let gradient = take(2, s.gradient.is_some());
        Self {
            extension,
            filters,
            theta,
            full,
            gradient,
            len,
        }
    }
}

/// Everything measurable at one instant.
#[derive(Clone, Copy, Debug)]
struct Snapshot {
    inputs: Inputs,
    pmu: PmuSample,
    signals: DerivedSignals,
    a: MeasMatrix,
}

struct Composite<'a> {
    s: &'a Scenario,
    layout: Layout,
    /// Effective DREM gains.
    gamma: [f64; 2],
}

impl Composite<'_> {
    fn snapshot(&self, t: f64, x: &PlantState) -> Result<Snapshot> {
        let inputs = self.s.inputs.at(t);
        let pmu = measure(x, inputs.y1_bus, inputs.y2_bus, self.s.x_qp).map_err(|e| e.at(t))?;
        let (signals, a) = if self.s.any_observer() {
            let d = derived_signals(&pmu, self.s.x_qp).map_err(|e| e.at(t))?;
            let a = meas_matrix(&d, &pmu, &self.s.coefficients, self.s.x_qp).map_err(|e| e.at(t))?;
            (d, a)
        } else {
            (raw_signals(&pmu, self.s.x_qp), MeasMatrix([[f64::NAN; 2]; 2]))
        };
        Ok(Snapshot { inputs, pmu, signals, a })
    }

    fn extension(&self, z: &[f64]) -> Option<ExtensionState> {
        self.layout.extension.map(|o| ExtensionState::read(&z[o..]))
    }

    fn filters(&self, z: &[f64]) -> Option<FilterBank> {
        let poles = self.s.drem.as_ref()?.poles;
        self.layout.filters.map(|o| FilterBank::read(poles, &z[o..]))
    }

    fn estimators(&self, z: &[f64]) -> Option<ScalarEstimators> {
        let o = self.layout.theta?;
        Some(ScalarEstimators {
            gamma: self.gamma,
            theta_hat: [z[o], z[o + 1]],
            full: self.layout.full.map(|f| [z[f], z[f + 1], z[f + 2], z[f + 3], z[f + 4]]),
        })
    }

    fn rhs(&self, t: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
        let x = PlantState::from_slice(z);
        let snap = self.snapshot(t, &x)?;
        let c = &self.s.coefficients;
        let dx = plant_rhs(&x, &snap.inputs, c, snap.pmu.y5);
        out[..4].copy_from_slice(&dx.to_array());

        if let (Some(o), Some(ext)) = (self.layout.extension, self.extension(z)) {
            extension_rhs(&ext, &snap.a, snap.inputs.u2, c.c1).write(&mut out[o..]);
            if let (Some(fo), Some(bank)) = (self.layout.filters, self.filters(z)) {
                let regressor = build_regressor(&ext, snap.signals.y1);
                FilterBank::write_states(&filter_rhs(&bank, &regressor), &mut out[fo..]);
                let mixed = mix(&ExtendedRegression::assemble(&bank, &regressor));
                let est = self.estimators(z).expect("estimators present with filters");
                let d = scalar_update(&est, &mixed);
                let to = self.layout.theta.expect("theta block");
                out[to..to + 2].copy_from_slice(&d.theta_hat);
                if let (Some(fo), Some(full)) = (self.layout.full, d.full) {
                    out[fo..fo + 5].copy_from_slice(&full);
                }
            }
        }

        if let (Some(o), Some(g)) = (self.layout.gradient, &self.s.gradient) {
            let st = GradObserverState { x34_hat: [z[o], z[o + 1]], gamma: g.gamma };
            let d = grad_observer_rhs(&st, snap.signals.y1, &snap.a, snap.inputs.u2, c.c1);
            out[o..o + 2].copy_from_slice(&d);
        }
        Ok(())
    }

    fn initial_state(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.layout.len];
        z[..4].copy_from_slice(&self.s.x0.to_array());
        if let Some(o) = self.layout.extension {
            ExtensionState::default().write(&mut z[o..]);
        }
        if let (Some(o), Some(d)) = (self.layout.theta, &self.s.drem) {
            z[o..o + 2].copy_from_slice(&d.theta0);
        }
        if let (Some(o), Some(d)) = (self.layout.full, &self.s.drem) {
            z[o] = d.theta0[0];
            z[o + 1] = d.theta0[1];
        }
        if let (Some(o), Some(g)) = (self.layout.gradient, &self.s.gradient) {
            z[o..o + 2].copy_from_slice(&g.x0);
        }
        z
    }
}

fn raw_signals(pmu: &PmuSample, x_qp: f64) -> DerivedSignals {
    let p = -x_qp * pmu.y5 / pmu.y2;
    let q = x_qp * pmu.y6 / pmu.y2 + pmu.y2;
    let (sn, cs) = pmu.y1.sin_cos();
    DerivedSignals {
        z0: pmu.y6 + pmu.y2 * pmu.y2 / x_qp,
        y1: x_qp * x_qp * pmu.y4 * pmu.y4 + 2.0 * x_qp * pmu.y6 + pmu.y2 * pmu.y2,
        y2: cs * p - sn * q,
        y3: sn * p + cs * q,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionRecord {
    pub state: ExtensionState,
    pub regressor: RegressorSample,
    pub det_phi: f64,
    pub cond_phi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DremRecord {
    pub filters: [[f64; CHANNELS]; 4],
    pub delta: f64,
    pub cal_y: [f64; 5],
    pub cal_y_cramer: [f64; 5],
    /// Trapezoidal `∫₀ᵗ Δ²` over the grid.
    pub int_delta_sq: f64,
    pub theta_hat: [f64; 2],
    pub full_theta: Option<[f64; 5]>,
    /// `x̂1` is NaN when the arcsin argument leaves its domain.
    pub estimate: Reconstruction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverparamRecord {
    pub theta_hat: [f64; 5],
    pub consistency: [f64; 3],
    pub consistency_squared: [f64; 3],
    pub estimate: Reconstruction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientRecord {
    pub x34_hat: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub x: PlantState,
    pub inputs: Inputs,
    pub pmu: PmuSample,
    pub signals: DerivedSignals,
    pub a: MeasMatrix,
    pub extension: Option<ExtensionRecord>,
    pub drem: Option<DremRecord>,
    pub overparam: Option<OverparamRecord>,
    pub gradient: Option<GradientRecord>,
}

impl Record {
    pub fn drem_error(&self) -> Option<[f64; 3]> {
        self.drem.map(|d| [d.estimate.x1 - self.x.x1, d.estimate.x3 - self.x.x3, d.estimate.x4 - self.x.x4])
    }

    pub fn overparam_error(&self) -> Option<[f64; 3]> {
        self.overparam
            .map(|o| [o.estimate.x1 - self.x.x1, o.estimate.x3 - self.x.x3, o.estimate.x4 - self.x.x4])
    }

    pub fn gradient_error(&self) -> Option<[f64; 2]> {
        self.gradient.map(|g| [g.x34_hat[0] - self.x.x3, g.x34_hat[1] - self.x.x4])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub label: String,
    pub step: f64,
    pub horizon: f64,
    /// `θ = (x3, x4)(0) - ξ(0)`, known in simulation.
    pub theta_true: [f64; 2],
    pub gain_scale: Option<f64>,
    /// Effective DREM gains `γ · scale`.
    pub drem_gamma: Option<[f64; 2]>,
    pub overparam_gamma: Option<f64>,
    pub gradient_gamma: Option<f64>,
    /// DREM filter poles when DREM ran.
    pub poles: Option<[f64; 4]>,
    /// Records whose `x̂1` arcsin argument was out of domain.
    pub angle_domain_violations: usize,
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// Five time constants of the slowest DREM filter (zero without DREM).
    pub fn settling_time(&self) -> f64 {
        self.poles.map_or(0.0, |p| 5.0 / p.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Nominal DREM gains, i.e. the effective gains divided by the scale.
    pub fn nominal_drem_gamma(&self) -> Option<[f64; 2]> {
        let s = self.gain_scale?;
        self.drem_gamma.map(|g| [g[0] / s, g[1] / s])
    }

    pub fn delta_series(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.drem.map(|d| d.delta)).collect()
    }
}

/// Resolves the DREM gain scale, running a pilot simulation for [`GainScale::Auto`].
pub fn resolve_gain_scale(s: &Scenario) -> Result<Option<f64>> {
    let Some(d) = &s.drem else { return Ok(None) };
    match d.gain_scale {
        GainScale::Fixed(v) => Ok(Some(v)),
        GainScale::Auto => {
            let mut pilot = s.clone().without_observers();
            pilot.drem = Some(DremSettings {
                gain_scale: GainScale::Fixed(1.0),
                full_theta: false,
                ..d.clone()
            });
            let traj = integrate(&pilot, 1.0)?;
            let energy = traj.records.last().and_then(|r| r.drem).map_or(0.0, |d| d.int_delta_sq);
            if energy > 0.0 && energy.is_finite() {
                debug!("pilot excitation ∫Δ² = {energy:e}, gain scale {:e}", 1.0 / energy);
                Ok(Some(1.0 / energy))
            } else {
                warn!("pilot run has no excitation (∫Δ² = {energy}); using unit gain scale");
                Ok(Some(1.0))
            }
        }
    }
}

pub fn run_scenario(s: &Scenario) -> Result<Trajectory> {
    s.validate()?;
    let scale = resolve_gain_scale(s)?.unwrap_or(1.0);
    integrate(s, scale)
}

fn integrate(s: &Scenario, scale: f64) -> Result<Trajectory> {
    let gamma = s.drem.as_ref().map_or([0.0; 2], |d| [d.gamma[0] * scale, d.gamma[1] * scale]);
    let sys = Composite { s, layout: Layout::new(s), gamma };
    let h = s.step;
    let steps = s.step_count();

    let mut overparam = match &s.overparam {
        Some(o) => Some(OverparamEstimator::new(o.gamma, o.theta0)?),
        None => None,
    };

    let mut z = sys.initial_state();
    let mut records = Vec::with_capacity(steps + 1);
    let mut violations = 0;
    let mut cond_warned = false;
    let mut stiff_warned = false;
    let mut prev_regressor: Option<RegressorSample> = None;

    for k in 0..=steps {
        let t = k as f64 * h;
        let snap = sys.snapshot(t, &PlantState::from_slice(&z))?;
        let ext = sys.extension(&z);
        let regressor = ext.map(|e| build_regressor(&e, snap.signals.y1));

        if let (Some(o), Some(r), Some(prev)) = (overparam.as_mut(), regressor, prev_regressor) {
            // Regressor averaged over the step just taken.
            let mid = RegressorSample {
                y_e: 0.5 * (prev.y_e + r.y_e),
                psi: std::array::from_fn(|i| 0.5 * (prev.psi[i] + r.psi[i])),
            };
            o.exact_step(&mid, h);
        }
        prev_regressor = regressor;

        let extension = ext.zip(regressor).map(|(e, r)| {
            let cond_phi = cond2(&e.phi);
            if cond_phi > PHI_CONDITION_WARNING && !cond_warned {
                warn!("transition matrix condition number {cond_phi:e} at t = {t}");
                cond_warned = true;
            }
            ExtensionRecord { state: e, regressor: r, det_phi: det2(&e.phi), cond_phi }
        });

        let mut reconstruct = |theta: [f64; 2]| -> Result<Option<Reconstruction>> {
            let Some(e) = ext else { return Ok(None) };
            match reconstruct_states(&e, &ThetaEstimate(theta), &snap.signals, s.angle_mode) {
                Ok(r) => Ok(Some(r)),
                Err(Error::ReconstructionDomain { .. }) => {
                    violations += 1;
                    let [x3, x4] = e.propagate(theta);
                    Ok(Some(Reconstruction { x1: f64::NAN, x3, x4 }))
                }
                Err(err) => Err(err.at(t)),
            }
        };

        let drem = match (sys.filters(&z), sys.estimators(&z), regressor) {
            (Some(bank), Some(est), Some(r)) => {
                let ext_reg = ExtendedRegression::assemble(&bank, &r);
                let mixed = mix(&ext_reg);
                let stiffness = gamma[0].max(gamma[1]) * mixed.delta * mixed.delta * h;
                if stiffness > RK4_STABILITY_LIMIT && !stiff_warned {
                    warn!("estimator rate γΔ²h = {stiffness:.3e} at t = {t} exceeds the RK4 stability limit; reduce the gain or the step");
                    stiff_warned = true;
                }
                Some(DremRecord {
                    filters: bank.states,
                    delta: mixed.delta,
                    cal_y: mixed.cal_y,
                    cal_y_cramer: mix_cramer(&ext_reg),
                    int_delta_sq: 0.0,
                    theta_hat: est.theta_hat,
                    full_theta: est.full,
                    estimate: reconstruct(est.theta_hat)?.expect("extension present"),
                })
            }
            _ => None,
        };

        let overparam_rec = match &overparam {
            Some(o) => Some(OverparamRecord {
                theta_hat: o.theta_hat,
                consistency: consistency_error(&o.theta_hat),
                consistency_squared: consistency_error_squared(&o.theta_hat),
                estimate: reconstruct([o.theta_hat[0], o.theta_hat[1]])?.expect("extension present"),
            }),
            None => None,
        };

        let gradient = sys.layout.gradient.map(|o| GradientRecord { x34_hat: [z[o], z[o + 1]] });

        records.push(Record {
            t,
            x: PlantState::from_slice(&z),
            inputs: snap.inputs,
            pmu: snap.pmu,
            signals: snap.signals,
            a: snap.a,
            extension,
            drem,
            overparam: overparam_rec,
            gradient,
        });

        if k < steps {
            z = rk4_step(|time, state, out| sys.rhs(time, state, out), &z, t, h)?;
        }
    }

    if s.drem.is_some() {
        let deltas: Vec<f64> = records.iter().map(|r| r.drem.map_or(0.0, |d| d.delta)).collect();
        for (r, v) in records.iter_mut().zip(cumulative_excitation(&deltas, h)) {
            if let Some(d) = r.drem.as_mut() {
                d.int_delta_sq = v;
            }
        }
    }
    if violations > 0 {
        debug!("{violations} records with x̂1 outside the arcsin domain");
    }

    Ok(Trajectory {
        label: s.label.clone(),
        step: h,
        horizon: s.horizon,
        theta_true: [s.x0.x3, s.x0.x4],
        gain_scale: s.drem.as_ref().map(|_| scale),
        drem_gamma: s.drem.as_ref().map(|_| gamma),
        overparam_gamma: s.overparam.as_ref().map(|o| o.gamma[0][0]),
        gradient_gamma: s.gradient.as_ref().map(|g| g.gamma[0][0]),
        poles: s.drem.as_ref().map(|d| d.poles),
        angle_domain_violations: violations,
        records,
    })
}
