//! Named verification suites, runnable from the command line.
//!
//! Each suite returns a list of checks; the command exits nonzero when any
//! of them fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::scaled_identity;
use crate::config::RunConfig;
use crate::drem::{mixing_residual, ExtendedRegression, FilterBank, DEFAULT_POLES};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, Mat5};
use crate::model::PlantState;
use crate::pmu::noninjectivity_certificate;
use crate::report::{observer_report, strictly_decreasing, trajectory_checks, CheckResult, ObserverKind, ObserverReport};
use crate::sim::{
    resolve_gain_scale, rk4_step, run_scenario, DremSettings, GainScale, GradientSettings, OverparamSettings, Scenario,
    Trajectory,
};

pub const SUITES: [&str; 10] = [
    "lemma1_cert",
    "drem_identities",
    "lemma2",
    "transition",
    "decay",
    "integrator",
    "convergence",
    "baseline",
    "gradient",
    "all",
];

/// Preset each suite reads its parameters from by default.
pub fn default_preset(suite: &str) -> &'static str {
    match suite {
        "lemma1_cert" => "lemma1_cert",
        "drem_identities" => "drem_identities",
        _ => "smib_vi_a",
    }
}

pub const CERT_NULL_TOL: f64 = 1e-12;
pub const CERT_DET_TOL: f64 = 1e-10;
pub const ADJUGATE_TOL: f64 = 1e-9;
pub const CRAMER_TOL: f64 = 1e-10;
pub const DECAY_TOL: f64 = 1e-3;
/// Nominal DREM gain of the decay check; small enough that `θ̃` stays far
/// above the roundoff floor of the mixed regression over the horizon.
pub const DECAY_CHECK_GAIN: f64 = 1.0;
pub const ORDER_RATIO: (f64, f64) = (8.0, 32.0);
/// Steps of the integrator order check and its horizon cap (s).
pub const ORDER_STEPS: [f64; 3] = [0.01, 0.005, 0.0025];
pub const ORDER_HORIZON: f64 = 10.0;
pub const BASELINE_PERSISTENCE: f64 = 0.1;

pub fn run_suite(name: &str, cfg: &RunConfig) -> Result<Vec<CheckResult>> {
    match name {
        "lemma1_cert" => Ok(lemma1_cert(cfg)),
        "drem_identities" => drem_identities(cfg),
        "lemma2" => lemma2(cfg),
        "transition" => transition(cfg),
        "decay" => decay(cfg),
        "integrator" => integrator(cfg),
        "convergence" => Ok(convergence_checks(&sweep(cfg)?)),
        "baseline" => Ok(baseline_checks(&sweep(cfg)?)),
        "gradient" => Ok(gradient_checks(&sweep(cfg)?)),
        "all" => {
            let mut out = lemma1_cert(cfg);
            out.extend(drem_identities(cfg)?);
            out.extend(lemma2(cfg)?);
            out.extend(transition(cfg)?);
            out.extend(decay(cfg)?);
            out.extend(integrator(cfg)?);
            let s = sweep(cfg)?;
            out.extend(convergence_checks(&s));
            out.extend(baseline_checks(&s));
            out.extend(gradient_checks(&s));
            Ok(out)
        }
        other => Err(Error::InvalidParameters(format!(
            "unknown suite `{other}`; expected one of {}",
            SUITES.join(", ")
        ))),
    }
}

/// Null vector and rank deficiency of the output-map Jacobian at random points.
pub fn lemma1_cert(cfg: &RunConfig) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.verify.seed);
    let r = cfg.verify.range;
    let (mut null, mut det) = (0.0f64, 0.0f64);
    for _ in 0..cfg.verify.samples {
        let v = [rng.gen_range(-r..=r), rng.gen_range(-r..=r), rng.gen_range(-r..=r)];
        let y2 = rng.gen_range(-r..=r);
        let c = noninjectivity_certificate(v, y2);
        null = null.max(c.residual);
        let norm = max_abs(&c.jacobian);
        det = det.max(c.determinant().abs() / (1.0 + norm.powi(3)));
    }
    vec![
        CheckResult::at_most("output-map Jacobian annihilates (1, -v3, v2)", null, CERT_NULL_TOL),
        CheckResult::at_most("output-map Jacobian is singular", det, CERT_DET_TOL),
    ]
}

fn with_drem(s: &Scenario) -> Scenario {
    let mut s = s.clone();
    if s.drem.is_none() {
        s.drem = Some(DremSettings {
            gamma: [1.0; 2],
            gain_scale: GainScale::Fixed(1.0),
            poles: DEFAULT_POLES,
            theta0: [0.0; 2],
            full_theta: false,
        });
    }
    s
}

/// Mixing identities on random matrices and on every trajectory sample.
pub fn drem_identities(cfg: &RunConfig) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.verify.seed);
    let (mut adj, mut cramer) = (0.0f64, 0.0f64);
    for _ in 0..cfg.verify.samples {
        let mut psi: Mat5 = [[0.0; 5]; 5];
        for v in psi.iter_mut().flatten() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let y_e = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let res = mixing_residual(&ExtendedRegression { y_e, psi });
        adj = adj.max(res.adjugate);
        cramer = cramer.max(res.cramer);
    }
    let traj = run_scenario(&with_drem(&cfg.scenario))?;
    let poles = traj.poles.expect("drem enabled");
    let (mut t_adj, mut t_cramer) = (0.0f64, 0.0f64);
    for r in &traj.records {
        let (d, e) = (r.drem.expect("drem record"), r.extension.expect("extension record"));
        let res = mixing_residual(&ExtendedRegression::assemble(&FilterBank { poles, states: d.filters }, &e.regressor));
        t_adj = t_adj.max(res.adjugate);
        t_cramer = t_cramer.max(res.cramer);
    }
    Ok(vec![
        CheckResult::at_most("adj(M) M = det(M) I on random matrices", adj, ADJUGATE_TOL),
        CheckResult::at_most("Cramer mixing matches adjugate on random matrices", cramer, CRAMER_TOL),
        CheckResult::at_most("adj(Psi) Psi = Delta I along the trajectory", t_adj, ADJUGATE_TOL),
        CheckResult::at_most("Cramer mixing matches adjugate along the trajectory", t_cramer, CRAMER_TOL),
    ])
}

/// Largest one-step gap between the plant's RK4 step in `(x3, x4)` and an
/// RK4 step of the linear time-varying model driven by the measured `A(t)`,
/// together with the largest pointwise vector-field residual.
pub fn ltv_residuals(s: &Scenario, traj: &Trajectory) -> Result<(f64, f64)> {
    let h = s.step;
    let c1 = s.coefficients.c1;
    let (mut pointwise, mut defect) = (0.0f64, 0.0f64);
    for pair in traj.records.windows(2) {
        let (r, next) = (&pair[0], &pair[1]);
        let dx = s.plant_derivative(r.t, &r.x)?;
        let a = s.meas_matrix_at(r.t, &r.x)?;
        let ax = a.mul_vec([r.x.x3, r.x.x4]);
        let u2 = s.inputs.at(r.t).u2;
        pointwise = pointwise.max((dx.x3 - ax[0]).abs().max((dx.x4 - ax[1] - c1 * u2).abs()));

        let mut stages: Vec<(f64, PlantState)> = Vec::with_capacity(4);
        rk4_step(
            |t, z: &[f64], out: &mut [f64]| {
                let x = PlantState::from_slice(z);
                stages.push((t, x));
                out.copy_from_slice(&s.plant_derivative(t, &x)?.to_array());
                Ok(())
            },
            &r.x.to_array(),
            r.t,
            h,
        )?;
        let mut stage = stages.iter();
        let ltv = rk4_step(
            |t, z: &[f64], out: &mut [f64]| {
                let (_, x) = stage.next().expect("four stages");
                let a = s.meas_matrix_at(t, x)?;
                let d = a.mul_vec([z[0], z[1]]);
                out[0] = d[0];
                out[1] = d[1] + c1 * s.inputs.at(t).u2;
                Ok(())
            },
            &[r.x.x3, r.x.x4],
            r.t,
            h,
        )?;
        defect = defect.max((ltv[0] - next.x.x3).abs().max((ltv[1] - next.x.x4).abs()));
    }
    Ok((pointwise, defect))
}

pub fn lemma2(cfg: &RunConfig) -> Result<Vec<CheckResult>> {
    let s = with_drem(&cfg.scenario);
    let traj = run_scenario(&s)?;
    let mut out: Vec<CheckResult> = trajectory_checks(&traj).into_iter().take(2).collect();
    let (pointwise, defect) = ltv_residuals(&s, &traj)?;
    let tol = 10.0 * s.step.powi(4);
    out.push(CheckResult::at_most("(x3, x4) vector field equals A(t) x34 + (0, c1 u2)", pointwise, tol));
    out.push(CheckResult::at_most("one-step gap between plant and A(t) model", defect, tol));
    Ok(out)
}

pub fn transition(cfg: &RunConfig) -> Result<Vec<CheckResult>> {
    let traj = run_scenario(&with_drem(&cfg.scenario))?;
    Ok(trajectory_checks(&traj).into_iter().filter(|c| c.name.starts_with("x34")).collect())
}

/// Largest relative gap between `|θ̃_k(t)|` and `exp(-γ_k ∫Δ²) |θ̃_k(0)|`
/// after the filter settling time.
pub fn decay_gap(traj: &Trajectory) -> f64 {
    let gamma = traj.drem_gamma.expect("drem trajectory");
    let theta = traj.theta_true;
    let first = traj.records[0].drem.expect("drem record").theta_hat;
    let settle = traj.settling_time();
    let mut worst = 0.0f64;
    for r in traj.records.iter().filter(|r| r.t >= settle) {
        let d = r.drem.expect("drem record");
        for k in 0..2 {
            let predicted = (-gamma[k] * d.int_delta_sq).exp() * (first[k] - theta[k]).abs();
            let actual = (d.theta_hat[k] - theta[k]).abs();
            worst = worst.max((actual - predicted).abs() / predicted);
        }
    }
    worst
}

pub fn decay(cfg: &RunConfig) -> Result<Vec<CheckResult>> {
    let mut s = with_drem(&cfg.scenario).without_observers();
    let mut d = with_drem(&cfg.scenario).drem.unwrap();
    d.gamma = [DECAY_CHECK_GAIN; 2];
    s.drem = Some(d);
    let traj = run_scenario(&s)?;
    Ok(vec![CheckResult::at_most("parameter error follows exp(-gamma int Delta^2)", decay_gap(&traj), DECAY_TOL)])
}

/// Ratio of successive terminal-state differences under step halving.
pub fn order_ratio(s: &Scenario, steps: [f64; 3], horizon: f64) -> Result<f64> {
    let finals: Vec<[f64; 4]> = steps
        .iter()
        .map(|&h| {
            let mut p = s.clone().without_observers();
            p.step = h;
            p.horizon = horizon;
            Ok(run_scenario(&p)?.records.last().expect("records").x.to_array())
        })
        .collect::<Result<_>>()?;
    let diff = |a: &[f64; 4], b: &[f64; 4]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(diff(&finals[0], &finals[1]) / diff(&finals[1], &finals[2]))
}

pub fn integrator(cfg: &RunConfig) -> Result<Vec<CheckResult>> {
    let ratio = order_ratio(&cfg.scenario, ORDER_STEPS, cfg.scenario.horizon.min(ORDER_HORIZON))?;
    let (lo, hi) = ORDER_RATIO;
    Ok(vec![CheckResult {
        name: format!("RK4 step-halving error ratio in [{lo}, {hi}]"),
        passed: (lo..=hi).contains(&ratio),
        value: ratio,
        tolerance: hi,
    }])
}

/// Observer summaries of a gain sweep; trajectories are dropped after summarizing.
pub struct SweepSummary {
    pub drem: Vec<ObserverReport>,
    pub overparam: Vec<ObserverReport>,
    pub gradient: Vec<ObserverReport>,
}

pub const DEFAULT_DREM_SWEEP: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
pub const DEFAULT_OVERPARAM_SWEEP: [f64; 2] = [1e6, 1e8];
pub const DEFAULT_GRADIENT_SWEEP: [f64; 3] = [1.0, 10.0, 100.0];

pub fn sweep(cfg: &RunConfig) -> Result<SweepSummary> {
    let base = cfg.scenario.clone().without_observers();
    let pick = |v: &Vec<f64>, d: &[f64]| if v.is_empty() { d.to_vec() } else { v.clone() };
    let drem_template = cfg.observers.drem.clone().unwrap_or_else(|| with_drem(&base).drem.unwrap());
    let scale = {
        let mut p = base.clone();
        p.drem = Some(drem_template.clone());
        resolve_gain_scale(&p)?.expect("drem configured")
    };

    let mut jobs: Vec<(ObserverKind, Scenario)> = Vec::new();
    for g in pick(&cfg.sweep.drem_gamma, &DEFAULT_DREM_SWEEP) {
        let mut s = base.clone();
        s.drem = Some(DremSettings { gamma: [g, g], gain_scale: GainScale::Fixed(scale), ..drem_template.clone() });
        jobs.push((ObserverKind::GpeboDrem, s));
    }
    let op_theta0 = cfg.observers.overparam.as_ref().map_or([0.0; 5], |o| o.theta0);
    for g in pick(&cfg.sweep.overparam_gamma, &DEFAULT_OVERPARAM_SWEEP) {
        let mut s = base.clone();
        s.overparam = Some(OverparamSettings { gamma: scaled_identity(g), theta0: op_theta0 });
        jobs.push((ObserverKind::Overparam, s));
    }
    let grad_x0 = cfg.observers.gradient.as_ref().map_or([0.0; 2], |g| g.x0);
    for g in pick(&cfg.sweep.gradient_gamma, &DEFAULT_GRADIENT_SWEEP) {
        let mut s = base.clone();
        s.gradient = Some(GradientSettings { gamma: scaled_identity(g), x0: grad_x0 });
        jobs.push((ObserverKind::Gradient, s));
    }

    let reports: Vec<(ObserverKind, ObserverReport)> = jobs
        .par_iter()
        .map(|(kind, s)| {
            let traj = run_scenario(s)?;
            Ok((*kind, observer_report(&traj, *kind, &cfg.report).expect("observer enabled")))
        })
        .collect::<Result<_>>()?;
    let take = |k: ObserverKind| reports.iter().filter(|(kk, _)| *kk == k).map(|(_, r)| r.clone()).collect();
    Ok(SweepSummary {
        drem: take(ObserverKind::GpeboDrem),
        overparam: take(ObserverKind::Overparam),
        gradient: take(ObserverKind::Gradient),
    })
}

fn best_time(rs: &[ObserverReport]) -> f64 {
    rs.iter().filter_map(|r| r.convergence_time).fold(f64::INFINITY, f64::min)
}

fn by_gain(rs: &[ObserverReport]) -> Vec<f64> {
    let mut v: Vec<(f64, f64)> =
        rs.iter().map(|r| (r.gain, r.convergence_time.unwrap_or(f64::INFINITY))).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v.into_iter().map(|p| p.1).collect()
}

pub fn convergence_checks(s: &SweepSummary) -> Vec<CheckResult> {
    let best = best_time(&s.drem);
    let times = by_gain(&s.drem);
    vec![
        CheckResult {
            name: "gpebo_drem converges for some gain (best time, s)".into(),
            passed: best.is_finite(),
            value: best,
            tolerance: f64::INFINITY,
        },
        CheckResult {
            name: "gpebo_drem convergence time strictly decreasing in gain".into(),
            passed: strictly_decreasing(&times),
            value: times.iter().filter(|t| t.is_finite()).count() as f64,
            tolerance: times.len() as f64,
        },
    ]
}

pub fn baseline_checks(s: &SweepSummary) -> Vec<CheckResult> {
    let mut out: Vec<CheckResult> = s
        .overparam
        .iter()
        .map(|r| {
            let c = r.consistency.expect("overparam report");
            let ratio = c.terminal / c.reference;
            CheckResult {
                name: format!("overparam gain {:.0e}: terminal |e| / reference stays above {BASELINE_PERSISTENCE}", r.gain),
                passed: ratio > BASELINE_PERSISTENCE,
                value: ratio,
                tolerance: BASELINE_PERSISTENCE,
            }
        })
        .collect();
    out.push(convergence_checks(s).remove(0));
    out
}

pub fn gradient_checks(s: &SweepSummary) -> Vec<CheckResult> {
    let (bg, bd) = (best_time(&s.gradient), best_time(&s.drem));
    vec![
        CheckResult {
            name: "gradient observer converges for some gain (best time, s)".into(),
            passed: bg.is_finite(),
            value: bg,
            tolerance: f64::INFINITY,
        },
        CheckResult {
            name: "gradient observer slower than best gpebo_drem (gradient time, s)".into(),
            passed: bg > bd,
            value: bg,
            tolerance: bd,
        },
    ]
}
