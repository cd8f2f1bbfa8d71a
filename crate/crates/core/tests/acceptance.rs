//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Checks are computed here from raw trajectory records with their own
//! plant, measurement, integrator and determinant code, not through the
//! library's report and verify modules.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::process::ExitCode;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smib_observer::baselines::scaled_identity;
use smib_observer::drem::DEFAULT_POLES;
use smib_observer::linalg::{adjugate5, cramer5, Mat5};
use smib_observer::pmu::noninjectivity_certificate;
use smib_observer::sim::{
    resolve_gain_scale, run_scenario, GainScale, GradientSettings, OverparamSettings, Scenario, Trajectory,
};
use smib_observer::DerivedCoefficients;

const THRESHOLD: f64 = 1e-3;
const HOLD: f64 = 0.5;
const DREM_SWEEP: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
const OVERPARAM_SWEEP: [f64; 2] = [1e6, 1e8];
const GRADIENT_SWEEP: [f64; 3] = [1.0, 10.0, 100.0];
const X_QP: f64 = 0.0608;

struct Line {
    id: &'static str,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn inf2(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.abs().max(b.abs())
    }
}

/// First `t` such that every error in `[t, t + hold]` is below the threshold,
/// with `t + hold` inside the record.
fn sustained_time(times: &[f64], errs: &[f64]) -> Option<f64> {
    let h = times[1] - times[0];
    let span = (HOLD / h).round() as usize;
    let n = times.len();
    let mut k = 0;
    while k + span < n {
        match (k..=k + span).rev().find(|&j| !(errs[j] < THRESHOLD)) {
            None => return Some(times[k]),
            Some(bad) => k = bad + 1,
        }
    }
    None
}

fn drem_time(t: &Trajectory) -> Option<f64> {
    let times: Vec<f64> = t.records.iter().map(|r| r.t).collect();
    let errs: Vec<f64> = t
        .records
        .iter()
        .map(|r| {
            let d = r.drem.unwrap();
            inf2(d.estimate.x3 - r.x.x3, d.estimate.x4 - r.x.x4)
        })
        .collect();
    sustained_time(&times, &errs)
}

fn gradient_time(t: &Trajectory) -> Option<f64> {
    let times: Vec<f64> = t.records.iter().map(|r| r.t).collect();
    let errs: Vec<f64> = t
        .records
        .iter()
        .map(|r| {
            let g = r.gradient.unwrap();
            inf2(g.x34_hat[0] - r.x.x3, g.x34_hat[1] - r.x.x4)
        })
        .collect();
    sustained_time(&times, &errs)
}

fn show(t: Option<f64>) -> String {
    t.map_or("none".into(), |t| format!("{t:.3} s"))
}

// ---- independent plant, measurement and integrator ----

fn pmu_y4_y5_y6(x: [f64; 4], y1: f64, y2: f64) -> (f64, f64, f64) {
    let (s, c) = (x[0] - y1).sin_cos();
    let y4sq = (x[2] * x[2] + x[3] * x[3] + y2 * y2 - 2.0 * y2 * (x[3] * c + x[2] * s)) / (X_QP * X_QP);
    let y5 = y2 / X_QP * (x[3] * s - x[2] * c);
    let y6 = y2 / X_QP * (x[3] * c + x[2] * s - y2);
    (y4sq.max(0.0).sqrt(), y5, y6)
}

fn plant(x: [f64; 4], c: &DerivedCoefficients, u: (f64, f64), bus: (f64, f64)) -> [f64; 4] {
    let (_, y5, _) = pmu_y4_y5_y6(x, bus.0, bus.1);
    let (s, co) = (x[0] - bus.0).sin_cos();
    [
        x[1],
        -c.a0 * x[1] + c.b0 * (u.0 - y5),
        -c.a2 * x[2] + c.b2 * bus.1 * s,
        -c.a1 * x[3] + c.b1 * bus.1 * co + c.c1 * u.1,
    ]
}

/// `A` rebuilt from the PMU quantities of state `x`.
fn measured_a(x: [f64; 4], c: &DerivedCoefficients, bus: (f64, f64)) -> [[f64; 2]; 2] {
    let y2 = bus.1;
    let (y4, y5, y6) = pmu_y4_y5_y6(x, bus.0, y2);
    let big_y1 = X_QP * X_QP * y4 * y4 + 2.0 * X_QP * y6 + y2 * y2;
    let z0 = y6 + y2 * y2 / X_QP;
    let (k1, k2) = (c.b1 * X_QP / big_y1, c.b2 * X_QP / big_y1);
    [[-c.a2 + k2 * z0, k2 * y5], [-k1 * y5, -c.a1 + k1 * z0]]
}

fn rk4<const N: usize>(x: [f64; N], h: f64, mut f: impl FnMut(usize, [f64; N]) -> [f64; N]) -> [f64; N] {
    let add = |a: [f64; N], b: [f64; N], s: f64| std::array::from_fn(|i| a[i] + s * b[i]);
    let k1 = f(0, x);
    let k2 = f(1, add(x, k1, h / 2.0));
    let k3 = f(2, add(x, k2, h / 2.0));
    let k4 = f(3, add(x, k3, h));
    std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Determinant by partial-pivot Gaussian elimination.
fn lu_det(mut m: Mat5) -> f64 {
    let mut det = 1.0;
    for col in 0..5 {
        let p = (col..5).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
        if m[p][col] == 0.0 {
            return 0.0;
        }
        if p != col {
            m.swap(p, col);
            det = -det;
        }
        det *= m[col][col];
        for r in col + 1..5 {
            let f = m[r][col] / m[col][col];
            for k in col..5 {
                m[r][k] -= f * m[col][k];
            }
        }
    }
    det
}

fn max_abs5(m: &Mat5) -> f64 {
    m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// `(‖adj(M)M - det(M)I‖max / max|M|⁵, ‖adj(M)y - cramer(M, y)‖max / (max|M|⁴ max|y|))`.
fn mixing_gaps(m: &Mat5, y: &[f64; 5]) -> (f64, f64) {
    let adj = adjugate5(m);
    let det = lu_det(*m);
    let mut gap = 0.0f64;
    for i in 0..5 {
        for j in 0..5 {
            let p: f64 = (0..5).map(|k| adj[i][k] * m[k][j]).sum();
            gap = gap.max((p - if i == j { det } else { 0.0 }).abs());
        }
    }
    let via_adj: Vec<f64> = (0..5).map(|i| (0..5).map(|k| adj[i][k] * y[k]).sum()).collect();
    let via_cramer = cramer5(m, y);
    let mix = via_adj.iter().zip(&via_cramer).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    let s = max_abs5(m);
    let ys = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (gap / s.powi(5), mix / (s.powi(4) * ys))
}

fn psi_of(r: &smib_observer::sim::Record) -> (Mat5, [f64; 5]) {
    let d = r.drem.unwrap();
    let e = r.extension.unwrap();
    let mut m = [[0.0; 5]; 5];
    let mut y = [0.0; 5];
    m[0] = e.regressor.psi;
    y[0] = e.regressor.y_e;
    for k in 0..4 {
        y[k + 1] = d.filters[k][0];
        m[k + 1].copy_from_slice(&d.filters[k][1..]);
    }
    (m, y)
}

fn main() -> ExitCode {
    let t0 = std::time::Instant::now();
    let base = Scenario::smib().without_observers();
    let mut drem_base = base.clone();
    drem_base.drem = Scenario::smib().drem;
    let scale = resolve_gain_scale(&drem_base).unwrap().unwrap();
    let coeffs = base.coefficients;
    let bus = (0.0, 1.0);
    let theta = [base.x0.x3, base.x0.x4];
    let mut lines = Vec::new();

    // Gain sweep of the GPEBO+DREM observer.
    let drem_run = |g: f64| {
        let mut s = drem_base.clone();
        let d = s.drem.as_mut().unwrap();
        d.gamma = [g, g];
        d.gain_scale = GainScale::Fixed(scale);
        run_scenario(&s).unwrap()
    };
    let mut drem_times = Vec::new();
    let mut reference: Option<Trajectory> = None;
    for g in DREM_SWEEP {
        let traj = drem_run(g);
        drem_times.push((g, drem_time(&traj)));
        if g == 100.0 {
            reference = Some(traj);
        }
    }
    let traj = reference.unwrap();
    let best_drem = drem_times.iter().filter_map(|p| p.1).fold(f64::INFINITY, f64::min);
    let times_text = drem_times.iter().map(|(g, t)| format!("{g:e}: {}", show(*t))).collect::<Vec<_>>().join(", ");

    lines.push(Line {
        id: "A1",
        title: "GPEBO+DREM reaches ||(x3 err, x4 err)||inf < 1e-3 for 0.5 s",
        passed: best_drem.is_finite(),
        detail: format!("gain scale {scale:.4e}; {times_text}"),
    });

    // A2: decay law of the scalar estimators at a gain that keeps the error above roundoff.
    {
        let t = drem_run(1.0);
        let gamma = t.drem_gamma.unwrap();
        let settle = 5.0 / DEFAULT_POLES.iter().copied().fold(f64::INFINITY, f64::min);
        let first = t.records[0].drem.unwrap().theta_hat;
        let mut energy = 0.0;
        let mut prev = 0.0;
        let mut worst = 0.0f64;
        for (k, r) in t.records.iter().enumerate() {
            let delta = r.drem.unwrap().delta;
            if k > 0 {
                energy += 0.5 * t.step * (prev * prev + delta * delta);
            }
            prev = delta;
            if r.t >= settle {
                for i in 0..2 {
                    let predicted = (-gamma[i] * energy).exp() * (first[i] - theta[i]).abs();
                    let actual = (r.drem.unwrap().theta_hat[i] - theta[i]).abs();
                    worst = worst.max((actual - predicted).abs() / predicted);
                }
            }
        }
        lines.push(Line {
            id: "A2",
            title: "|theta err(t)| = exp(-gamma int Delta^2) |theta err(0)| within 1e-3 relative",
            passed: worst <= 1e-3,
            detail: format!("max relative gap {worst:.3e} after t = {settle} s (nominal gain 1)"),
        });
    }

    let ordered: Vec<f64> = drem_times.iter().map(|p| p.1.unwrap_or(f64::INFINITY)).collect();
    lines.push(Line {
        id: "A3",
        title: "convergence time strictly decreasing in gain",
        passed: ordered.windows(2).all(|w| w[1] < w[0]),
        detail: times_text.clone(),
    });

    // A4: overparameterized baseline.
    {
        let mut details = Vec::new();
        let mut ok = best_drem.is_finite();
        for g in OVERPARAM_SWEEP {
            let mut s = base.clone();
            s.overparam = Some(OverparamSettings { gamma: scaled_identity(g), theta0: [0.0; 5] });
            let t = run_scenario(&s).unwrap();
            let e = |r: &smib_observer::sim::Record| {
                let th = r.overparam.unwrap().theta_hat;
                let v = [th[0] * th[1] - th[2], th[0] - th[3] * th[3], th[1] - th[4] * th[4]];
                v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
            };
            let k_ref = (2.5 / t.step).round() as usize;
            let (initial, peak) = (e(&t.records[k_ref]), t.records.iter().map(e).fold(0.0, f64::max));
            let terminal = e(t.records.last().unwrap());
            ok &= terminal > 0.1 * initial && terminal > 0.1 * peak;
            details.push(format!(
                "gain {g:e}: |e|(T) = {terminal:.3e}, |e|(2.5 s) = {initial:.3e}, peak {peak:.3e}"
            ));
        }
        lines.push(Line {
            id: "A4",
            title: "overparameterized consistency error stays above 10% while DREM passes A1",
            passed: ok,
            detail: details.join("; "),
        });
    }

    // A5: gradient observer.
    {
        let mut times = Vec::new();
        for g in GRADIENT_SWEEP {
            let mut s = base.clone();
            s.gradient = Some(GradientSettings { gamma: scaled_identity(g), x0: [0.0; 2] });
            times.push((g, gradient_time(&run_scenario(&s).unwrap())));
        }
        let best = times.iter().filter_map(|p| p.1).fold(f64::INFINITY, f64::min);
        lines.push(Line {
            id: "A5",
            title: "gradient observer converges, slower than the best DREM run",
            passed: best.is_finite() && best > best_drem,
            detail: format!(
                "{}; best DREM {best_drem:.3} s",
                times.iter().map(|(g, t)| format!("{g:e}: {}", show(*t))).collect::<Vec<_>>().join(", ")
            ),
        });
    }

    // A6: non-injectivity certificate on random points.
    {
        let start = std::time::Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (mut null, mut det_gap, mut lib_gap) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..10_000 {
            let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-10.0..=10.0));
            let y2: f64 = rng.gen_range(-10.0..=10.0);
            let (s, c) = v[0].sin_cos();
            let j = [
                [-2.0 * y2 * (-v[1] * s + v[2] * c), -2.0 * y2 * c, -2.0 * y2 * s],
                [v[1] * c + v[2] * s, s, -c],
                [-v[1] * s + v[2] * c, c, s],
            ];
            let w = [1.0, -v[2], v[1]];
            for row in &j {
                null = null.max((row[0] * w[0] + row[1] * w[1] + row[2] * w[2]).abs());
            }
            let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
            let norm = j.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
            det_gap = det_gap.max(det.abs() / (1.0 + norm.powi(3)));
            let cert = noninjectivity_certificate(v, y2);
            for (a, b) in cert.jacobian.iter().flatten().zip(j.iter().flatten()) {
                lib_gap = lib_gap.max((a - b).abs() / (1.0 + norm));
            }
            null = null.max(cert.residual);
        }
        let elapsed = start.elapsed().as_secs_f64();
        lines.push(Line {
            id: "A6",
            title: "Jacobian null vector (1, -v3, v2) to 1e-12, det <= 1e-10 (1 + |J|^3)",
            passed: null <= 1e-12 && det_gap <= 1e-10 && lib_gap <= 1e-14,
            detail: format!(
                "10^4 samples: null {null:.2e}, det {det_gap:.2e}, library Jacobian gap {lib_gap:.2e}, {elapsed:.3} s"
            ),
        });
    }

    // A7: measurement identities and the linear time-varying model along the trajectory.
    {
        let h = traj.step;
        let (mut id1, mut id2, mut a_gap, mut pointwise, mut defect) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (k, r) in traj.records.iter().enumerate() {
            let x = r.x.to_array();
            id1 = id1.max((r.signals.y1 - (x[2] * x[2] + x[3] * x[3])).abs());
            id2 = id2.max((r.signals.y2 * r.signals.y2 + r.signals.y3 * r.signals.y3 - r.signals.y1).abs());
            let a = measured_a(x, &coeffs, bus);
            for i in 0..2 {
                for j in 0..2 {
                    a_gap = a_gap.max((a[i][j] - r.a.0[i][j]).abs());
                }
            }
            let f = plant(x, &coeffs, (0.1, 0.1), bus);
            pointwise = pointwise
                .max((f[2] - a[0][0] * x[2] - a[0][1] * x[3]).abs())
                .max((f[3] - a[1][0] * x[2] - a[1][1] * x[3] - coeffs.c1 * 0.1).abs());
            if k + 1 < traj.records.len() {
                let mut stages = Vec::with_capacity(4);
                let next = rk4(x, h, |_, s| {
                    stages.push(s);
                    plant(s, &coeffs, (0.1, 0.1), bus)
                });
                let ltv = rk4([x[2], x[3]], h, |i, z| {
                    let a = measured_a(stages[i], &coeffs, bus);
                    [a[0][0] * z[0] + a[0][1] * z[1], a[1][0] * z[0] + a[1][1] * z[1] + coeffs.c1 * 0.1]
                });
                defect = defect.max((ltv[0] - next[2]).abs()).max((ltv[1] - next[3]).abs());
                let rec = traj.records[k + 1].x;
                a_gap = a_gap.max((next[2] - rec.x3).abs()).max((next[3] - rec.x4).abs());
            }
        }
        let tol = 10.0 * h.powi(4);
        lines.push(Line {
            id: "A7",
            title: "Y1 and rotation identities to 1e-9; LTV residual per step <= 10 h^4",
            passed: id1 <= 1e-9 && id2 <= 1e-9 && pointwise <= tol && defect <= tol && a_gap <= 1e-9,
            detail: format!(
                "Y1 {id1:.2e}, Y2^2+Y3^2 {id2:.2e}, field residual {pointwise:.2e}, one-step defect {defect:.2e} (bound {tol:.0e}), library agreement {a_gap:.2e}"
            ),
        });
    }

    // A8: transition-matrix identity.
    {
        let mut worst = 0.0f64;
        for r in &traj.records {
            let e = r.extension.unwrap().state;
            let p3 = e.xi[0] + e.phi[0][0] * theta[0] + e.phi[0][1] * theta[1];
            let p4 = e.xi[1] + e.phi[1][0] * theta[0] + e.phi[1][1] * theta[1];
            worst = worst.max(inf2(r.x.x3 - p3, r.x.x4 - p4));
        }
        lines.push(Line {
            id: "A8",
            title: "||x34 - xi - Phi theta||inf <= 1e-6 over the horizon",
            passed: worst <= 1e-6,
            detail: format!("max {worst:.3e}"),
        });
    }

    // A9: mixing algebra.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut adj_r, mut mix_r) = (0.0f64, 0.0f64);
        for _ in 0..1000 {
            let m: Mat5 = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
            let y: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let (a, c) = mixing_gaps(&m, &y);
            adj_r = adj_r.max(a);
            mix_r = mix_r.max(c);
        }
        let (mut adj_t, mut mix_t, mut rec_gap) = (0.0f64, 0.0f64, 0.0f64);
        for r in &traj.records {
            let (m, y) = psi_of(r);
            let (a, c) = mixing_gaps(&m, &y);
            adj_t = adj_t.max(a);
            mix_t = mix_t.max(c);
            let d = r.drem.unwrap();
            let s = max_abs5(&m).powi(4) * y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (p, q) in d.cal_y.iter().zip(&d.cal_y_cramer) {
                rec_gap = rec_gap.max((p - q).abs() / s);
            }
        }
        lines.push(Line {
            id: "A9",
            title: "adj(Psi) Psi = det(Psi) I to 1e-9, Cramer = adjugate to 1e-10 (relative)",
            passed: adj_r <= 1e-9 && adj_t <= 1e-9 && mix_r <= 1e-10 && mix_t <= 1e-10 && rec_gap <= 1e-10,
            detail: format!(
                "random: {adj_r:.2e} / {mix_r:.2e}; trajectory: {adj_t:.2e} / {mix_t:.2e}; recorded: {rec_gap:.2e}"
            ),
        });
    }

    // A10: integrator order on the plant alone.
    {
        let finals: Vec<[f64; 4]> = [0.01, 0.005, 0.0025]
            .iter()
            .map(|&h| {
                let mut s = base.clone();
                s.step = h;
                s.horizon = 10.0;
                run_scenario(&s).unwrap().records.last().unwrap().x.to_array()
            })
            .collect();
        let d = |a: &[f64; 4], b: &[f64; 4]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let ratio = d(&finals[0], &finals[1]) / d(&finals[1], &finals[2]);
        lines.push(Line {
            id: "A10",
            title: "RK4 step-halving error ratio in [8, 32]",
            passed: (8.0..=32.0).contains(&ratio),
            detail: format!("ratio {ratio:.3} for h = 0.01, 0.005, 0.0025 over 10 s"),
        });
    }

    let mut failed = 0;
    for l in &lines {
        println!("{} {:<4} {} | {}", if l.passed { "PASS" } else { "FAIL" }, l.id, l.title, l.detail);
        failed += usize::from(!l.passed);
    }
    println!(
        "acceptance: {} criteria, {failed} failed ({:.1} s)",
        lines.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
