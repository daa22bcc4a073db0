//! Acceptance checks. Each criterion prints one `PASS` or `FAIL` line; the
//! test fails if any criterion does.

use std::io::Write;
use std::time::{Duration, Instant};

use nsc_core::filtering::{build_z, fit_linear_offline, kalman_steady_state, kalman_step, spectral_basis, KalmanNoise, KalmanState};
use nsc_core::harness::{
    run_batch, run_experiment, run_filter_experiment, run_spectral_experiment, run_sysid_experiment, ComparatorKind,
    ControllerKind, ControllerSpec, ScenarioConfig,
};
use nsc_core::lds::{
    decay_profile, simulate, spectral_radius, CostFunction, LinearSystem, PerturbationKind, PerturbationSource,
    QuadraticCost, SimulationConfig, SystemMatrices,
};
use nsc_core::linalg::{least_squares, Matrix, Vector};
use nsc_core::online::{Gpc, Grc, OgdState, OnlineConfig, Projection, StepSchedule};
use nsc_core::optimal::{dare_solve, lqr_finite, DARE_MAX_ITER, DARE_TOL};
use nsc_core::policies::{dac_from_linear, lift_glc, natures_y_step, GlcPolicy, LinearPolicy, NaturesY, Policy, Stabilizer};
use nsc_core::sysid::{estimate_moments, excite_and_record, SimulatedPlant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn rand_m(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn with_radius(m: Matrix, radius: f64) -> Matrix {
    let rho = spectral_radius(&m).unwrap();
    m * (radius / rho)
}

fn scalar(v: f64) -> Matrix {
    Matrix::from_element(1, 1, v)
}

fn within_time(outcome: Outcome, elapsed: Duration, limit: Duration) -> Outcome {
    let (ok, detail) = outcome;
    let fast = elapsed < limit;
    (ok && fast, format!("{detail}; {:.2}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()))
}

// 1

fn dare_golden_value() -> Outcome {
    let started = Instant::now();
    let sol = dare_solve(&scalar(1.0), &scalar(1.0), &scalar(1.0), &scalar(1.0), DARE_TOL, DARE_MAX_ITER).unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let (s, k) = (sol.s[(0, 0)], sol.k[(0, 0)]);
    let ok = (s - 1.6180340).abs() <= 1e-6 && (k + 0.6180340).abs() <= 1e-6 && (s * s - s - 1.0).abs() <= 1e-9;
    within_time((ok, format!("S = {s:.9} (phi = {phi:.9}), K = {k:.9}")), started.elapsed(), Duration::from_secs(1))
}

// 2

fn kalman_golden_value() -> Outcome {
    let started = Instant::now();
    let noise = KalmanNoise::new(scalar(1.0), scalar(1.0)).unwrap();
    let st = kalman_steady_state(&scalar(1.0), &scalar(1.0), &noise, 1e-12, 100_000).unwrap();
    let (sigma, l) = (st.sigma[(0, 0)], st.gain[(0, 0)]);
    let ok = (sigma - 1.6180340).abs() <= 1e-6 && (l - 0.6180340).abs() <= 1e-6;
    within_time((ok, format!("Sigma = {sigma:.9}, L = {l:.9}")), started.elapsed(), Duration::from_secs(1))
}

// 3

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate01(f: &dyn Fn(f64) -> f64) -> f64 {
    let (fa, fm, fb) = (f(0.0), f(0.5), f(1.0));
    simpson(f, 0.0, 1.0, fa, fm, fb, (fa + 4.0 * fm + fb) / 6.0, 1e-14, 50)
}

/// `mu_alpha = (1, alpha - 1, alpha (alpha - 1), ...)`.
fn mu(alpha: f64, i: usize) -> f64 {
    if i == 0 {
        1.0
    } else {
        (alpha - 1.0) * alpha.powi(i as i32 - 1)
    }
}

/// Cyclic Jacobi; eigenvalues in decreasing order.
fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        if off < 1e-60 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn hankel_matrix_exactness() -> Outcome {
    let started = Instant::now();
    let z = build_z(10).unwrap();
    let mut entry_gap: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            let q = integrate01(&|a| mu(a, i) * mu(a, j));
            entry_gap = entry_gap.max((z[(i, j)] - q).abs());
        }
    }
    let oracle = jacobi_eigenvalues(&build_z(30).unwrap());
    let basis = spectral_basis(30, 30).unwrap();
    let eig_gap = basis.values.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ratio = basis.values[14] / basis.values[0];
    let ok = entry_gap <= 1e-10 && eig_gap <= 1e-10 && ratio <= 1e-6;
    within_time(
        (ok, format!("Z_10 quadrature gap {entry_gap:.1e}, Z_30 eigenvalue gap {eig_gap:.1e}, sigma_15/sigma_1 = {ratio:.1e}")),
        started.elapsed(),
        Duration::from_secs(5),
    )
}

// 4

fn lqr_base_case() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ok = true;
    for _ in 0..10 {
        let (a, b) = (rand_m(3, 3, &mut rng), rand_m(3, 2, &mut rng));
        let g = rand_m(3, 3, &mut rng);
        let q = &g * g.transpose();
        let r = Matrix::identity(2, 2);
        let sol = lqr_finite(&a, &b, &q, &r, 12, 0.0).unwrap();
        let last = sol.horizon() - 1;
        ok &= sol.s[last] == q && sol.k[last] == Matrix::zeros(2, 3);
    }
    (ok, "S_T = Q and K_T = 0 exactly on 10 random instances".to_string())
}

// 5

fn glc_lifting() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let dx = rng.random_range(1..=3);
        let du = rng.random_range(1..=2);
        let h = rng.random_range(1..=4);
        let sys = LinearSystem::time_invariant(with_radius(rand_m(dx, dx, &mut rng), 0.9), rand_m(dx, du, &mut rng), None).unwrap();
        let glc = GlcPolicy::new((0..h).map(|_| rand_m(du, dx, &mut rng) * 0.2).collect()).unwrap();
        let lifted = lift_glc(&sys, &glc).unwrap();
        let ws: Vec<Vector> = (0..30).map(|_| rand_m(dx, 1, &mut rng).column(0).into_owned()).collect();
        let x0 = rand_m(dx, 1, &mut rng).column(0).into_owned();
        let cost = CostFunction::quadratic(Matrix::identity(dx, dx), Matrix::identity(du, du)).unwrap();
        let big = dx * h;
        let big_cost = CostFunction::quadratic(Matrix::identity(big, big), Matrix::identity(du, du)).unwrap();
        let orig = simulate(
            &sys,
            &mut Policy::Glc(glc.clone()),
            &PerturbationSource::recorded(ws.clone()),
            &cost,
            &SimulationConfig::new(30, 0).with_x0(x0.clone()),
        )
        .unwrap();
        let lift = simulate(
            &lifted.system,
            &mut Policy::Linear(LinearPolicy::new(lifted.gain.clone())),
            &PerturbationSource::recorded(lifted.lift_perturbations(&ws)),
            &big_cost,
            &SimulationConfig::new(30, 0).with_x0(lifted.lift_state(&x0)),
        )
        .unwrap();
        for (x, z) in orig.states.iter().zip(&lift.states) {
            worst = worst.max((x - z.rows(0, dx)).amax());
        }
        for (u, v) in orig.controls.iter().zip(&lift.controls) {
            worst = worst.max((u - v).amax());
        }
    }
    (worst <= 1e-10, format!("max block gap {worst:.1e} over 20 instances, T = 30"))
}

// 6

fn natures_y_formulas() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let (dx, du, dy, horizon) = (rng.random_range(1..=4), rng.random_range(1..=2), rng.random_range(1..=3), 20);
        let table: Vec<SystemMatrices> = (0..=horizon)
            .map(|_| SystemMatrices {
                a: rand_m(dx, dx, &mut rng),
                b: rand_m(dx, du, &mut rng),
                c: Some(rand_m(dy, dx, &mut rng)),
            })
            .collect();
        let us: Vec<Vector> = (0..horizon).map(|_| rand_m(du, 1, &mut rng).column(0).into_owned()).collect();
        let ys: Vec<Vector> = (0..=horizon).map(|_| rand_m(dy, 1, &mut rng).column(0).into_owned()).collect();
        let mut tracker = NaturesY::new(dx);
        for t in 0..horizon {
            let m = &table[t];
            let rec = natures_y_step(&mut tracker, &m.a, &m.b, m.c.as_ref().unwrap(), &us[t], &ys[t]).unwrap();
            let mut z = Vector::zeros(dx);
            for i in 1..=t {
                let mut term = &table[t - i].b * &us[t - i];
                for m in &table[t - i + 1..t] {
                    term = &m.a * term;
                }
                z += term;
            }
            let direct = &ys[t] - table[t].c.as_ref().unwrap() * z;
            let scale = direct.amax().max(1.0);
            worst = worst.max((rec - direct).amax() / scale);
        }
    }
    (worst <= 1e-10, format!("max gap {worst:.1e} over 20 time-varying instances, T = 20"))
}

// 7

/// Max-step control gap between `u = K x` and its DAC image with window `h`,
/// with the measured `(kappa, delta)` of `K (A + B K)^i`.
fn dac_gap(h: usize) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = with_radius(rand_m(3, 3, &mut rng), 0.6);
    let b = rand_m(3, 1, &mut rng);
    let k = rand_m(1, 3, &mut rng) * 0.3;
    let sys = LinearSystem::time_invariant(a.clone(), b.clone(), None).unwrap();
    let src = PerturbationSource::new(PerturbationKind::Sinusoidal {
        amplitude: 1.0 / 3f64.sqrt(),
        omega: 0.3,
        phases: vec![0.0, 1.0, 2.0],
    });
    let cost = CostFunction::quadratic(Matrix::identity(3, 3), Matrix::identity(1, 1)).unwrap();
    let cfg = SimulationConfig::new(200, 0);
    let lin = simulate(&sys, &mut Policy::Linear(LinearPolicy::new(k.clone())), &src, &cost, &cfg).unwrap();
    let dac = simulate(&sys, &mut Policy::Dac(dac_from_linear(&a, &b, &k, h).unwrap()), &src, &cost, &cfg).unwrap();
    let gap = lin.controls.iter().zip(&dac.controls).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
    let profile = decay_profile(Some(&k), &(&a + &b * &k), None, 400).unwrap();
    (gap, profile.kappa, profile.delta)
}

fn dac_approximates_linear() -> Outcome {
    let (gap, kappa, delta) = dac_gap(20);
    let bound = kappa * (-delta * 20.0).exp() / delta;
    let hs: Vec<usize> = (2..=30).step_by(2).collect();
    let y = Vector::from_iterator(hs.len(), hs.iter().map(|&h| dac_gap(h).0.ln()));
    let x = Matrix::from_fn(hs.len(), 2, |i, j| if j == 0 { 1.0 } else { hs[i] as f64 });
    let (theta, rss) = least_squares(&x, &y);
    let mean = y.mean();
    let r2 = 1.0 - rss / y.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let ok = gap <= bound && theta[1] < 0.0 && r2 > 0.95;
    (ok, format!("h = 20: gap {gap:.2e} <= {bound:.2e}; log-gap slope {:.3}, R^2 = {r2:.4}", theta[1]))
}

// 8

fn fd_gap<F: Fn(&[Matrix]) -> f64>(m: &[Matrix], analytic: &[Matrix], loss: F) -> f64 {
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (k, g) in analytic.iter().enumerate() {
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let (mut plus, mut minus) = (m.to_vec(), m.to_vec());
                plus[k][(i, j)] += eps;
                minus[k][(i, j)] -= eps;
                worst = worst.max(((loss(&plus) - loss(&minus)) / (2.0 * eps) - g[(i, j)]).abs());
            }
        }
    }
    worst
}

fn params(count: usize, r: usize, c: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<Matrix> {
    (0..count).map(|_| rand_m(r, c, rng) * scale).collect()
}

fn midpoint_violation<F: Fn(&[Matrix]) -> f64>(loss: F, count: usize, r: usize, c: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let m1 = params(count, r, c, 2.0, rng);
        let m2 = params(count, r, c, 2.0, rng);
        let mid: Vec<Matrix> = m1.iter().zip(&m2).map(|(a, b)| (a + b) * 0.5).collect();
        worst = worst.max(loss(&mid) - 0.5 * (loss(&m1) + loss(&m2)));
    }
    worst
}

fn controller_gradients() -> Outcome {
    let (mut grad_gap, mut convex): (f64, f64) = (0.0, f64::NEG_INFINITY);
    let noise = PerturbationSource::new(PerturbationKind::Gaussian { sigma: 0.5 });
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let a = with_radius(rand_m(2, 2, &mut rng), 1.05);
        let b = rand_m(2, 1, &mut rng) + Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let r = scalar(0.5);
        let k = dare_solve(&a, &b, &q, &r, DARE_TOL, DARE_MAX_ITER).unwrap().k;
        let cost = CostFunction::Quadratic(QuadraticCost::new(q, r, None).unwrap());
        let sys = LinearSystem::time_invariant(a.clone(), b.clone(), None).unwrap();
        let mut gpc = Gpc::new(sys.clone(), Stabilizer::Fixed(k), cost.clone(), &OnlineConfig::new(3, StepSchedule::InvSqrt(0.05))).unwrap();
        simulate(&sys, &mut gpc, &noise, &cost, &SimulationConfig::new(40, seed)).unwrap();
        for t in [5usize, 20, 39] {
            let m = params(3, 1, 2, 0.4, &mut rng);
            let (_, g) = gpc.loss_and_gradient(t, &m).unwrap();
            grad_gap = grad_gap.max(fd_gap(&m, &g, |p| gpc.loss(t, p).unwrap()));
        }
        convex = convex.max(midpoint_violation(|p| gpc.loss(25, p).unwrap(), 3, 1, 2, &mut rng));

        let c = rand_m(1, 2, &mut rng);
        let obs = LinearSystem::time_invariant(with_radius(rand_m(2, 2, &mut rng), 0.8), b, Some(c)).unwrap();
        let ocost = CostFunction::quadratic(scalar(1.0), scalar(0.3)).unwrap();
        let mut grc = Grc::new(obs.clone(), ocost.clone(), &OnlineConfig::new(3, StepSchedule::InvSqrt(0.05))).unwrap();
        simulate(&obs, &mut grc, &noise, &ocost, &SimulationConfig::new(60, seed).on_observation()).unwrap();
        for t in [3usize, 30, 59] {
            let m = params(4, 1, 1, 0.5, &mut rng);
            let (_, g) = grc.loss_and_gradient(t, &m).unwrap();
            grad_gap = grad_gap.max(fd_gap(&m, &g, |p| grc.loss(t, p).unwrap()));
        }
        convex = convex.max(midpoint_violation(|p| grc.loss(40, p).unwrap(), 4, 1, 1, &mut rng));
    }
    let ok = grad_gap <= 1e-5 && convex <= 1e-9;
    (ok, format!("max finite-difference gap {grad_gap:.1e}; worst midpoint excess {convex:.1e} (100 pairs x 10 losses)"))
}

// 9

fn uniform_noise() -> PerturbationSource {
    PerturbationSource::new(PerturbationKind::UniformBall { radius: 1.0 })
}

fn sublinear_regret() -> Outcome {
    let started = Instant::now();
    let cases = [
        ("scalar-0.9", ControllerKind::Gpc),
        ("double-integrator", ControllerKind::Gpc),
        ("scalar-0.9", ControllerKind::Grc),
        ("b747", ControllerKind::Grc),
    ];
    let mut configs = Vec::new();
    for (preset, kind) in cases {
        for seed in 0..5 {
            for horizon in [500, 2000] {
                configs.push(
                    ScenarioConfig::preset(preset, horizon, seed)
                        .with_controller(ControllerSpec::new(kind))
                        .with_perturbation(uniform_noise()),
                );
            }
        }
    }
    let results = run_batch(&configs);
    let mut ok = true;
    let mut parts = Vec::new();
    for (c, chunk) in results.chunks(10).enumerate() {
        let mut wins = 0;
        for pair in chunk.chunks(2) {
            match (&pair[0], &pair[1]) {
                (Ok(short), Ok(long)) if long.report.final_avg_regret() < short.report.final_avg_regret() => wins += 1,
                _ => {}
            }
        }
        ok &= wins == 5;
        parts.push(format!("{} {} {wins}/5", cases[c].1.name(), cases[c].0));
    }
    let sine = PerturbationSource::new(PerturbationKind::Sinusoidal {
        amplitude: 1.0,
        omega: 2.0 * std::f64::consts::PI / 50.0,
        phases: Vec::new(),
    });
    let total = |kind| {
        let mut spec = ControllerSpec::new(kind);
        spec.comparator = Some(ComparatorKind::None);
        let cfg = ScenarioConfig::preset("scalar-0.9", 2000, 0).with_controller(spec).with_perturbation(sine.clone());
        run_experiment(&cfg).unwrap().report.total_cost()
    };
    let (gpc, lqr) = (total(ControllerKind::Gpc), total(ControllerKind::Lqr));
    ok &= gpc < lqr;
    parts.push(format!("sinusoidal: gpc {gpc:.1} < lqr {lqr:.1}"));
    within_time((ok, parts.join(", ")), started.elapsed(), Duration::from_secs(120))
}

// 10

fn system_identification() -> Outcome {
    let mut parts = Vec::new();
    let plant = |a: Matrix, b: Matrix, noise: PerturbationSource, seed: u64| {
        SimulatedPlant::new(LinearSystem::time_invariant(a, b, None).unwrap(), noise, seed, None).unwrap()
    };

    let b = Matrix::from_row_slice(3, 1, &[0.3, -1.7, 2.2]);
    let mut p = plant(Matrix::zeros(3, 3), b.clone(), PerturbationSource::zero(), 0);
    let rec = excite_and_record(&mut p, 1, 37, 5).unwrap();
    let exact = estimate_moments(&rec, 1, 37).unwrap().g[0] == b;
    parts.push(format!("A = 0 recovery exact: {exact}"));

    let mut p = plant(scalar(0.5), scalar(1.0), PerturbationSource::zero(), 0);
    let rec = excite_and_record(&mut p, 2, 50_000, 4).unwrap();
    let est = estimate_moments(&rec, 2, 50_000).unwrap();
    let moment_gap = (0..=2).map(|j| (est.g[j][(0, 0)] - 0.5f64.powi(j as i32)).abs()).fold(0.0, f64::max);
    parts.push(format!("scalar moment gap {moment_gap:.3}"));

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = with_radius(rand_m(2, 2, &mut rng), 0.7);
    let b = rand_m(2, 2, &mut rng);
    let truth = [b.clone(), &a * &b];
    let noise = PerturbationSource::new(PerturbationKind::Gaussian { sigma: 0.5 });
    let err = |t0: usize| -> f64 {
        (0..10)
            .map(|seed| {
                let mut p = plant(a.clone(), b.clone(), noise.clone(), seed);
                let rec = excite_and_record(&mut p, 1, t0, 100 + seed).unwrap();
                let est = estimate_moments(&rec, 1, t0).unwrap();
                est.g.iter().zip(&truth).map(|(g, t)| (g - t).norm()).sum::<f64>()
            })
            .sum::<f64>()
            / 10.0
    };
    let ratio = err(2000) / err(8000);
    parts.push(format!("error ratio T0 -> 4 T0 = {ratio:.2}"));

    let mut wins = 0;
    for seed in 0..5 {
        let regret = |horizon| {
            let cfg = ScenarioConfig::preset("scalar-0.9", horizon, seed)
                .with_controller(ControllerSpec::new(ControllerKind::Gpc))
                .with_perturbation(uniform_noise());
            run_sysid_experiment(&cfg).map(|e| e.report.final_avg_regret())
        };
        if let (Ok(short), Ok(long)) = (regret(1000), regret(8000)) {
            if long < short {
                wins += 1;
            }
        }
    }
    parts.push(format!("identify-then-control regret decreasing {wins}/5"));
    let ok = exact && moment_gap <= 0.05 && (1.0..=3.0).contains(&ratio) && wins == 5;
    (ok, parts.join(", "))
}

// 11

fn kalman_optimality() -> Outcome {
    let steps = 100_000;
    let (a, b, c) = (0.9, 1.0, 1.0);
    let (qx, qy): (f64, f64) = (0.5, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let wx = Normal::new(0.0, qx.sqrt()).unwrap();
    let wy = Normal::new(0.0, qy.sqrt()).unwrap();
    let noise = KalmanNoise::new(scalar(qx), scalar(qy)).unwrap();
    let (am, bm, cm) = (scalar(a), scalar(b), scalar(c));
    let mut st = KalmanState::initial(&noise.sigma_x).unwrap();
    let mut x = 0.0;
    let (mut ys, mut us) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    let mut sq = 0.0;
    for _ in 0..steps {
        let y = Vector::from_element(1, c * x + wy.sample(&mut rng));
        let u = Vector::from_element(1, rng.random_range(-1.0..1.0));
        sq += (y[0] - st.predicted_observation(&cm)[0]).powi(2);
        st = kalman_step(&st, &am, &bm, &cm, &noise, &u, &y).unwrap().state;
        x = a * x + b * u[0] + wx.sample(&mut rng);
        ys.push(y);
        us.push(u);
    }
    let kalman = sq / steps as f64;
    let (_, _, offline) = fit_linear_offline(&ys, &us, 10, 10).unwrap();
    (kalman <= 1.01 * offline, format!("Kalman MSE {kalman:.5}, offline linear predictor MSE {offline:.5}, 1e5 steps"))
}

// 12

fn ogd_regret_bound() -> Outcome {
    let (g_bound, diameter) = (1.0, 2.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for horizon in [100usize, 1000] {
        let mut rng = ChaCha8Rng::seed_from_u64(horizon as u64);
        let mut ogd = OgdState::new(vec![0.0; 3], StepSchedule::InvSqrt(diameter / g_bound), Projection::Ball(diameter / 2.0)).unwrap();
        let (mut learner, mut total) = (0.0, [0.0; 3]);
        for t in 0..horizon {
            let sign = if (t / 10) % 2 == 0 { 1.0 } else { -1.0 };
            let mut g = [sign, rng.random_range(-1.0..1.0), 0.5 * sign];
            let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            g.iter_mut().for_each(|v| *v *= g_bound / n);
            learner += g.iter().zip(&ogd.point).map(|(a, b)| a * b).sum::<f64>();
            total.iter_mut().zip(&g).for_each(|(acc, v)| *acc += v);
            ogd.update(&g).unwrap();
        }
        let best = -(diameter / 2.0) * total.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = 3.0 * g_bound * diameter * (horizon as f64).sqrt();
        ok &= learner - best <= bound;
        parts.push(format!("T = {horizon}: regret {:.2} <= {bound:.2}", learner - best));
    }
    (ok, parts.join(", "))
}

// 13

fn same_files(write: impl Fn(&std::path::Path)) -> bool {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write(a.path());
    write(b.path());
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n != "timing.txt")
        .collect();
    names.sort();
    !names.is_empty() && names.iter().all(|n| std::fs::read(a.path().join(n)).ok() == std::fs::read(b.path().join(n)).ok())
}

fn determinism() -> Outcome {
    let mut runs = 0;
    let mut ok = true;
    let noisy = |preset: &str, kind| {
        ScenarioConfig::preset(preset, 300, 7)
            .with_controller(ControllerSpec::new(kind))
            .with_perturbation(uniform_noise())
    };
    for cfg in [
        noisy("scalar-0.9", ControllerKind::Gpc),
        noisy("double-integrator", ControllerKind::Lqr),
        noisy("b747", ControllerKind::Grc),
        noisy("ventilator", ControllerKind::Gpc),
    ] {
        ok &= same_files(|dir| {
            run_experiment(&cfg).unwrap().write(dir).unwrap();
        });
        runs += 1;
    }
    let sysid = noisy("scalar-0.9", ControllerKind::Gpc);
    ok &= same_files(|dir| {
        run_sysid_experiment(&sysid).unwrap().write(dir).unwrap();
    });
    let pred = ScenarioConfig::preset("scalar-0.9", 300, 7);
    ok &= same_files(|dir| {
        run_filter_experiment(&pred).unwrap().write(dir).unwrap();
    });
    ok &= same_files(|dir| {
        run_spectral_experiment(&pred).unwrap().write(dir).unwrap();
    });
    runs += 3;
    (ok, format!("{runs} experiment kinds rerun with identical output files"))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 13] = [
        ("DARE golden value", dare_golden_value),
        ("Kalman steady state", kalman_golden_value),
        ("Z_T exactness", hankel_matrix_exactness),
        ("LQR base case", lqr_base_case),
        ("GLC lifting", glc_lifting),
        ("nature's y", natures_y_formulas),
        ("DAC approximates linear", dac_approximates_linear),
        ("GPC/GRC gradients", controller_gradients),
        ("sublinear regret", sublinear_regret),
        ("system identification", system_identification),
        ("Kalman optimality", kalman_optimality),
        ("OGD regret bound", ogd_regret_bound),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        let line = format!("{} {:>2}. {name}: {detail}\n", if ok { "PASS" } else { "FAIL" }, i + 1);
        // Straight to stdout so the lines show up without --nocapture.
        std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
        if !ok {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
