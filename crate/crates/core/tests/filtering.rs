use std::sync::Arc;

use nsc_core::filtering::{
    build_z, covariance_ok, fit_linear_offline, kalman_steady_state, kalman_step, load_or_build, spectral_basis,
    KalmanNoise, KalmanState, LinearPredictor, SpectralBasis, SpectralPredictor,
};
use nsc_core::linalg::{Matrix, Vector};
use nsc_core::online::{Projection, StepSchedule};
use nsc_core::optimal::dare_solve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

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

fn integrate(f: &dyn Fn(f64) -> f64) -> f64 {
    let (fa, fm, fb) = (f(0.0), f(0.5), f(1.0));
    simpson(f, 0.0, 1.0, fa, fm, fb, (fa + 4.0 * fm + fb) / 6.0, 1e-14, 50)
}

fn mu(alpha: f64, i: usize) -> f64 {
    if i == 0 {
        1.0
    } else {
        (alpha - 1.0) * alpha.powi(i as i32 - 1)
    }
}

/// Cyclic Jacobi rotations; returns eigenvalues sorted in decreasing order.
fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-60 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
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

#[test]
fn z_entries_match_quadrature() {
    let z = build_z(10).unwrap();
    for i in 0..10 {
        for j in 0..10 {
            let q = integrate(&|a| mu(a, i) * mu(a, j));
            assert!((z[(i, j)] - q).abs() <= 1e-10, "({i},{j}): {} vs {q}", z[(i, j)]);
        }
    }
}

#[test]
fn z_eigenvalues_match_jacobi_and_decay() {
    let z = build_z(30).unwrap();
    let oracle = jacobi_eigenvalues(&z);
    assert!(*oracle.last().unwrap() >= -1e-12);
    let basis = spectral_basis(30, 30).unwrap();
    for (a, b) in basis.values.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-10);
    }
    assert!(basis.values.windows(2).all(|w| w[0] >= w[1]));
    assert!(basis.values[14] / basis.values[0] <= 1e-6);

    // log sigma_k against k is close to a line with negative slope.
    let pts: Vec<(f64, f64)> = (0..15).map(|k| (k as f64, basis.values[k].ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    assert!(sxy / sxx < 0.0);
    assert!(sxy * sxy / (sxx * syy) > 0.9);
}

fn check_orthonormal(b: &SpectralBasis) {
    let g = b.vectors.transpose() * &b.vectors;
    assert!((g - Matrix::identity(b.count(), b.count())).amax() <= 1e-10);
    for j in 0..b.count() {
        let v = b.filter(j);
        let first = v.iter().find(|x| x.abs() > 1e-12 * v.amax()).unwrap();
        assert!(*first > 0.0);
    }
}

#[test]
fn basis_is_orthonormal_on_both_paths() {
    check_orthonormal(&spectral_basis(30, 10).unwrap());
    let big = spectral_basis(500, 12).unwrap();
    check_orthonormal(&big);
    assert!(big.values.windows(2).all(|w| w[0] >= w[1]));
    // Same leading spectrum as a dense solve of the same matrix.
    let dense = nalgebra::SymmetricEigen::new(build_z(500).unwrap());
    let mut ev: Vec<f64> = dense.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    for j in 0..12 {
        assert!((big.values[j] - ev[j]).abs() <= 1e-12, "j={j}");
    }
    let z = build_z(500).unwrap();
    for j in 0..6 {
        let resid = &z * big.filter(j) - big.filter(j) * big.values[j];
        assert!(resid.norm() <= 1e-10);
    }
}

#[test]
fn filter_responses_are_bounded_by_eigenvalues() {
    for horizon in [30usize, 100] {
        let basis = spectral_basis(horizon, 20).unwrap();
        for j in 0..basis.count() {
            let phi = basis.filter(j);
            let bound = 2.0 * basis.values[j].max(0.0).powf(0.25);
            for k in 0..=100 {
                let alpha = k as f64 / 100.0;
                let resp: f64 = (0..horizon).map(|i| phi[i] * mu(alpha, i)).sum();
                assert!(resp.abs() <= bound + 1e-12, "T={horizon} j={j} alpha={alpha}");
            }
        }
    }
}

#[test]
fn basis_cache_round_trips() {
    let dir = std::env::temp_dir().join(format!("nsc-basis-{}", std::process::id()));
    let built = load_or_build(&dir, 20, 5).unwrap();
    let cached = load_or_build(&dir, 20, 5).unwrap();
    assert_eq!(built, cached);
    assert_eq!(built, spectral_basis(20, 5).unwrap());
    std::fs::remove_dir_all(&dir).unwrap();
}

fn scalar_lds_trace(a: f64, horizon: usize, seed: u64) -> (Vec<Vector>, Vec<Vector>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let us: Vec<Vector> = (0..horizon).map(|_| Vector::from_element(1, if rng.random_bool(0.5) { 1.0 } else { -1.0 })).collect();
    let mut x = 0.0;
    let mut ys = Vec::with_capacity(horizon);
    for u in &us {
        ys.push(Vector::from_element(1, x));
        x = a * x + u[0];
    }
    (ys, us)
}

#[test]
fn spectral_filtering_learns_symmetric_lds() {
    let horizon = 3000;
    let (ys, us) = scalar_lds_trace(0.8, horizon, 11);
    let basis = Arc::new(spectral_basis(horizon, 25).unwrap());
    let mut p = SpectralPredictor::new(basis, 1, 1, StepSchedule::Constant(0.01), Projection::None).unwrap();
    let mut losses = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let (_, loss) = p.learn_step(&ys, &us, t, &ys[t]).unwrap();
        losses.push(loss);
    }
    let tail = &losses[3 * horizon / 4..];
    let mse = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!(mse <= 1e-3, "{mse}");
}

#[test]
fn full_spectral_basis_is_a_change_of_coordinates() {
    let horizon = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let us: Vec<Vector> = (0..horizon).map(|_| Vector::from_element(1, rng.random_range(-1.0..1.0))).collect();
    let ys: Vec<Vector> = (0..horizon).map(|_| Vector::from_element(1, rng.random_range(-1.0..1.0))).collect();
    let basis = Arc::new(spectral_basis(horizon, horizon).unwrap());
    let p = SpectralPredictor::new(basis, 1, 1, StepSchedule::Constant(0.0), Projection::None).unwrap();
    // Best least-squares fit of y_t - y_{t-1} on the spectral features vs. on
    // the raw padded history.
    let target = Vector::from_fn(horizon, |t, _| ys[t][0] - if t == 0 { 0.0 } else { ys[t - 1][0] });
    let spectral = Matrix::from_fn(horizon, horizon + 1, |t, j| p.features(&us, t)[j][0]);
    let raw = Matrix::from_fn(horizon, horizon + 1, |t, j| match j {
        0 => if t == 0 { 0.0 } else { us[t - 1][0] },
        _ if j <= t => us[t - j][0],
        _ => 0.0,
    });
    let rss = |x: &Matrix| nsc_core::linalg::least_squares(x, &target).1;
    assert!((rss(&spectral) - rss(&raw)).abs() <= 1e-8);
}

#[test]
fn spectral_gradient_matches_finite_differences() {
    let (ys, us) = scalar_lds_trace(0.5, 60, 2);
    let basis = Arc::new(spectral_basis(60, 6).unwrap());
    let mut p = SpectralPredictor::new(basis, 1, 1, StepSchedule::Constant(0.0), Projection::None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m: Vec<Matrix> = (0..7).map(|_| Matrix::from_element(1, 1, rng.random_range(-1.0..1.0))).collect();
    p.set_parameters(&m).unwrap();
    let (_, grad) = p.loss_and_gradient(&ys, &us, 45, &ys[45]);
    for k in 0..7 {
        let mut probe = p.clone();
        let eps = 1e-6;
        let mut plus = m.clone();
        plus[k][(0, 0)] += eps;
        probe.set_parameters(&plus).unwrap();
        let lp = probe.loss_and_gradient(&ys, &us, 45, &ys[45]).0;
        let mut minus = m.clone();
        minus[k][(0, 0)] -= eps;
        probe.set_parameters(&minus).unwrap();
        let lm = probe.loss_and_gradient(&ys, &us, 45, &ys[45]).0;
        assert!(((lp - lm) / (2.0 * eps) - grad[k]).abs() <= 1e-6);
    }
}

#[test]
fn linear_predictor_gradient_and_ar_learning() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ys: Vec<Vector> = (0..20).map(|_| Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0))).collect();
    let us: Vec<Vector> = (0..20).map(|_| Vector::from_fn(1, |_, _| rng.random_range(-1.0..1.0))).collect();
    let mut p = LinearPredictor::new(2, 1, 3, 2, StepSchedule::Constant(0.0), None).unwrap();
    let m1: Vec<Matrix> = (0..3).map(|_| Matrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0))).collect();
    let m2: Vec<Matrix> = (0..2).map(|_| Matrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0))).collect();
    p.set_parameters(&m1, &m2).unwrap();
    let target = Vector::from_vec(vec![0.3, -0.7]);
    let (_, grad) = p.loss_and_gradient(&ys, &us, 10, &target);
    let base = p.ogd().point.clone();
    for (k, g) in grad.iter().enumerate() {
        let eps = 1e-6;
        let eval = |delta: f64| {
            let mut flat = base.clone();
            flat[k] += delta;
            let a: Vec<Matrix> = (0..3).map(|i| Matrix::from_row_slice(2, 2, &flat[4 * i..4 * i + 4])).collect();
            let b: Vec<Matrix> = (0..2).map(|j| Matrix::from_row_slice(2, 1, &flat[12 + 2 * j..14 + 2 * j])).collect();
            let mut q = p.clone();
            q.set_parameters(&a, &b).unwrap();
            q.loss_and_gradient(&ys, &us, 10, &target).0
        };
        assert!(((eval(eps) - eval(-eps)) / (2.0 * eps) - g).abs() <= 1e-6);
    }

    // y_t = 0.7 y_{t-1} + u_{t-1} with Rademacher inputs.
    let horizon = 5000;
    let (ys, us) = scalar_lds_trace(0.7, horizon, 5);
    let mut p = LinearPredictor::new(1, 1, 1, 1, StepSchedule::Constant(0.01), None).unwrap();
    for t in 0..horizon {
        p.learn_step(&ys, &us, t, &ys[t]).unwrap();
    }
    let (m1, m2) = p.parameters();
    assert!((m1[0][(0, 0)] - 0.7).abs() <= 0.05);
    assert!((m2[0][(0, 0)] - 1.0).abs() <= 0.05);
}

#[test]
fn kalman_covariance_stays_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let a = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = Matrix::from_fn(3, 1, |_, _| rng.random_range(-1.0..1.0));
        let c = Matrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
        let lx = Matrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let ly = Matrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0));
        let noise = KalmanNoise::new(&lx * lx.transpose(), &ly * ly.transpose()).unwrap();
        let mut st = KalmanState::initial(&noise.sigma_x).unwrap();
        for _ in 0..200 {
            let u = Vector::from_fn(1, |_, _| rng.random_range(-1.0..1.0));
            let y = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            st = kalman_step(&st, &a, &b, &c, &noise, &u, &y).unwrap().state;
            let min = jacobi_eigenvalues(&st.sigma).last().copied().unwrap();
            assert!(min >= -1e-9 * st.sigma.amax().max(1.0));
            assert!(covariance_ok(&st));
        }
    }
}

#[test]
fn steady_state_is_dual_to_dare() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let a = Matrix::from_fn(2, 2, |_, _| rng.random_range(-0.8..0.8));
        let c = Matrix::from_fn(1, 2, |_, _| rng.random_range(-1.0..1.0));
        let sx = Matrix::identity(2, 2) * 0.5;
        let sy = Matrix::identity(1, 1) * 2.0;
        let kal = kalman_steady_state(&a, &c, &KalmanNoise::new(sx.clone(), sy.clone()).unwrap(), 1e-12, 100_000).unwrap();
        let dare = dare_solve(&a.transpose(), &c.transpose(), &sx, &sy, 1e-12, 100_000).unwrap();
        assert!((&kal.sigma - &dare.s).amax() <= 1e-9);
        // L = -K^T for the transposed problem.
        assert!((&kal.gain + dare.k.transpose()).amax() <= 1e-9);
    }
}

#[test]
fn kalman_beats_offline_linear_predictor() {
    let steps = 100_000;
    let (a, b, c) = (0.9, 1.0, 1.0);
    let (qx, qy): (f64, f64) = (0.5, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let wx = Normal::new(0.0, qx.sqrt()).unwrap();
    let wy = Normal::new(0.0, qy.sqrt()).unwrap();
    let noise = KalmanNoise::new(Matrix::from_element(1, 1, qx), Matrix::from_element(1, 1, qy)).unwrap();
    let (am, bm, cm) = (Matrix::from_element(1, 1, a), Matrix::from_element(1, 1, b), Matrix::from_element(1, 1, c));
    let mut st = KalmanState::initial(&noise.sigma_x).unwrap();
    let mut x = 0.0;
    let (mut ys, mut us) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    let mut sq = 0.0;
    for _ in 0..steps {
        let y = c * x + wy.sample(&mut rng);
        let u = rng.random_range(-1.0..1.0);
        let yv = Vector::from_element(1, y);
        sq += (y - st.predicted_observation(&cm)[0]).powi(2);
        let uv = Vector::from_element(1, u);
        st = kalman_step(&st, &am, &bm, &cm, &noise, &uv, &yv).unwrap().state;
        x = a * x + b * u + wx.sample(&mut rng);
        ys.push(yv);
        us.push(uv);
    }
    let kalman_mse = sq / steps as f64;
    let (_, _, offline_mse) = fit_linear_offline(&ys, &us, 10, 10).unwrap();
    assert!(kalman_mse <= offline_mse * 1.01, "{kalman_mse} vs {offline_mse}");
}
