use nsc_core::lds::{simulate, CostFunction, LinearSystem, PerturbationKind, PerturbationSource, SimulationConfig};
use nsc_core::linalg::{Matrix, Vector};
use nsc_core::online::{Gpc, OnlineConfig, Projection, StepSchedule};
use nsc_core::policies::Stabilizer;
use nsc_core::sysid::{
    control_with_model, estimate_moments, excite_and_record, identify_then_control, recover_ab, IdentifiedSystem,
    MomentEstimates, PipelineConfig, SimulatedPlant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn plant(a: Matrix, b: Matrix, noise: PerturbationSource, seed: u64) -> SimulatedPlant {
    SimulatedPlant::new(LinearSystem::time_invariant(a, b, None).unwrap(), noise, seed, None).unwrap()
}

fn stable_pair(rng: &mut ChaCha8Rng, dx: usize, du: usize) -> (Matrix, Matrix) {
    let raw = Matrix::from_fn(dx, dx, |_, _| rng.random_range(-1.0..1.0));
    let rho = nsc_core::lds::spectral_radius(&raw).unwrap();
    (raw * (0.7 / rho), Matrix::from_fn(dx, du, |_, _| rng.random_range(-1.0..1.0)))
}

#[test]
fn excitation_is_centered() {
    let mut p = plant(Matrix::identity(2, 2) * 0.5, Matrix::identity(2, 3), PerturbationSource::zero(), 0);
    let t0 = 10_000;
    let rec = excite_and_record(&mut p, 0, t0, 17).unwrap();
    for i in 0..3 {
        let mean = rec.controls[..t0].iter().map(|u| u[i]).sum::<f64>() / t0 as f64;
        assert!(mean.abs() <= 0.05);
    }
}

#[test]
fn scalar_moments_at_fixed_seed() {
    let mut p = plant(Matrix::from_element(1, 1, 0.5), Matrix::from_element(1, 1, 1.0), PerturbationSource::zero(), 0);
    let t0 = 50_000;
    let rec = excite_and_record(&mut p, 2, t0, 4).unwrap();
    let est = estimate_moments(&rec, 2, t0).unwrap();
    for j in 0..=2 {
        assert!((est.g[j][(0, 0)] - 0.5f64.powi(j as i32)).abs() <= 0.05, "j={j}");
    }
}

#[test]
fn exact_moments_recover_the_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let (a, b) = stable_pair(&mut rng, 3, 1);
        let k = 4;
        let mut g = vec![b.clone()];
        for j in 1..=k {
            g.push(&a * &g[j - 1]);
        }
        let id = recover_ab(&MomentEstimates { k, t0: 1, g }).unwrap();
        assert!(id.warning.is_none());
        assert!((&id.a - &a).amax() <= 1e-10);
        assert_eq!(id.b, b);
        assert!(id.residual <= 1e-10);
    }
}

#[test]
fn moment_error_halves_when_samples_quadruple() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (a, b) = stable_pair(&mut rng, 2, 2);
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
    assert!((1.0..=3.0).contains(&ratio), "{ratio}");
}

fn online() -> OnlineConfig {
    OnlineConfig::new(5, StepSchedule::InvSqrt(0.05))
}

#[test]
fn exact_model_matches_known_system_gpc() {
    let a = Matrix::from_row_slice(2, 2, &[0.8, 0.2, 0.0, 0.6]);
    let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let x0 = Vector::from_vec(vec![1.0, -2.0]);
    let sys = LinearSystem::time_invariant(a.clone(), b.clone(), None).unwrap();
    let cost = CostFunction::quadratic(Matrix::identity(2, 2), Matrix::identity(1, 1)).unwrap();
    let cfg = PipelineConfig::new(200, 1, online(), 0);
    let exact = IdentifiedSystem {
        a: a.clone(),
        b: b.clone(),
        residual: 0.0,
        sigma_min: 1.0,
        k: 1,
        t0: 1,
        warning: None,
    };
    let mut p = SimulatedPlant::new(sys.clone(), PerturbationSource::zero(), 0, Some(x0.clone())).unwrap();
    let phase = control_with_model(&mut p, &exact, &cost, &cfg, 0).unwrap();

    let mut gpc = Gpc::new(sys.clone(), Stabilizer::Fixed(Matrix::zeros(1, 2)), cost.clone(), &online()).unwrap();
    let traj = simulate(&sys, &mut gpc, &PerturbationSource::zero(), &cost, &SimulationConfig::new(200, 0).with_x0(x0)).unwrap();
    assert_eq!(phase.states, traj.states);
    assert_eq!(phase.controls, traj.controls);
    assert_eq!(phase.costs, traj.costs);
}

#[test]
fn pipeline_is_deterministic_and_splits_phases() {
    let a = Matrix::from_row_slice(2, 2, &[0.7, 0.1, 0.0, 0.5]);
    let b = Matrix::from_row_slice(2, 1, &[0.5, 1.0]);
    let cost = CostFunction::quadratic(Matrix::identity(2, 2), Matrix::identity(1, 1)).unwrap();
    let noise = PerturbationSource::new(PerturbationKind::Gaussian { sigma: 0.3 });
    let cfg = PipelineConfig::new(1000, 2, online(), 7);
    let run = || {
        let mut p = plant(a.clone(), b.clone(), noise.clone(), 7);
        identify_then_control(&mut p, &cost, &cfg).unwrap()
    };
    let (r1, r2) = (run(), run());
    assert_eq!(r1.costs(), r2.costs());
    assert_eq!(r1.exploration.costs.len(), 100);
    assert_eq!(r1.costs().len(), 1000);
    assert!((r1.exploration_cost() + r1.exploitation_cost() - r1.costs().iter().sum::<f64>()).abs() < 1e-9);
    assert!(r1.identified.warning.is_none());
    assert!(r1.identified.summary(Some((&a, &b))).starts_with("k 2\nT0 33\n"));
}

#[test]
fn rank_deficient_identification_aborts() {
    // B = e_1 and A = I never excite the second coordinate.
    let mut p = plant(Matrix::identity(2, 2), Matrix::from_row_slice(2, 1, &[1.0, 0.0]), PerturbationSource::zero(), 0);
    let cost = CostFunction::quadratic(Matrix::identity(2, 2), Matrix::identity(1, 1)).unwrap();
    let err = identify_then_control(&mut p, &cost, &PipelineConfig::new(1000, 2, online(), 0)).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("rank deficient"));
}

#[test]
fn model_error_raises_exploitation_cost() {
    let a = Matrix::from_row_slice(2, 2, &[0.8, 0.3, 0.0, 0.7]);
    let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let cost = CostFunction::quadratic(Matrix::identity(2, 2), Matrix::identity(1, 1)).unwrap();
    let noise = PerturbationSource::new(PerturbationKind::Sinusoidal {
        amplitude: 1.0,
        omega: 0.3,
        phases: vec![0.0, 1.0],
    });
    let slow = OnlineConfig::new(5, StepSchedule::InvSqrt(1e-3)).with_projection(Projection::Ball(2.0));
    let cfg = PipelineConfig::new(3000, 1, slow, 0);
    let dir_a = Matrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
    let dir_b = Matrix::from_row_slice(2, 1, &[1.0, -1.0]);
    let cost_at = |eps: f64| -> f64 {
        let id = IdentifiedSystem {
            a: &a + &dir_a * eps,
            b: &b + &dir_b * eps,
            residual: 0.0,
            sigma_min: 1.0,
            k: 1,
            t0: 1,
            warning: None,
        };
        let mut p = plant(a.clone(), b.clone(), noise.clone(), 0);
        control_with_model(&mut p, &id, &cost, &cfg, 0).unwrap().costs.iter().sum()
    };
    let base = cost_at(0.0);
    let excess: Vec<f64> = [0.001, 0.01, 0.05].iter().map(|&e| cost_at(e) - base).collect();
    assert!(excess.windows(2).all(|w| w[0] < w[1]), "{excess:?}");
    // Log-log slope of the excess cost stays near 1 on both intervals.
    let low = (excess[1] / excess[0]).ln() / 10f64.ln();
    let high = (excess[2] / excess[1]).ln() / 5f64.ln();
    for slope in [low, high] {
        assert!((0.5..=1.5).contains(&slope), "{slope} {excess:?}");
    }
}
