//! Default step size `eta_t = D / (G sqrt(t))` for the online controllers,
//! with the diameter `D` taken from the projection set and the gradient
//! bound `G` estimated from the perturbation bound, the decay of the
//! (stabilized) system and the cost curvature.

use crate::error::Result;
use crate::lds::{CostFunction, LinearSystem, PerturbationKind, PerturbationSource};
use crate::linalg::{spectral_norm, Matrix};
use crate::online::{Projection, StepSchedule};
use crate::policies::Stabilizer;

/// Terms of the decay sums; also the cutoff for marginally stable systems.
const DECAY_TERMS: usize = 1000;
/// Parameter radius assumed when the set is unbounded.
pub const NOMINAL_RADIUS: f64 = 1.0;

/// Bound on `||w_t||` implied by the perturbation settings. For i.i.d.
/// zero-mean kinds (Gaussian, uniform ball) this is the root-mean-square
/// norm instead, and `true` is returned alongside.
pub fn perturbation_bound(src: &PerturbationSource, dx: usize) -> (f64, bool) {
    let (scale, dim) = match &src.embedding {
        Some(e) => (spectral_norm(e), e.ncols()),
        None => (1.0, dx),
    };
    let d = dim as f64;
    let (raw, iid) = match &src.kind {
        PerturbationKind::Zero => (0.0, false),
        PerturbationKind::Gaussian { sigma } => (sigma * d.sqrt(), true),
        PerturbationKind::UniformBall { radius } => (radius * (d / (d + 2.0)).sqrt(), true),
        PerturbationKind::Sinusoidal { amplitude, .. } => (amplitude.abs() * d.sqrt(), false),
        PerturbationKind::Recorded(seq) => (seq.iter().map(|w| w.norm()).fold(0.0, f64::max), false),
        PerturbationKind::Constant(v) => (v.norm(), false),
    };
    let raw = if src.clip_to_unit_ball { raw.min(1.0) } else { raw };
    (scale * raw, iid)
}

/// `(sum_i n_i, sqrt(sum_i n_i^2))` for `n_i = ||left * P_i * right||`, where
/// `P_i` is the product of the first `i` transitions along `t = 0, 1, ...`.
/// The first bounds a filter's response to bounded input; the second its
/// root-mean-square response to white input.
fn decay_sums(
    left: &Matrix,
    right: &Matrix,
    mut transition: impl FnMut(usize) -> Result<Matrix>,
) -> Result<(f64, f64)> {
    let mut prod = right.clone();
    let (mut l1, mut l2) = (0.0, 0.0);
    for i in 0..DECAY_TERMS {
        let term = spectral_norm(&(left * &prod));
        l1 += term;
        l2 += term * term;
        if term <= 1e-12 * l1.max(f64::MIN_POSITIVE) && i > 0 {
            break;
        }
        prod = transition(i)? * prod;
    }
    Ok((l1, l2.sqrt()))
}

fn radius(projection: &Projection) -> f64 {
    match projection {
        Projection::None => NOMINAL_RADIUS,
        Projection::Ball(r) => *r,
        Projection::BlockBudget { budget, .. } | Projection::Groups { budget, .. } => *budget,
    }
}

/// `(||Q||, ||R||, ||target||)`; a custom cost counts as unit curvature.
fn curvature(cost: &CostFunction) -> (f64, f64, f64) {
    match cost.as_quadratic() {
        Some(q) => (spectral_norm(&q.q), spectral_norm(&q.r), q.target.norm()),
        None => (1.0, 1.0, 0.0),
    }
}

/// `G` for a loss `c(x0 + Phi m, u0 + Psi m)` over `||m|| <= kappa`.
fn gradient_bound(cost: &CostFunction, phi: f64, psi: f64, x0: f64, u0: f64, kappa: f64) -> f64 {
    let (q, r, target) = curvature(cost);
    let gx = 2.0 * q * (x0 + phi * kappa + target);
    let gu = 2.0 * r * (u0 + psi * kappa);
    phi * gx + psi * gu
}

fn schedule(projection: &Projection, g: f64) -> StepSchedule {
    let d = 2.0 * radius(projection);
    if g > 0.0 && g.is_finite() {
        StepSchedule::InvSqrt(d / g)
    } else {
        StepSchedule::InvSqrt(d)
    }
}

/// Step rule for GPC: features are the last `h` disturbances and the
/// counterfactual state responds through `A + B K`.
pub fn gpc_step(
    system: &LinearSystem,
    stabilizer: &Stabilizer,
    cost: &CostFunction,
    perturbation: &PerturbationSource,
    window: usize,
    projection: &Projection,
) -> Result<StepSchedule> {
    let dx = system.dx();
    let (w, iid) = perturbation_bound(perturbation, dx);
    let m0 = system.matrices(0)?;
    let b = spectral_norm(&m0.b);
    let k = spectral_norm(&stabilizer.gain(0));
    let eye = Matrix::identity(dx, dx);
    let (gamma, gamma_rms) = decay_sums(&eye, &eye, |t| {
        let m = system.matrices(t)?;
        Ok(&m.a + &m.b * stabilizer.gain(t))
    })?;
    let feature = (window as f64).sqrt() * w;
    let x_nat = if iid { gamma_rms } else { gamma } * w;
    let phi = gamma * b * feature;
    let psi = feature * (1.0 + k * gamma * b);
    Ok(schedule(projection, gradient_bound(cost, phi, psi, x_nat, k * x_nat, radius(projection))))
}

/// Step rule for GRC on an observed stable system: features are the last
/// `h + 1` nature's-y signals and the output responds through the Markov
/// parameters `C A^i B`.
pub fn grc_step(
    system: &LinearSystem,
    cost: &CostFunction,
    perturbation: &PerturbationSource,
    window: usize,
    projection: &Projection,
) -> Result<StepSchedule> {
    let dx = system.dx();
    let (w, iid) = perturbation_bound(perturbation, dx);
    let c = system.c_matrix(0)?;
    let b = system.matrices(0)?.b.clone();
    let transition = |t: usize| Ok(system.matrices(t)?.a.clone());
    let (out, out_rms) = decay_sums(&c, &Matrix::identity(dx, dx), transition)?;
    let y_nat = w * if iid { out_rms } else { out };
    let markov = decay_sums(&c, &b, transition)?.0;
    let feature = ((window + 1) as f64).sqrt() * y_nat;
    let phi = markov * feature;
    Ok(schedule(projection, gradient_bound(cost, phi, feature, y_nat, 0.0, radius(projection))))
}
