use super::{DacPolicy, GlcPolicy, LdcPolicy, Policy};
use crate::error::{Error, Result};
use crate::lds::{simulate, spectral_radius, CostFunction, LinearSystem, PerturbationSource, SimulationConfig};
use crate::linalg::{hstack, Matrix, Vector};

/// A GLC written as a static linear policy on the stacked state
/// `z_t = [x_t; x_{t-1}; ...; x_{t-h}]`.
#[derive(Clone, Debug)]
pub struct LiftedGlc {
    pub system: LinearSystem,
    /// Maps an original perturbation into the lifted space, `[I; 0; ...]`.
    pub embedding: Matrix,
    /// `[M_0 M_1 ... M_h]`.
    pub gain: Matrix,
}

impl LiftedGlc {
    pub fn lift_perturbations(&self, ws: &[Vector]) -> Vec<Vector> {
        ws.iter().map(|w| &self.embedding * w).collect()
    }

    pub fn lift_state(&self, x0: &Vector) -> Vector {
        &self.embedding * x0
    }
}

pub fn lift_glc(system: &LinearSystem, glc: &GlcPolicy) -> Result<LiftedGlc> {
    if !system.is_time_invariant() {
        return Err(Error::config("lift_glc needs a time-invariant system"));
    }
    let m = system.matrices(0)?;
    let (dx, du) = (system.dx(), system.du());
    if glc.m[0].shape() != (du, dx) {
        return Err(Error::dim("GLC coefficients", format!("{du}x{dx}"), format!("{}x{}", glc.m[0].nrows(), glc.m[0].ncols())));
    }
    let blocks = glc.m.len();
    let n = dx * blocks;
    let mut a = Matrix::zeros(n, n);
    a.view_mut((0, 0), (dx, dx)).copy_from(&m.a);
    for k in 1..blocks {
        a.view_mut((k * dx, (k - 1) * dx), (dx, dx)).fill_with_identity();
    }
    let mut b = Matrix::zeros(n, du);
    b.view_mut((0, 0), (dx, du)).copy_from(&m.b);
    let mut embedding = Matrix::zeros(n, dx);
    embedding.view_mut((0, 0), (dx, dx)).fill_with_identity();
    Ok(LiftedGlc {
        system: LinearSystem::time_invariant(a, b, None)?,
        embedding,
        gain: hstack(&glc.m),
    })
}

/// The DAC that reproduces `u = K x` up to a tail of order `(A+BK)^h`:
/// `M_{i+1} = K (A + BK)^i` against `w_{t-1-i}` for `i = 0..=h`.
pub fn dac_from_linear(a: &Matrix, b: &Matrix, k: &Matrix, h: usize) -> Result<DacPolicy> {
    let closed = a + b * k;
    let rho = spectral_radius(&closed)?;
    if rho >= 1.0 {
        return Err(Error::config(format!(
            "A + BK is not stable (spectral radius {rho:.6}); refusing to build a DAC approximation"
        )));
    }
    let mut m = Vec::with_capacity(h + 1);
    let mut power = k.clone();
    for _ in 0..=h {
        m.push(power.clone());
        power = &power * &closed;
    }
    DacPolicy::new(None, m)
}

/// `M_0 = D`, `M_i = C A^{i-1} B` for `i = 1..=h`.
pub fn glc_from_ldc(ldc: &LdcPolicy, h: usize) -> Result<GlcPolicy> {
    let rho = spectral_radius(&ldc.a)?;
    if rho >= 1.0 {
        return Err(Error::config(format!(
            "LDC internal dynamics are not stable (spectral radius {rho:.6}); refusing to convert"
        )));
    }
    let mut m = Vec::with_capacity(h + 1);
    m.push(ldc.d.clone().unwrap_or_else(|| Matrix::zeros(ldc.c.nrows(), ldc.b.ncols())));
    let mut left = ldc.c.clone();
    for _ in 1..=h {
        m.push(&left * &ldc.b);
        left = &left * &ldc.a;
    }
    GlcPolicy::new(m)
}

/// `(1/T) sum_t |c_t(a) - c_t(b)|` with both policies rolled out from a
/// fresh start on the same recorded perturbations.
pub fn approximation_gap(
    a: &Policy,
    b: &Policy,
    system: &LinearSystem,
    perturbations: &[Vector],
    cost: &CostFunction,
    horizon: usize,
) -> Result<f64> {
    if perturbations.len() < horizon {
        return Err(Error::config(format!(
            "need {horizon} recorded perturbations, got {}",
            perturbations.len()
        )));
    }
    if horizon == 0 {
        return Ok(0.0);
    }
    let src = PerturbationSource::recorded(perturbations[..horizon].to_vec());
    let cfg = SimulationConfig::new(horizon, 0);
    let roll = |p: &Policy| {
        let mut p = p.clone();
        p.reset();
        simulate(system, &mut p, &src, cost, &cfg)
    };
    let (ta, tb) = (roll(a)?, roll(b)?);
    let total: f64 = ta.costs.iter().zip(&tb.costs).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / horizon as f64)
}
