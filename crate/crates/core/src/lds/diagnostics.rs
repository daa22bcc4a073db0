use crate::error::{Error, Result};
use crate::linalg::{hstack, numerical_rank, pinv, spectral_norm, vstack, Matrix};

/// Maximum eigenvalue modulus, complex spectra included (real Schur form).
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::dim(
            "spectral_radius",
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let eig = m
        .clone()
        .try_schur(f64::EPSILON, 100_000)
        .ok_or_else(|| Error::numerical("Schur decomposition did not converge"))?
        .complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Power-iteration style estimate `||M^k||^(1/k)` with `k = iters`, used to
/// cross-check the eigen solver. Converges from above as `k` grows.
pub fn spectral_radius_power(m: &Matrix, iters: usize) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::dim("spectral_radius_power", "square", format!("{}x{}", m.nrows(), m.ncols())));
    }
    let mut p = Matrix::identity(m.nrows(), m.ncols());
    let mut log_scale = 0.0;
    for _ in 0..iters.max(1) {
        p = &p * m;
        let n = spectral_norm(&p);
        if n == 0.0 {
            return Ok(0.0);
        }
        p /= n;
        log_scale += n.ln();
    }
    Ok((log_scale / iters.max(1) as f64).exp())
}

/// Returns `P = sum_t (A^t)^T A^t` when the series converges (spectral radius
/// below `1 - tol`), truncated once a term's norm drops below `tol`.
pub fn lyapunov_certificate(a: &Matrix, tol: f64, max_terms: usize) -> Result<Option<Matrix>> {
    let rho = spectral_radius(a)?;
    if rho >= 1.0 - tol {
        return Ok(None);
    }
    let n = a.nrows();
    let mut p = Matrix::identity(n, n);
    let mut power = Matrix::identity(n, n);
    for _ in 0..max_terms {
        power = &power * a;
        let term = power.transpose() * &power;
        let tn = spectral_norm(&term);
        if !tn.is_finite() {
            return Ok(None);
        }
        p += &term;
        if tn < tol {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug)]
pub struct Controllability {
    /// `[B, AB, ..., A^{r-1} B]`.
    pub matrix: Matrix,
    pub rank: usize,
    /// Spectral norm of the pseudo-inverse, the strong-controllability constant.
    pub pinv_norm: f64,
}

pub fn controllability(a: &Matrix, b: &Matrix, r: usize) -> Result<Controllability> {
    if !a.is_square() || b.nrows() != a.nrows() {
        return Err(Error::dim(
            "controllability",
            format!("A square, B with {} rows", a.nrows()),
            format!("A {}x{}, B {}x{}", a.nrows(), a.ncols(), b.nrows(), b.ncols()),
        ));
    }
    if r == 0 {
        return Err(Error::config("controllability horizon must be at least 1"));
    }
    let mut blocks = Vec::with_capacity(r);
    let mut cur = b.clone();
    for _ in 0..r {
        let next = a * &cur;
        blocks.push(cur);
        cur = next;
    }
    let matrix = hstack(&blocks);
    let rank = numerical_rank(&matrix);
    let pinv_norm = spectral_norm(&pinv(&matrix));
    Ok(Controllability {
        matrix,
        rank,
        pinv_norm,
    })
}

/// Rank of `[C; CA; ...; CA^{d_x - 1}]`.
pub fn observability_rank(a: &Matrix, c: &Matrix) -> Result<usize> {
    if !a.is_square() || c.ncols() != a.nrows() {
        return Err(Error::dim(
            "observability_rank",
            format!("A square, C with {} columns", a.nrows()),
            format!("A {}x{}, C {}x{}", a.nrows(), a.ncols(), c.nrows(), c.ncols()),
        ));
    }
    let mut blocks = Vec::with_capacity(a.nrows());
    let mut cur = c.clone();
    for _ in 0..a.nrows() {
        let next = &cur * a;
        blocks.push(cur);
        cur = next;
    }
    Ok(numerical_rank(&vstack(&blocks)))
}

/// Constants `(kappa, delta)` with `||L M^i R|| <= kappa (1 - delta)^i` for
/// every `i <= horizon`, where `1 - delta` sits a quarter of the way from the
/// spectral radius of `M` to one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayProfile {
    pub kappa: f64,
    pub delta: f64,
}

impl DecayProfile {
    pub fn rate(&self) -> f64 {
        1.0 - self.delta
    }

    /// `sum_{i > h} kappa (1 - delta)^i`.
    pub fn tail(&self, h: usize) -> f64 {
        self.kappa * self.rate().powi(h as i32 + 1) / self.delta
    }
}

pub fn decay_profile(
    left: Option<&Matrix>,
    m: &Matrix,
    right: Option<&Matrix>,
    horizon: usize,
) -> Result<DecayProfile> {
    let rho = spectral_radius(m)?;
    if rho >= 1.0 {
        return Err(Error::numerical(format!(
            "matrix is not stable (spectral radius {rho:.6})"
        )));
    }
    let rate = rho + 0.25 * (1.0 - rho);
    let mut power = Matrix::identity(m.nrows(), m.ncols());
    let mut kappa: f64 = 0.0;
    let mut scale = 1.0;
    for _ in 0..=horizon {
        let mut term = power.clone();
        if let Some(l) = left {
            term = l * term;
        }
        if let Some(r) = right {
            term *= r;
        }
        kappa = kappa.max(spectral_norm(&term) / scale);
        power = &power * m;
        scale *= rate;
    }
    Ok(DecayProfile {
        kappa,
        delta: 1.0 - rate,
    })
}
