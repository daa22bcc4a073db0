//! Finite-horizon LQR and the discrete algebraic Riccati equation. Gains are
//! stored with their sign so that the control is `u = K x`.

use crate::error::{Error, Result};
use crate::lds::spectral_radius;
use crate::linalg::{parse_matrix, pinv, require_psd, require_shape, symmetrize, write_matrix, Matrix};

/// Matrices of one stage of a (possibly time-varying) LQR problem.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrStage {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub r: Matrix,
}

/// Index `t` holds stage `t` of `0..T`; `s[T-1] = Q`, `k[T-1] = 0` and
/// `c[T-1] = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrSolution {
    pub s: Vec<Matrix>,
    pub k: Vec<Matrix>,
    pub c: Vec<f64>,
    pub sigma2: f64,
}

impl LqrSolution {
    pub fn horizon(&self) -> usize {
        self.s.len()
    }

    pub fn gain(&self, t: usize) -> &Matrix {
        &self.k[t.min(self.k.len() - 1)]
    }
}

fn check_stage(st: &LqrStage) -> Result<()> {
    let (dx, du) = (st.a.nrows(), st.b.ncols());
    require_shape(&st.a, dx, dx, "LQR A")?;
    require_shape(&st.b, dx, du, "LQR B")?;
    require_shape(&st.q, dx, dx, "LQR Q")?;
    require_shape(&st.r, du, du, "LQR R")?;
    require_psd(&st.q, "Q")?;
    require_psd(&st.r, "R")
}

/// `K = -(R + B^T S B)^+ B^T S A`.
fn riccati_gain(a: &Matrix, b: &Matrix, r: &Matrix, s: &Matrix) -> Matrix {
    let bts = b.transpose() * s;
    -pinv(&(r + &bts * b)) * bts * a
}

/// Backward pass with per-stage matrices from `stage(t)`.
pub fn lqr_finite_varying<F>(stage: F, horizon: usize, sigma2: f64) -> Result<LqrSolution>
where
    F: Fn(usize) -> LqrStage,
{
    if horizon == 0 {
        return Err(Error::config("LQR horizon must be positive"));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::config(format!("noise variance must be nonnegative, got {sigma2}")));
    }
    let last = stage(horizon - 1);
    check_stage(&last)?;
    let (dx, du) = (last.a.nrows(), last.b.ncols());
    let mut s = vec![Matrix::zeros(dx, dx); horizon];
    let mut k = vec![Matrix::zeros(du, dx); horizon];
    let mut c = vec![0.0; horizon];
    s[horizon - 1] = last.q;
    for t in (1..horizon).rev() {
        let st = stage(t - 1);
        check_stage(&st)?;
        if st.a.nrows() != dx || st.b.ncols() != du {
            return Err(Error::dim("LQR stage", format!("{dx}x{du}"), format!("{}x{}", st.a.nrows(), st.b.ncols())));
        }
        let gain = riccati_gain(&st.a, &st.b, &st.r, &s[t]);
        let closed = &st.a + &st.b * &gain;
        let next = &st.q + gain.transpose() * &st.r * &gain + closed.transpose() * &s[t] * &closed;
        c[t - 1] = c[t] + sigma2 * s[t].trace();
        s[t - 1] = symmetrize(&next);
        k[t - 1] = gain;
    }
    Ok(LqrSolution { s, k, c, sigma2 })
}

pub fn lqr_finite(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, horizon: usize, sigma2: f64) -> Result<LqrSolution> {
    let st = LqrStage {
        a: a.clone(),
        b: b.clone(),
        q: q.clone(),
        r: r.clone(),
    };
    lqr_finite_varying(|_| st.clone(), horizon, sigma2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DareSolution {
    pub s: Matrix,
    pub k: Matrix,
    pub iterations: usize,
    /// Frobenius norm of the last change, an upper bound on its spectral norm.
    pub residual: f64,
}

pub const DARE_TOL: f64 = 1e-10;
pub const DARE_MAX_ITER: usize = 100_000;

/// One value-iteration step `Q + A^T S A - A^T S B (R + B^T S B)^+ B^T S A`.
pub fn riccati_map(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, s: &Matrix) -> Matrix {
    let gain = riccati_gain(a, b, r, s);
    let ats = a.transpose() * s;
    symmetrize(&(q + &ats * a + &ats * b * gain))
}

/// Value iteration from `S_0 = Q`.
pub fn dare_solve(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, tol: f64, max_iter: usize) -> Result<DareSolution> {
    check_stage(&LqrStage {
        a: a.clone(),
        b: b.clone(),
        q: q.clone(),
        r: r.clone(),
    })?;
    let mut s = q.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = riccati_map(a, b, q, r, &s);
        residual = (&next - &s).norm();
        if !residual.is_finite() {
            return Err(Error::numerical("Riccati iteration diverged"));
        }
        s = next;
        if residual <= tol {
            let k = riccati_gain(a, b, r, &s);
            let rho = spectral_radius(&(a + b * &k))?;
            if rho >= 1.0 {
                return Err(Error::numerical(format!(
                    "Riccati iteration converged but A + BK has spectral radius {rho:.6}; (A, B) is not stabilizable"
                )));
            }
            return Ok(DareSolution {
                s,
                k,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

impl DareSolution {
    /// `S` and `K` as labelled blocks in the matrix text format.
    pub fn to_text(&self) -> String {
        format!("S\n{}K\n{}", write_matrix(&self.s), write_matrix(&self.k))
    }

    /// Reads the gain back from [`DareSolution::to_text`] output or from a
    /// bare matrix.
    pub fn parse_gain(text: &str) -> Result<Matrix> {
        match text.find("K\n") {
            Some(pos) => parse_matrix(&text[pos + 2..]),
            None => parse_matrix(text),
        }
    }
}
