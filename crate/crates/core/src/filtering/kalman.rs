use crate::error::{Error, Result};
use crate::lds::spectral_radius;
use crate::linalg::{pinv, require_len, require_psd, require_shape, symmetrize, Matrix, Vector, PSD_TOL};

/// One-step-ahead estimate `x_hat` of the state and its error covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanState {
    pub x_hat: Vector,
    pub sigma: Matrix,
}

impl KalmanState {
    pub fn new(x_hat: Vector, sigma: Matrix) -> Result<Self> {
        require_shape(&sigma, x_hat.len(), x_hat.len(), "Kalman covariance")?;
        require_psd(&sigma, "Kalman covariance")?;
        Ok(Self { x_hat, sigma })
    }

    /// `x_hat = 0`, `Sigma = Sigma_x`.
    pub fn initial(sigma_x: &Matrix) -> Result<Self> {
        Self::new(Vector::zeros(sigma_x.nrows()), sigma_x.clone())
    }

    pub fn predicted_observation(&self, c: &Matrix) -> Vector {
        c * &self.x_hat
    }
}

/// Noise model shared by every step.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanNoise {
    pub sigma_x: Matrix,
    pub sigma_y: Matrix,
}

impl KalmanNoise {
    pub fn new(sigma_x: Matrix, sigma_y: Matrix) -> Result<Self> {
        require_psd(&sigma_x, "state noise covariance")?;
        require_psd(&sigma_y, "observation noise covariance")?;
        Ok(Self { sigma_x, sigma_y })
    }
}

/// `L = A Sigma C^T (C Sigma C^T + Sigma_y)^+` and the next covariance.
fn gain_and_covariance(a: &Matrix, c: &Matrix, sigma: &Matrix, noise: &KalmanNoise) -> (Matrix, Matrix) {
    let sct = sigma * c.transpose();
    let innov = pinv(&(c * &sct + &noise.sigma_y));
    let asct = a * &sct;
    let gain = &asct * &innov;
    let next = a * sigma * a.transpose() - &gain * asct.transpose() + &noise.sigma_x;
    (gain, symmetrize(&next))
}

/// Result of one filter step.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanStep {
    pub state: KalmanState,
    pub gain: Matrix,
}

/// Consumes `y_t` and `u_t` and returns the estimate of `x_{t+1}`:
/// `x_hat' = (A - L C) x_hat + B u + L y`.
#[allow(clippy::too_many_arguments)]
pub fn kalman_step(
    state: &KalmanState,
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    noise: &KalmanNoise,
    u: &Vector,
    y: &Vector,
) -> Result<KalmanStep> {
    let dx = state.x_hat.len();
    require_shape(a, dx, dx, "Kalman A")?;
    require_shape(b, dx, u.len(), "Kalman B")?;
    require_shape(c, y.len(), dx, "Kalman C")?;
    require_shape(&noise.sigma_x, dx, dx, "state noise covariance")?;
    require_shape(&noise.sigma_y, y.len(), y.len(), "observation noise covariance")?;
    require_len(u, b.ncols(), "Kalman control")?;
    let (gain, sigma) = gain_and_covariance(a, c, &state.sigma, noise);
    let innovation = y - c * &state.x_hat;
    let x_hat = a * &state.x_hat + b * u + &gain * innovation;
    if !x_hat.iter().chain(sigma.iter()).all(|v| v.is_finite()) {
        return Err(Error::numerical("Kalman step produced non-finite values"));
    }
    Ok(KalmanStep {
        state: KalmanState { x_hat, sigma },
        gain,
    })
}

/// Fixed point of the covariance recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct SteadyKalman {
    pub sigma: Matrix,
    pub gain: Matrix,
    pub iterations: usize,
    pub residual: f64,
}

/// Iterates the covariance recursion from `Sigma_0 = Sigma_x` until the
/// Frobenius change drops below `tol`. Fails like `dare_solve`.
pub fn kalman_steady_state(a: &Matrix, c: &Matrix, noise: &KalmanNoise, tol: f64, max_iter: usize) -> Result<SteadyKalman> {
    let dx = a.nrows();
    require_shape(a, dx, dx, "Kalman A")?;
    require_shape(c, c.nrows(), dx, "Kalman C")?;
    require_shape(&noise.sigma_x, dx, dx, "state noise covariance")?;
    require_shape(&noise.sigma_y, c.nrows(), c.nrows(), "observation noise covariance")?;
    let mut sigma = noise.sigma_x.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let (_, next) = gain_and_covariance(a, c, &sigma, noise);
        residual = (&next - &sigma).norm();
        if !residual.is_finite() {
            return Err(Error::numerical("Kalman covariance iteration diverged"));
        }
        sigma = next;
        if residual <= tol {
            let (gain, _) = gain_and_covariance(a, c, &sigma, noise);
            let rho = spectral_radius(&(a - &gain * c))?;
            if rho >= 1.0 {
                return Err(Error::numerical(format!(
                    "steady-state filter has A - LC with spectral radius {rho:.6}; (A, C) is not detectable"
                )));
            }
            return Ok(SteadyKalman {
                sigma,
                gain,
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

/// Whether the covariance is still PSD within the crate tolerance.
pub fn covariance_ok(state: &KalmanState) -> bool {
    crate::linalg::min_sym_eigenvalue(&state.sigma) >= -PSD_TOL
}
