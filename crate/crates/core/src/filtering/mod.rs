//! Prediction in linear dynamical systems: the Kalman filter, linear
//! predictors learned online, and spectral filtering.

mod kalman;
mod linear;
mod spectral;

pub use kalman::{covariance_ok, kalman_step, kalman_steady_state, KalmanNoise, KalmanState, KalmanStep, SteadyKalman};
pub use linear::{fit_linear_offline, LinearPredictor};
pub use spectral::{
    build_z, cache_path, hankel_w, load_or_build, spectral_basis, SpectralBasis, SpectralPredictor, DENSE_LIMIT,
};
