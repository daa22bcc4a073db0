//! Online gradient descent and the online controllers built on it: GPC for
//! fully observed systems and GRC for partially observed stable systems.

mod gpc;
mod grc;
mod ogd;

pub use gpc::{counterfactual_state, Gpc};
pub use grc::Grc;
pub use ogd::{OgdState, Projection, StepSchedule};

use crate::error::{Error, Result};
use crate::lds::decay_profile;
use crate::linalg::Matrix;

/// Truncation error target for the counterfactual sums.
pub const TRUNCATION_EPS: f64 = 1e-6;
const MAX_TRUNCATION: usize = 4096;

#[derive(Clone, Debug)]
pub struct OnlineConfig {
    /// History window `h`.
    pub window: usize,
    pub schedule: StepSchedule,
    pub projection: Projection,
    /// Depth of the counterfactual sums; derived from the decay rate when
    /// `None`.
    pub truncation: Option<usize>,
}

impl OnlineConfig {
    pub fn new(window: usize, schedule: StepSchedule) -> Self {
        Self {
            window,
            schedule,
            projection: Projection::None,
            truncation: None,
        }
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = projection;
        self
    }

    pub fn with_truncation(mut self, depth: usize) -> Self {
        self.truncation = Some(depth);
        self
    }
}

/// One row of per-step controller telemetry.
#[derive(Clone, Debug, PartialEq)]
pub struct Telemetry {
    pub t: usize,
    /// Cost actually paid, `c_t(x_t, u_t)`.
    pub cost: f64,
    /// Counterfactual loss `l_t(M^t)` at the current parameters.
    pub loss: f64,
    /// Frobenius norm of the stacked parameters before the update.
    pub m_norm: f64,
    /// Norm of the newest recovered disturbance (or nature's y).
    pub w_norm: f64,
    pub grad_norm: f64,
    /// `||M^{t+1} - M^t||`.
    pub step_norm: f64,
    pub eta: f64,
}

/// `2h + ceil(ln(kappa / eps) / -ln(rate))`, from the measured decay of
/// `left * m^i * right`.
fn truncation_depth(window: usize, left: Option<&Matrix>, m: &Matrix, right: Option<&Matrix>) -> Result<usize> {
    let profile = decay_profile(left, m, right, 200).map_err(|e| {
        Error::config(format!("online controller needs stable closed-loop dynamics: {e}"))
    })?;
    let rate = profile.rate();
    if rate <= 0.0 {
        return Ok(2 * window + 1);
    }
    let extra = (profile.kappa.max(1.0) / TRUNCATION_EPS).ln() / -rate.ln();
    Ok((2 * window + extra.ceil() as usize).min(MAX_TRUNCATION))
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
