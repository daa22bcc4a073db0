use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Online tracker for "nature's y": the observation the system would have
/// produced had every control been zero.
///
/// Keeps `z_t = sum_i [prod A] B u_{t-i}`, the part of the state caused by
/// past controls, so that `ynat_t = y_t - C_t z_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct NaturesY {
    z: Vector,
}

impl NaturesY {
    pub fn new(dx: usize) -> Self {
        Self { z: Vector::zeros(dx) }
    }

    pub fn control_response(&self) -> &Vector {
        &self.z
    }

    /// `ynat_t = y_t - C_t z_t`.
    pub fn observe(&self, c_t: &Matrix, y_t: &Vector) -> Result<Vector> {
        if c_t.ncols() != self.z.len() || c_t.nrows() != y_t.len() {
            return Err(Error::dim(
                "nature's y: C_t",
                format!("{}x{}", y_t.len(), self.z.len()),
                format!("{}x{}", c_t.nrows(), c_t.ncols()),
            ));
        }
        Ok(y_t - c_t * &self.z)
    }

    /// `z_{t+1} = A_t z_t + B_t u_t`.
    pub fn advance(&mut self, a_t: &Matrix, b_t: &Matrix, u_t: &Vector) -> Result<()> {
        if a_t.shape() != (self.z.len(), self.z.len()) || b_t.nrows() != self.z.len() || b_t.ncols() != u_t.len() {
            return Err(Error::dim("nature's y: A_t/B_t", self.z.len(), a_t.nrows()));
        }
        self.z = a_t * &self.z + b_t * u_t;
        Ok(())
    }
}

/// One full step: returns `ynat_t` and advances the tracker with `u_t`.
pub fn natures_y_step(
    tracker: &mut NaturesY,
    a_t: &Matrix,
    b_t: &Matrix,
    c_t: &Matrix,
    u_t: &Vector,
    y_t: &Vector,
) -> Result<Vector> {
    let ynat = tracker.observe(c_t, y_t)?;
    tracker.advance(a_t, b_t, u_t)?;
    Ok(ynat)
}
