use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{require_psd, require_shape, Matrix, Vector};

/// A convex per-step cost `c_t(v, u)` with its gradient in both arguments.
/// `v` is the state or the observation, depending on the controller.
pub trait ConvexCost: Send + Sync {
    fn eval(&self, t: usize, v: &Vector, u: &Vector) -> f64;
    fn grad(&self, t: usize, v: &Vector, u: &Vector) -> (Vector, Vector);
}

/// `(v - target)^T Q (v - target) + u^T R u`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticCost {
    pub q: Matrix,
    pub r: Matrix,
    pub target: Vector,
}

impl QuadraticCost {
    pub fn new(q: Matrix, r: Matrix, target: Option<Vector>) -> Result<Self> {
        require_psd(&q, "Q")?;
        require_psd(&r, "R")?;
        let target = target.unwrap_or_else(|| Vector::zeros(q.nrows()));
        if target.len() != q.nrows() {
            return Err(Error::dim("cost target", q.nrows(), target.len()));
        }
        Ok(Self { q, r, target })
    }

    /// `Q = I`, `R = I`, target at the origin.
    pub fn identity(dv: usize, du: usize) -> Self {
        Self {
            q: Matrix::identity(dv, dv),
            r: Matrix::identity(du, du),
            target: Vector::zeros(dv),
        }
    }
}

impl ConvexCost for QuadraticCost {
    fn eval(&self, _t: usize, v: &Vector, u: &Vector) -> f64 {
        let e = v - &self.target;
        e.dot(&(&self.q * &e)) + u.dot(&(&self.r * u))
    }

    fn grad(&self, _t: usize, v: &Vector, u: &Vector) -> (Vector, Vector) {
        let e = v - &self.target;
        ((&self.q * e) * 2.0, (&self.r * u) * 2.0)
    }
}

#[derive(Clone)]
pub enum CostFunction {
    Quadratic(QuadraticCost),
    Custom(Arc<dyn ConvexCost>),
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostFunction::Quadratic(q) => f.debug_tuple("Quadratic").field(q).finish(),
            CostFunction::Custom(_) => f.write_str("Custom(<evaluator>)"),
        }
    }
}

impl CostFunction {
    pub fn quadratic(q: Matrix, r: Matrix) -> Result<Self> {
        Ok(CostFunction::Quadratic(QuadraticCost::new(q, r, None)?))
    }

    pub fn eval(&self, t: usize, v: &Vector, u: &Vector) -> f64 {
        match self {
            CostFunction::Quadratic(q) => q.eval(t, v, u),
            CostFunction::Custom(c) => c.eval(t, v, u),
        }
    }

    pub fn grad(&self, t: usize, v: &Vector, u: &Vector) -> (Vector, Vector) {
        match self {
            CostFunction::Quadratic(q) => q.grad(t, v, u),
            CostFunction::Custom(c) => c.grad(t, v, u),
        }
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticCost> {
        match self {
            CostFunction::Quadratic(q) => Some(q),
            CostFunction::Custom(_) => None,
        }
    }

    /// Checks a quadratic cost against the signal and control dimensions.
    pub fn check_dims(&self, dv: usize, du: usize) -> Result<()> {
        if let CostFunction::Quadratic(q) = self {
            require_shape(&q.q, dv, dv, "cost Q")?;
            require_shape(&q.r, du, du, "cost R")?;
        }
        Ok(())
    }
}
