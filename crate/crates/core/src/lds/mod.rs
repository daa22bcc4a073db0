//! Linear dynamical systems `x_{t+1} = A_t x_t + B_t u_t + w_t`, optionally
//! observed through `y_t = C_t x_t`, together with the simulation engine and
//! the usual stability/controllability diagnostics.

mod cost;
mod diagnostics;
mod linearize;
mod perturbation;
mod simulate;
mod trajectory;

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

pub use cost::{ConvexCost, CostFunction, QuadraticCost};
pub use diagnostics::{
    controllability, decay_profile, lyapunov_certificate, observability_rank, spectral_radius,
    spectral_radius_power, Controllability, DecayProfile,
};
pub use linearize::{linearize, DEFAULT_FD_STEP};
pub use perturbation::{PerturbationKind, PerturbationSource};
pub use simulate::{
    simulate, CostSignal, Controller, FnController, SimulationConfig, StepContext, ZeroController,
};
pub use trajectory::Trajectory;

use crate::error::{Error, Result};
use crate::linalg::{require_len, require_shape, Matrix, Vector};

/// System matrices at one time index. `c = None` means the state is observed.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrices {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Option<Matrix>,
}

pub type MatrixProvider = Arc<dyn Fn(usize) -> SystemMatrices + Send + Sync>;

#[derive(Clone)]
pub enum Dynamics {
    Fixed(SystemMatrices),
    Varying(MatrixProvider),
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dynamics::Fixed(m) => f.debug_tuple("Fixed").field(m).finish(),
            Dynamics::Varying(_) => f.write_str("Varying(<provider>)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearSystem {
    dx: usize,
    du: usize,
    dy: usize,
    dynamics: Dynamics,
}

impl LinearSystem {
    pub fn time_invariant(a: Matrix, b: Matrix, c: Option<Matrix>) -> Result<Self> {
        let dx = a.nrows();
        if dx == 0 || !a.is_square() {
            return Err(Error::dim("A", "square, non-empty", format!("{}x{}", a.nrows(), a.ncols())));
        }
        let du = b.ncols();
        if du == 0 {
            return Err(Error::config("B must have at least one column"));
        }
        let dy = c.as_ref().map_or(dx, |c| c.nrows());
        let m = SystemMatrices { a, b, c };
        check_matrices(&m, dx, du, dy)?;
        Ok(Self {
            dx,
            du,
            dy,
            dynamics: Dynamics::Fixed(m),
        })
    }

    /// Time-varying system; the provider is checked against the declared
    /// dimensions every time it is queried.
    pub fn time_varying(dx: usize, du: usize, dy: usize, provider: MatrixProvider) -> Result<Self> {
        if dx == 0 || du == 0 || dy == 0 {
            return Err(Error::config("system dimensions must be positive"));
        }
        let sys = Self {
            dx,
            du,
            dy,
            dynamics: Dynamics::Varying(provider),
        };
        sys.matrices(0)?;
        Ok(sys)
    }

    /// Convenience: a time-varying system from an explicit per-step table,
    /// held at its last entry beyond the end.
    pub fn from_table(table: Vec<SystemMatrices>) -> Result<Self> {
        let first = table
            .first()
            .ok_or_else(|| Error::config("empty system table"))?;
        let dx = first.a.nrows();
        let du = first.b.ncols();
        let dy = first.c.as_ref().map_or(dx, |c| c.nrows());
        for m in &table {
            check_matrices(m, dx, du, dy)?;
        }
        let table = Arc::new(table);
        let provider: MatrixProvider = Arc::new(move |t| table[t.min(table.len() - 1)].clone());
        Self::time_varying(dx, du, dy, provider)
    }

    pub fn dx(&self) -> usize {
        self.dx
    }
    pub fn du(&self) -> usize {
        self.du
    }
    pub fn dy(&self) -> usize {
        self.dy
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn is_time_invariant(&self) -> bool {
        matches!(self.dynamics, Dynamics::Fixed(_))
    }

    pub fn is_fully_observed(&self) -> Result<bool> {
        Ok(self.matrices(0)?.c.is_none())
    }

    pub fn matrices(&self, t: usize) -> Result<Cow<'_, SystemMatrices>> {
        match &self.dynamics {
            Dynamics::Fixed(m) => Ok(Cow::Borrowed(m)),
            Dynamics::Varying(p) => {
                let m = p(t);
                check_matrices(&m, self.dx, self.du, self.dy)?;
                Ok(Cow::Owned(m))
            }
        }
    }

    /// `C_t`, materialising the identity when the state is observed.
    pub fn c_matrix(&self, t: usize) -> Result<Matrix> {
        let m = self.matrices(t)?;
        Ok(m.c.clone().unwrap_or_else(|| Matrix::identity(self.dx, self.dx)))
    }

    /// `A_t x + B_t u + w`.
    pub fn step(&self, x: &Vector, u: &Vector, w: &Vector, t: usize) -> Result<Vector> {
        require_len(x, self.dx, "step: state")?;
        require_len(u, self.du, "step: control")?;
        require_len(w, self.dx, "step: perturbation")?;
        let m = self.matrices(t)?;
        Ok(&m.a * x + &m.b * u + w)
    }

    /// `C_t x`, or `x` itself for a fully observed system.
    pub fn observe(&self, x: &Vector, t: usize) -> Result<Vector> {
        require_len(x, self.dx, "observe: state")?;
        let m = self.matrices(t)?;
        Ok(match &m.c {
            Some(c) => c * x,
            None => x.clone(),
        })
    }

    /// Same system with `C` replaced (or removed).
    pub fn with_observation(&self, c: Option<Matrix>) -> Result<Self> {
        match &self.dynamics {
            Dynamics::Fixed(m) => Self::time_invariant(m.a.clone(), m.b.clone(), c),
            Dynamics::Varying(p) => {
                let p = p.clone();
                let dy = c.as_ref().map_or(self.dx, |c| c.nrows());
                let provider: MatrixProvider = Arc::new(move |t| {
                    let mut m = p(t);
                    m.c = c.clone();
                    m
                });
                Self::time_varying(self.dx, self.du, dy, provider)
            }
        }
    }
}

fn check_matrices(m: &SystemMatrices, dx: usize, du: usize, dy: usize) -> Result<()> {
    require_shape(&m.a, dx, dx, "A_t")?;
    require_shape(&m.b, dx, du, "B_t")?;
    if let Some(c) = &m.c {
        require_shape(c, dy, dx, "C_t")?;
    } else if dy != dx {
        return Err(Error::dim("C_t", format!("{dy}x{dx}"), "absent (identity)"));
    }
    if !(crate::linalg::all_finite(&m.a) && crate::linalg::all_finite(&m.b)) {
        return Err(Error::config("system matrices must be finite"));
    }
    Ok(())
}
