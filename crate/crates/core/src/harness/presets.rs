//! Named scenario library. Nonlinear examples are linearized around anchor
//! points and expressed in deviation coordinates.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lds::{linearize, CostFunction, LinearSystem, MatrixProvider, QuadraticCost, SystemMatrices, DEFAULT_FD_STEP};
use crate::linalg::{pinv, Matrix, Vector};

pub type Dynamics = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;

/// A nonlinear map `x_{t+1} = f(x_t, u_t)`.
#[derive(Clone)]
pub struct NonlinearModel {
    pub name: &'static str,
    pub f: Dynamics,
}

impl NonlinearModel {
    pub fn step(&self, x: &Vector, u: &Vector) -> Vector {
        (self.f)(x, u)
    }

    pub fn jacobian(&self, x: &Vector, u: &Vector) -> Result<(Matrix, Matrix)> {
        let f = self.f.clone();
        linearize(move |x, u| f(x, u), x, u, DEFAULT_FD_STEP)
    }
}

impl fmt::Debug for NonlinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearModel").field("name", &self.name).finish()
    }
}

/// Point the linearization is taken at: state and control.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub x: Vector,
    pub u: Vector,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    /// Dynamics the learner is run on.
    pub system: LinearSystem,
    /// Cost on the state.
    pub cost: CostFunction,
    /// Partially observed variant: the same dynamics with an output map and
    /// a cost on the output. `None` when the scenario has no natural output.
    pub observed: Option<(LinearSystem, CostFunction)>,
    /// Maps the raw disturbance into the state.
    pub embedding: Option<Matrix>,
    pub x0: Vector,
    pub anchors: Vec<Anchor>,
    pub nonlinear: Option<NonlinearModel>,
}

impl Scenario {
    pub fn disturbance_dim(&self) -> usize {
        self.embedding.as_ref().map_or(self.system.dx(), |e| e.ncols())
    }
}

pub const PRESET_NAMES: [&str; 7] = [
    "scalar-0.9",
    "double-integrator",
    "b747",
    "pendulum",
    "pendulum-down",
    "ventilator",
    "sir",
];

pub fn scenario_presets() -> Result<Vec<Scenario>> {
    PRESET_NAMES.iter().map(|n| preset(n)).collect()
}

pub fn preset(name: &str) -> Result<Scenario> {
    match name {
        "scalar-0.9" => scalar(0.9),
        "double-integrator" => double_integrator(0.1, 0.0),
        "b747" => b747(),
        "pendulum" => pendulum(PendulumParams::default(), true),
        "pendulum-down" => pendulum(PendulumParams::default(), false),
        "ventilator" => ventilator(VentilatorParams::default()),
        "sir" => sir(SirParams::default()),
        other => Err(Error::config(format!(
            "unknown preset `{other}` (known: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

fn eye(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

fn scalar(a: f64) -> Result<Scenario> {
    let system = LinearSystem::time_invariant(Matrix::from_element(1, 1, a), eye(1), None)?;
    let cost = CostFunction::quadratic(eye(1), eye(1))?;
    Ok(Scenario {
        name: "scalar-0.9",
        summary: "x' = 0.9 x + u + w with quadratic cost",
        observed: Some((system.with_observation(Some(eye(1)))?, cost.clone())),
        system,
        cost,
        embedding: None,
        x0: Vector::zeros(1),
        anchors: Vec::new(),
        nonlinear: None,
    })
}

pub fn double_integrator(dt: f64, target: f64) -> Result<Scenario> {
    let a = Matrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
    let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let target = Vector::from_vec(vec![target, 0.0]);
    let cost = CostFunction::Quadratic(QuadraticCost::new(eye(2), eye(1), Some(target))?);
    let observed_system = LinearSystem::time_invariant(a.clone(), b.clone(), Some(Matrix::from_row_slice(1, 2, &[1.0, 0.0])))?;
    Ok(Scenario {
        name: "double-integrator",
        summary: "point mass, position and velocity, force input",
        system: LinearSystem::time_invariant(a, b, None)?,
        cost,
        observed: Some((observed_system, CostFunction::quadratic(eye(1), eye(1))?)),
        embedding: None,
        x0: Vector::from_vec(vec![1.0, 0.0]),
        anchors: Vec::new(),
        nonlinear: None,
    })
}

pub fn b747_matrices() -> (Matrix, Matrix) {
    let a = Matrix::from_row_slice(
        4,
        4,
        &[
            -0.003, 0.039, 0.0, -0.322, //
            -0.065, -0.319, 7.74, 0.0, //
            0.020, -0.101, -0.429, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        ],
    );
    let b = Matrix::from_row_slice(4, 2, &[0.01, 1.0, -0.18, -0.04, -1.16, 0.598, 0.0, 0.0]);
    (a, b)
}

/// Speed and climb rate as functions of the state.
pub fn b747_outputs() -> Matrix {
    Matrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 7.74])
}

fn b747() -> Result<Scenario> {
    let (a, b) = b747_matrices();
    let h = b747_outputs();
    // Wind enters through the two velocity states.
    let embedding = a.columns(0, 2).into_owned();
    let r = Matrix::from_diagonal(&Vector::from_vec(vec![0.0, 1.0]));
    let y_target = Vector::zeros(2);
    let x_target = pinv(&h) * &y_target;
    let cost = CostFunction::Quadratic(QuadraticCost::new(h.transpose() * &h, r.clone(), Some(x_target))?);
    let observed_cost = CostFunction::Quadratic(QuadraticCost::new(eye(2), r, Some(y_target))?);
    Ok(Scenario {
        name: "b747",
        summary: "longitudinal aircraft dynamics, elevator and thrust inputs",
        system: LinearSystem::time_invariant(a.clone(), b.clone(), None)?,
        cost,
        observed: Some((LinearSystem::time_invariant(a, b, Some(h))?, observed_cost)),
        embedding: Some(embedding),
        x0: Vector::zeros(4),
        anchors: Vec::new(),
        nonlinear: None,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            dt: 0.05,
        }
    }
}

pub fn pendulum_model(p: PendulumParams) -> NonlinearModel {
    NonlinearModel {
        name: "pendulum",
        f: Arc::new(move |x, u| {
            let (theta, omega) = (x[0], x[1]);
            let accel = (u[0] - p.mass * p.gravity * theta.sin()) / (p.mass * p.length * p.length);
            Vector::from_vec(vec![theta + p.dt * omega, omega + p.dt * accel])
        }),
    }
}

/// Regulates around the upright (`theta = pi`) or hanging (`theta = 0`)
/// equilibrium, in coordinates relative to it.
pub fn pendulum(p: PendulumParams, upright: bool) -> Result<Scenario> {
    let model = pendulum_model(p);
    let anchor = Anchor {
        x: Vector::from_vec(vec![if upright { PI } else { 0.0 }, 0.0]),
        u: Vector::zeros(1),
    };
    let (a, b) = model.jacobian(&anchor.x, &anchor.u)?;
    Ok(Scenario {
        name: if upright { "pendulum" } else { "pendulum-down" },
        summary: if upright {
            "pendulum linearized at the upright equilibrium"
        } else {
            "pendulum linearized at the hanging equilibrium"
        },
        system: LinearSystem::time_invariant(a, b, None)?,
        cost: CostFunction::quadratic(eye(2), eye(1))?,
        observed: None,
        embedding: None,
        x0: Vector::from_vec(vec![0.1, 0.0]),
        anchors: vec![anchor],
        nonlinear: Some(model),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct VentilatorParams {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub dt: f64,
    /// Breath period in steps.
    pub period: usize,
}

impl Default for VentilatorParams {
    fn default() -> Self {
        Self {
            c0: 5.0,
            c1: 3.0,
            c2: 6.0,
            dt: 0.03,
            period: 100,
        }
    }
}

impl VentilatorParams {
    pub fn pressure(&self, v: f64) -> f64 {
        self.c0 + self.c1 * v.powf(-1.0 / 3.0) + self.c2 * v.powf(5.0 / 3.0)
    }

    /// Reference lung volume over one breath.
    pub fn volume(&self, t: usize) -> f64 {
        let phase = 2.0 * PI * (t % self.period) as f64 / self.period as f64;
        1.25 - 0.25 * phase.cos()
    }
}

/// Volume is latent; the pressure is observed. The output map is the
/// derivative of the pressure curve along the reference breath.
pub fn ventilator(p: VentilatorParams) -> Result<Scenario> {
    if p.period == 0 {
        return Err(Error::config("ventilator breath period must be positive"));
    }
    let model = NonlinearModel {
        name: "ventilator",
        f: Arc::new(move |x, u| Vector::from_vec(vec![x[0] + p.dt * u[0]])),
    };
    let mut anchors = Vec::with_capacity(p.period);
    let mut table = Vec::with_capacity(p.period);
    for t in 0..p.period {
        let v = p.volume(t);
        let u = (p.volume(t + 1) - v) / p.dt;
        let anchor = Anchor {
            x: Vector::from_element(1, v),
            u: Vector::from_element(1, u),
        };
        let (a, b) = model.jacobian(&anchor.x, &anchor.u)?;
        let slope = linearize(
            |x, _| Vector::from_element(1, p.pressure(x[0])),
            &anchor.x,
            &anchor.u,
            DEFAULT_FD_STEP,
        )?
        .0;
        table.push(SystemMatrices { a, b, c: Some(slope) });
        anchors.push(anchor);
    }
    let mean_slope = table.iter().map(|m| m.c.as_ref().map_or(0.0, |c| c[(0, 0)].powi(2))).sum::<f64>() / p.period as f64;
    let table = Arc::new(table);
    let provider: MatrixProvider = Arc::new(move |t| table[t % table.len()].clone());
    let observed = LinearSystem::time_varying(1, 1, 1, provider)?;
    Ok(Scenario {
        name: "ventilator",
        summary: "lung volume driven by airflow, pressure observed along a periodic breath",
        system: observed.with_observation(None)?,
        cost: CostFunction::quadratic(Matrix::from_element(1, 1, mean_slope), eye(1))?,
        observed: Some((observed, CostFunction::quadratic(eye(1), eye(1))?)),
        embedding: None,
        x0: Vector::zeros(1),
        anchors,
        nonlinear: Some(model),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct SirParams {
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// Length of the nominal trajectory used as anchors; the last anchor is
    /// held afterwards.
    pub anchors: usize,
}

impl Default for SirParams {
    fn default() -> Self {
        Self {
            beta: 0.3,
            gamma: 0.1,
            alpha: 0.01,
            anchors: 200,
        }
    }
}

pub fn sir_model(p: SirParams) -> NonlinearModel {
    NonlinearModel {
        name: "sir",
        f: Arc::new(move |x, u| {
            let (s, i, r) = (x[0], x[1], x[2]);
            Vector::from_vec(vec![
                s - p.beta * s * i - p.alpha * u[0],
                i + p.beta * s * i - p.gamma * i,
                r + p.gamma * i,
            ])
        }),
    }
}

/// Linearized along the uncontrolled epidemic started at `(0.99, 0.01, 0)`.
pub fn sir(p: SirParams) -> Result<Scenario> {
    if p.anchors == 0 {
        return Err(Error::config("SIR needs at least one anchor"));
    }
    let model = sir_model(p);
    let u = Vector::zeros(1);
    let mut x = Vector::from_vec(vec![0.99, 0.01, 0.0]);
    let mut anchors = Vec::with_capacity(p.anchors);
    let mut table = Vec::with_capacity(p.anchors);
    for _ in 0..p.anchors {
        let (a, b) = model.jacobian(&x, &u)?;
        table.push(SystemMatrices { a, b, c: None });
        let next = model.step(&x, &u);
        anchors.push(Anchor { x, u: u.clone() });
        x = next;
    }
    let infected = Matrix::from_diagonal(&Vector::from_vec(vec![0.0, 1.0, 0.0]));
    Ok(Scenario {
        name: "sir",
        summary: "susceptible-infected-recovered epidemic with vaccination",
        system: LinearSystem::from_table(table)?,
        cost: CostFunction::quadratic(infected, eye(1))?,
        observed: None,
        embedding: None,
        x0: Vector::zeros(3),
        anchors,
        nonlinear: Some(model),
    })
}
