//! Nonstochastic system identification by the method of moments and the
//! identify-then-control pipeline.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lds::{spectral_radius, Controller, CostFunction, LinearSystem, PerturbationSource, StepContext};
use crate::optimal::{dare_solve, DARE_MAX_ITER, DARE_TOL};
use crate::linalg::{fmt_f64, hstack, pinv, singular_values, Matrix, Vector};
use crate::online::{Gpc, OnlineConfig};
use crate::policies::{NaturesY, Stabilizer};
use crate::seeds;

/// Default cutoff on `sigma_min(C_0)` below which identification is flagged.
pub const SIGMA_MIN_THRESHOLD: f64 = 1e-6;

/// A plant that can only be stepped and read.
pub trait BlackBox {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn state(&self) -> Vector;
    /// Applies `u` and returns the new state.
    fn step(&mut self, u: &Vector) -> Result<Vector>;
}

/// A linear system driven by a perturbation source, hidden behind
/// [`BlackBox`].
#[derive(Clone)]
pub struct SimulatedPlant {
    system: LinearSystem,
    perturbation: PerturbationSource,
    rng: ChaCha8Rng,
    x: Vector,
    t: usize,
    ws: Vec<Vector>,
}

impl SimulatedPlant {
    /// Perturbations come from the `"perturbation"` stream of `seed`, as in
    /// `simulate`.
    pub fn new(system: LinearSystem, perturbation: PerturbationSource, seed: u64, x0: Option<Vector>) -> Result<Self> {
        let x = x0.unwrap_or_else(|| Vector::zeros(system.dx()));
        if x.len() != system.dx() {
            return Err(Error::dim("plant initial state", system.dx(), x.len()));
        }
        Ok(Self {
            system,
            perturbation,
            rng: seeds::stream(seed, "perturbation"),
            x,
            t: 0,
            ws: Vec::new(),
        })
    }

    pub fn system(&self) -> &LinearSystem {
        &self.system
    }

    /// Perturbations drawn so far (hidden from controllers; used for
    /// comparators).
    pub fn perturbations(&self) -> &[Vector] {
        &self.ws
    }

    pub fn time(&self) -> usize {
        self.t
    }
}

impl BlackBox for SimulatedPlant {
    fn state_dim(&self) -> usize {
        self.system.dx()
    }

    fn control_dim(&self) -> usize {
        self.system.du()
    }

    fn state(&self) -> Vector {
        self.x.clone()
    }

    fn step(&mut self, u: &Vector) -> Result<Vector> {
        let w = self.perturbation.sample(self.t, self.system.dx(), &mut self.rng)?;
        self.x = self.system.step(&self.x, u, &w, self.t)?;
        self.ws.push(w);
        self.t += 1;
        Ok(self.x.clone())
    }
}

/// States `x_0..x_n` and excitation controls `eta_0..eta_{n-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExcitationRecord {
    pub states: Vec<Vector>,
    pub controls: Vec<Vector>,
}

/// Number of excitation steps for `(k, T_0)`.
pub fn excitation_length(k: usize, t0: usize) -> usize {
    t0 * (k + 1) + 1
}

/// Plays i.i.d. Rademacher controls for `T_0 (k + 1) + 1` steps.
pub fn excite_and_record(plant: &mut dyn BlackBox, k: usize, t0: usize, seed: u64) -> Result<ExcitationRecord> {
    excite_for(plant, excitation_length(k, t0), seed)
}

fn excite_for(plant: &mut dyn BlackBox, steps: usize, seed: u64) -> Result<ExcitationRecord> {
    let du = plant.control_dim();
    let mut rng = seeds::stream(seed, "excitation");
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    states.push(plant.state());
    for t in 0..steps {
        let eta = Vector::from_fn(du, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        let x = plant.step(&eta).map_err(|e| e.at_step(t))?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("plant emitted a non-finite state during excitation").at_step(t));
        }
        controls.push(eta);
        states.push(x);
    }
    Ok(ExcitationRecord { states, controls })
}

/// `G_j ~ A^j B` for `j = 0..=k`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimates {
    pub k: usize,
    pub t0: usize,
    pub g: Vec<Matrix>,
}

/// `G_j = (1/T_0) sum_{t < T_0} x_{t(k+1)+j+1} eta_{t(k+1)}^T`.
pub fn estimate_moments(record: &ExcitationRecord, k: usize, t0: usize) -> Result<MomentEstimates> {
    if t0 == 0 {
        return Err(Error::config("moment estimation needs T_0 >= 1"));
    }
    let need = t0 * (k + 1);
    if record.controls.len() < need || record.states.len() < need + 1 {
        return Err(Error::config(format!(
            "excitation record has {} steps, moments with k = {k}, T_0 = {t0} need {need}",
            record.controls.len()
        )));
    }
    let (dx, du) = (record.states[0].len(), record.controls[0].len());
    // Running mean, so identical samples average to themselves exactly.
    let mut g = vec![Matrix::zeros(dx, du); k + 1];
    for t in 0..t0 {
        let s = t * (k + 1);
        let eta = &record.controls[s];
        for (j, gj) in g.iter_mut().enumerate() {
            let sample = &record.states[s + j + 1] * eta.transpose();
            *gj += (sample - &*gj) / (t + 1) as f64;
        }
    }
    if !g.iter().all(crate::linalg::all_finite) {
        return Err(Error::numerical("moment estimates are not finite"));
    }
    Ok(MomentEstimates { k, t0, g })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentifiedSystem {
    pub a: Matrix,
    pub b: Matrix,
    /// `||C_1 - A C_0||_F`.
    pub residual: f64,
    /// `d_x`-th singular value of `C_0`.
    pub sigma_min: f64,
    pub k: usize,
    pub t0: usize,
    /// Set when `C_0` is numerically rank deficient.
    pub warning: Option<String>,
}

impl IdentifiedSystem {
    pub fn to_system(&self) -> Result<LinearSystem> {
        LinearSystem::time_invariant(self.a.clone(), self.b.clone(), None)
    }

    /// Plain-text summary; per-`j` errors `||A_hat^j B_hat - A^j B||` are
    /// included when the true pair is given.
    pub fn summary(&self, truth: Option<(&Matrix, &Matrix)>) -> String {
        let mut s = format!(
            "k {}\nT0 {}\nresidual {}\nsigma_min {}\n",
            self.k,
            self.t0,
            fmt_f64(self.residual),
            fmt_f64(self.sigma_min)
        );
        if let Some((a, b)) = truth {
            let (mut est, mut tru) = (self.b.clone(), b.clone());
            for j in 0..=self.k {
                s.push_str(&format!("error_{j} {}\n", fmt_f64((&est - &tru).norm())));
                est = &self.a * est;
                tru = a * tru;
            }
            s.push_str(&format!("error_A {}\nerror_B {}\n", fmt_f64((&self.a - a).norm()), fmt_f64((&self.b - b).norm())));
        }
        if let Some(w) = &self.warning {
            s.push_str(&format!("warning {w}\n"));
        }
        s
    }
}

/// `A = C_1 C_0^T (C_0 C_0^T)^+`, `B = G_0`.
pub fn recover_ab(est: &MomentEstimates) -> Result<IdentifiedSystem> {
    recover_ab_with_threshold(est, SIGMA_MIN_THRESHOLD)
}

pub fn recover_ab_with_threshold(est: &MomentEstimates, threshold: f64) -> Result<IdentifiedSystem> {
    if est.k < 1 || est.g.len() != est.k + 1 {
        return Err(Error::config("recovering A needs k >= 1 and moments G_0..G_k"));
    }
    let c0 = hstack(&est.g[..est.k]);
    let c1 = hstack(&est.g[1..]);
    let dx = c0.nrows();
    let gram = &c0 * c0.transpose();
    let a = &c1 * c0.transpose() * pinv(&gram);
    let residual = (&c1 - &a * &c0).norm();
    let sv = singular_values(&c0);
    let sigma_min = sv.get(dx - 1).copied().unwrap_or(0.0);
    let warning = (sigma_min < threshold).then(|| {
        format!("C_0 is numerically rank deficient (sigma_min = {sigma_min:.3e} < {threshold:.1e}); the pair may not be strongly controllable at k = {}", est.k)
    });
    Ok(IdentifiedSystem {
        a,
        b: est.g[0].clone(),
        residual,
        sigma_min,
        k: est.k,
        t0: est.t0,
        warning,
    })
}

/// States, controls and costs of one phase driven on a plant.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhaseRecord {
    pub states: Vec<Vector>,
    pub controls: Vec<Vector>,
    pub costs: Vec<f64>,
}

/// Runs `controller` on the plant for `steps` steps. The controller sees
/// `model` as the system and phase-local time starting at zero.
pub fn drive(
    plant: &mut dyn BlackBox,
    model: &LinearSystem,
    controller: &mut dyn Controller,
    cost: &CostFunction,
    start: usize,
    steps: usize,
) -> Result<PhaseRecord> {
    let dx = plant.state_dim();
    let mut states = vec![plant.state()];
    let mut controls: Vec<Vector> = Vec::with_capacity(steps);
    let mut costs = Vec::with_capacity(steps);
    let mut ws: Vec<Vector> = Vec::with_capacity(steps);
    let mut tracker = NaturesY::new(dx);
    let mut ynat = vec![tracker.observe(&model.c_matrix(0)?, &states[0])?];
    for t in 0..steps {
        let ctx = StepContext {
            t,
            system: model,
            states: &states,
            observations: &states,
            natures_y: &ynat,
            controls: &controls,
            perturbations: &ws,
        };
        let u = controller.act(&ctx).map_err(|e| e.at_step(start + t))?;
        let next = plant.step(&u).map_err(|e| e.at_step(start + t))?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("plant state diverged").at_step(start + t));
        }
        costs.push(cost.eval(start + t, &states[t], &u));
        controller.feedback(&ctx, &u, &next, &next).map_err(|e| e.at_step(start + t))?;
        let m = model.matrices(t)?;
        ws.push(&next - &m.a * &states[t] - &m.b * &u);
        tracker.advance(&m.a, &m.b, &u)?;
        ynat.push(tracker.observe(&model.c_matrix(t + 1)?, &next)?);
        controls.push(u);
        states.push(next);
    }
    Ok(PhaseRecord { states, controls, costs })
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub horizon: usize,
    /// Controllability index used for the moments.
    pub k: usize,
    pub online: OnlineConfig,
    /// Stabilizing gain for GPC on the estimate. When absent: zero if the
    /// estimate is stable, otherwise the DARE gain of the estimate.
    pub stabilizer: Option<Matrix>,
    pub seed: u64,
    pub sigma_threshold: f64,
}

impl PipelineConfig {
    pub fn new(horizon: usize, k: usize, online: OnlineConfig, seed: u64) -> Self {
        Self {
            horizon,
            k,
            online,
            stabilizer: None,
            seed,
            sigma_threshold: SIGMA_MIN_THRESHOLD,
        }
    }

    /// Length of the exploration phase, `ceil(T^{2/3})`.
    pub fn exploration_steps(&self) -> usize {
        ((self.horizon as f64).powf(2.0 / 3.0).ceil() as usize).min(self.horizon)
    }
}

#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub identified: IdentifiedSystem,
    pub exploration: PhaseRecord,
    pub exploitation: PhaseRecord,
}

impl PipelineReport {
    pub fn exploration_cost(&self) -> f64 {
        self.exploration.costs.iter().sum()
    }

    pub fn exploitation_cost(&self) -> f64 {
        self.exploitation.costs.iter().sum()
    }

    /// Per-step costs over the whole horizon.
    pub fn costs(&self) -> Vec<f64> {
        self.exploration.costs.iter().chain(&self.exploitation.costs).copied().collect()
    }
}

/// Explores for `ceil(T^{2/3})` steps with Rademacher controls, identifies
/// `(A, B)`, then runs GPC on the estimate for the rest of the horizon.
pub fn identify_then_control(plant: &mut dyn BlackBox, cost: &CostFunction, config: &PipelineConfig) -> Result<PipelineReport> {
    let explore = config.exploration_steps();
    let t0 = explore.saturating_sub(1) / (config.k + 1);
    if t0 == 0 {
        return Err(Error::config(format!(
            "horizon {} leaves no samples for k = {} (exploration lasts {explore} steps)",
            config.horizon, config.k
        )));
    }
    let record = excite_for(plant, explore, config.seed)?;
    let est = estimate_moments(&record, config.k, t0)?;
    let identified = recover_ab_with_threshold(&est, config.sigma_threshold)?;
    if let Some(w) = &identified.warning {
        return Err(Error::numerical(format!("identification aborted: {w}")));
    }
    let exploration = PhaseRecord {
        costs: (0..explore).map(|t| cost.eval(t, &record.states[t], &record.controls[t])).collect(),
        states: record.states,
        controls: record.controls,
    };
    let exploitation = control_with_model(plant, &identified, cost, config, explore)?;
    Ok(PipelineReport {
        identified,
        exploration,
        exploitation,
    })
}

/// Zero when `A_hat` is stable. An estimate of a stable plant can come out
/// marginally unstable from few samples; then the DARE gain of the estimate
/// (with the cost's `Q, R`, identity for custom costs) is used.
pub fn estimate_stabilizer(identified: &IdentifiedSystem, cost: &CostFunction) -> Result<Matrix> {
    let (dx, du) = (identified.a.nrows(), identified.b.ncols());
    if spectral_radius(&identified.a)? < 1.0 {
        return Ok(Matrix::zeros(du, dx));
    }
    let (q, r) = match cost.as_quadratic() {
        Some(c) => (c.q.clone(), c.r.clone()),
        None => (Matrix::identity(dx, dx), Matrix::identity(du, du)),
    };
    dare_solve(&identified.a, &identified.b, &q, &r, DARE_TOL, DARE_MAX_ITER)
        .map(|sol| sol.k)
        .map_err(|e| Error::numerical(format!("estimated system is unstable and could not be stabilized: {e}")))
}

/// Exploitation phase alone: GPC on the given estimate from the plant's
/// current state for the remaining `T - start` steps.
pub fn control_with_model(
    plant: &mut dyn BlackBox,
    identified: &IdentifiedSystem,
    cost: &CostFunction,
    config: &PipelineConfig,
    start: usize,
) -> Result<PhaseRecord> {
    let model = identified.to_system()?;
    let k = match &config.stabilizer {
        Some(k) => k.clone(),
        None => estimate_stabilizer(identified, cost)?,
    };
    let mut gpc = Gpc::new(model.clone(), Stabilizer::Fixed(k), cost.clone(), &config.online)?;
    drive(plant, &model, &mut gpc, cost, start, config.horizon.saturating_sub(start))
}
