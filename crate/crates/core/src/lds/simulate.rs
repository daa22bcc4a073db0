use super::{CostFunction, LinearSystem, PerturbationSource, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::policies::NaturesY;
use crate::seeds;

/// Which signal the cost is charged on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CostSignal {
    #[default]
    State,
    Observation,
}

#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub horizon: usize,
    pub seed: u64,
    /// Defaults to the origin.
    pub x0: Option<Vector>,
    pub cost_signal: CostSignal,
}

impl SimulationConfig {
    pub fn new(horizon: usize, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            x0: None,
            cost_signal: CostSignal::State,
        }
    }

    pub fn with_x0(mut self, x0: Vector) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn on_observation(mut self) -> Self {
        self.cost_signal = CostSignal::Observation;
        self
    }
}

/// Everything a controller may look at before choosing `u_t`.
///
/// `states`/`observations`/`natures_y` run through index `t`; `controls` and
/// `perturbations` stop at `t - 1`.
pub struct StepContext<'a> {
    pub t: usize,
    pub system: &'a LinearSystem,
    pub states: &'a [Vector],
    pub observations: &'a [Vector],
    pub natures_y: &'a [Vector],
    pub controls: &'a [Vector],
    pub perturbations: &'a [Vector],
}

impl StepContext<'_> {
    pub fn state(&self) -> &Vector {
        &self.states[self.t]
    }

    pub fn observation(&self) -> &Vector {
        &self.observations[self.t]
    }
}

pub trait Controller {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Vector>;

    /// Called after the environment moved to `next_state`; online learners
    /// update here.
    fn feedback(
        &mut self,
        _ctx: &StepContext<'_>,
        _control: &Vector,
        _next_state: &Vector,
        _next_observation: &Vector,
    ) -> Result<()> {
        Ok(())
    }
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Vector> {
        (**self).act(ctx)
    }

    fn feedback(&mut self, ctx: &StepContext<'_>, u: &Vector, x: &Vector, y: &Vector) -> Result<()> {
        (**self).feedback(ctx, u, x, y)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroController;

impl Controller for ZeroController {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Vector> {
        Ok(Vector::zeros(ctx.system.du()))
    }
}

/// Adapts a closure into a controller.
pub struct FnController<F>(pub F);

impl<F> Controller for FnController<F>
where
    F: FnMut(&StepContext<'_>) -> Vector,
{
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Vector> {
        Ok((self.0)(ctx))
    }
}

/// Rolls the system forward for `config.horizon` steps. The perturbation
/// stream is seeded from `config.seed`, so equal inputs give identical
/// trajectories.
pub fn simulate(
    system: &LinearSystem,
    controller: &mut dyn Controller,
    perturbation: &PerturbationSource,
    cost: &CostFunction,
    config: &SimulationConfig,
) -> Result<Trajectory> {
    let (dx, du) = (system.dx(), system.du());
    let dv = match config.cost_signal {
        CostSignal::State => dx,
        CostSignal::Observation => system.dy(),
    };
    cost.check_dims(dv, du)?;
    let mut rng = seeds::stream(config.seed, "perturbation");

    let x0 = config.x0.clone().unwrap_or_else(|| Vector::zeros(dx));
    if x0.len() != dx {
        return Err(Error::dim("initial state", dx, x0.len()));
    }
    let horizon = config.horizon;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut observations = Vec::with_capacity(horizon + 1);
    let mut natures_y = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    let mut perturbations = Vec::with_capacity(horizon);
    let mut costs = Vec::with_capacity(horizon);

    let mut tracker = NaturesY::new(dx);
    let y0 = system.observe(&x0, 0)?;
    natures_y.push(tracker.observe(&system.c_matrix(0)?, &y0)?);
    observations.push(y0);
    states.push(x0);

    for t in 0..horizon {
        let ctx = StepContext {
            t,
            system,
            states: &states,
            observations: &observations,
            natures_y: &natures_y,
            controls: &controls,
            perturbations: &perturbations,
        };
        let u = controller.act(&ctx).map_err(|e| e.at_step(t))?;
        if u.len() != du {
            return Err(Error::dim("controller output", du, u.len()).at_step(t));
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("controller emitted a non-finite control").at_step(t));
        }
        let w = perturbation.sample(t, dx, &mut rng).map_err(|e| e.at_step(t))?;
        let x = &states[t];
        let next = system.step(x, &u, &w, t).map_err(|e| e.at_step(t))?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("state diverged to a non-finite value").at_step(t));
        }
        let signal = match config.cost_signal {
            CostSignal::State => x,
            CostSignal::Observation => &observations[t],
        };
        let c = cost.eval(t, signal, &u);

        let m = system.matrices(t)?;
        tracker.advance(&m.a, &m.b, &u)?;
        let next_y = system.observe(&next, t + 1)?;
        let next_ynat = tracker.observe(&system.c_matrix(t + 1)?, &next_y)?;

        controller
            .feedback(&ctx, &u, &next, &next_y)
            .map_err(|e| e.at_step(t))?;

        costs.push(c);
        controls.push(u);
        perturbations.push(w);
        states.push(next);
        observations.push(next_y);
        natures_y.push(next_ynat);
    }

    let gamma = states.iter().map(|x| x.norm()).fold(0.0, f64::max);
    Ok(Trajectory {
        states,
        observations,
        controls,
        perturbations,
        costs,
        gamma,
    })
}
