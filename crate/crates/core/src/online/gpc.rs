use std::borrow::Cow;

use super::{l2, truncation_depth, OgdState, OnlineConfig, Telemetry};
use crate::error::{Error, Result};
use crate::lds::{Controller, CostFunction, LinearSystem, StepContext};
use crate::linalg::{flatten, unflatten, Matrix, Vector};
use crate::policies::Stabilizer;

/// `sum_{j=1}^{h} M_j w_{s-j}` with zero padding; `m[0]` is `M_1`.
fn disturbance_action(m: &[Matrix], ws: &[Vector], s: usize) -> Vector {
    let mut u = Vector::zeros(m[0].nrows());
    for (j, mj) in m.iter().enumerate() {
        if j < s {
            u += mj * &ws[s - 1 - j];
        }
    }
    u
}

/// Counterfactual state at time `t` under the fixed DAC parameters `m`,
/// without the initial-state term:
/// `sum_i phi_i w_{t-1-i} + phib_i sum_j M_j w_{t-1-i-j}`, where
/// `phi_i` is the closed-loop transition over the last `i` steps and
/// `phib_i = phi_i B_{t-1-i}`. The sum runs over `min(len, t)` terms.
pub fn counterfactual_state(m: &[Matrix], ws: &[Vector], phi: &[Matrix], phib: &[Matrix], t: usize) -> Vector {
    let mut x = Vector::zeros(phi[0].nrows());
    let n = phi.len().min(phib.len()).min(t);
    for i in 0..n {
        let s = t - 1 - i;
        x += &phi[i] * &ws[s];
        x += &phib[i] * disturbance_action(m, ws, s);
    }
    x
}

struct Transitions<'a> {
    phi: Cow<'a, [Matrix]>,
    phib: Cow<'a, [Matrix]>,
    /// Transition from time 0, present while `t` is within the truncation.
    initial: Option<Matrix>,
}

/// Gradient Perturbation Controller. Plays `u_t = K_t x_t + sum M_j w_{t-j}`
/// and updates `M` by online gradient descent on the counterfactual loss.
/// The disturbances are recovered from the controller's own `model`, which
/// need not be the true system.
#[derive(Clone)]
pub struct Gpc {
    model: LinearSystem,
    stabilizer: Stabilizer,
    cost: CostFunction,
    window: usize,
    truncation: usize,
    ogd: OgdState,
    ws: Vec<Vector>,
    x0: Option<Vector>,
    lti_cache: Option<(Vec<Matrix>, Vec<Matrix>)>,
    telemetry: Vec<Telemetry>,
}

impl Gpc {
    pub fn new(model: LinearSystem, stabilizer: Stabilizer, cost: CostFunction, config: &OnlineConfig) -> Result<Self> {
        let (dx, du) = (model.dx(), model.du());
        if config.window == 0 {
            return Err(Error::config("GPC window must be at least 1"));
        }
        cost.check_dims(dx, du)?;
        let k0 = stabilizer.gain(0);
        if k0.shape() != (du, dx) {
            return Err(Error::dim("GPC stabilizer", format!("{du}x{dx}"), format!("{}x{}", k0.nrows(), k0.ncols())));
        }
        let m0 = model.matrices(0)?;
        let closed0 = &m0.a + &m0.b * &k0;
        let truncation = match config.truncation {
            Some(d) => d,
            None => truncation_depth(config.window, None, &closed0, None)?,
        };
        let fixed_gain = matches!(stabilizer, Stabilizer::Fixed(_));
        let lti_cache = (model.is_time_invariant() && fixed_gain).then(|| {
            let mut phi = Vec::with_capacity(truncation + 1);
            let mut phib = Vec::with_capacity(truncation + 1);
            let mut p = Matrix::identity(dx, dx);
            for _ in 0..=truncation {
                phib.push(&p * &m0.b);
                let next = &p * &closed0;
                phi.push(p);
                p = next;
            }
            (phi, phib)
        });
        let ogd = OgdState::new(vec![0.0; config.window * du * dx], config.schedule, config.projection.clone())?;
        Ok(Self {
            model,
            stabilizer,
            cost,
            window: config.window,
            truncation,
            ogd,
            ws: Vec::new(),
            x0: None,
            lti_cache,
            telemetry: Vec::new(),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Current `M_1..M_h`.
    pub fn parameters(&self) -> Vec<Matrix> {
        unflatten(&self.ogd.point, self.window, self.model.du(), self.model.dx())
    }

    /// Overrides the current parameters (projected onto the feasible set).
    pub fn set_parameters(&mut self, m: &[Matrix]) -> Result<()> {
        if m.len() != self.window || m.iter().any(|mi| mi.shape() != (self.model.du(), self.model.dx())) {
            return Err(Error::config("parameter list does not match the controller's window and dimensions"));
        }
        self.ogd.point = flatten(m);
        self.ogd.projection.project(&mut self.ogd.point);
        Ok(())
    }

    pub fn ogd(&self) -> &OgdState {
        &self.ogd
    }

    pub fn recovered_perturbations(&self) -> &[Vector] {
        &self.ws
    }

    pub fn telemetry(&self) -> &[Telemetry] {
        &self.telemetry
    }

    fn transitions(&self, t: usize) -> Result<Transitions<'_>> {
        let n = (self.truncation + 1).min(t);
        if let Some((phi, phib)) = &self.lti_cache {
            return Ok(Transitions {
                phi: Cow::Borrowed(&phi[..n]),
                phib: Cow::Borrowed(&phib[..n]),
                initial: (t <= self.truncation).then(|| phi[t].clone()),
            });
        }
        let dx = self.model.dx();
        let mut phi = Vec::with_capacity(n);
        let mut phib = Vec::with_capacity(n);
        let mut p = Matrix::identity(dx, dx);
        for i in 0..n {
            let s = t - 1 - i;
            let m = self.model.matrices(s)?;
            phib.push(&p * &m.b);
            let next = &p * (&m.a + &m.b * self.stabilizer.gain(s));
            phi.push(p);
            p = next;
        }
        Ok(Transitions {
            phi: Cow::Owned(phi),
            phib: Cow::Owned(phib),
            initial: (t <= self.truncation).then_some(p),
        })
    }

    /// Counterfactual `(x_t(M), u_t(M))` from the recovered disturbances.
    pub fn counterfactual(&self, t: usize, m: &[Matrix]) -> Result<(Vector, Vector)> {
        if self.ws.len() < t {
            return Err(Error::config(format!("GPC has {} recovered disturbances, needs {t}", self.ws.len())));
        }
        let tr = self.transitions(t)?;
        let mut x = if t == 0 {
            Vector::zeros(self.model.dx())
        } else {
            counterfactual_state(m, &self.ws, &tr.phi, &tr.phib, t)
        };
        if let (Some(init), Some(x0)) = (&tr.initial, &self.x0) {
            x += init * x0;
        }
        let u = self.stabilizer.gain(t) * &x + disturbance_action(m, &self.ws, t);
        Ok((x, u))
    }

    /// `l_t(M)`.
    pub fn loss(&self, t: usize, m: &[Matrix]) -> Result<f64> {
        let (x, u) = self.counterfactual(t, m)?;
        Ok(self.cost.eval(t, &x, &u))
    }

    /// `l_t(M)` and its gradient with respect to each `M_j`.
    pub fn loss_and_gradient(&self, t: usize, m: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
        let (x, u) = self.counterfactual(t, m)?;
        let loss = self.cost.eval(t, &x, &u);
        let (gx, gu) = self.cost.grad(t, &x, &u);
        let k = self.stabilizer.gain(t);
        let g_state = gx + k.transpose() * &gu;
        let tr = self.transitions(t)?;
        let mut grads = vec![Matrix::zeros(self.model.du(), self.model.dx()); self.window];
        for (j, g) in grads.iter_mut().enumerate() {
            // M_{j+1} multiplies w_{t-1-j} in u_t directly.
            if j < t {
                g.ger(1.0, &gu, &self.ws[t - 1 - j], 1.0);
            }
        }
        let n = tr.phi.len().min(tr.phib.len()).min(t);
        for i in 0..n {
            let v = tr.phib[i].transpose() * &g_state;
            let s = t - 1 - i;
            for (j, g) in grads.iter_mut().enumerate() {
                if j < s {
                    g.ger(1.0, &v, &self.ws[s - 1 - j], 1.0);
                }
            }
        }
        Ok((loss, grads))
    }

    pub fn reset(&mut self) {
        self.ws.clear();
        self.x0 = None;
        self.telemetry.clear();
        self.ogd.point.iter_mut().for_each(|v| *v = 0.0);
        self.ogd.iteration = 0;
    }
}

impl Controller for Gpc {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Vector> {
        let t = ctx.t;
        if self.ws.len() != t {
            return Err(Error::config(format!(
                "GPC expected step {} but was asked for step {t}; reset it between rollouts",
                self.ws.len()
            )));
        }
        if t == 0 {
            self.x0 = Some(ctx.states[0].clone());
        }
        let m = self.parameters();
        Ok(self.stabilizer.gain(t) * ctx.state() + disturbance_action(&m, &self.ws, t))
    }

    fn feedback(&mut self, ctx: &StepContext<'_>, u: &Vector, next: &Vector, _y: &Vector) -> Result<()> {
        let t = ctx.t;
        let sm = self.model.matrices(t)?;
        let x = ctx.state();
        let w = next - &sm.a * x - &sm.b * u;
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("recovered disturbance is not finite"));
        }
        let w_norm = w.norm();
        self.ws.push(w);

        let m = self.parameters();
        let (loss, grads) = self.loss_and_gradient(t, &m)?;
        let flat = flatten(&grads);
        let before = self.ogd.point.clone();
        let eta = self.ogd.next_eta();
        self.ogd.update(&flat)?;
        let step: Vec<f64> = self.ogd.point.iter().zip(&before).map(|(a, b)| a - b).collect();
        self.telemetry.push(Telemetry {
            t,
            cost: self.cost.eval(t, x, u),
            loss,
            m_norm: l2(&before),
            w_norm,
            grad_norm: l2(&flat),
            step_norm: l2(&step),
            eta,
        });
        Ok(())
    }
}
