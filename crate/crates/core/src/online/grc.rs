use std::borrow::Cow;

use super::{l2, truncation_depth, OgdState, OnlineConfig, Telemetry};
use crate::error::{Error, Result};
use crate::lds::{Controller, CostFunction, LinearSystem, StepContext};
use crate::linalg::{flatten, unflatten, Matrix, Vector};
use crate::policies::NaturesY;

/// `sum_{j=0}^{h} M_j ynat_{s-j}` with zero padding.
fn response(m: &[Matrix], ynat: &[Vector], s: usize) -> Vector {
    let mut u = Vector::zeros(m[0].nrows());
    for (j, mj) in m.iter().enumerate() {
        if j <= s {
            u += mj * &ynat[s - j];
        }
    }
    u
}

/// Gradient Response Controller for stable, partially observed systems.
/// Plays `u_t = sum_{j=0}^{h} M_j ynat_{t-j}`.
#[derive(Clone)]
pub struct Grc {
    model: LinearSystem,
    cost: CostFunction,
    window: usize,
    truncation: usize,
    ogd: OgdState,
    tracker: NaturesY,
    ynat: Vec<Vector>,
    /// `C A^{i-1} B` for `i = 1..=truncation` when the model is fixed.
    markov_cache: Option<Vec<Matrix>>,
    telemetry: Vec<Telemetry>,
}

impl Grc {
    pub fn new(model: LinearSystem, cost: CostFunction, config: &OnlineConfig) -> Result<Self> {
        let (dx, du, dy) = (model.dx(), model.du(), model.dy());
        cost.check_dims(dy, du)?;
        let m0 = model.matrices(0)?;
        let c0 = model.c_matrix(0)?;
        let truncation = match config.truncation {
            Some(d) => d,
            None => truncation_depth(config.window, Some(&c0), &m0.a, Some(&m0.b))?,
        };
        let markov_cache = model.is_time_invariant().then(|| {
            let mut out = Vec::with_capacity(truncation);
            let mut left = c0.clone();
            for _ in 0..truncation {
                out.push(&left * &m0.b);
                left = &left * &m0.a;
            }
            out
        });
        let ogd = OgdState::new(vec![0.0; (config.window + 1) * du * dy], config.schedule, config.projection.clone())?;
        Ok(Self {
            model,
            cost,
            window: config.window,
            truncation,
            ogd,
            tracker: NaturesY::new(dx),
            ynat: Vec::new(),
            markov_cache,
            telemetry: Vec::new(),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Current `M_0..M_h`.
    pub fn parameters(&self) -> Vec<Matrix> {
        unflatten(&self.ogd.point, self.window + 1, self.model.du(), self.model.dy())
    }

    /// Overrides the current parameters (projected onto the feasible set).
    pub fn set_parameters(&mut self, m: &[Matrix]) -> Result<()> {
        if m.len() != self.window + 1 || m.iter().any(|mi| mi.shape() != (self.model.du(), self.model.dy())) {
            return Err(Error::config("parameter list does not match the controller's window and dimensions"));
        }
        self.ogd.point = flatten(m);
        self.ogd.projection.project(&mut self.ogd.point);
        Ok(())
    }

    pub fn ogd(&self) -> &OgdState {
        &self.ogd
    }

    pub fn natures_y(&self) -> &[Vector] {
        &self.ynat
    }

    pub fn telemetry(&self) -> &[Telemetry] {
        &self.telemetry
    }

    /// `G_i = C_t A_{t-1} ... A_{t-i+1} B_{t-i}` for `i = 1..=min(H, t)`.
    fn markov(&self, t: usize) -> Result<Cow<'_, [Matrix]>> {
        let n = self.truncation.min(t);
        if let Some(cache) = &self.markov_cache {
            return Ok(Cow::Borrowed(&cache[..n]));
        }
        let mut left = self.model.c_matrix(t)?;
        let mut out = Vec::with_capacity(n);
        for i in 1..=n {
            let m = self.model.matrices(t - i)?;
            out.push(&left * &m.b);
            left = &left * &m.a;
        }
        Ok(Cow::Owned(out))
    }

    /// Counterfactual `(y_t(M), u_t(M))`.
    pub fn counterfactual(&self, t: usize, m: &[Matrix]) -> Result<(Vector, Vector)> {
        if self.ynat.len() <= t {
            return Err(Error::config(format!("GRC has {} nature's-y entries, needs {}", self.ynat.len(), t + 1)));
        }
        let g = self.markov(t)?;
        let mut y = self.ynat[t].clone();
        for (k, gi) in g.iter().enumerate() {
            y += gi * response(m, &self.ynat, t - 1 - k);
        }
        Ok((y, response(m, &self.ynat, t)))
    }

    pub fn loss(&self, t: usize, m: &[Matrix]) -> Result<f64> {
        let (y, u) = self.counterfactual(t, m)?;
        Ok(self.cost.eval(t, &y, &u))
    }

    pub fn loss_and_gradient(&self, t: usize, m: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
        let (y, u) = self.counterfactual(t, m)?;
        let loss = self.cost.eval(t, &y, &u);
        let (gy, gu) = self.cost.grad(t, &y, &u);
        let mut grads = vec![Matrix::zeros(self.model.du(), self.model.dy()); self.window + 1];
        for (j, g) in grads.iter_mut().enumerate() {
            if j <= t {
                g.ger(1.0, &gu, &self.ynat[t - j], 1.0);
            }
        }
        for (k, gi) in self.markov(t)?.iter().enumerate() {
            let v = gi.transpose() * &gy;
            let s = t - 1 - k;
            for (j, g) in grads.iter_mut().enumerate() {
                if j <= s {
                    g.ger(1.0, &v, &self.ynat[s - j], 1.0);
                }
            }
        }
        Ok((loss, grads))
    }

    pub fn reset(&mut self) {
        self.tracker = NaturesY::new(self.model.dx());
        self.ynat.clear();
        self.telemetry.clear();
        self.ogd.point.iter_mut().for_each(|v| *v = 0.0);
        self.ogd.iteration = 0;
    }
}

impl Controller for Grc {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Vector> {
        let t = ctx.t;
        if self.ynat.len() != t {
            return Err(Error::config(format!(
                "GRC expected step {} but was asked for step {t}; reset it between rollouts",
                self.ynat.len()
            )));
        }
        let ynat = self.tracker.observe(&self.model.c_matrix(t)?, ctx.observation())?;
        self.ynat.push(ynat);
        Ok(response(&self.parameters(), &self.ynat, t))
    }

    fn feedback(&mut self, ctx: &StepContext<'_>, u: &Vector, _next: &Vector, _y: &Vector) -> Result<()> {
        let t = ctx.t;
        let sm = self.model.matrices(t)?;
        self.tracker.advance(&sm.a, &sm.b, u)?;

        let m = self.parameters();
        let (loss, grads) = self.loss_and_gradient(t, &m)?;
        let flat = flatten(&grads);
        let before = self.ogd.point.clone();
        let eta = self.ogd.next_eta();
        self.ogd.update(&flat)?;
        let step: Vec<f64> = self.ogd.point.iter().zip(&before).map(|(a, b)| a - b).collect();
        self.telemetry.push(Telemetry {
            t,
            cost: self.cost.eval(t, ctx.observation(), u),
            loss,
            m_norm: l2(&before),
            w_norm: self.ynat[t].norm(),
            grad_norm: l2(&flat),
            step_norm: l2(&step),
            eta,
        });
        Ok(())
    }
}
