//! Policy classes: linear, PID, bang-bang, linear dynamic (LDC), generalized
//! linear (GLC), disturbance-action (DAC) and disturbance-response (DRC)
//! controllers, plus the conversion maps between them.

mod convert;
mod natures_y;
mod text;

use std::fmt;
use std::sync::Arc;

pub use convert::{approximation_gap, dac_from_linear, glc_from_ldc, lift_glc, LiftedGlc};
pub use natures_y::{natures_y_step, NaturesY};
pub use text::{parse_policy, write_policy};

use crate::error::{Error, Result};
use crate::lds::{Controller, StepContext};
use crate::linalg::{require_len, spectral_norm, Matrix, Vector};

/// Signal histories available to a policy at time `t`. `states` and
/// `natures_y` hold indices `0..=t`, `perturbations` holds `0..t`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Signals<'a> {
    pub states: Option<&'a [Vector]>,
    pub perturbations: Option<&'a [Vector]>,
    pub natures_y: Option<&'a [Vector]>,
}

impl<'a> Signals<'a> {
    pub fn from_context(ctx: &StepContext<'a>) -> Self {
        Self {
            states: Some(ctx.states),
            perturbations: Some(ctx.perturbations),
            natures_y: Some(ctx.natures_y),
        }
    }
}

/// `hist[t - lag]`, or zeros before the start of time.
fn lagged(hist: &[Vector], t: usize, lag: usize, dim: usize) -> Vector {
    if lag > t {
        Vector::zeros(dim)
    } else {
        hist[t - lag].clone()
    }
}

fn need<'a>(sig: Option<&'a [Vector]>, what: &str, len: usize, kind: &str) -> Result<&'a [Vector]> {
    let h = sig.ok_or_else(|| Error::config(format!("{kind} policy needs the {what} history")))?;
    if h.len() < len {
        return Err(Error::config(format!(
            "{kind} policy: {what} history has {} entries, needs {len}",
            h.len()
        )));
    }
    Ok(h)
}

/// Sum of spectral norms of the blocks.
pub fn budget(ms: &[Matrix]) -> f64 {
    ms.iter().map(spectral_norm).sum()
}

fn check_budget(ms: &[Matrix], gamma: f64, kind: &str) -> Result<()> {
    let b = budget(ms);
    if b > gamma {
        return Err(Error::config(format!("{kind} parameters have norm sum {b:.6} > budget {gamma}")));
    }
    Ok(())
}

fn check_same_shape(ms: &[Matrix], kind: &str) -> Result<(usize, usize)> {
    let first = ms
        .first()
        .ok_or_else(|| Error::config(format!("{kind} policy needs at least one matrix")))?;
    let shape = first.shape();
    if let Some(bad) = ms.iter().find(|m| m.shape() != shape) {
        return Err(Error::dim(
            "policy coefficient",
            format!("{}x{}", shape.0, shape.1),
            format!("{}x{}", bad.nrows(), bad.ncols()),
        ));
    }
    Ok(shape)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearPolicy {
    pub k: Matrix,
}

impl LinearPolicy {
    pub fn new(k: Matrix) -> Self {
        Self { k }
    }

    /// Refuses gains with Frobenius norm above `kappa`.
    pub fn with_bound(k: Matrix, kappa: f64) -> Result<Self> {
        if k.norm() > kappa {
            return Err(Error::config(format!("|K|_F = {:.6} exceeds kappa = {kappa}", k.norm())));
        }
        Ok(Self { k })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PidPolicy {
    pub alpha: Matrix,
    pub beta: Matrix,
    pub gamma_d: Matrix,
    /// Clamp for each accumulator coordinate; `None` is the pure running sum.
    pub windup_cap: Option<f64>,
    integral: Vector,
    previous: Vector,
}

impl PidPolicy {
    pub fn new(alpha: Matrix, beta: Matrix, gamma_d: Matrix) -> Result<Self> {
        let shape = check_same_shape(&[alpha.clone(), beta.clone(), gamma_d.clone()], "PID")?;
        Ok(Self {
            alpha,
            beta,
            gamma_d,
            windup_cap: None,
            integral: Vector::zeros(shape.1),
            previous: Vector::zeros(shape.1),
        })
    }

    pub fn with_windup_cap(mut self, cap: f64) -> Self {
        self.windup_cap = Some(cap);
        self
    }

    pub fn integral(&self) -> &Vector {
        &self.integral
    }

    fn act(&mut self, x: &Vector) -> Result<Vector> {
        if x.len() != self.integral.len() {
            return Err(Error::dim("PID state", self.integral.len(), x.len()));
        }
        self.integral += x;
        if let Some(cap) = self.windup_cap {
            self.integral.apply(|v| *v = v.clamp(-cap, cap));
        }
        let u = &self.alpha * x + &self.beta * &self.integral + &self.gamma_d * (x - &self.previous);
        self.previous = x.clone();
        Ok(u)
    }

    fn reset(&mut self) {
        self.integral.fill(0.0);
        self.previous.fill(0.0);
    }
}

/// Full throttle below the band, full brake above it, idle inside.
#[derive(Clone, Debug, PartialEq)]
pub struct BangBangPolicy {
    pub x_min: f64,
    pub x_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// State coordinate that is compared against the band.
    pub coordinate: usize,
    /// Every control coordinate receives the same value.
    pub du: usize,
}

impl BangBangPolicy {
    pub fn new(x_min: f64, x_max: f64, u_min: f64, u_max: f64) -> Result<Self> {
        if !(x_min <= x_max) || !(u_min <= u_max) {
            return Err(Error::config("bang-bang needs x_min <= x_max and u_min <= u_max"));
        }
        Ok(Self {
            x_min,
            x_max,
            u_min,
            u_max,
            coordinate: 0,
            du: 1,
        })
    }

    fn act(&self, x: &Vector) -> Result<Vector> {
        let v = *x
            .get(self.coordinate)
            .ok_or_else(|| Error::config(format!("bang-bang coordinate {} out of range", self.coordinate)))?;
        let u = if v < self.x_min {
            self.u_max
        } else if v > self.x_max {
            self.u_min
        } else {
            0.0
        };
        Ok(Vector::from_element(self.du, u))
    }
}

/// `u_t = C s_t + D x_t`, `s_{t+1} = A s_t + B x_t`, `s_0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LdcPolicy {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Option<Matrix>,
    s: Vector,
}

impl LdcPolicy {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Option<Matrix>) -> Result<Self> {
        let ds = a.nrows();
        if !a.is_square() || b.nrows() != ds || c.ncols() != ds {
            return Err(Error::config(format!(
                "LDC shapes do not chain: A {}x{}, B {}x{}, C {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if let Some(d) = &d {
            if d.shape() != (c.nrows(), b.ncols()) {
                return Err(Error::dim("LDC D", format!("{}x{}", c.nrows(), b.ncols()), format!("{}x{}", d.nrows(), d.ncols())));
            }
        }
        Ok(Self { a, b, c, d, s: Vector::zeros(ds) })
    }

    pub fn internal_state(&self) -> &Vector {
        &self.s
    }

    /// `max_{i <= 50} ||A^i||` and `||A^50||`: a cheap empirical decay check.
    pub fn decay_check(&self) -> (f64, f64) {
        let mut p = Matrix::identity(self.a.nrows(), self.a.ncols());
        let mut peak: f64 = 1.0;
        for _ in 0..50 {
            p = &p * &self.a;
            peak = peak.max(spectral_norm(&p));
        }
        (peak, spectral_norm(&p))
    }

    fn act(&mut self, x: &Vector) -> Result<Vector> {
        if x.len() != self.b.ncols() {
            return Err(Error::dim("LDC input", self.b.ncols(), x.len()));
        }
        let mut u = &self.c * &self.s;
        if let Some(d) = &self.d {
            u += d * x;
        }
        self.s = &self.a * &self.s + &self.b * x;
        Ok(u)
    }
}

/// `u_t = sum_{i=0}^{h} M_i x_{t-i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlcPolicy {
    pub m: Vec<Matrix>,
}

impl GlcPolicy {
    pub fn new(m: Vec<Matrix>) -> Result<Self> {
        check_same_shape(&m, "GLC")?;
        Ok(Self { m })
    }

    pub fn with_budget(m: Vec<Matrix>, gamma: f64) -> Result<Self> {
        check_budget(&m, gamma, "GLC")?;
        Self::new(m)
    }

    pub fn window(&self) -> usize {
        self.m.len() - 1
    }
}

pub type GainProvider = Arc<dyn Fn(usize) -> Matrix + Send + Sync>;

#[derive(Clone)]
pub enum Stabilizer {
    Fixed(Matrix),
    Varying(GainProvider),
}

impl Stabilizer {
    pub fn gain(&self, t: usize) -> Matrix {
        match self {
            Stabilizer::Fixed(k) => k.clone(),
            Stabilizer::Varying(f) => f(t),
        }
    }
}

impl fmt::Debug for Stabilizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stabilizer::Fixed(k) => f.debug_tuple("Fixed").field(k).finish(),
            Stabilizer::Varying(_) => f.write_str("Varying(<provider>)"),
        }
    }
}

/// `u_t = K_t x_t + sum_{i=1}^{h} M_i w_{t-i}`. `m[0]` is `M_1`. Without a
/// stabilizer the state is not needed at all. `offset` is an optional
/// constant term added to every control.
#[derive(Clone, Debug)]
pub struct DacPolicy {
    pub stabilizer: Option<Stabilizer>,
    pub m: Vec<Matrix>,
    pub offset: Option<Vector>,
}

impl DacPolicy {
    pub fn new(stabilizer: Option<Stabilizer>, m: Vec<Matrix>) -> Result<Self> {
        let (du, _) = check_same_shape(&m, "DAC")?;
        if let Some(Stabilizer::Fixed(k)) = &stabilizer {
            if k.nrows() != du {
                return Err(Error::dim("DAC stabilizer rows", du, k.nrows()));
            }
        }
        Ok(Self { stabilizer, m, offset: None })
    }

    pub fn with_budget(stabilizer: Option<Stabilizer>, m: Vec<Matrix>, gamma: f64) -> Result<Self> {
        check_budget(&m, gamma, "DAC")?;
        Self::new(stabilizer, m)
    }

    pub fn with_offset(mut self, offset: Vector) -> Result<Self> {
        require_len(&offset, self.du(), "DAC offset")?;
        self.offset = Some(offset);
        Ok(self)
    }

    pub fn window(&self) -> usize {
        self.m.len()
    }

    pub fn du(&self) -> usize {
        self.m[0].nrows()
    }

    fn act(&self, sig: &Signals<'_>, t: usize) -> Result<Vector> {
        let w = need(sig.perturbations, "perturbation", t, "DAC")?;
        let mut u = self.offset.clone().unwrap_or_else(|| Vector::zeros(self.du()));
        if let Some(stab) = &self.stabilizer {
            let x = &need(sig.states, "state", t + 1, "DAC")?[t];
            u += stab.gain(t) * x;
        }
        for (i, m) in self.m.iter().enumerate() {
            if i < t {
                u += m * &w[t - 1 - i];
            }
        }
        Ok(u)
    }
}

impl PartialEq for DacPolicy {
    fn eq(&self, other: &Self) -> bool {
        let stab = match (&self.stabilizer, &other.stabilizer) {
            (None, None) => true,
            (Some(Stabilizer::Fixed(a)), Some(Stabilizer::Fixed(b))) => a == b,
            _ => false,
        };
        stab && self.m == other.m && self.offset == other.offset
    }
}

/// `u_t = sum_{i=0}^{h} M_i ynat_{t-i}`, plus an optional constant offset.
#[derive(Clone, Debug, PartialEq)]
pub struct DrcPolicy {
    pub m: Vec<Matrix>,
    pub offset: Option<Vector>,
}

impl DrcPolicy {
    pub fn new(m: Vec<Matrix>) -> Result<Self> {
        check_same_shape(&m, "DRC")?;
        Ok(Self { m, offset: None })
    }

    pub fn with_offset(mut self, offset: Vector) -> Result<Self> {
        require_len(&offset, self.m[0].nrows(), "DRC offset")?;
        self.offset = Some(offset);
        Ok(self)
    }

    pub fn with_budget(m: Vec<Matrix>, gamma: f64) -> Result<Self> {
        check_budget(&m, gamma, "DRC")?;
        Self::new(m)
    }

    pub fn window(&self) -> usize {
        self.m.len() - 1
    }
}

fn history_sum(m: &[Matrix], hist: &[Vector], t: usize) -> Vector {
    let (du, dv) = m[0].shape();
    let mut u = Vector::zeros(du);
    for (i, mi) in m.iter().enumerate() {
        if i <= t {
            u += mi * lagged(hist, t, i, dv);
        }
    }
    u
}

#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    Linear(LinearPolicy),
    Pid(PidPolicy),
    BangBang(BangBangPolicy),
    Ldc(LdcPolicy),
    Glc(GlcPolicy),
    Dac(DacPolicy),
    Drc(DrcPolicy),
}

impl Policy {
    pub fn kind(&self) -> &'static str {
        match self {
            Policy::Linear(_) => "linear",
            Policy::Pid(_) => "pid",
            Policy::BangBang(_) => "bangbang",
            Policy::Ldc(_) => "ldc",
            Policy::Glc(_) => "glc",
            Policy::Dac(_) => "dac",
            Policy::Drc(_) => "drc",
        }
    }

    pub fn du(&self) -> usize {
        match self {
            Policy::Linear(p) => p.k.nrows(),
            Policy::Pid(p) => p.alpha.nrows(),
            Policy::BangBang(p) => p.du,
            Policy::Ldc(p) => p.c.nrows(),
            Policy::Glc(p) => p.m[0].nrows(),
            Policy::Dac(p) => p.du(),
            Policy::Drc(p) => p.m[0].nrows(),
        }
    }

    /// Clears internal state (PID accumulator, LDC memory) so the policy can
    /// be rolled out again from `t = 0`.
    pub fn reset(&mut self) {
        match self {
            Policy::Pid(p) => p.reset(),
            Policy::Ldc(p) => p.s.fill(0.0),
            _ => {}
        }
    }

    /// Control at time `t`. Stateful kinds (PID, LDC) must be called once per
    /// step in order.
    pub fn act<'a>(&mut self, sig: &Signals<'a>, t: usize) -> Result<Vector> {
        let kind = self.kind();
        let state = |sig: &Signals<'a>| -> Result<&'a Vector> { Ok(&need(sig.states, "state", t + 1, kind)?[t]) };
        match self {
            Policy::Linear(p) => {
                let x = state(sig)?;
                if x.len() != p.k.ncols() {
                    return Err(Error::dim("linear policy input", p.k.ncols(), x.len()));
                }
                Ok(&p.k * x)
            }
            Policy::Pid(p) => p.act(state(sig)?),
            Policy::BangBang(p) => p.act(state(sig)?),
            Policy::Ldc(p) => p.act(state(sig)?),
            Policy::Glc(p) => {
                let h = need(sig.states, "state", t + 1, kind)?;
                check_input(&p.m, &h[t], kind)?;
                Ok(history_sum(&p.m, h, t))
            }
            Policy::Dac(p) => p.act(sig, t),
            Policy::Drc(p) => {
                let h = need(sig.natures_y, "nature's y", t + 1, kind)?;
                check_input(&p.m, &h[t], kind)?;
                let u = history_sum(&p.m, h, t);
                Ok(match &p.offset {
                    Some(o) => u + o,
                    None => u,
                })
            }
        }
    }
}

fn check_input(m: &[Matrix], v: &Vector, _kind: &str) -> Result<()> {
    if m[0].ncols() != v.len() {
        return Err(Error::dim("policy input", m[0].ncols(), v.len()));
    }
    Ok(())
}

impl Controller for Policy {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Vector> {
        Policy::act(self, &Signals::from_context(ctx), ctx.t)
    }
}
