//! Best fixed policies in hindsight on a recorded perturbation sequence.
//!
//! DAC and DRC policies are linear in their parameters, so the total cost is
//! convex in them. For quadratic costs the total is an explicit quadratic
//! built from one basis rollout and minimized exactly or by accelerated
//! projected gradient; other costs use projected gradient descent with
//! backtracking on exact rollouts, with gradients from the adjoint recursion.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::lds::{CostFunction, LinearSystem, QuadraticCost};
use crate::linalg::{unflatten, Matrix, Vector};
use crate::online::Projection;
use crate::optimal::{dare_solve, lqr_finite_varying, LqrStage};
use crate::policies::Stabilizer;
use crate::seeds;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptConfig {
    pub max_iter: usize,
    /// Stop once the projected gradient norm falls below this.
    pub tol: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ComparatorResult {
    /// `M_1..M_h` for DAC, `M_0..M_h` for DRC.
    pub params: Vec<Matrix>,
    pub costs: Vec<f64>,
    pub total_cost: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub warning: Option<String>,
}

impl ComparatorResult {
    pub fn converged(&self) -> bool {
        self.warning.is_none()
    }
}

struct Stage {
    a: Matrix,
    b: Matrix,
    c: Option<Matrix>,
    k: Option<Matrix>,
}

/// Total cost of `u_t = K_t x_t + sum_i M_i f_{t,i}` as a function of the
/// flattened `M`.
struct Problem<'a> {
    stages: Vec<Stage>,
    cost: &'a CostFunction,
    ws: &'a [Vector],
    x0: Vector,
    /// `features[t][i]`.
    features: Vec<Vec<Vector>>,
    du: usize,
    df: usize,
}

struct Rollout {
    states: Vec<Vector>,
    signals: Vec<Vector>,
    controls: Vec<Vector>,
    costs: Vec<f64>,
}

impl Problem<'_> {
    fn blocks(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }

    fn dim(&self) -> usize {
        self.blocks() * self.du * self.df
    }

    fn action(&self, m: &[f64], t: usize) -> Vector {
        let mut u = Vector::zeros(self.du);
        let block = self.du * self.df;
        for (i, f) in self.features[t].iter().enumerate() {
            let mi = &m[i * block..(i + 1) * block];
            for r in 0..self.du {
                u[r] += (0..self.df).map(|c| mi[r * self.df + c] * f[c]).sum::<f64>();
            }
        }
        u
    }

    fn signal(&self, t: usize, x: &Vector) -> Vector {
        match &self.stages[t].c {
            Some(c) => c * x,
            None => x.clone(),
        }
    }

    fn rollout(&self, m: &[f64]) -> Rollout {
        let horizon = self.ws.len();
        let mut out = Rollout {
            states: Vec::with_capacity(horizon + 1),
            signals: Vec::with_capacity(horizon),
            controls: Vec::with_capacity(horizon),
            costs: Vec::with_capacity(horizon),
        };
        let mut x = self.x0.clone();
        for t in 0..horizon {
            let st = &self.stages[t];
            let mut u = self.action(m, t);
            if let Some(k) = &st.k {
                u += k * &x;
            }
            let v = self.signal(t, &x);
            out.costs.push(self.cost.eval(t, &v, &u));
            let next = &st.a * &x + &st.b * &u + &self.ws[t];
            out.states.push(x);
            out.signals.push(v);
            out.controls.push(u);
            x = next;
        }
        out.states.push(x);
        out
    }

    fn value(&self, m: &[f64]) -> f64 {
        let total: f64 = self.rollout(m).costs.iter().sum();
        if total.is_finite() {
            total
        } else {
            f64::INFINITY
        }
    }

    /// Total cost and its gradient by the adjoint recursion
    /// `p_t = C^T g_v + K^T d_t + A^T p_{t+1}`, `d_t = g_u + B^T p_{t+1}`.
    fn value_and_gradient(&self, m: &[f64]) -> (f64, Vec<f64>) {
        let ro = self.rollout(m);
        let mut grad = vec![0.0; self.dim()];
        let block = self.du * self.df;
        let mut p = Vector::zeros(self.x0.len());
        for t in (0..self.ws.len()).rev() {
            let st = &self.stages[t];
            let (gv, gu) = self.cost.grad(t, &ro.signals[t], &ro.controls[t]);
            let d = gu + st.b.transpose() * &p;
            for (i, f) in self.features[t].iter().enumerate() {
                for r in 0..self.du {
                    for c in 0..self.df {
                        grad[i * block + r * self.df + c] += d[r] * f[c];
                    }
                }
            }
            let mut next = st.a.transpose() * &p;
            next += match &st.c {
                Some(c) => c.transpose() * gv,
                None => gv,
            };
            if let Some(k) = &st.k {
                next += k.transpose() * &d;
            }
            p = next;
        }
        let total: f64 = ro.costs.iter().sum();
        (if total.is_finite() { total } else { f64::INFINITY }, grad)
    }

    /// `J(m) = m^T H m / 2 + g^T m + c`, from the rollout at `m = 0` plus one
    /// rollout of the response to every parameter at once.
    fn quadratic(&self, q: &QuadraticCost) -> (Matrix, Vector, f64) {
        let n = self.dim();
        let block = self.du * self.df;
        let base = self.rollout(&vec![0.0; n]);
        let mut h = Matrix::zeros(n, n);
        let mut g = Vector::zeros(n);
        let mut x = Matrix::zeros(self.x0.len(), n);
        for t in 0..self.ws.len() {
            let st = &self.stages[t];
            let mut u = Matrix::zeros(self.du, n);
            for (i, f) in self.features[t].iter().enumerate() {
                for r in 0..self.du {
                    for c in 0..self.df {
                        u[(r, i * block + r * self.df + c)] = f[c];
                    }
                }
            }
            if let Some(k) = &st.k {
                u += k * &x;
            }
            let v = match &st.c {
                Some(c) => c * &x,
                None => x.clone(),
            };
            let qv = &q.q * &v;
            let ru = &q.r * &u;
            h += (v.transpose() * &qv + u.transpose() * &ru) * 2.0;
            let e = &base.signals[t] - &q.target;
            g += (qv.transpose() * e + ru.transpose() * &base.controls[t]) * 2.0;
            x = &st.a * &x + &st.b * &u;
        }
        (h, g, base.costs.iter().sum())
    }
}

fn stages(system: &LinearSystem, stabilizer: Option<&Stabilizer>, horizon: usize, observe: bool) -> Result<Vec<Stage>> {
    (0..horizon)
        .map(|t| {
            let m = system.matrices(t)?;
            Ok(Stage {
                a: m.a.clone(),
                b: m.b.clone(),
                c: if observe { m.c.clone() } else { None },
                k: stabilizer.map(|s| s.gain(t)),
            })
        })
        .collect()
}

fn check_record(system: &LinearSystem, ws: &[Vector], x0: &Vector) -> Result<()> {
    if ws.is_empty() {
        return Err(Error::config("comparator needs a non-empty perturbation record"));
    }
    if x0.len() != system.dx() {
        return Err(Error::dim("comparator initial state", system.dx(), x0.len()));
    }
    if let Some(w) = ws.iter().find(|w| w.len() != system.dx()) {
        return Err(Error::dim("recorded perturbation", system.dx(), w.len()));
    }
    Ok(())
}

/// Best `u_t = K_t x_t + sum_{i=1}^{h} M_i w_{t-i}` with fixed `M` in the
/// projection set, on the recorded `ws` started from `x0`.
#[allow(clippy::too_many_arguments)]
pub fn best_dac_in_hindsight(
    system: &LinearSystem,
    stabilizer: &Stabilizer,
    cost: &CostFunction,
    ws: &[Vector],
    x0: &Vector,
    window: usize,
    projection: &Projection,
    config: &OptConfig,
) -> Result<ComparatorResult> {
    check_record(system, ws, x0)?;
    if window == 0 {
        return Err(Error::config("DAC window must be at least 1"));
    }
    let (dx, du) = (system.dx(), system.du());
    cost.check_dims(dx, du)?;
    let features = (0..ws.len())
        .map(|t| {
            (1..=window)
                .map(|i| if t >= i { ws[t - i].clone() } else { Vector::zeros(dx) })
                .collect()
        })
        .collect();
    let problem = Problem {
        stages: stages(system, Some(stabilizer), ws.len(), false)?,
        cost,
        ws,
        x0: x0.clone(),
        features,
        du,
        df: dx,
    };
    solve(&problem, window, projection, config)
}

/// Best `u_t = sum_{j=0}^{h} M_j ynat_{t-j}` on the observed system, with the
/// cost charged on the output.
#[allow(clippy::too_many_arguments)]
pub fn best_drc_in_hindsight(
    system: &LinearSystem,
    cost: &CostFunction,
    ws: &[Vector],
    x0: &Vector,
    window: usize,
    projection: &Projection,
    config: &OptConfig,
) -> Result<ComparatorResult> {
    check_record(system, ws, x0)?;
    let (dy, du) = (system.dy(), system.du());
    cost.check_dims(dy, du)?;
    let stages = stages(system, None, ws.len(), true)?;
    // Nature's y: the output with every control held at zero.
    let mut ynat = Vec::with_capacity(ws.len());
    let mut x = x0.clone();
    for (t, w) in ws.iter().enumerate() {
        ynat.push(match &stages[t].c {
            Some(c) => c * &x,
            None => x.clone(),
        });
        x = &stages[t].a * &x + w;
    }
    let features = (0..ws.len())
        .map(|t| {
            (0..=window)
                .map(|j| if t >= j { ynat[t - j].clone() } else { Vector::zeros(dy) })
                .collect()
        })
        .collect();
    let problem = Problem {
        stages,
        cost,
        ws,
        x0: x0.clone(),
        features,
        du,
        df: dy,
    };
    solve(&problem, window + 1, projection, config)
}

fn solve(problem: &Problem<'_>, blocks: usize, projection: &Projection, config: &OptConfig) -> Result<ComparatorResult> {
    let (m, iterations, grad_norm, warning) = match problem.cost.as_quadratic() {
        Some(q) => {
            let (h, g, _) = problem.quadratic(q);
            minimize_quadratic(&h, &g, projection, config)?
        }
        None => minimize_general(problem, projection, config)?,
    };
    let costs = problem.rollout(&m).costs;
    let total_cost = costs.iter().sum();
    if !f64::is_finite(total_cost) {
        return Err(Error::numerical("comparator rollout diverged"));
    }
    Ok(ComparatorResult {
        params: unflatten(&m, blocks, problem.du, problem.df),
        costs,
        total_cost,
        iterations,
        grad_norm,
        warning,
    })
}

type Solution = (Vec<f64>, usize, f64, Option<String>);

/// Norm of the gradient mapping `(m - P(m - g / L)) L`.
fn mapping_norm(m: &[f64], grad: &[f64], projection: &Projection, lip: f64) -> f64 {
    let mut y: Vec<f64> = m.iter().zip(grad).map(|(a, g)| a - g / lip).collect();
    projection.project(&mut y);
    m.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() * lip
}

fn minimize_quadratic(h: &Matrix, g: &Vector, projection: &Projection, config: &OptConfig) -> Result<Solution> {
    let n = g.len();
    let eig = SymmetricEigen::new(crate::linalg::symmetrize(h));
    let lip = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    if !lip.is_finite() {
        return Err(Error::numerical("comparator objective is not finite"));
    }
    let grad_at = |m: &Vector| h * m + g;
    if lip <= 0.0 {
        // Flat objective: the origin is as good as anything.
        let m = vec![0.0; n];
        let gn = g.norm();
        let warning = (gn > config.tol).then(|| format!("objective is linear, gradient norm {gn:e}"));
        return Ok((m, 0, gn, warning));
    }
    let cutoff = lip * 1e-12;
    // Minimum-norm unconstrained minimizer in the eigenbasis.
    let coeffs = eig.eigenvectors.transpose() * g;
    let shifted = |lambda: f64| -> Vector {
        let scaled = Vector::from_fn(n, |i, _| {
            let d = eig.eigenvalues[i] + lambda;
            if d > cutoff { -coeffs[i] / d } else { 0.0 }
        });
        &eig.eigenvectors * scaled
    };
    let free = shifted(0.0);
    let mut flat: Vec<f64> = free.iter().copied().collect();
    let finish = |m: Vec<f64>, iterations: usize| -> Solution {
        let grad = grad_at(&Vector::from_column_slice(&m));
        let gn = mapping_norm(&m, grad.as_slice(), projection, lip);
        let warning = (gn > config.tol.max(1e-10 * (1.0 + grad.norm())))
            .then(|| format!("stopped after {iterations} iterations with projected gradient norm {gn:e}"));
        (m, iterations, gn, warning)
    };
    if projection.contains(&flat) {
        return Ok(finish(flat, 0));
    }
    if let Projection::Ball(r) = projection {
        // ||m(lambda)|| decreases in lambda; bisect for the boundary.
        let (mut lo, mut hi) = (0.0, g.norm() / r + lip);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if shifted(mid).norm() > *r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        flat = shifted(hi).iter().copied().collect();
        projection.project(&mut flat);
        return Ok(finish(flat, 200));
    }
    // Accelerated projected gradient with step 1/L.
    let mut m = vec![0.0; n];
    let mut y = m.clone();
    let mut theta = 1.0f64;
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        let grad = grad_at(&Vector::from_column_slice(&y));
        let mut next: Vec<f64> = y.iter().zip(grad.iter()).map(|(a, b)| a - b / lip).collect();
        projection.project(&mut next);
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        y = next.iter().zip(&m).map(|(a, b)| a + beta * (a - b)).collect();
        m = next;
        theta = theta_next;
        let gm = grad_at(&Vector::from_column_slice(&m));
        if mapping_norm(&m, gm.as_slice(), projection, lip) <= config.tol {
            break;
        }
    }
    Ok(finish(m, iterations))
}

/// Projected gradient descent with Armijo backtracking.
fn minimize_general(problem: &Problem<'_>, projection: &Projection, config: &OptConfig) -> Result<Solution> {
    let n = problem.dim();
    let mut m = vec![0.0; n];
    let (mut f, mut grad) = problem.value_and_gradient(&m);
    if !f.is_finite() {
        return Err(Error::numerical("comparator cost is not finite at the origin"));
    }
    let mut step = 1.0 / (1.0 + l2(&grad));
    let mut iterations = 0;
    let mut gn = f64::INFINITY;
    while iterations < config.max_iter {
        iterations += 1;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = m.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            projection.project(&mut trial);
            let moved: f64 = trial.iter().zip(&m).zip(&grad).map(|((a, b), g)| g * (b - a)).sum();
            let ft = problem.value(&trial);
            if ft <= f - 1e-4 * moved {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft)) = accepted else { break };
        let dist = l2(&trial.iter().zip(&m).map(|(a, b)| a - b).collect::<Vec<_>>());
        gn = dist / step;
        m = trial;
        f = ft;
        grad = problem.value_and_gradient(&m).1;
        if gn <= config.tol {
            break;
        }
        step *= 2.0;
    }
    let warning = (gn > config.tol)
        .then(|| format!("stopped after {iterations} iterations with projected gradient norm {gn:e}"));
    Ok((m, iterations, gn, warning))
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
pub struct LinearComparator {
    pub gain: Matrix,
    pub costs: Vec<f64>,
    pub total_cost: f64,
    /// Which start the best gain came from.
    pub start: &'static str,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Total cost of `u_t = K x_t` on the recorded sequence, with its gradient in
/// `K`. Unstable gains give an infinite cost.
pub fn linear_policy_cost(system: &LinearSystem, cost: &CostFunction, ws: &[Vector], x0: &Vector, k: &Matrix) -> Result<(f64, Matrix, Vec<f64>)> {
    check_record(system, ws, x0)?;
    let st = stages(system, None, ws.len(), false)?;
    Ok(linear_cost(&st, cost, ws, x0, k))
}

fn linear_cost(stages: &[Stage], cost: &CostFunction, ws: &[Vector], x0: &Vector, k: &Matrix) -> (f64, Matrix, Vec<f64>) {
    let mut xs = Vec::with_capacity(ws.len() + 1);
    let mut costs = Vec::with_capacity(ws.len());
    let mut x = x0.clone();
    for (t, w) in ws.iter().enumerate() {
        let u = k * &x;
        costs.push(cost.eval(t, &x, &u));
        let next = &stages[t].a * &x + &stages[t].b * &u + w;
        xs.push(x);
        x = next;
    }
    let total: f64 = costs.iter().sum();
    if !total.is_finite() {
        return (f64::INFINITY, Matrix::zeros(k.nrows(), k.ncols()), costs);
    }
    let mut grad = Matrix::zeros(k.nrows(), k.ncols());
    let mut p = Vector::zeros(x0.len());
    for t in (0..ws.len()).rev() {
        let u = k * &xs[t];
        let (gx, gu) = cost.grad(t, &xs[t], &u);
        let d = gu + stages[t].b.transpose() * &p;
        grad.ger(1.0, &d, &xs[t], 1.0);
        p = gx + k.transpose() * &d + stages[t].a.transpose() * &p;
    }
    (total, grad, costs)
}

/// Local search over fixed gains `u = K x`, started from the LQR gain, from
/// zero and from two random perturbations of the LQR gain. The objective is
/// not convex in `K`, so the result is the best local minimum found.
pub fn best_linear_in_hindsight(
    system: &LinearSystem,
    cost: &CostFunction,
    ws: &[Vector],
    x0: &Vector,
    config: &OptConfig,
    seed: u64,
) -> Result<LinearComparator> {
    use rand_distr::{Distribution, StandardNormal};

    check_record(system, ws, x0)?;
    let (dx, du) = (system.dx(), system.du());
    cost.check_dims(dx, du)?;
    let st = stages(system, None, ws.len(), false)?;
    let lqr = default_stabilizer(system, cost, ws.len())?.gain(0);
    let mut rng = seeds::stream(seed, "comparator");
    let scale = 0.1 * (lqr.norm() + 0.1);
    let mut jitter = || {
        let z = Matrix::from_fn(du, dx, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let n = z.norm();
        if n > 0.0 { z * (scale / n) } else { z }
    };
    let (j1, j2) = (jitter(), jitter());
    let starts: [(&'static str, Matrix); 4] = [
        ("lqr", lqr.clone()),
        ("zero", Matrix::zeros(du, dx)),
        ("lqr+", &lqr + j1),
        ("lqr-", &lqr - j2),
    ];
    let per_start = (config.max_iter / starts.len()).max(1);
    let searched = crate::par::map(&starts, |(_, k0)| armijo_gain(&st, cost, ws, x0, k0.clone(), per_start, config.tol));
    let mut best: Option<LinearComparator> = None;
    for ((name, _), (k, f, iterations, gn)) in starts.into_iter().zip(searched) {
        if !f.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| f < b.total_cost) {
            let costs = linear_cost(&st, cost, ws, x0, &k).2;
            best = Some(LinearComparator {
                gain: k,
                costs,
                total_cost: f,
                start: name,
                iterations,
                grad_norm: gn,
            });
        }
    }
    best.ok_or_else(|| Error::numerical("every linear start diverged on the recorded sequence"))
}

fn armijo_gain(
    st: &[Stage],
    cost: &CostFunction,
    ws: &[Vector],
    x0: &Vector,
    mut k: Matrix,
    max_iter: usize,
    tol: f64,
) -> (Matrix, f64, usize, f64) {
    let (mut f, mut grad, _) = linear_cost(st, cost, ws, x0, &k);
    if !f.is_finite() {
        return (k, f, 0, f64::INFINITY);
    }
    let mut step = 1.0 / (1.0 + grad.norm());
    let mut iterations = 0;
    while iterations < max_iter && grad.norm() > tol {
        iterations += 1;
        let g2 = grad.norm_squared();
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &k - &grad * step;
            let (ft, gt, _) = linear_cost(st, cost, ws, x0, &trial);
            if ft <= f - 1e-4 * step * g2 {
                k = trial;
                f = ft;
                grad = gt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    let gn = grad.norm();
    (k, f, iterations, gn)
}

/// Stabilizing gains for GPC: the DARE gain on time-invariant systems,
/// finite-horizon LQR gains when the system varies or the DARE has no
/// stabilizing solution.
pub fn default_stabilizer(system: &LinearSystem, cost: &CostFunction, horizon: usize) -> Result<Stabilizer> {
    let (dx, du) = (system.dx(), system.du());
    let (q, r) = match cost.as_quadratic() {
        Some(c) => (c.q.clone(), c.r.clone()),
        None => (Matrix::identity(dx, dx), Matrix::identity(du, du)),
    };
    if system.is_time_invariant() {
        let m = system.matrices(0)?;
        if let Ok(sol) = dare_solve(&m.a, &m.b, &q, &r, 1e-10, 100_000) {
            return Ok(Stabilizer::Fixed(sol.k));
        }
    }
    let table = (0..horizon.max(1))
        .map(|t| system.matrices(t).map(|m| m.into_owned()))
        .collect::<Result<Vec<_>>>()?;
    let sol = lqr_finite_varying(
        |t| LqrStage {
            a: table[t].a.clone(),
            b: table[t].b.clone(),
            q: q.clone(),
            r: r.clone(),
        },
        table.len(),
        0.0,
    )?;
    Ok(Stabilizer::Varying(std::sync::Arc::new(move |t| sol.gain(t).clone())))
}
