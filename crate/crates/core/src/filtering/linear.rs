use crate::error::{Error, Result};
use crate::linalg::{flatten, unflatten, Matrix, Vector};
use crate::online::{OgdState, Projection, StepSchedule};

/// `y_hat_t = sum_{i=1}^{h} M1_i y_{t-i} + sum_{j=1}^{k} M2_j u_{t-j}`,
/// learned by projected OGD on the squared prediction error.
#[derive(Clone, Debug)]
pub struct LinearPredictor {
    dy: usize,
    du: usize,
    h: usize,
    k: usize,
    ogd: OgdState,
}

/// Entry `t - lag` of `hist`, zero before the start.
fn lagged(hist: &[Vector], t: usize, lag: usize) -> Option<&Vector> {
    if lag > t {
        return None;
    }
    hist.get(t - lag)
}

impl LinearPredictor {
    /// `kappa` bounds the summed Frobenius norms of all coefficient blocks.
    pub fn new(dy: usize, du: usize, h: usize, k: usize, schedule: StepSchedule, kappa: Option<f64>) -> Result<Self> {
        if h + k == 0 {
            return Err(Error::config("linear predictor needs at least one lag"));
        }
        let mut sizes = vec![dy * dy; h];
        sizes.extend(std::iter::repeat_n(dy * du, k));
        let projection = match kappa {
            Some(budget) => Projection::Groups { sizes, budget },
            None => Projection::None,
        };
        let ogd = OgdState::new(vec![0.0; h * dy * dy + k * dy * du], schedule, projection)?;
        Ok(Self { dy, du, h, k, ogd })
    }

    /// Returns `(M1_1..M1_h, M2_1..M2_k)`.
    pub fn parameters(&self) -> (Vec<Matrix>, Vec<Matrix>) {
        let split = self.h * self.dy * self.dy;
        (
            unflatten(&self.ogd.point[..split], self.h, self.dy, self.dy),
            unflatten(&self.ogd.point[split..], self.k, self.dy, self.du),
        )
    }

    pub fn set_parameters(&mut self, m1: &[Matrix], m2: &[Matrix]) -> Result<()> {
        if m1.len() != self.h
            || m2.len() != self.k
            || m1.iter().any(|m| m.shape() != (self.dy, self.dy))
            || m2.iter().any(|m| m.shape() != (self.dy, self.du))
        {
            return Err(Error::config("predictor coefficients do not match its lags and dimensions"));
        }
        let mut flat = flatten(m1);
        flat.extend(flatten(m2));
        self.ogd.point = flat;
        self.ogd.projection.project(&mut self.ogd.point);
        Ok(())
    }

    pub fn ogd(&self) -> &OgdState {
        &self.ogd
    }

    /// Prediction of `y_t` from `ys[..t]` and `us[..t]` (longer histories are
    /// fine; only earlier entries are read).
    pub fn predict(&self, ys: &[Vector], us: &[Vector], t: usize) -> Vector {
        let (m1, m2) = self.parameters();
        predict_with(&m1, &m2, ys, us, t, self.dy)
    }

    /// Squared error at `t` and its gradient in the flat parameter layout.
    pub fn loss_and_gradient(&self, ys: &[Vector], us: &[Vector], t: usize, y: &Vector) -> (f64, Vec<f64>) {
        let err = y - self.predict(ys, us, t);
        let mut grad = Vec::with_capacity(self.ogd.point.len());
        let mut push = |v: Option<&Vector>, cols: usize| {
            for r in 0..self.dy {
                for c in 0..cols {
                    grad.push(v.map_or(0.0, |v| -2.0 * err[r] * v[c]));
                }
            }
        };
        for i in 1..=self.h {
            push(lagged(ys, t, i), self.dy);
        }
        for j in 1..=self.k {
            push(lagged(us, t, j), self.du);
        }
        (err.norm_squared(), grad)
    }

    /// Predicts `y_t`, pays the squared loss against the revealed `y` and
    /// takes one OGD step. Returns `(y_hat, loss)`.
    pub fn learn_step(&mut self, ys: &[Vector], us: &[Vector], t: usize, y: &Vector) -> Result<(Vector, f64)> {
        let y_hat = self.predict(ys, us, t);
        let (loss, grad) = self.loss_and_gradient(ys, us, t, y);
        self.ogd.update(&grad)?;
        Ok((y_hat, loss))
    }
}

fn predict_with(m1: &[Matrix], m2: &[Matrix], ys: &[Vector], us: &[Vector], t: usize, dy: usize) -> Vector {
    let mut out = Vector::zeros(dy);
    for (i, m) in m1.iter().enumerate() {
        if let Some(y) = lagged(ys, t, i + 1) {
            out += m * y;
        }
    }
    for (j, m) in m2.iter().enumerate() {
        if let Some(u) = lagged(us, t, j + 1) {
            out += m * u;
        }
    }
    out
}

/// Offline least-squares fit of the same predictor class over a whole trace
/// (steps `t >= 1`). Returns the coefficients and the mean squared error.
pub fn fit_linear_offline(ys: &[Vector], us: &[Vector], h: usize, k: usize) -> Result<(Vec<Matrix>, Vec<Matrix>, f64)> {
    let n = ys.len();
    if n < 2 {
        return Err(Error::config("offline fit needs at least two observations"));
    }
    let dy = ys[0].len();
    let du = us.first().map_or(0, |u| u.len());
    let width = h * dy + k * du;
    let rows = n - 1;
    let mut x = Matrix::zeros(rows, width);
    let mut y = Matrix::zeros(rows, dy);
    for t in 1..n {
        let r = t - 1;
        let mut col = 0;
        for i in 1..=h {
            if let Some(v) = lagged(ys, t, i) {
                x.view_mut((r, col), (1, dy)).copy_from(&v.transpose());
            }
            col += dy;
        }
        for j in 1..=k {
            if let Some(v) = lagged(us, t, j) {
                x.view_mut((r, col), (1, du)).copy_from(&v.transpose());
            }
            col += du;
        }
        y.row_mut(r).copy_from(&ys[t].transpose());
    }
    let theta = crate::linalg::pinv(&x) * &y;
    let mse = (&y - &x * &theta).norm_squared() / rows as f64;
    let coef = theta.transpose();
    let m1 = (0..h).map(|i| coef.columns(i * dy, dy).into_owned()).collect();
    let m2 = (0..k).map(|j| coef.columns(h * dy + j * du, du).into_owned()).collect();
    Ok((m1, m2, mse))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_predictor_pays_full_norm() {
        let p = LinearPredictor::new(2, 1, 2, 2, StepSchedule::Constant(0.1), None).unwrap();
        let ys = vec![Vector::from_vec(vec![1.0, 2.0]); 3];
        let us = vec![Vector::from_vec(vec![1.0]); 3];
        let y = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(p.predict(&ys, &us, 2), Vector::zeros(2));
        assert_eq!(p.loss_and_gradient(&ys, &us, 2, &y).0, 25.0);
    }

    #[test]
    fn parameters_round_trip_and_budget() {
        let mut p = LinearPredictor::new(1, 2, 1, 1, StepSchedule::Constant(0.1), Some(1.0)).unwrap();
        p.set_parameters(&[Matrix::from_element(1, 1, 3.0)], &[Matrix::from_row_slice(1, 2, &[0.0, 4.0])]).unwrap();
        let (m1, m2) = p.parameters();
        let total = m1[0].norm() + m2[0].norm();
        assert!(total <= 1.0 + 1e-12);
        assert!(p.set_parameters(&[], &[]).is_err());
    }

    #[test]
    fn offline_fit_recovers_exact_recursion() {
        let mut ys = vec![Vector::from_element(1, 1.0)];
        let us: Vec<Vector> = (0..50).map(|t| Vector::from_element(1, ((t * 7) % 5) as f64 - 2.0)).collect();
        for t in 1..50 {
            let y = 0.5 * ys[t - 1][0] + 2.0 * us[t - 1][0];
            ys.push(Vector::from_element(1, y));
        }
        let (m1, m2, mse) = fit_linear_offline(&ys, &us, 1, 1).unwrap();
        assert!((m1[0][(0, 0)] - 0.5).abs() < 1e-10 && (m2[0][(0, 0)] - 2.0).abs() < 1e-10);
        assert!(mse < 1e-20);
    }
}
