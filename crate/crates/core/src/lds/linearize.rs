use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference Jacobians `(df/dx, df/du)` of `x_{t+1} = f(x, u)` at
/// `(x_bar, u_bar)`.
pub fn linearize<F>(f: F, x_bar: &Vector, u_bar: &Vector, fd_step: f64) -> Result<(Matrix, Matrix)>
where
    F: Fn(&Vector, &Vector) -> Vector,
{
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::config(format!("finite-difference step must be positive, got {fd_step}")));
    }
    let f0 = f(x_bar, u_bar);
    check(&f0)?;
    let n = f0.len();
    let mut a = Matrix::zeros(n, x_bar.len());
    for j in 0..x_bar.len() {
        let (mut xp, mut xm) = (x_bar.clone(), x_bar.clone());
        xp[j] += fd_step;
        xm[j] -= fd_step;
        let col = central(&f(&xp, u_bar), &f(&xm, u_bar), fd_step)?;
        a.set_column(j, &col);
    }
    let mut b = Matrix::zeros(n, u_bar.len());
    for j in 0..u_bar.len() {
        let (mut up, mut um) = (u_bar.clone(), u_bar.clone());
        up[j] += fd_step;
        um[j] -= fd_step;
        let col = central(&f(x_bar, &up), &f(x_bar, &um), fd_step)?;
        b.set_column(j, &col);
    }
    Ok((a, b))
}

fn check(v: &Vector) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical("dynamics evaluation returned a non-finite value"))
    }
}

fn central(plus: &Vector, minus: &Vector, h: f64) -> Result<Vector> {
    check(plus)?;
    check(minus)?;
    Ok((plus - minus) / (2.0 * h))
}
