use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{flatten, fmt_f64, unflatten, Matrix, Vector};
use crate::online::{OgdState, Projection, StepSchedule};

/// Largest horizon handled by the dense eigensolver.
pub const DENSE_LIMIT: usize = 400;
const SUBSPACE_EXTRA: usize = 10;
const SUBSPACE_MAX_ITER: usize = 500;

/// `Z_T = int_0^1 mu_a mu_a^T da` with
/// `mu_a = [1, a-1, (a-1)a, ..., (a-1)a^{T-2}]`, entries in closed form.
pub fn build_z(horizon: usize) -> Result<Matrix> {
    if horizon < 2 {
        return Err(Error::config("Z_T needs T >= 2"));
    }
    Ok(Matrix::from_fn(horizon, horizon, z_entry))
}

fn z_entry(i: usize, j: usize) -> f64 {
    match (i, j) {
        (0, 0) => 1.0,
        (0, k) | (k, 0) => {
            let k = k as f64;
            1.0 / (k + 1.0) - 1.0 / k
        }
        _ => {
            // 1/(s+1) - 2/s + 1/(s-1) combined over a common denominator.
            let s = (i + j) as f64;
            2.0 / ((s - 1.0) * s * (s + 1.0))
        }
    }
}

/// Hilbert-type Hankel matrix `W[i][j] = 1/(i+j+1)`.
pub fn hankel_w(horizon: usize) -> Matrix {
    Matrix::from_fn(horizon, horizon, |i, j| 1.0 / (i + j + 1) as f64)
}

/// Top eigenpairs of `Z_T`; `vectors` is `T x h` with one filter per column.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    pub horizon: usize,
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SpectralBasis {
    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn filter(&self, j: usize) -> Vector {
        self.vectors.column(j).into_owned()
    }

    /// `T h`, then the eigenvalues on one line, then one eigenvector per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.horizon, self.count());
        let vals: Vec<String> = self.values.iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&vals.join(" "));
        s.push('\n');
        for j in 0..self.count() {
            let col: Vec<String> = self.vectors.column(j).iter().map(|&v| fmt_f64(v)).collect();
            s.push_str(&col.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| -> Result<&str> {
            tokens.next().ok_or_else(|| Error::Parse(format!("basis file ends before {what}")))
        };
        let horizon: usize = next("T")?.parse().map_err(|_| Error::Parse("bad basis horizon".into()))?;
        let count: usize = next("h")?.parse().map_err(|_| Error::Parse("bad basis count".into()))?;
        if count > horizon {
            return Err(Error::Parse(format!("basis count {count} exceeds horizon {horizon}")));
        }
        let mut num = |what: &str| -> Result<f64> {
            let tok = next(what)?;
            tok.parse().map_err(|_| Error::Parse(format!("bad number `{tok}` in basis file")))
        };
        let values = (0..count).map(|_| num("eigenvalues")).collect::<Result<Vec<_>>>()?;
        let mut vectors = Matrix::zeros(horizon, count);
        for j in 0..count {
            for i in 0..horizon {
                vectors[(i, j)] = num("eigenvectors")?;
            }
        }
        Ok(Self { horizon, values, vectors })
    }
}

/// Cache file for `(T, h)` inside `dir`.
pub fn cache_path(dir: &Path, horizon: usize, count: usize) -> PathBuf {
    dir.join(format!("spectral_T{horizon}_h{count}.txt"))
}

/// Reads the cached basis for `(T, h)` or builds and stores it.
pub fn load_or_build(dir: &Path, horizon: usize, count: usize) -> Result<SpectralBasis> {
    let path = cache_path(dir, horizon, count);
    if let Ok(text) = fs::read_to_string(&path) {
        let basis = SpectralBasis::from_text(&text)?;
        if basis.horizon == horizon && basis.count() == count {
            return Ok(basis);
        }
    }
    let basis = spectral_basis(horizon, count)?;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, basis.to_text())?;
    fs::rename(&tmp, &path)?;
    Ok(basis)
}

/// Flips each column so its first nonzero entry is positive.
fn normalize_signs(v: &mut Matrix) {
    for mut col in v.column_iter_mut() {
        let scale = col.amax();
        if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-12 * scale) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Eigenpairs sorted by decreasing eigenvalue, first `count` kept.
fn sorted_top(eig: SymmetricEigen<f64, nalgebra::Dyn>, count: usize) -> (Vec<f64>, Matrix) {
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order[..count].iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let mut vectors = Matrix::zeros(eig.eigenvectors.nrows(), count);
    for (dst, &k) in order[..count].iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// Top-`h` eigenpairs of `Z_T`, orthonormal and sign-normalized. Dense
/// solve up to [`DENSE_LIMIT`], block subspace iteration above it.
pub fn spectral_basis(horizon: usize, count: usize) -> Result<SpectralBasis> {
    if count > horizon {
        return Err(Error::config(format!("cannot take {count} filters from a horizon of {horizon}")));
    }
    let z = build_z(horizon)?;
    let (values, mut vectors) = if horizon <= DENSE_LIMIT {
        let eig = SymmetricEigen::try_new(z, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::numerical("symmetric eigensolver did not converge on Z_T"))?;
        sorted_top(eig, count)
    } else {
        subspace_iteration(&z, count)?
    };
    normalize_signs(&mut vectors);
    Ok(SpectralBasis {
        horizon,
        values,
        vectors,
    })
}

fn subspace_iteration(z: &Matrix, count: usize) -> Result<(Vec<f64>, Matrix)> {
    let n = z.nrows();
    let p = (count + SUBSPACE_EXTRA).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = Matrix::from_fn(n, p, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v
    });
    x = x.qr().q();
    let mut prev: Vec<f64> = vec![f64::INFINITY; count];
    for _ in 0..SUBSPACE_MAX_ITER {
        let y = z * &x;
        let q = y.qr().q();
        let h = q.transpose() * z * &q;
        let eig = SymmetricEigen::try_new(h, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::numerical("Rayleigh-Ritz eigensolve failed"))?;
        let (values, v) = sorted_top(eig, p);
        x = q * v;
        let top = values[0].max(f64::MIN_POSITIVE);
        let settled = values[..count].iter().zip(&prev).all(|(a, b)| (a - b).abs() <= 1e-15 * top);
        prev = values[..count].to_vec();
        if settled {
            return Ok((prev, x.columns(0, count).into_owned()));
        }
    }
    Err(Error::numerical("subspace iteration for the spectral basis did not settle"))
}

/// Improper predictor over the spectral filters:
/// `y_hat_t = y_{t-1} + M_0 u_{t-1} + sum_j M_j (phi_j^T u~_{t-1})`, where
/// `u~_{t-1} = [u_{t-1}, u_{t-2}, ..., u_{t-T}]` is zero-padded.
#[derive(Clone, Debug)]
pub struct SpectralPredictor {
    basis: Arc<SpectralBasis>,
    dy: usize,
    du: usize,
    ogd: OgdState,
}

impl SpectralPredictor {
    pub fn new(basis: Arc<SpectralBasis>, dy: usize, du: usize, schedule: StepSchedule, projection: Projection) -> Result<Self> {
        let n = (basis.count() + 1) * dy * du;
        let ogd = OgdState::new(vec![0.0; n], schedule, projection)?;
        Ok(Self { basis, dy, du, ogd })
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    /// `M_0` (pass-through) followed by one matrix per filter.
    pub fn parameters(&self) -> Vec<Matrix> {
        unflatten(&self.ogd.point, self.basis.count() + 1, self.dy, self.du)
    }

    pub fn set_parameters(&mut self, m: &[Matrix]) -> Result<()> {
        if m.len() != self.basis.count() + 1 || m.iter().any(|mi| mi.shape() != (self.dy, self.du)) {
            return Err(Error::config("spectral coefficients do not match the basis and dimensions"));
        }
        self.ogd.point = flatten(m);
        self.ogd.projection.project(&mut self.ogd.point);
        Ok(())
    }

    pub fn ogd(&self) -> &OgdState {
        &self.ogd
    }

    /// `[u_{t-1}, phi_1^T u~_{t-1}, ..., phi_h^T u~_{t-1}]`.
    pub fn features(&self, us: &[Vector], t: usize) -> Vec<Vector> {
        let mut out = vec![Vector::zeros(self.du); self.basis.count() + 1];
        if t == 0 {
            return out;
        }
        out[0].copy_from(&us[t - 1]);
        let depth = self.basis.horizon.min(t);
        for i in 0..depth {
            let u = &us[t - 1 - i];
            for (j, f) in out[1..].iter_mut().enumerate() {
                f.axpy(self.basis.vectors[(i, j)], u, 1.0);
            }
        }
        out
    }

    pub fn predict(&self, ys: &[Vector], us: &[Vector], t: usize) -> Vector {
        let mut y = if t == 0 { Vector::zeros(self.dy) } else { ys[t - 1].clone() };
        for (m, f) in self.parameters().iter().zip(self.features(us, t)) {
            y += m * f;
        }
        y
    }

    pub fn loss_and_gradient(&self, ys: &[Vector], us: &[Vector], t: usize, y: &Vector) -> (f64, Vec<f64>) {
        let err = y - self.predict(ys, us, t);
        let grads: Vec<Matrix> = self.features(us, t).iter().map(|f| &err * f.transpose() * -2.0).collect();
        (err.norm_squared(), flatten(&grads))
    }

    /// Predicts `y_t`, pays the squared loss and takes one OGD step.
    pub fn learn_step(&mut self, ys: &[Vector], us: &[Vector], t: usize, y: &Vector) -> Result<(Vector, f64)> {
        let y_hat = self.predict(ys, us, t);
        let (loss, grad) = self.loss_and_gradient(ys, us, t, y);
        self.ogd.update(&grad)?;
        Ok((y_hat, loss))
    }
}
