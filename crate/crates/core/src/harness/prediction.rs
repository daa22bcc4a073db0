//! Output prediction experiments behind the `filter` and `spectral`
//! subcommands: noisy rollouts of a scenario's observed system, predicted
//! online by the Kalman filter, a linear predictor and spectral filtering.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::config::ScenarioConfig;
use super::report::write_atomic;
use crate::error::{Error, Result};
use crate::filtering::{
    fit_linear_offline, kalman_step, load_or_build, spectral_basis, KalmanNoise, KalmanState, LinearPredictor,
    SpectralPredictor,
};
use crate::linalg::{fmt_f64, Matrix, Vector};
use crate::online::{Projection, StepSchedule};
use crate::seeds;

/// A noisy trace `x_{t+1} = A x_t + B u_t + w_t`, `y_t = C x_t + v_t`.
#[derive(Clone, Debug)]
pub struct Trace {
    pub ys: Vec<Vector>,
    pub us: Vec<Vector>,
}

fn gaussian<R: Rng>(rng: &mut R, n: usize, sigma: f64) -> Vector {
    Vector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    })
}

fn trace(config: &ScenarioConfig) -> Result<(Trace, crate::lds::LinearSystem)> {
    let sc = config.scenario()?;
    let sys = match &sc.observed {
        Some((s, _)) => s.clone(),
        None => sc.system.clone(),
    };
    let p = &config.prediction;
    if !(p.sigma_x >= 0.0 && p.sigma_y >= 0.0) {
        return Err(Error::config("noise scales must be nonnegative"));
    }
    let mut noise = seeds::stream(config.seed, "perturbation");
    let mut inputs = seeds::stream(config.seed, "inputs");
    let mut x = sc.x0.clone();
    let mut ys = Vec::with_capacity(config.horizon);
    let mut us = Vec::with_capacity(config.horizon);
    for t in 0..config.horizon {
        let y = sys.observe(&x, t)? + gaussian(&mut noise, sys.dy(), p.sigma_y);
        let u = Vector::from_fn(sys.du(), |_, _| {
            if p.excite {
                if inputs.random_bool(0.5) { 1.0 } else { -1.0 }
            } else {
                0.0
            }
        });
        let w = gaussian(&mut noise, sys.dx(), p.sigma_x);
        x = sys.step(&x, &u, &w, t)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("state diverged").at_step(t));
        }
        ys.push(y);
        us.push(u);
    }
    Ok((Trace { ys, us }, sys))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterSummary {
    pub scenario: String,
    pub seed: u64,
    pub horizon: usize,
    pub kalman_mse: f64,
    pub linear_mse: f64,
    pub offline_linear_mse: f64,
}

#[derive(Clone, Debug)]
pub struct FilterExperiment {
    pub summary: FilterSummary,
    pub kalman_errors: Vec<f64>,
    pub linear_errors: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn error_csv(columns: &[(&str, &[f64])]) -> String {
    let mut s = String::from("t");
    for (name, _) in columns {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    let n = columns.first().map_or(0, |c| c.1.len());
    for t in 0..n {
        s.push_str(&(t + 1).to_string());
        for (_, col) in columns {
            s.push(',');
            s.push_str(&fmt_f64(col[t]));
        }
        s.push('\n');
    }
    s
}

impl FilterExperiment {
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let csv = error_csv(&[("kalman_sq_err", &self.kalman_errors), ("linear_sq_err", &self.linear_errors)]);
        let files = [("prediction.csv", csv), ("summary.json", json(&self.summary)?)];
        files
            .into_iter()
            .map(|(name, body)| {
                let path = dir.join(name);
                write_atomic(&path, body.as_bytes())?;
                Ok(path)
            })
            .collect()
    }
}

/// One-step output prediction by the Kalman filter (with the true noise
/// covariances) and by an online linear predictor over `h` past outputs and
/// `k` past inputs.
pub fn run_filter_experiment(config: &ScenarioConfig) -> Result<FilterExperiment> {
    let inner = || -> Result<FilterExperiment> {
        let (tr, sys) = trace(config)?;
        let p = &config.prediction;
        let (dx, dy, du) = (sys.dx(), sys.dy(), sys.du());
        let noise = KalmanNoise::new(
            Matrix::identity(dx, dx) * p.sigma_x.powi(2),
            Matrix::identity(dy, dy) * p.sigma_y.powi(2),
        )?;
        let mut state = KalmanState::initial(&Matrix::identity(dx, dx))?;
        let mut lin = LinearPredictor::new(dy, du, p.h, p.k, StepSchedule::InvSqrt(p.eta), None)?;
        let mut kalman_errors = Vec::with_capacity(tr.ys.len());
        let mut linear_errors = Vec::with_capacity(tr.ys.len());
        for t in 0..tr.ys.len() {
            let m = sys.matrices(t)?;
            let c = sys.c_matrix(t)?;
            let y = &tr.ys[t];
            kalman_errors.push((y - state.predicted_observation(&c)).norm_squared());
            state = kalman_step(&state, &m.a, &m.b, &c, &noise, &tr.us[t], y)
                .map_err(|e| e.at_step(t))?
                .state;
            let (_, loss) = lin.learn_step(&tr.ys, &tr.us, t, y).map_err(|e| e.at_step(t))?;
            linear_errors.push(loss);
        }
        let offline = fit_linear_offline(&tr.ys, &tr.us, p.h, p.k)?.2;
        Ok(FilterExperiment {
            summary: FilterSummary {
                scenario: config.scenario()?.name.to_string(),
                seed: config.seed,
                horizon: config.horizon,
                kalman_mse: mean(&kalman_errors),
                linear_mse: mean(&linear_errors),
                offline_linear_mse: offline,
            },
            kalman_errors,
            linear_errors,
        })
    };
    inner().map_err(|e| e.context(config.label()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub scenario: String,
    pub seed: u64,
    pub horizon: usize,
    pub filters: usize,
    pub mse: f64,
    pub last_quarter_mse: f64,
}

#[derive(Clone, Debug)]
pub struct SpectralExperiment {
    pub summary: SpectralSummary,
    pub errors: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

impl SpectralExperiment {
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let csv = error_csv(&[("sq_err", &self.errors)]);
        let mut eig = String::from("j,sigma\n");
        for (j, s) in self.eigenvalues.iter().enumerate() {
            eig.push_str(&format!("{},{}\n", j + 1, fmt_f64(*s)));
        }
        let files = [("prediction.csv", csv), ("eigenvalues.csv", eig), ("summary.json", json(&self.summary)?)];
        files
            .into_iter()
            .map(|(name, body)| {
                let path = dir.join(name);
                write_atomic(&path, body.as_bytes())?;
                Ok(path)
            })
            .collect()
    }
}

/// Online spectral filtering of the scenario's output. The basis is cached
/// under `[prediction] cache` when set.
pub fn run_spectral_experiment(config: &ScenarioConfig) -> Result<SpectralExperiment> {
    let inner = || -> Result<SpectralExperiment> {
        let (tr, sys) = trace(config)?;
        let p = &config.prediction;
        let horizon = config.horizon.max(2);
        let basis = match &p.cache {
            Some(dir) => load_or_build(dir, horizon, p.filters)?,
            None => spectral_basis(horizon, p.filters)?,
        };
        let eigenvalues = basis.values.clone();
        let mut pred = SpectralPredictor::new(Arc::new(basis), sys.dy(), sys.du(), StepSchedule::Constant(p.eta), Projection::None)?;
        let mut errors = Vec::with_capacity(tr.ys.len());
        for t in 0..tr.ys.len() {
            let (_, loss) = pred.learn_step(&tr.ys, &tr.us, t, &tr.ys[t]).map_err(|e| e.at_step(t))?;
            errors.push(loss);
        }
        let q = errors.len() - errors.len() / 4;
        Ok(SpectralExperiment {
            summary: SpectralSummary {
                scenario: config.scenario()?.name.to_string(),
                seed: config.seed,
                horizon: config.horizon,
                filters: p.filters,
                mse: mean(&errors),
                last_quarter_mse: mean(&errors[q..]),
            },
            errors,
            eigenvalues,
        })
    };
    inner().map_err(|e| e.context(config.label()))
}
