use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub enum PerturbationKind {
    Zero,
    /// i.i.d. `N(0, sigma^2 I)`.
    Gaussian { sigma: f64 },
    /// i.i.d. uniform in the Euclidean ball of the given radius.
    UniformBall { radius: f64 },
    /// `w_t[i] = amplitude * sin(omega * t + phase[i])`; a short phase list is
    /// padded with zeros.
    Sinusoidal {
        amplitude: f64,
        omega: f64,
        phases: Vec<f64>,
    },
    Recorded(Vec<Vector>),
    Constant(Vector),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSource {
    pub kind: PerturbationKind,
    pub clip_to_unit_ball: bool,
    /// Maps a lower-dimensional disturbance into the state (`w = E d`).
    pub embedding: Option<Matrix>,
}

impl PerturbationSource {
    pub fn new(kind: PerturbationKind) -> Self {
        Self {
            kind,
            clip_to_unit_ball: false,
            embedding: None,
        }
    }

    pub fn embedded(mut self, map: Matrix) -> Self {
        self.embedding = Some(map);
        self
    }

    pub fn zero() -> Self {
        Self::new(PerturbationKind::Zero)
    }

    pub fn clipped(mut self) -> Self {
        self.clip_to_unit_ball = true;
        self
    }

    pub fn recorded(seq: Vec<Vector>) -> Self {
        Self::new(PerturbationKind::Recorded(seq))
    }

    /// Draws `w_t` of dimension `dim`. Random kinds consume the generator;
    /// deterministic kinds leave it untouched.
    pub fn sample<R: Rng + ?Sized>(&self, t: usize, dim: usize, rng: &mut R) -> Result<Vector> {
        let Some(map) = &self.embedding else {
            return self.sample_raw(t, dim, rng);
        };
        if map.nrows() != dim {
            return Err(Error::dim("perturbation embedding rows", dim, map.nrows()));
        }
        Ok(map * self.sample_raw(t, map.ncols(), rng)?)
    }

    fn sample_raw<R: Rng + ?Sized>(&self, t: usize, dim: usize, rng: &mut R) -> Result<Vector> {
        let mut w = match &self.kind {
            PerturbationKind::Zero => Vector::zeros(dim),
            PerturbationKind::Gaussian { sigma } => {
                Vector::from_fn(dim, |_, _| {
                    let z: f64 = StandardNormal.sample(rng);
                    sigma * z
                })
            }
            PerturbationKind::UniformBall { radius } => {
                let dir = Vector::from_fn(dim, |_, _| {
                    let z: f64 = StandardNormal.sample(rng);
                    z
                });
                let n = dir.norm();
                let r: f64 = rng.random::<f64>().powf(1.0 / dim as f64);
                if n == 0.0 {
                    Vector::zeros(dim)
                } else {
                    dir * (radius * r / n)
                }
            }
            PerturbationKind::Sinusoidal {
                amplitude,
                omega,
                phases,
            } => Vector::from_fn(dim, |i, _| {
                let phase = phases.get(i).copied().unwrap_or(0.0);
                amplitude * (omega * t as f64 + phase).sin()
            }),
            PerturbationKind::Recorded(seq) => {
                let w = seq.get(t).ok_or_else(|| {
                    Error::config(format!("recorded perturbation sequence has {} entries, step {t} requested", seq.len()))
                })?;
                if w.len() != dim {
                    return Err(Error::dim("recorded perturbation", dim, w.len()));
                }
                w.clone()
            }
            PerturbationKind::Constant(c) => {
                if c.len() != dim {
                    return Err(Error::dim("constant perturbation", dim, c.len()));
                }
                c.clone()
            }
        };
        if self.clip_to_unit_ball {
            let n = w.norm();
            if n > 1.0 {
                w /= n;
            }
        }
        Ok(w)
    }
}
