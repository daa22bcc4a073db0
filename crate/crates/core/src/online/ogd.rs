use crate::error::{Error, Result};

/// Step size `eta_t` for the `t`-th update (1-based).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `c / sqrt(t)`; with `c = D / G` this is the textbook schedule.
    InvSqrt(f64),
    /// `c / sqrt(T)` for a horizon known in advance.
    FixedHorizon { c: f64, horizon: usize },
}

impl StepSchedule {
    pub fn eta(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant(eta) => eta,
            StepSchedule::InvSqrt(c) => c / (t.max(1) as f64).sqrt(),
            StepSchedule::FixedHorizon { c, horizon } => c / (horizon.max(1) as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Projection {
    None,
    /// Euclidean ball of the given radius around the origin.
    Ball(f64),
    /// `sum_b ||x_b||_2 <= budget` over consecutive blocks of `block_len`
    /// entries.
    BlockBudget { block_len: usize, budget: f64 },
    /// Same as `BlockBudget` with consecutive groups of the given sizes.
    Groups { sizes: Vec<usize>, budget: f64 },
}

impl Projection {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Projection::None => true,
            Projection::Ball(r) => norm(x) <= r * (1.0 + 1e-12),
            Projection::BlockBudget { block_len, budget } => {
                x.chunks(*block_len).map(norm).sum::<f64>() <= budget * (1.0 + 1e-12)
            }
            Projection::Groups { sizes, budget } => {
                groups(x, sizes).iter().map(|g| norm(g)).sum::<f64>() <= budget * (1.0 + 1e-12)
            }
        }
    }

    pub fn project(&self, x: &mut [f64]) {
        match self {
            Projection::None => {}
            Projection::Ball(r) => {
                let n = norm(x);
                if n > *r {
                    let s = r / n;
                    x.iter_mut().for_each(|v| *v *= s);
                }
            }
            Projection::BlockBudget { block_len, budget } => {
                let sizes = vec![*block_len; x.len().div_ceil((*block_len).max(1))];
                project_groups(x, &sizes, *budget);
            }
            Projection::Groups { sizes, budget } => project_groups(x, sizes, *budget),
        }
    }
}

/// Splits `x` into consecutive groups; the last one takes any remainder.
fn groups<'a>(x: &'a [f64], sizes: &[usize]) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut rest = x;
    for &s in sizes {
        let (head, tail) = rest.split_at(s.min(rest.len()));
        out.push(head);
        rest = tail;
    }
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// Euclidean projection of the group norms onto the l1 ball, then each
/// group is rescaled to its new norm.
fn project_groups(x: &mut [f64], sizes: &[usize], budget: f64) {
    let norms: Vec<f64> = groups(x, sizes).iter().map(|g| norm(g)).collect();
    if norms.iter().sum::<f64>() <= budget {
        return;
    }
    let target = project_l1_nonneg(&norms, budget);
    let mut start = 0;
    for (k, (&n, &m)) in norms.iter().zip(&target).enumerate() {
        let len = sizes.get(k).copied().unwrap_or(x.len() - start).min(x.len() - start);
        let s = if n > 0.0 { m / n } else { 0.0 };
        x[start..start + len].iter_mut().for_each(|v| *v *= s);
        start += len;
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Projection of a nonnegative vector onto `{y >= 0, sum y <= z}` by the
/// sort-and-threshold rule.
fn project_l1_nonneg(v: &[f64], z: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - z) / (i + 1) as f64;
        if s > t {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projected online gradient descent on a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct OgdState {
    pub point: Vec<f64>,
    pub schedule: StepSchedule,
    pub projection: Projection,
    /// Number of updates applied so far.
    pub iteration: usize,
}

impl OgdState {
    pub fn new(point: Vec<f64>, schedule: StepSchedule, projection: Projection) -> Result<Self> {
        if point.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("OGD start point has non-finite entries"));
        }
        let mut s = Self {
            point,
            schedule,
            projection,
            iteration: 0,
        };
        s.projection.project(&mut s.point);
        Ok(s)
    }

    /// Step size the next update will use.
    pub fn next_eta(&self) -> f64 {
        self.schedule.eta(self.iteration + 1)
    }

    /// `x <- Proj(x - eta_t g)`.
    pub fn update(&mut self, gradient: &[f64]) -> Result<()> {
        if gradient.len() != self.point.len() {
            return Err(Error::dim("OGD gradient", self.point.len(), gradient.len()));
        }
        if let Some(bad) = gradient.iter().position(|g| !g.is_finite()) {
            return Err(Error::numerical(format!("non-finite gradient entry {bad}; update rejected")));
        }
        let eta = self.next_eta();
        for (x, g) in self.point.iter_mut().zip(gradient) {
            *x -= eta * g;
        }
        self.projection.project(&mut self.point);
        self.iteration += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_keeps_point() {
        let mut s = OgdState::new(vec![0.3, -0.2], StepSchedule::Constant(0.5), Projection::None).unwrap();
        s.update(&[0.0, 0.0]).unwrap();
        assert_eq!(s.point, vec![0.3, -0.2]);
        assert_eq!(s.iteration, 1);
    }

    #[test]
    fn contraction_to_minimizer() {
        let c = [1.0, -2.0];
        let eta = 0.1;
        let mut s = OgdState::new(vec![0.0, 0.0], StepSchedule::Constant(eta), Projection::None).unwrap();
        let mut prev = (0.0f64 - c[0]).hypot(0.0 - c[1]);
        for _ in 0..50 {
            let g: Vec<f64> = s.point.iter().zip(&c).map(|(x, c)| 2.0 * (x - c)).collect();
            s.update(&g).unwrap();
            let d = (s.point[0] - c[0]).hypot(s.point[1] - c[1]);
            assert!((d - (1.0 - 2.0 * eta) * prev).abs() < 1e-12);
            prev = d;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn ball_projection() {
        let s = OgdState::new(vec![3.0, 4.0], StepSchedule::Constant(1.0), Projection::Ball(1.0)).unwrap();
        assert!((s.point[0] - 0.6).abs() < 1e-15 && (s.point[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut s = OgdState::new(vec![1.0], StepSchedule::Constant(1.0), Projection::None).unwrap();
        let err = s.update(&[f64::NAN]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert_eq!(s.point, vec![1.0]);
        assert_eq!(s.iteration, 0);
    }

    #[test]
    fn block_budget_projection_example() {
        // Block norms 5 and 1 with budget 2: threshold 3, norms become 2 and 0.
        let mut x = vec![3.0, 4.0, 1.0, 0.0];
        Projection::BlockBudget { block_len: 2, budget: 2.0 }.project(&mut x);
        assert!((x[0] - 1.2).abs() < 1e-12 && (x[1] - 1.6).abs() < 1e-12);
        assert_eq!(&x[2..], &[0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn projections_land_in_set(v in prop::collection::vec(-10.0f64..10.0, 6), r in 0.1f64..5.0) {
            for p in [
                Projection::Ball(r),
                Projection::BlockBudget { block_len: 2, budget: r },
                Projection::BlockBudget { block_len: 3, budget: r },
                Projection::Groups { sizes: vec![1, 4, 1], budget: r },
            ] {
                let mut x = v.clone();
                p.project(&mut x);
                prop_assert!(p.contains(&x));
                // Points already inside are left alone.
                let mut y = x.clone();
                p.project(&mut y);
                for (a, b) in x.iter().zip(&y) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn projection_is_nonexpansive(a in prop::collection::vec(-5.0f64..5.0, 4), b in prop::collection::vec(-5.0f64..5.0, 4)) {
            let p = Projection::Ball(1.0);
            let (mut pa, mut pb) = (a.clone(), b.clone());
            p.project(&mut pa);
            p.project(&mut pb);
            let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            prop_assert!(d(&pa, &pb) <= d(&a, &b) + 1e-12);
        }
    }
}
