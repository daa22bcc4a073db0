use super::LinearSystem;
use crate::error::Result;
use crate::linalg::Vector;

/// One rollout. `states` and `observations` hold `T + 1` entries (the final
/// state has no control), the per-step vectors hold `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub observations: Vec<Vector>,
    pub controls: Vec<Vector>,
    pub perturbations: Vec<Vector>,
    pub costs: Vec<f64>,
    /// Empirical stabilization constant `max_t ||x_t||`.
    pub gamma: f64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    pub fn cumulative_costs(&self) -> Vec<f64> {
        self.costs
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c;
                Some(*acc)
            })
            .collect()
    }

    /// Largest deviation when the stored states are replayed through the
    /// dynamics from the stored controls and perturbations.
    pub fn replay_error(&self, system: &LinearSystem) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for t in 0..self.horizon() {
            let next = system.step(&self.states[t], &self.controls[t], &self.perturbations[t], t)?;
            worst = worst.max((next - &self.states[t + 1]).amax());
        }
        Ok(worst)
    }

    pub fn max_state_norm(&self) -> f64 {
        self.states.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}
