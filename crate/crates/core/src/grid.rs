//! Uniform time grids and pure-quaternion trajectories sampled on them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quat::PureQuat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("tau must be positive and finite, got {0}")]
    BadTau(f64),
    #[error("n_steps must be at least 2, got {0}")]
    TooFewSteps(usize),
    #[error("path has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("epsilon must be finite and non-negative, got {0}")]
    BadEpsilon(f64),
}

/// Nodes `t_k = k·tau/n_steps`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    tau: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, n_steps: usize) -> Result<Self, GridError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(GridError::BadTau(tau));
        }
        if n_steps < 2 {
            return Err(GridError::TooFewSteps(n_steps));
        }
        Ok(TimeGrid { tau, n_steps })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.tau / self.n_steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nodes()).map(|k| self.t(k)).collect()
    }

    /// Trapezoid weights: `dt/2` at the ends, `dt` inside.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut w = vec![dt; self.nodes()];
        w[0] = dt / 2.0;
        w[self.n_steps] = dt / 2.0;
        w
    }

    /// Same interval with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> TimeGrid {
        TimeGrid { tau: self.tau, n_steps: self.n_steps * factor.max(1) }
    }
}

/// Noise strength ε: finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EpsilonStrength(f64);

impl EpsilonStrength {
    pub fn new(epsilon: f64) -> Result<Self, GridError> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(GridError::BadEpsilon(epsilon));
        }
        Ok(EpsilonStrength(epsilon))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// One pure quaternion per grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurePath {
    grid: TimeGrid,
    values: Vec<PureQuat>,
}

impl PurePath {
    pub fn new(grid: TimeGrid, values: Vec<PureQuat>) -> Result<Self, GridError> {
        if values.len() != grid.nodes() {
            return Err(GridError::LengthMismatch { expected: grid.nodes(), got: values.len() });
        }
        Ok(PurePath { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> PureQuat) -> Self {
        let values = (0..grid.nodes()).map(|k| f(grid.t(k))).collect();
        PurePath { grid, values }
    }

    pub fn constant(grid: TimeGrid, c: PureQuat) -> Self {
        PurePath { grid, values: vec![c; grid.nodes()] }
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self::constant(grid, PureQuat::ZERO)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[PureQuat] {
        &self.values
    }

    pub fn into_values(self) -> Vec<PureQuat> {
        self.values
    }

    pub fn last(&self) -> PureQuat {
        self.values[self.values.len() - 1]
    }

    pub fn map(&self, f: impl Fn(PureQuat) -> PureQuat) -> PurePath {
        PurePath { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(PureQuat::is_finite)
    }

    /// Value at the midpoint of step `k` by cubic interpolation through four
    /// neighbouring nodes (one-sided stencils at the ends).
    pub fn midpoint(&self, k: usize) -> PureQuat {
        cubic_midpoint(&self.values, k)
    }

    /// Running trapezoid integral starting at zero.
    pub fn cumulative_integral(&self) -> PurePath {
        PurePath { grid: self.grid, values: cumulative_trapezoid(&self.values, self.grid.dt()) }
    }

    /// Largest componentwise difference to another path on the same grid.
    pub fn sup_distance(&self, other: &PurePath) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (*a - *b).max_abs()).fold(0.0, f64::max)
    }

    /// Central differences inside, one-sided second-order stencils at the ends.
    pub fn derivative(&self) -> PurePath {
        PurePath { grid: self.grid, values: finite_difference(&self.values, self.grid.dt()) }
    }
}

pub(crate) fn cubic_midpoint(v: &[PureQuat], k: usize) -> PureQuat {
    let n = v.len();
    debug_assert!(k + 1 < n);
    if n < 4 {
        return (v[k] + v[k + 1]).scale(0.5);
    }
    if k == 0 {
        (v[0].scale(5.0) + v[1].scale(15.0) - v[2].scale(5.0) + v[3]).scale(1.0 / 16.0)
    } else if k + 2 == n {
        (v[n - 1].scale(5.0) + v[n - 2].scale(15.0) - v[n - 3].scale(5.0) + v[n - 4]).scale(1.0 / 16.0)
    } else {
        (v[k].scale(9.0) + v[k + 1].scale(9.0) - v[k - 1] - v[k + 2]).scale(1.0 / 16.0)
    }
}

pub(crate) fn cumulative_trapezoid(v: &[PureQuat], dt: f64) -> Vec<PureQuat> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = PureQuat::ZERO;
    out.push(acc);
    for w in v.windows(2) {
        acc += (w[0] + w[1]).scale(dt / 2.0);
        out.push(acc);
    }
    out
}

pub(crate) fn finite_difference(v: &[PureQuat], dt: f64) -> Vec<PureQuat> {
    let n = v.len();
    let mut d = Vec::with_capacity(n);
    if n < 3 {
        let s = (v[n - 1] - v[0]).scale(1.0 / ((n - 1) as f64 * dt));
        return vec![s; n];
    }
    d.push((v[1].scale(4.0) - v[0].scale(3.0) - v[2]).scale(1.0 / (2.0 * dt)));
    for k in 1..n - 1 {
        d.push((v[k + 1] - v[k - 1]).scale(1.0 / (2.0 * dt)));
    }
    d.push((v[n - 1].scale(3.0) - v[n - 2].scale(4.0) + v[n - 3]).scale(1.0 / (2.0 * dt)));
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
        let g = TimeGrid::new(2.0, 4).unwrap();
        assert_eq!(g.times(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.trapezoid_weights().iter().sum::<f64>(), 2.0);
        assert!(EpsilonStrength::new(-0.1).is_err());
        assert!(EpsilonStrength::new(f64::NAN).is_err());
    }

    #[test]
    fn cubic_midpoint_is_exact_for_cubics() {
        let g = TimeGrid::new(1.0, 7).unwrap();
        let f = |t: f64| PureQuat::new(t * t * t - 2.0 * t, 0.5 * t * t, 1.0 - t);
        let p = PurePath::from_fn(g, f);
        for k in 0..g.n_steps() {
            let exact = f(g.t(k) + g.dt() / 2.0);
            assert!((p.midpoint(k) - exact).max_abs() < 1e-13, "step {k}");
        }
    }

    #[test]
    fn derivative_is_exact_for_quadratics() {
        let g = TimeGrid::new(1.5, 9).unwrap();
        let p = PurePath::from_fn(g, |t| PureQuat::new(t * t, 3.0 * t, -t * t + t));
        let d = p.derivative();
        for k in 0..g.nodes() {
            let t = g.t(k);
            let exact = PureQuat::new(2.0 * t, 3.0, -2.0 * t + 1.0);
            assert!((d.values()[k] - exact).max_abs() < 1e-12);
        }
    }
}
