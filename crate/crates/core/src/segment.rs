//! Initial functions on `[-τ, 0]`.

use crate::error::{invalid, Result};

/// A continuous, piecewise-linear function on `[-τ, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl Segment {
    /// `grid` must be strictly increasing from `-τ` to exactly `0`.
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(invalid("segment needs at least two nodes"));
        }
        if grid.len() != values.len() {
            return Err(invalid("segment grid and values differ in length"));
        }
        if grid.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(invalid("segment contains non-finite entries"));
        }
        if grid[0] >= 0.0 {
            return Err(invalid("segment must start at -tau < 0"));
        }
        if *grid.last().unwrap() != 0.0 {
            return Err(invalid("segment must end at 0"));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("segment grid must be strictly increasing"));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(tau: f64, value: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(invalid("tau must be positive"));
        }
        Self::new(vec![-tau, 0.0], vec![value, value])
    }

    /// Samples `f` at `n + 1` equally spaced nodes.
    pub fn from_fn(tau: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("need at least one interval"));
        }
        let grid: Vec<f64> = (0..=n)
            .map(|i| if i == n { 0.0 } else { -tau + tau * i as f64 / n as f64 })
            .collect();
        let values = grid.iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn tau(&self) -> f64 {
        -self.grid[0]
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The value at `0`, the starting state of the process.
    pub fn initial_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Evaluates the interpolant; `t` is clamped to `[-τ, 0]`.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(self.grid[0], 0.0);
        let i = self.grid.partition_point(|&s| s < t);
        if self.grid[i] == t {
            return self.values[i];
        }
        let (t0, t1) = (self.grid[i - 1], self.grid[i]);
        let (x0, x1) = (self.values[i - 1], self.values[i]);
        x0 + (x1 - x0) * (t - t0) / (t1 - t0)
    }

    /// `(min φ, max φ)`; the extrema of a piecewise-linear function sit at nodes.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}
