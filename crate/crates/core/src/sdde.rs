//! Discrete-delay SDDEs `dx = F(x(t), x(t−τ))dt + g(x(t))dW` by the method of
//! steps: the delayed value is read from an interpolated history of the path
//! itself, seeded from the initial segment.

use std::collections::VecDeque;

use crate::error::{invalid, Result};
use crate::event::PathResult;
use crate::model::ModelSpec;
use crate::noise::NoiseSource;
use crate::sde::{run_lockstep, Dynamics, IntegratorConfig, Lane, SimulationError};
use crate::segment::Segment;

/// Recent history of a path, linearly interpolated.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    times: VecDeque<f64>,
    values: VecDeque<f64>,
    cursor: usize,
    retain: f64,
}

impl HistoryBuffer {
    /// Seeds the buffer with the nodes of `segment`. Nodes older than
    /// `retain` before the newest push are discarded.
    pub fn new(segment: &Segment, retain: f64) -> Self {
        Self {
            times: segment.grid().iter().copied().collect(),
            values: segment.values().iter().copied().collect(),
            cursor: 0,
            retain,
        }
    }

    /// Appends a sample; `t` must exceed the newest stored time.
    pub fn push(&mut self, t: f64, x: f64) {
        let last = *self.times.back().expect("buffer is never empty");
        assert!(t > last, "history times must increase ({t} after {last})");
        self.times.push_back(t);
        self.values.push_back(x);
        let horizon = t - self.retain;
        while self.times.len() > 2 && self.times[1] <= horizon {
            self.times.pop_front();
            self.values.pop_front();
            self.cursor = self.cursor.saturating_sub(1);
        }
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.back().unwrap())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value at `s`; exact at stored nodes, `None` outside the stored span.
    pub fn lookup(&mut self, s: f64) -> Option<f64> {
        let (lo, hi) = self.span();
        if s < lo || s > hi {
            return None;
        }
        let n = self.times.len();
        if self.cursor >= n {
            self.cursor = n - 1;
        }
        while self.cursor > 0 && self.times[self.cursor] > s {
            self.cursor -= 1;
        }
        while self.cursor + 1 < n && self.times[self.cursor + 1] <= s {
            self.cursor += 1;
        }
        let i = self.cursor;
        if self.times[i] == s || i + 1 == n {
            return Some(self.values[i]);
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let (x0, x1) = (self.values[i], self.values[i + 1]);
        Some(x0 + (x1 - x0) * (s - t0) / (t1 - t0))
    }
}

/// Drift evaluation recorded at one step start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftRecord {
    pub t: f64,
    pub x: f64,
    pub delayed: f64,
    pub drift: f64,
}

pub(crate) struct DelayDynamics<'a> {
    model: &'a ModelSpec,
    history: HistoryBuffer,
    log: Option<&'a mut Vec<DriftRecord>>,
}

impl<'a> DelayDynamics<'a> {
    pub(crate) fn new(
        model: &'a ModelSpec,
        phi: &Segment,
        config: &IntegratorConfig,
        log: Option<&'a mut Vec<DriftRecord>>,
    ) -> Self {
        Self {
            model,
            history: HistoryBuffer::new(phi, model.delay + config.dt_max),
            log,
        }
    }
}

impl Dynamics for DelayDynamics<'_> {
    fn coefficients(&mut self, t: f64, x: f64) -> (f64, f64) {
        let delayed = self
            .history
            .lookup(t - self.model.delay)
            .expect("history covers [t - tau, t]");
        let drift = self.model.drift(x, delayed);
        if let Some(log) = self.log.as_mut() {
            log.push(DriftRecord { t, x, delayed, drift });
        }
        (drift, self.model.diffusion_at(x))
    }

    fn accept(&mut self, t: f64, x: f64) {
        if t > self.history.span().1 {
            self.history.push(t, x);
        }
    }
}

pub(crate) fn check_delay_inputs(model: &ModelSpec, phi: &Segment, config: &IntegratorConfig) -> Result<()> {
    if (phi.tau() - model.delay).abs() > 1e-12 * model.delay {
        return Err(invalid(format!(
            "initial segment spans [-{}, 0] but the delay is {}",
            phi.tau(),
            model.delay
        )));
    }
    if config.dt_max > model.delay {
        return Err(invalid("dt_max must not exceed the delay"));
    }
    Ok(())
}

/// Simulates the SDDE from initial function `phi`. The returned trajectory
/// starts with the nodes of `phi` at negative times.
pub fn simulate_sdde(
    model: &ModelSpec,
    phi: &Segment,
    config: &IntegratorConfig,
    noise: &NoiseSource,
) -> std::result::Result<PathResult, SimulationError> {
    simulate_sdde_traced(model, phi, config, noise, false).map(|(p, _)| p)
}

/// Like [`simulate_sdde`], optionally logging every drift evaluation.
pub fn simulate_sdde_traced(
    model: &ModelSpec,
    phi: &Segment,
    config: &IntegratorConfig,
    noise: &NoiseSource,
    trace: bool,
) -> std::result::Result<(PathResult, Vec<DriftRecord>), SimulationError> {
    check_delay_inputs(model, phi, config)?;
    let mut log = Vec::new();
    let result = {
        let dynamics = DelayDynamics::new(model, phi, config, trace.then_some(&mut log));
        let mut lanes = [Lane::new(Box::new(dynamics), phi.initial_value(), config, model.positive_state)];
        for (&t, &x) in phi.grid().iter().zip(phi.values()) {
            if t < 0.0 {
                lanes[0].recorder.push_raw(t, x);
            }
        }
        run_lockstep(&mut lanes, config, noise, |_, _| {})?;
        let [lane] = lanes;
        lane.into_result()
    };
    Ok((result?, log))
}

/// `ψ ≡ a` on `[−τ, −ε]`, then linear from `a` to `x0` on `[−ε, 0]`.
pub fn build_initial_from_constant(a: f64, x0: f64, eps: f64, tau: f64) -> Result<Segment> {
    if !(tau > 0.0) {
        return Err(invalid("tau must be positive"));
    }
    if !(eps > 0.0) || eps >= tau {
        return Err(invalid(format!("eps must lie in (0, tau); got eps = {eps}, tau = {tau}")));
    }
    Segment::new(vec![-tau, -eps, 0.0], vec![a, a, x0])
}

/// The path on `[n − τ, n]`, shifted to `[−τ, 0]`.
pub fn build_initial_from_path(path: &PathResult, n: f64, tau: f64) -> Result<Segment> {
    if !(tau > 0.0) {
        return Err(invalid("tau must be positive"));
    }
    let start = n - tau;
    let (Some(&first), Some(&last)) = (path.times.first(), path.times.last()) else {
        return Err(invalid("empty path"));
    };
    if !path.event.is_censored() && path.event.time() <= n {
        return Err(invalid(format!(
            "window [{start}, {n}] contains the stopping event {}",
            path.event
        )));
    }
    if first > start || last < n {
        return Err(invalid(format!(
            "path covers [{first}, {last}], window [{start}, {n}] is not covered"
        )));
    }
    let mut grid = vec![-tau];
    let mut values = vec![path.value_at(start).expect("covered")];
    let guard = 1e-12 * tau;
    for (&t, &x) in path.times.iter().zip(&path.values) {
        let shifted = t - n;
        if t > start && t < n && shifted > -tau + guard && shifted < -guard {
            grid.push(shifted);
            values.push(x);
        }
    }
    grid.push(0.0);
    values.push(path.value_at(n).expect("covered"));
    Segment::new(grid, values)
}
