//! Euler–Maruyama integration up to blow-up, extinction, or a horizon.
//!
//! Time is kept as an integer tick count at resolution `base_dt / 2^MAX_LEVEL`
//! and every step is a power-of-two number of ticks aligned to its own size.
//! That makes each step's Brownian increment an exact sum of base increments
//! (steps ≥ `base_dt`) or a node of the dyadic bridge (steps < `base_dt`), so
//! runs with different `dt_max` or different adaptive grids share one path.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::event::{FaultKind, IntegrationFault, PathResult, StoppingEvent};
use crate::model::{Coefficient, ModelSpec};
use crate::noise::{NoiseCursor, NoiseSource, MAX_LEVEL};

/// Steps below this are treated as a breakdown of the integrator.
pub const MIN_DT: f64 = 1e-12;

/// Crossings inspected by the blow-up certificate.
pub const CERTIFICATE_RUNGS: usize = 4;

/// `x + b·dt + σ·dW`
#[inline]
pub fn step(x: f64, b: f64, sigma: f64, dt: f64, dw: f64) -> f64 {
    x + b * dt + sigma * dw
}

#[derive(Clone)]
pub struct SdeProblem {
    pub drift: Coefficient,
    pub diffusion: Coefficient,
    pub x0: f64,
    pub positive_state: bool,
}

impl std::fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeProblem")
            .field("x0", &self.x0)
            .field("positive_state", &self.positive_state)
            .finish_non_exhaustive()
    }
}

impl SdeProblem {
    pub fn new(
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
        x0: f64,
    ) -> Result<Self> {
        Self::from_coefficients(Arc::new(drift), Arc::new(diffusion), x0, false)
    }

    pub fn from_coefficients(drift: Coefficient, diffusion: Coefficient, x0: f64, positive_state: bool) -> Result<Self> {
        if !x0.is_finite() {
            return Err(invalid("x0 must be finite"));
        }
        if positive_state && !(x0 > 0.0) {
            return Err(invalid("positive-state problems need x0 > 0"));
        }
        Ok(Self {
            drift,
            diffusion,
            x0,
            positive_state,
        })
    }

    /// The instantaneous counterpart `dx = F(x, a)dt + g(x)dW` of a delay model.
    pub fn frozen(model: &ModelSpec, a: f64, x0: f64) -> Result<Self> {
        Self::from_coefficients(model.frozen_drift(a), Arc::clone(&model.diffusion), x0, model.positive_state)
    }

    pub fn positive(mut self) -> Result<Self> {
        if !(self.x0 > 0.0) {
            return Err(invalid("positive-state problems need x0 > 0"));
        }
        self.positive_state = true;
        Ok(self)
    }
}

/// Step-size rule evaluated at the current state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DtPolicy {
    /// Always `dt_max`.
    Fixed,
    /// `min(dt_max, η(1+|x|)/|b|, η²(1+|x|)²/σ²)`: the drift moves the state
    /// by at most a fraction `η` of its size per step, and so does one
    /// standard deviation of the noise.
    Relative { eta: f64 },
    /// `min(dt_max, scale/(1 + |b| + σ²))`.
    Absolute { scale: f64 },
}

impl Default for DtPolicy {
    fn default() -> Self {
        Self::Relative { eta: 0.1 }
    }
}

impl DtPolicy {
    pub fn target(&self, dt_max: f64, x: f64, b: f64, sigma: f64) -> f64 {
        match *self {
            Self::Fixed => dt_max,
            Self::Relative { eta } => {
                let size = 1.0 + x.abs();
                let mut dt = dt_max;
                if b != 0.0 {
                    dt = dt.min(eta * size / b.abs());
                }
                if sigma != 0.0 {
                    dt = dt.min((eta * size / sigma).powi(2));
                }
                dt
            }
            Self::Absolute { scale } => dt_max.min(scale / (1.0 + b.abs() + sigma * sigma)),
        }
    }

    /// Extra cap for positive-state processes under the relative rule: the
    /// noise may move `x` by about `η·x` per step, so Euler does not jump
    /// across zero from states where the true path cannot reach it. Never
    /// below [`POSITIVE_DT_FLOOR`], which keeps genuine extinctions finite.
    pub fn positive_target(&self, dt_max: f64, x: f64, sigma: f64) -> f64 {
        match *self {
            Self::Relative { eta } if sigma != 0.0 && x > 0.0 => {
                dt_max.min((eta * x / sigma).powi(2).max(POSITIVE_DT_FLOOR))
            }
            _ => dt_max,
        }
    }
}

/// Smallest step the positivity cap asks for.
pub const POSITIVE_DT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt_max: f64,
    pub dt_policy: DtPolicy,
    /// Strictly increasing thresholds `n₁ < n₂ < …` for `|x|`.
    pub ladder: Vec<f64>,
    pub extinction_eps: f64,
    pub horizon: f64,
    /// `None` records every step.
    pub output_every: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt_max: 1e-3,
            dt_policy: DtPolicy::default(),
            ladder: default_ladder(),
            extinction_eps: 1e-8,
            horizon: 1.0,
            output_every: None,
        }
    }
}

/// `10¹, 10², …, 10⁸`
pub fn default_ladder() -> Vec<f64> {
    (1..=8).map(|k| 10f64.powi(k)).collect()
}

impl IntegratorConfig {
    pub fn new(dt_max: f64, horizon: f64) -> Self {
        Self {
            dt_max,
            horizon,
            ..Self::default()
        }
    }

    pub fn with_ladder(mut self, ladder: Vec<f64>) -> Self {
        self.ladder = ladder;
        self
    }

    pub fn with_policy(mut self, policy: DtPolicy) -> Self {
        self.dt_policy = policy;
        self
    }

    pub fn with_extinction_eps(mut self, eps: f64) -> Self {
        self.extinction_eps = eps;
        self
    }

    pub fn with_output_every(mut self, every: Option<f64>) -> Self {
        self.output_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0) || !self.dt_max.is_finite() {
            return Err(invalid("dt_max must be positive"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid("horizon must be positive"));
        }
        if self.ladder.len() < CERTIFICATE_RUNGS {
            return Err(invalid(format!("ladder needs at least {CERTIFICATE_RUNGS} rungs")));
        }
        if self.ladder.windows(2).any(|w| w[0] >= w[1]) || self.ladder.iter().any(|r| !(r.is_finite())) {
            return Err(invalid("ladder must be finite and strictly increasing"));
        }
        if !(self.extinction_eps > 0.0) || self.extinction_eps >= self.ladder[0] {
            return Err(invalid("extinction_eps must be positive and below the first rung"));
        }
        match self.dt_policy {
            DtPolicy::Relative { eta } if !(eta > 0.0) => return Err(invalid("eta must be positive")),
            DtPolicy::Absolute { scale } if !(scale > 0.0) => return Err(invalid("scale must be positive")),
            _ => {}
        }
        if let Some(every) = self.output_every {
            if !(every > 0.0) {
                return Err(invalid("output_every must be positive"));
            }
        }
        Ok(())
    }
}

/// Outcome of the geometric-escape test on ladder crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certificate {
    Escaping,
    NotEscaping,
    /// Fewer than [`CERTIFICATE_RUNGS`] crossings.
    Inconclusive,
}

/// Inspects the last four `(threshold, time)` crossings: the path is escaping
/// iff the gaps between successive crossing times do not increase.
pub fn blow_up_certificate(crossings: &[(f64, f64)]) -> Certificate {
    if crossings.len() < CERTIFICATE_RUNGS {
        return Certificate::Inconclusive;
    }
    let tail = &crossings[crossings.len() - CERTIFICATE_RUNGS..];
    let gaps: Vec<f64> = tail.windows(2).map(|w| w[1].1 - w[0].1).collect();
    if gaps_decreasing(&gaps) {
        Certificate::Escaping
    } else {
        Certificate::NotEscaping
    }
}

/// True iff the sequence never increases.
pub fn gaps_decreasing(gaps: &[f64]) -> bool {
    gaps.windows(2).all(|w| w[1] <= w[0])
}

/// Integer time axis shared by all lanes of one run.
pub(crate) struct Clock {
    base_dt: f64,
    tick: f64,
    pos: u128,
    max_shift: u32,
    horizon_ticks: u128,
}

const LEVEL_MASK: u128 = (1u128 << MAX_LEVEL) - 1;

impl Clock {
    pub(crate) fn new(config: &IntegratorConfig, noise: &NoiseSource) -> Result<Self> {
        config.validate()?;
        let base_dt = noise.base_dt();
        let ratio = config.dt_max / base_dt;
        let k = ratio.log2().round();
        if !(k >= 0.0) || ((2f64.powf(k) - ratio) / ratio).abs() > 1e-9 {
            return Err(invalid(format!(
                "dt_max ({}) must be base_dt ({base_dt}) times a power of two",
                config.dt_max
            )));
        }
        let tick = base_dt / (1u64 << MAX_LEVEL) as f64;
        let base_steps = config.horizon / base_dt;
        let horizon_ticks = if (base_steps - base_steps.round()).abs() <= 1e-9 * base_steps.max(1.0) {
            (base_steps.round() as u128) << MAX_LEVEL
        } else {
            (config.horizon / tick).floor() as u128
        };
        Ok(Self {
            base_dt,
            tick,
            pos: 0,
            max_shift: MAX_LEVEL + k as u32,
            horizon_ticks,
        })
    }

    pub(crate) fn time(&self) -> f64 {
        (self.pos >> MAX_LEVEL) as f64 * self.base_dt + (self.pos & LEVEL_MASK) as f64 * self.tick
    }

    pub(crate) fn at_horizon(&self) -> bool {
        self.pos >= self.horizon_ticks
    }

    fn dt(&self, shift: u32) -> f64 {
        (1u128 << shift) as f64 * self.tick
    }

    /// Largest aligned power-of-two step not exceeding `target` or the horizon.
    fn plan(&self, target: f64) -> Option<u32> {
        if !(target >= MIN_DT) {
            return None;
        }
        let mut shift = self.max_shift;
        while shift > 0 && self.dt(shift) > target {
            shift -= 1;
        }
        if self.pos != 0 {
            shift = shift.min(self.pos.trailing_zeros());
        }
        while shift > 0 && self.pos + (1u128 << shift) > self.horizon_ticks {
            shift -= 1;
        }
        if self.dt(shift) > target {
            return None;
        }
        Some(shift)
    }

    fn increment(&self, cursor: &mut NoiseCursor, shift: u32) -> f64 {
        let index = (self.pos >> MAX_LEVEL) as u64;
        if shift >= MAX_LEVEL {
            cursor.coarse_increment(index, 1u64 << (shift - MAX_LEVEL))
        } else {
            let level = MAX_LEVEL - shift;
            let node = ((self.pos & LEVEL_MASK) >> shift) as u64;
            cursor.bridge_increment(index, level, node)
        }
    }

    fn advance(&mut self, shift: u32) {
        self.pos += 1u128 << shift;
    }
}

/// Ladder and barrier bookkeeping for one process.
#[derive(Debug, Clone)]
pub(crate) struct Monitor {
    ladder: Vec<f64>,
    next_rung: usize,
    crossings: Vec<(f64, f64)>,
    eps: f64,
    positive: bool,
}

impl Monitor {
    pub(crate) fn new(config: &IntegratorConfig, positive: bool) -> Self {
        Self {
            ladder: config.ladder.clone(),
            next_rung: 0,
            crossings: Vec::new(),
            eps: config.extinction_eps,
            positive,
        }
    }

    pub(crate) fn observe(&mut self, t: f64, x: f64) -> Option<StoppingEvent> {
        if self.positive && x <= self.eps {
            return Some(StoppingEvent::Extinction(t));
        }
        while self.next_rung < self.ladder.len() && x.abs() > self.ladder[self.next_rung] {
            self.crossings.push((self.ladder[self.next_rung], t));
            self.next_rung += 1;
        }
        if self.next_rung == self.ladder.len() {
            return Some(match blow_up_certificate(&self.crossings) {
                Certificate::Escaping if x > 0.0 => StoppingEvent::BlowUpPlus(t),
                Certificate::Escaping => StoppingEvent::BlowUpMinus(t),
                _ => StoppingEvent::Censored(t),
            });
        }
        None
    }
}

/// Coefficients of one process at its current state; `accept` is told about
/// every new accepted point (delay models keep their history this way).
pub(crate) trait Dynamics {
    fn coefficients(&mut self, t: f64, x: f64) -> (f64, f64);
    fn accept(&mut self, _t: f64, _x: f64) {}
}

pub(crate) struct Autonomous<'a> {
    pub(crate) drift: &'a (dyn Fn(f64) -> f64 + Send + Sync),
    pub(crate) diffusion: &'a (dyn Fn(f64) -> f64 + Send + Sync),
}

impl Dynamics for Autonomous<'_> {
    fn coefficients(&mut self, _t: f64, x: f64) -> (f64, f64) {
        ((self.drift)(x), (self.diffusion)(x))
    }
}

pub(crate) struct Recorder {
    every: Option<f64>,
    next_output: f64,
    pub(crate) times: Vec<f64>,
    pub(crate) values: Vec<f64>,
}

impl Recorder {
    pub(crate) fn new(every: Option<f64>) -> Self {
        Self {
            every,
            next_output: 0.0,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub(crate) fn push_raw(&mut self, t: f64, x: f64) {
        self.times.push(t);
        self.values.push(x);
    }

    fn offer(&mut self, t: f64, x: f64) {
        match self.every {
            None => self.push_raw(t, x),
            Some(h) => {
                if t >= self.next_output - 1e-12 * h {
                    self.push_raw(t, x);
                    while self.next_output <= t + 1e-12 * h {
                        self.next_output += h;
                    }
                }
            }
        }
    }

    fn finish(&mut self, t: f64, x: f64) {
        if self.times.last() != Some(&t) {
            self.push_raw(t, x);
        }
    }

    pub(crate) fn into_path(self, event: StoppingEvent) -> PathResult {
        PathResult {
            times: self.times,
            values: self.values,
            event,
        }
    }
}

/// One process advanced by [`run_lockstep`].
pub(crate) struct Lane<'a> {
    pub(crate) dynamics: Box<dyn Dynamics + 'a>,
    pub(crate) x: f64,
    pub(crate) monitor: Monitor,
    pub(crate) event: Option<StoppingEvent>,
    pub(crate) fault: Option<IntegrationFault>,
    pub(crate) recorder: Recorder,
    /// Step size in effect when the lane stopped.
    pub(crate) last_dt: f64,
    positive: bool,
    pending: (f64, f64),
}

impl<'a> Lane<'a> {
    pub(crate) fn new(dynamics: Box<dyn Dynamics + 'a>, x0: f64, config: &IntegratorConfig, positive: bool) -> Self {
        Self {
            dynamics,
            x: x0,
            monitor: Monitor::new(config, positive),
            event: None,
            fault: None,
            recorder: Recorder::new(config.output_every),
            last_dt: config.dt_max,
            positive,
            pending: (0.0, 0.0),
        }
    }

    pub(crate) fn alive(&self) -> bool {
        self.event.is_none() && self.fault.is_none()
    }

    fn fail(&mut self, kind: FaultKind, t: f64) {
        let recorder = std::mem::replace(&mut self.recorder, Recorder::new(None));
        self.fault = Some(IntegrationFault {
            kind,
            time: t,
            last_value: self.x,
            partial: recorder.into_path(StoppingEvent::Censored(t)),
        });
    }

    fn stop(&mut self, event: StoppingEvent) {
        self.recorder.finish(event.time(), self.x);
        self.event = Some(event);
    }

    /// The finished path, or the fault that ended it.
    pub(crate) fn into_result(self) -> std::result::Result<PathResult, IntegrationFault> {
        match (self.fault, self.event) {
            (Some(fault), _) => Err(fault),
            (None, Some(event)) => Ok(self.recorder.into_path(event)),
            (None, None) => unreachable!("lane still running"),
        }
    }
}

/// Advances all lanes on one clock with one Brownian increment per step.
/// The step is the smallest of the live lanes' policy targets. `visit` runs
/// after every step with the new time.
pub(crate) fn run_lockstep(
    lanes: &mut [Lane<'_>],
    config: &IntegratorConfig,
    noise: &NoiseSource,
    mut visit: impl FnMut(f64, &[Lane<'_>]),
) -> Result<()> {
    let mut clock = Clock::new(config, noise)?;
    let mut cursor = noise.cursor();
    let t0 = clock.time();
    for lane in lanes.iter_mut() {
        lane.recorder.offer(t0, lane.x);
        lane.dynamics.accept(t0, lane.x);
        if let Some(ev) = lane.monitor.observe(t0, lane.x) {
            lane.stop(ev);
        }
    }
    visit(t0, lanes);
    loop {
        if lanes.iter().all(|l| !l.alive()) {
            return Ok(());
        }
        let t = clock.time();
        if clock.at_horizon() {
            for lane in lanes.iter_mut().filter(|l| l.alive()) {
                lane.stop(StoppingEvent::Censored(config.horizon));
            }
            return Ok(());
        }
        let mut target = config.dt_max;
        for lane in lanes.iter_mut().filter(|l| l.alive()) {
            let (b, s) = lane.dynamics.coefficients(t, lane.x);
            if !b.is_finite() || !s.is_finite() {
                lane.fail(FaultKind::NonFinite, t);
                continue;
            }
            lane.pending = (b, s);
            target = target.min(config.dt_policy.target(config.dt_max, lane.x, b, s));
            if lane.positive {
                target = target.min(config.dt_policy.positive_target(config.dt_max, lane.x, s));
            }
        }
        if lanes.iter().all(|l| !l.alive()) {
            return Ok(());
        }
        let Some(shift) = clock.plan(target) else {
            for lane in lanes.iter_mut().filter(|l| l.alive()) {
                lane.fail(FaultKind::DtUnderflow, t);
            }
            return Ok(());
        };
        let dt = clock.dt(shift);
        let needs_noise = lanes.iter().any(|l| l.alive() && l.pending.1 != 0.0);
        let dw = if needs_noise { clock.increment(&mut cursor, shift) } else { 0.0 };
        clock.advance(shift);
        let t_new = clock.time();
        for lane in lanes.iter_mut().filter(|l| l.alive()) {
            let (b, s) = lane.pending;
            let x_new = step(lane.x, b, s, dt, dw);
            lane.last_dt = dt;
            if !x_new.is_finite() {
                lane.fail(FaultKind::NonFinite, t_new);
                continue;
            }
            lane.x = x_new;
            lane.recorder.offer(t_new, x_new);
            lane.dynamics.accept(t_new, x_new);
            if let Some(ev) = lane.monitor.observe(t_new, x_new) {
                lane.stop(ev);
            }
        }
        visit(t_new, lanes);
    }
}

/// Integrates `dx = b(x)dt + σ(x)dW` until blow-up, extinction, or the horizon.
///
/// A rejected configuration comes back as [`SimulationError::Config`]; a
/// numerical breakdown as [`SimulationError::Fault`] carrying the partial path.
pub fn simulate_sde(
    problem: &SdeProblem,
    config: &IntegratorConfig,
    noise: &NoiseSource,
) -> std::result::Result<PathResult, SimulationError> {
    let dynamics = Autonomous {
        drift: problem.drift.as_ref(),
        diffusion: problem.diffusion.as_ref(),
    };
    let mut lanes = [Lane::new(Box::new(dynamics), problem.x0, config, problem.positive_state)];
    run_lockstep(&mut lanes, config, noise, |_, _| {})?;
    let [lane] = lanes;
    Ok(lane.into_result()?)
}

/// Either a rejected configuration or a numerical breakdown.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error(transparent)]
    Config(#[from] crate::Error),
    #[error(transparent)]
    Fault(#[from] IntegrationFault),
}

impl SimulationError {
    pub fn fault(&self) -> Option<&IntegrationFault> {
        match self {
            Self::Fault(f) => Some(f),
            Self::Config(_) => None,
        }
    }
}

impl From<SimulationError> for crate::Error {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Config(e) => e,
            SimulationError::Fault(f) => f.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(dt: f64, horizon: f64) -> IntegratorConfig {
        IntegratorConfig::new(dt, horizon).with_policy(DtPolicy::Fixed)
    }

    #[test]
    fn step_examples() {
        assert_eq!(step(1.0, 0.0, 0.0, 0.1, 0.3), 1.0);
        assert_eq!(step(1.0, 2.0, 0.0, 0.5, 0.0), 2.0);
        assert!((step(0.0, 1.0, 1.0, 0.01, -0.02) + 0.01).abs() < 1e-15);
    }

    #[test]
    fn certificate_examples() {
        let from_gaps = |gaps: &[f64]| {
            let mut t = 0.0;
            let mut out = vec![(1.0, 0.0)];
            for (i, g) in gaps.iter().enumerate() {
                t += g;
                out.push((10f64.powi(i as i32 + 2), t));
            }
            out
        };
        assert!(gaps_decreasing(&[0.1, 0.01, 0.001, 0.0001]));
        assert!(!gaps_decreasing(&[0.1, 0.2, 0.15, 0.3]));
        assert_eq!(blow_up_certificate(&from_gaps(&[0.1, 0.01, 0.001, 0.0001])), Certificate::Escaping);
        assert_eq!(blow_up_certificate(&from_gaps(&[0.1, 0.2, 0.15, 0.3])), Certificate::NotEscaping);
        assert_eq!(blow_up_certificate(&[(1.0, 0.1), (2.0, 0.2)]), Certificate::Inconclusive);
    }

    #[test]
    fn certificate_on_analytic_quadratic_crossings() {
        // x' = x², x(0) = 1: x(t) = 1/(1−t) crosses n at t = 1 − 1/n
        let crossings: Vec<(f64, f64)> = (1..=8)
            .map(|k| {
                let n = 10f64.powi(k);
                (n, 1.0 - 1.0 / n)
            })
            .collect();
        let gaps: Vec<f64> = crossings.windows(2).map(|w| w[1].1 - w[0].1).collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(blow_up_certificate(&crossings), Certificate::Escaping);
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        assert!(IntegratorConfig::default().with_ladder(vec![1.0, 2.0, 2.0, 3.0]).validate().is_err());
        assert!(IntegratorConfig::default().with_ladder(vec![1.0, 2.0]).validate().is_err());
        assert!(IntegratorConfig::default().with_extinction_eps(100.0).validate().is_err());
        assert!(IntegratorConfig::new(0.0, 1.0).validate().is_err());
    }

    #[test]
    fn dt_max_must_be_power_of_two_multiple() {
        let p = SdeProblem::new(|_| 0.0, |_| 0.0, 1.0).unwrap();
        let noise = NoiseSource::new(0, 1e-3);
        let bad = IntegratorConfig::new(3e-3, 1.0);
        assert!(matches!(simulate_sde(&p, &bad, &noise), Err(SimulationError::Config(_))));
        let good = IntegratorConfig::new(4e-3, 1.0);
        assert!(simulate_sde(&p, &good, &noise).is_ok());
    }

    #[test]
    fn quadratic_blows_up_at_one() {
        let p = SdeProblem::new(|x| x * x, |_| 0.0, 1.0).unwrap();
        let cfg = IntegratorConfig::new(1e-4, 2.0).with_output_every(Some(0.01));
        let path = simulate_sde(&p, &cfg, &NoiseSource::new(1, 1e-4)).unwrap();
        match path.event {
            StoppingEvent::BlowUpPlus(t) => assert!((t - 1.0).abs() <= 0.01, "t = {t}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn negative_quadratic_blows_down() {
        let p = SdeProblem::new(|x| -x * x, |_| 0.0, -1.0).unwrap();
        let path = simulate_sde(&p, &IntegratorConfig::new(1e-4, 2.0), &NoiseSource::new(1, 1e-4)).unwrap();
        assert!(matches!(path.event, StoppingEvent::BlowUpMinus(t) if (t - 1.0).abs() < 0.01));
    }

    #[test]
    fn ou_is_censored() {
        let p = SdeProblem::new(|x| -x, |_| 1.0, 0.0).unwrap();
        let path = simulate_sde(&p, &IntegratorConfig::new(1e-3, 5.0), &NoiseSource::new(3, 1e-3)).unwrap();
        assert_eq!(path.event, StoppingEvent::Censored(5.0));
        assert_eq!(*path.times.last().unwrap(), 5.0);
    }

    #[test]
    fn nan_drift_is_a_fault() {
        let p = SdeProblem::new(|x| if x > 1.5 { f64::NAN } else { 1.0 }, |_| 0.0, 1.0).unwrap();
        let err = simulate_sde(&p, &fixed(1e-2, 2.0), &NoiseSource::new(0, 1e-2)).unwrap_err();
        let fault = err.fault().expect("fault");
        assert_eq!(fault.kind, FaultKind::NonFinite);
        assert!(fault.time > 0.49 && fault.time < 0.52);
        assert!(!fault.partial.is_empty());
    }

    #[test]
    fn tiny_target_is_underflow() {
        let p = SdeProblem::new(|_| 1.0, |_| 0.0, 1.0).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 1.0).with_policy(DtPolicy::Absolute { scale: 1e-13 });
        let err = simulate_sde(&p, &cfg, &NoiseSource::new(0, 1e-3)).unwrap_err();
        assert_eq!(err.fault().unwrap().kind, FaultKind::DtUnderflow);
    }

    #[test]
    fn extinction_on_positive_state() {
        let p = SdeProblem::new(|_| -1.0, |_| 0.0, 1.0).unwrap().positive().unwrap();
        let path = simulate_sde(&p, &fixed(1e-3, 5.0), &NoiseSource::new(0, 1e-3)).unwrap();
        match path.event {
            StoppingEvent::Extinction(t) => assert!((t - 1.0).abs() < 2e-3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn deterministic_run_matches_explicit_euler() {
        let b = |x: f64| x.sin() + 0.3 * x;
        let p = SdeProblem::new(b, |_| 0.0, 0.7).unwrap();
        let path = simulate_sde(&p, &IntegratorConfig::new(1e-3, 3.0), &NoiseSource::new(0, 1e-3)).unwrap();
        let mut x = 0.7;
        for k in 0..path.len() {
            assert!((x - path.values[k]).abs() <= 1e-12, "k={k}");
            if k + 1 < path.len() {
                x += b(x) * (path.times[k + 1] - path.times[k]);
            }
        }
    }

    #[test]
    fn output_every_thins_the_grid() {
        let p = SdeProblem::new(|_| 1.0, |_| 0.0, 0.0).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 1.0).with_output_every(Some(0.1));
        let path = simulate_sde(&p, &cfg, &NoiseSource::new(0, 1e-3)).unwrap();
        assert_eq!(path.len(), 11);
        assert!((path.values[10] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_noise_across_refinement() {
        // pure Brownian motion: endpoint is identical up to summation order
        let p = SdeProblem::new(|_| 0.0, |_| 1.0, 0.0).unwrap();
        let noise = NoiseSource::new(21, 1e-3 / 8.0);
        let ends: Vec<f64> = [1e-3, 5e-4, 2.5e-4, 1.25e-4]
            .iter()
            .map(|&dt| {
                let cfg = fixed(dt, 1.0);
                simulate_sde(&p, &cfg, &noise).unwrap().last_value().unwrap()
            })
            .collect();
        for e in &ends[1..] {
            assert!((e - ends[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn adaptive_sub_base_steps_follow_the_same_path() {
        // Brownian motion with a tiny forced step still lands on W(1)
        let p = SdeProblem::new(|_| 0.0, |_| 1.0, 0.0).unwrap();
        let noise = NoiseSource::new(4, 1e-2);
        let coarse = simulate_sde(&p, &fixed(1e-2, 1.0), &noise).unwrap();
        let fine_cfg = IntegratorConfig::new(1e-2, 1.0).with_policy(DtPolicy::Absolute { scale: 1e-3 });
        let fine = simulate_sde(&p, &fine_cfg, &noise).unwrap();
        assert!(fine.len() > 5 * coarse.len());
        assert!((fine.last_value().unwrap() - coarse.last_value().unwrap()).abs() < 1e-12);
    }
}
