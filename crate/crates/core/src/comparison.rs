//! Freezing the delayed argument at bounding constants.
//!
//! If `F(x, a₁) ≤ F(x, y) ≤ F(x, a₂)` for every `y` in the range of the
//! initial segment, the SDEs with drifts `F(·, a₁)` and `F(·, a₂)` driven by
//! the same Brownian path bound the SDDE from below and above on `[0, τ]`.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::event::{FaultKind, IntegrationFault, PathResult, StoppingEvent};
use crate::model::{linspace, osgood_divergent, ModelSpec, Monotonicity};
use crate::noise::NoiseSource;
use crate::sde::{run_lockstep, Autonomous, IntegratorConfig, Lane};
use crate::sdde::{check_delay_inputs, DelayDynamics};
use crate::segment::Segment;

/// Probe box for `x` used when the monotonicity in `y` is unknown.
pub const DEFAULT_PROBE: (f64, f64) = (-10.0, 10.0);
pub const DEFAULT_PROBE_POINTS: usize = 81;

/// Default tolerance for sandwich violations.
pub const DEFAULT_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub a1: f64,
    pub a2: f64,
    /// Found by grid search rather than from declared monotonicity.
    pub heuristic: bool,
}

/// Bounding constants for `y ∈ range`, probing `x` over [`DEFAULT_PROBE`].
pub fn bound_constants(model: &ModelSpec, range: (f64, f64), grid: usize) -> Result<Bounds> {
    bound_constants_on(model, range, grid, DEFAULT_PROBE, DEFAULT_PROBE_POINTS)
}

pub fn bound_constants_on(
    model: &ModelSpec,
    range: (f64, f64),
    grid: usize,
    probe: (f64, f64),
    probe_points: usize,
) -> Result<Bounds> {
    let (lo, hi) = range;
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(invalid(format!("bad interval [{lo}, {hi}]")));
    }
    match model.delay_monotonicity {
        Monotonicity::Increasing => Ok(Bounds { a1: lo, a2: hi, heuristic: false }),
        Monotonicity::Decreasing => Ok(Bounds { a1: hi, a2: lo, heuristic: false }),
        Monotonicity::Unknown => {
            let ys = linspace(lo, hi, grid.max(2));
            let xs = linspace(probe.0, probe.1, probe_points.max(2));
            let table: Vec<Vec<f64>> = xs.iter().map(|&x| ys.iter().map(|&y| model.drift(x, y)).collect()).collect();
            // index j whose column is ≤ (sign = 1) or ≥ (sign = −1) every other column in every row
            let uniform = |sign: f64| {
                (0..ys.len()).find(|&j| {
                    table.iter().all(|row| {
                        let tol = 1e-12 * (1.0 + row[j].abs());
                        row.iter().all(|&v| sign * (row[j] - v) <= tol)
                    })
                })
            };
            let argmin = uniform(1.0);
            let argmax = uniform(-1.0);
            match (argmin, argmax) {
                (Some(i), Some(j)) => Ok(Bounds { a1: ys[i], a2: ys[j], heuristic: true }),
                _ => Err(Error::JapCondViolated(format!(
                    "no uniform {} of F(x, ·) over y in [{lo}, {hi}] for x in [{}, {}]",
                    if argmin.is_none() { "minimiser" } else { "maximiser" },
                    probe.0,
                    probe.1
                ))),
            }
        }
    }
}

/// How one of the three coupled processes ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LaneOutcome {
    Event(StoppingEvent),
    Fault { kind: FaultKind, time: f64 },
}

impl LaneOutcome {
    pub fn event(&self) -> Option<StoppingEvent> {
        match self {
            Self::Event(e) => Some(*e),
            Self::Fault { .. } => None,
        }
    }
}

impl fmt::Display for LaneOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Event(e) => write!(f, "{e}"),
            Self::Fault { kind, time } => write!(f, "Fault{kind:?}({time})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub seed: u64,
    pub a1: f64,
    pub a2: f64,
    /// Steps (including `t = 0`) at which all three processes were alive.
    pub grid_points: u64,
    /// Points with `x₁ > x + δ`.
    pub violations_low: u64,
    /// Points with `x > x₂ + δ`.
    pub violations_high: u64,
    pub delta: f64,
    /// `[x₁, x, x₂]`
    pub outcomes: [LaneOutcome; 3],
    /// Step size in effect when each process stopped.
    pub final_dt: [f64; 3],
}

impl SandwichReport {
    pub fn violation_fraction(&self) -> f64 {
        if self.grid_points == 0 {
            0.0
        } else {
            (self.violations_low + self.violations_high) as f64 / self.grid_points as f64
        }
    }

    /// Whenever the SDDE explodes before `window`, the matching bounding
    /// process explodes no later than one step afterwards.
    pub fn explosion_ordering_holds(&self, window: f64) -> bool {
        let dt = self.final_dt[1];
        match self.outcomes[1].event() {
            Some(StoppingEvent::BlowUpPlus(t)) if t < window => {
                matches!(self.outcomes[2].event(), Some(StoppingEvent::BlowUpPlus(t2)) if t2 <= t + dt)
            }
            Some(StoppingEvent::BlowUpMinus(t)) if t < window => {
                matches!(self.outcomes[0].event(), Some(StoppingEvent::BlowUpMinus(t1)) if t1 <= t + dt)
            }
            _ => true,
        }
    }

    pub const CSV_HEADER: &'static str = "seed,a1,a2,grid_points,viol_low,viol_high,event_x1,event_x,event_x2";

    pub fn write_csv_row<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.a1,
            self.a2,
            self.grid_points,
            self.violations_low,
            self.violations_high,
            self.outcomes[0],
            self.outcomes[1],
            self.outcomes[2]
        )
    }
}

/// A sandwich run with the three trajectories (or their faults).
#[derive(Debug, Clone)]
pub struct SandwichRun {
    pub report: SandwichReport,
    pub paths: [std::result::Result<PathResult, IntegrationFault>; 3],
}

/// Runs `x₁`, the SDDE `x`, and `x₂` from `φ(0)` on `[0, min(τ, horizon)]`
/// with identical Brownian increments and counts δ-violations of
/// `x₁ ≤ x ≤ x₂`.
pub fn coupled_sandwich(
    model: &ModelSpec,
    phi: &Segment,
    config: &IntegratorConfig,
    noise: &NoiseSource,
    delta: f64,
) -> Result<SandwichReport> {
    coupled_sandwich_paths(model, phi, config, noise, delta).map(|run| run.report)
}

pub fn coupled_sandwich_paths(
    model: &ModelSpec,
    phi: &Segment,
    config: &IntegratorConfig,
    noise: &NoiseSource,
    delta: f64,
) -> Result<SandwichRun> {
    if !(delta >= 0.0) {
        return Err(invalid("delta must be nonnegative"));
    }
    check_delay_inputs(model, phi, config)?;
    match osgood_divergent(&model.modulus) {
        Ok(true) => {}
        Ok(false) => return Err(Error::Precondition("diffusion modulus is not Osgood-divergent".into())),
        Err(e) => return Err(e),
    }
    let bounds = bound_constants(model, phi.range(), 201)?;
    let window = IntegratorConfig {
        horizon: config.horizon.min(model.delay),
        ..config.clone()
    };
    let lower: Arc<dyn Fn(f64) -> f64 + Send + Sync> = model.frozen_drift(bounds.a1);
    let upper: Arc<dyn Fn(f64) -> f64 + Send + Sync> = model.frozen_drift(bounds.a2);
    let x0 = phi.initial_value();
    let positive = model.positive_state;
    let mut lanes = [
        Lane::new(
            Box::new(Autonomous { drift: lower.as_ref(), diffusion: model.diffusion.as_ref() }),
            x0,
            &window,
            positive,
        ),
        Lane::new(Box::new(DelayDynamics::new(model, phi, &window, None)), x0, &window, positive),
        Lane::new(
            Box::new(Autonomous { drift: upper.as_ref(), diffusion: model.diffusion.as_ref() }),
            x0,
            &window,
            positive,
        ),
    ];
    let (mut points, mut low, mut high) = (0u64, 0u64, 0u64);
    let mut count = |lanes: &[Lane<'_>]| {
        if lanes.iter().all(Lane::alive) {
            points += 1;
            let (x1, x, x2) = (lanes[0].x, lanes[1].x, lanes[2].x);
            if x1 > x + delta {
                low += 1;
            }
            if x > x2 + delta {
                high += 1;
            }
        }
    };
    run_lockstep(&mut lanes, &window, noise, |_, lanes| count(lanes))?;
    let final_dt = [lanes[0].last_dt, lanes[1].last_dt, lanes[2].last_dt];
    let paths = lanes.map(Lane::into_result);
    let outcomes = [0, 1, 2].map(|i| match &paths[i] {
        Ok(p) => LaneOutcome::Event(p.event),
        Err(f) => LaneOutcome::Fault { kind: f.kind, time: f.time },
    });
    Ok(SandwichRun {
        report: SandwichReport {
            seed: noise.seed(),
            a1: bounds.a1,
            a2: bounds.a2,
            grid_points: points,
            violations_low: low,
            violations_high: high,
            delta,
            outcomes,
            final_dt,
        },
        paths,
    })
}
