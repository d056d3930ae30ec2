//! Stopping events, simulated paths, and their CSV export.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// How a simulated path ended.
///
/// `BlowUpPlus`/`BlowUpMinus` carry the certified top-rung crossing time,
/// `Extinction` the first time a positive-state path reached the barrier,
/// and `Censored` the time at which observation stopped without either.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StoppingEvent {
    BlowUpPlus(f64),
    BlowUpMinus(f64),
    Extinction(f64),
    Censored(f64),
}

impl StoppingEvent {
    pub fn time(&self) -> f64 {
        match *self {
            Self::BlowUpPlus(t) | Self::BlowUpMinus(t) | Self::Extinction(t) | Self::Censored(t) => t,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::BlowUpPlus(_) => "BlowUpPlus",
            Self::BlowUpMinus(_) => "BlowUpMinus",
            Self::Extinction(_) => "Extinction",
            Self::Censored(_) => "Censored",
        }
    }

    pub fn is_blow_up(&self) -> bool {
        matches!(self, Self::BlowUpPlus(_) | Self::BlowUpMinus(_))
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, Self::Censored(_))
    }

    /// Explosion (either direction) strictly before `t`.
    pub fn blows_up_before(&self, t: f64) -> bool {
        self.is_blow_up() && self.time() < t
    }
}

impl fmt::Display for StoppingEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.label(), self.time())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultKind {
    /// A coefficient or the state became NaN or infinite.
    NonFinite,
    /// The adaptive step fell below the minimum step.
    DtUnderflow,
}

/// A run that broke down before any stopping condition was met.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationFault {
    pub kind: FaultKind,
    pub time: f64,
    pub last_value: f64,
    /// The trajectory recorded up to the fault.
    pub partial: PathResult,
}

impl fmt::Display for IntegrationFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "integration fault {:?} at t = {} (last x = {})",
            self.kind, self.time, self.last_value
        )
    }
}

impl std::error::Error for IntegrationFault {}

impl From<IntegrationFault> for crate::Error {
    fn from(fault: IntegrationFault) -> Self {
        crate::Error::Fault {
            kind: fault.kind,
            time: fault.time,
        }
    }
}

/// A trajectory on its output grid plus the event that ended it.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub event: StoppingEvent,
}

impl PathResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_value(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// Linear interpolation on the recorded grid; exact at nodes.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let first = *self.times.first()?;
        let last = *self.times.last()?;
        if t < first || t > last {
            return None;
        }
        let i = self.times.partition_point(|&s| s < t);
        if self.times[i] == t {
            return Some(self.values[i]);
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (x0, x1) = (self.values[i - 1], self.values[i]);
        Some(x0 + (x1 - x0) * (t - t0) / (t1 - t0))
    }

    /// Writes `t,x` rows followed by `# event=<label>,t=<time>`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x")?;
        for (t, x) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t},{x}")?;
        }
        writeln!(
            out,
            "# event={},t={}",
            self.event.label(),
            self.event.time()
        )
    }
}
