//! Model descriptions and the regularity checks the comparison argument needs.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `F(x, x_delayed)`.
pub type DelayedDrift = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// A scalar coefficient such as `g(x)` or `b(x)`.
pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Modulus of continuity `ρ` for the diffusion coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModulusFamily {
    /// `ρ(u) = k·u^alpha`
    Power { k: f64, alpha: f64 },
    /// `ρ(u) = k·u`
    Lipschitz { k: f64 },
    /// Tabulated `(u, ρ(u))`, linearly interpolated, sorted by `u`.
    Custom(Vec<(f64, f64)>),
}

impl ModulusFamily {
    pub fn power(k: f64, alpha: f64) -> Result<Self> {
        if !(k > 0.0) || !(alpha > 0.0) {
            return Err(invalid("power modulus needs k > 0 and alpha > 0"));
        }
        Ok(Self::Power { k, alpha })
    }

    pub fn lipschitz(k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(invalid("Lipschitz modulus needs k > 0"));
        }
        Ok(Self::Lipschitz { k })
    }

    pub fn custom(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|(u, r)| !u.is_finite() || !r.is_finite()) {
            return Err(invalid("custom modulus needs finite samples"));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self::Custom(samples))
    }

    pub fn rho(&self, u: f64) -> f64 {
        match self {
            Self::Power { k, alpha } => k * u.powf(*alpha),
            Self::Lipschitz { k } => k * u,
            Self::Custom(samples) => {
                let i = samples.partition_point(|s| s.0 < u);
                if i == 0 {
                    samples[0].1
                } else if i == samples.len() {
                    samples[i - 1].1
                } else {
                    let (u0, r0) = samples[i - 1];
                    let (u1, r1) = samples[i];
                    r0 + (r1 - r0) * (u - u0) / (u1 - u0)
                }
            }
        }
    }
}

/// True iff `∫₀^ε ρ(ξ)^{-2} dξ = ∞`, i.e. `alpha ≥ 1/2` for power moduli.
pub fn osgood_divergent(family: &ModulusFamily) -> Result<bool> {
    match family {
        ModulusFamily::Power { alpha, .. } => Ok(*alpha >= 0.5),
        ModulusFamily::Lipschitz { .. } => Ok(true),
        ModulusFamily::Custom(_) => Err(Error::OsgoodUndecidable),
    }
}

/// Sign of `y ↦ F(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Unknown,
}

#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub drift_delayed: DelayedDrift,
    pub diffusion: Coefficient,
    pub delay: f64,
    pub modulus: ModulusFamily,
    pub delay_monotonicity: Monotonicity,
    /// State space is `(0, ∞)` and extinction is observable.
    pub positive_state: bool,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("delay", &self.delay)
            .field("modulus", &self.modulus)
            .field("delay_monotonicity", &self.delay_monotonicity)
            .field("positive_state", &self.positive_state)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        drift_delayed: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
        delay: f64,
    ) -> Result<Self> {
        if !(delay > 0.0) || !delay.is_finite() {
            return Err(invalid("delay must be positive and finite"));
        }
        Ok(Self {
            name: name.into(),
            drift_delayed: Arc::new(drift_delayed),
            diffusion: Arc::new(diffusion),
            delay,
            modulus: ModulusFamily::Lipschitz { k: 1.0 },
            delay_monotonicity: Monotonicity::Unknown,
            positive_state: false,
        })
    }

    pub fn with_modulus(mut self, modulus: ModulusFamily) -> Self {
        self.modulus = modulus;
        self
    }

    pub fn with_monotonicity(mut self, m: Monotonicity) -> Self {
        self.delay_monotonicity = m;
        self
    }

    pub fn positive(mut self) -> Self {
        self.positive_state = true;
        self
    }

    pub fn drift(&self, x: f64, delayed: f64) -> f64 {
        (self.drift_delayed)(x, delayed)
    }

    pub fn diffusion_at(&self, x: f64) -> f64 {
        (self.diffusion)(x)
    }

    /// `x ↦ F(x, a)`, the drift of the instantaneous counterpart.
    pub fn frozen_drift(&self, a: f64) -> Coefficient {
        let f = Arc::clone(&self.drift_delayed);
        Arc::new(move |x| f(x, a))
    }

    /// Checks that `F` and `g` return finite values on an `n × n` grid.
    pub fn check_finite(&self, x_box: (f64, f64), y_box: (f64, f64), n: usize) -> Result<()> {
        for x in linspace(x_box.0, x_box.1, n) {
            if !self.diffusion_at(x).is_finite() {
                return Err(invalid(format!("g({x}) is not finite")));
            }
            for y in linspace(y_box.0, y_box.1, n) {
                if !self.drift(x, y).is_finite() {
                    return Err(invalid(format!("F({x}, {y}) is not finite")));
                }
            }
        }
        Ok(())
    }

    /// Verifies the declared monotonicity by finite differences in `y`.
    pub fn validate_monotonicity(&self, x_box: (f64, f64), y_box: (f64, f64), n: usize) -> Result<()> {
        let sign = match self.delay_monotonicity {
            Monotonicity::Increasing => 1.0,
            Monotonicity::Decreasing => -1.0,
            Monotonicity::Unknown => return Ok(()),
        };
        let ys = linspace(y_box.0, y_box.1, n);
        for x in linspace(x_box.0, x_box.1, n) {
            for w in ys.windows(2) {
                let diff = sign * (self.drift(x, w[1]) - self.drift(x, w[0]));
                let scale = 1e-12 * (1.0 + self.drift(x, w[0]).abs());
                if diff < -scale {
                    return Err(invalid(format!(
                        "F({x}, ·) is not {:?} between y = {} and y = {}",
                        self.delay_monotonicity, w[0], w[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One pair `(x, y)` with `|g(x) − g(y)| > ρ(|x − y|) + 1e-12`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusViolation {
    pub x: f64,
    pub y: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViolationReport {
    pub violations: Vec<ModulusViolation>,
    /// `max |g(x) − g(y)| / ρ(|x − y|)` over the scanned pairs.
    pub worst_ratio: f64,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scans all pairs of an `n_samples` uniform grid over `box × box`.
pub fn validate_modulus(model: &ModelSpec, bounds: (f64, f64), n_samples: usize) -> ViolationReport {
    let xs = linspace(bounds.0, bounds.1, n_samples.max(2));
    let gs: Vec<f64> = xs.iter().map(|&x| model.diffusion_at(x)).collect();
    let mut report = ViolationReport::default();
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let lhs = (gs[i] - gs[j]).abs();
            let rhs = model.modulus.rho((xs[i] - xs[j]).abs());
            if rhs > 0.0 {
                report.worst_ratio = report.worst_ratio.max(lhs / rhs);
            }
            if lhs > rhs + 1e-12 {
                report.violations.push(ModulusViolation {
                    x: xs[i],
                    y: xs[j],
                    lhs,
                    rhs,
                });
            }
        }
    }
    report
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}
