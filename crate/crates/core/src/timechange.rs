//! Diagnostics for the time change `∫₀ᵗ σ dW = B(T(t))`, `T(t) = ∫₀ᵗ σ² ds`.
//!
//! `B` is never built. Two of its consequences are checked instead: the
//! realized quadratic variation of the integral tracks `T`, and the
//! increments standardized by `ΔT` look standard normal.

use std::io::{self, Write};

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::noise::NoiseSource;
use crate::sde::{simulate_sde, DtPolicy, IntegratorConfig, SdeProblem, SimulationError};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangeDiagnostics {
    pub t_grid: Vec<f64>,
    /// Realized quadratic variation `Σ (σⱼ ΔWⱼ)²` up to each grid time.
    pub qv_estimate: Vec<f64>,
    /// Trapezoidal `∫ σ² ds` up to each grid time.
    pub t_estimate: Vec<f64>,
    /// Kolmogorov–Smirnov distance of `ΔIⱼ / √ΔTⱼ` from N(0, 1).
    pub ks_statistic: f64,
    /// 5% critical value for the sample size.
    pub ks_critical: f64,
}

impl TimeChangeDiagnostics {
    /// `qv / T` at the last grid time.
    pub fn final_ratio(&self) -> f64 {
        self.qv_estimate.last().unwrap() / self.t_estimate.last().unwrap()
    }

    pub fn ks_passes(&self) -> bool {
        self.ks_statistic < self.ks_critical
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,qv,T")?;
        for ((t, q), tt) in self.t_grid.iter().zip(&self.qv_estimate).zip(&self.t_estimate) {
            writeln!(out, "{t},{q},{tt}")?;
        }
        writeln!(out, "# ks={},critical={}", self.ks_statistic, self.ks_critical)
    }
}

/// Asymptotic 5% critical value of the one-sample KS statistic with the
/// usual small-sample correction.
pub fn ks_critical_value(n: usize) -> f64 {
    let s = (n as f64).sqrt();
    1.3581 / (s + 0.12 + 0.11 / s)
}

/// One-sample KS distance of `samples` from the standard normal.
pub fn ks_statistic_normal(samples: &[f64]) -> f64 {
    let normal = Normal::standard();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal.cdf(x);
            ((i + 1) as f64 / n - c).max(c - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// `sigma[j]` is σ at `j·dt` (N + 1 values), `increments[j]` the Brownian
/// increment over `[j·dt, (j+1)·dt]` (N values).
pub fn diagnose_time_change(sigma: &[f64], increments: &[f64], dt: f64) -> Result<TimeChangeDiagnostics> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt must be positive"));
    }
    if increments.is_empty() || sigma.len() != increments.len() + 1 {
        return Err(invalid(format!(
            "need N + 1 sigma samples for N increments, got {} and {}",
            sigma.len(),
            increments.len()
        )));
    }
    if let Some((j, s)) = sigma.iter().enumerate().find(|(_, s)| !(s.powi(2) > 0.0)) {
        return Err(Error::Precondition(format!("sigma^2 = {} at sample {j} is not positive", s * s)));
    }
    let n = increments.len();
    let mut t_grid = Vec::with_capacity(n + 1);
    let mut qv = Vec::with_capacity(n + 1);
    let mut tt = Vec::with_capacity(n + 1);
    let mut standardized = Vec::with_capacity(n);
    let (mut q, mut big_t) = (0.0, 0.0);
    t_grid.push(0.0);
    qv.push(0.0);
    tt.push(0.0);
    for j in 0..n {
        let d_int = sigma[j] * increments[j];
        let d_t = 0.5 * (sigma[j] * sigma[j] + sigma[j + 1] * sigma[j + 1]) * dt;
        q += d_int * d_int;
        big_t += d_t;
        standardized.push(d_int / d_t.sqrt());
        t_grid.push((j + 1) as f64 * dt);
        qv.push(q);
        tt.push(big_t);
    }
    Ok(TimeChangeDiagnostics {
        t_grid,
        qv_estimate: qv,
        t_estimate: tt,
        ks_statistic: ks_statistic_normal(&standardized),
        ks_critical: ks_critical_value(n),
    })
}

/// Simulates `problem` on a fixed grid of `dt` up to `horizon` and returns
/// σ at every grid point with the Brownian increments that drove it.
pub fn sample_sigma_path(
    problem: &SdeProblem,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> std::result::Result<(Vec<f64>, Vec<f64>), SimulationError> {
    let config = IntegratorConfig::new(dt, horizon).with_policy(DtPolicy::Fixed);
    let noise = NoiseSource::new(seed, dt);
    let path = simulate_sde(problem, &config, &noise)?;
    let sigma: Vec<f64> = path.values.iter().map(|&x| (problem.diffusion)(x)).collect();
    let increments = (0..sigma.len().saturating_sub(1) as u64).map(|i| noise.increment(i)).collect();
    Ok((sigma, increments))
}
