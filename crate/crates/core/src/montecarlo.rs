//! Seeded replicas, Wilson intervals, and the experiments built on them.
//!
//! Replica `i` always uses seed `base_seed + i` and results are aggregated in
//! index order, so a report depends only on its inputs and never on how many
//! workers ran it.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog;
use crate::comparison::bound_constants;
use crate::error::{invalid, Error, Result};
use crate::event::StoppingEvent;
use crate::exec::Execution;
use crate::model::{osgood_divergent, ModelSpec};
use crate::noise::NoiseSource;
use crate::sde::{simulate_sde, IntegratorConfig, SdeProblem, SimulationError};
use crate::sdde::{build_initial_from_constant, simulate_sdde};
use crate::segment::Segment;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Fault share above which faulted replicas leave the denominator and the
/// report is marked invalid.
pub const FAULT_TOLERANCE: f64 = 1e-3;

/// Outcome labels counted in every report.
pub const LABELS: [&str; 5] = ["BlowUpPlus", "BlowUpMinus", "Extinction", "Censored", "Fault"];

/// Wilson score interval for `hits` successes in `n` trials.
pub fn wilson(hits: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    // at the boundaries the interval touches 0 or 1 analytically
    let lo = if hits == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if hits == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("fingerprinted values serialize");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub n_replicas: u64,
    /// Count per label in [`LABELS`]; sums to `n_replicas`.
    pub event_counts: BTreeMap<String, u64>,
    pub hits: u64,
    /// Replicas the estimate is taken over.
    pub denominator: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub base_seed: u64,
    pub fingerprint: String,
    pub faults: u64,
    pub valid: bool,
}

impl MCReport {
    /// Builds a report from per-replica outcomes (`None` marks a fault).
    pub fn from_outcomes(
        outcomes: &[Option<StoppingEvent>],
        predicate: impl Fn(&StoppingEvent) -> bool,
        base_seed: u64,
        fingerprint: String,
    ) -> Result<Self> {
        let n = outcomes.len() as u64;
        if n == 0 {
            return Err(invalid("need at least one replica"));
        }
        let mut counts: BTreeMap<String, u64> = LABELS.iter().map(|l| (l.to_string(), 0)).collect();
        let mut hits = 0;
        for o in outcomes {
            let label = o.map_or("Fault", |e| e.label());
            *counts.get_mut(label).expect("known label") += 1;
            if o.as_ref().is_some_and(&predicate) {
                hits += 1;
            }
        }
        let faults = counts["Fault"];
        let excluded = faults as f64 > FAULT_TOLERANCE * n as f64;
        let denominator = if excluded { n - faults } else { n };
        let (ci_low, ci_high) = wilson(hits, denominator);
        Ok(Self {
            n_replicas: n,
            event_counts: counts,
            hits,
            denominator,
            estimate: if denominator == 0 { 0.0 } else { hits as f64 / denominator as f64 },
            ci_low,
            ci_high,
            base_seed,
            fingerprint,
            faults,
            valid: !excluded,
        })
    }

    /// Probability bounded away from zero at 95%.
    pub fn nonzero(&self) -> bool {
        self.ci_low > 0.0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One replica: the stopping event, a fault, or a rejected configuration.
pub type ReplicaResult = std::result::Result<StoppingEvent, SimulationError>;

fn run_replicas<R>(runner: R, n: u64, base_seed: u64, exec: Execution) -> Result<Vec<Option<StoppingEvent>>>
where
    R: Fn(u64) -> ReplicaResult + Sync + Send,
{
    if n == 0 {
        return Err(invalid("need at least one replica"));
    }
    exec.map(n, |i| runner(base_seed.wrapping_add(i)))
        .into_iter()
        .map(|r| match r {
            Ok(e) => Ok(Some(e)),
            Err(SimulationError::Fault(_)) => Ok(None),
            Err(SimulationError::Config(e)) => Err(e),
        })
        .collect()
}

/// Runs `runner(base_seed + i)` for `i < n` and estimates `P(predicate)`.
pub fn estimate_event<R, P>(runner: R, predicate: P, n: u64, base_seed: u64, fingerprint: String, exec: Execution) -> Result<MCReport>
where
    R: Fn(u64) -> ReplicaResult + Sync + Send,
    P: Fn(&StoppingEvent) -> bool,
{
    let outcomes = run_replicas(runner, n, base_seed, exec)?;
    MCReport::from_outcomes(&outcomes, predicate, base_seed, fingerprint)
}

/// Explosion times binned into `[k, k + 1)`, `k < horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplosionHistogram {
    pub bins: Vec<u64>,
    /// Replicas without a blow-up before the horizon (extinctions included).
    pub censored: u64,
    pub faults: u64,
    pub n_replicas: u64,
    pub base_seed: u64,
}

impl ExplosionHistogram {
    pub fn from_outcomes(outcomes: &[Option<StoppingEvent>], horizon: u32, base_seed: u64) -> Self {
        let mut bins = vec![0; horizon as usize];
        let (mut censored, mut faults) = (0, 0);
        for o in outcomes {
            match o {
                None => faults += 1,
                Some(e) if e.is_blow_up() && e.time() < horizon as f64 => bins[e.time().floor() as usize] += 1,
                Some(_) => censored += 1,
            }
        }
        Self {
            bins,
            censored,
            faults,
            n_replicas: outcomes.len() as u64,
            base_seed,
        }
    }

    /// Wilson interval for the share of replicas in bin `k`.
    pub fn bin_interval(&self, k: usize) -> (f64, f64) {
        wilson(self.bins[k], self.n_replicas)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "bin_start,count")?;
        for (k, c) in self.bins.iter().enumerate() {
            writeln!(out, "{k},{c}")?;
        }
        writeln!(out, "# censored={},faults={}", self.censored, self.faults)
    }
}

pub fn explosion_histogram<R>(runner: R, horizon: u32, n: u64, base_seed: u64, exec: Execution) -> Result<ExplosionHistogram>
where
    R: Fn(u64) -> ReplicaResult + Sync + Send,
{
    if horizon == 0 {
        return Err(invalid("horizon must be a positive integer"));
    }
    let outcomes = run_replicas(runner, n, base_seed, exec)?;
    Ok(ExplosionHistogram::from_outcomes(&outcomes, horizon, base_seed))
}

/// Only the endpoints of each replica path are kept.
fn replica_config(config: &IntegratorConfig) -> IntegratorConfig {
    config.clone().with_output_every(Some(config.horizon))
}

pub fn sde_runner<'a>(problem: &'a SdeProblem, config: &IntegratorConfig) -> impl Fn(u64) -> ReplicaResult + Sync + Send + 'a {
    let config = replica_config(config);
    move |seed| simulate_sde(problem, &config, &NoiseSource::new(seed, config.dt_max)).map(|p| p.event)
}

pub fn sdde_runner<'a>(
    model: &'a ModelSpec,
    phi: &'a Segment,
    config: &IntegratorConfig,
) -> impl Fn(u64) -> ReplicaResult + Sync + Send + 'a {
    let config = replica_config(config);
    move |seed| simulate_sdde(model, phi, &config, &NoiseSource::new(seed, config.dt_max)).map(|p| p.event)
}

#[derive(Serialize)]
struct RunKey<'a> {
    experiment: &'a str,
    role: &'a str,
    model: &'a str,
    frozen_at: Option<f64>,
    phi_grid: &'a [f64],
    phi_values: &'a [f64],
    config: &'a IntegratorConfig,
    n: u64,
}

/// Both directions of the SDDE ⇔ SDE explosion equivalence on `[0, τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub a1: f64,
    pub a2: f64,
    /// SDDE blows up to +∞ before τ.
    pub sdde_plus: MCReport,
    /// SDDE blows up to −∞ before τ.
    pub sdde_minus: MCReport,
    /// Upper bounding SDE (delayed argument frozen at a₂) blows up to +∞.
    pub upper_plus: MCReport,
    /// Lower bounding SDE (frozen at a₁) blows up to −∞.
    pub lower_minus: MCReport,
    /// SDDE started from the ramp towards a₂ blows up to +∞.
    pub converse_plus: MCReport,
    /// SDDE started from the ramp towards a₁ blows up to −∞.
    pub converse_minus: MCReport,
    pub pattern_holds: bool,
}

impl EquivalenceReport {
    pub fn reports(&self) -> [(&'static str, &MCReport); 6] {
        [
            ("sdde_plus", &self.sdde_plus),
            ("sdde_minus", &self.sdde_minus),
            ("upper_plus", &self.upper_plus),
            ("lower_minus", &self.lower_minus),
            ("converse_plus", &self.converse_plus),
            ("converse_minus", &self.converse_minus),
        ]
    }

    pub fn valid(&self) -> bool {
        self.reports().iter().all(|(_, r)| r.valid)
    }
}

/// Width of the ramp used for the converse direction.
pub const CONVERSE_RAMP: f64 = 0.1;

pub fn equivalence_experiment(
    model: &ModelSpec,
    phi: &Segment,
    config: &IntegratorConfig,
    n: u64,
    base_seed: u64,
    exec: Execution,
) -> Result<EquivalenceReport> {
    if !osgood_divergent(&model.modulus)? {
        return Err(Error::Precondition("diffusion modulus is not Osgood-divergent".into()));
    }
    let bounds = bound_constants(model, phi.range(), 201)?;
    let tau = model.delay;
    let window = IntegratorConfig {
        horizon: config.horizon.min(tau),
        ..config.clone()
    };
    let plus = move |e: &StoppingEvent| matches!(e, StoppingEvent::BlowUpPlus(t) if *t < tau);
    let minus = move |e: &StoppingEvent| matches!(e, StoppingEvent::BlowUpMinus(t) if *t < tau);
    let key = |role: &'static str, frozen_at: Option<f64>, seg: &Segment| {
        fingerprint(&RunKey {
            experiment: "equivalence",
            role,
            model: &model.name,
            frozen_at,
            phi_grid: seg.grid(),
            phi_values: seg.values(),
            config: &window,
            n,
        })
    };

    let sdde = run_replicas(sdde_runner(model, phi, &window), n, base_seed, exec)?;
    let sdde_plus = MCReport::from_outcomes(&sdde, plus, base_seed, key("sdde_plus", None, phi))?;
    let sdde_minus = MCReport::from_outcomes(&sdde, minus, base_seed, key("sdde_minus", None, phi))?;

    let x0 = phi.initial_value();
    let upper = SdeProblem::frozen(model, bounds.a2, x0)?;
    let lower = SdeProblem::frozen(model, bounds.a1, x0)?;
    let upper_runs = run_replicas(sde_runner(&upper, &window), n, base_seed, exec)?;
    let lower_runs = run_replicas(sde_runner(&lower, &window), n, base_seed, exec)?;
    let upper_plus = MCReport::from_outcomes(&upper_runs, plus, base_seed, key("upper_plus", Some(bounds.a2), phi))?;
    let lower_minus = MCReport::from_outcomes(&lower_runs, minus, base_seed, key("lower_minus", Some(bounds.a1), phi))?;

    let psi_plus = build_initial_from_constant(bounds.a2, x0, CONVERSE_RAMP, tau)?;
    let psi_minus = build_initial_from_constant(bounds.a1, x0, CONVERSE_RAMP, tau)?;
    let conv_plus_runs = run_replicas(sdde_runner(model, &psi_plus, &window), n, base_seed, exec)?;
    let conv_minus_runs = run_replicas(sdde_runner(model, &psi_minus, &window), n, base_seed, exec)?;
    let converse_plus = MCReport::from_outcomes(&conv_plus_runs, plus, base_seed, key("converse_plus", None, &psi_plus))?;
    let converse_minus = MCReport::from_outcomes(&conv_minus_runs, minus, base_seed, key("converse_minus", None, &psi_minus))?;

    let implies = |a: &MCReport, b: &MCReport| !a.nonzero() || b.nonzero();
    let pattern_holds = implies(&sdde_plus, &upper_plus)
        && implies(&sdde_minus, &lower_minus)
        && implies(&upper_plus, &converse_plus)
        && implies(&lower_minus, &converse_minus);
    Ok(EquivalenceReport {
        a1: bounds.a1,
        a2: bounds.a2,
        sdde_plus,
        sdde_minus,
        upper_plus,
        lower_minus,
        converse_plus,
        converse_minus,
        pattern_holds,
    })
}

#[derive(Serialize)]
struct DichotomyKey<'a> {
    experiment: &'a str,
    a: f64,
    b: f64,
    p: f64,
    phi_grid: &'a [f64],
    phi_values: &'a [f64],
    config: &'a IntegratorConfig,
    n: u64,
}

/// Frequency of extinction before `horizon` for the delayed population model.
#[allow(clippy::too_many_arguments)]
pub fn dichotomy_experiment(
    a: f64,
    b: f64,
    p: f64,
    phi: &Segment,
    horizon: f64,
    config: &IntegratorConfig,
    n: u64,
    base_seed: u64,
    exec: Execution,
) -> Result<MCReport> {
    if !(p > 0.0 && p < 1.0) || p == 0.5 {
        return Err(invalid(format!("p must lie in (0, 1) without 1/2, got {p}")));
    }
    if phi.values().iter().any(|&v| !(v > 0.0)) {
        return Err(invalid("initial segment must be positive"));
    }
    let model = catalog::population(a, b, p)?;
    let config = IntegratorConfig {
        horizon,
        ..config.clone()
    };
    config.validate()?;
    let fp = fingerprint(&DichotomyKey {
        experiment: "dichotomy",
        a,
        b,
        p,
        phi_grid: phi.grid(),
        phi_values: phi.values(),
        config: &config,
        n,
    });
    estimate_event(
        sdde_runner(&model, phi, &config),
        |e| matches!(e, StoppingEvent::Extinction(_)),
        n,
        base_seed,
        fp,
        exec,
    )
}
