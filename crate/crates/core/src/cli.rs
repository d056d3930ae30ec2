//! Config-driven batch front end.
//!
//! One TOML file describes one experiment. Results go to the configured
//! output directory together with `manifest.json`, which echoes the config
//! with every default filled in.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::comparison::{coupled_sandwich, SandwichReport, DEFAULT_DELTA};
use crate::error::{invalid, Error};
use crate::event::{IntegrationFault, PathResult};
use crate::exec::{with_workers, Execution};
use crate::model::ModelSpec;
use crate::montecarlo::{dichotomy_experiment, equivalence_experiment, explosion_histogram, sdde_runner, MCReport};
use crate::noise::NoiseSource;
use crate::sde::{simulate_sde, IntegratorConfig, SdeProblem, SimulationError};
use crate::sdde::{build_initial_from_constant, simulate_sdde};
use crate::segment::Segment;
use crate::timechange::{diagnose_time_change, sample_sigma_path};
use crate::transform::{pathwise_consistency, transformed_ladder, ConsistencyError, SmoothMap};

#[derive(Debug, Parser)]
#[command(name = "sddelab", version, about = "Run one SDDE blow-up/extinction experiment from a TOML config")]
pub struct Args {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads for replicas (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides `monte_carlo.base_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leave the timestamp out of manifest.json.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    SimulateDelay,
    Sandwich,
    TransformCheck,
    Timechange,
    Histogram,
    Equivalence,
    Dichotomy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ramp {
    pub a: f64,
    pub x0: f64,
    pub eps: f64,
}

/// Starting data. SDE commands use `x0` and freeze the delayed argument at
/// `frozen_at`; delay commands use a constant segment or a ramp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub x0: f64,
    pub frozen_at: Option<f64>,
    pub constant: Option<f64>,
    pub ramp: Option<Ramp>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            x0: 1.0,
            frozen_at: None,
            constant: None,
            ramp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub n: u64,
    pub base_seed: u64,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self { n: 1000, base_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("results") }
    }
}

/// Command-specific knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Sandwich violation tolerance.
    pub delta: f64,
    /// Change of variables for `transform-check`: `neg-log`, `exp-neg`, `identity`.
    pub transform: String,
    /// Dichotomy and histogram horizon; the integrator horizon otherwise.
    pub horizon: Option<f64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            transform: "neg-log".into(),
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub model: ModelSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error(transparent)]
    Fault(#[from] IntegrationFault),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path)
    }

    /// Checks everything that can be checked without running: model name
    /// and parameters, integrator settings, initial data, command knobs.
    pub fn validate(&self) -> Result<(), Error> {
        self.model()?;
        self.integrator.validate()?;
        if self.monte_carlo.n == 0 {
            return Err(invalid("monte_carlo.n must be at least 1"));
        }
        if !(self.experiment.delta >= 0.0) {
            return Err(invalid("experiment.delta must be nonnegative"));
        }
        if let Some(h) = self.experiment.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(invalid("experiment.horizon must be positive"));
            }
        }
        if self.initial.constant.is_some() && self.initial.ramp.is_some() {
            return Err(invalid("initial.constant and initial.ramp are exclusive"));
        }
        self.transform_map()?;
        match self.command {
            Command::Simulate | Command::TransformCheck | Command::Timechange => {
                self.sde_problem()?;
            }
            Command::Dichotomy => {
                if self.model.name != "population" {
                    return Err(invalid("dichotomy runs the `population` model"));
                }
                self.phi()?;
            }
            Command::Histogram => {
                let h = self.histogram_horizon();
                if h.fract() != 0.0 || h < 1.0 {
                    return Err(invalid(format!("histogram horizon must be a positive integer, got {h}")));
                }
                self.phi()?;
            }
            _ => {
                self.phi()?;
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelSpec, Error> {
        catalog::lookup(&self.model.name, &self.model.params)
    }

    pub fn phi(&self) -> Result<Segment, Error> {
        let tau = self.model()?.delay;
        match (&self.initial.ramp, self.initial.constant) {
            (Some(r), _) => build_initial_from_constant(r.a, r.x0, r.eps, tau),
            (None, c) => Segment::constant(tau, c.unwrap_or(self.initial.x0)),
        }
    }

    pub fn sde_problem(&self) -> Result<SdeProblem, Error> {
        let model = self.model()?;
        SdeProblem::frozen(&model, self.initial.frozen_at.unwrap_or(self.initial.x0), self.initial.x0)
    }

    fn transform_map(&self) -> Result<SmoothMap, Error> {
        match self.experiment.transform.as_str() {
            "neg-log" => Ok(SmoothMap::neg_log()),
            "exp-neg" => Ok(SmoothMap::exp_neg()),
            "identity" => Ok(SmoothMap::identity()),
            other => Err(invalid(format!("unknown transform `{other}`; valid: neg-log, exp-neg, identity"))),
        }
    }

    fn histogram_horizon(&self) -> f64 {
        self.experiment.horizon.unwrap_or(self.integrator.horizon)
    }
}

/// What a run printed and whether it should exit successfully.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub success: bool,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("results serialize");
        self.write(name, |w| writeln!(w, "{text}"))
    }
}

fn write_path(w: &mut dyn Write, result: &Result<PathResult, IntegrationFault>) -> io::Result<()> {
    match result {
        Ok(path) => path.write_csv(w),
        Err(fault) => {
            writeln!(w, "t,x")?;
            for (t, x) in fault.partial.times.iter().zip(&fault.partial.values) {
                writeln!(w, "{t},{x}")?;
            }
            writeln!(w, "# fault={:?},t={}", fault.kind, fault.time)
        }
    }
}

fn split(r: Result<PathResult, SimulationError>) -> Result<Result<PathResult, IntegrationFault>, CliError> {
    match r {
        Ok(p) => Ok(Ok(p)),
        Err(SimulationError::Fault(f)) => Ok(Err(f)),
        Err(SimulationError::Config(e)) => Err(e.into()),
    }
}

fn path_summary(command: &str, r: &Result<PathResult, IntegrationFault>) -> (String, bool) {
    match r {
        Ok(p) => (format!("{command}: {} after {} points", p.event, p.len()), true),
        Err(f) => (format!("{command}: fault {:?} at t = {}", f.kind, f.time), false),
    }
}

fn report_line(name: &str, r: &MCReport) -> String {
    format!(
        "{name} {}/{} = {:.4} [{:.4}, {:.4}]{}",
        r.hits,
        r.denominator,
        r.estimate,
        r.ci_low,
        r.ci_high,
        if r.valid { "" } else { " INVALID" }
    )
}

/// Runs one experiment with an already-parsed config.
pub fn run_config(config: &ExperimentConfig, workers: Option<usize>, timestamp: bool) -> Result<Outcome, CliError> {
    config.validate()?;
    let dir = &config.output.dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut out = Output { dir: dir.clone(), files: Vec::new() };
    let seed = config.monte_carlo.base_seed;
    let n = config.monte_carlo.n;
    let cfg = &config.integrator;
    let exec = Execution::Parallel;

    let (summary, success) = match config.command {
        Command::Simulate => {
            let r = split(simulate_sde(&config.sde_problem()?, cfg, &NoiseSource::new(seed, cfg.dt_max)))?;
            out.write("trajectory.csv", |w| write_path(w, &r))?;
            path_summary("simulate", &r)
        }
        Command::SimulateDelay => {
            let r = split(simulate_sdde(&config.model()?, &config.phi()?, cfg, &NoiseSource::new(seed, cfg.dt_max)))?;
            out.write("trajectory.csv", |w| write_path(w, &r))?;
            path_summary("simulate-delay", &r)
        }
        Command::Sandwich => {
            let model = config.model()?;
            let phi = config.phi()?;
            let delta = config.experiment.delta;
            let rows: Vec<Result<SandwichReport, Error>> = with_workers(workers, || {
                exec.map(n, |i| coupled_sandwich(&model, &phi, cfg, &NoiseSource::new(seed.wrapping_add(i), cfg.dt_max), delta))
            });
            let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
            out.write("sandwich.csv", |w| {
                writeln!(w, "{}", SandwichReport::CSV_HEADER)?;
                rows.iter().try_for_each(|r| r.write_csv_row(&mut *w))
            })?;
            let violating = rows.iter().filter(|r| r.violations_low + r.violations_high > 0).count();
            let mean = rows.iter().map(SandwichReport::violation_fraction).sum::<f64>() / n as f64;
            let window = model.delay.min(cfg.horizon);
            let ordering = rows.iter().filter(|r| !r.explosion_ordering_holds(window)).count();
            (
                format!("sandwich: {n} seeds, {violating} with violations, mean violation fraction {mean:.3e}, {ordering} ordering counterexamples"),
                true,
            )
        }
        Command::TransformCheck => {
            let problem = config.sde_problem()?;
            let map = config.transform_map()?;
            let ladder = if map.name == "neg-log" { transformed_ladder(cfg.extinction_eps) } else { cfg.ladder.clone() };
            match pathwise_consistency(&problem, &map, cfg, ladder, &NoiseSource::new(seed, cfg.dt_max)) {
                Ok(r) => {
                    out.json("transform.json", &r)?;
                    (
                        format!("transform-check: sup discrepancy {:.3e}, direct {}, transformed {}", r.discrepancy, r.direct, r.transformed),
                        true,
                    )
                }
                Err(ConsistencyError::Config(e)) => return Err(e.into()),
                Err(ConsistencyError::Fault { fault, partial_discrepancy, .. }) => {
                    out.json(
                        "transform.json",
                        &serde_json::json!({ "fault": format!("{:?}", fault.kind), "time": fault.time, "partial_discrepancy": partial_discrepancy }),
                    )?;
                    (format!("transform-check: fault {:?} at t = {}", fault.kind, fault.time), false)
                }
            }
        }
        Command::Timechange => {
            let problem = config.sde_problem()?;
            let (sigma, dw) = sample_sigma_path(&problem, cfg.dt_max, cfg.horizon, seed).map_err(|e| match e {
                SimulationError::Config(e) => CliError::from(e),
                SimulationError::Fault(f) => CliError::from(f),
            })?;
            let d = diagnose_time_change(&sigma, &dw, cfg.dt_max)?;
            out.write("timechange.csv", |w| d.write_csv(w))?;
            (
                format!(
                    "timechange: qv/T = {:.4} at t = {}, KS {:.4} (critical {:.4})",
                    d.final_ratio(),
                    d.t_grid.last().unwrap(),
                    d.ks_statistic,
                    d.ks_critical
                ),
                true,
            )
        }
        Command::Histogram => {
            let model = config.model()?;
            let phi = config.phi()?;
            let horizon = config.histogram_horizon();
            let run_cfg = IntegratorConfig { horizon, ..cfg.clone() };
            let h = with_workers(workers, || explosion_histogram(sdde_runner(&model, &phi, &run_cfg), horizon as u32, n, seed, exec))?;
            out.write("histogram.csv", |w| h.write_csv(w))?;
            out.json("histogram.json", &h)?;
            let peak = (0..h.bins.len()).max_by_key(|&k| h.bins[k]).unwrap_or(0);
            (
                format!("histogram: {n} replicas, busiest bin [{peak},{}) with {}, censored {}, faults {}", peak + 1, h.bins[peak], h.censored, h.faults),
                true,
            )
        }
        Command::Equivalence => {
            let model = config.model()?;
            let phi = config.phi()?;
            let r = with_workers(workers, || equivalence_experiment(&model, &phi, cfg, n, seed, exec))?;
            out.json("equivalence.json", &r)?;
            let parts: Vec<String> = r.reports().iter().map(|(k, rep)| report_line(k, rep)).collect();
            (format!("equivalence: pattern_holds={}; {}", r.pattern_holds, parts.join("; ")), r.valid())
        }
        Command::Dichotomy => {
            let params = catalog::resolve_params("population", &config.model.params)?;
            let phi = config.phi()?;
            let horizon = config.experiment.horizon.unwrap_or(cfg.horizon);
            let r = with_workers(workers, || {
                dichotomy_experiment(params["a"], params["b"], params["p"], &phi, horizon, cfg, n, seed, exec)
            })?;
            out.json("report.json", &r)?;
            (format!("dichotomy: extinction {}", report_line("frequency", &r)), r.valid)
        }
    };

    let generated_at_unix = timestamp.then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    out.json(
        "manifest.json",
        &Manifest {
            tool: "sddelab",
            version: env!("CARGO_PKG_VERSION"),
            config,
            generated_at_unix,
        },
    )?;
    Ok(Outcome {
        summary,
        success,
        files: out.files,
    })
}

/// Parses the config named in `args`, applies overrides, and runs it.
pub fn run(args: &Args) -> Result<Outcome, CliError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.monte_carlo.base_seed = seed;
    }
    if args.workers == Some(0) {
        return Err(invalid("--workers must be at least 1").into());
    }
    run_config(&config, args.workers, !args.no_timestamp)
}

/// Entry point shared by the binary: returns the process exit code.
pub fn main_with(args: Args) -> i32 {
    match run(&args) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.success {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
