//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use sddelab::catalog;
use sddelab::comparison::{coupled_sandwich, coupled_sandwich_paths};
use sddelab::exec::Execution;
use sddelab::model::Coefficient;
use sddelab::montecarlo::{dichotomy_experiment, equivalence_experiment};
use sddelab::timechange::diagnose_time_change;
use sddelab::transform::{pathwise_consistency, transformed_ladder, SmoothMap};
use sddelab::{
    build_initial_from_constant, simulate_sde, simulate_sdde, DtPolicy, IntegratorConfig, NoiseSource, SdeProblem, Segment,
    StoppingEvent,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn deterministic_blow_up() -> Verdict {
    let model = catalog::lookup("quadratic", &Default::default()).unwrap();
    let problem = SdeProblem::frozen(&model, 0.0, 1.0).unwrap();
    let cfg = IntegratorConfig::new(1e-5, 2.0).with_output_every(Some(0.01));
    match simulate_sde(&problem, &cfg, &NoiseSource::new(0, 1e-5)) {
        Ok(p) => match p.event {
            StoppingEvent::BlowUpPlus(t) => verdict((t - 1.0).abs() <= 0.01, format!("BlowUpPlus at t* = {t:.6}")),
            e => verdict(false, format!("expected BlowUpPlus, got {e}")),
        },
        Err(e) => verdict(false, format!("{e}")),
    }
}

fn method_of_steps() -> Verdict {
    let model = catalog::lookup("pure-delay", &Default::default()).unwrap();
    let phi = Segment::constant(1.0, 1.0).unwrap();
    let cfg = IntegratorConfig::new(1e-4, 2.0);
    let p = simulate_sdde(&model, &phi, &cfg, &NoiseSource::new(0, 1e-4)).unwrap();
    let (x1, x2) = (p.value_at(1.0).unwrap(), p.value_at(2.0).unwrap());
    verdict((x1 - 2.0).abs() <= 1e-3 && (x2 - 3.5).abs() <= 1e-3, format!("x(1) = {x1:.6}, x(2) = {x2:.6}"))
}

fn dde_ode_blow_up() -> Verdict {
    let model = catalog::deterministic(catalog::explosive());
    let psi = build_initial_from_constant(1.0, 1.0, 0.1, 1.0).unwrap();
    let cfg = IntegratorConfig::new(1e-4, 1.0);
    let run = coupled_sandwich_paths(&model, &psi, &cfg, &NoiseSource::new(0, 1e-4), 1e-9).unwrap();
    let r = &run.report;
    let (lo, hi) = psi.range();
    let blew = matches!(r.outcomes[1].event(), Some(StoppingEvent::BlowUpPlus(t)) if t < 1.0);
    let bounds_ok = r.a1 == lo && r.a2 == hi;
    let sandwiched = r.violations_low + r.violations_high == 0;
    verdict(
        blew && bounds_ok && sandwiched,
        format!(
            "DDE {}; (a1, a2) = ({}, {}); {} violations over {} points",
            r.outcomes[1],
            r.a1,
            r.a2,
            r.violations_low + r.violations_high,
            r.grid_points
        ),
    )
}

fn sandwich_property() -> Verdict {
    let model = catalog::lookup("population-neglog", &Default::default()).unwrap();
    let psi = build_initial_from_constant(0.5, 0.0, 0.5, 1.0).unwrap();
    let dt = 1e-4;
    let noise_dt = dt / 8.0;
    let mut mean = 0.0;
    let mut monotone = 0;
    for seed in 0..100 {
        let noise = NoiseSource::new(seed, noise_dt);
        let fractions: Vec<f64> = (0..4)
            .map(|k| {
                let cfg = IntegratorConfig::new(dt / f64::from(1u32 << k), 1.0);
                coupled_sandwich(&model, &psi, &cfg, &noise, 1e-6).unwrap().violation_fraction()
            })
            .collect();
        mean += fractions[0] / 100.0;
        if fractions.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    verdict(mean <= 0.01 && monotone >= 90, format!("mean violation fraction {mean:.3e}, nonincreasing for {monotone}/100 seeds"))
}

fn explosion_ordering() -> Verdict {
    let model = catalog::explosive();
    let phi = Segment::constant(1.0, 1.0).unwrap();
    let cfg = IntegratorConfig::new(1e-3, 1.0);
    let mut exploded = 0;
    let mut counterexamples = 0;
    for seed in 0..500 {
        let r = coupled_sandwich(&model, &phi, &cfg, &NoiseSource::new(seed, 1e-3), 1e-6).unwrap();
        if matches!(r.outcomes[1].event(), Some(StoppingEvent::BlowUpPlus(t)) if t < 1.0) {
            exploded += 1;
        }
        if !r.explosion_ordering_holds(1.0) {
            counterexamples += 1;
        }
    }
    verdict(
        counterexamples == 0 && exploded > 0,
        format!("{exploded}/500 SDDE blow-ups before tau, {counterexamples} counterexamples"),
    )
}

fn equivalence() -> Verdict {
    let phi = Segment::constant(1.0, 1.0).unwrap();
    let cfg = IntegratorConfig::new(1e-3, 1.0);
    let explosive = equivalence_experiment(&catalog::explosive(), &phi, &cfg, 500, 0, Execution::Parallel).unwrap();
    let linear = equivalence_experiment(&catalog::linear(), &phi, &cfg, 500, 0, Execution::Parallel).unwrap();
    let forward = explosive.sdde_plus.ci_low > 0.0 && explosive.upper_plus.ci_low > 0.0;
    let linear_zero = [&linear.sdde_plus, &linear.sdde_minus, &linear.upper_plus, &linear.lower_minus]
        .iter()
        .all(|r| r.estimate == 0.0);
    verdict(
        forward && linear_zero && explosive.pattern_holds && linear.pattern_holds,
        format!(
            "explosive: SDDE ci_low {:.4}, SDE ci_low {:.4}; linear: SDDE {} / SDE {}",
            explosive.sdde_plus.ci_low, explosive.upper_plus.ci_low, linear.sdde_plus.estimate, linear.upper_plus.estimate
        ),
    )
}

fn transform_consistency() -> Verdict {
    let drift: Coefficient = Arc::new(|y: f64| 1.0 - y);
    let diffusion: Coefficient = Arc::new(|y: f64| y.max(0.0).powf(0.75));
    let problem = SdeProblem::from_coefficients(drift, diffusion, 1.0, true).unwrap();
    let map = SmoothMap::neg_log();
    let (coarse, fine) = (1e-4, 2.5e-5);
    let mut worst: f64 = 0.0;
    let mut decreasing = 0;
    let mut matched = 0;
    let mut mismatched = 0;
    for seed in 0..50 {
        let noise = NoiseSource::new(seed, fine);
        let mut run = |dt: f64| {
            let cfg = IntegratorConfig::new(dt, 1.0).with_policy(DtPolicy::Fixed);
            let r = pathwise_consistency(&problem, &map, &cfg, transformed_ladder(cfg.extinction_eps), &noise).unwrap();
            if let (Some(StoppingEvent::Extinction(t1)), Some(StoppingEvent::BlowUpPlus(t2))) = (r.direct.event(), r.transformed.event()) {
                if (t1 - t2).abs() <= 2.0 * dt {
                    matched += 1;
                } else {
                    mismatched += 1;
                }
            }
            r.discrepancy
        };
        let d_coarse = run(coarse);
        let d_fine = run(fine);
        worst = worst.max(d_coarse);
        if d_fine < d_coarse {
            decreasing += 1;
        }
    }
    verdict(
        worst <= 0.05 && decreasing >= 45 && mismatched == 0,
        format!(
            "max discrepancy {worst:.4} at dt=1e-4, decreasing for {decreasing}/50, event pairs within 2dt: {matched} of {}",
            matched + mismatched
        ),
    )
}

fn extinction_dichotomy() -> Verdict {
    let phi = Segment::constant(1.0, 1.0).unwrap();
    let low = dichotomy_experiment(
        1.0,
        1.0,
        0.25,
        &phi,
        10.0,
        &IntegratorConfig::new(1e-3, 10.0),
        2000,
        0,
        Execution::Parallel,
    )
    .unwrap();
    let high = dichotomy_experiment(
        1.0,
        1.0,
        0.75,
        &phi,
        10.0,
        &IntegratorConfig::new(1e-3, 10.0).with_extinction_eps(1e-10),
        2000,
        0,
        Execution::Parallel,
    )
    .unwrap();
    let a = low.ci_low > 0.0 && low.valid;
    let b = high.estimate <= 0.005 && high.valid;
    verdict(
        a && b,
        format!(
            "p=0.25: {:.4} [{:.4}, {:.4}] ({}); p=0.75: {:.4} [{:.4}, {:.4}] ({})",
            low.estimate,
            low.ci_low,
            low.ci_high,
            if a { "ok" } else { "FAIL" },
            high.estimate,
            high.ci_low,
            high.ci_high,
            if b { "ok" } else { "FAIL: above 0.005" }
        ),
    )
}

fn time_change() -> Verdict {
    let dt = 1e-4;
    let n = 10_000;
    let sigma = vec![1.0; n + 1];
    let (mut qv_ok, mut ks_ok) = (0, 0);
    for seed in 0..100 {
        let noise = NoiseSource::new(seed, dt);
        let dw: Vec<f64> = (0..n as u64).map(|i| noise.increment(i)).collect();
        let d = diagnose_time_change(&sigma, &dw, dt).unwrap();
        if (d.final_ratio() - 1.0).abs() <= 0.05 {
            qv_ok += 1;
        }
        if d.ks_passes() {
            ks_ok += 1;
        }
    }
    verdict(qv_ok >= 90 && ks_ok >= 90, format!("qv/T within 5% for {qv_ok}/100, KS below critical for {ks_ok}/100"))
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn reproducibility() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let configs = [
        ("simulate", "command = \"simulate\"\n[model]\nname = \"explosive\"\n[initial]\nx0 = 0.5\n"),
        ("sandwich", "command = \"sandwich\"\n[model]\nname = \"population-neglog\"\n[initial]\nramp = { a = 0.5, x0 = 0.0, eps = 0.5 }\n[monte_carlo]\nn = 20\n"),
        ("timechange", "command = \"timechange\"\n[model]\nname = \"population\"\n[integrator]\ndt_max = 1e-4\n"),
        ("transform", "command = \"transform-check\"\n[model]\nname = \"population\"\n[integrator]\ndt_max = 1e-4\ndt_policy = { kind = \"fixed\" }\n"),
        ("histogram", "command = \"histogram\"\n[model]\nname = \"explosive\"\n[initial]\nconstant = 0.0\n[experiment]\nhorizon = 3\n[monte_carlo]\nn = 100\n"),
        ("equivalence", "command = \"equivalence\"\n[model]\nname = \"explosive\"\n[monte_carlo]\nn = 100\n"),
        ("dichotomy", "command = \"dichotomy\"\n[model]\nname = \"population\"\nparams = { p = 0.25 }\n[experiment]\nhorizon = 3.0\n[monte_carlo]\nn = 100\n"),
    ];
    let mut differing = Vec::new();
    let mut files = 0;
    for (name, body) in configs {
        let out = tmp.path().join(name);
        let path = tmp.path().join(format!("{name}.toml"));
        fs::write(&path, format!("{body}[output]\ndir = {:?}\n", out.to_str().unwrap())).unwrap();
        let mut runs = Vec::new();
        for workers in ["1", "8", "8"] {
            let status = Command::new(env!("CARGO_BIN_EXE_sddelab"))
                .args(["--config", path.to_str().unwrap(), "--no-timestamp", "--workers", workers])
                .output()
                .unwrap();
            if !status.status.success() {
                return verdict(false, format!("{name}: {}", String::from_utf8_lossy(&status.stderr).trim()));
            }
            runs.push(snapshot(&out));
        }
        files += runs[0].len();
        if runs[0] != runs[1] || runs[1] != runs[2] {
            differing.push(name);
        }
    }
    verdict(
        differing.is_empty(),
        format!("{files} files from 7 commands compared across workers 1/8/8; differing: {differing:?}"),
    )
}

type Criterion = (u32, &'static str, Duration, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "deterministic blow-up oracle", Duration::from_secs(5), deterministic_blow_up),
        (2, "method-of-steps oracle", Duration::from_secs(60), method_of_steps),
        (3, "DDE/ODE blow-up sandwich", Duration::from_secs(10), dde_ode_blow_up),
        (4, "sandwich property", Duration::from_secs(300), sandwich_property),
        (5, "explosion ordering", Duration::from_secs(300), explosion_ordering),
        (6, "equivalence, both directions", Duration::from_secs(600), equivalence),
        (7, "transform consistency", Duration::from_secs(300), transform_consistency),
        (8, "extinction dichotomy", Duration::from_secs(900), extinction_dichotomy),
        (9, "time-change diagnostics", Duration::from_secs(120), time_change),
        (10, "reproducibility", Duration::from_secs(600), reproducibility),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = v.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {id:>2} {name}: {} [{:.1}s of {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
