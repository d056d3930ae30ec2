//! Itô's formula on coefficient pairs: a C² change of variables `x = f(y)`
//! turns `dy = b dt + σ dW` into `dx = (f′b + ½f″σ²) dt + f′σ dW`.

use std::fmt;
use std::sync::Arc;

use crate::comparison::LaneOutcome;
use crate::error::{invalid, Error, Result};
use crate::event::IntegrationFault;
use crate::model::{Coefficient, ModelSpec};
use crate::noise::NoiseSource;
use crate::sde::{run_lockstep, Autonomous, IntegratorConfig, Lane, SdeProblem};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Invertible C² map with closed-form derivatives and inverse.
#[derive(Clone)]
pub struct SmoothMap {
    pub name: String,
    pub f: RealFn,
    pub f_prime: RealFn,
    pub f_double_prime: RealFn,
    pub f_inverse: RealFn,
    /// Open interval where `f` is defined.
    pub domain: (f64, f64),
    /// `f(domain)`, also open.
    pub image: (f64, f64),
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothMap")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("image", &self.image)
            .finish_non_exhaustive()
    }
}

fn inside(v: f64, (lo, hi): (f64, f64)) -> bool {
    v > lo && v < hi
}

impl SmoothMap {
    /// Builds a map and checks it on a validation grid.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_double_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_inverse: impl Fn(f64) -> f64 + Send + Sync + 'static,
        domain: (f64, f64),
        image: (f64, f64),
    ) -> Result<Self> {
        let map = Self {
            name: name.into(),
            f: Arc::new(f),
            f_prime: Arc::new(f_prime),
            f_double_prime: Arc::new(f_double_prime),
            f_inverse: Arc::new(f_inverse),
            domain,
            image,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn identity() -> Self {
        Self::new("identity", |x| x, |_| 1.0, |_| 0.0, |y| y, (f64::NEG_INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY))
            .expect("identity is valid")
    }

    /// `x = −log y`, from (0, ∞) onto ℝ.
    pub fn neg_log() -> Self {
        Self::new(
            "neg-log",
            |y: f64| -y.ln(),
            |y| -1.0 / y,
            |y| 1.0 / (y * y),
            |x: f64| (-x).exp(),
            (0.0, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
        )
        .expect("neg-log is valid")
    }

    /// `y = e^{−x}`, from ℝ onto (0, ∞); inverse of [`SmoothMap::neg_log`].
    pub fn exp_neg() -> Self {
        Self::new(
            "exp-neg",
            |x: f64| (-x).exp(),
            |x: f64| -(-x).exp(),
            |x: f64| (-x).exp(),
            |y: f64| -y.ln(),
            (f64::NEG_INFINITY, f64::INFINITY),
            (0.0, f64::INFINITY),
        )
        .expect("exp-neg is valid")
    }

    /// Points of the domain used by [`SmoothMap::validate`].
    pub fn validation_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.domain;
        let n = 101;
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => (1..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect(),
            // geometric offsets from a finite end, symmetric grid otherwise
            (true, false) => (0..n).map(|i| lo + 10f64.powf(-6.0 + 12.0 * i as f64 / (n - 1) as f64)).collect(),
            (false, true) => (0..n).map(|i| hi - 10f64.powf(-6.0 + 12.0 * i as f64 / (n - 1) as f64)).collect(),
            (false, false) => (0..n).map(|i| -20.0 + 40.0 * i as f64 / (n - 1) as f64).collect(),
        }
    }

    /// Round trip `f_inverse(f(x)) = x` to 1e-10 (relative above 1) and
    /// `f′ ≠ 0` on the validation grid.
    pub fn validate(&self) -> Result<()> {
        if !(self.domain.0 < self.domain.1) || !(self.image.0 < self.image.1) {
            return Err(invalid(format!("map `{}` has an empty domain or image", self.name)));
        }
        for x in self.validation_grid() {
            let y = (self.f)(x);
            if !inside(y, self.image) {
                return Err(invalid(format!("map `{}`: f({x}) = {y} leaves the declared image", self.name)));
            }
            let back = (self.f_inverse)(y);
            if (back - x).abs() > 1e-10 * x.abs().max(1.0) {
                return Err(invalid(format!("map `{}`: f_inverse(f({x})) = {back}", self.name)));
            }
            let d = (self.f_prime)(x);
            if !(d != 0.0 && d.is_finite()) {
                return Err(invalid(format!("map `{}`: f'({x}) = {d}", self.name)));
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        if inside(x, self.domain) {
            Ok((self.f)(x))
        } else {
            Err(Error::Domain { value: x, image: self.domain })
        }
    }

    pub fn invert(&self, y: f64) -> Result<f64> {
        if inside(y, self.image) {
            Ok((self.f_inverse)(y))
        } else {
            Err(Error::Domain { value: y, image: self.image })
        }
    }
}

/// `(b̃, σ̃)` in the new variable; evaluated by pulling back through `f_inverse`.
#[derive(Clone)]
pub struct PushedCoefficients {
    b: Coefficient,
    sigma: Coefficient,
    map: SmoothMap,
}

impl fmt::Debug for PushedCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PushedCoefficients").field("map", &self.map).finish_non_exhaustive()
    }
}

impl PushedCoefficients {
    pub fn drift(&self, y: f64) -> Result<f64> {
        let x = self.map.invert(y)?;
        Ok(pushed_drift(&self.map, &*self.b, &*self.sigma, x))
    }

    pub fn diffusion(&self, y: f64) -> Result<f64> {
        let x = self.map.invert(y)?;
        Ok((self.map.f_prime)(x) * (self.sigma)(x))
    }

    pub fn map(&self) -> &SmoothMap {
        &self.map
    }

    /// Plain coefficient functions; outside the image they return NaN, which
    /// the integrator reports as a fault.
    pub fn coefficients(&self) -> (Coefficient, Coefficient) {
        let d = self.clone();
        let s = self.clone();
        (
            Arc::new(move |y| d.drift(y).unwrap_or(f64::NAN)),
            Arc::new(move |y| s.diffusion(y).unwrap_or(f64::NAN)),
        )
    }

    /// The transformed problem started from `f(y0)`.
    pub fn problem(&self, y0: f64) -> Result<SdeProblem> {
        let x0 = self.map.apply(y0)?;
        let (b, s) = self.coefficients();
        SdeProblem::from_coefficients(b, s, x0, false)
    }
}

fn pushed_drift(map: &SmoothMap, b: &dyn Fn(f64) -> f64, sigma: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let s = sigma(x);
    (map.f_prime)(x) * b(x) + 0.5 * (map.f_double_prime)(x) * s * s
}

pub fn push_coefficients(b: Coefficient, sigma: Coefficient, map: &SmoothMap) -> PushedCoefficients {
    PushedCoefficients { b, sigma, map: map.clone() }
}

/// Pushes the instantaneous counterpart of a delay model frozen at `a`.
pub fn push_frozen(model: &ModelSpec, a: f64, map: &SmoothMap) -> PushedCoefficients {
    push_coefficients(model.frozen_drift(a), Arc::clone(&model.diffusion), map)
}

/// Ladder for a run transformed by `−log`: even rungs up to the first one
/// beyond `−log ε`, so that direct extinction at `ε` is visible as blow-up.
pub fn transformed_ladder(extinction_eps: f64) -> Vec<f64> {
    let top = -extinction_eps.ln();
    let mut ladder = Vec::new();
    let mut r = 2.0;
    loop {
        ladder.push(r);
        if r > top {
            return ladder;
        }
        r += 2.0;
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConsistencyReport {
    /// `sup |f_inverse(x(t)) − y(t)|` over steps where both runs were alive.
    pub discrepancy: f64,
    pub grid_points: u64,
    pub direct: LaneOutcome,
    pub transformed: LaneOutcome,
    /// Step size in effect when each run stopped.
    pub final_dt: [f64; 2],
}

/// A run broke down; the discrepancy accumulated before that is kept.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsistencyError {
    #[error(transparent)]
    Config(#[from] Error),
    #[error("{fault} (discrepancy so far {partial_discrepancy})")]
    Fault {
        fault: IntegrationFault,
        partial_discrepancy: f64,
        grid_points: u64,
    },
}

/// Simulates `y` directly and `x = f(y)` from the pushed coefficients with the
/// same Brownian increments and compares them through `f_inverse`.
///
/// The transformed run uses `transformed` for its ladder; the remaining
/// integrator settings are shared.
pub fn pathwise_consistency(
    problem: &SdeProblem,
    map: &SmoothMap,
    config: &IntegratorConfig,
    transformed_ladder: Vec<f64>,
    noise: &NoiseSource,
) -> std::result::Result<ConsistencyReport, ConsistencyError> {
    if !inside(problem.x0, map.domain) {
        return Err(Error::Precondition(format!("initial state {} outside the map's domain", problem.x0)).into());
    }
    let pushed = push_coefficients(Arc::clone(&problem.drift), Arc::clone(&problem.diffusion), map);
    let moved = pushed.problem(problem.x0)?;
    let moved_config = config.clone().with_ladder(transformed_ladder);
    moved_config.validate()?;
    let mut lanes = [
        Lane::new(
            Box::new(Autonomous { drift: problem.drift.as_ref(), diffusion: problem.diffusion.as_ref() }),
            problem.x0,
            config,
            problem.positive_state,
        ),
        Lane::new(
            Box::new(Autonomous { drift: moved.drift.as_ref(), diffusion: moved.diffusion.as_ref() }),
            moved.x0,
            &moved_config,
            false,
        ),
    ];
    let mut sup = 0.0f64;
    let mut points = 0u64;
    run_lockstep(&mut lanes, config, noise, |_, lanes| {
        if lanes.iter().all(Lane::alive) {
            points += 1;
            sup = sup.max(((map.f_inverse)(lanes[1].x) - lanes[0].x).abs());
        }
    })?;
    let final_dt = [lanes[0].last_dt, lanes[1].last_dt];
    let [direct, transformed] = lanes.map(Lane::into_result);
    let outcome = |r: std::result::Result<crate::PathResult, IntegrationFault>| match r {
        Ok(p) => Ok(LaneOutcome::Event(p.event)),
        Err(fault) => Err(ConsistencyError::Fault {
            fault,
            partial_discrepancy: sup,
            grid_points: points,
        }),
    };
    Ok(ConsistencyReport {
        discrepancy: sup,
        grid_points: points,
        direct: outcome(direct)?,
        transformed: outcome(transformed)?,
        final_dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::event::StoppingEvent;
    use crate::sde::DtPolicy;

    fn population_sde(a: f64, b: f64, p: f64, c: f64) -> (Coefficient, Coefficient) {
        let drift: Coefficient = Arc::new(move |y: f64| a * (-c).exp() - b * y);
        let diffusion: Coefficient = Arc::new(move |y: f64| y.max(0.0).powf(p));
        (drift, diffusion)
    }

    #[test]
    fn neg_log_population_matches_closed_form() {
        let (a, b, p, c) = (1.3, 0.7, 0.75, 0.4);
        let (drift, diffusion) = population_sde(a, b, p, c);
        let pushed = push_coefficients(drift, diffusion, &SmoothMap::neg_log());
        for x in [-1.0f64, 0.0, 1.0] {
            let bt = -x.exp() * (a * (-c).exp() - b * (-x).exp()) + 0.5 * (2.0 * (1.0 - p) * x).exp();
            let st = ((1.0 - p) * x).exp();
            assert!((pushed.drift(x).unwrap() - bt).abs() <= 1e-12 * bt.abs().max(1.0), "x={x}");
            // the pushed noise carries the sign of f′ = −1/y
            assert!((pushed.diffusion(x).unwrap() + st).abs() <= 1e-12 * st, "x={x}");
            assert!((catalog::neglog_drift(a, b, p, x, c) - bt).abs() <= 1e-12 * bt.abs().max(1.0));
        }
    }

    #[test]
    fn frozen_catalog_model_pushes_to_its_transform() {
        let (a, b, p) = (1.0, 1.0, 0.25);
        let model = catalog::population(a, b, p).unwrap();
        let c = 0.3f64;
        let pushed = push_frozen(&model, (-c).exp(), &SmoothMap::neg_log());
        let target = catalog::population_neglog_frozen(a, b, p, c).unwrap();
        for x in [-2.0, -0.5, 0.0, 0.5, 2.0] {
            let want = target.drift(x, 0.0);
            assert!((pushed.drift(x).unwrap() - want).abs() <= 1e-12 * want.abs().max(1.0));
            assert!((pushed.diffusion(x).unwrap().abs() - target.diffusion_at(x)).abs() <= 1e-12);
        }
    }

    #[test]
    fn identity_leaves_coefficients_alone() {
        let b: Coefficient = Arc::new(|x: f64| x.sin() - 2.0 * x);
        let s: Coefficient = Arc::new(|x: f64| 1.0 + x * x);
        let pushed = push_coefficients(Arc::clone(&b), Arc::clone(&s), &SmoothMap::identity());
        for i in 0..=40 {
            let x = -5.0 + 0.25 * i as f64;
            assert_eq!(pushed.drift(x).unwrap(), b(x));
            assert_eq!(pushed.diffusion(x).unwrap(), s(x));
        }
    }

    #[test]
    fn round_trip_recovers_coefficients() {
        let (b, s) = population_sde(1.0, 1.0, 0.75, 0.0);
        let forward = push_coefficients(Arc::clone(&b), Arc::clone(&s), &SmoothMap::neg_log());
        let (fb, fs) = forward.coefficients();
        let back = push_coefficients(fb, fs, &SmoothMap::exp_neg());
        for y in [0.05, 0.3, 1.0, 2.5, 7.0] {
            assert!((back.drift(y).unwrap() - b(y)).abs() <= 1e-10 * b(y).abs().max(1.0), "y={y}");
            assert!((back.diffusion(y).unwrap() - s(y)).abs() <= 1e-10, "y={y}");
        }
    }

    #[test]
    fn out_of_image_is_a_domain_error() {
        let pushed = push_coefficients(Arc::new(|x| x), Arc::new(|x| x), &SmoothMap::exp_neg());
        assert!(matches!(pushed.drift(-1.0), Err(Error::Domain { .. })));
        assert!(matches!(SmoothMap::neg_log().apply(0.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn invalid_maps_are_rejected() {
        let wrong_inverse = SmoothMap::new("bad", |x| 2.0 * x, |_| 2.0, |_| 0.0, |y| y, (-1.0, 1.0), (-2.0, 2.0));
        assert!(wrong_inverse.is_err());
        let flat = SmoothMap::new("flat", |x: f64| x.powi(3), |x| 3.0 * x * x, |x| 6.0 * x, |y: f64| y.cbrt(), (-1.0, 1.0), (-1.0, 1.0));
        // the grid avoids 0 exactly, so only the round trip is probed there; cbrt is exact enough
        assert!(flat.is_ok());
        let zero_slope = SmoothMap::new("zero", |x| x, |_| 0.0, |_| 0.0, |y| y, (-1.0, 1.0), (-1.0, 1.0));
        assert!(zero_slope.is_err());
    }

    #[test]
    fn transformed_ladder_clears_barrier() {
        let l = transformed_ladder(1e-8);
        assert_eq!(l.first(), Some(&2.0));
        assert_eq!(l.last(), Some(&20.0));
        assert_eq!(*transformed_ladder(1e-10).last().unwrap(), 24.0);
    }

    #[test]
    fn deterministic_decay_is_consistent() {
        // b̃ ≡ 1, so x_n = nh exactly while y_n = (1 − h)^n: the gap is the Euler error itself
        let problem = SdeProblem::new(|y| -y, |_| 0.0, 1.0).unwrap().positive().unwrap();
        for (dt, bound) in [(1e-4, 2e-5), (1e-4 / 32.0, 1e-6)] {
            let cfg = IntegratorConfig::new(dt, 1.0).with_policy(DtPolicy::Fixed);
            let r = pathwise_consistency(&problem, &SmoothMap::neg_log(), &cfg, transformed_ladder(1e-8), &NoiseSource::new(1, dt)).unwrap();
            let steps = (1.0 / dt).round() as i32;
            let oracle = (0..=steps)
                .map(|n| ((-(n as f64) * dt).exp() - (1.0 - dt).powi(n)).abs())
                .fold(0.0, f64::max);
            assert!((r.discrepancy - oracle).abs() <= 1e-10, "{} vs {oracle}", r.discrepancy);
            assert!(r.discrepancy <= bound);
            assert_eq!(r.direct, LaneOutcome::Event(StoppingEvent::Censored(1.0)));
            assert_eq!(r.transformed, LaneOutcome::Event(StoppingEvent::Censored(1.0)));
        }
    }

    #[test]
    fn population_seed_seven_is_consistent() {
        let (b, s) = population_sde(1.0, 1.0, 0.75, 0.0);
        let problem = SdeProblem::from_coefficients(b, s, 1.0, true).unwrap();
        let cfg = IntegratorConfig::new(1e-4, 1.0).with_policy(DtPolicy::Fixed);
        let r = pathwise_consistency(&problem, &SmoothMap::neg_log(), &cfg, transformed_ladder(1e-8), &NoiseSource::new(7, 1e-4)).unwrap();
        assert!(r.discrepancy <= 0.05, "{}", r.discrepancy);
        assert_eq!(r.grid_points, 10_001);
    }

    #[test]
    fn fault_keeps_partial_discrepancy() {
        // b̃ is NaN once x leaves the image (0, 2), which happens near t = 0.75
        let problem = SdeProblem::new(|_| 2.0, |_| 0.0, -0.5).unwrap();
        let cfg = IntegratorConfig::new(1e-2, 1.0).with_policy(DtPolicy::Fixed);
        let map = SmoothMap::new("shift", |x| x + 1.0, |_| 1.0, |_| 0.0, |y| y - 1.0, (-1.0, 1.0), (0.0, 2.0)).unwrap();
        let err = pathwise_consistency(&problem, &map, &cfg, vec![10.0, 20.0, 30.0, 40.0], &NoiseSource::new(0, 1e-2)).unwrap_err();
        match err {
            ConsistencyError::Fault { fault, partial_discrepancy, grid_points } => {
                assert!(grid_points > 0);
                assert!(partial_discrepancy < 1e-12);
                assert!(fault.time > 0.7 && fault.time < 0.8, "{}", fault.time);
            }
            other => panic!("{other:?}"),
        }
    }
}
