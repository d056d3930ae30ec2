//! Named models addressable by string + parameter map.
//!
//! | name                        | F(x, y)                                    | g(x)               |
//! |-----------------------------|--------------------------------------------|--------------------|
//! | `population`                | `a·y − b·x`                                | `max(x, 0)^p`      |
//! | `population-neglog`         | `−eˣ(a·e^{−y} − b·e^{−x}) + ½e^{2(1−p)x}`  | `e^{(1−p)x}`       |
//! | `population-neglog-frozen`  | as above with `y ≡ C`                      | `e^{(1−p)x}`       |
//! | `explosive`                 | `x² + y`                                   | `0.1·x`            |
//! | `linear`                    | `−x + 0.1·y`                               | `0.1·x`            |
//! | `quadratic`                 | `x²`                                       | `0`                |
//! | `ou`                        | `−x`                                       | `1`                |
//! | `decay-power`               | `−x`                                       | `max(x, 0)^p`      |
//! | `pure-delay`                | `y`                                        | `0`                |
//!
//! Appending `-det` to `population`, `population-neglog`, `explosive` or
//! `linear` gives the same drift with `g ≡ 0`.

use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::model::{ModelSpec, ModulusFamily, Monotonicity};

pub type Params = BTreeMap<String, f64>;

/// Upper end of the state range on which the exponential diffusion of the
/// log-transformed model is given a Lipschitz constant.
pub const NEGLOG_MODULUS_RANGE: f64 = 20.0;

struct Entry {
    name: &'static str,
    params: &'static [(&'static str, f64)],
    has_det: bool,
}

const ENTRIES: &[Entry] = &[
    Entry { name: "population", params: &[("a", 1.0), ("b", 1.0), ("p", 0.75)], has_det: true },
    Entry { name: "population-neglog", params: &[("a", 1.0), ("b", 1.0), ("p", 0.75)], has_det: true },
    Entry {
        name: "population-neglog-frozen",
        params: &[("a", 1.0), ("b", 1.0), ("p", 0.75), ("C", 0.0)],
        has_det: false,
    },
    Entry { name: "explosive", params: &[], has_det: true },
    Entry { name: "linear", params: &[], has_det: true },
    Entry { name: "quadratic", params: &[], has_det: false },
    Entry { name: "ou", params: &[], has_det: false },
    Entry { name: "decay-power", params: &[("p", 0.25)], has_det: false },
    Entry { name: "pure-delay", params: &[], has_det: false },
];

/// Every addressable model name, including `-det` variants.
pub fn names() -> Vec<String> {
    let mut out = Vec::new();
    for e in ENTRIES {
        out.push(e.name.to_string());
        if e.has_det {
            out.push(format!("{}-det", e.name));
        }
    }
    out
}

/// Every catalog model with default parameters.
pub fn catalog() -> Vec<(String, ModelSpec)> {
    names()
        .into_iter()
        .map(|n| {
            let m = lookup(&n, &Params::new()).expect("defaults are valid");
            (n, m)
        })
        .collect()
}

/// Default parameters for `name` (after stripping `-det`).
pub fn default_params(name: &str) -> Result<Params> {
    let entry = find(name)?.0;
    Ok(entry.params.iter().map(|&(k, v)| (k.to_string(), v)).collect())
}

/// Resolves `params` against the defaults; unknown keys are rejected.
pub fn resolve_params(name: &str, params: &Params) -> Result<Params> {
    let mut resolved = default_params(name)?;
    for (k, v) in params {
        match resolved.get_mut(k) {
            Some(slot) => *slot = *v,
            None => {
                return Err(invalid(format!(
                    "model `{name}` has no parameter `{k}`; accepted: {:?}",
                    resolved.keys().collect::<Vec<_>>()
                )))
            }
        }
    }
    Ok(resolved)
}

fn find(name: &str) -> Result<(&'static Entry, bool)> {
    let (base, det) = match name.strip_suffix("-det") {
        Some(base) => (base, true),
        None => (name, false),
    };
    ENTRIES
        .iter()
        .find(|e| e.name == base && (!det || e.has_det))
        .map(|e| (e, det))
        .ok_or_else(|| Error::UnknownModel {
            name: name.to_string(),
            valid: names().join(", "),
        })
}

pub fn lookup(name: &str, params: &Params) -> Result<ModelSpec> {
    let (entry, det) = find(name)?;
    let p = resolve_params(name, params)?;
    let get = |k: &str| p[k];
    let model = match entry.name {
        "population" => population(get("a"), get("b"), get("p"))?,
        "population-neglog" => population_neglog(get("a"), get("b"), get("p"))?,
        "population-neglog-frozen" => population_neglog_frozen(get("a"), get("b"), get("p"), get("C"))?,
        "explosive" => explosive(),
        "linear" => linear(),
        "quadratic" => ModelSpec::new("quadratic", |x, _| x * x, |_| 0.0, 1.0)?
            .with_modulus(ModulusFamily::lipschitz(1.0)?)
            .with_monotonicity(Monotonicity::Increasing),
        "ou" => ModelSpec::new("ou", |x, _| -x, |_| 1.0, 1.0)?
            .with_modulus(ModulusFamily::lipschitz(1.0)?)
            .with_monotonicity(Monotonicity::Increasing),
        "decay-power" => {
            let q = get("p");
            check_positive("p", q)?;
            ModelSpec::new(format!("decay-power(p={q})"), |x, _| -x, move |x: f64| x.max(0.0).powf(q), 1.0)?
                .with_modulus(ModulusFamily::power(1.0, q.min(1.0))?)
                .with_monotonicity(Monotonicity::Increasing)
                .positive()
        }
        "pure-delay" => ModelSpec::new("pure-delay", |_, y| y, |_| 0.0, 1.0)?
            .with_modulus(ModulusFamily::lipschitz(1.0)?)
            .with_monotonicity(Monotonicity::Increasing),
        other => unreachable!("catalog entry {other} has no constructor"),
    };
    Ok(if det { deterministic(model) } else { model })
}

/// Same drift, `g ≡ 0`.
pub fn deterministic(mut model: ModelSpec) -> ModelSpec {
    model.name = format!("{}-det", model.name);
    model.diffusion = std::sync::Arc::new(|_| 0.0);
    model
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("parameter `{key}` must be positive, got {v}")))
    }
}

fn check_population(a: f64, b: f64, p: f64) -> Result<()> {
    check_positive("a", a)?;
    if !(b >= 0.0) || !b.is_finite() {
        return Err(invalid(format!("parameter `b` must be nonnegative, got {b}")));
    }
    check_positive("p", p)
}

/// `dy = [a·y(t−1) − b·y(t)]dt + y(t)^p dW` on `(0, ∞)`.
pub fn population(a: f64, b: f64, p: f64) -> Result<ModelSpec> {
    check_population(a, b, p)?;
    Ok(ModelSpec::new(
        format!("population(a={a},b={b},p={p})"),
        move |x, y| a * y - b * x,
        // overshoot below zero must not produce NaN
        move |x: f64| x.max(0.0).powf(p),
        1.0,
    )?
    .with_modulus(ModulusFamily::power(1.0, p.min(1.0))?)
    .with_monotonicity(Monotonicity::Increasing)
    .positive())
}

/// Drift of the `−log`-transformed population model at state `x` and delayed value `y`.
pub fn neglog_drift(a: f64, b: f64, p: f64, x: f64, y: f64) -> f64 {
    -x.exp() * (a * (-y).exp() - b * (-x).exp()) + 0.5 * (2.0 * (1.0 - p) * x).exp()
}

/// The population model under `x = −log y`, on all of ℝ.
pub fn population_neglog(a: f64, b: f64, p: f64) -> Result<ModelSpec> {
    check_population(a, b, p)?;
    Ok(ModelSpec::new(
        format!("population-neglog(a={a},b={b},p={p})"),
        move |x, y| neglog_drift(a, b, p, x, y),
        move |x: f64| ((1.0 - p) * x).exp(),
        1.0,
    )?
    .with_modulus(neglog_modulus(p)?)
    .with_monotonicity(Monotonicity::Increasing))
}

/// The log-transformed model with the delayed state frozen at `c`.
pub fn population_neglog_frozen(a: f64, b: f64, p: f64, c: f64) -> Result<ModelSpec> {
    check_population(a, b, p)?;
    Ok(ModelSpec::new(
        format!("population-neglog-frozen(a={a},b={b},p={p},C={c})"),
        move |x, _| neglog_drift(a, b, p, x, c),
        move |x: f64| ((1.0 - p) * x).exp(),
        1.0,
    )?
    .with_modulus(neglog_modulus(p)?)
    .with_monotonicity(Monotonicity::Increasing))
}

// e^{(1−p)x} is only locally Lipschitz; the constant holds for x ≤ NEGLOG_MODULUS_RANGE.
fn neglog_modulus(p: f64) -> Result<ModulusFamily> {
    let slope = (1.0 - p).abs().max(f64::MIN_POSITIVE);
    ModulusFamily::lipschitz(slope * ((1.0 - p) * NEGLOG_MODULUS_RANGE).exp().max(1.0))
}

/// `F(x, y) = x² + y`, `g(x) = 0.1·x`.
pub fn explosive() -> ModelSpec {
    ModelSpec::new("explosive", |x, y| x * x + y, |x| 0.1 * x, 1.0)
        .expect("static model")
        .with_modulus(ModulusFamily::Lipschitz { k: 0.1 })
        .with_monotonicity(Monotonicity::Increasing)
}

/// `F(x, y) = −x + 0.1·y`, `g(x) = 0.1·x`; globally Lipschitz, never explodes.
pub fn linear() -> ModelSpec {
    ModelSpec::new("linear", |x, y| -x + 0.1 * y, |x| 0.1 * x, 1.0)
        .expect("static model")
        .with_modulus(ModulusFamily::Lipschitz { k: 0.1 })
        .with_monotonicity(Monotonicity::Increasing)
}
