//! Step-size selection along a descent direction.
//!
//! Both methods accept the first trial step satisfying the Armijo condition
//! `phi(a) <= phi(0) + c1 a phi'(0)`. They differ in how the next trial is
//! chosen after a rejection: plain backtracking multiplies by `shrink`, the
//! polynomial method minimizes a quadratic (first rejection) or cubic (later
//! rejections) model of `phi`, safeguarded to `[low, high] * a_last`.
//!
//! A trial value of `+inf` marks an infeasible step (e.g. an inverted mesh);
//! it is rejected like any other failed trial. `NaN` aborts the search.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineSearchMethod {
    Armijo,
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    pub method: LineSearchMethod,
    pub c1: f64,
    pub shrink: f64,
    pub alpha0: f64,
    pub max_trials: usize,
    pub safeguard_low: f64,
    pub safeguard_high: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            method: LineSearchMethod::Armijo,
            c1: 1e-4,
            shrink: 0.5,
            alpha0: 1.0,
            max_trials: 30,
            safeguard_low: 0.1,
            safeguard_high: 0.5,
        }
    }
}

impl LineSearchConfig {
    pub fn polynomial() -> Self {
        Self {
            method: LineSearchMethod::Polynomial,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c1 > 0.0
            && self.c1 < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.alpha0 > 0.0
            && self.max_trials >= 1
            && self.safeguard_low > 0.0
            && self.safeguard_low < self.safeguard_high
            && self.safeguard_high < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid line search configuration {self:?}"
            )))
        }
    }

    pub fn armijo_holds(&self, phi0: f64, dphi0: f64, step: f64, value: f64) -> bool {
        value <= phi0 + self.c1 * step * dphi0
    }
}

/// One evaluated trial step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub step: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub step: f64,
    pub value: f64,
    pub trials: Vec<Trial>,
}

/// Backtracking over `alpha0 * shrink^k`.
pub fn armijo(phi: impl FnMut(f64) -> f64, phi0: f64, dphi0: f64, cfg: &LineSearchConfig) -> Result<LineSearchOutcome> {
    let cfg = LineSearchConfig {
        method: LineSearchMethod::Armijo,
        ..*cfg
    };
    search(phi, phi0, dphi0, cfg.alpha0, &cfg)
}

/// Runs the configured method starting from `initial_step`.
pub fn search(
    mut phi: impl FnMut(f64) -> f64,
    phi0: f64,
    dphi0: f64,
    initial_step: f64,
    cfg: &LineSearchConfig,
) -> Result<LineSearchOutcome> {
    if !(dphi0 < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "line search needs a descent direction (slope {dphi0:e})"
        )));
    }
    if !phi0.is_finite() {
        return Err(Error::NonFiniteCost);
    }
    let mut trials = Vec::new();
    let mut step = initial_step;
    for _ in 0..cfg.max_trials {
        let value = phi(step);
        if value.is_nan() {
            return Err(Error::NonFiniteCost);
        }
        trials.push(Trial { step, value });
        if cfg.armijo_holds(phi0, dphi0, step, value) {
            return Ok(LineSearchOutcome { step, value, trials });
        }
        step = next_step(phi0, dphi0, &trials, cfg);
    }
    Err(Error::LineSearchFailure {
        trials: trials.len(),
        last_step: trials.last().map_or(step, |t| t.step),
    })
}

/// Next trial after the last entry of `trials` was rejected.
pub fn next_step(phi0: f64, dphi0: f64, trials: &[Trial], cfg: &LineSearchConfig) -> f64 {
    let last = trials.last().expect("at least one trial").step;
    match cfg.method {
        LineSearchMethod::Armijo => cfg.shrink * last,
        LineSearchMethod::Polynomial => polynomial_step(phi0, dphi0, trials, cfg),
    }
}

/// Minimizer of the interpolating model through the recorded trials.
///
/// With one trial the quadratic through `phi(0)`, `phi'(0)` and the trial is
/// used; with more, the cubic through `phi(0)`, `phi'(0)` and the last two.
/// When the last trial violates the Armijo condition the result is clamped
/// into `[low * a_last, high * a_last]`. A non-finite model minimizer falls
/// back to `shrink * a_last`.
pub fn polynomial_step(phi0: f64, dphi0: f64, trials: &[Trial], cfg: &LineSearchConfig) -> f64 {
    let last = *trials.last().expect("at least one trial");
    if !last.value.is_finite() {
        return cfg.shrink * last.step;
    }
    let candidate = match trials {
        [.., prev, last] if prev.value.is_finite() => cubic_minimizer(phi0, dphi0, *prev, *last),
        [.., last] => quadratic_minimizer(phi0, dphi0, *last),
        [] => unreachable!(),
    };
    let candidate = match candidate {
        Some(a) if a.is_finite() => a,
        _ => return cfg.shrink * last.step,
    };
    if cfg.armijo_holds(phi0, dphi0, last.step, last.value) {
        candidate
    } else {
        candidate.clamp(cfg.safeguard_low * last.step, cfg.safeguard_high * last.step)
    }
}

/// Minimizer of the quadratic with `q(0) = phi0`, `q'(0) = dphi0`, `q(a) = phi(a)`.
pub fn quadratic_minimizer(phi0: f64, dphi0: f64, trial: Trial) -> Option<f64> {
    let a = trial.step;
    let curvature = trial.value - phi0 - dphi0 * a;
    if !(curvature > 0.0) {
        return None;
    }
    Some(-dphi0 * a * a / (2.0 * curvature))
}

/// Local minimizer of the cubic through `phi0`, `dphi0` and two trials.
pub fn cubic_minimizer(phi0: f64, dphi0: f64, older: Trial, newer: Trial) -> Option<f64> {
    let (a1, a2) = (older.step, newer.step);
    if a1 == a2 {
        return quadratic_minimizer(phi0, dphi0, newer);
    }
    let r1 = older.value - phi0 - dphi0 * a1;
    let r2 = newer.value - phi0 - dphi0 * a2;
    // phi(a) = phi0 + dphi0 a + b a^2 + c a^3
    let denom = a1 * a1 * a2 * a2 * (a2 - a1);
    let c = (a1 * a1 * r2 - a2 * a2 * r1) / denom;
    let b = (-a1 * a1 * a1 * r2 + a2 * a2 * a2 * r1) / denom;
    if c == 0.0 {
        return if b > 0.0 { Some(-dphi0 / (2.0 * b)) } else { None };
    }
    let disc = b * b - 3.0 * c * dphi0;
    if disc < 0.0 {
        return None;
    }
    Some((-b + disc.sqrt()) / (3.0 * c))
}
