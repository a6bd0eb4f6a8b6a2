//! Closed-form concentration radii and convergence-rate expressions.
//!
//! Rates are stated up to an unknown constant, exposed as a `constant` factor.
//! All logarithms are natural.

use crate::error::{Error, Result};
use crate::optimizer::KindTag;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationSpec {
    pub p: usize,
    /// Per-coordinate noise standard deviation.
    pub sigma: f64,
    /// Tail parameter.
    pub mu: f64,
    pub steps: u64,
}

impl ConcentrationSpec {
    pub fn new(p: usize, sigma: f64, mu: f64, steps: u64) -> Result<Self> {
        if p == 0 || steps == 0 {
            return Err(Error::invalid("p", "p and steps must be ≥ 1"));
        }
        if !(sigma > 0.0) || !(mu >= 0.0) {
            return Err(Error::invalid("sigma", "need sigma > 0 and mu ≥ 0"));
        }
        Ok(Self {
            p,
            sigma,
            mu,
            steps,
        })
    }
}

/// `(α, ξ) = (√p·σ(1+μ), 4p·exp(−μ²/2))`.
pub fn concentration(spec: &ConcentrationSpec) -> (f64, f64) {
    let p = spec.p as f64;
    (
        p.sqrt() * spec.sigma * (1.0 + spec.mu),
        4.0 * p * (-0.5 * spec.mu * spec.mu).exp(),
    )
}

/// `min(1, T·ξ)`.
pub fn union_failure(spec: &ConcentrationSpec) -> f64 {
    (spec.steps as f64 * concentration(spec).1).min(1.0)
}

/// `μ = √(2 ln(4pT/β))`, the tail parameter with `T·ξ = β`.
///
/// Any `β` in `(0, 4pT]` is accepted so the identity can be checked at
/// `β ≥ 1`; only `β < 1` is a meaningful failure probability.
pub fn mu_for_failure(beta: f64, p: usize, steps: u64) -> Result<f64> {
    if p == 0 || steps == 0 {
        return Err(Error::invalid("p", "p and steps must be ≥ 1"));
    }
    let scale = 4.0 * p as f64 * steps as f64;
    if !(beta > 0.0 && beta <= scale) {
        return Err(Error::invalid(
            "beta",
            format!("must lie in (0, 4pT], got {beta}"),
        ));
    }
    Ok((2.0 * (scale / beta).ln()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub n: f64,
    pub p: f64,
    pub eps: f64,
    pub delta: f64,
    /// Failure probability for the population bound.
    pub beta: f64,
    pub g: f64,
    pub l: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n", self.n),
            ("p", self.p),
            ("eps", self.eps),
            ("G", self.g),
            ("L", self.l),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta", "must lie in (0, 1)"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("beta", "must lie in (0, 1)"));
        }
        Ok(())
    }

    fn root_p_log(&self) -> f64 {
        (self.p * (1.0 / self.delta).ln()).sqrt()
    }
}

fn check_constant(c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(
            "constant",
            format!("must be positive, got {c}"),
        ));
    }
    Ok(())
}

/// Bound on `E‖∇f(w_R)‖²`.
///
/// GD: `c·G√(pL ln(1/δ))·ln(npε/β)/(nε)`; RMSprop and Adam drop the `√L`.
pub fn population_bound(variant: KindTag, x: &BoundInputs, constant: f64) -> Result<f64> {
    x.validate()?;
    check_constant(constant)?;
    let log_factor = (x.n * x.p * x.eps / x.beta).ln();
    let base = constant * x.g * x.root_p_log() * log_factor / (x.n * x.eps);
    Ok(match variant {
        KindTag::Gd => base * x.l.sqrt(),
        KindTag::RmsProp | KindTag::Adam => base,
    })
}

/// Bound on `E‖∇f̂(w_R)‖²`.
///
/// GD: `c·√L·G√(p ln(1/δ))/(nε)`; RMSprop and Adam: `c·G²√(p ln(1/δ))/(nε)`.
/// `beta` in `x` is unused.
pub fn empirical_bound(variant: KindTag, x: &BoundInputs, constant: f64) -> Result<f64> {
    x.validate()?;
    check_constant(constant)?;
    let base = constant * x.root_p_log() / (x.n * x.eps);
    Ok(match variant {
        KindTag::Gd => base * x.l.sqrt() * x.g,
        KindTag::RmsProp | KindTag::Adam => base * x.g * x.g,
    })
}

/// `c·√(p/n)`, the uniform-convergence baseline for `sup_w ‖∇f − ∇f̂‖`.
pub fn uniform_convergence_bound(p: f64, n: f64, constant: f64) -> Result<f64> {
    if !(p > 0.0 && n > 0.0) {
        return Err(Error::invalid("n", "p and n must be positive"));
    }
    check_constant(constant)?;
    Ok(constant * (p / n).sqrt())
}

/// Side conditions of the concentration theorem for a given configuration.
/// They are reported, never enforced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preconditions {
    /// `ε ≤ σ/13`
    pub eps_small: bool,
    /// `n ≥ 2 ln(8/δ)/ε²`
    pub n_large: bool,
    /// `δ ≤ σ·exp(−μ²/2)/(26·ln(26/σ))` (the stricter of two stated forms)
    pub delta_small: bool,
}

impl Preconditions {
    pub fn all(&self) -> bool {
        self.eps_small && self.n_large && self.delta_small
    }
}

pub fn check_preconditions(eps: f64, delta: f64, sigma: f64, mu: f64, n: f64) -> Preconditions {
    let log_term = (26.0 / sigma).ln();
    Preconditions {
        eps_small: eps <= sigma / 13.0,
        n_large: n >= 2.0 * (8.0 / delta).ln() / (eps * eps),
        delta_small: log_term > 0.0 && delta <= sigma * (-0.5 * mu * mu).exp() / (26.0 * log_term),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub alpha: f64,
    pub xi: f64,
    pub union_failure: f64,
    pub population_bound: f64,
    pub empirical_bound: f64,
    pub constant_factor: f64,
}

pub fn bound_report(
    variant: KindTag,
    spec: &ConcentrationSpec,
    x: &BoundInputs,
    constant: f64,
) -> Result<BoundReport> {
    let (alpha, xi) = concentration(spec);
    Ok(BoundReport {
        alpha,
        xi,
        union_failure: union_failure(spec),
        population_bound: population_bound(variant, x, constant)?,
        empirical_bound: empirical_bound(variant, x, constant)?,
        constant_factor: constant,
    })
}
