//! Moments accountant for `T` adaptive releases of the (sub)sampled Gaussian
//! mechanism, the inverse problem (noise multiplier for a target budget), and
//! the advanced-composition baseline.
//!
//! Noise is always expressed as a multiple of the per-release sensitivity; the
//! caller applies the sensitivity (`2G/n` for a full-batch mean under
//! replace-one, `C` for a clipped per-example sum).
//!
//! For a mechanism with noise multiplier `σ` and sampling rate `q` the per-step
//! log moment at integer order `λ` is
//!
//! ```text
//! α(λ) = max( ln E_{z~μ0}[(μ(z)/μ0(z))^(λ+1)],  ln E_{z~μ0}[(μ(z)/μ0(z))^(1-λ)] )
//! μ0 = N(0, σ²),  μ = (1-q)·μ0 + q·N(1, σ²)
//! ```
//!
//! and `T` releases are `(ε, δ)`-DP with `ε = min_λ (T·α(λ) + ln(1/δ)) / λ`.

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ORDER: u32 = 128;
pub const DEFAULT_QUADRATURE_NODES: usize = 10_000;

/// Bracket searched by [`Accountant::sigma_for_budget`].
pub const SIGMA_SEARCH_MIN: f64 = 0.1;
pub const SIGMA_SEARCH_MAX: f64 = 1.0e6;

const SIGMA_SEARCH_REL_TOL: f64 = 1.0e-5;
/// Half-width of the integration window beyond the moment peaks, in units of σ.
const TAIL_SIGMAS: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::invalid(
                "epsilon",
                format!("must be > 0, got {epsilon}"),
            ));
        }
        check_delta(delta)?;
        Ok(Self { epsilon, delta })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(
            "delta",
            format!("must lie in (0, 1), got {delta}"),
        ));
    }
    Ok(())
}

/// One Gaussian release repeated `steps` times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismSpec {
    pub noise_multiplier: f64,
    pub sampling_rate: f64,
    pub steps: u64,
}

impl MechanismSpec {
    pub fn new(noise_multiplier: f64, sampling_rate: f64, steps: u64) -> Result<Self> {
        if !(noise_multiplier > 0.0) || !noise_multiplier.is_finite() {
            return Err(Error::invalid(
                "noise_multiplier",
                format!("must be finite and > 0, got {noise_multiplier}"),
            ));
        }
        if !(sampling_rate > 0.0 && sampling_rate <= 1.0) {
            return Err(Error::invalid(
                "sampling_rate",
                format!("must lie in (0, 1], got {sampling_rate}"),
            ));
        }
        if steps == 0 {
            return Err(Error::invalid("steps", "must be >= 1"));
        }
        Ok(Self {
            noise_multiplier,
            sampling_rate,
            steps,
        })
    }

    /// Full-batch release (`q = 1`).
    pub fn full_batch(noise_multiplier: f64, steps: u64) -> Result<Self> {
        Self::new(noise_multiplier, 1.0, steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccountantConfig {
    pub max_order: u32,
    pub quadrature_nodes: usize,
}

impl Default for AccountantConfig {
    fn default() -> Self {
        Self {
            max_order: DEFAULT_MAX_ORDER,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        }
    }
}

/// Log moments `(λ, α(λ))` for orders `1..=max_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentLedger {
    log_moments: Vec<(u32, f64)>,
    max_order: u32,
}

impl MomentLedger {
    pub fn log_moments(&self) -> &[(u32, f64)] {
        &self.log_moments
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn at(&self, order: u32) -> Option<f64> {
        self.log_moments
            .iter()
            .find(|(l, _)| *l == order)
            .map(|(_, a)| *a)
    }

    /// Ledger after `steps` identical releases (log moments add up).
    pub fn compose(&self, steps: u64) -> MomentLedger {
        MomentLedger {
            log_moments: self
                .log_moments
                .iter()
                .map(|&(l, a)| (l, a * steps as f64))
                .collect(),
            max_order: self.max_order,
        }
    }

    /// Adds another ledger's moments order by order (heterogeneous composition).
    pub fn accumulate(&mut self, other: &MomentLedger) -> Result<()> {
        if other.max_order != self.max_order {
            return Err(Error::invalid(
                "ledger",
                format!("max order {} vs {}", self.max_order, other.max_order),
            ));
        }
        for (mine, theirs) in self.log_moments.iter_mut().zip(&other.log_moments) {
            mine.1 += theirs.1;
        }
        Ok(())
    }

    /// `min_λ (α(λ) + ln(1/δ)) / λ` over the ledger's orders, with the minimizing order.
    pub fn epsilon(&self, delta: f64) -> Result<(f64, u32)> {
        check_delta(delta)?;
        let log_inv_delta = (1.0 / delta).ln();
        self.log_moments
            .iter()
            .filter(|(_, a)| a.is_finite())
            .map(|&(l, a)| ((a + log_inv_delta) / l as f64, l))
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .ok_or_else(|| Error::Calibration("no order yields a finite log moment".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonReport {
    pub epsilon: f64,
    /// Order λ attaining the minimum.
    pub order: u32,
    /// True when the classical sufficient condition for the subsampled bound
    /// (σ ≥ 1 and λ ≤ σ²·ln(1/(qσ))) fails at the chosen order. Reported, not enforced.
    pub strained: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Accountant {
    config: AccountantConfig,
}

impl Accountant {
    pub fn new(config: AccountantConfig) -> Result<Self> {
        if config.max_order < 2 {
            return Err(Error::invalid("max_order", "must be >= 2"));
        }
        if config.quadrature_nodes < 100 {
            return Err(Error::invalid("quadrature_nodes", "must be >= 100"));
        }
        Ok(Self { config })
    }

    pub fn config(&self) -> AccountantConfig {
        self.config
    }

    /// Per-step log moments of one release (the `steps` field is ignored).
    pub fn step_log_moments(&self, spec: &MechanismSpec) -> Result<MomentLedger> {
        let sigma = spec.noise_multiplier;
        let q = spec.sampling_rate;
        let mut log_moments = Vec::with_capacity(self.config.max_order as usize);
        for order in 1..=self.config.max_order {
            let alpha = if q == 1.0 {
                closed_form_log_moment(sigma, order)
            } else {
                log_moment_quadrature(sigma, q, order, self.config.quadrature_nodes)
            };
            if !alpha.is_finite() {
                return Err(Error::Calibration(format!(
                    "log moment at order {order} is not finite for sigma={sigma}, q={q}"
                )));
            }
            log_moments.push((order, alpha));
        }
        Ok(MomentLedger {
            log_moments,
            max_order: self.config.max_order,
        })
    }

    pub fn eps_for_delta(&self, spec: &MechanismSpec, delta: f64) -> Result<EpsilonReport> {
        check_delta(delta)?;
        let ledger = self.step_log_moments(spec)?.compose(spec.steps);
        let (epsilon, order) = ledger.epsilon(delta)?;
        let sigma = spec.noise_multiplier;
        let q = spec.sampling_rate;
        let strained = q < 1.0
            && !(sigma >= 1.0 && (order as f64) <= sigma * sigma * (1.0 / (q * sigma)).ln());
        Ok(EpsilonReport {
            epsilon,
            order,
            strained,
        })
    }

    /// Smallest noise multiplier (to within 1e-5 relative) whose accounted ε
    /// does not exceed `budget.epsilon` after `steps` releases at rate `q`.
    pub fn sigma_for_budget(&self, budget: PrivacyBudget, steps: u64, q: f64) -> Result<f64> {
        search_sigma(budget, steps, q, |spec| {
            Ok(self.eps_for_delta(spec, budget.delta)?.epsilon)
        })
    }
}

/// Smallest noise multiplier (to within 1e-5 relative) whose
/// advanced-composition ε does not exceed `budget.epsilon`.
pub fn advanced_composition_sigma_for_budget(
    budget: PrivacyBudget,
    steps: u64,
    q: f64,
) -> Result<f64> {
    search_sigma(budget, steps, q, |spec| {
        Ok(advanced_composition_for_mechanism(spec, budget.delta)?.epsilon)
    })
}

/// Geometric bisection over σ for a calculator that is nonincreasing in σ.
fn search_sigma(
    budget: PrivacyBudget,
    steps: u64,
    q: f64,
    eps_at: impl Fn(&MechanismSpec) -> Result<f64>,
) -> Result<f64> {
    // Validate (steps, q) once with a harmless sigma.
    MechanismSpec::new(1.0, q, steps)?;
    let within = |sigma: f64| -> Result<bool> {
        match eps_at(&MechanismSpec::new(sigma, q, steps)?) {
            Ok(e) => Ok(e <= budget.epsilon),
            Err(Error::Calibration(_)) => Ok(false),
            Err(e) => Err(e),
        }
    };
    if !within(SIGMA_SEARCH_MAX)? {
        return Err(Error::Calibration(format!(
            "epsilon={} at delta={} unreachable with sigma <= {SIGMA_SEARCH_MAX} (steps={steps}, q={q})",
            budget.epsilon, budget.delta
        )));
    }
    if within(SIGMA_SEARCH_MIN)? {
        return Ok(SIGMA_SEARCH_MIN);
    }
    let (mut lo, mut hi) = (SIGMA_SEARCH_MIN, SIGMA_SEARCH_MAX);
    while hi / lo - 1.0 > SIGMA_SEARCH_REL_TOL {
        let mid = (lo * hi).sqrt();
        if within(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `λ(λ+1)/(2σ²)`, the exact log moment of the unsampled Gaussian mechanism.
pub fn closed_form_log_moment(sigma: f64, order: u32) -> f64 {
    let l = order as f64;
    l * (l + 1.0) / (2.0 * sigma * sigma)
}

/// Log moment of the sampled Gaussian mechanism by trapezoidal quadrature
/// on a fixed uniform grid of `nodes` points.
pub fn log_moment_quadrature(sigma: f64, q: f64, order: u32, nodes: usize) -> f64 {
    let l = order as f64;
    let forward = log_expected_ratio_power(sigma, q, l + 1.0, order, nodes);
    let backward = log_expected_ratio_power(sigma, q, 1.0 - l, order, nodes);
    forward.max(backward)
}

/// `ln E_{z~N(0,σ²)}[r(z)^k]` with `r = μ/μ0 = 1 + q·(exp((2z-1)/(2σ²)) - 1)`.
fn log_expected_ratio_power(sigma: f64, q: f64, k: f64, order: u32, nodes: usize) -> f64 {
    let s2 = sigma * sigma;
    let half_width = order as f64 + 1.0 + TAIL_SIGMAS * sigma;
    let (a, b) = (-half_width, half_width);
    let h = (b - a) / (nodes - 1) as f64;
    let log_norm = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let log_r = |z: f64| {
        let x = (2.0 * z - 1.0) / (2.0 * s2);
        if q == 1.0 {
            x
        } else if x > 30.0 {
            // ln(1 + q(e^x − 1)) without overflowing e^x
            q.ln() + x + ((1.0 / q - 1.0) * (-x).exp()).ln_1p()
        } else {
            (q * x.exp_m1()).ln_1p()
        }
    };

    // Log-domain pass: always finite, accurate when the moment is not tiny.
    let mut terms = Vec::with_capacity(nodes);
    let mut peak = f64::NEG_INFINITY;
    for i in 0..nodes {
        let z = a + h * i as f64;
        let w = if i == 0 || i == nodes - 1 { 0.5 * h } else { h };
        let log_phi = log_norm - z * z / (2.0 * s2);
        let kr = k * log_r(z);
        let t = w.ln() + log_phi + kr;
        peak = peak.max(t);
        terms.push((w, log_phi, kr, t));
    }
    let sum: f64 = terms.iter().map(|&(.., t)| (t - peak).exp()).sum();
    let log_value = peak + sum.ln();
    if log_value > 0.5 || !log_value.is_finite() {
        return log_value;
    }

    // Small moments: integrate r^k - 1 directly and take ln1p, which keeps
    // relative precision when the moment is close to 1.
    let excess: f64 = terms
        .iter()
        .map(|&(w, log_phi, kr, _)| {
            if kr.abs() < 1.0 {
                w * log_phi.exp() * kr.exp_m1()
            } else {
                w * ((log_phi + kr).exp() - log_phi.exp())
            }
        })
        .sum();
    excess.ln_1p()
}

/// Classical single-release Gaussian bound `ε₀ = √(2 ln(1.25/δ₀)) / σ`.
pub fn gaussian_step_epsilon(noise_multiplier: f64, delta0: f64) -> f64 {
    (2.0 * (1.25 / delta0).ln()).sqrt() / noise_multiplier
}

/// Advanced composition of `steps` releases, each `(ε₀, δ₀)`-DP, with slack `δ'`:
/// `(√(2T ln(1/δ'))·ε₀ + T·ε₀(e^ε₀ − 1),  T·δ₀ + δ')`.
pub fn advanced_composition(
    epsilon0: f64,
    delta0: f64,
    steps: u64,
    delta_slack: f64,
) -> Result<PrivacyBudget> {
    if !(epsilon0 > 0.0) {
        return Err(Error::invalid(
            "epsilon0",
            format!("must be > 0, got {epsilon0}"),
        ));
    }
    if !(0.0..1.0).contains(&delta0) {
        return Err(Error::invalid(
            "delta0",
            format!("must lie in [0, 1), got {delta0}"),
        ));
    }
    if !(delta_slack > 0.0 && delta_slack < 1.0) {
        return Err(Error::invalid(
            "delta_slack",
            format!("must lie in (0, 1), got {delta_slack}"),
        ));
    }
    if steps == 0 {
        return Err(Error::invalid("steps", "must be >= 1"));
    }
    let t = steps as f64;
    let epsilon =
        (2.0 * t * (1.0 / delta_slack).ln()).sqrt() * epsilon0 + t * epsilon0 * epsilon0.exp_m1();
    let delta = t * delta0 + delta_slack;
    PrivacyBudget::new(epsilon, delta)
}

/// Advanced-composition ε for the same mechanism the moments accountant sees.
///
/// The total δ is split evenly between the composition slack and the per-step
/// Gaussian failure mass; a sampled step uses the amplified pair
/// `(ln(1 + q(e^ε₀ − 1)), q·δ₀)`.
pub fn advanced_composition_for_mechanism(
    spec: &MechanismSpec,
    delta: f64,
) -> Result<PrivacyBudget> {
    check_delta(delta)?;
    let t = spec.steps as f64;
    let q = spec.sampling_rate;
    let delta_slack = delta / 2.0;
    let raw_delta0 = delta / (2.0 * t * q);
    if raw_delta0 >= 1.0 {
        return Err(Error::invalid(
            "delta",
            "per-step share of delta must be < 1",
        ));
    }
    let raw_eps0 = gaussian_step_epsilon(spec.noise_multiplier, raw_delta0);
    let eps0 = (q * raw_eps0.exp_m1()).ln_1p();
    advanced_composition(eps0, q * raw_delta0, spec.steps, delta_slack)
}
