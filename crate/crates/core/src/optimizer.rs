//! The DPAGD loop: noisy gradient, first/second-moment averaging, clamped
//! preconditioner, update `w ← w − η·m/(√v + ν)`.
//!
//! The only data-dependent input to an update is the (optionally clipped)
//! empirical gradient. It is wrapped into a [`NoisyGradient`] by
//! [`noisy_gradient`] before anything else sees it, and the averaging rules
//! only accept that wrapper.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;

use crate::accountant::{Accountant, PrivacyBudget};
use crate::error::{Error, Result};
use crate::oracle::{empirical_gradient, population_gradient, Dataset, LossModel, MonteCarlo};
use crate::rng::{fill_standard_normal, SeedTree, StreamRng};
use crate::vector::{dist, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AveragingKind {
    Gd,
    RmsProp { beta2: f64 },
    Adam { beta1: f64, beta2: f64 },
}

impl AveragingKind {
    pub fn tag(&self) -> &'static str {
        match self {
            AveragingKind::Gd => "gd",
            AveragingKind::RmsProp { .. } => "rmsprop",
            AveragingKind::Adam { .. } => "adam",
        }
    }

    /// Builds a kind from its tag; betas are ignored where unused.
    pub fn from_tag(tag: &str, beta1: f64, beta2: f64) -> Result<Self> {
        match tag.parse::<KindTag>()? {
            KindTag::Gd => Ok(AveragingKind::Gd),
            KindTag::RmsProp => Ok(AveragingKind::RmsProp { beta2 }),
            KindTag::Adam => Ok(AveragingKind::Adam { beta1, beta2 }),
        }
    }

    fn validate(&self) -> Result<()> {
        let beta2_ok = |b: f64| b > 0.0 && b < 1.0;
        match *self {
            AveragingKind::Gd => Ok(()),
            AveragingKind::RmsProp { beta2 } if !beta2_ok(beta2) => Err(Error::invalid(
                "beta2",
                format!("must lie in (0, 1), got {beta2}"),
            )),
            AveragingKind::Adam { beta2, .. } if !beta2_ok(beta2) => Err(Error::invalid(
                "beta2",
                format!("must lie in (0, 1), got {beta2}"),
            )),
            AveragingKind::Adam { beta1, .. } if !(0.0..1.0).contains(&beta1) => Err(
                Error::invalid("beta1", format!("must lie in [0, 1), got {beta1}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Method name without parameters, as used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KindTag {
    Gd,
    RmsProp,
    Adam,
}

impl FromStr for KindTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gd" | "sgd" => Ok(KindTag::Gd),
            "rmsprop" => Ok(KindTag::RmsProp),
            "adam" => Ok(KindTag::Adam),
            other => Err(Error::invalid(
                "kind",
                format!("unknown method `{other}` (expected gd, rmsprop or adam)"),
            )),
        }
    }
}

impl fmt::Display for KindTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KindTag::Gd => "gd",
            KindTag::RmsProp => "rmsprop",
            KindTag::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Multiply the step size by `factor` every `every` steps.
    StepDecay { every: u64, factor: f64 },
}

impl LrSchedule {
    /// Step size at 1-based step `t`.
    pub fn at(&self, eta: f64, t: u64) -> f64 {
        match *self {
            LrSchedule::Constant => eta,
            LrSchedule::StepDecay { every, factor } => {
                eta * factor.powi(((t - 1) / every.max(1)) as i32)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub eta: f64,
    pub nu: f64,
    pub lambda_clamp: f64,
    /// Per-coordinate standard deviation of the noise added to the mean gradient.
    pub sigma: f64,
    pub steps: u64,
    pub kind: AveragingKind,
    pub batch_size: Option<usize>,
    pub clip_bound: Option<f64>,
    pub seed: u64,
    pub schedule: LrSchedule,
    /// Divide `m` by `1−β₁ᵗ` and `v` by `1−β₂ᵗ` before use (Adam only).
    pub bias_correction: bool,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(
                "eta",
                format!("must be > 0, got {}", self.eta),
            ));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid(
                "nu",
                format!("must be ≥ 0, got {}", self.nu),
            ));
        }
        if !(self.lambda_clamp > 0.0) {
            return Err(Error::invalid(
                "lambda",
                format!("must be > 0, got {}", self.lambda_clamp),
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(
                "sigma",
                format!("must be ≥ 0, got {}", self.sigma),
            ));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be ≥ 1"));
        }
        self.kind.validate()?;
        match self.kind {
            AveragingKind::Gd => {
                if self.nu != 0.0 || self.lambda_clamp != 1.0 {
                    return Err(Error::invalid(
                        "nu",
                        "gd needs nu = 0 and lambda = 1 so the denominator is exactly 1",
                    ));
                }
            }
            _ => {
                if !(self.nu > 0.0) {
                    return Err(Error::invalid("nu", "rmsprop and adam need nu > 0"));
                }
            }
        }
        if let Some(b) = self.batch_size {
            if b == 0 {
                return Err(Error::invalid("batch_size", "must be ≥ 1"));
            }
            if self.clip_bound.is_none() {
                return Err(Error::invalid("clip", "mini-batch mode needs a clip bound"));
            }
        }
        if let Some(c) = self.clip_bound {
            if !(c > 0.0) {
                return Err(Error::invalid("clip", format!("must be > 0, got {c}")));
            }
        }
        if let LrSchedule::StepDecay { every, factor } = self.schedule {
            if every == 0 || !(factor > 0.0) {
                return Err(Error::invalid("lr_decay", "need every ≥ 1 and factor > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub w: Vec<f64>,
    /// First-moment accumulator `m_t`.
    pub m: Vec<f64>,
    /// Unclamped second-moment accumulator `ψ_t`.
    pub v: Vec<f64>,
    /// Completed steps.
    pub t: u64,
}

impl OptimizerState {
    pub fn new(w0: Vec<f64>) -> Self {
        let p = w0.len();
        Self {
            w: w0,
            m: vec![0.0; p],
            v: vec![0.0; p],
            t: 0,
        }
    }
}

/// A gradient that has already received its Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyGradient(Vec<f64>);

impl NoisyGradient {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// `grad + b` with `b ~ N(0, σ²I)` drawn from `rng`.
pub fn noisy_gradient(grad: &[f64], sigma: f64, rng: &mut StreamRng) -> NoisyGradient {
    let mut out = grad.to_vec();
    if sigma > 0.0 {
        let mut b = vec![0.0; grad.len()];
        fill_standard_normal(rng, &mut b);
        for (o, e) in out.iter_mut().zip(&b) {
            *o += sigma * e;
        }
    }
    NoisyGradient(out)
}

/// One application of `φ_t`, `ψ_t` in recursive form. Returns `(m_t, v_t)` with
/// `v_t` unclamped.
pub fn averaging(
    kind: AveragingKind,
    m_prev: &[f64],
    v_prev: &[f64],
    g: &NoisyGradient,
) -> (Vec<f64>, Vec<f64>) {
    let g = g.as_slice();
    match kind {
        AveragingKind::Gd => (g.to_vec(), vec![1.0; g.len()]),
        AveragingKind::RmsProp { beta2 } => (g.to_vec(), second_moment(beta2, v_prev, g)),
        AveragingKind::Adam { beta1, beta2 } => {
            let m = m_prev
                .iter()
                .zip(g)
                .map(|(m, x)| beta1 * m + (1.0 - beta1) * x)
                .collect();
            (m, second_moment(beta2, v_prev, g))
        }
    }
}

fn second_moment(beta2: f64, v_prev: &[f64], g: &[f64]) -> Vec<f64> {
    v_prev
        .iter()
        .zip(g)
        .map(|(v, x)| beta2 * v + (1.0 - beta2) * x * x)
        .collect()
}

/// Applies one update; returns the clamped `v_t` used in it.
pub fn step(
    state: &mut OptimizerState,
    config: &OptimizerConfig,
    g: &NoisyGradient,
) -> Result<Vec<f64>> {
    if state.t >= config.steps {
        return Err(Error::invalid(
            "steps",
            "all configured steps already taken",
        ));
    }
    if g.as_slice().len() != state.w.len() {
        return Err(Error::Dimension {
            expected: state.w.len(),
            got: g.as_slice().len(),
        });
    }
    let t = state.t + 1;
    let (m, v) = averaging(config.kind, &state.m, &state.v, g);
    let (mc, vc) = match (config.bias_correction, config.kind) {
        (true, AveragingKind::Adam { beta1, beta2 }) => (
            1.0 / (1.0 - beta1.powi(t as i32)),
            1.0 / (1.0 - beta2.powi(t as i32)),
        ),
        _ => (1.0, 1.0),
    };
    let eta = config.schedule.at(config.eta, t);
    let lambda = config.lambda_clamp;
    let mut used = Vec::with_capacity(v.len());
    for ((w, mi), vi) in state.w.iter_mut().zip(&m).zip(&v) {
        let vt = (vi * vc).min(lambda);
        *w -= eta * (mi * mc) / (vt.sqrt() + config.nu);
        used.push(vt);
    }
    state.m = m;
    state.v = v;
    state.t = t;
    Ok(used)
}

/// Which optional diagnostics `run` records per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monitor {
    /// `‖∇f̂(w_t)‖²` on the full training set, unclipped.
    pub empirical: bool,
    pub population: PopulationMonitor,
    /// `f̂(w_t)`.
    pub loss: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PopulationMonitor {
    Off,
    /// Only when the model has a closed form.
    Analytic,
    /// Closed form if available, otherwise Monte Carlo with this many draws.
    MonteCarlo {
        samples: usize,
    },
}

impl Default for Monitor {
    fn default() -> Self {
        Self {
            empirical: true,
            population: PopulationMonitor::Analytic,
            loss: true,
        }
    }
}

impl Monitor {
    pub fn off() -> Self {
        Self {
            empirical: false,
            population: PopulationMonitor::Off,
            loss: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEntry {
    pub t: u64,
    pub emp_grad_sq: Option<f64>,
    pub pop_grad_sq: Option<f64>,
    /// `‖g̃_t − ĝ_t‖`
    pub noise_dev: f64,
    /// `‖g̃_t − g_t‖`
    pub total_dev: Option<f64>,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub entries: Vec<TrajectoryEntry>,
    /// Uniform draw from `1..=T`.
    pub r: u64,
    pub w_r: Vec<f64>,
    pub w_final: Vec<f64>,
}

pub const TRAJECTORY_HEADER: &str = "t,emp_grad_sq,pop_grad_sq,noise_dev,total_dev,loss";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl TrajectoryRecord {
    /// Mean of `‖∇f̂(w_t)‖²` over `t`, i.e. `E_R‖∇f̂(w_R)‖²`.
    pub fn mean_emp_grad_sq(&self) -> Option<f64> {
        mean_of(self.entries.iter().map(|e| e.emp_grad_sq))
    }

    pub fn mean_pop_grad_sq(&self) -> Option<f64> {
        mean_of(self.entries.iter().map(|e| e.pop_grad_sq))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAJECTORY_HEADER);
        s.push('\n');
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{:e},{},{}\n",
                e.t,
                opt(e.emp_grad_sq),
                opt(e.pop_grad_sq),
                e.noise_dev,
                opt(e.total_dev),
                opt(e.loss)
            ));
        }
        s
    }
}

fn mean_of(it: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = it.collect();
    let v = v?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs `config.steps` DPAGD steps from `w0`.
pub fn run(
    model: &dyn LossModel,
    data: &Dataset,
    w0: Vec<f64>,
    config: &OptimizerConfig,
    monitor: Monitor,
) -> Result<TrajectoryRecord> {
    run_with_hook(model, data, w0, config, monitor, |_| Ok(()))
}

/// As [`run`], calling `hook` after every completed step.
pub fn run_with_hook(
    model: &dyn LossModel,
    data: &Dataset,
    w0: Vec<f64>,
    config: &OptimizerConfig,
    monitor: Monitor,
    mut hook: impl FnMut(&OptimizerState) -> Result<()>,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    if w0.len() != model.dimension() {
        return Err(Error::Dimension {
            expected: model.dimension(),
            got: w0.len(),
        });
    }
    let n = data.len();
    if let Some(b) = config.batch_size {
        if b > n {
            return Err(Error::invalid(
                "batch_size",
                format!("batch {b} exceeds dataset size {n}"),
            ));
        }
    }
    let seeds = SeedTree::new(config.seed);
    let r = seeds.stream("select", 0).random_range(1..=config.steps);
    let mc_seeds = seeds.child("population", 0);

    let mut state = OptimizerState::new(w0);
    let mut entries = Vec::with_capacity(config.steps as usize);
    let mut w_r = Vec::new();
    for t in 1..=config.steps {
        if t == r {
            w_r = state.w.clone();
        }
        let batch = config.batch_size.map(|b| {
            let mut idx = index::sample(&mut seeds.stream("batch", t), n, b).into_vec();
            idx.sort_unstable();
            idx
        });
        let g_hat = empirical_gradient(model, data, &state.w, batch.as_deref(), config.clip_bound)?;
        let g_tilde = noisy_gradient(&g_hat, config.sigma, &mut seeds.stream("noise", t));

        let exact_full = batch.is_none() && config.clip_bound.is_none();
        let emp_grad_sq = if exact_full {
            Some(norm_sq(&g_hat))
        } else if monitor.empirical {
            Some(norm_sq(&empirical_gradient(
                model, data, &state.w, None, None,
            )?))
        } else {
            None
        };
        let pop = match monitor.population {
            PopulationMonitor::Off => None,
            PopulationMonitor::Analytic => model.population_gradient(&state.w),
            PopulationMonitor::MonteCarlo { samples } => Some(
                population_gradient(
                    model,
                    &state.w,
                    Some(MonteCarlo {
                        samples,
                        seeds: mc_seeds.child("step", t),
                    }),
                )?
                .mean,
            ),
        };
        let loss = monitor.loss.then(|| model.mean_loss(&state.w, data));
        entries.push(TrajectoryEntry {
            t,
            emp_grad_sq,
            pop_grad_sq: pop.as_ref().map(|g| norm_sq(g)),
            noise_dev: dist(g_tilde.as_slice(), &g_hat),
            total_dev: pop.as_ref().map(|g| dist(g_tilde.as_slice(), g)),
            loss,
        });

        step(&mut state, config, &g_tilde)?;
        hook(&state)?;
    }
    Ok(TrajectoryRecord {
        entries,
        r,
        w_r,
        w_final: state.w,
    })
}

/// Parameter sets prescribed by the convergence theorems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TheoryTarget {
    GdPop,
    RmspropPop,
    AdamPop,
    GdEmp,
    RmspropEmp,
    AdamEmp,
}

impl TheoryTarget {
    pub fn kind_tag(&self) -> KindTag {
        match self {
            TheoryTarget::GdPop | TheoryTarget::GdEmp => KindTag::Gd,
            TheoryTarget::RmspropPop | TheoryTarget::RmspropEmp => KindTag::RmsProp,
            TheoryTarget::AdamPop | TheoryTarget::AdamEmp => KindTag::Adam,
        }
    }

    pub fn is_population(&self) -> bool {
        matches!(
            self,
            TheoryTarget::GdPop | TheoryTarget::RmspropPop | TheoryTarget::AdamPop
        )
    }

    pub fn new(kind: KindTag, population: bool) -> Self {
        match (kind, population) {
            (KindTag::Gd, true) => TheoryTarget::GdPop,
            (KindTag::Gd, false) => TheoryTarget::GdEmp,
            (KindTag::RmsProp, true) => TheoryTarget::RmspropPop,
            (KindTag::RmsProp, false) => TheoryTarget::RmspropEmp,
            (KindTag::Adam, true) => TheoryTarget::AdamPop,
            (KindTag::Adam, false) => TheoryTarget::AdamEmp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryInputs {
    pub n: usize,
    pub p: usize,
    pub eps: f64,
    pub delta: f64,
    pub g: f64,
    pub l: f64,
    pub nu: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda: f64,
    /// Multiplies the prescribed `T` before rounding up.
    pub t_scale: f64,
}

impl TheoryInputs {
    /// Defaults for the adaptive-method knobs: `ν = 1`, `β₁ = 0.9`,
    /// `β₂ = 0.999`, `λ = 1`, `t_scale = 1`.
    pub fn new(n: usize, p: usize, eps: f64, delta: f64, g: f64, l: f64) -> Self {
        Self {
            n,
            p,
            eps,
            delta,
            g,
            l,
            nu: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            lambda: 1.0,
            t_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryPrescription {
    pub config: OptimizerConfig,
    /// Noise standard deviation in units of the sensitivity.
    pub noise_multiplier: f64,
    /// Replace-one sensitivity `2G/n` of the full-batch mean gradient.
    pub sensitivity: f64,
    /// The prescribed `T` before rounding.
    pub steps_exact: f64,
}

/// Largest Adam step size allowed by the convergence condition:
/// `η = (√(1/4 + 4k) − 1/2)·(1−β₁)²/(4β₁)·ν/L`, `k = β₁/(1−β₁)²`.
/// Tends to `ν/L` as `β₁ → 0`.
pub fn adam_step_size(beta1: f64, nu: f64, l: f64) -> f64 {
    let k = beta1 / ((1.0 - beta1) * (1.0 - beta1));
    // √(1/4 + 4k) − 1/2 = 4k / (√(1/4 + 4k) + 1/2), stable for small k
    let root = 4.0 * k / ((0.25 + 4.0 * k).sqrt() + 0.5);
    root / (4.0 * k) * nu / l
}

pub fn set_params_from_theory(
    target: TheoryTarget,
    x: &TheoryInputs,
    accountant: &Accountant,
    seed: u64,
) -> Result<TheoryPrescription> {
    let positive = [
        ("n", x.n as f64),
        ("p", x.p as f64),
        ("eps", x.eps),
        ("G", x.g),
        ("L", x.l),
        ("t_scale", x.t_scale),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(name, format!("must be positive, got {v}")));
        }
    }
    let budget = PrivacyBudget::new(x.eps, x.delta)?;
    let n = x.n as f64;
    let log_term = (x.p as f64 * (1.0 / x.delta).ln()).sqrt();
    let kind_tag = target.kind_tag();
    let base = n * x.eps / (x.g * log_term);
    let steps_exact = match kind_tag {
        KindTag::Gd => base * x.l.sqrt(),
        _ => base,
    };
    let steps = ((x.t_scale * steps_exact).ceil() as u64).max(1);

    let (kind, eta, nu, lambda) = match target {
        TheoryTarget::GdPop => (AveragingKind::Gd, 1.0 / (4.0 * x.l), 0.0, 1.0),
        TheoryTarget::GdEmp => (AveragingKind::Gd, 1.0 / x.l, 0.0, 1.0),
        TheoryTarget::RmspropPop | TheoryTarget::RmspropEmp => {
            let eta = if target.is_population() {
                x.nu / (4.0 * x.l)
            } else {
                let cap = x.nu * x.nu / (16.0 * x.g * x.g);
                if 1.0 - x.beta2 > cap {
                    return Err(Error::ParameterInfeasible {
                        inequality: "1 - beta2 <= nu^2 / (16 G^2)",
                        detail: format!("1 - beta2 = {} > {cap}", 1.0 - x.beta2),
                    });
                }
                x.nu / (2.0 * x.l)
            };
            (
                AveragingKind::RmsProp { beta2: x.beta2 },
                eta,
                x.nu,
                x.lambda,
            )
        }
        TheoryTarget::AdamPop | TheoryTarget::AdamEmp => {
            if !(x.beta1 > 0.0 && x.beta1 < 1.0) {
                return Err(Error::invalid("beta1", "must lie in (0, 1)"));
            }
            (
                AveragingKind::Adam {
                    beta1: x.beta1,
                    beta2: x.beta2,
                },
                adam_step_size(x.beta1, x.nu, x.l),
                x.nu,
                x.lambda,
            )
        }
    };

    let noise_multiplier = accountant.sigma_for_budget(budget, steps, 1.0)?;
    let sensitivity = 2.0 * x.g / n;
    let config = OptimizerConfig {
        eta,
        nu,
        lambda_clamp: lambda,
        sigma: noise_multiplier * sensitivity,
        steps,
        kind,
        batch_size: None,
        clip_bound: None,
        seed,
        schedule: LrSchedule::Constant,
        bias_correction: false,
    };
    config.validate()?;
    Ok(TheoryPrescription {
        config,
        noise_multiplier,
        sensitivity,
        steps_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::QuadraticModel;

    fn cfg(kind: AveragingKind, eta: f64, nu: f64, lambda: f64, steps: u64) -> OptimizerConfig {
        OptimizerConfig {
            eta,
            nu,
            lambda_clamp: lambda,
            sigma: 0.0,
            steps,
            kind,
            batch_size: None,
            clip_bound: None,
            seed: 0,
            schedule: LrSchedule::Constant,
            bias_correction: false,
        }
    }

    fn ng(v: &[f64]) -> NoisyGradient {
        NoisyGradient(v.to_vec())
    }

    #[test]
    fn zero_sigma_is_identity() {
        let g = [1.0, -2.0, 3.5];
        let mut rng = SeedTree::new(0).stream("noise", 1);
        assert_eq!(noisy_gradient(&g, 0.0, &mut rng).as_slice(), &g);
    }

    #[test]
    fn noise_moments() {
        let draws = 100_000;
        let sigma = 0.7;
        let g = [1.0, -1.0];
        let seeds = SeedTree::new(3);
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for t in 0..draws {
            let x = noisy_gradient(&g, sigma, &mut seeds.stream("noise", t));
            for j in 0..2 {
                sum[j] += x.as_slice()[j];
                sq[j] += x.as_slice()[j] * x.as_slice()[j];
            }
        }
        let n = draws as f64;
        for j in 0..2 {
            let mean = sum[j] / n;
            let var = sq[j] / n - mean * mean;
            assert!((mean - g[j]).abs() <= 4.0 * sigma / n.sqrt());
            assert!((var / (sigma * sigma) - 1.0).abs() <= 0.05);
        }
    }

    #[test]
    fn gd_step() {
        let mut s = OptimizerState::new(vec![0.0, 0.0]);
        step(
            &mut s,
            &cfg(AveragingKind::Gd, 0.1, 0.0, 1.0, 1),
            &ng(&[1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(s.w, vec![-0.1, 0.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn rmsprop_clamp_saturation() {
        let lambda = 0.25;
        let mut s = OptimizerState::new(vec![0.0; 3]);
        // v_raw = β₂·v + (1−β₂)g² = 4λ when v = 4λ and g² = 4λ
        s.v = vec![4.0 * lambda; 3];
        let c = cfg(AveragingKind::RmsProp { beta2: 0.9 }, 0.5, 0.1, lambda, 1);
        let g = (4.0 * lambda).sqrt();
        let used = step(&mut s, &c, &ng(&[g; 3])).unwrap();
        assert_eq!(used, vec![lambda; 3]);
        let expected = -0.5 * g / (lambda.sqrt() + 0.1);
        assert!(s.w.iter().all(|&w| w == expected));
    }

    #[test]
    fn adam_single_step_hand_value() {
        let mut s = OptimizerState::new(vec![0.0, 0.0]);
        let c = cfg(
            AveragingKind::Adam {
                beta1: 0.9,
                beta2: 0.99,
            },
            0.1,
            0.01,
            100.0,
            1,
        );
        step(&mut s, &c, &ng(&[2.0, -2.0])).unwrap();
        // −0.1·0.2/(√0.04 + 0.01) = −0.02/0.21
        let e = 0.02 / 0.21;
        assert!((s.w[0] + e).abs() < 1e-15 && (s.w[1] - e).abs() < 1e-15);
        assert!((s.w[0] + 0.0952).abs() < 1e-4);
        assert!(step(&mut s, &c, &ng(&[2.0, -2.0])).is_err());
    }

    #[test]
    fn adam_base_case_and_constant_stream() {
        let kind = AveragingKind::Adam {
            beta1: 0.8,
            beta2: 0.95,
        };
        let (m1, v1) = averaging(kind, &[0.0], &[0.0], &ng(&[3.0]));
        assert!((m1[0] - 0.2 * 3.0).abs() < 1e-15);
        assert!((v1[0] - 0.05 * 9.0).abs() < 1e-15);
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        for t in 1..=40 {
            let (a, b) = averaging(kind, &m, &v, &ng(&[3.0]));
            m = a;
            v = b;
            assert!((m[0] - (1.0 - 0.8f64.powi(t)) * 3.0).abs() < 1e-12);
            assert!((v[0] - (1.0 - 0.95f64.powi(t)) * 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_correction_undoes_the_startup_shrinkage() {
        let mut c = cfg(
            AveragingKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
            },
            0.1,
            1e-12,
            1e6,
            1,
        );
        c.bias_correction = true;
        let mut s = OptimizerState::new(vec![0.0]);
        step(&mut s, &c, &ng(&[5.0])).unwrap();
        // m̂ = g, v̂ = g², so the step is η·sign(g)
        assert!((s.w[0] + 0.1).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(AveragingKind::Gd, 0.1, 0.1, 1.0, 1).validate().is_err());
        assert!(cfg(AveragingKind::Gd, 0.1, 0.0, 2.0, 1).validate().is_err());
        assert!(cfg(AveragingKind::RmsProp { beta2: 0.9 }, 0.1, 0.0, 1.0, 1)
            .validate()
            .is_err());
        assert!(cfg(AveragingKind::RmsProp { beta2: 1.0 }, 0.1, 0.1, 1.0, 1)
            .validate()
            .is_err());
        assert!(cfg(AveragingKind::Gd, 0.1, 0.0, 1.0, 0).validate().is_err());
        let mut c = cfg(AveragingKind::Gd, 0.1, 0.0, 1.0, 1);
        c.batch_size = Some(4);
        assert!(c.validate().is_err());
        c.clip_bound = Some(1.0);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn schedule_decays_stepwise() {
        let s = LrSchedule::StepDecay {
            every: 3,
            factor: 0.1,
        };
        let etas: Vec<f64> = (1..=7).map(|t| s.at(1.0, t)).collect();
        assert_eq!(etas[..3], [1.0; 3]);
        assert!((etas[3] - 0.1).abs() < 1e-15 && (etas[6] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn quadratic_gd_halves_gradient_at_half_step() {
        let seeds = SeedTree::new(1);
        let model = QuadraticModel::with_random_means(5, &mut seeds.stream("mu", 0));
        let data = model.sample(30, &mut seeds.stream("d", 0)).unwrap();
        let rec = run(
            &model,
            &data,
            vec![3.0; 5],
            &cfg(AveragingKind::Gd, 0.5, 0.0, 1.0, 20),
            Monitor::default(),
        )
        .unwrap();
        for pair in rec.entries.windows(2) {
            let (a, b) = (pair[0].emp_grad_sq.unwrap(), pair[1].emp_grad_sq.unwrap());
            assert!(b.sqrt() <= 0.5 * a.sqrt() * (1.0 + 1e-12) + 1e-14);
        }
        assert!((1..=20).contains(&rec.r));
        assert_eq!(rec.entries.len(), 20);
    }

    #[test]
    fn trajectory_csv_shape() {
        let model = QuadraticModel::new(vec![0.5, 0.5]).unwrap();
        let data = model
            .sample(4, &mut SeedTree::new(0).stream("d", 0))
            .unwrap();
        let mut c = cfg(AveragingKind::Gd, 0.5, 0.0, 1.0, 3);
        c.sigma = 0.1;
        let m = Monitor {
            population: PopulationMonitor::Off,
            ..Monitor::default()
        };
        let rec = run(&model, &data, vec![0.0; 2], &c, m).unwrap();
        let csv = rec.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines.len(), 4);
        // pop_grad_sq and total_dev are empty when not monitored
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), 6);
        assert!(fields[2].is_empty() && fields[4].is_empty());
    }

    #[test]
    fn gd_pop_prescription() {
        let x = TheoryInputs::new(10_000, 16, 1.0, 1e-5, 1.0, 1.0);
        let pr =
            set_params_from_theory(TheoryTarget::GdPop, &x, &Accountant::default(), 0).unwrap();
        let expected = 1e4 / (16.0 * (1e5f64).ln()).sqrt();
        assert!((pr.steps_exact - expected).abs() < 1e-9);
        assert!((736.0..=737.0).contains(&(pr.config.steps as f64)));
        assert_eq!(pr.config.eta, 0.25);
        assert_eq!((pr.config.nu, pr.config.lambda_clamp), (0.0, 1.0));
        assert_eq!(pr.sensitivity, 2e-4);
        assert!((pr.config.sigma - pr.noise_multiplier * 2e-4).abs() < 1e-18);
    }

    #[test]
    fn rmsprop_emp_infeasible_beta2() {
        let mut x = TheoryInputs::new(10_000, 16, 1.0, 1e-5, 1.0, 1.0);
        x.nu = 1.0;
        x.beta2 = 0.9;
        let err = set_params_from_theory(TheoryTarget::RmspropEmp, &x, &Accountant::default(), 0)
            .unwrap_err();
        assert!(matches!(err, Error::ParameterInfeasible { .. }));
        assert!(err.to_string().contains("beta2"));
        x.beta2 = 0.95;
        let ok = set_params_from_theory(TheoryTarget::RmspropEmp, &x, &Accountant::default(), 0)
            .unwrap();
        assert_eq!(ok.config.eta, 0.5);
    }

    #[test]
    fn adam_step_size_limits() {
        // β₁ → 0 recovers ν/L
        let small = adam_step_size(1e-6, 0.3, 2.0);
        assert!((small / (0.3 / 2.0) - 1.0).abs() < 1e-3);
        // direct evaluation of the root form at a generic β₁
        let b: f64 = 0.9;
        let k = b / ((1.0 - b) * (1.0 - b));
        let direct =
            ((0.25 + 4.0 * k).sqrt() - 0.5) * (1.0 - b) * (1.0 - b) / (4.0 * b) * 0.3 / 2.0;
        assert!((adam_step_size(b, 0.3, 2.0) - direct).abs() < 1e-15);
        // x = ηL/ν is the positive root of 2k x² + x/2 − 1/2
        let x = adam_step_size(b, 1.0, 1.0);
        assert!((2.0 * k * x * x + x / 2.0 - 0.5).abs() < 1e-12);
    }
}
