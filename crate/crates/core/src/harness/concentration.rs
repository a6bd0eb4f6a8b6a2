use rayon::prelude::*;

use super::{check_grid, check_trials};
use crate::accountant::{Accountant, PrivacyBudget};
use crate::error::Result;
use crate::optimizer::{
    run, AveragingKind, LrSchedule, Monitor, OptimizerConfig, PopulationMonitor,
};
use crate::oracle::{LossModel, MuSpec, QuadraticModel};
use crate::rng::SeedTree;
use crate::theory::{concentration, mu_for_failure, union_failure, ConcentrationSpec};

/// Repeated noisy GD runs on the quadratic model, counting trials in which
/// `‖g̃_t − g_t‖ ≥ α` at any step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationPlan {
    pub ns: Vec<usize>,
    pub ps: Vec<usize>,
    pub noise: NoiseGrid,
    pub steps: u64,
    /// Target failure probability; sets `μ = √(2 ln(4pT/β))`.
    pub beta: f64,
    pub trials: usize,
    pub seed: u64,
    pub mu_spec: MuSpec,
    pub eta: f64,
}

/// Per-coordinate noise standard deviations to sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseGrid {
    Fixed(Vec<f64>),
    /// One σ per budget: the accountant's full-batch multiplier for
    /// `(ε, δ, T)` times the sensitivity `2√p/n` at each `(n, p)`.
    Calibrated {
        eps: Vec<f64>,
        delta: f64,
    },
}

impl NoiseGrid {
    fn len(&self) -> usize {
        match self {
            NoiseGrid::Fixed(v) => v.len(),
            NoiseGrid::Calibrated { eps, .. } => eps.len(),
        }
    }

    fn sigma(
        &self,
        i: usize,
        accountant: &Accountant,
        steps: u64,
        n: usize,
        p: usize,
    ) -> Result<f64> {
        match self {
            NoiseGrid::Fixed(v) => Ok(v[i]),
            NoiseGrid::Calibrated { eps, delta } => {
                calibrated_noise_std(accountant, eps[i], *delta, steps, n, p)
            }
        }
    }
}

impl ConcentrationPlan {
    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        check_grid("n", &self.ns)?;
        check_grid("p", &self.ps)?;
        if self.noise.len() == 0 {
            return Err(crate::Error::invalid("sigma", "grid must be nonempty"));
        }
        match &self.noise {
            NoiseGrid::Fixed(v) => {
                for &s in v {
                    ConcentrationSpec::new(1, s, 0.0, 1)?;
                }
            }
            NoiseGrid::Calibrated { eps, delta } => {
                for &e in eps {
                    PrivacyBudget::new(e, *delta)?;
                }
            }
        }
        mu_for_failure(self.beta, 1, self.steps.max(1))?;
        if self.steps == 0 || !(self.eta > 0.0) {
            return Err(crate::Error::invalid("steps", "need steps ≥ 1 and eta > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationRow {
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub mu: f64,
    pub alpha: f64,
    pub xi_union: f64,
    pub observed_fail_freq: f64,
    pub trials: usize,
}

/// Noise std for a full-batch run on the quadratic model: the accountant's
/// multiplier for `(ε, δ, T)` times the sensitivity `2G/n`, `G = √p`.
pub fn calibrated_noise_std(
    accountant: &Accountant,
    eps: f64,
    delta: f64,
    steps: u64,
    n: usize,
    p: usize,
) -> Result<f64> {
    let mult = accountant.sigma_for_budget(PrivacyBudget::new(eps, delta)?, steps, 1.0)?;
    Ok(mult * 2.0 * (p as f64).sqrt() / n as f64)
}

pub fn concentration_experiment(plan: &ConcentrationPlan) -> Result<Vec<ConcentrationRow>> {
    plan.validate()?;
    let root = SeedTree::new(plan.seed);
    let accountant = Accountant::default();
    let mut grid = Vec::new();
    for &n in &plan.ns {
        for &p in &plan.ps {
            for s in 0..plan.noise.len() {
                grid.push((n, p, s));
            }
        }
    }
    grid.iter()
        .enumerate()
        .map(|(gi, &(n, p, si))| {
            let sigma = plan.noise.sigma(si, &accountant, plan.steps, n, p)?;
            let point = root.child("grid", gi as u64);
            let model = QuadraticModel::from_spec(&plan.mu_spec, p, &mut point.stream("mu", 0))?;
            let mu = mu_for_failure(plan.beta, p, plan.steps)?;
            let spec = ConcentrationSpec::new(p, sigma, mu, plan.steps)?;
            let (alpha, _) = concentration(&spec);
            let failures: Vec<bool> = (0..plan.trials)
                .into_par_iter()
                .map(|k| -> Result<bool> {
                    let trial = point.child("trial", k as u64);
                    let data = model
                        .sample(n, &mut trial.stream("data", 0))
                        .expect("quadratic model samples");
                    let config = OptimizerConfig {
                        eta: plan.eta,
                        nu: 0.0,
                        lambda_clamp: 1.0,
                        sigma,
                        steps: plan.steps,
                        kind: AveragingKind::Gd,
                        batch_size: None,
                        clip_bound: None,
                        seed: trial.child("run", 0).seed(),
                        schedule: LrSchedule::Constant,
                        bias_correction: false,
                    };
                    let monitor = Monitor {
                        empirical: false,
                        population: PopulationMonitor::Analytic,
                        loss: false,
                    };
                    let rec = run(&model, &data, vec![0.0; p], &config, monitor)?;
                    Ok(rec
                        .entries
                        .iter()
                        .any(|e| e.total_dev.expect("analytic population gradient") >= alpha))
                })
                .collect::<Result<_>>()?;
            let fails = failures.iter().filter(|&&f| f).count();
            Ok(ConcentrationRow {
                n,
                p,
                sigma,
                mu,
                alpha,
                xi_union: union_failure(&spec),
                observed_fail_freq: fails as f64 / plan.trials as f64,
                trials: plan.trials,
            })
        })
        .collect()
}

pub const CONCENTRATION_HEADER: &str = "n,p,sigma,mu,alpha,xi_union,observed_fail_freq,trials";

pub(crate) fn to_csv(rows: &[ConcentrationRow]) -> String {
    let mut s = String::from(CONCENTRATION_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n, r.p, r.sigma, r.mu, r.alpha, r.xi_union, r.observed_fail_freq, r.trials
        ));
    }
    s
}
