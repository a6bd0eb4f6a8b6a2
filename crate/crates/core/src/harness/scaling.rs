use rayon::prelude::*;

use super::{check_trials, fit_loglog, ScalingFit};
use crate::accountant::Accountant;
use crate::error::{Error, Result};
use crate::optimizer::{
    run, set_params_from_theory, Monitor, PopulationMonitor, TheoryInputs, TheoryTarget,
};
use crate::oracle::{LossModel, MuSpec, QuadraticModel, SigmoidModel, SigmoidSpec};
use crate::rng::SeedTree;
use crate::theory::{empirical_bound, BoundInputs};

#[derive(Debug, Clone, PartialEq)]
pub enum ScalingModel {
    /// Two-class Gaussian mixture with sigmoid squared error; only `p` is
    /// taken from the grid.
    Sigmoid(SigmoidSpec),
    Quadratic(MuSpec),
}

/// Theory-parameterized runs swept along `p` (at `n_fixed`) and along `n`
/// (at `p_fixed`), with a log-log fit of the mean empirical gradient norm
/// per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPlan {
    pub model: ScalingModel,
    pub target: TheoryTarget,
    pub p_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub p_fixed: usize,
    pub n_fixed: usize,
    pub eps: f64,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub t_scale: f64,
    /// Adaptive-method knobs passed to the prescription.
    pub nu: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda: f64,
    /// Big-O constant for the reported bound.
    pub constant: f64,
    /// Force `σ = 0` (sanity runs).
    pub noiseless: bool,
    /// Override the prescribed `T`.
    pub fixed_steps: Option<u64>,
    /// Clip per-example gradients at the model's `G` (needed when `G` is
    /// only an estimate).
    pub clip_at_g: bool,
}

impl ScalingPlan {
    pub fn new(model: ScalingModel, seed: u64) -> Self {
        Self {
            model,
            target: TheoryTarget::GdEmp,
            p_values: vec![4, 16, 64],
            n_values: vec![1000, 4000, 16000],
            p_fixed: 16,
            n_fixed: 10_000,
            eps: 1.0,
            delta: 1e-5,
            trials: 20,
            seed,
            t_scale: 1.0,
            nu: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            lambda: 1.0,
            constant: 1.0,
            noiseless: false,
            fixed_steps: None,
            clip_at_g: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        if self.p_values.len() < 3 && self.n_values.len() < 3 {
            return Err(Error::invalid(
                "p_values",
                "need at least 3 grid values on a swept axis",
            ));
        }
        if self.p_values.iter().chain(&self.n_values).any(|&v| v == 0)
            || self.p_fixed == 0
            || self.n_fixed == 0
        {
            return Err(Error::invalid("n", "grid values must be ≥ 1"));
        }
        if self.fixed_steps == Some(0) {
            return Err(Error::invalid("steps", "must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub axis: &'static str,
    pub value: usize,
    pub mean_emp_grad_sq: f64,
    pub mean_pop_grad_sq: Option<f64>,
    pub bound_value: f64,
    pub steps: u64,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Fit of `mean_emp_grad_sq` per swept axis (`"p"`, `"n"`), for axes with
    /// at least 3 values.
    pub fits: Vec<(&'static str, ScalingFit)>,
}

pub const SCALING_HEADER: &str = "axis,value,mean_emp_grad_sq,mean_pop_grad_sq,bound_value";

impl ScalingReport {
    pub fn fit(&self, axis: &str) -> Option<ScalingFit> {
        self.fits.iter().find(|(a, _)| *a == axis).map(|x| x.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(SCALING_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.axis,
                r.value,
                r.mean_emp_grad_sq,
                r.mean_pop_grad_sq
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                r.bound_value
            ));
        }
        s
    }
}

fn build_model(plan: &ScalingPlan, p: usize, root: &SeedTree) -> Result<Box<dyn LossModel>> {
    Ok(match &plan.model {
        ScalingModel::Sigmoid(spec) => {
            let spec = SigmoidSpec { p, ..*spec };
            Box::new(SigmoidModel::new(spec, root.child("model", p as u64))?)
        }
        ScalingModel::Quadratic(mu) => Box::new(QuadraticModel::from_spec(
            mu,
            p,
            &mut root.stream("model", p as u64),
        )?),
    })
}

fn grid_point(
    plan: &ScalingPlan,
    axis: &'static str,
    n: usize,
    p: usize,
    point: SeedTree,
    root: &SeedTree,
    accountant: &Accountant,
) -> Result<ScalingRow> {
    let model = build_model(plan, p, root)?;
    let g = model.gradient_bound().expect("scaling models know G");
    let l = model.smoothness().expect("scaling models know L");
    let inputs = TheoryInputs {
        n,
        p,
        eps: plan.eps,
        delta: plan.delta,
        g,
        l,
        nu: plan.nu,
        beta1: plan.beta1,
        beta2: plan.beta2,
        lambda: plan.lambda,
        t_scale: plan.t_scale,
    };
    let mut config = set_params_from_theory(plan.target, &inputs, accountant, 0)?.config;
    if plan.noiseless {
        config.sigma = 0.0;
    }
    if let Some(t) = plan.fixed_steps {
        config.steps = t;
    }
    if plan.clip_at_g {
        config.clip_bound = Some(g);
    }
    let monitor = Monitor {
        empirical: true,
        population: PopulationMonitor::Analytic,
        loss: false,
    };
    let results: Vec<(f64, Option<f64>)> = (0..plan.trials)
        .into_par_iter()
        .map(|k| -> Result<(f64, Option<f64>)> {
            let trial = point.child("trial", k as u64);
            let data = model
                .sample(n, &mut trial.stream("data", 0))
                .expect("scaling models sample");
            let mut cfg = config.clone();
            cfg.seed = trial.child("run", 0).seed();
            let rec = run(model.as_ref(), &data, vec![0.0; p], &cfg, monitor)?;
            Ok((
                rec.mean_emp_grad_sq().expect("monitored"),
                rec.mean_pop_grad_sq(),
            ))
        })
        .collect::<Result<_>>()?;
    let t = plan.trials as f64;
    let mean_emp = results.iter().map(|r| r.0).sum::<f64>() / t;
    let pops: Option<Vec<f64>> = results.iter().map(|r| r.1).collect();
    let bound = empirical_bound(
        plan.target.kind_tag(),
        &BoundInputs {
            n: n as f64,
            p: p as f64,
            eps: plan.eps,
            delta: plan.delta,
            beta: 0.5,
            g,
            l,
        },
        plan.constant,
    )?;
    Ok(ScalingRow {
        axis,
        value: if axis == "p" { p } else { n },
        mean_emp_grad_sq: mean_emp,
        mean_pop_grad_sq: pops.map(|v| v.iter().sum::<f64>() / t),
        bound_value: bound,
        steps: config.steps,
        noise_std: config.sigma,
    })
}

pub fn scaling_experiment(plan: &ScalingPlan) -> Result<ScalingReport> {
    plan.validate()?;
    let root = SeedTree::new(plan.seed);
    let accountant = Accountant::default();
    let mut points = Vec::new();
    for &p in &plan.p_values {
        points.push(("p", plan.n_fixed, p));
    }
    for &n in &plan.n_values {
        points.push(("n", n, plan.p_fixed));
    }
    let rows: Vec<ScalingRow> = points
        .iter()
        .enumerate()
        .map(|(i, &(axis, n, p))| {
            grid_point(
                plan,
                axis,
                n,
                p,
                root.child("grid", i as u64),
                &root,
                &accountant,
            )
        })
        .collect::<Result<_>>()?;
    let mut fits = Vec::new();
    for axis in ["p", "n"] {
        let sel: Vec<&ScalingRow> = rows.iter().filter(|r| r.axis == axis).collect();
        if sel.len() >= 3 {
            let xs: Vec<f64> = sel.iter().map(|r| r.value as f64).collect();
            let ys: Vec<f64> = sel.iter().map(|r| r.mean_emp_grad_sq).collect();
            fits.push((axis, fit_loglog(&xs, &ys)?));
        }
    }
    Ok(ScalingReport { rows, fits })
}
