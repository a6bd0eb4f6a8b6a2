use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

use super::{check_grid, check_trials};
use crate::error::{Error, Result};
use crate::oracle::{empirical_gradient, LossModel, MuSpec, QuadraticModel};
use crate::rng::SeedTree;
use crate::vector::{dist, norm};

/// Product-Bernoulli datasets against the quadratic loss: the gradient
/// deviation `D = ‖μ − mean(S)‖` is the same at every `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundPlan {
    pub p: usize,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    /// Thresholds `c` for the fraction of trials with `D ≥ c·√(p/n)`.
    pub cs: Vec<f64>,
    /// Random `w` per trial at which the deviation is re-measured.
    pub probes: usize,
}

impl LowerBoundPlan {
    pub const DEFAULT_C: f64 = 0.35;

    pub fn new(p: usize, n: usize, trials: usize, seed: u64) -> Self {
        Self {
            p,
            n,
            trials,
            seed,
            cs: vec![0.25, Self::DEFAULT_C, 0.4, 0.45, 0.5],
            probes: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        check_grid("c", &self.cs)?;
        if self.p == 0 || self.n == 0 {
            return Err(Error::invalid("p", "p and n must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundRow {
    pub p: usize,
    pub n: usize,
    pub trial: usize,
    pub d: f64,
    pub d_over_sqrt_p_over_n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundReport {
    pub rows: Vec<LowerBoundRow>,
    pub means: Vec<f64>,
    /// `Σ_j μ_j(1−μ_j)/n`
    pub expected_d_sq: f64,
    pub mean_d_sq: f64,
    pub std_error_d_sq: f64,
    /// `mean(D²)/(p/n)`
    pub ratio: f64,
    /// `(c, fraction of trials with D ≥ c·√(p/n))`
    pub fraction_above: Vec<(f64, f64)>,
    /// Largest `|‖∇f̂(w) − ∇f(w)‖ − D|` over all probes.
    pub max_probe_discrepancy: f64,
}

pub const LOWER_BOUND_HEADER: &str = "p,n,trial,D,D_over_sqrt_p_over_n";

impl LowerBoundReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOWER_BOUND_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.p, r.n, r.trial, r.d, r.d_over_sqrt_p_over_n
            ));
        }
        s
    }
}

pub fn lower_bound_experiment(plan: &LowerBoundPlan) -> Result<LowerBoundReport> {
    plan.validate()?;
    let root = SeedTree::new(plan.seed);
    let model = QuadraticModel::from_spec(&MuSpec::Uniform, plan.p, &mut root.stream("mu", 0))?;
    let scale = (plan.p as f64 / plan.n as f64).sqrt();
    let probe_dist = Uniform::new(-2.0, 2.0).expect("finite range");

    let per_trial: Vec<(f64, f64)> = (0..plan.trials)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64)> {
            let trial = root.child("trial", k as u64);
            let data = model
                .sample(plan.n, &mut trial.stream("data", 0))
                .expect("quadratic model samples");
            let d = dist(model.means(), &data.mean_features());
            let mut rng = trial.stream("probe", 0);
            let mut worst: f64 = 0.0;
            for _ in 0..plan.probes {
                let w: Vec<f64> = (0..plan.p).map(|_| probe_dist.sample(&mut rng)).collect();
                let emp = empirical_gradient(&model, &data, &w, None, None)?;
                let pop = model.population_gradient(&w).expect("analytic");
                let dev = norm(&emp.iter().zip(&pop).map(|(a, b)| a - b).collect::<Vec<_>>());
                worst = worst.max((dev - d).abs());
            }
            Ok((d, worst))
        })
        .collect::<Result<_>>()?;

    let rows: Vec<LowerBoundRow> = per_trial
        .iter()
        .enumerate()
        .map(|(k, &(d, _))| LowerBoundRow {
            p: plan.p,
            n: plan.n,
            trial: k,
            d,
            d_over_sqrt_p_over_n: d / scale,
        })
        .collect();
    let t = plan.trials as f64;
    let sq: Vec<f64> = rows.iter().map(|r| r.d * r.d).collect();
    let (mean_d_sq, sd) = super::mean_std(&sq);
    let fraction_above = plan
        .cs
        .iter()
        .map(|&c| {
            let hits = rows.iter().filter(|r| r.d >= c * scale).count();
            (c, hits as f64 / t)
        })
        .collect();
    Ok(LowerBoundReport {
        expected_d_sq: model.total_variance() / plan.n as f64,
        mean_d_sq,
        std_error_d_sq: sd / t.sqrt(),
        ratio: mean_d_sq / (scale * scale),
        fraction_above,
        max_probe_discrepancy: per_trial.iter().map(|x| x.1).fold(0.0, f64::max),
        means: model.means().to_vec(),
        rows,
    })
}
