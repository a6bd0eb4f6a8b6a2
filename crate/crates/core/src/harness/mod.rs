//! Validation experiments and their CSV reports.
//!
//! Every experiment is a pure function of its plan: trials and grid points
//! draw from disjoint seed streams and results are collected in grid order,
//! so a plan and seed always produce byte-identical CSV.

mod concentration;
mod lower_bound;
mod scaling;
mod train_compare;

pub use concentration::{
    calibrated_noise_std, concentration_experiment, ConcentrationPlan, ConcentrationRow, NoiseGrid,
    CONCENTRATION_HEADER,
};
pub use lower_bound::{
    lower_bound_experiment, LowerBoundPlan, LowerBoundReport, LowerBoundRow, LOWER_BOUND_HEADER,
};
pub use scaling::{
    scaling_experiment, ScalingModel, ScalingPlan, ScalingReport, ScalingRow, SCALING_HEADER,
};
pub use train_compare::{
    train_compare, TrainComparePlan, TrainCompareReport, TrainData, TrainRow, TRAIN_HEADER,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Concentration,
    Scaling,
    LowerBound,
    TrainCompare,
}

#[derive(Debug, Clone)]
pub enum ExperimentPlan {
    Concentration(ConcentrationPlan),
    Scaling(ScalingPlan),
    LowerBound(LowerBoundPlan),
    TrainCompare(TrainComparePlan),
}

impl ExperimentPlan {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            ExperimentPlan::Concentration(_) => ExperimentKind::Concentration,
            ExperimentPlan::Scaling(_) => ExperimentKind::Scaling,
            ExperimentPlan::LowerBound(_) => ExperimentKind::LowerBound,
            ExperimentPlan::TrainCompare(_) => ExperimentKind::TrainCompare,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentPlan::Concentration(p) => p.validate(),
            ExperimentPlan::Scaling(p) => p.validate(),
            ExperimentPlan::LowerBound(p) => p.validate(),
            ExperimentPlan::TrainCompare(p) => p.validate(),
        }
    }

    /// Runs the experiment and renders its CSV.
    pub fn run_csv(&self) -> Result<String> {
        Ok(match self {
            ExperimentPlan::Concentration(p) => concentration_csv(&concentration_experiment(p)?),
            ExperimentPlan::Scaling(p) => scaling_experiment(p)?.to_csv(),
            ExperimentPlan::LowerBound(p) => lower_bound_experiment(p)?.to_csv(),
            ExperimentPlan::TrainCompare(p) => train_compare(p)?.to_csv(),
        })
    }
}

pub fn concentration_csv(rows: &[ConcentrationRow]) -> String {
    concentration::to_csv(rows)
}

pub(crate) fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be ≥ 1"));
    }
    Ok(())
}

pub(crate) fn check_grid<T>(name: &'static str, grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(name, "grid must be nonempty"));
    }
    Ok(())
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<ScalingFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateFit("need at least two points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::DegenerateFit(
            "values must be positive and finite".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 1e-300 {
        return Err(Error::DegenerateFit("all x values are identical".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let r_squared = if syy <= 1e-300 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(ScalingFit {
        exponent,
        intercept,
        r_squared,
    })
}

/// Mean and sample standard deviation.
pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
