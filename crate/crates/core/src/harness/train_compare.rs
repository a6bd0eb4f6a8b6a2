use std::path::PathBuf;

use rayon::prelude::*;

use super::{check_grid, check_trials, mean_std};
use crate::accountant::{Accountant, MechanismSpec};
use crate::error::{Error, Result};
use crate::optimizer::{
    run_with_hook, AveragingKind, KindTag, LrSchedule, Monitor, OptimizerConfig,
};
use crate::oracle::{load_idx, load_idx_with, Dataset, Mlp, PrototypeTask};
use crate::rng::SeedTree;

#[derive(Debug, Clone, PartialEq)]
pub enum TrainData {
    /// 784-dimensional, 10-class synthetic prototype task.
    Synthetic {
        train: usize,
        test: usize,
        separation: f64,
        deformation: f64,
        noise: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Leading training examples kept.
        subset: usize,
    },
}

impl TrainData {
    /// Digit-like synthetic data with the default difficulty.
    pub fn synthetic(train: usize, test: usize) -> Self {
        TrainData::Synthetic {
            train,
            test,
            separation: PrototypeTask::SEPARATION,
            deformation: PrototypeTask::DEFORMATION,
            noise: PrototypeTask::NOISE,
        }
    }
}

/// Mini-batch DP SGD / RMSprop / Adam on a ReLU MLP, with a step-size grid
/// searched on the first repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainComparePlan {
    pub data: TrainData,
    pub methods: Vec<KindTag>,
    /// Noise multipliers (std of the noise on the clipped gradient sum, in
    /// units of the clip bound).
    pub sigmas: Vec<f64>,
    pub lrs: Vec<f64>,
    pub repeats: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip: f64,
    pub hidden: Vec<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub nu: f64,
    pub lambda: f64,
    pub lr_decay_every_epochs: usize,
    pub lr_decay_factor: f64,
    pub delta: f64,
    pub seed: u64,
}

impl TrainComparePlan {
    pub fn new(data: TrainData, seed: u64) -> Self {
        Self {
            data,
            methods: vec![KindTag::Gd, KindTag::RmsProp, KindTag::Adam],
            sigmas: vec![0.0, 8.0],
            lrs: vec![0.1, 0.01, 0.001],
            repeats: 5,
            epochs: 20,
            batch_size: 128,
            clip: 1.0,
            hidden: vec![128, 128],
            beta1: 0.9,
            beta2: 0.999,
            nu: 1e-8,
            lambda: 1.0,
            lr_decay_every_epochs: 30,
            lr_decay_factor: 0.1,
            delta: 1e-5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_trials(self.repeats)?;
        check_grid("methods", &self.methods)?;
        check_grid("sigma", &self.sigmas)?;
        check_grid("lr", &self.lrs)?;
        if self.epochs == 0 || self.batch_size == 0 || self.lr_decay_every_epochs == 0 {
            return Err(Error::invalid(
                "epochs",
                "epochs, batch size and decay period must be ≥ 1",
            ));
        }
        if !(self.clip > 0.0) {
            return Err(Error::invalid("clip", "must be > 0"));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0)) || self.lrs.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::invalid("sigma", "need sigma ≥ 0 and lr > 0"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub method: KindTag,
    pub sigma: f64,
    pub epoch: usize,
    pub train_acc_mean: f64,
    pub train_acc_std: f64,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainCompareReport {
    pub rows: Vec<TrainRow>,
    /// `(method, sigma, selected lr)`
    pub selected_lrs: Vec<(KindTag, f64, f64)>,
}

pub const TRAIN_HEADER: &str =
    "method,sigma,epoch,train_acc_mean,train_acc_std,test_acc_mean,test_acc_std,epsilon";

impl TrainCompareReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAIN_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method,
                r.sigma,
                r.epoch,
                r.train_acc_mean,
                r.train_acc_std,
                r.test_acc_mean,
                r.test_acc_std,
                r.epsilon
            ));
        }
        s
    }

    /// Mean training accuracy after the last epoch.
    pub fn final_train_acc(&self, method: KindTag, sigma: f64) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.sigma == sigma)
            .max_by_key(|r| r.epoch)
            .map(|r| r.train_acc_mean)
    }

    pub fn selected_lr(&self, method: KindTag, sigma: f64) -> Option<f64> {
        self.selected_lrs
            .iter()
            .find(|(m, s, _)| *m == method && *s == sigma)
            .map(|x| x.2)
    }
}

struct Outcome {
    /// `(train_acc, test_acc)` after each epoch.
    epochs: Vec<(f64, f64)>,
    final_loss: f64,
}

fn load(plan: &TrainComparePlan, root: &SeedTree) -> Result<(Dataset, Dataset, usize)> {
    match &plan.data {
        TrainData::Synthetic {
            train,
            test,
            separation,
            deformation,
            noise,
        } => {
            if *train == 0 || *test == 0 {
                return Err(Error::invalid("train", "dataset sizes must be ≥ 1"));
            }
            let task = PrototypeTask::new(
                PrototypeTask::DIM,
                PrototypeTask::CLASSES,
                PrototypeTask::LATENT,
                *separation,
                *deformation,
                *noise,
                root.child("task", 0).seed(),
            )?;
            let tr = task.generate(*train, &mut root.stream("train-data", 0));
            let te = task.generate(*test, &mut root.stream("test-data", 0));
            Ok((tr, te, task.classes))
        }
        TrainData::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            subset,
        } => {
            let (full, norm) = load_idx(train_images, train_labels)?;
            let tr = full.head((*subset).min(full.len()))?;
            let te = load_idx_with(test_images, test_labels, &norm)?;
            let classes = tr
                .labels()
                .into_iter()
                .chain(te.labels())
                .flat_map(|l| l.iter().copied())
                .max()
                .unwrap_or(0)
                + 1;
            Ok((tr, te, classes.max(2)))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn train_once(
    plan: &TrainComparePlan,
    mlp: &Mlp,
    train: &Dataset,
    test: &Dataset,
    method: KindTag,
    sigma: f64,
    lr: f64,
    seeds: SeedTree,
) -> Result<Outcome> {
    let n = train.len();
    let b = plan.batch_size.min(n);
    let spe = n.div_ceil(b) as u64;
    let (kind, nu, lambda) = match method {
        KindTag::Gd => (AveragingKind::Gd, 0.0, 1.0),
        KindTag::RmsProp => (
            AveragingKind::RmsProp { beta2: plan.beta2 },
            plan.nu,
            plan.lambda,
        ),
        KindTag::Adam => (
            AveragingKind::Adam {
                beta1: plan.beta1,
                beta2: plan.beta2,
            },
            plan.nu,
            plan.lambda,
        ),
    };
    let config = OptimizerConfig {
        eta: lr,
        nu,
        lambda_clamp: lambda,
        sigma: sigma * plan.clip / b as f64,
        steps: plan.epochs as u64 * spe,
        kind,
        batch_size: Some(b),
        clip_bound: Some(plan.clip),
        seed: seeds.child("run", 0).seed(),
        schedule: LrSchedule::StepDecay {
            every: plan.lr_decay_every_epochs as u64 * spe,
            factor: plan.lr_decay_factor,
        },
        bias_correction: false,
    };
    let w0 = mlp.init(&mut seeds.stream("init", 0));
    let mut epochs = Vec::with_capacity(plan.epochs);
    let mut final_loss = f64::INFINITY;
    run_with_hook(mlp, train, w0, &config, Monitor::off(), |state| {
        if state.t % spe == 0 {
            let (loss, train_acc) = mlp.evaluate(&state.w, train);
            let test_acc = mlp.accuracy(&state.w, test);
            epochs.push((train_acc, test_acc));
            final_loss = if loss.is_nan() { f64::INFINITY } else { loss };
        }
        Ok(())
    })?;
    Ok(Outcome { epochs, final_loss })
}

pub fn train_compare(plan: &TrainComparePlan) -> Result<TrainCompareReport> {
    plan.validate()?;
    let root = SeedTree::new(plan.seed);
    let (train, test, classes) = load(plan, &root)?;
    let mut sizes = vec![train.dim()];
    sizes.extend(&plan.hidden);
    sizes.push(classes);
    let mlp = Mlp::new(sizes)?;
    let repeat_seed = |r: usize| root.child("repeat", r as u64);

    let mut cells = Vec::new();
    for &m in &plan.methods {
        for &s in &plan.sigmas {
            cells.push((m, s));
        }
    }

    // Step-size search on repeat 0.
    let search: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..plan.lrs.len()).map(move |l| (c, l)))
        .collect();
    let first: Vec<Outcome> = search
        .par_iter()
        .map(|&(c, l)| {
            let (m, s) = cells[c];
            log::info!("train-compare: {m} sigma={s} lr={} (search)", plan.lrs[l]);
            train_once(plan, &mlp, &train, &test, m, s, plan.lrs[l], repeat_seed(0))
        })
        .collect::<Result<_>>()?;
    let mut chosen = vec![0usize; cells.len()];
    for (c, best) in chosen.iter_mut().enumerate() {
        let mut best_loss = f64::INFINITY;
        for l in 0..plan.lrs.len() {
            let loss = first[c * plan.lrs.len() + l].final_loss;
            if loss < best_loss {
                best_loss = loss;
                *best = l;
            }
        }
    }

    let rest: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (1..plan.repeats).map(move |r| (c, r)))
        .collect();
    let later: Vec<Outcome> = rest
        .par_iter()
        .map(|&(c, r)| {
            let (m, s) = cells[c];
            let lr = plan.lrs[chosen[c]];
            log::info!("train-compare: {m} sigma={s} lr={lr} repeat {r}");
            train_once(plan, &mlp, &train, &test, m, s, lr, repeat_seed(r))
        })
        .collect::<Result<_>>()?;

    let accountant = Accountant::default();
    let n = train.len();
    let b = plan.batch_size.min(n);
    let steps = plan.epochs as u64 * n.div_ceil(b) as u64;
    let mut rows = Vec::new();
    let mut selected_lrs = Vec::new();
    for (c, &(m, s)) in cells.iter().enumerate() {
        let epsilon = if s > 0.0 {
            let spec = MechanismSpec::new(s, b as f64 / n as f64, steps)?;
            accountant.eps_for_delta(&spec, plan.delta)?.epsilon
        } else {
            f64::INFINITY
        };
        selected_lrs.push((m, s, plan.lrs[chosen[c]]));
        let mut runs: Vec<&Outcome> = vec![&first[c * plan.lrs.len() + chosen[c]]];
        runs.extend(
            rest.iter()
                .zip(&later)
                .filter(|((cc, _), _)| *cc == c)
                .map(|(_, o)| o),
        );
        for e in 0..plan.epochs {
            let tr: Vec<f64> = runs.iter().map(|o| o.epochs[e].0).collect();
            let te: Vec<f64> = runs.iter().map(|o| o.epochs[e].1).collect();
            let (trm, trs) = mean_std(&tr);
            let (tem, tes) = mean_std(&te);
            rows.push(TrainRow {
                method: m,
                sigma: s,
                epoch: e + 1,
                train_acc_mean: trm,
                train_acc_std: trs,
                test_acc_mean: tem,
                test_acc_std: tes,
                epsilon,
            });
        }
    }
    Ok(TrainCompareReport { rows, selected_lrs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan() -> TrainComparePlan {
        let mut p = TrainComparePlan::new(TrainData::synthetic(300, 100), 4);
        p.hidden = vec![8];
        p.epochs = 2;
        p.repeats = 2;
        p.batch_size = 50;
        p.lrs = vec![0.1, 0.01];
        p.sigmas = vec![0.0, 1.0];
        p
    }

    #[test]
    fn report_shape_and_replay() {
        let plan = small_plan();
        let a = train_compare(&plan).unwrap();
        assert_eq!(a.rows.len(), 3 * 2 * 2);
        assert_eq!(a.selected_lrs.len(), 6);
        for r in &a.rows {
            assert!((0.0..=1.0).contains(&r.train_acc_mean));
            assert_eq!(r.epsilon.is_infinite(), r.sigma == 0.0);
        }
        assert!(a.selected_lr(KindTag::Adam, 1.0).is_some());
        assert!(a.final_train_acc(KindTag::Gd, 0.0).is_some());
        let b = train_compare(&plan).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with(TRAIN_HEADER));
    }

    #[test]
    fn validation() {
        let mut p = small_plan();
        p.lrs.clear();
        assert!(p.validate().is_err());
        let mut p = small_plan();
        p.clip = 0.0;
        assert!(p.validate().is_err());
    }
}
