use std::path::PathBuf;

use dpagd::accountant::{
    advanced_composition_for_mechanism, advanced_composition_sigma_for_budget, Accountant,
    AccountantConfig, MechanismSpec, PrivacyBudget,
};
use dpagd::harness::{
    concentration_csv, concentration_experiment, lower_bound_experiment, scaling_experiment,
    train_compare, ConcentrationPlan, LowerBoundPlan, NoiseGrid, ScalingModel, ScalingPlan,
    TrainComparePlan, TrainData,
};
use dpagd::optimizer::{
    run, set_params_from_theory, AveragingKind, KindTag, LrSchedule, Monitor, OptimizerConfig,
    PopulationMonitor, TheoryInputs, TheoryTarget,
};
use dpagd::oracle::{
    load_idx, Dataset, LossModel, Mlp, MuSpec, PrototypeTask, QuadraticModel, SigmoidModel,
    SigmoidSpec,
};
use dpagd::rng::SeedTree;
use dpagd::theory::{empirical_bound, population_bound, uniform_convergence_bound, BoundInputs};

use crate::config::{key, required, Key, Resolved};
use crate::error::CliError;

pub struct Output {
    pub csv: String,
    /// Input files whose digests go into the manifest.
    pub inputs: Vec<(String, PathBuf)>,
}

impl Output {
    fn csv(csv: String) -> Self {
        Self {
            csv,
            inputs: Vec::new(),
        }
    }
}

pub struct Subcommand {
    pub name: &'static str,
    pub about: &'static str,
    pub keys: &'static [Key],
    pub run: fn(&Resolved) -> Result<Output, CliError>,
}

pub const COMMANDS: &[Subcommand] = &[
    Subcommand {
        name: "accountant",
        about: "Privacy loss of T subsampled Gaussian releases",
        keys: ACCOUNTANT_KEYS,
        run: accountant,
    },
    Subcommand {
        name: "bounds",
        about: "Closed-form convergence bounds",
        keys: BOUNDS_KEYS,
        run: bounds,
    },
    Subcommand {
        name: "train",
        about: "One DP GD / RMSprop / Adam run; writes the per-step trajectory",
        keys: TRAIN_KEYS,
        run: train,
    },
    Subcommand {
        name: "concentration",
        about: "Frequency of large noisy-vs-population gradient deviations",
        keys: CONCENTRATION_KEYS,
        run: concentration,
    },
    Subcommand {
        name: "scaling",
        about: "Gradient norm vs p and n under theory-prescribed parameters",
        keys: SCALING_KEYS,
        run: scaling,
    },
    Subcommand {
        name: "lowerbound",
        about: "Sampling deviation of Bernoulli means against sqrt(p/n)",
        keys: LOWER_BOUND_KEYS,
        run: lowerbound,
    },
    Subcommand {
        name: "traincompare",
        about: "DP SGD vs DP RMSprop vs DP Adam on an MLP classifier",
        keys: TRAIN_COMPARE_KEYS,
        run: traincompare,
    },
];

pub fn find(name: &str) -> Option<&'static Subcommand> {
    COMMANDS.iter().find(|c| c.name == name)
}

const ACCOUNTANT_KEYS: &[Key] = &[
    key(
        "sigma",
        "",
        "noise multiplier (comma list for several rows)",
    ),
    key(
        "target_eps",
        "",
        "solve for sigma at this epsilon instead (comma list)",
    ),
    required("q", "sampling rate in (0, 1]"),
    required("steps", "number of releases T"),
    key("delta", "1e-5", "target delta"),
    key(
        "method",
        "ma",
        "ma (moments accountant) or ac (advanced composition)",
    ),
    key("max_order", "128", "largest moment order"),
    key(
        "quadrature_nodes",
        "10000",
        "nodes for the subsampled moment integral",
    ),
];

fn accountant(c: &Resolved) -> Result<Output, CliError> {
    let sigmas: Vec<f64> = c.list("sigma")?;
    let targets: Vec<f64> = c.list("target_eps")?;
    if sigmas.is_empty() == targets.is_empty() {
        return Err(CliError::Config(
            "give exactly one of `--sigma` and `--target-eps`".into(),
        ));
    }
    let q: f64 = c.get("q")?;
    let steps: u64 = c.get("steps")?;
    let delta: f64 = c.get("delta")?;
    let method = c.choice("method", &["ma", "ac"])?;
    let acc = Accountant::new(AccountantConfig {
        max_order: c.get("max_order")?,
        quadrature_nodes: c.get("quadrature_nodes")?,
    })?;
    let epsilon = |sigma: f64| -> Result<f64, CliError> {
        let spec = MechanismSpec::new(sigma, q, steps)?;
        if method == "ac" {
            return Ok(advanced_composition_for_mechanism(&spec, delta)?.epsilon);
        }
        let r = acc.eps_for_delta(&spec, delta)?;
        log::info!("sigma={sigma}: epsilon={} at order {}", r.epsilon, r.order);
        if r.strained {
            log::warn!(
                "sigma={sigma}: moment bound used outside its classical sufficient condition"
            );
        }
        Ok(r.epsilon)
    };
    let mut csv = String::from("sigma,q,steps,delta,epsilon,method\n");
    let mut row = |sigma: f64| -> Result<(), CliError> {
        csv.push_str(&format!(
            "{sigma},{q},{steps},{delta},{},{method}\n",
            epsilon(sigma)?
        ));
        Ok(())
    };
    for sigma in sigmas {
        row(sigma)?;
    }
    for eps in targets {
        let budget = PrivacyBudget::new(eps, delta)?;
        let sigma = if method == "ac" {
            advanced_composition_sigma_for_budget(budget, steps, q)?
        } else {
            acc.sigma_for_budget(budget, steps, q)?
        };
        row(sigma)?;
    }
    Ok(Output::csv(csv))
}

const BOUNDS_KEYS: &[Key] = &[
    required(
        "variant",
        "gd, rmsprop or adam (comma list for several rows)",
    ),
    required("n", "dataset sizes (comma list)"),
    required("p", "dimensions (comma list)"),
    required("eps", "privacy budgets (comma list)"),
    key("delta", "1e-5", "privacy delta"),
    key("G", "1", "per-example gradient norm bound"),
    key("L", "1", "smoothness"),
    key(
        "beta",
        "0.05",
        "failure probability of the population bound",
    ),
    key("constant", "1", "big-O constant"),
];

fn bounds(c: &Resolved) -> Result<Output, CliError> {
    let variants: Vec<KindTag> = c.list("variant")?;
    let ns: Vec<f64> = c.list("n")?;
    let ps: Vec<f64> = c.list("p")?;
    let epss: Vec<f64> = c.list("eps")?;
    for (name, empty) in [
        ("variant", variants.is_empty()),
        ("n", ns.is_empty()),
        ("p", ps.is_empty()),
        ("eps", epss.is_empty()),
    ] {
        if empty {
            return Err(c.reject(name, "need at least one value"));
        }
    }
    let k: f64 = c.get("constant")?;
    let mut csv = String::from(
        "variant,n,p,eps,delta,G,L,beta,constant,empirical_bound,population_bound,uniform_convergence_bound\n",
    );
    for &v in &variants {
        for &n in &ns {
            for &p in &ps {
                for &eps in &epss {
                    let x = BoundInputs {
                        n,
                        p,
                        eps,
                        delta: c.get("delta")?,
                        beta: c.get("beta")?,
                        g: c.get("G")?,
                        l: c.get("L")?,
                    };
                    csv.push_str(&format!(
                        "{v},{n},{p},{eps},{},{},{},{},{k},{},{},{}\n",
                        x.delta,
                        x.g,
                        x.l,
                        x.beta,
                        empirical_bound(v, &x, k)?,
                        population_bound(v, &x, k)?,
                        uniform_convergence_bound(p, n, k)?
                    ));
                }
            }
        }
    }
    Ok(Output::csv(csv))
}

const TRAIN_KEYS: &[Key] = &[
    key("model", "quadratic", "quadratic, sigmoid or mlp"),
    key("p", "16", "dimension (quadratic, sigmoid)"),
    key(
        "n",
        "1000",
        "training set size (mlp on IDX data: leading subset, 0 = all)",
    ),
    key(
        "mu_spec",
        "uniform",
        "quadratic means: uniform, a constant, or a comma list",
    ),
    key("hidden", "128,128", "mlp hidden widths"),
    key(
        "images",
        "",
        "IDX image file for the mlp (default: synthetic digits)",
    ),
    key("labels", "", "IDX label file for the mlp"),
    key("kind", "gd", "gd, rmsprop or adam"),
    key("eta", "0.1", "step size"),
    key("nu", "1e-8", "denominator offset (ignored for gd)"),
    key("lambda", "1", "second-moment clamp (ignored for gd)"),
    key("beta1", "0.9", "first-moment decay"),
    key("beta2", "0.999", "second-moment decay"),
    key(
        "sigma",
        "0",
        "noise standard deviation on the averaged gradient, or `auto` to calibrate from eps and delta",
    ),
    key("steps", "100", "iterations T"),
    key("epochs", "0", "passes over the data; overrides steps when > 0"),
    key("batch", "0", "mini-batch size (0 = full batch)"),
    key("clip", "0", "per-example clip bound (0 = none)"),
    key(
        "lr_decay_every",
        "0",
        "multiply eta by lr_decay_factor every this many steps (0 = never)",
    ),
    key("lr_decay_factor", "0.1", "step-size decay factor"),
    key("bias_correction", "false", "Adam-style bias correction"),
    key(
        "theory",
        "off",
        "off, population or empirical: take eta, sigma, T from the theory",
    ),
    key("eps", "1", "privacy epsilon (theory mode, sigma = auto)"),
    key("delta", "1e-5", "privacy delta (theory mode, sigma = auto)"),
    key(
        "t_scale",
        "1",
        "multiplier on the prescribed T (theory mode)",
    ),
    key(
        "monitor",
        "auto",
        "population gradient: auto, analytic, mc or off",
    ),
    key("mc_samples", "0", "Monte Carlo draws per step (0 = 100n)"),
    key("seed", "0", "root seed"),
];

fn train(c: &Resolved) -> Result<Output, CliError> {
    let seed: u64 = c.get("seed")?;
    let root = SeedTree::new(seed);
    let n: usize = c.get("n")?;
    let mut inputs = Vec::new();
    let (model, data, w0): (Box<dyn LossModel>, Dataset, Vec<f64>) =
        match c.choice("model", &["quadratic", "sigmoid", "mlp"])? {
            "quadratic" => {
                let p: usize = c.get("p")?;
                let mu: MuSpec = c.get("mu_spec")?;
                let m = QuadraticModel::from_spec(&mu, p, &mut root.stream("model", 0))?;
                let d = m
                    .sample(n, &mut root.stream("data", 0))
                    .expect("quadratic model samples");
                (Box::new(m), d, vec![0.0; p])
            }
            "sigmoid" => {
                let p: usize = c.get("p")?;
                let m = SigmoidModel::new(SigmoidSpec::new(p), root.child("model", 0))?;
                let d = m
                    .sample(n, &mut root.stream("data", 0))
                    .expect("sigmoid model samples");
                (Box::new(m), d, vec![0.0; p])
            }
            _ => {
                let hidden: Vec<usize> = c.list("hidden")?;
                let (d, task) = match (c.path("images"), c.path("labels")) {
                    (Some(images), Some(labels)) => {
                        let (full, _) = load_idx(&images, &labels)?;
                        inputs.push(("images".to_string(), images));
                        inputs.push(("labels".to_string(), labels));
                        let d = if n == 0 || n >= full.len() {
                            full
                        } else {
                            full.head(n)?
                        };
                        (d, None)
                    }
                    (None, None) => {
                        let task = PrototypeTask::digits_like(root.child("task", 0).seed());
                        (task.generate(n, &mut root.stream("data", 0)), Some(task))
                    }
                    _ => return Err(c.reject("images", "set both images and labels, or neither")),
                };
                let classes = d
                    .labels()
                    .and_then(|l| l.iter().max().copied())
                    .unwrap_or(0)
                    + 1;
                let mut sizes = vec![d.dim()];
                sizes.extend(hidden);
                sizes.push(classes.max(PrototypeTask::CLASSES));
                let mut mlp = Mlp::new(sizes)?;
                if let Some(task) = task {
                    mlp = mlp.with_generator(task)?;
                }
                let w0 = mlp.init(&mut root.stream("init", 0));
                (Box::new(mlp), d, w0)
            }
        };

    let kind_tag: KindTag = c.get("kind")?;
    let beta1: f64 = c.get("beta1")?;
    let beta2: f64 = c.get("beta2")?;
    let run_seed = root.child("run", 0).seed();
    let batch = Some(c.get::<usize>("batch")?).filter(|&b| b > 0);
    let clip = Some(c.get::<f64>("clip")?).filter(|&v| v > 0.0);
    let mut config = match c.choice("theory", &["off", "population", "empirical"])? {
        "off" => {
            let (kind, nu, lambda) = match kind_tag {
                KindTag::Gd => (AveragingKind::Gd, 0.0, 1.0),
                KindTag::RmsProp => (
                    AveragingKind::RmsProp { beta2 },
                    c.get("nu")?,
                    c.get("lambda")?,
                ),
                KindTag::Adam => (
                    AveragingKind::Adam { beta1, beta2 },
                    c.get("nu")?,
                    c.get("lambda")?,
                ),
            };
            let epochs: u64 = c.get("epochs")?;
            let steps = if epochs > 0 {
                epochs * data.len().div_ceil(batch.unwrap_or(data.len())) as u64
            } else {
                c.get("steps")?
            };
            let sigma = match c.str("sigma") {
                "auto" => calibrated_sigma(c, model.as_ref(), data.len(), batch, clip, steps)?,
                _ => c.get("sigma")?,
            };
            OptimizerConfig {
                eta: c.get("eta")?,
                nu,
                lambda_clamp: lambda,
                sigma,
                steps,
                kind,
                batch_size: None,
                clip_bound: None,
                seed: run_seed,
                schedule: LrSchedule::Constant,
                bias_correction: false,
            }
        }
        mode => {
            let (Some(g), Some(l)) = (model.gradient_bound(), model.smoothness()) else {
                return Err(c.reject("theory", "the model has no known G and L"));
            };
            let mut x = TheoryInputs::new(
                data.len(),
                model.dimension(),
                c.get("eps")?,
                c.get("delta")?,
                g,
                l,
            );
            x.nu = c.get("nu")?;
            x.beta1 = beta1;
            x.beta2 = beta2;
            x.lambda = c.get("lambda")?;
            x.t_scale = c.get("t_scale")?;
            let target = TheoryTarget::new(kind_tag, mode == "population");
            let pres = set_params_from_theory(target, &x, &Accountant::default(), run_seed)?;
            log::info!(
                "theory: eta={} T={} noise multiplier={} sigma={}",
                pres.config.eta,
                pres.config.steps,
                pres.noise_multiplier,
                pres.config.sigma
            );
            pres.config
        }
    };
    config.batch_size = batch;
    config.clip_bound = clip;
    let every: u64 = c.get("lr_decay_every")?;
    if every > 0 {
        config.schedule = LrSchedule::StepDecay {
            every,
            factor: c.get("lr_decay_factor")?,
        };
    }
    config.bias_correction = c.get("bias_correction")?;

    let population = match c.choice("monitor", &["auto", "analytic", "mc", "off"])? {
        "auto" if model.population_gradient(&w0).is_some() => PopulationMonitor::Analytic,
        "auto" | "off" => PopulationMonitor::Off,
        "analytic" => PopulationMonitor::Analytic,
        _ => {
            let s: usize = c.get("mc_samples")?;
            PopulationMonitor::MonteCarlo {
                samples: if s == 0 { 100 * data.len() } else { s },
            }
        }
    };
    let monitor = Monitor {
        empirical: true,
        population,
        loss: true,
    };
    let rec = run(model.as_ref(), &data, w0, &config, monitor)?;
    if let Some(m) = rec.mean_emp_grad_sq() {
        log::info!("mean |grad f_hat|^2 over the run: {m:e} (R = {})", rec.r);
    }
    Ok(Output {
        csv: rec.to_csv(),
        inputs,
    })
}

/// Noise std on the averaged gradient for an `(eps, delta)` budget: the
/// accountant's multiplier at `q = b/n` times `C/b` with clipping, or
/// `2G/b` from the model's gradient bound without it.
fn calibrated_sigma(
    c: &Resolved,
    model: &dyn LossModel,
    n: usize,
    batch: Option<usize>,
    clip: Option<f64>,
    steps: u64,
) -> Result<f64, CliError> {
    let b = batch.unwrap_or(n).min(n);
    let sensitivity = match (clip, model.gradient_bound()) {
        (Some(cb), _) => cb,
        (None, Some(g)) => 2.0 * g,
        (None, None) => {
            return Err(c.reject(
                "sigma",
                "auto needs a clip bound for a model without a known G",
            ))
        }
    };
    let budget = PrivacyBudget::new(c.get("eps")?, c.get("delta")?)?;
    let mult = Accountant::default().sigma_for_budget(budget, steps, b as f64 / n as f64)?;
    let sigma = mult * sensitivity / b as f64;
    log::info!("calibrated noise multiplier {mult} -> sigma {sigma}");
    Ok(sigma)
}

const CONCENTRATION_KEYS: &[Key] = &[
    key("n", "10000", "dataset sizes (comma list)"),
    key("p", "64", "dimensions (comma list)"),
    key(
        "sigma",
        "",
        "noise standard deviations (comma list; empty = calibrate from eps)",
    ),
    key("eps", "1", "budgets for calibrated noise (comma list)"),
    key("delta", "1e-5", "delta for calibrated noise"),
    key("steps", "100", "iterations T"),
    key("beta", "0.05", "target failure probability"),
    key("trials", "500", "independent runs per grid point"),
    key(
        "mu_spec",
        "uniform",
        "quadratic means: uniform, a constant, or a comma list",
    ),
    key("eta", "0.25", "GD step size"),
    key("seed", "0", "root seed"),
];

fn concentration(c: &Resolved) -> Result<Output, CliError> {
    let sigmas: Vec<f64> = c.list("sigma")?;
    let noise = if sigmas.is_empty() {
        NoiseGrid::Calibrated {
            eps: c.list("eps")?,
            delta: c.get("delta")?,
        }
    } else {
        NoiseGrid::Fixed(sigmas)
    };
    let plan = ConcentrationPlan {
        ns: c.list("n")?,
        ps: c.list("p")?,
        noise,
        steps: c.get("steps")?,
        beta: c.get("beta")?,
        trials: c.get("trials")?,
        seed: c.get("seed")?,
        mu_spec: c.get("mu_spec")?,
        eta: c.get("eta")?,
    };
    let rows = concentration_experiment(&plan)?;
    for r in &rows {
        let slack = 3.0 * (r.xi_union * (1.0 - r.xi_union) / r.trials as f64).sqrt();
        let verdict = if r.observed_fail_freq <= r.xi_union + slack {
            "within"
        } else {
            "ABOVE"
        };
        log::info!(
            "n={} p={} sigma={:e}: observed {} vs union bound {} ({verdict})",
            r.n,
            r.p,
            r.sigma,
            r.observed_fail_freq,
            r.xi_union
        );
    }
    Ok(Output::csv(concentration_csv(&rows)))
}

const SCALING_KEYS: &[Key] = &[
    key("model", "sigmoid", "sigmoid or quadratic"),
    key("mu_spec", "uniform", "quadratic means"),
    key("mean_norm", "3", "sigmoid class-mean norm"),
    key("noise_scale", "0.2", "sigmoid within-class noise scale"),
    key("label_flip", "0.05", "sigmoid label flip probability"),
    key(
        "calibration_samples",
        "20000",
        "draws used to estimate G and L",
    ),
    key("variant", "gd", "gd, rmsprop or adam"),
    key(
        "bound",
        "empirical",
        "prescription to follow: empirical or population",
    ),
    key("p_values", "4,16,64", "p grid (at n_fixed)"),
    key("n_values", "1000,4000,16000", "n grid (at p_fixed)"),
    key("p_fixed", "16", "p on the n sweep"),
    key("n_fixed", "10000", "n on the p sweep"),
    key("eps", "1", "privacy epsilon"),
    key("delta", "1e-5", "privacy delta"),
    key("trials", "20", "runs per grid point"),
    key("t_scale", "1", "multiplier on the prescribed T"),
    key("nu", "1", "denominator offset (adaptive variants)"),
    key("beta1", "0.9", "first-moment decay"),
    key("beta2", "0.999", "second-moment decay"),
    key("lambda", "1", "second-moment clamp"),
    key("constant", "1", "big-O constant of the reported bound"),
    key("noiseless", "false", "force sigma = 0"),
    key("steps", "0", "override T (0 = prescribed)"),
    key("clip_at_g", "true", "clip per-example gradients at G"),
    key("seed", "0", "root seed"),
];

fn scaling(c: &Resolved) -> Result<Output, CliError> {
    let model = match c.choice("model", &["sigmoid", "quadratic"])? {
        "sigmoid" => ScalingModel::Sigmoid(SigmoidSpec {
            mean_norm: c.get("mean_norm")?,
            noise_scale: c.get("noise_scale")?,
            label_flip: c.get("label_flip")?,
            calibration_samples: c.get("calibration_samples")?,
            ..SigmoidSpec::new(1)
        }),
        _ => ScalingModel::Quadratic(c.get("mu_spec")?),
    };
    let population = c.choice("bound", &["empirical", "population"])? == "population";
    let steps: u64 = c.get("steps")?;
    let mut plan = ScalingPlan::new(model, c.get("seed")?);
    plan.target = TheoryTarget::new(c.get("variant")?, population);
    plan.p_values = c.list("p_values")?;
    plan.n_values = c.list("n_values")?;
    plan.p_fixed = c.get("p_fixed")?;
    plan.n_fixed = c.get("n_fixed")?;
    plan.eps = c.get("eps")?;
    plan.delta = c.get("delta")?;
    plan.trials = c.get("trials")?;
    plan.t_scale = c.get("t_scale")?;
    plan.nu = c.get("nu")?;
    plan.beta1 = c.get("beta1")?;
    plan.beta2 = c.get("beta2")?;
    plan.lambda = c.get("lambda")?;
    plan.constant = c.get("constant")?;
    plan.noiseless = c.get("noiseless")?;
    plan.fixed_steps = (steps > 0).then_some(steps);
    plan.clip_at_g = c.get("clip_at_g")?;
    let report = scaling_experiment(&plan)?;
    for (axis, fit) in &report.fits {
        log::info!(
            "slope in {axis}: {:.4} (r^2 = {:.4})",
            fit.exponent,
            fit.r_squared
        );
    }
    Ok(Output::csv(report.to_csv()))
}

const LOWER_BOUND_KEYS: &[Key] = &[
    key("p", "100", "dimension"),
    key("n", "1000", "dataset size"),
    key("trials", "500", "independent datasets"),
    key(
        "cs",
        "0.25,0.35,0.4,0.45,0.5",
        "thresholds c for D >= c*sqrt(p/n)",
    ),
    key(
        "probes",
        "5",
        "random w per trial for the w-independence check",
    ),
    key("seed", "0", "root seed"),
];

fn lowerbound(c: &Resolved) -> Result<Output, CliError> {
    let plan = LowerBoundPlan {
        p: c.get("p")?,
        n: c.get("n")?,
        trials: c.get("trials")?,
        seed: c.get("seed")?,
        cs: c.list("cs")?,
        probes: c.get("probes")?,
    };
    let r = lower_bound_experiment(&plan)?;
    log::info!(
        "mean D^2 = {:e} +- {:e} (expected {:e}); mean D^2/(p/n) = {:.4}",
        r.mean_d_sq,
        r.std_error_d_sq,
        r.expected_d_sq,
        r.ratio
    );
    for (cv, frac) in &r.fraction_above {
        log::info!("fraction with D >= {cv}*sqrt(p/n): {frac}");
    }
    Ok(Output::csv(r.to_csv()))
}

const TRAIN_COMPARE_KEYS: &[Key] = &[
    key("data", "synthetic", "synthetic or idx"),
    key(
        "train_size",
        "10000",
        "training examples (IDX: leading subset)",
    ),
    key("test_size", "2000", "synthetic test examples"),
    key("separation", "6.5", "synthetic prototype separation"),
    key("deformation", "2", "synthetic within-class deformation"),
    key("noise", "0.7", "synthetic pixel noise"),
    key("train_images", "", "IDX training images"),
    key("train_labels", "", "IDX training labels"),
    key("test_images", "", "IDX test images"),
    key("test_labels", "", "IDX test labels"),
    key("methods", "gd,rmsprop,adam", "methods to compare"),
    key("sigmas", "0,8", "noise multipliers"),
    key("lrs", "0.1,0.01,0.001", "step-size grid"),
    key("repeats", "5", "repeats per method and sigma"),
    key("epochs", "20", "passes over the training set"),
    key("batch", "128", "mini-batch size"),
    key("clip", "1", "per-example clip bound"),
    key("hidden", "128,128", "hidden widths"),
    key("beta1", "0.9", "first-moment decay"),
    key("beta2", "0.999", "second-moment decay"),
    key("nu", "1e-8", "denominator offset"),
    key("lambda", "1", "second-moment clamp"),
    key("lr_decay_every", "30", "epochs between step-size decays"),
    key("lr_decay_factor", "0.1", "step-size decay factor"),
    key("delta", "1e-5", "delta for the reported epsilon"),
    key("seed", "0", "root seed"),
];

fn traincompare(c: &Resolved) -> Result<Output, CliError> {
    let mut inputs = Vec::new();
    let train_size: usize = c.get("train_size")?;
    let data = match c.choice("data", &["synthetic", "idx"])? {
        "synthetic" => TrainData::Synthetic {
            train: train_size,
            test: c.get("test_size")?,
            separation: c.get("separation")?,
            deformation: c.get("deformation")?,
            noise: c.get("noise")?,
        },
        _ => {
            let mut paths = Vec::new();
            for k in ["train_images", "train_labels", "test_images", "test_labels"] {
                let p = c
                    .path(k)
                    .ok_or_else(|| c.reject(k, "required when data = idx"))?;
                inputs.push((k.to_string(), p.clone()));
                paths.push(p);
            }
            let mut it = paths.into_iter();
            let mut next = || it.next().expect("four paths");
            TrainData::Idx {
                train_images: next(),
                train_labels: next(),
                test_images: next(),
                test_labels: next(),
                subset: train_size,
            }
        }
    };
    let mut plan = TrainComparePlan::new(data, c.get("seed")?);
    plan.methods = c.list("methods")?;
    plan.sigmas = c.list("sigmas")?;
    plan.lrs = c.list("lrs")?;
    plan.repeats = c.get("repeats")?;
    plan.epochs = c.get("epochs")?;
    plan.batch_size = c.get("batch")?;
    plan.clip = c.get("clip")?;
    plan.hidden = c.list("hidden")?;
    plan.beta1 = c.get("beta1")?;
    plan.beta2 = c.get("beta2")?;
    plan.nu = c.get("nu")?;
    plan.lambda = c.get("lambda")?;
    plan.lr_decay_every_epochs = c.get("lr_decay_every")?;
    plan.lr_decay_factor = c.get("lr_decay_factor")?;
    plan.delta = c.get("delta")?;
    let report = train_compare(&plan)?;
    for (m, s, lr) in &report.selected_lrs {
        log::info!(
            "{m} sigma={s}: lr={lr}, final train accuracy {:.4}",
            report.final_train_acc(*m, *s).unwrap_or(f64::NAN)
        );
    }
    Ok(Output {
        csv: report.to_csv(),
        inputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_names_are_unique_and_not_global_flags() {
        for cmd in COMMANDS {
            let mut names: Vec<&str> = cmd.keys.iter().map(|k| k.name).collect();
            names.sort_unstable();
            let len = names.len();
            names.dedup();
            assert_eq!(names.len(), len, "{}", cmd.name);
            for reserved in ["config", "out", "threads", "help", "version"] {
                assert!(!names.contains(&reserved));
            }
        }
    }

    #[test]
    fn synthetic_defaults_match_the_library() {
        let get = |k: &str| -> f64 {
            TRAIN_COMPARE_KEYS
                .iter()
                .find(|x| x.name == k)
                .unwrap()
                .default
                .unwrap()
                .parse()
                .unwrap()
        };
        assert_eq!(get("separation"), PrototypeTask::SEPARATION);
        assert_eq!(get("deformation"), PrototypeTask::DEFORMATION);
        assert_eq!(get("noise"), PrototypeTask::NOISE);
    }
}
