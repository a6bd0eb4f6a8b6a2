use dpagd::harness::{
    concentration_csv, concentration_experiment, lower_bound_experiment, scaling_experiment,
    ConcentrationPlan, LowerBoundPlan, NoiseGrid, ScalingModel, ScalingPlan,
};
use dpagd::optimizer::{
    run, AveragingKind, LrSchedule, Monitor, OptimizerConfig, PopulationMonitor,
};
use dpagd::oracle::{LossModel, MuSpec, QuadraticModel, SigmoidSpec};
use dpagd::rng::SeedTree;

#[test]
fn huge_noise_swamps_sampling_error() {
    let p = 256;
    let tree = SeedTree::new(1);
    let model = QuadraticModel::with_random_means(p, &mut tree.stream("mu", 0));
    let data = model.sample(1000, &mut tree.stream("data", 0)).unwrap();
    let sigma = 50.0;
    let cfg = OptimizerConfig {
        eta: 0.01,
        nu: 0.0,
        lambda_clamp: 1.0,
        sigma,
        steps: 40,
        kind: AveragingKind::Gd,
        batch_size: None,
        clip_bound: None,
        seed: 2,
        schedule: LrSchedule::Constant,
        bias_correction: false,
    };
    let monitor = Monitor {
        empirical: false,
        population: PopulationMonitor::Analytic,
        loss: false,
    };
    let rec = run(&model, &data, vec![0.0; p], &cfg, monitor).unwrap();
    let scale = sigma * (p as f64).sqrt();
    let k = rec.entries.len() as f64;
    let noise = rec.entries.iter().map(|e| e.noise_dev).sum::<f64>() / k / scale;
    let total = rec
        .entries
        .iter()
        .map(|e| e.total_dev.unwrap())
        .sum::<f64>()
        / k
        / scale;
    assert!((noise - 1.0).abs() < 0.05, "noise ratio {noise}");
    assert!((total - 1.0).abs() < 0.05, "total ratio {total}");
}

#[test]
fn failure_frequency_respects_the_union_bound() {
    let plan = ConcentrationPlan {
        ns: vec![200, 1000],
        ps: vec![4, 16],
        noise: NoiseGrid::Fixed(vec![0.01, 0.05]),
        steps: 10,
        beta: 0.2,
        trials: 100,
        seed: 3,
        mu_spec: MuSpec::Uniform,
        eta: 0.5,
    };
    for r in concentration_experiment(&plan).unwrap() {
        let slack = 3.0 * (r.xi_union * (1.0 - r.xi_union) / r.trials as f64).sqrt();
        // the bound only covers noise; sampling error must be small against α
        let sampling = (r.p as f64 / (4.0 * r.n as f64)).sqrt();
        if sampling < 0.25 * r.alpha {
            assert!(
                r.observed_fail_freq <= r.xi_union + slack,
                "{r:?} exceeds the union bound"
            );
        }
    }
}

#[test]
fn zero_step_deviation_has_binomial_scale() {
    let plan = LowerBoundPlan::new(20, 400, 400, 4);
    let r = lower_bound_experiment(&plan).unwrap();
    assert!((r.mean_d_sq - r.expected_d_sq).abs() <= 3.0 * r.std_error_d_sq);
    assert!(r.max_probe_discrepancy < 1e-12);
}

#[test]
fn experiments_replay_byte_identically() {
    let conc = ConcentrationPlan {
        ns: vec![300],
        ps: vec![8],
        noise: NoiseGrid::Calibrated {
            eps: vec![0.5, 2.0],
            delta: 1e-5,
        },
        steps: 5,
        beta: 0.05,
        trials: 10,
        seed: 5,
        mu_spec: MuSpec::Uniform,
        eta: 0.25,
    };
    assert_eq!(
        concentration_csv(&concentration_experiment(&conc).unwrap()),
        concentration_csv(&concentration_experiment(&conc).unwrap())
    );

    let mut scaling = ScalingPlan::new(ScalingModel::Sigmoid(SigmoidSpec::new(1)), 6);
    scaling.p_values = vec![2, 4, 8];
    scaling.n_values = vec![];
    scaling.n_fixed = 500;
    scaling.trials = 2;
    let a = scaling_experiment(&scaling).unwrap().to_csv();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| scaling_experiment(&scaling).unwrap().to_csv());
    assert_eq!(a, b);

    let lb = LowerBoundPlan::new(10, 100, 30, 7);
    assert_eq!(
        lower_bound_experiment(&lb).unwrap().to_csv(),
        lower_bound_experiment(&lb).unwrap().to_csv()
    );
}

#[test]
fn different_seeds_give_different_data() {
    let m = QuadraticModel::with_random_means(5, &mut SeedTree::new(8).stream("mu", 0));
    let a = m
        .sample(20, &mut SeedTree::new(9).stream("data", 0))
        .unwrap();
    let b = m
        .sample(20, &mut SeedTree::new(10).stream("data", 0))
        .unwrap();
    assert_ne!(a.features(), b.features());
}
