use dpagd::oracle::{
    empirical_gradient, monte_carlo_gradient, Dataset, LossModel, Mlp, MonteCarlo, PrototypeTask,
    QuadraticModel, SigmoidModel, SigmoidSpec,
};
use dpagd::rng::SeedTree;
use proptest::prelude::*;
use rand::Rng;

const PROBES: usize = 100;
const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// Central finite differences of `ℓ(·, z)` at `w`.
fn finite_difference(model: &dyn LossModel, w: &[f64], data: &Dataset, i: usize) -> Vec<f64> {
    let mut w = w.to_vec();
    (0..w.len())
        .map(|j| {
            let orig = w[j];
            w[j] = orig + STEP;
            let up = model.loss(&w, data.example(i));
            w[j] = orig - STEP;
            let down = model.loss(&w, data.example(i));
            w[j] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

fn check(model: &dyn LossModel, data: &Dataset, draw_w: &mut dyn FnMut() -> Vec<f64>, seed: u64) {
    let mut rng = SeedTree::new(seed).stream("probe", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..PROBES {
        let w = draw_w();
        let i = rng.random_range(0..data.len());
        let fd = finite_difference(model, &w, data, i);
        let g = model.gradient(&w, data.example(i));
        worst = worst.max(rel_err(&g, &fd));
    }
    assert!(
        worst < TOL,
        "{}: worst relative error {worst:e}",
        model.name()
    );
}

fn uniform_w(p: usize, scale: f64, seed: u64) -> impl FnMut() -> Vec<f64> {
    let mut rng = SeedTree::new(seed).stream("w", 0);
    move || {
        (0..p)
            .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect()
    }
}

#[test]
fn quadratic_gradient_matches_finite_differences() {
    let tree = SeedTree::new(1);
    let model = QuadraticModel::with_random_means(10, &mut tree.stream("mu", 0));
    let data = model.sample(50, &mut tree.stream("data", 0)).unwrap();
    check(&model, &data, &mut uniform_w(10, 2.0, 2), 3);
}

#[test]
fn sigmoid_gradient_matches_finite_differences() {
    let model = SigmoidModel::new(SigmoidSpec::new(8), SeedTree::new(4)).unwrap();
    let data = model
        .sample(50, &mut SeedTree::new(5).stream("data", 0))
        .unwrap();
    check(&model, &data, &mut uniform_w(8, 1.0, 6), 7);
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let task = PrototypeTask::new(6, 3, 2, 2.0, 1.0, 0.5, 8).unwrap();
    let mlp = Mlp::new(vec![6, 5, 4, 3]).unwrap();
    let data = task.generate(40, &mut SeedTree::new(9).stream("data", 0));
    let mut init = SeedTree::new(10).stream("init", 0);
    // zero biases can leave pre-activations exactly on a ReLU kink
    let mut jitter = uniform_w(mlp.dimension(), 0.1, 12);
    let mut draw = || {
        let mut w = mlp.init(&mut init);
        w.iter_mut().zip(jitter()).for_each(|(a, b)| *a += b);
        w
    };
    check(&mlp, &data, &mut draw, 11);
}

#[test]
fn mlp_monte_carlo_agrees_with_doubled_budget() {
    let task = PrototypeTask::new(3, 2, 1, 2.0, 1.0, 0.5, 12).unwrap();
    let mlp = Mlp::new(vec![3, 3, 2])
        .unwrap()
        .with_generator(task)
        .unwrap();
    let w = mlp.init(&mut SeedTree::new(13).stream("init", 0));
    let a = monte_carlo_gradient(
        &mlp,
        &w,
        MonteCarlo {
            samples: 20_000,
            seeds: SeedTree::new(14),
        },
    )
    .unwrap();
    let b = monte_carlo_gradient(
        &mlp,
        &w,
        MonteCarlo {
            samples: 40_000,
            seeds: SeedTree::new(15),
        },
    )
    .unwrap();
    let (sa, sb) = (a.std_error.unwrap(), b.std_error.unwrap());
    for j in 0..w.len() {
        let se = (sa[j] * sa[j] + sb[j] * sb[j]).sqrt();
        assert!(
            (a.mean[j] - b.mean[j]).abs() <= 3.0 * se,
            "coordinate {j}: {} vs {} (se {se:e})",
            a.mean[j],
            b.mean[j]
        );
    }
}

#[test]
fn generation_is_deterministic() {
    let tree = SeedTree::new(16);
    let model = QuadraticModel::with_random_means(5, &mut tree.stream("mu", 0));
    let a = model.sample(30, &mut tree.stream("data", 0)).unwrap();
    let b = model.sample(30, &mut tree.stream("data", 0)).unwrap();
    assert_eq!(a.features(), b.features());
    let task = PrototypeTask::digits_like(17);
    let x = task.generate(20, &mut tree.stream("digits", 0));
    let y = PrototypeTask::digits_like(17).generate(20, &mut tree.stream("digits", 0));
    assert_eq!(x.features(), y.features());
    assert_eq!(x.labels(), y.labels());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratic_deviation_is_mu_minus_sample_mean(
        seed in any::<u64>(),
        w in prop::collection::vec(-3.0f64..3.0, 6),
    ) {
        let tree = SeedTree::new(seed);
        let model = QuadraticModel::with_random_means(6, &mut tree.stream("mu", 0));
        let data = model.sample(25, &mut tree.stream("data", 0)).unwrap();
        let emp = empirical_gradient(&model, &data, &w, None, None).unwrap();
        let pop = model.population_gradient(&w).unwrap();
        let mean = data.mean_features();
        for j in 0..6 {
            let expected = model.means()[j] - mean[j];
            prop_assert!((emp[j] - pop[j] - expected).abs() < 1e-12);
        }
    }
}
