use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::data::{Dataset, Example, Provenance};
use super::LossModel;
use crate::error::{Error, Result};
use crate::rng::{SeedTree, StreamRng};
use crate::vector::{dot, norm, norm_sq};

/// Parameters of the two-class Gaussian mixture behind [`SigmoidModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidSpec {
    pub p: usize,
    /// `‖m‖`; class means are `±m` with `m ∝ (1, …, 1)`.
    pub mean_norm: f64,
    /// Within-class covariance is `(noise_scale²/p)·I`.
    pub noise_scale: f64,
    /// Probability that a label is flipped.
    pub label_flip: f64,
    /// Fresh draws used to estimate `G` and `L`.
    pub calibration_samples: usize,
}

impl SigmoidSpec {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            mean_norm: 3.0,
            noise_scale: 0.2,
            label_flip: 0.05,
            calibration_samples: 20_000,
        }
    }
}

// sup|s'| = 1/4, sup|s''| = 1/(6√3); ∇²ℓ = 2(s'² + (s − y)s'')xxᵀ.
const CURVATURE: f64 = 2.0 * (1.0 / 16.0 + 0.096_225_044_864_937_63);
const QUAD_NODES: usize = 401;
const QUAD_SPAN: f64 = 12.0;

/// `ℓ(w, (x, y)) = (s(w·x) − y)²` with `s` the logistic function, `y ∈ {0, 1}`.
///
/// The population gradient is a one-dimensional Gaussian expectation per class
/// (Stein's identity), evaluated by quadrature. `G` and `L` are estimated from
/// the largest `‖x‖` in a calibration sample: `G = max‖x‖/2`,
/// `L = 2(1/16 + 1/(6√3))·max‖x‖²`.
#[derive(Debug, Clone)]
pub struct SigmoidModel {
    spec: SigmoidSpec,
    mean: Vec<f64>,
    grad_bound: f64,
    smoothness: f64,
}

fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl SigmoidModel {
    pub fn new(spec: SigmoidSpec, seeds: SeedTree) -> Result<Self> {
        if spec.p == 0 {
            return Err(Error::invalid("p", "must be ≥ 1"));
        }
        if !(spec.noise_scale > 0.0) || !(spec.mean_norm >= 0.0) {
            return Err(Error::invalid(
                "noise_scale",
                "need noise_scale > 0, mean_norm ≥ 0",
            ));
        }
        if !(0.0..0.5).contains(&spec.label_flip) {
            return Err(Error::invalid("label_flip", "must be in [0, 1/2)"));
        }
        if spec.calibration_samples == 0 {
            return Err(Error::invalid("calibration_samples", "must be ≥ 1"));
        }
        let c = spec.mean_norm / (spec.p as f64).sqrt();
        let mut model = Self {
            spec,
            mean: vec![c; spec.p],
            grad_bound: f64::NAN,
            smoothness: f64::NAN,
        };
        let cal = model.draw(
            spec.calibration_samples,
            &mut seeds.stream("sigmoid-calibration", 0),
        );
        let max_x = (0..cal.len()).map(|i| norm(cal.row(i))).fold(0.0, f64::max);
        model.grad_bound = 0.5 * max_x;
        model.smoothness = CURVATURE * max_x * max_x;
        Ok(model)
    }

    pub fn spec(&self) -> &SigmoidSpec {
        &self.spec
    }

    pub fn class_mean(&self) -> &[f64] {
        &self.mean
    }

    fn draw(&self, n: usize, rng: &mut StreamRng) -> Dataset {
        let p = self.spec.p;
        let tau = self.spec.noise_scale / (p as f64).sqrt();
        let mut features = Vec::with_capacity(n * p);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let class = rng.random_bool(0.5);
            let sign = if class { 1.0 } else { -1.0 };
            for m in &self.mean {
                let e: f64 = StandardNormal.sample(rng);
                features.push(sign * m + tau * e);
            }
            let flip = rng.random::<f64>() < self.spec.label_flip;
            labels.push(usize::from(class != flip));
        }
        Dataset::new(
            p,
            features,
            Some(labels),
            Provenance::Generated {
                model: "sigmoid".into(),
                seed: 0,
                params: vec![
                    ("p".into(), p.to_string()),
                    ("n".into(), n.to_string()),
                    ("mean_norm".into(), self.spec.mean_norm.to_string()),
                    ("noise_scale".into(), self.spec.noise_scale.to_string()),
                    ("label_flip".into(), self.spec.label_flip.to_string()),
                ],
            },
        )
        .expect("n ≥ 1 rows")
    }

    /// `E[h(a)]` for `a ~ N(m, s²)` by the trapezoid rule over `m ± 12s`.
    fn gauss_expect(m: f64, s: f64, h: impl Fn(f64) -> f64) -> f64 {
        if s <= 0.0 {
            return h(m);
        }
        let step = 2.0 * QUAD_SPAN / (QUAD_NODES - 1) as f64;
        let mut acc = 0.0;
        for k in 0..QUAD_NODES {
            let t = -QUAD_SPAN + k as f64 * step;
            let wgt = if k == 0 || k == QUAD_NODES - 1 {
                0.5
            } else {
                1.0
            };
            acc += wgt * (-0.5 * t * t).exp() * h(m + s * t);
        }
        acc * step / (2.0 * std::f64::consts::PI).sqrt()
    }
}

impl LossModel for SigmoidModel {
    fn name(&self) -> &str {
        "sigmoid"
    }

    fn dimension(&self) -> usize {
        self.spec.p
    }

    fn loss(&self, w: &[f64], z: Example<'_>) -> f64 {
        let y = z.y.unwrap_or(0) as f64;
        let r = logistic(dot(w, z.x)) - y;
        r * r
    }

    fn gradient_into(&self, w: &[f64], z: Example<'_>, out: &mut [f64]) {
        let y = z.y.unwrap_or(0) as f64;
        let s = logistic(dot(w, z.x));
        let coef = 2.0 * (s - y) * s * (1.0 - s);
        for (o, x) in out.iter_mut().zip(z.x) {
            *o = coef * x;
        }
    }

    fn population_gradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        let p = self.spec.p as f64;
        let tau2 = self.spec.noise_scale * self.spec.noise_scale / p;
        let wm = dot(w, &self.mean);
        let sd = (tau2 * norm_sq(w)).sqrt();
        let rho = self.spec.label_flip;
        let mut coef_mean = 0.0;
        let mut coef_w = 0.0;
        for (sign, ybar) in [(1.0, 1.0 - rho), (-1.0, rho)] {
            let g = |a: f64| {
                let s = logistic(a);
                2.0 * (s - ybar) * s * (1.0 - s)
            };
            let dg = |a: f64| {
                let s = logistic(a);
                let d1 = s * (1.0 - s);
                let d2 = d1 * (1.0 - 2.0 * s);
                2.0 * (d1 * d1 + (s - ybar) * d2)
            };
            let eg = Self::gauss_expect(sign * wm, sd, g);
            let edg = Self::gauss_expect(sign * wm, sd, dg);
            // E[g(a)x] = μ_c E[g] + τ² w E[g'] with μ_c = sign·m
            coef_mean += 0.5 * sign * eg;
            coef_w += 0.5 * tau2 * edg;
        }
        Some(
            self.mean
                .iter()
                .zip(w)
                .map(|(m, wj)| coef_mean * m + coef_w * wj)
                .collect(),
        )
    }

    fn sample(&self, n: usize, rng: &mut StreamRng) -> Option<Dataset> {
        (n > 0).then(|| self.draw(n, rng))
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.smoothness)
    }

    fn gradient_bound(&self) -> Option<f64> {
        Some(self.grad_bound)
    }
}
