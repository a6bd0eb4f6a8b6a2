use rand::Rng;

use super::data::{Dataset, Example, MuSpec, Provenance};
use super::LossModel;
use crate::error::Result;
use crate::rng::StreamRng;

/// `ℓ(w, z) = ½‖w − z‖²` with `z` a product of Bernoulli(`μ_j`) coordinates.
///
/// `f(w) = ½‖w − μ‖² + ½Σμ_j(1−μ_j)`, so `∇f(w) = w − μ` and `L = 1`. `G = √p`
/// bounds `‖w − z‖` for `w` in the unit box.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    mu: Vec<f64>,
}

impl QuadraticModel {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(crate::Error::invalid("mu", "need p ≥ 1"));
        }
        if let Some(bad) = mu.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(crate::Error::invalid(
                "mu",
                format!("mean {bad} outside [0, 1]"),
            ));
        }
        Ok(Self { mu })
    }

    pub fn from_spec(spec: &MuSpec, p: usize, rng: &mut StreamRng) -> Result<Self> {
        Self::new(spec.resolve(p, rng)?)
    }

    /// Means drawn from U[1/3, 2/3].
    pub fn with_random_means(p: usize, rng: &mut StreamRng) -> Self {
        Self::from_spec(&MuSpec::Uniform, p, rng).expect("uniform means are valid")
    }

    pub fn means(&self) -> &[f64] {
        &self.mu
    }

    /// `Σ_j μ_j(1−μ_j)`, the expected squared deviation `n·E‖mean(S) − μ‖²`.
    pub fn total_variance(&self) -> f64 {
        self.mu.iter().map(|m| m * (1.0 - m)).sum()
    }

    pub fn population_loss(&self, w: &[f64]) -> f64 {
        let d: f64 = w.iter().zip(&self.mu).map(|(a, m)| (a - m) * (a - m)).sum();
        0.5 * (d + self.total_variance())
    }
}

impl LossModel for QuadraticModel {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dimension(&self) -> usize {
        self.mu.len()
    }

    fn loss(&self, w: &[f64], z: Example<'_>) -> f64 {
        0.5 * w
            .iter()
            .zip(z.x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    }

    fn gradient_into(&self, w: &[f64], z: Example<'_>, out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(w).zip(z.x) {
            *o = a - b;
        }
    }

    fn population_gradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        Some(w.iter().zip(&self.mu).map(|(a, m)| a - m).collect())
    }

    fn sample(&self, n: usize, rng: &mut StreamRng) -> Option<Dataset> {
        if n == 0 {
            return None;
        }
        let p = self.mu.len();
        let mut features = Vec::with_capacity(n * p);
        for _ in 0..n {
            for &m in &self.mu {
                features.push(if rng.random::<f64>() < m { 1.0 } else { 0.0 });
            }
        }
        Dataset::new(
            p,
            features,
            None,
            Provenance::Generated {
                model: "quadratic".into(),
                seed: 0,
                params: vec![("p".into(), p.to_string()), ("n".into(), n.to_string())],
            },
        )
        .ok()
    }

    fn smoothness(&self) -> Option<f64> {
        Some(1.0)
    }

    fn gradient_bound(&self) -> Option<f64> {
        Some((self.mu.len() as f64).sqrt())
    }
}
