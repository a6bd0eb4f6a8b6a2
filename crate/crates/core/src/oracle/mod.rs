//! Loss models and gradient oracles.
//!
//! A [`LossModel`] supplies per-example losses and gradients, and optionally an
//! analytic population gradient, a data generator, and the constants `L`
//! (smoothness) and `G` (gradient bound). The free functions here build the
//! quantities the optimizer consumes: clipped per-example gradients, empirical
//! means over a batch, and population gradients.

mod data;
mod idx;
mod mlp;
mod quadratic;
mod sigmoid;

use rayon::prelude::*;

pub use data::{Dataset, Example, MuSpec, PrototypeTask, Provenance};
pub use idx::{
    load_idx, load_idx_with, parse_idx_images, parse_idx_labels, read_idx_images, read_idx_labels,
    IdxImages, Normalization,
};
pub use mlp::Mlp;
pub use quadratic::QuadraticModel;
pub use sigmoid::{SigmoidModel, SigmoidSpec};

use crate::error::{Error, Result};
use crate::rng::{SeedTree, StreamRng};
use crate::vector::{axpy, norm, tree_sum};

/// Examples per sequential block in gradient reductions.
pub const REDUCTION_CHUNK: usize = 64;

pub trait LossModel: Send + Sync {
    fn name(&self) -> &str;

    /// Number of parameters `p`.
    fn dimension(&self) -> usize;

    fn loss(&self, w: &[f64], z: Example<'_>) -> f64;

    /// Writes `∇ℓ(w, z)` into `out` (length `p`).
    fn gradient_into(&self, w: &[f64], z: Example<'_>, out: &mut [f64]);

    fn gradient(&self, w: &[f64], z: Example<'_>) -> Vec<f64> {
        let mut g = vec![0.0; self.dimension()];
        self.gradient_into(w, z, &mut g);
        g
    }

    /// Closed-form `∇f(w)`, when the model knows its data distribution exactly.
    fn population_gradient(&self, _w: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Fresh draws from the data distribution, when the model has one.
    fn sample(&self, _n: usize, _rng: &mut StreamRng) -> Option<Dataset> {
        None
    }

    /// Smoothness constant `L` of the loss, if known or estimated.
    fn smoothness(&self) -> Option<f64> {
        None
    }

    /// Bound `G` on per-example gradient norms, if known or estimated.
    fn gradient_bound(&self) -> Option<f64> {
        None
    }

    /// Sum over `indices` of per-example gradients, each clipped to norm `clip`
    /// first when given. Implementations must be bit-stable across thread counts.
    fn gradient_sum(
        &self,
        w: &[f64],
        data: &Dataset,
        indices: &[usize],
        clip: Option<f64>,
    ) -> Vec<f64> {
        per_example_gradient_sum(self, w, data, indices, clip)
    }

    fn mean_loss(&self, w: &[f64], data: &Dataset) -> f64 {
        let parts: Vec<f64> = (0..data.len())
            .collect::<Vec<_>>()
            .par_chunks(REDUCTION_CHUNK)
            .map(|chunk| chunk.iter().map(|&i| self.loss(w, data.example(i))).sum())
            .collect();
        parts.iter().sum::<f64>() / data.len() as f64
    }
}

/// Reference reduction: per-example gradients in fixed blocks of
/// [`REDUCTION_CHUNK`], summed sequentially inside a block and by a fixed
/// pairwise tree across blocks.
pub fn per_example_gradient_sum<M: LossModel + ?Sized>(
    model: &M,
    w: &[f64],
    data: &Dataset,
    indices: &[usize],
    clip: Option<f64>,
) -> Vec<f64> {
    let p = model.dimension();
    let parts: Vec<Vec<f64>> = indices
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; p];
            let mut g = vec![0.0; p];
            for &i in chunk {
                model.gradient_into(w, data.example(i), &mut g);
                if let Some(c) = clip {
                    clip_in_place(&mut g, c);
                }
                axpy(&mut acc, 1.0, &g);
            }
            acc
        })
        .collect();
    tree_sum(parts, p)
}

/// `raw · min(1, C/‖raw‖)`.
pub fn clip(raw: &[f64], bound: f64) -> Vec<f64> {
    let mut v = raw.to_vec();
    clip_in_place(&mut v, bound);
    v
}

// Vectors already within rounding of the bound are left alone, which keeps
// clipping idempotent.
const CLIP_SLACK: f64 = 4.0 * f64::EPSILON;

pub fn clip_in_place(v: &mut [f64], bound: f64) {
    debug_assert!(bound > 0.0);
    let n = norm(v);
    if n > bound * (1.0 + CLIP_SLACK) {
        let s = bound / n;
        for x in v.iter_mut() {
            *x *= s;
        }
    }
}

/// A per-example gradient together with its clipped version.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub raw: Vec<f64>,
    pub clipped: Vec<f64>,
    pub clip_bound: f64,
}

impl GradientSample {
    pub fn new(raw: Vec<f64>, clip_bound: f64) -> Result<Self> {
        if !(clip_bound > 0.0) {
            return Err(Error::invalid(
                "clip_bound",
                format!("must be > 0, got {clip_bound}"),
            ));
        }
        let clipped = clip(&raw, clip_bound);
        Ok(Self {
            raw,
            clipped,
            clip_bound,
        })
    }
}

/// Mean of (optionally clipped) per-example gradients over `batch`, or over the
/// whole dataset when `batch` is `None`.
pub fn empirical_gradient(
    model: &dyn LossModel,
    data: &Dataset,
    w: &[f64],
    batch: Option<&[usize]>,
    clip: Option<f64>,
) -> Result<Vec<f64>> {
    check_point(model, w)?;
    if let Some(c) = clip {
        if !(c > 0.0) {
            return Err(Error::invalid("clip", format!("must be > 0, got {c}")));
        }
    }
    let all: Vec<usize>;
    let indices = match batch {
        Some(b) => {
            if b.is_empty() {
                return Err(Error::EmptyBatch);
            }
            if let Some(&bad) = b.iter().find(|&&i| i >= data.len()) {
                return Err(Error::BatchIndex {
                    index: bad,
                    n: data.len(),
                });
            }
            b
        }
        None => {
            all = (0..data.len()).collect();
            &all
        }
    };
    let mut g = model.gradient_sum(w, data, indices, clip);
    let inv = 1.0 / indices.len() as f64;
    for v in &mut g {
        *v *= inv;
    }
    Ok(g)
}

fn check_point(model: &dyn LossModel, w: &[f64]) -> Result<()> {
    if w.len() != model.dimension() {
        return Err(Error::Dimension {
            expected: model.dimension(),
            got: w.len(),
        });
    }
    Ok(())
}

/// Monte Carlo budget for population gradients of models without a closed form.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seeds: SeedTree,
}

impl MonteCarlo {
    /// The default budget `100·n` for a training set of size `n`.
    pub fn for_training_size(n: usize, seeds: SeedTree) -> Self {
        Self {
            samples: 100 * n,
            seeds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationGradient {
    pub mean: Vec<f64>,
    /// Per-coordinate standard error; `None` for analytic values.
    pub std_error: Option<Vec<f64>>,
}

/// `∇f(w)`: analytic when the model provides it, Monte Carlo otherwise.
pub fn population_gradient(
    model: &dyn LossModel,
    w: &[f64],
    mc: Option<MonteCarlo>,
) -> Result<PopulationGradient> {
    check_point(model, w)?;
    if let Some(mean) = model.population_gradient(w) {
        return Ok(PopulationGradient {
            mean,
            std_error: None,
        });
    }
    let mc = mc.ok_or(Error::NoPopulationGradient)?;
    monte_carlo_gradient(model, w, mc)
}

const MC_BLOCK: usize = 4096;

/// Monte Carlo mean of `∇ℓ(w, z)` over fresh draws, ignoring any closed form.
pub fn monte_carlo_gradient(
    model: &dyn LossModel,
    w: &[f64],
    mc: MonteCarlo,
) -> Result<PopulationGradient> {
    if mc.samples < 2 {
        return Err(Error::invalid(
            "samples",
            "Monte Carlo needs at least 2 draws",
        ));
    }
    let p = model.dimension();
    let blocks = mc.samples.div_ceil(MC_BLOCK);
    let parts: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let size = MC_BLOCK.min(mc.samples - b * MC_BLOCK);
            let mut rng = mc.seeds.stream("population-mc", b as u64);
            let data = model.sample(size, &mut rng)?;
            let mut sum = vec![0.0; p];
            let mut sum_sq = vec![0.0; p];
            let mut g = vec![0.0; p];
            for i in 0..data.len() {
                model.gradient_into(w, data.example(i), &mut g);
                for ((s, s2), v) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&g) {
                    *s += v;
                    *s2 += v * v;
                }
            }
            Some((sum, sum_sq))
        })
        .collect();
    let mut sums = Vec::with_capacity(blocks);
    let mut sq = Vec::with_capacity(blocks);
    for part in parts {
        let (s, s2) = part.ok_or(Error::NoPopulationGradient)?;
        sums.push(s);
        sq.push(s2);
    }
    let n = mc.samples as f64;
    let mean: Vec<f64> = tree_sum(sums, p).into_iter().map(|s| s / n).collect();
    let second = tree_sum(sq, p);
    let std_error = mean
        .iter()
        .zip(&second)
        .map(|(m, s2)| {
            let var = ((s2 / n - m * m) * n / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    Ok(PopulationGradient {
        mean,
        std_error: Some(std_error),
    })
}
