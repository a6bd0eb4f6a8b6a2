use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::data::{Dataset, Example, PrototypeTask};
use super::{LossModel, REDUCTION_CHUNK};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::vector::tree_sum;

/// Fully connected ReLU network with a softmax cross-entropy head.
///
/// Parameters are stored flat, layer by layer: the `out × in` weight matrix
/// (row-major) followed by the `out` biases.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    dimension: usize,
    generator: Option<PrototypeTask>,
}

struct Forward {
    /// `acts[0]` is the input; `acts[l+1]` the output of layer `l` (post-ReLU,
    /// or logits for the last layer).
    acts: Vec<Array2<f64>>,
}

fn log_softmax_row(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("sizes", "need ≥ 2 positive layer widths"));
        }
        if *sizes.last().unwrap() < 2 {
            return Err(Error::invalid("sizes", "need at least 2 output classes"));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            offsets.push(off);
            off += sizes[l + 1] * sizes[l] + sizes[l + 1];
        }
        Ok(Self {
            sizes,
            offsets,
            dimension: off,
            generator: None,
        })
    }

    /// `input → 128 → 128 → classes`.
    pub fn two_hidden(input: usize, classes: usize) -> Result<Self> {
        Self::new(vec![input, 128, 128, classes])
    }

    /// Attaches a data distribution so Monte Carlo population gradients work.
    pub fn with_generator(mut self, task: PrototypeTask) -> Result<Self> {
        if task.dim != self.sizes[0] || task.classes != *self.sizes.last().unwrap() {
            return Err(Error::Dimension {
                expected: self.sizes[0],
                got: task.dim,
            });
        }
        self.generator = Some(task);
        Ok(self)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn weights<'a>(&self, w: &'a [f64], l: usize) -> ArrayView2<'a, f64> {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        ArrayView2::from_shape((o, i), &w[off..off + o * i]).expect("layout")
    }

    fn bias<'a>(&self, w: &'a [f64], l: usize) -> &'a [f64] {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l] + o * i;
        &w[off..off + o]
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self, rng: &mut StreamRng) -> Vec<f64> {
        let mut w = vec![0.0; self.dimension];
        for l in 0..self.layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let a = (6.0 / (i + o) as f64).sqrt();
            let off = self.offsets[l];
            for v in &mut w[off..off + o * i] {
                *v = rng.random_range(-a..a);
            }
        }
        w
    }

    fn input_matrix(&self, data: &Dataset, indices: &[usize]) -> Array2<f64> {
        let d = self.sizes[0];
        let mut x = Array2::zeros((indices.len(), d));
        for (r, &i) in indices.iter().enumerate() {
            x.row_mut(r)
                .as_slice_mut()
                .expect("contiguous")
                .copy_from_slice(data.row(i));
        }
        x
    }

    fn forward(&self, w: &[f64], x: Array2<f64>) -> Forward {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x);
        for l in 0..self.layers() {
            let mut z = acts[l].dot(&self.weights(w, l).t());
            z +=
                &ArrayView2::from_shape((1, self.sizes[l + 1]), self.bias(w, l)).expect("bias row");
            if l + 1 < self.layers() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        Forward { acts }
    }

    /// Summed cross-entropy and correct-prediction count over `indices`.
    fn evaluate_block(&self, w: &[f64], data: &Dataset, indices: &[usize]) -> (f64, usize) {
        let labels = data.labels().expect("classification data has labels");
        let f = self.forward(w, self.input_matrix(data, indices));
        let logits = f.acts.last().unwrap();
        let mut loss = 0.0;
        let mut correct = 0;
        for (r, &i) in indices.iter().enumerate() {
            let row = logits.row(r);
            let row = row.as_slice().expect("contiguous");
            loss -= log_softmax_row(row)[labels[i]];
            let pred = row
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (k, &v)| if v > b.1 { (k, v) } else { b },
                )
                .0;
            correct += usize::from(pred == labels[i]);
        }
        (loss, correct)
    }

    /// Mean cross-entropy and accuracy on `data`.
    pub fn evaluate(&self, w: &[f64], data: &Dataset) -> (f64, f64) {
        let idx: Vec<usize> = (0..data.len()).collect();
        let parts: Vec<(f64, usize)> = idx
            .par_chunks(512)
            .map(|c| self.evaluate_block(w, data, c))
            .collect();
        let n = data.len() as f64;
        let loss: f64 = parts.iter().map(|p| p.0).sum();
        let correct: usize = parts.iter().map(|p| p.1).sum();
        (loss / n, correct as f64 / n)
    }

    pub fn accuracy(&self, w: &[f64], data: &Dataset) -> f64 {
        self.evaluate(w, data).1
    }

    /// Clipped gradient sum of one block via per-layer outer-product norms:
    /// the per-example squared norm of layer `l` is `‖δ_l‖²(‖a_{l−1}‖² + 1)`.
    fn block_gradient_sum(
        &self,
        w: &[f64],
        data: &Dataset,
        indices: &[usize],
        clip: Option<f64>,
    ) -> Vec<f64> {
        let labels = data.labels().expect("classification data has labels");
        let f = self.forward(w, self.input_matrix(data, indices));
        let layers = self.layers();
        let b = indices.len();

        let mut delta = f.acts[layers].clone();
        for (r, mut row) in delta.axis_iter_mut(Axis(0)).enumerate() {
            let lsm = log_softmax_row(row.as_slice().expect("contiguous"));
            for (k, v) in row.iter_mut().enumerate() {
                *v = lsm[k].exp();
            }
            row[labels[indices[r]]] -= 1.0;
        }
        let mut deltas: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); layers];
        for l in (0..layers).rev() {
            if l > 0 {
                let mut prev = delta.dot(&self.weights(w, l));
                prev.zip_mut_with(&f.acts[l], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                deltas[l] = std::mem::replace(&mut delta, prev);
            } else {
                deltas[0] = std::mem::replace(&mut delta, Array2::zeros((0, 0)));
            }
        }

        let scale: Array1<f64> = match clip {
            None => Array1::ones(b),
            Some(c) => {
                let mut sq = Array1::<f64>::zeros(b);
                for (d, a) in deltas.iter().zip(&f.acts) {
                    let d2 = d.map_axis(Axis(1), |r| r.dot(&r));
                    let a2 = a.map_axis(Axis(1), |r| r.dot(&r));
                    sq += &(&d2 * &(a2 + 1.0));
                }
                sq.mapv(|s| {
                    let n = s.sqrt();
                    if n > c {
                        c / n
                    } else {
                        1.0
                    }
                })
            }
        };

        let mut out = vec![0.0; self.dimension];
        let col = scale.insert_axis(Axis(1));
        for (l, d) in deltas.iter().enumerate() {
            let scaled = d * &col;
            let gw = scaled.t().dot(&f.acts[l]);
            let gb = scaled.sum_axis(Axis(0));
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            for (dst, src) in out[off..off + o * i].iter_mut().zip(gw.iter()) {
                *dst = *src;
            }
            out[off + o * i..off + o * i + o].copy_from_slice(gb.as_slice().expect("contiguous"));
        }
        out
    }
}

impl LossModel for Mlp {
    fn name(&self) -> &str {
        "mlp"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn loss(&self, w: &[f64], z: Example<'_>) -> f64 {
        let x = Array2::from_shape_vec((1, z.x.len()), z.x.to_vec()).expect("row");
        let f = self.forward(w, x);
        let logits = f.acts.last().unwrap();
        -log_softmax_row(logits.as_slice().expect("contiguous"))[z.y.expect("label")]
    }

    fn gradient_into(&self, w: &[f64], z: Example<'_>, out: &mut [f64]) {
        let x = Array2::from_shape_vec((1, z.x.len()), z.x.to_vec()).expect("row");
        let data = Dataset::new(
            z.x.len(),
            x.into_raw_vec_and_offset().0,
            Some(vec![z.y.expect("label")]),
            super::Provenance::Generated {
                model: "single".into(),
                seed: 0,
                params: Vec::new(),
            },
        )
        .expect("one row");
        out.copy_from_slice(&self.block_gradient_sum(w, &data, &[0], None));
    }

    fn gradient_sum(
        &self,
        w: &[f64],
        data: &Dataset,
        indices: &[usize],
        clip: Option<f64>,
    ) -> Vec<f64> {
        let parts: Vec<Vec<f64>> = indices
            .par_chunks(REDUCTION_CHUNK)
            .map(|c| self.block_gradient_sum(w, data, c, clip))
            .collect();
        tree_sum(parts, self.dimension)
    }

    fn mean_loss(&self, w: &[f64], data: &Dataset) -> f64 {
        self.evaluate(w, data).0
    }

    fn sample(&self, n: usize, rng: &mut StreamRng) -> Option<Dataset> {
        let g = self.generator.as_ref()?;
        (n > 0).then(|| g.generate(n, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{clip_in_place, per_example_gradient_sum};
    use crate::rng::SeedTree;

    fn tiny() -> (Mlp, Dataset, Vec<f64>) {
        let task = PrototypeTask::new(6, 3, 2, 2.0, 1.0, 0.5, 1).unwrap();
        let mlp = Mlp::new(vec![6, 5, 4, 3])
            .unwrap()
            .with_generator(task.clone())
            .unwrap();
        let data = task.generate(100, &mut SeedTree::new(1).stream("d", 0));
        let w = mlp.init(&mut SeedTree::new(1).stream("init", 0));
        (mlp, data, w)
    }

    #[test]
    fn layout() {
        let m = Mlp::new(vec![784, 128, 128, 10]).unwrap();
        assert_eq!(
            m.dimension(),
            784 * 128 + 128 + 128 * 128 + 128 + 128 * 10 + 10
        );
        assert!(Mlp::new(vec![3]).is_err());
        assert!(Mlp::new(vec![3, 1]).is_err());
    }

    #[test]
    fn init_is_glorot_with_zero_bias() {
        let m = Mlp::new(vec![10, 6, 2]).unwrap();
        let w = m.init(&mut SeedTree::new(0).stream("init", 0));
        let a0 = (6.0f64 / 16.0).sqrt();
        assert!(w[..60].iter().all(|v| v.abs() <= a0));
        assert!(w[60..66].iter().all(|&v| v == 0.0));
        assert!(w[78..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batched_sum_matches_per_example_reference() {
        let (mlp, data, w) = tiny();
        let idx: Vec<usize> = (0..100).collect();
        for clip in [None, Some(0.3)] {
            let fast = mlp.gradient_sum(&w, &data, &idx, clip);
            let slow = per_example_gradient_sum(&mlp, &w, &data, &idx, clip);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn ghost_clip_matches_explicit_clip() {
        let (mlp, data, w) = tiny();
        for i in 0..10 {
            let mut g = mlp.gradient(&w, data.example(i));
            clip_in_place(&mut g, 0.05);
            let ghost = mlp.gradient_sum(&w, &data, &[i], Some(0.05));
            for (a, b) in ghost.iter().zip(&g) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn evaluate_agrees_with_per_example_loss() {
        let (mlp, data, w) = tiny();
        let (loss, acc) = mlp.evaluate(&w, &data);
        let direct: f64 = (0..data.len())
            .map(|i| mlp.loss(&w, data.example(i)))
            .sum::<f64>()
            / 100.0;
        assert!((loss - direct).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&acc));
    }
}
