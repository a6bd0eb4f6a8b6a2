use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{SeedTree, StreamRng};

/// Where a dataset came from: distribution parameters or a file source.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Generated {
        model: String,
        seed: u64,
        params: Vec<(String, String)>,
    },
    File {
        images: String,
        labels: String,
    },
    Subset {
        parent: Box<Provenance>,
        size: usize,
    },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Generated {
                model,
                seed,
                params,
            } => {
                write!(f, "{model}(seed={seed}")?;
                for (k, v) in params {
                    write!(f, ", {k}={v}")?;
                }
                write!(f, ")")
            }
            Provenance::File { images, labels } => write!(f, "idx({images}, {labels})"),
            Provenance::Subset { parent, size } => write!(f, "{parent}[..{size}]"),
        }
    }
}

/// A borrowed example: feature vector and optional class label.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub x: &'a [f64],
    pub y: Option<usize>,
}

/// `n ≥ 1` examples stored row-major.
#[derive(Debug, Clone)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Option<Vec<usize>>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        dim: usize,
        features: Vec<f64>,
        labels: Option<Vec<usize>>,
        provenance: Provenance,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be ≥ 1"));
        }
        if features.is_empty() || !features.len().is_multiple_of(dim) {
            return Err(Error::invalid(
                "features",
                format!(
                    "length {} is not a positive multiple of {dim}",
                    features.len()
                ),
            ));
        }
        let n = features.len() / dim;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: l.len(),
                });
            }
        }
        Ok(Self {
            dim,
            features,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        Example {
            x: self.row(i),
            y: self.labels.as_ref().map(|l| l[i]),
        }
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn mean_features(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (a, v) in m.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// The first `size` examples.
    pub fn head(&self, size: usize) -> Result<Dataset> {
        if size == 0 || size > self.len() {
            return Err(Error::invalid(
                "size",
                format!("must be in 1..={}, got {size}", self.len()),
            ));
        }
        Ok(Dataset {
            dim: self.dim,
            features: self.features[..size * self.dim].to_vec(),
            labels: self.labels.as_ref().map(|l| l[..size].to_vec()),
            provenance: Provenance::Subset {
                parent: Box::new(self.provenance.clone()),
                size,
            },
        })
    }

    pub(crate) fn features_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }
}

/// Per-coordinate Bernoulli means for the quadratic model.
#[derive(Debug, Clone, PartialEq)]
pub enum MuSpec {
    /// Each `μ_j` drawn from U[1/3, 2/3].
    Uniform,
    Constant(f64),
    List(Vec<f64>),
}

impl MuSpec {
    pub fn resolve(&self, p: usize, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let mu = match self {
            MuSpec::Uniform => (0..p)
                .map(|_| rng.random_range(1.0 / 3.0..2.0 / 3.0))
                .collect(),
            MuSpec::Constant(v) => vec![*v; p],
            MuSpec::List(v) => {
                if v.len() != p {
                    return Err(Error::Dimension {
                        expected: p,
                        got: v.len(),
                    });
                }
                v.clone()
            }
        };
        if let Some(bad) = mu.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(Error::invalid(
                "mu_spec",
                format!("mean {bad} outside [0, 1]"),
            ));
        }
        Ok(mu)
    }
}

impl FromStr for MuSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("uniform") {
            return Ok(MuSpec::Uniform);
        }
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid("mu_spec", format!("cannot parse `{t}`")))
        };
        if s.contains(',') {
            return s
                .split(',')
                .map(parse)
                .collect::<Result<Vec<_>>>()
                .map(MuSpec::List);
        }
        parse(s).map(MuSpec::Constant)
    }
}

impl fmt::Display for MuSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MuSpec::Uniform => write!(f, "uniform"),
            MuSpec::Constant(v) => write!(f, "{v}"),
            MuSpec::List(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

/// Synthetic multi-class task: each class is a prototype plus a random
/// low-rank deformation plus isotropic noise.
///
/// `x = separation·P_c + deformation·B_c u + noise·ξ` with `P_c`, the columns
/// of `B_c`, `u` and `ξ` all standard normal (`P_c`, `B_c` scaled by `1/√dim`
/// so the signal norms do not grow with `dim`).
#[derive(Debug, Clone)]
pub struct PrototypeTask {
    pub dim: usize,
    pub classes: usize,
    pub latent: usize,
    pub separation: f64,
    pub deformation: f64,
    pub noise: f64,
    seed: u64,
    prototypes: Vec<f64>,
    bases: Vec<f64>,
}

impl PrototypeTask {
    pub const DIM: usize = 784;
    pub const CLASSES: usize = 10;
    pub const LATENT: usize = 8;
    pub const SEPARATION: f64 = 6.5;
    pub const DEFORMATION: f64 = 2.0;
    pub const NOISE: f64 = 0.7;

    pub fn new(
        dim: usize,
        classes: usize,
        latent: usize,
        separation: f64,
        deformation: f64,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || classes < 2 {
            return Err(Error::invalid(
                "classes",
                "need dim ≥ 1 and at least 2 classes",
            ));
        }
        let tree = SeedTree::new(seed);
        let mut rng = tree.stream("prototype-task", 0);
        let s = 1.0 / (dim as f64).sqrt();
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| {
                    s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                })
                .collect()
        };
        let prototypes = draw(classes * dim);
        let bases = draw(classes * latent * dim);
        Ok(Self {
            dim,
            classes,
            latent,
            separation,
            deformation,
            noise,
            seed,
            prototypes,
            bases,
        })
    }

    /// The 784-dimensional, 10-class stand-in for digit images.
    pub fn digits_like(seed: u64) -> Self {
        Self::new(
            Self::DIM,
            Self::CLASSES,
            Self::LATENT,
            Self::SEPARATION,
            Self::DEFORMATION,
            Self::NOISE,
            seed,
        )
        .expect("valid constants")
    }

    /// Draws `n` labelled examples with balanced-in-expectation uniform labels.
    pub fn generate(&self, n: usize, rng: &mut StreamRng) -> Dataset {
        let d = self.dim;
        let mut features = vec![0.0; n * d];
        let mut labels = Vec::with_capacity(n);
        let mut u = vec![0.0; self.latent];
        for i in 0..n {
            let c = rng.random_range(0..self.classes);
            labels.push(c);
            for v in u.iter_mut() {
                *v = self.deformation
                    * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
            }
            let row = &mut features[i * d..(i + 1) * d];
            let proto = &self.prototypes[c * d..(c + 1) * d];
            for (j, x) in row.iter_mut().enumerate() {
                let e: f64 = StandardNormal.sample(rng);
                *x = self.separation * proto[j] + self.noise * e;
            }
            for (k, uk) in u.iter().enumerate() {
                let b = &self.bases[(c * self.latent + k) * d..(c * self.latent + k + 1) * d];
                for (x, bj) in row.iter_mut().zip(b) {
                    *x += uk * bj;
                }
            }
        }
        Dataset::new(
            d,
            features,
            Some(labels),
            Provenance::Generated {
                model: "prototype".into(),
                seed: self.seed,
                params: vec![
                    ("dim".into(), d.to_string()),
                    ("classes".into(), self.classes.to_string()),
                    ("latent".into(), self.latent.to_string()),
                    ("separation".into(), self.separation.to_string()),
                    ("deformation".into(), self.deformation.to_string()),
                    ("noise".into(), self.noise.to_string()),
                    ("n".into(), n.to_string()),
                ],
            },
        )
        .expect("n ≥ 1 rows of width dim")
    }
}
