//! Gaussian class-cluster embeddings standing in for backbone outputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bundle::{DatasetBundle, Split};
use super::format::{validate_source_name, EmbeddingMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub name: String,
    pub depths: usize,
    pub dim: usize,
}

impl SyntheticSource {
    pub fn new(name: &str, depths: usize, dim: usize) -> Self {
        SyntheticSource {
            name: name.to_owned(),
            depths,
            dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub n_test_rows: usize,
    pub n_classes: usize,
    pub sources: Vec<SyntheticSource>,
    /// Distance between any two class means within one depth vector.
    pub separation: f64,
    /// Standard deviation of the isotropic per-coordinate noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_rows: 2000,
            n_test_rows: 500,
            n_classes: 4,
            sources: vec![
                SyntheticSource::new("llama2", 5, 32),
                SyntheticSource::new("bert", 1, 16),
                SyntheticSource::new("roberta", 1, 16),
            ],
            separation: 10.0,
            noise: 0.1,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Validation(format!(
                "n_classes must be at least 2, got {}",
                self.n_classes
            )));
        }
        if self.n_rows < self.n_classes {
            return Err(Error::Validation(format!(
                "{} train rows cannot cover {} classes",
                self.n_rows, self.n_classes
            )));
        }
        if self.n_test_rows == 0 {
            return Err(Error::Validation("n_test_rows must be at least 1".into()));
        }
        if self.sources.is_empty() {
            return Err(Error::Validation("at least one source is required".into()));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::Validation(format!(
                "separation must be positive, got {}",
                self.separation
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Validation(format!(
                "noise must be non-negative, got {}",
                self.noise
            )));
        }
        for s in &self.sources {
            validate_source_name(&s.name)?;
            if s.depths == 0 || s.dim == 0 {
                return Err(Error::Validation(format!(
                    "source `{}` needs depths and dim of at least 1",
                    s.name
                )));
            }
            // one axis per class
            if s.dim < self.n_classes {
                return Err(Error::Validation(format!(
                    "source `{}` has dim {} but {} classes need at least that many axes",
                    s.name, s.dim, self.n_classes
                )));
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.n_classes).map(|c| format!("class_{c}")).collect()
    }

    /// Mean of class `class` in every depth vector of a `dim`-wide source:
    /// `separation / sqrt(2)` along axis `class`, zero elsewhere, so any two
    /// means are exactly `separation` apart.
    pub fn class_mean(&self, dim: usize, class: usize) -> Vec<f64> {
        let mut m = vec![0.0; dim];
        m[class] = self.separation / std::f64::consts::SQRT_2;
        m
    }
}

/// Returns `(train, test)`; a pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(DatasetBundle, DatasetBundle)> {
    spec.validate()?;
    let train = generate_split(spec, Split::Train, spec.n_rows)?;
    let test = generate_split(spec, Split::Test, spec.n_test_rows)?;
    Ok((train, test))
}

fn generate_split(spec: &SyntheticSpec, split: Split, n_rows: usize) -> Result<DatasetBundle> {
    let labels: Vec<usize> = (0..n_rows).map(|i| i % spec.n_classes).collect();
    let split_id: u64 = match split {
        Split::Train => 0,
        Split::Test => 1,
    };
    let means: Vec<Vec<Vec<f64>>> = spec
        .sources
        .iter()
        .map(|s| {
            (0..spec.n_classes)
                .map(|c| spec.class_mean(s.dim, c))
                .collect()
        })
        .collect();

    let mut sources = Vec::with_capacity(spec.sources.len());
    for (si, src) in spec.sources.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream((split_id << 32) | si as u64);
        let mut data = Vec::with_capacity(n_rows * src.depths * src.dim);
        for &label in &labels {
            let mean = &means[si][label];
            for _ in 0..src.depths {
                for &mu in mean {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push((mu + spec.noise * z) as f32);
                }
            }
        }
        sources.push(EmbeddingMatrix::new(
            src.name.clone(),
            n_rows,
            src.depths,
            src.dim,
            data,
        )?);
    }
    DatasetBundle::new(sources, labels, spec.class_names(), split)
}
