use rand::Rng;

use super::strategy::{FusionStrategy, SourceShape, LLM_SOURCE};
use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};

/// Affine resize `p = φ·W + b` of one source's depth vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub source: String,
    /// `in_dim × out_dim`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Projection {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    /// Projects every row of `stack`.
    pub fn apply(&self, stack: &Matrix) -> Matrix {
        let mut out = stack.matmul(&self.weight);
        for r in 0..out.rows() {
            axpy(1.0, &self.bias, out.row_mut(r));
        }
        out
    }

    fn zeros_like(&self) -> Projection {
        Projection {
            source: self.source.clone(),
            weight: Matrix::zeros(self.in_dim(), self.out_dim()),
            bias: vec![0.0; self.out_dim()],
        }
    }
}

/// Learnable alignment projections. Empty for strategies without any.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProjectionParams {
    projections: Vec<Projection>,
    version: u64,
}

/// Gradients with the same layout as [`ProjectionParams`].
pub type ProjectionGrads = ProjectionParams;

impl ProjectionParams {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_projections(projections: Vec<Projection>) -> Self {
        ProjectionParams {
            projections,
            version: 0,
        }
    }

    /// Uniform weights in `±1/sqrt(in_dim)` and zero bias for every projected
    /// source of `strategy`.
    pub fn init<R: Rng>(
        strategy: &FusionStrategy,
        shapes: &[SourceShape],
        rng: &mut R,
    ) -> Result<Self> {
        if !strategy.is_learnable() {
            return Ok(Self::empty());
        }
        strategy.fused_dim(shapes)?;
        let llm = shapes
            .iter()
            .find(|s| s.name == LLM_SOURCE)
            .expect("checked by fused_dim");
        let scale = 1.0 / (llm.dim as f64).sqrt();
        let weight: Vec<f64> = (0..llm.dim * strategy.projection_dim)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        Ok(Self::from_projections(vec![Projection {
            source: LLM_SOURCE.to_owned(),
            weight: Matrix::from_vec(llm.dim, strategy.projection_dim, weight)?,
            bias: vec![0.0; strategy.projection_dim],
        }]))
    }

    pub fn projections(&self) -> &[Projection] {
        &self.projections
    }

    pub fn get(&self, source: &str) -> Option<&Projection> {
        self.projections.iter().find(|p| p.source == source)
    }

    pub(crate) fn get_mut(&mut self, source: &str) -> Option<&mut Projection> {
        self.projections.iter_mut().find(|p| p.source == source)
    }

    pub fn is_empty(&self) -> bool {
        self.projections.is_empty()
    }

    /// Incremented whenever parameters are modified through [`Self::slices_mut`].
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn zeros_like(&self) -> Self {
        ProjectionParams {
            projections: self.projections.iter().map(Projection::zeros_like).collect(),
            version: 0,
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.projections
            .iter()
            .flat_map(|p| [p.weight.as_slice(), &p.bias[..]])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.projections
            .iter_mut()
            .flat_map(|p| [p.weight.as_mut_slice(), &mut p.bias[..]])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ProjectionParams) -> Result<()> {
        if self.projections.len() != other.projections.len() {
            return Err(Error::Shape("projection sets differ".into()));
        }
        for (a, b) in self.projections.iter_mut().zip(&other.projections) {
            if a.source != b.source || a.weight.cols() != b.weight.cols() {
                return Err(Error::Shape(format!(
                    "projection `{}` does not match `{}`",
                    a.source, b.source
                )));
            }
            a.weight.add_assign(&b.weight);
            axpy(1.0, &b.bias, &mut a.bias);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_shapes_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = FusionStrategy::new(15).unwrap();
        let p = ProjectionParams::init(&s, &SourceShape::reference_set(), &mut rng).unwrap();
        let proj = p.get("llama2").unwrap();
        assert_eq!((proj.in_dim(), proj.out_dim()), (4096, 1024));
        assert!(proj.bias.iter().all(|&b| b == 0.0));
        let bound = 1.0 / 64.0;
        assert!(proj.weight.as_slice().iter().all(|w| w.abs() <= bound));

        let s2 = FusionStrategy::new(2).unwrap();
        assert!(ProjectionParams::init(&s2, &SourceShape::reference_set(), &mut rng)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn apply_is_affine() {
        let proj = Projection {
            source: "llama2".into(),
            weight: Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]),
            bias: vec![0.5, -0.5],
        };
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]);
        assert_eq!(proj.apply(&x).row(0), &[4.5, 6.5]);
    }

    #[test]
    fn mutation_bumps_version() {
        let mut p = ProjectionParams::from_projections(vec![Projection {
            source: "llama2".into(),
            weight: Matrix::zeros(2, 2),
            bias: vec![0.0; 2],
        }]);
        let v = p.version();
        p.slices_mut()[0][0] = 1.0;
        assert!(p.version() > v);
    }
}
