//! Dispatch over the fusion recipes, forward and backward.

use super::ops::{avg_pool, concat, gram, max_pool, pn, pn_derivative};
use super::projection::{ProjectionGrads, ProjectionParams};
use super::strategy::{FusionStrategy, LlmPart, SourceShape, LLM_SOURCE};
use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};
use crate::store::DatasetBundle;

/// One source's depth stacks for a batch of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBatch {
    pub name: String,
    /// One `depths × dim` stack per row.
    pub stacks: Vec<Matrix>,
}

/// Per-source stacks for a batch of rows, in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FuseInput {
    sources: Vec<SourceBatch>,
    batch_size: usize,
}

impl FuseInput {
    pub fn new(sources: Vec<SourceBatch>) -> Result<Self> {
        let batch_size = sources.first().map_or(0, |s| s.stacks.len());
        for s in &sources {
            if s.stacks.len() != batch_size {
                return Err(Error::Shape(format!(
                    "source `{}` has {} rows in a batch of {batch_size}",
                    s.name,
                    s.stacks.len()
                )));
            }
            if let Some(first) = s.stacks.first() {
                if s.stacks
                    .iter()
                    .any(|m| m.rows() != first.rows() || m.cols() != first.cols())
                {
                    return Err(Error::Shape(format!(
                        "source `{}` has rows of differing shape",
                        s.name
                    )));
                }
            }
        }
        Ok(FuseInput {
            sources,
            batch_size,
        })
    }

    /// Gathers `rows` of every source in `bundle`, widening to `f64` and
    /// applying the bundle's L2 normalization flag.
    pub fn from_bundle(bundle: &DatasetBundle, rows: &[usize]) -> Self {
        let sources = bundle
            .sources()
            .iter()
            .map(|m| SourceBatch {
                name: m.source_name().to_owned(),
                stacks: rows
                    .iter()
                    .map(|&r| {
                        let mut stack = Matrix::from_vec(
                            m.n_depths(),
                            m.dim(),
                            m.row(r).iter().map(|&v| v as f64).collect(),
                        )
                        .expect("matrix invariants hold");
                        if bundle.l2_normalize() {
                            for d in 0..stack.rows() {
                                l2_normalize(stack.row_mut(d));
                            }
                        }
                        stack
                    })
                    .collect(),
            })
            .collect();
        FuseInput {
            sources,
            batch_size: rows.len(),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn sources(&self) -> &[SourceBatch] {
        &self.sources
    }

    pub fn source(&self, name: &str) -> Option<&SourceBatch> {
        self.sources.iter().find(|s| s.name == name)
    }

    pub fn shapes(&self) -> Vec<SourceShape> {
        self.sources
            .iter()
            .filter_map(|s| {
                s.stacks
                    .first()
                    .map(|m| SourceShape::new(&s.name, m.rows(), m.cols()))
            })
            .collect()
    }

    /// Row subset, keeping every source.
    pub fn select(&self, rows: std::ops::Range<usize>) -> FuseInput {
        FuseInput {
            sources: self
                .sources
                .iter()
                .map(|s| SourceBatch {
                    name: s.name.clone(),
                    stacks: s.stacks[rows.clone()].to_vec(),
                })
                .collect(),
            batch_size: rows.len(),
        }
    }
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Intermediates kept for [`fuse_backward`].
#[derive(Debug, Clone)]
struct CoCache {
    params_version: u64,
    llm_depths: usize,
    /// Unprojected LLM stacks per row.
    llm_stacks: Vec<Matrix>,
    /// Stacked, dimension-aligned `X` per row.
    stacked: Vec<Matrix>,
    /// Row-concatenated `X·Xᵀ` per row, before normalization.
    grams: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct FusedBatch {
    pub vectors: Matrix,
    pub strategy: FusionStrategy,
    cache: Option<CoCache>,
}

impl FusedBatch {
    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    /// Drops the backward cache.
    pub fn into_vectors(self) -> Matrix {
        self.vectors
    }
}

/// Applies `strategy` to every row of `input`.
pub fn fuse(
    input: &FuseInput,
    strategy: &FusionStrategy,
    params: &ProjectionParams,
) -> Result<FusedBatch> {
    let shapes = input.shapes();
    let width = strategy.fused_dim(&shapes)?;
    let recipe = strategy.recipe();
    let llm = input.source(LLM_SOURCE).expect("checked by fused_dim");
    let encoders: Vec<&SourceBatch> = recipe
        .encoders
        .iter()
        .map(|n| input.source(n).expect("checked by fused_dim"))
        .collect();

    let b = input.batch_size();
    let mut vectors = Matrix::zeros(b, width);

    if !recipe.is_cooccurrence() {
        for row in 0..b {
            let stack = &llm.stacks[row];
            let head = match recipe.llm {
                LlmPart::First => stack.row(0).to_vec(),
                LlmPart::Avg => avg_pool(stack),
                LlmPart::Max => max_pool(stack),
                LlmPart::Cat => stack.as_slice().to_vec(),
                LlmPart::Co | LlmPart::CoAvg => unreachable!(),
            };
            let mut parts: Vec<&[f64]> = vec![&head];
            parts.extend(encoders.iter().map(|e| e.stacks[row].row(0)));
            vectors.row_mut(row).copy_from_slice(&concat(&parts));
        }
        return Ok(FusedBatch {
            vectors,
            strategy: *strategy,
            cache: None,
        });
    }

    let proj = params.get(LLM_SOURCE).ok_or_else(|| {
        Error::Shape(format!(
            "strategy {} needs a `{LLM_SOURCE}` projection",
            strategy.index()
        ))
    })?;
    let llm_dim = llm.stacks.first().map_or(0, |m| m.cols());
    if proj.in_dim() != llm_dim || proj.out_dim() != strategy.projection_dim {
        return Err(Error::Shape(format!(
            "projection is {}x{} but strategy needs {llm_dim}x{}",
            proj.in_dim(),
            proj.out_dim(),
            strategy.projection_dim
        )));
    }

    let mut cache = CoCache {
        params_version: params.version(),
        llm_depths: llm.stacks.first().map_or(0, |m| m.rows()),
        llm_stacks: Vec::with_capacity(b),
        stacked: Vec::with_capacity(b),
        grams: Vec::with_capacity(b),
    };
    for row in 0..b {
        let llm_stack = &llm.stacks[row];
        let projected = proj.apply(llm_stack);
        let mut rows: Vec<&[f64]> = projected.iter_rows().collect();
        rows.extend(encoders.iter().map(|e| e.stacks[row].row(0)));
        let x = Matrix::from_rows(&rows);
        let g = gram(&x);
        let out = vectors.row_mut(row);
        for (o, &v) in out.iter_mut().zip(&g) {
            *o = pn(v, strategy.sigma);
        }
        if recipe.llm == LlmPart::CoAvg {
            out[g.len()..].copy_from_slice(&avg_pool(llm_stack));
        }
        cache.llm_stacks.push(llm_stack.clone());
        cache.stacked.push(x);
        cache.grams.push(g);
    }
    Ok(FusedBatch {
        vectors,
        strategy: *strategy,
        cache: Some(cache),
    })
}

/// Gradients of the loss with respect to the alignment projections, given
/// `upstream = dL/dψ` for every fused row.
pub fn fuse_backward(
    batch: &FusedBatch,
    upstream: &Matrix,
    params: &ProjectionParams,
) -> Result<ProjectionGrads> {
    if !batch.strategy.is_learnable() {
        return Ok(ProjectionParams::empty());
    }
    let cache = batch
        .cache
        .as_ref()
        .ok_or_else(|| Error::Cache("fused batch carries no intermediates".into()))?;
    if cache.params_version != params.version() {
        return Err(Error::Cache(format!(
            "projections changed since the forward pass (version {} vs {})",
            cache.params_version,
            params.version()
        )));
    }
    if upstream.rows() != batch.vectors.rows() || upstream.cols() != batch.vectors.cols() {
        return Err(Error::Shape(format!(
            "upstream gradient is {}x{} but fused batch is {}x{}",
            upstream.rows(),
            upstream.cols(),
            batch.vectors.rows(),
            batch.vectors.cols()
        )));
    }

    let sigma = batch.strategy.sigma;
    let mut grads = params.zeros_like();
    let g_proj = grads.get_mut(LLM_SOURCE).ok_or_else(|| {
        Error::Cache(format!("no `{LLM_SOURCE}` projection to differentiate"))
    })?;

    for (row, x) in cache.stacked.iter().enumerate() {
        let h = x.rows();
        let up = &upstream.row(row)[..h * h];
        let gram = &cache.grams[row];
        // dL/dG through the normalization
        let d_gram: Vec<f64> = up
            .iter()
            .zip(gram)
            .map(|(u, &g)| u * pn_derivative(g, sigma))
            .collect();
        // G = X·Xᵀ  ⇒  dL/dX_i = Σ_j (dG_ij + dG_ji) X_j; only projected rows matter
        let stack = &cache.llm_stacks[row];
        for i in 0..cache.llm_depths {
            let mut d_xi = vec![0.0; x.cols()];
            for j in 0..h {
                let coeff = d_gram[i * h + j] + d_gram[j * h + i];
                if coeff != 0.0 {
                    axpy(coeff, x.row(j), &mut d_xi);
                }
            }
            // p_i = φ_i·W + b
            for (k, &phi) in stack.row(i).iter().enumerate() {
                if phi != 0.0 {
                    axpy(phi, &d_xi, g_proj.weight.row_mut(k));
                }
            }
            axpy(1.0, &d_xi, &mut g_proj.bias);
        }
    }
    Ok(grads)
}
