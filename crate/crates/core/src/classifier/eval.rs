use serde::{Deserialize, Serialize};

use super::head::{forward_logits, ClassifierParams};
use super::loss::{argmax, softmax};
use crate::error::{Error, Result};
use crate::fusion::{fuse, FuseInput, FusionStrategy, ProjectionParams};
use crate::store::DatasetBundle;

/// Rows fused at a time during evaluation.
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

/// Fraction of rows whose highest logit (lowest index on ties) is the label.
pub fn evaluate(
    head: &ClassifierParams,
    projections: &ProjectionParams,
    bundle: &DatasetBundle,
    strategy: &FusionStrategy,
) -> Result<f64> {
    if bundle.n_classes() != head.n_classes() {
        return Err(Error::Shape(format!(
            "model predicts {} classes but bundle has {}",
            head.n_classes(),
            bundle.n_classes()
        )));
    }
    let rows: Vec<usize> = (0..bundle.n_rows()).collect();
    let mut correct = 0usize;
    for chunk in rows.chunks(EVAL_CHUNK) {
        let input = FuseInput::from_bundle(bundle, chunk);
        let fused = fuse(&input, strategy, projections)?;
        let logits = forward_logits(head, &fused.vectors)?;
        correct += chunk
            .iter()
            .zip(logits.iter_rows())
            .filter(|(&r, l)| argmax(l) == bundle.labels()[r])
            .count();
    }
    Ok(correct as f64 / bundle.n_rows() as f64)
}

pub fn predict(
    head: &ClassifierParams,
    projections: &ProjectionParams,
    input: &FuseInput,
    strategy: &FusionStrategy,
) -> Result<Vec<Prediction>> {
    let fused = fuse(input, strategy, projections)?;
    let logits = forward_logits(head, &fused.vectors)?;
    Ok(logits
        .iter_rows()
        .map(|l| Prediction {
            class: argmax(l),
            probabilities: softmax(l),
        })
        .collect())
}

/// [`predict`] over every row of a bundle, in chunks.
pub fn predict_bundle(
    head: &ClassifierParams,
    projections: &ProjectionParams,
    bundle: &DatasetBundle,
    strategy: &FusionStrategy,
) -> Result<Vec<Prediction>> {
    let rows: Vec<usize> = (0..bundle.n_rows()).collect();
    let mut out = Vec::with_capacity(rows.len());
    for chunk in rows.chunks(EVAL_CHUNK) {
        let input = FuseInput::from_bundle(bundle, chunk);
        out.extend(predict(head, projections, &input, strategy)?);
    }
    Ok(out)
}
