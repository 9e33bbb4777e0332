use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Numerically stable softmax of one row of logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy of the true classes and its gradient
/// `(softmax − onehot) / B` with respect to the logits.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (b, c) = (logits.rows(), logits.cols());
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{} labels for {b} rows of logits",
            labels.len()
        )));
    }
    if b == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let mut grad = Matrix::zeros(b, c);
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(Error::LabelRange {
                row: r,
                label,
                n_classes: c,
            });
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&l| (l - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        total += log_z - row[label];
        let g = grad.row_mut(r);
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = (row[j] - log_z).exp() / b as f64;
        }
        g[label] -= 1.0 / b as f64;
    }
    Ok((total / b as f64, grad))
}
