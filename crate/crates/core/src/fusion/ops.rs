//! Pooling, concatenation and co-occurrence primitives.
//!
//! A depth stack is a `Matrix` with one row per depth.

use crate::linalg::{dot, Matrix};

/// Elementwise mean over the depth axis.
pub fn avg_pool(stack: &Matrix) -> Vec<f64> {
    assert!(stack.rows() >= 1, "empty stack");
    let mut out = vec![0.0; stack.cols()];
    for row in stack.iter_rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let n = stack.rows() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Elementwise maximum over the depth axis.
pub fn max_pool(stack: &Matrix) -> Vec<f64> {
    assert!(stack.rows() >= 1, "empty stack");
    let mut out = stack.row(0).to_vec();
    for row in stack.iter_rows().skip(1) {
        for (o, &v) in out.iter_mut().zip(row) {
            if v > *o {
                *o = v;
            }
        }
    }
    out
}

pub fn concat<P: AsRef<[f64]>>(parts: &[P]) -> Vec<f64> {
    assert!(!parts.is_empty(), "nothing to concatenate");
    let len = parts.iter().map(|p| p.as_ref().len()).sum();
    let mut out = Vec::with_capacity(len);
    for p in parts {
        out.extend_from_slice(p.as_ref());
    }
    out
}

/// `PN(x; σ) = tanh(2σx)`: odd, strictly increasing, bounded in (−1, 1).
#[inline]
pub fn pn(x: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    (2.0 * sigma * x).tanh()
}

/// d/dx of [`pn`].
#[inline]
pub fn pn_derivative(x: f64, sigma: f64) -> f64 {
    let t = (2.0 * sigma * x).tanh();
    2.0 * sigma * (1.0 - t * t)
}

pub fn power_normalize(xs: &[f64], sigma: f64) -> Vec<f64> {
    xs.iter().map(|&x| pn(x, sigma)).collect()
}

/// Gram matrix `X·Xᵀ` flattened row by row (`H'×H'` entries).
pub fn gram(x: &Matrix) -> Vec<f64> {
    let h = x.rows();
    let mut g = vec![0.0; h * h];
    for i in 0..h {
        for j in i..h {
            let v = dot(x.row(i), x.row(j));
            g[i * h + j] = v;
            g[j * h + i] = v;
        }
    }
    g
}

/// Co-occurrence pooling: power-normalized, row-concatenated `X·Xᵀ`.
pub fn cooccurrence(x: &Matrix, sigma: f64) -> Vec<f64> {
    let mut g = gram(x);
    g.iter_mut().for_each(|v| *v = pn(*v, sigma));
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_and_max_small_cases() {
        let s = Matrix::from_rows(&[[1.0, 3.0], [3.0, 5.0]]);
        assert_eq!(avg_pool(&s), vec![2.0, 4.0]);
        assert_eq!(max_pool(&s), vec![3.0, 5.0]);

        let one = Matrix::from_rows(&[[0.25, -7.0, 1e9]]);
        assert_eq!(avg_pool(&one), one.row(0));
        assert_eq!(max_pool(&one), one.row(0));

        let same = Matrix::from_rows(&[[-1.0, 2.0], [-1.0, 2.0], [-1.0, 2.0]]);
        assert_eq!(max_pool(&same), vec![-1.0, 2.0]);
    }

    #[test]
    fn concat_orders_parts() {
        assert_eq!(concat(&[vec![1.0, 2.0], vec![3.0]]), vec![1.0, 2.0, 3.0]);
        assert_eq!(concat(&[vec![4.0, 5.0]]), vec![4.0, 5.0]);
        let lens = [5 * 4096, 1024, 1024];
        let parts: Vec<Vec<f64>> = lens.iter().map(|&n| vec![0.0; n]).collect();
        assert_eq!(concat(&parts).len(), 22528);
    }

    #[test]
    fn pn_values() {
        for sigma in [0.1, 0.3, 0.5, 2.0] {
            assert_eq!(pn(0.0, sigma), 0.0);
        }
        assert!((pn(1.0, 0.25) - 0.5f64.tanh()).abs() < 1e-15);
        assert!((pn(1.0, 0.25) - 0.462117).abs() < 1e-6);
    }

    #[test]
    fn pn_derivative_matches_central_difference() {
        for &x in &[-3.0, -0.2, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (pn(x + h, 0.3) - pn(x - h, 0.3)) / (2.0 * h);
            assert!((fd - pn_derivative(x, 0.3)).abs() < 1e-8);
        }
    }

    #[test]
    fn cooccurrence_of_identity() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        let c = cooccurrence(&x, 0.5);
        let t = 1f64.tanh();
        assert_eq!(c, vec![t, 0.0, 0.0, t]);
        assert!((t - 0.761594).abs() < 1e-6);
    }

    #[test]
    fn seven_row_stack_gives_49_entries() {
        let x = Matrix::zeros(7, 1024);
        assert_eq!(cooccurrence(&x, 0.3).len(), 49);
    }
}
