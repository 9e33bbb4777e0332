//! Independent reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

use llmembed_core::classifier::{ModelParams, loss_and_gradients};
use llmembed_core::fusion::{FuseInput, FusionStrategy, SourceBatch, BERT_SOURCE, LLM_SOURCE, ROBERTA_SOURCE};
use llmembed_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

pub fn random_stack(rng: &mut impl Rng, h: usize, k: usize) -> Vec<Vec<f64>> {
    (0..h).map(|_| random_vec(rng, k)).collect()
}

pub fn naive_avg(stack: &[Vec<f64>]) -> Vec<f64> {
    let k = stack[0].len();
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let mut s = 0.0;
        for row in stack {
            s += row[j];
        }
        out.push(s / stack.len() as f64);
    }
    out
}

pub fn naive_max(stack: &[Vec<f64>]) -> Vec<f64> {
    let k = stack[0].len();
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let mut m = f64::NEG_INFINITY;
        for row in stack {
            if row[j] > m {
                m = row[j];
            }
        }
        out.push(m);
    }
    out
}

pub fn naive_concat(parts: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for p in parts {
        for &v in p {
            out.push(v);
        }
    }
    out
}

/// Logistic form `(1 − e^{−a})/(1 + e^{−a})` with `a = 4σx`, which equals
/// `tanh(2σx)`.
pub fn pn_logistic(x: f64, sigma: f64) -> f64 {
    let a = 4.0 * sigma * x;
    if a >= 0.0 {
        let e = (-a).exp();
        (1.0 - e) / (1.0 + e)
    } else {
        let e = a.exp();
        (e - 1.0) / (e + 1.0)
    }
}

/// Triple-loop Gram, row-concatenated, then scalar normalization.
pub fn naive_cooccurrence(x: &[Vec<f64>], sigma: f64) -> Vec<f64> {
    let h = x.len();
    let mut out = Vec::with_capacity(h * h);
    for i in 0..h {
        for j in 0..h {
            let mut s = 0.0;
            for k in 0..x[i].len() {
                s += x[i][k] * x[j][k];
            }
            out.push(pn_logistic(s, sigma));
        }
    }
    out
}

/// `x · Wᵀ + b` by explicit loops.
pub fn naive_affine(x: &[Vec<f64>], w: &[Vec<f64>], b: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            w.iter()
                .zip(b)
                .map(|(wr, bias)| {
                    let mut s = *bias;
                    for k in 0..row.len() {
                        s += wr[k] * row[k];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Random three-source batch: `llama2` `h×k_llm`, encoders `1×k_enc`.
pub fn random_input(rng: &mut impl Rng, b: usize, h: usize, k_llm: usize, k_enc: usize) -> FuseInput {
    let mut make = |name: &str, depths: usize, dim: usize| SourceBatch {
        name: name.to_owned(),
        stacks: (0..b)
            .map(|_| Matrix::from_vec(depths, dim, random_vec(rng, depths * dim)).unwrap())
            .collect(),
    };
    let sources = vec![
        make(LLM_SOURCE, h, k_llm),
        make(BERT_SOURCE, 1, k_enc),
        make(ROBERTA_SOURCE, 1, k_enc),
    ];
    FuseInput::new(sources).unwrap()
}

/// Randomizes every learnable value of `model` (the default head starts at zero).
pub fn perturb(model: &mut ModelParams, rng: &mut impl Rng, scale: f64) {
    for s in model.head.slices_mut() {
        for v in s.iter_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
    for s in model.projections.slices_mut() {
        for v in s.iter_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

pub fn flatten(slices: Vec<&[f64]>) -> Vec<f64> {
    slices.into_iter().flatten().copied().collect()
}

/// Central finite differences of the mean loss with respect to every
/// learnable value, visiting head parameters first, then projections.
pub fn finite_difference_gradient(
    model: &ModelParams,
    strategy: &FusionStrategy,
    input: &FuseInput,
    labels: &[usize],
    h: f64,
) -> Vec<f64> {
    let loss = |m: &ModelParams| loss_and_gradients(m, strategy, input, labels).unwrap().0;
    let mut out = Vec::new();
    let n_head = model.head.slices().len();
    let n_proj = model.projections.slices().len();
    for si in 0..n_head + n_proj {
        let len = if si < n_head {
            model.head.slices()[si].len()
        } else {
            model.projections.slices()[si - n_head].len()
        };
        for i in 0..len {
            let mut plus = model.clone();
            let mut minus = model.clone();
            {
                let set = |m: &mut ModelParams, d: f64| {
                    if si < n_head {
                        m.head.slices_mut()[si][i] += d;
                    } else {
                        m.projections.slices_mut()[si - n_head][i] += d;
                    }
                };
                set(&mut plus, h);
                set(&mut minus, -h);
            }
            out.push((loss(&plus) - loss(&minus)) / (2.0 * h));
        }
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}
