use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation value.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Validation(format!(
                "unknown activation `{other}` (expected relu or tanh)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenSpec {
    pub width: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    /// `width × input_dim`
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Classifier head: an affine map to class logits, optionally preceded by
/// one hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub hidden: Option<HiddenLayer>,
    /// `n_classes × (hidden width or input_dim)`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

pub type ClassifierGrads = ClassifierParams;

impl ClassifierParams {
    /// Zero output layer; a hidden layer, if any, gets uniform weights in
    /// `±1/sqrt(input_dim)` and zero bias.
    pub fn init<R: Rng>(
        input_dim: usize,
        n_classes: usize,
        hidden: Option<HiddenSpec>,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || n_classes < 2 {
            return Err(Error::Validation(format!(
                "classifier needs input_dim >= 1 and >= 2 classes (got {input_dim}, {n_classes})"
            )));
        }
        let hidden = match hidden {
            None => None,
            Some(spec) => {
                if spec.width == 0 {
                    return Err(Error::Validation("hidden width must be at least 1".into()));
                }
                let scale = 1.0 / (input_dim as f64).sqrt();
                let w = (0..spec.width * input_dim)
                    .map(|_| rng.gen_range(-scale..scale))
                    .collect();
                Some(HiddenLayer {
                    weight: Matrix::from_vec(spec.width, input_dim, w)?,
                    bias: vec![0.0; spec.width],
                    activation: spec.activation,
                })
            }
        };
        let out_in = hidden.as_ref().map_or(input_dim, |h| h.weight.rows());
        Ok(ClassifierParams {
            hidden,
            weight: Matrix::zeros(n_classes, out_in),
            bias: vec![0.0; n_classes],
        })
    }

    pub fn input_dim(&self) -> usize {
        match &self.hidden {
            Some(h) => h.weight.cols(),
            None => self.weight.cols(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn hidden_spec(&self) -> Option<HiddenSpec> {
        self.hidden.as_ref().map(|h| HiddenSpec {
            width: h.weight.rows(),
            activation: h.activation,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ClassifierParams {
            hidden: self.hidden.as_ref().map(|h| HiddenLayer {
                weight: Matrix::zeros(h.weight.rows(), h.weight.cols()),
                bias: vec![0.0; h.bias.len()],
                activation: h.activation,
            }),
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::with_capacity(4);
        if let Some(h) = &self.hidden {
            v.push(h.weight.as_slice());
            v.push(&h.bias);
        }
        v.push(self.weight.as_slice());
        v.push(&self.bias);
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::with_capacity(4);
        if let Some(h) = &mut self.hidden {
            v.push(h.weight.as_mut_slice());
            v.push(&mut h.bias);
        }
        v.push(self.weight.as_mut_slice());
        v.push(&mut self.bias);
        v
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ClassifierParams) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            axpy(1.0, b, a);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "classifier expects {}-wide inputs, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        Ok(())
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct HeadCache {
    pre_activation: Option<Matrix>,
    hidden_out: Option<Matrix>,
}

fn affine(x: &Matrix, weight: &Matrix, bias: &[f64]) -> Matrix {
    let mut out = x.matmul_t(weight);
    for r in 0..out.rows() {
        axpy(1.0, bias, out.row_mut(r));
    }
    out
}

/// `B × C` logits for `B` fused rows.
pub fn forward_logits(params: &ClassifierParams, fused: &Matrix) -> Result<Matrix> {
    forward_with_cache(params, fused).map(|(l, _)| l)
}

pub fn forward_with_cache(params: &ClassifierParams, x: &Matrix) -> Result<(Matrix, HeadCache)> {
    params.check_input(x)?;
    match &params.hidden {
        None => Ok((
            affine(x, &params.weight, &params.bias),
            HeadCache {
                pre_activation: None,
                hidden_out: None,
            },
        )),
        Some(h) => {
            let pre = affine(x, &h.weight, &h.bias);
            let mut act = pre.clone();
            act.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = h.activation.apply(*v));
            let logits = affine(&act, &params.weight, &params.bias);
            Ok((
                logits,
                HeadCache {
                    pre_activation: Some(pre),
                    hidden_out: Some(act),
                },
            ))
        }
    }
}

/// Gradients of the head's parameters and of its input, given `dL/dlogits`.
pub fn backward(
    params: &ClassifierParams,
    cache: &HeadCache,
    x: &Matrix,
    grad_logits: &Matrix,
) -> Result<(ClassifierGrads, Matrix)> {
    params.check_input(x)?;
    if grad_logits.rows() != x.rows() || grad_logits.cols() != params.n_classes() {
        return Err(Error::Shape(format!(
            "logit gradient is {}x{}, expected {}x{}",
            grad_logits.rows(),
            grad_logits.cols(),
            x.rows(),
            params.n_classes()
        )));
    }
    let mut grads = params.zeros_like();
    let out_input = cache.hidden_out.as_ref().unwrap_or(x);
    grads.weight = grad_logits.t_matmul(out_input);
    for r in 0..grad_logits.rows() {
        axpy(1.0, grad_logits.row(r), &mut grads.bias);
    }
    let d_out_input = grad_logits.matmul(&params.weight);

    match (&params.hidden, &cache.pre_activation) {
        (None, _) => Ok((grads, d_out_input)),
        (Some(h), Some(pre)) => {
            let mut d_pre = d_out_input;
            for (d, &p) in d_pre.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                *d *= h.activation.derivative(p);
            }
            let gh = grads.hidden.as_mut().expect("zeros_like mirrors layout");
            gh.weight = d_pre.t_matmul(x);
            for r in 0..d_pre.rows() {
                axpy(1.0, d_pre.row(r), &mut gh.bias);
            }
            Ok((grads, d_pre.matmul(&h.weight)))
        }
        (Some(_), None) => Err(Error::Cache("hidden activations missing".into())),
    }
}
