use rand::Rng;

use super::matrix::Matrix;
use crate::{Error, Result};

/// Hidden-layer nonlinearity. Only smooth functions are offered so that
/// finite-difference gradient checks stay clean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    /// `x · sigmoid(x)`
    Silu,
}

/// Activation used unless a config overrides it.
pub const DEFAULT_ACTIVATION: Activation = Activation::Tanh;

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Silu => z * sigmoid(z),
        }
    }

    /// Derivative at pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Silu => "silu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            "silu" => Some(Activation::Silu),
            _ => None,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The four parameter tensors of the MLP. Also used for gradients and the
/// momentum buffer, which share the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// Feature extractor, `d_in × d_h`.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// Classifier, `d_h × C`.
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl Weights {
    pub fn zeros(d_in: usize, d_h: usize, classes: usize) -> Self {
        Weights {
            w1: Matrix::zeros(d_in, d_h),
            b1: vec![0.0; d_h],
            w2: Matrix::zeros(d_h, classes),
            b2: vec![0.0; classes],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Weights::zeros(self.w1.rows(), self.w1.cols(), self.w2.cols())
    }

    pub fn same_shape(&self, other: &Weights) -> bool {
        self.w1.shape() == other.w1.shape()
            && self.b1.len() == other.b1.len()
            && self.w2.shape() == other.w2.shape()
            && self.b2.len() == other.b2.len()
    }

    pub fn len(&self) -> usize {
        self.w1.data().len() + self.b1.len() + self.w2.data().len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view in the fixed order `w1, b1, w2, b2`.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .data()
            .iter()
            .chain(&self.b1)
            .chain(self.w2.data())
            .chain(&self.b2)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .data_mut()
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.data_mut().iter_mut())
            .chain(self.b2.iter_mut())
    }

    /// Pairs each entry with whether it is a weight (as opposed to a bias).
    pub(crate) fn iter_mut_tagged(&mut self) -> impl Iterator<Item = (&mut f64, bool)> {
        self.w1
            .data_mut()
            .iter_mut()
            .map(|v| (v, true))
            .chain(self.b1.iter_mut().map(|v| (v, false)))
            .chain(self.w2.data_mut().iter_mut().map(|v| (v, true)))
            .chain(self.b2.iter_mut().map(|v| (v, false)))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// MLP parameters plus the momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub weights: Weights,
    pub velocity: Weights,
    pub activation: Activation,
}

impl ModelParams {
    pub fn zeros(d_in: usize, d_h: usize, classes: usize, activation: Activation) -> Self {
        let weights = Weights::zeros(d_in, d_h, classes);
        ModelParams {
            velocity: weights.zeros_like(),
            weights,
            activation,
        }
    }

    /// Glorot-uniform weights, zero biases, zero velocity.
    pub fn init<R: Rng + ?Sized>(
        d_in: usize,
        d_h: usize,
        classes: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut p = ModelParams::zeros(d_in, d_h, classes, activation);
        let a1 = (6.0 / (d_in + d_h) as f64).sqrt();
        for w in p.weights.w1.data_mut() {
            *w = rng.random_range(-a1..a1);
        }
        let a2 = (6.0 / (d_h + classes) as f64).sqrt();
        for w in p.weights.w2.data_mut() {
            *w = rng.random_range(-a2..a2);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.weights.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.weights.w1.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.w2.cols()
    }

    pub fn reset_velocity(&mut self) {
        self.velocity = self.weights.zeros_like();
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardRecord {
    /// `X·W1 + b1`, kept for the activation derivative.
    pub pre_activation: Matrix,
    /// Post-activation features, the vectors compared against centroids.
    pub hidden: Matrix,
    pub logits: Matrix,
    pub probs: Matrix,
    /// Row-wise log-softmax; finite even where `probs` underflows.
    pub log_probs: Matrix,
}

pub fn mlp_forward(params: &ModelParams, x: &Matrix) -> Result<ForwardRecord> {
    if x.cols() != params.input_dim() {
        return Err(Error::contract(format!(
            "input has {} columns, model expects {}",
            x.cols(),
            params.input_dim()
        )));
    }
    let w = &params.weights;
    let mut pre = x.matmul(&w.w1)?;
    pre.add_row_vector(&w.b1)?;
    let mut hidden = pre.clone();
    for v in hidden.data_mut() {
        *v = params.activation.apply(*v);
    }
    let mut logits = hidden.matmul(&w.w2)?;
    logits.add_row_vector(&w.b2)?;
    let (probs, log_probs) = softmax_rows(&logits);
    Ok(ForwardRecord {
        pre_activation: pre,
        hidden,
        logits,
        probs,
        log_probs,
    })
}

/// Row-wise softmax and log-softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> (Matrix, Matrix) {
    let mut probs = logits.clone();
    let mut logp = logits.clone();
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_sum = sum.ln();
        for ((p, lp), &z) in probs.row_mut(r).iter_mut().zip(logp.row_mut(r)).zip(row) {
            *p = (z - max).exp() / sum;
            *lp = z - max - log_sum;
        }
    }
    (probs, logp)
}

/// Gradients of a scalar loss with respect to all parameters, given the
/// loss's partials with respect to the logits and (directly) the hidden features.
pub fn mlp_backward(
    params: &ModelParams,
    x: &Matrix,
    rec: &ForwardRecord,
    d_logits: &Matrix,
    d_hidden: &Matrix,
) -> Result<Weights> {
    let b = x.rows();
    if d_logits.shape() != (b, params.num_classes()) || rec.logits.shape() != d_logits.shape() {
        return Err(Error::contract(format!(
            "dLogits shape {:?}, expected {:?}",
            d_logits.shape(),
            (b, params.num_classes())
        )));
    }
    if d_hidden.shape() != (b, params.hidden_dim()) || rec.hidden.shape() != d_hidden.shape() {
        return Err(Error::contract(format!(
            "dHidden shape {:?}, expected {:?}",
            d_hidden.shape(),
            (b, params.hidden_dim())
        )));
    }
    let w = &params.weights;
    let dw2 = rec.hidden.t_matmul(d_logits)?;
    let db2 = d_logits.col_sums();

    let mut dz1 = d_logits.matmul_t(&w.w2)?;
    for ((g, &direct), &z) in dz1
        .data_mut()
        .iter_mut()
        .zip(d_hidden.data())
        .zip(rec.pre_activation.data())
    {
        *g = (*g + direct) * params.activation.derivative(z);
    }
    let dw1 = x.t_matmul(&dz1)?;
    let db1 = dz1.col_sums();
    Ok(Weights {
        w1: dw1,
        b1: db1,
        w2: dw2,
        b2: db2,
    })
}
