//! Position-specific linear classification over the pooled representation,
//! cross-entropy, and class activation maps.
//!
//! For a pooled `K×d` representation `H̄`, class `c` scores
//! `s_c = ⟨H̄, W_c⟩ + b_c` where `W_c` holds one weight vector per position.
//! With `K = 1` this is an ordinary linear classifier on a global vector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ModelState};
use crate::numkit::{axpy, dot, glorot_uniform, Matrix, NumError, Rng};
use crate::tudata::Graph;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("representation has {got} values, classifier expects {expected}")]
    Shape { expected: usize, got: usize },
    #[error(transparent)]
    Num(#[from] NumError),
}

/// `C` weight matrices of shape `K×d`, stored as the rows of a
/// `C × (K·d)` matrix, plus one bias per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub positions: usize,
    pub dim: usize,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl ClassifierParams {
    pub fn init(rng: &mut Rng, classes: usize, positions: usize, dim: usize) -> Self {
        let weights = glorot_uniform(rng, positions * dim, classes).transpose();
        Self {
            positions,
            dim,
            weights,
            bias: vec![0.0; classes],
        }
    }

    pub fn zeros(classes: usize, positions: usize, dim: usize) -> Self {
        Self {
            positions,
            dim,
            weights: Matrix::zeros(classes, positions * dim),
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    /// `W_c` as a `K×d` matrix.
    pub fn class_weights(&self, c: usize) -> Matrix {
        Matrix::from_vec(self.positions, self.dim, self.weights.row(c).to_vec()).expect("row holds K·d values")
    }

    /// `w_k^c`
    pub fn position_weights(&self, c: usize, k: usize) -> &[f64] {
        &self.weights.row(c)[k * self.dim..(k + 1) * self.dim]
    }

    fn scores_flat(&self, repr: &[f64]) -> Result<Vec<f64>, ClassifyError> {
        if repr.len() != self.weights.cols() {
            return Err(ClassifyError::Shape {
                expected: self.weights.cols(),
                got: repr.len(),
            });
        }
        Ok((0..self.classes())
            .map(|c| dot(self.weights.row(c), repr) + self.bias[c])
            .collect())
    }

    /// Accumulates parameter gradients into `grads` and returns `∂L/∂repr`.
    fn backward_flat(&self, repr: &[f64], d_scores: &[f64], grads: &mut ClassifierParams) -> Vec<f64> {
        let mut d_repr = vec![0.0; repr.len()];
        for (c, &g) in d_scores.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            axpy(g, repr, grads.weights.row_mut(c));
            grads.bias[c] += g;
            axpy(g, self.weights.row(c), &mut d_repr);
        }
        d_repr
    }
}

/// `s_c = ⟨H̄, W_c⟩ + b_c` for every class.
pub fn scores(pooled: &Matrix, params: &ClassifierParams) -> Result<Vec<f64>, ClassifyError> {
    if pooled.shape() != (params.positions, params.dim) {
        return Err(ClassifyError::Shape {
            expected: params.positions * params.dim,
            got: pooled.rows() * pooled.cols(),
        });
    }
    params.scores_flat(pooled.as_slice())
}

/// Two-layer perceptron on the flattened representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl MlpHead {
    pub fn init(rng: &mut Rng, in_dim: usize, hidden: usize, classes: usize) -> Self {
        Self {
            w1: glorot_uniform(rng, in_dim, hidden),
            b1: vec![0.0; hidden],
            w2: glorot_uniform(rng, hidden, classes),
            b2: vec![0.0; classes],
        }
    }

    fn hidden(&self, repr: &[f64]) -> Vec<f64> {
        let mut h = self.b1.clone();
        for (i, &x) in repr.iter().enumerate() {
            if x != 0.0 {
                axpy(x, self.w1.row(i), &mut h);
            }
        }
        h.iter_mut().for_each(|v| *v = v.max(0.0));
        h
    }

    fn scores_flat(&self, repr: &[f64]) -> Result<Vec<f64>, ClassifyError> {
        if repr.len() != self.w1.rows() {
            return Err(ClassifyError::Shape {
                expected: self.w1.rows(),
                got: repr.len(),
            });
        }
        let hidden = self.hidden(repr);
        let mut s = self.b2.clone();
        for (j, &a) in hidden.iter().enumerate() {
            axpy(a, self.w2.row(j), &mut s);
        }
        Ok(s)
    }

    fn backward_flat(&self, repr: &[f64], d_scores: &[f64], grads: &mut MlpHead) -> Vec<f64> {
        let hidden = self.hidden(repr);
        let mut d_hidden = vec![0.0; hidden.len()];
        for (j, &a) in hidden.iter().enumerate() {
            axpy(a, d_scores, grads.w2.row_mut(j));
            if a > 0.0 {
                d_hidden[j] = dot(self.w2.row(j), d_scores);
            }
        }
        axpy(1.0, d_scores, &mut grads.b2);
        axpy(1.0, &d_hidden, &mut grads.b1);
        let mut d_repr = vec![0.0; repr.len()];
        for (i, &x) in repr.iter().enumerate() {
            axpy(x, &d_hidden, grads.w1.row_mut(i));
            d_repr[i] = dot(self.w1.row(i), &d_hidden);
        }
        d_repr
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Linear(ClassifierParams),
    Mlp(MlpHead),
}

impl Head {
    pub fn classes(&self) -> usize {
        match self {
            Head::Linear(p) => p.classes(),
            Head::Mlp(m) => m.b2.len(),
        }
    }

    pub fn scores(&self, repr: &[f64]) -> Result<Vec<f64>, ClassifyError> {
        match self {
            Head::Linear(p) => p.scores_flat(repr),
            Head::Mlp(m) => m.scores_flat(repr),
        }
    }

    /// Accumulates parameter gradients into `grads` (same variant) and
    /// returns `∂L/∂repr`.
    pub fn backward(&self, repr: &[f64], d_scores: &[f64], grads: &mut Head) -> Vec<f64> {
        match (self, grads) {
            (Head::Linear(p), Head::Linear(g)) => p.backward_flat(repr, d_scores, g),
            (Head::Mlp(m), Head::Mlp(g)) => m.backward_flat(repr, d_scores, g),
            _ => panic!("gradient container does not match head variant"),
        }
    }

    pub fn zeros_like(&self) -> Head {
        match self {
            Head::Linear(p) => Head::Linear(ClassifierParams::zeros(p.classes(), p.positions, p.dim)),
            Head::Mlp(m) => Head::Mlp(MlpHead {
                w1: Matrix::zeros(m.w1.rows(), m.w1.cols()),
                b1: vec![0.0; m.b1.len()],
                w2: Matrix::zeros(m.w2.rows(), m.w2.cols()),
                b2: vec![0.0; m.b2.len()],
            }),
        }
    }

    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Head::Linear(p) => vec![p.weights.as_slice(), &p.bias],
            Head::Mlp(m) => vec![m.w1.as_slice(), &m.b1, m.w2.as_slice(), &m.b2],
        }
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Head::Linear(p) => vec![p.weights.as_mut_slice(), &mut p.bias],
            Head::Mlp(m) => vec![m.w1.as_mut_slice(), &mut m.b1, m.w2.as_mut_slice(), &mut m.b2],
        }
    }

    /// Tensors subject to weight decay (biases excluded), as flags aligned
    /// with [`Head::tensors`].
    pub(crate) fn decay_mask(&self) -> Vec<bool> {
        match self {
            Head::Linear(_) => vec![true, false],
            Head::Mlp(_) => vec![true, false, true, false],
        }
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `−log softmax(scores)[y]` and its gradient `softmax − onehot(y)`.
pub fn cross_entropy(scores: &[f64], y: usize) -> Result<(f64, Vec<f64>), ClassifyError> {
    if y >= scores.len() {
        return Err(ClassifyError::ClassOutOfRange {
            class: y,
            classes: scores.len(),
        });
    }
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = top + scores.iter().map(|s| (s - top).exp()).sum::<f64>().ln();
    let mut grad = softmax(scores);
    grad[y] -= 1.0;
    Ok((log_z - scores[y], grad))
}

/// Per-node class activation scores `(∂s_c/∂h_n)·h_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamReport {
    pub class: usize,
    pub cam: Vec<f64>,
    /// `s_c`
    pub score: f64,
    /// `b_c` for a linear head.
    pub bias: Option<f64>,
}

/// Class activation map of `g` for `class`, differentiating the class score
/// through the head and the readout with the alignment held fixed.
pub fn cam(g: &Graph, model: &ModelState, class: usize) -> Result<CamReport, CamError> {
    let classes = model.net.head.classes();
    if class >= classes {
        return Err(ClassifyError::ClassOutOfRange { class, classes }.into());
    }
    let fwd = model.encode(g)?;
    let repr = fwd.representation();
    let scores = model.net.head.scores(repr)?;
    let mut onehot = vec![0.0; classes];
    onehot[class] = 1.0;
    let mut scratch = model.net.head.zeros_like();
    let d_repr = model.net.head.backward(repr, &onehot, &mut scratch);
    let d_nodes = model.readout_backward(&fwd, &d_repr)?.nodes;
    let cam = (0..fwd.h.rows()).map(|n| dot(d_nodes.row(n), fwd.h.row(n))).collect();
    let bias = match &model.net.head {
        Head::Linear(p) => Some(p.bias[class]),
        Head::Mlp(_) => None,
    };
    Ok(CamReport {
        class,
        cam,
        score: scores[class],
        bias,
    })
}

#[derive(Debug, Error)]
pub enum CamError {
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
