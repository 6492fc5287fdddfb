//! GCN node encoder: a stack of `ReLU(D̃^{-1/2} Ã D̃^{-1/2} H W)` layers,
//! with `Ã = A + I`, no bias.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{axpy, glorot_uniform, Matrix, NumError, Rng};
use crate::tudata::Graph;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("input features have {got} columns, first layer expects {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("upstream gradient is {got:?}, layer output is {expected:?}")]
    GradShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("encoder needs at least one layer")]
    NoLayers,
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Symmetric-normalized adjacency with self-loops, in CSR form.
#[derive(Clone, Debug, PartialEq)]
pub struct NormAdj {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    coefs: Vec<f64>,
}

impl NormAdj {
    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `(m, coefficient)` pairs of row `n`, self-loop included.
    pub fn row(&self, n: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[n]..self.offsets[n + 1];
        self.neighbors[span.clone()]
            .iter()
            .copied()
            .zip(self.coefs[span].iter().copied())
    }

    pub fn coefficient(&self, n: usize, m: usize) -> f64 {
        self.row(n).find(|&(j, _)| j == m).map_or(0.0, |(_, c)| c)
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.num_nodes();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for (j, c) in self.row(i) {
                out.set(i, j, c);
            }
        }
        out
    }

    /// `Â · x`. Â is symmetric, so this also serves as `Âᵀ · x`.
    pub fn propagate(&self, x: &Matrix) -> Matrix {
        debug_assert_eq!(x.rows(), self.num_nodes());
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for n in 0..self.num_nodes() {
            for (m, c) in self.row(n) {
                axpy(c, x.row(m), out.row_mut(n));
            }
        }
        out
    }
}

/// Builds `D̃^{-1/2}(A + I)D̃^{-1/2}`; an isolated node keeps a single
/// self-loop with coefficient 1.
pub fn normalize_adjacency(g: &Graph) -> NormAdj {
    let n = g.num_nodes;
    let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &(u, v) in &g.edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let deg: Vec<f64> = adj.iter().map(|a| a.len() as f64).collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::new();
    let mut coefs = Vec::new();
    offsets.push(0);
    for (i, mut row) in adj.into_iter().enumerate() {
        row.sort_unstable();
        for j in row {
            neighbors.push(j);
            coefs.push(1.0 / (deg[i] * deg[j]).sqrt());
        }
        offsets.push(neighbors.len());
    }
    NormAdj {
        offsets,
        neighbors,
        coefs,
    }
}

/// Layer weights `W^(1): F×d`, `W^(l): d×d` for `l ≥ 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub weights: Vec<Matrix>,
}

impl GcnParams {
    pub fn init(rng: &mut Rng, in_dim: usize, hidden: usize, layers: usize) -> Result<Self, EncoderError> {
        if layers == 0 {
            return Err(EncoderError::NoLayers);
        }
        let weights = (0..layers)
            .map(|l| {
                let fan_in = if l == 0 { in_dim } else { hidden };
                glorot_uniform(rng, fan_in, hidden)
            })
            .collect();
        Ok(Self { weights })
    }

    pub fn from_weights(weights: Vec<Matrix>) -> Result<Self, EncoderError> {
        if weights.is_empty() {
            return Err(EncoderError::NoLayers);
        }
        for pair in weights.windows(2) {
            if pair[0].cols() != pair[1].rows() {
                return Err(NumError::Shape {
                    op: "gcn layer chain",
                    left: pair[0].shape(),
                    right: pair[1].shape(),
                }
                .into());
            }
        }
        Ok(Self { weights })
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.last().expect("at least one layer").cols()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
        }
    }
}

/// Inverted dropout on hidden layer inputs (not on `X`).
#[derive(Debug)]
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut Rng,
}

struct LayerCache {
    /// `Â · input`
    propagated: Matrix,
    /// Post-ReLU output.
    output: Matrix,
    /// Dropout scale per entry of this layer's input, if dropout ran.
    input_mask: Option<Matrix>,
}

/// Activations recorded by a forward pass, consumed by [`GcnCache::backward`].
pub struct GcnCache<'a> {
    adj: Cow<'a, NormAdj>,
    layers: Vec<LayerCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnGrads {
    pub params: GcnParams,
    /// Gradient on the input features `X`.
    pub input: Matrix,
}

/// Encodes `g` from scratch.
pub fn forward(g: &Graph, params: &GcnParams) -> Result<(Matrix, GcnCache<'static>), EncoderError> {
    forward_adj(Cow::Owned(normalize_adjacency(g)), &g.features, params, None)
}

/// Encodes with a precomputed adjacency, optionally applying dropout.
pub fn forward_with<'a>(
    adj: &'a NormAdj,
    x: &Matrix,
    params: &GcnParams,
    dropout: Option<Dropout<'_>>,
) -> Result<(Matrix, GcnCache<'a>), EncoderError> {
    forward_adj(Cow::Borrowed(adj), x, params, dropout)
}

fn forward_adj<'a>(
    adj: Cow<'a, NormAdj>,
    x: &Matrix,
    params: &GcnParams,
    mut dropout: Option<Dropout<'_>>,
) -> Result<(Matrix, GcnCache<'a>), EncoderError> {
    if x.cols() != params.in_dim() {
        return Err(EncoderError::FeatureDim {
            expected: params.in_dim(),
            got: x.cols(),
        });
    }
    let mut layers = Vec::with_capacity(params.layers());
    let mut h = x.clone();
    for (l, w) in params.weights.iter().enumerate() {
        let mut input_mask = None;
        if l > 0 {
            if let Some(Dropout { rate, rng }) = dropout.as_mut() {
                if *rate > 0.0 {
                    let keep = 1.0 / (1.0 - *rate);
                    let mut mask = Matrix::zeros(h.rows(), h.cols());
                    for v in mask.as_mut_slice() {
                        *v = if rng.bernoulli(*rate) { 0.0 } else { keep };
                    }
                    for (hv, mv) in h.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                        *hv *= mv;
                    }
                    input_mask = Some(mask);
                }
            }
        }
        let propagated = adj.propagate(&h);
        let mut output = propagated.matmul(w)?;
        output.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
        h = output.clone();
        layers.push(LayerCache {
            propagated,
            output,
            input_mask,
        });
    }
    Ok((h, GcnCache { adj, layers }))
}

impl GcnCache<'_> {
    pub fn output(&self) -> &Matrix {
        &self.layers.last().expect("at least one layer").output
    }

    /// Backpropagates `upstream = ∂L/∂H` to the layer weights and input.
    pub fn backward(&self, params: &GcnParams, upstream: &Matrix) -> Result<GcnGrads, EncoderError> {
        if upstream.shape() != self.output().shape() {
            return Err(EncoderError::GradShape {
                expected: self.output().shape(),
                got: upstream.shape(),
            });
        }
        let mut grads = params.zeros_like();
        let mut d_out = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let cache = &self.layers[l];
            for (g, &o) in d_out.as_mut_slice().iter_mut().zip(cache.output.as_slice()) {
                if o <= 0.0 {
                    *g = 0.0;
                }
            }
            grads.weights[l] = cache.propagated.t_matmul(&d_out)?;
            let d_prop = d_out.matmul_t(&params.weights[l])?;
            let mut d_in = self.adj.propagate(&d_prop);
            if let Some(mask) = &cache.input_mask {
                for (g, m) in d_in.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *g *= m;
                }
            }
            d_out = d_in;
        }
        Ok(GcnGrads {
            params: grads,
            input: d_out,
        })
    }
}
