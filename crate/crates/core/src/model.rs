//! The full graph model: encoder, readout, classification head and the
//! optional contrastive projection head.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ClassifierParams, ClassifyError, Head, MlpHead};
use crate::encoder::{self, Dropout, EncoderError, GcnCache, GcnParams, NormAdj};
use crate::numkit::{axpy, glorot_uniform, Matrix, Rng};
use crate::readout::{
    pool, positions, ssread_full, Aggregator, AggregatorKind, Alignment, Pooled, PooledGrads, Prototypes, ReadoutError,
};
use crate::tudata::Graph;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutKind {
    /// One aggregation over all nodes.
    Gread,
    /// Prototype-aligned, position-level aggregation.
    Ssread,
}

impl fmt::Display for ReadoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gread => "gread",
            Self::Ssread => "ssread",
        })
    }
}

impl FromStr for ReadoutKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gread" => Ok(Self::Gread),
            "ssread" => Ok(Self::Ssread),
            other => Err(format!("unknown readout {other:?} (gread, ssread)")),
        }
    }
}

/// `z = ReLU(x·W1 + b1)·W2 + b2`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl ProjectionHead {
    pub fn init(rng: &mut Rng, in_dim: usize, dim: usize) -> Self {
        Self {
            w1: glorot_uniform(rng, in_dim, dim),
            b1: vec![0.0; dim],
            w2: glorot_uniform(rng, dim, dim),
            b2: vec![0.0; dim],
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![0.0; self.b1.len()],
            w2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![0.0; self.b2.len()],
        }
    }

    /// Returns `(z, hidden)` where `hidden` is post-ReLU.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut hidden = self.b1.clone();
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                axpy(v, self.w1.row(i), &mut hidden);
            }
        }
        hidden.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut z = self.b2.clone();
        for (j, &a) in hidden.iter().enumerate() {
            if a != 0.0 {
                axpy(a, self.w2.row(j), &mut z);
            }
        }
        (z, hidden)
    }

    /// Accumulates into `grads`; returns `∂L/∂x`.
    pub fn backward(&self, x: &[f64], hidden: &[f64], d_z: &[f64], grads: &mut ProjectionHead) -> Vec<f64> {
        let mut d_hidden = vec![0.0; hidden.len()];
        for (j, &a) in hidden.iter().enumerate() {
            axpy(a, d_z, grads.w2.row_mut(j));
            if a > 0.0 {
                d_hidden[j] = crate::numkit::dot(self.w2.row(j), d_z);
            }
        }
        axpy(1.0, d_z, &mut grads.b2);
        axpy(1.0, &d_hidden, &mut grads.b1);
        let mut d_x = vec![0.0; x.len()];
        for (i, &v) in x.iter().enumerate() {
            axpy(v, &d_hidden, grads.w1.row_mut(i));
            d_x[i] = crate::numkit::dot(self.w1.row(i), &d_hidden);
        }
        d_x
    }
}

/// Learnable tensors other than the prototypes. Also used, zero-initialized,
/// as the gradient container for itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub encoder: GcnParams,
    pub aggregator: Aggregator,
    pub head: Head,
    pub projection: Option<ProjectionHead>,
}

impl Network {
    pub fn zeros_like(&self) -> Network {
        Network {
            encoder: self.encoder.zeros_like(),
            aggregator: Aggregator {
                kind: self.aggregator.kind,
                gate: self.aggregator.gate.as_ref().map(|g| vec![0.0; g.len()]),
            },
            head: self.head.zeros_like(),
            projection: self.projection.as_ref().map(ProjectionHead::zeros_like),
        }
    }

    /// Encoder (and gate) tensors in a fixed order.
    pub fn encoder_tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.encoder.weights.iter().map(Matrix::as_slice).collect();
        if let Some(g) = &self.aggregator.gate {
            out.push(g);
        }
        out
    }

    /// All tensors in a fixed order: encoder, gate, head, projection.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.encoder_tensors();
        out.extend(self.head.tensors());
        if let Some(p) = &self.projection {
            out.extend([p.w1.as_slice(), &p.b1, p.w2.as_slice(), &p.b2]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.encoder.weights.iter_mut().map(Matrix::as_mut_slice).collect();
        if let Some(g) = &mut self.aggregator.gate {
            out.push(g);
        }
        out.extend(self.head.tensors_mut());
        if let Some(p) = &mut self.projection {
            out.extend([p.w1.as_mut_slice(), &mut p.b1, p.w2.as_mut_slice(), &mut p.b2]);
        }
        out
    }

    /// Flags aligned with [`Network::tensors`]: true for weight matrices
    /// (decayed), false for biases and the gate.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut out = vec![true; self.encoder.layers()];
        if self.aggregator.gate.is_some() {
            out.push(false);
        }
        out.extend(self.head.decay_mask());
        if self.projection.is_some() {
            out.extend([true, false, true, false]);
        }
        out
    }

    /// Where the head's tensors start in [`Network::tensors`].
    pub fn head_offset(&self) -> usize {
        self.encoder_tensors().len()
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &Network) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(alpha, src, dst);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn accumulate_encoder(&mut self, grads: &GcnParams, alpha: f64) {
        for (dst, src) in self.encoder.weights.iter_mut().zip(&grads.weights) {
            axpy(alpha, src.as_slice(), dst.as_mut_slice());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Architecture choices needed to build a fresh [`ModelState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub in_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub readout: ReadoutKind,
    /// Number of structural prototypes (ssread only).
    pub k: usize,
    pub aggregator: AggregatorKind,
    pub classes: usize,
    /// Hidden width of a 2-layer classifier head; `None` for the linear head.
    pub mlp_hidden: Option<usize>,
    pub projection: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub readout: ReadoutKind,
    pub net: Network,
    /// Present exactly when `readout == Ssread`.
    pub prototypes: Option<Prototypes>,
}

/// Everything one forward pass produced, kept for backpropagation.
pub struct ForwardPass<'a> {
    pub h: Matrix,
    pub cache: GcnCache<'a>,
    pub alignment: Option<Alignment>,
    pub pooled: Pooled,
}

impl ForwardPass<'_> {
    /// Flattened pooled representation, position-major.
    pub fn representation(&self) -> &[f64] {
        self.pooled.pooled.as_slice()
    }
}

impl ModelState {
    pub fn new(spec: &ModelSpec, rng: &mut Rng) -> Result<Self, ModelError> {
        let encoder = GcnParams::init(rng, spec.in_dim, spec.hidden, spec.layers)?;
        let aggregator = Aggregator::init(spec.aggregator, rng, spec.hidden);
        let (prototypes, positions) = match spec.readout {
            ReadoutKind::Ssread => (Some(Prototypes::init(rng, spec.k, spec.hidden)?), spec.k),
            ReadoutKind::Gread => (None, 1),
        };
        let head = match spec.mlp_hidden {
            None => Head::Linear(ClassifierParams::init(rng, spec.classes, positions, spec.hidden)),
            Some(h) => Head::Mlp(MlpHead::init(rng, positions * spec.hidden, h, spec.classes)),
        };
        let projection = spec
            .projection
            .then(|| ProjectionHead::init(rng, positions * spec.hidden, spec.hidden));
        Ok(Self {
            readout: spec.readout,
            net: Network {
                encoder,
                aggregator,
                head,
                projection,
            },
            prototypes,
        })
    }

    /// `K` for ssread, 1 for gread.
    pub fn positions(&self) -> usize {
        self.prototypes.as_ref().map_or(1, Prototypes::k)
    }

    pub fn hidden(&self) -> usize {
        self.net.encoder.out_dim()
    }

    pub fn forward<'a>(
        &self,
        adj: &'a NormAdj,
        x: &Matrix,
        dropout: Option<Dropout<'_>>,
    ) -> Result<ForwardPass<'a>, ModelError> {
        let (h, cache) = encoder::forward_with(adj, x, &self.net.encoder, dropout)?;
        self.finish(h, cache)
    }

    /// Forward pass that builds the graph's adjacency itself.
    pub fn encode(&self, g: &Graph) -> Result<ForwardPass<'static>, ModelError> {
        let (h, cache) = encoder::forward(g, &self.net.encoder)?;
        self.finish(h, cache)
    }

    fn finish<'a>(&self, h: Matrix, cache: GcnCache<'a>) -> Result<ForwardPass<'a>, ModelError> {
        let (alignment, pooled) = match &self.prototypes {
            Some(p) => {
                let (a, pooled) = ssread_full(&h, p, &self.net.aggregator)?;
                (Some(a), pooled)
            }
            None => {
                if h.rows() == 0 {
                    return Err(ReadoutError::Empty.into());
                }
                let members = positions(&h, &vec![0; h.rows()], 1);
                (None, pool(&h, members, &self.net.aggregator)?)
            }
        };
        Ok(ForwardPass {
            h,
            cache,
            alignment,
            pooled,
        })
    }

    pub fn scores(&self, g: &Graph) -> Result<Vec<f64>, ModelError> {
        let fwd = self.encode(g)?;
        Ok(self.net.head.scores(fwd.representation())?)
    }

    /// Readout backward: `∂L/∂repr` to node and gate gradients.
    pub fn readout_backward(&self, fwd: &ForwardPass<'_>, d_repr: &[f64]) -> Result<PooledGrads, ModelError> {
        let d_pooled = Matrix::from_vec(self.positions(), self.hidden(), d_repr.to_vec())
            .map_err(|e| ModelError::Classify(e.into()))?;
        Ok(fwd.pooled.backward(&fwd.h, &self.net.aggregator, &d_pooled)?)
    }

    /// Backpropagates `∂L/∂repr` (plus an optional direct `∂L/∂H`) through the
    /// readout and encoder, adding `alpha`-scaled gradients into `grads`.
    pub fn backward_into(
        &self,
        fwd: &ForwardPass<'_>,
        d_repr: &[f64],
        extra_nodes: Option<&Matrix>,
        alpha: f64,
        grads: &mut Network,
    ) -> Result<(), ModelError> {
        let PooledGrads { mut nodes, gate } = self.readout_backward(fwd, d_repr)?;
        if let Some(extra) = extra_nodes {
            axpy(1.0, extra.as_slice(), nodes.as_mut_slice());
        }
        if let (Some(dg), Some(acc)) = (gate, grads.aggregator.gate.as_mut()) {
            axpy(alpha, &dg, acc);
        }
        let enc = fwd.cache.backward(&self.net.encoder, &nodes)?;
        grads.accumulate_encoder(&enc.params, alpha);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::cross_entropy;
    use crate::encoder::normalize_adjacency;
    use crate::numkit::grad_check;

    fn spec(readout: ReadoutKind, agg: AggregatorKind) -> ModelSpec {
        ModelSpec {
            in_dim: 3,
            hidden: 4,
            layers: 2,
            readout,
            k: 3,
            aggregator: agg,
            classes: 2,
            mlp_hidden: None,
            projection: false,
        }
    }

    fn graph(rng: &mut Rng) -> Graph {
        let n = 6;
        let x = Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap();
        Graph::new(n, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4)], x, 1)
    }

    #[test]
    fn class_loss_gradient_on_first_layer() {
        let mut rng = Rng::new(31);
        let g = graph(&mut rng);
        let adj = normalize_adjacency(&g);
        for readout in [ReadoutKind::Gread, ReadoutKind::Ssread] {
            for agg in [AggregatorKind::Sum, AggregatorKind::Mean, AggregatorKind::Attention] {
                let model = ModelState::new(&spec(readout, agg), &mut rng).unwrap();
                let report = grad_check(
                    |w| {
                        let mut m = model.clone();
                        m.net.encoder.weights[0] = w.clone();
                        let fwd = m.forward(&adj, &g.features, None).unwrap();
                        let s = m.net.head.scores(fwd.representation()).unwrap();
                        let (loss, ds) = cross_entropy(&s, g.label).unwrap();
                        let mut grads = m.net.zeros_like();
                        let d_repr = m.net.head.backward(fwd.representation(), &ds, &mut grads.head);
                        m.backward_into(&fwd, &d_repr, None, 1.0, &mut grads).unwrap();
                        (loss, grads.encoder.weights[0].clone())
                    },
                    &model.net.encoder.weights[0],
                    1e-6,
                )
                .unwrap();
                assert!(report.max_rel_error <= 1e-4, "{readout} {agg}: {report:?}");
            }
        }
    }

    #[test]
    fn gread_model_has_no_prototypes() {
        let mut rng = Rng::new(1);
        let m = ModelState::new(&spec(ReadoutKind::Gread, AggregatorKind::Sum), &mut rng).unwrap();
        assert!(m.prototypes.is_none());
        assert_eq!(m.positions(), 1);
        let m = ModelState::new(&spec(ReadoutKind::Ssread, AggregatorKind::Sum), &mut rng).unwrap();
        assert_eq!(m.positions(), 3);
    }

    #[test]
    fn tensor_views_line_up() {
        let mut rng = Rng::new(2);
        let mut s = spec(ReadoutKind::Ssread, AggregatorKind::Attention);
        s.projection = true;
        s.mlp_hidden = Some(5);
        let mut m = ModelState::new(&s, &mut rng).unwrap();
        let lens: Vec<usize> = m.net.tensors().iter().map(|t| t.len()).collect();
        let z = m.net.zeros_like();
        assert_eq!(lens, z.tensors().iter().map(|t| t.len()).collect::<Vec<_>>());
        assert_eq!(lens.len(), m.net.decay_mask().len());
        assert_eq!(lens.len(), m.net.tensors_mut().len());
    }
}
