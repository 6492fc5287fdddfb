use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{align, Alignment, Prototypes, ReadoutError};
use crate::numkit::{axpy, dot, glorot_uniform, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorKind {
    Sum,
    Max,
    Mean,
    /// Softmax over scores `h·a` with a learnable gate vector `a`.
    Attention,
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sum => "sum",
            Self::Max => "max",
            Self::Mean => "mean",
            Self::Attention => "attention",
        })
    }
}

impl FromStr for AggregatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Self::Sum),
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            "attention" => Ok(Self::Attention),
            other => Err(format!("unknown aggregator {other:?} (sum, max, mean, attention)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregator {
    pub kind: AggregatorKind,
    /// Gate vector, present only for [`AggregatorKind::Attention`].
    pub gate: Option<Vec<f64>>,
}

impl Aggregator {
    pub fn new(kind: AggregatorKind) -> Self {
        assert!(
            kind != AggregatorKind::Attention,
            "attention needs a gate; use Aggregator::attention"
        );
        Self { kind, gate: None }
    }

    pub fn attention(gate: Vec<f64>) -> Self {
        Self {
            kind: AggregatorKind::Attention,
            gate: Some(gate),
        }
    }

    pub fn init(kind: AggregatorKind, rng: &mut Rng, dim: usize) -> Self {
        match kind {
            AggregatorKind::Attention => Self::attention(glorot_uniform(rng, dim, 1).into_vec()),
            k => Self::new(k),
        }
    }

    fn gate(&self, dim: usize) -> Result<&[f64], ReadoutError> {
        let gate = self
            .gate
            .as_deref()
            .ok_or(ReadoutError::Gate { expected: dim, got: 0 })?;
        if gate.len() != dim {
            return Err(ReadoutError::Gate {
                expected: dim,
                got: gate.len(),
            });
        }
        Ok(gate)
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Node indices per position, each list ordered by the lexicographic order of
/// the node vectors.
///
/// Every aggregator walks its members in this order, so the pooled values do
/// not depend on how the nodes were numbered.
pub fn positions(h: &Matrix, assign: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); k];
    for (n, &a) in assign.iter().enumerate() {
        members[a].push(n);
    }
    for m in &mut members {
        m.sort_by(|&a, &b| lexicographic(h.row(a), h.row(b)));
    }
    members
}

/// Result of pooling, with what backpropagation needs.
#[derive(Clone, Debug)]
pub struct Pooled {
    /// One row per position.
    pub pooled: Matrix,
    pub members: Vec<Vec<usize>>,
    kind: AggregatorKind,
    /// Attention weights aligned with `members`.
    weights: Vec<Vec<f64>>,
    /// For max: the winning node per (position, dimension).
    argmax: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PooledGrads {
    pub nodes: Matrix,
    pub gate: Option<Vec<f64>>,
}

/// Aggregates each member list into one row. An empty list yields a zero row.
pub fn pool(h: &Matrix, members: Vec<Vec<usize>>, agg: &Aggregator) -> Result<Pooled, ReadoutError> {
    let d = h.cols();
    let k = members.len();
    let mut pooled = Matrix::zeros(k, d);
    let mut weights = Vec::new();
    let mut argmax = Vec::new();
    match agg.kind {
        AggregatorKind::Sum | AggregatorKind::Mean => {
            for (pos, m) in members.iter().enumerate() {
                let row = pooled.row_mut(pos);
                for &n in m {
                    axpy(1.0, h.row(n), row);
                }
                if agg.kind == AggregatorKind::Mean && !m.is_empty() {
                    let inv = m.len() as f64;
                    row.iter_mut().for_each(|v| *v /= inv);
                }
            }
        }
        AggregatorKind::Max => {
            for (pos, m) in members.iter().enumerate() {
                let mut winners = vec![usize::MAX; d];
                if let Some(&first) = m.first() {
                    let row = pooled.row_mut(pos);
                    row.copy_from_slice(h.row(first));
                    winners.fill(first);
                    for &n in &m[1..] {
                        for (j, &v) in h.row(n).iter().enumerate() {
                            if v > row[j] {
                                row[j] = v;
                                winners[j] = n;
                            }
                        }
                    }
                }
                argmax.push(winners);
            }
        }
        AggregatorKind::Attention => {
            let gate = agg.gate(d)?;
            for (pos, m) in members.iter().enumerate() {
                let scores: Vec<f64> = m.iter().map(|&n| dot(h.row(n), gate)).collect();
                let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
                let z: f64 = exps.iter().sum();
                let w: Vec<f64> = exps.iter().map(|e| e / z).collect();
                let row = pooled.row_mut(pos);
                for (&n, &wn) in m.iter().zip(&w) {
                    axpy(wn, h.row(n), row);
                }
                weights.push(w);
            }
        }
    }
    Ok(Pooled {
        pooled,
        members,
        kind: agg.kind,
        weights,
        argmax,
    })
}

impl Pooled {
    /// Gradients on node vectors (and the attention gate) given `∂L/∂pooled`.
    /// Position membership is treated as fixed.
    pub fn backward(&self, h: &Matrix, agg: &Aggregator, upstream: &Matrix) -> Result<PooledGrads, ReadoutError> {
        let d = h.cols();
        let mut nodes = Matrix::zeros(h.rows(), d);
        let mut gate_grad = None;
        match self.kind {
            AggregatorKind::Sum | AggregatorKind::Mean => {
                for (pos, m) in self.members.iter().enumerate() {
                    if m.is_empty() {
                        continue;
                    }
                    let scale = if self.kind == AggregatorKind::Mean {
                        1.0 / m.len() as f64
                    } else {
                        1.0
                    };
                    let g = upstream.row(pos);
                    for &n in m {
                        axpy(scale, g, nodes.row_mut(n));
                    }
                }
            }
            AggregatorKind::Max => {
                for (pos, winners) in self.argmax.iter().enumerate() {
                    let g = upstream.row(pos);
                    for (j, &n) in winners.iter().enumerate() {
                        if n != usize::MAX {
                            let v = nodes.get(n, j);
                            nodes.set(n, j, v + g[j]);
                        }
                    }
                }
            }
            AggregatorKind::Attention => {
                let gate = agg.gate(d)?;
                let mut dgate = vec![0.0; d];
                for (pos, m) in self.members.iter().enumerate() {
                    let g = upstream.row(pos);
                    let g_dot_pooled = dot(g, self.pooled.row(pos));
                    for (&n, &wn) in m.iter().zip(&self.weights[pos]) {
                        let hn = h.row(n);
                        // ∂L/∂score_n = α_n (h_n·g − pooled·g)
                        let dscore = wn * (dot(hn, g) - g_dot_pooled);
                        let row = nodes.row_mut(n);
                        axpy(wn, g, row);
                        axpy(dscore, gate, row);
                        axpy(dscore, hn, &mut dgate);
                    }
                }
                gate_grad = Some(dgate);
            }
        }
        Ok(PooledGrads { nodes, gate: gate_grad })
    }

    /// Attention weights per node (zero for other aggregators).
    pub fn node_weights(&self, num_nodes: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_nodes];
        for (m, w) in self.members.iter().zip(&self.weights) {
            for (&n, &wn) in m.iter().zip(w) {
                out[n] = wn;
            }
        }
        out
    }
}

/// Global readout: one aggregation over all rows.
pub fn gread(h: &Matrix, agg: &Aggregator) -> Result<Vec<f64>, ReadoutError> {
    if h.rows() == 0 {
        return Err(ReadoutError::Empty);
    }
    let members = positions(h, &vec![0; h.rows()], 1);
    Ok(pool(h, members, agg)?.pooled.into_vec())
}

/// Position-level readout: `K×d`, row `k` aggregating the nodes aligned to
/// prototype `k`.
pub fn ssread(h: &Matrix, p: &Prototypes, agg: &Aggregator) -> Result<Matrix, ReadoutError> {
    Ok(ssread_full(h, p, agg)?.1.pooled)
}

pub fn ssread_full(h: &Matrix, p: &Prototypes, agg: &Aggregator) -> Result<(Alignment, Pooled), ReadoutError> {
    let alignment = align(h, p)?;
    let members = positions(h, &alignment.assign, p.k());
    let pooled = pool(h, members, agg)?;
    Ok((alignment, pooled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::grad_check;

    fn rand_matrix(rng: &mut Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    fn all_aggs(rng: &mut Rng, d: usize) -> Vec<Aggregator> {
        vec![
            Aggregator::new(AggregatorKind::Sum),
            Aggregator::new(AggregatorKind::Max),
            Aggregator::new(AggregatorKind::Mean),
            Aggregator::init(AggregatorKind::Attention, rng, d),
        ]
    }

    #[test]
    fn single_row_is_returned_unchanged() {
        let mut rng = Rng::new(0);
        let h = Matrix::row_vector(&[0.5, -1.0, 2.0]);
        for agg in all_aggs(&mut rng, 3) {
            let g = gread(&h, &agg).unwrap();
            for (a, b) in g.iter().zip(h.as_slice()) {
                assert!((a - b).abs() < 1e-15, "{:?}", agg.kind);
            }
        }
    }

    #[test]
    fn sum_of_basis_vectors() {
        let h = Matrix::identity(2);
        assert_eq!(
            gread(&h, &Aggregator::new(AggregatorKind::Sum)).unwrap(),
            vec![1.0, 1.0]
        );
    }

    #[test]
    fn zero_gate_attention_is_mean() {
        let mut rng = Rng::new(5);
        let h = rand_matrix(&mut rng, 6, 4);
        let att = gread(&h, &Aggregator::attention(vec![0.0; 4])).unwrap();
        let mean = gread(&h, &Aggregator::new(AggregatorKind::Mean)).unwrap();
        for (a, b) in att.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(
            gread(&Matrix::zeros(0, 3), &Aggregator::new(AggregatorKind::Sum)),
            Err(ReadoutError::Empty)
        );
    }

    #[test]
    fn single_prototype_matches_global_readout() {
        let mut rng = Rng::new(6);
        let h = rand_matrix(&mut rng, 7, 3);
        let p = Prototypes::init(&mut rng, 1, 3).unwrap();
        for agg in all_aggs(&mut rng, 3) {
            let s = ssread(&h, &p, &agg).unwrap();
            assert_eq!(s.as_slice(), gread(&h, &agg).unwrap().as_slice());
        }
    }

    #[test]
    fn two_nodes_two_positions_sum() {
        let p = Prototypes::new(Matrix::identity(2)).unwrap();
        let h = Matrix::from_rows(&[vec![0.1, 3.0], vec![2.0, 0.2]]).unwrap();
        let s = ssread(&h, &p, &Aggregator::new(AggregatorKind::Sum)).unwrap();
        assert_eq!(s.row(0), h.row(1));
        assert_eq!(s.row(1), h.row(0));
    }

    #[test]
    fn empty_position_is_zero_row() {
        let p = Prototypes::new(Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap()).unwrap();
        let h = Matrix::from_rows(&[vec![1.0, 0.5], vec![2.0, 0.1]]).unwrap();
        let mut rng = Rng::new(1);
        for agg in all_aggs(&mut rng, 2) {
            let s = ssread(&h, &p, &agg).unwrap();
            assert_eq!(s.shape(), (2, 2));
            assert_eq!(s.row(1), &[0.0, 0.0]);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(12);
        let h = rand_matrix(&mut rng, 6, 3);
        let assign = vec![0, 1, 0, 2, 1, 0];
        let probe = rand_matrix(&mut rng, 3, 3);
        for agg in all_aggs(&mut rng, 3) {
            let members = positions(&h, &assign, 3);
            let report = grad_check(
                |x| {
                    let pooled = pool(x, members.clone(), &agg).unwrap();
                    let g = pooled.backward(x, &agg, &probe).unwrap();
                    (pooled.pooled.frobenius_dot(&probe).unwrap(), g.nodes)
                },
                &h,
                1e-6,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-6, "{:?}: {report:?}", agg.kind);
        }
        let gate = Matrix::row_vector(&[0.3, -0.7, 0.2]);
        let members = positions(&h, &assign, 3);
        let report = grad_check(
            |a| {
                let agg = Aggregator::attention(a.as_slice().to_vec());
                let pooled = pool(&h, members.clone(), &agg).unwrap();
                let g = pooled.backward(&h, &agg, &probe).unwrap();
                (
                    pooled.pooled.frobenius_dot(&probe).unwrap(),
                    Matrix::row_vector(&g.gate.unwrap()),
                )
            },
            &gate,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let mut rng = Rng::new(13);
        let h = rand_matrix(&mut rng, 8, 3);
        let agg = Aggregator::init(AggregatorKind::Attention, &mut rng, 3);
        let assign = vec![0, 1, 1, 0, 2, 2, 2, 0];
        let pooled = pool(&h, positions(&h, &assign, 3), &agg).unwrap();
        let w = pooled.node_weights(8);
        for k in 0..3 {
            let s: f64 = assign.iter().zip(&w).filter(|(a, _)| **a == k).map(|(_, w)| w).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
