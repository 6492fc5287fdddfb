use serde::{Deserialize, Serialize};

use super::{Prototypes, ReadoutError, EPS};
use crate::numkit::{dot, norm, Matrix};

/// Cosine distance `1 − h·p / (max(‖h‖,ε)·max(‖p‖,ε))`, clamped to `[0, 2]`.
pub fn cosine_cost(h: &[f64], p: &[f64]) -> f64 {
    cost_with_norms(h, norm(h), p, norm(p))
}

#[inline]
fn cost_with_norms(h: &[f64], h_norm: f64, p: &[f64], p_norm: f64) -> f64 {
    let c = 1.0 - dot(h, p) / (h_norm.max(EPS) * p_norm.max(EPS));
    c.clamp(0.0, 2.0)
}

/// `(∂δ/∂h, ∂δ/∂p)` of the unclamped cosine cost, with ε-guarded norms held
/// constant when they bind.
pub fn cosine_cost_grads(h: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nh, np) = (norm(h), norm(p));
    let (a, b) = (nh.max(EPS), np.max(EPS));
    let s = dot(h, p);
    let inv = 1.0 / (a * b);
    let gh = h
        .iter()
        .zip(p)
        .map(|(&hi, &pi)| {
            let radial = if nh > EPS { s * hi / (a * a * a * b) } else { 0.0 };
            -pi * inv + radial
        })
        .collect();
    let gp = h
        .iter()
        .zip(p)
        .map(|(&hi, &pi)| {
            let radial = if np > EPS { s * pi / (a * b * b * b) } else { 0.0 };
            -hi * inv + radial
        })
        .collect();
    (gh, gp)
}

fn check_dims(h: &Matrix, p: &Prototypes) -> Result<(), ReadoutError> {
    if h.cols() != p.dim() {
        return Err(ReadoutError::Dim {
            h: h.cols(),
            p: p.dim(),
        });
    }
    Ok(())
}

/// The `N×K` cost matrix `Δ(H, P)`.
pub fn cost_matrix(h: &Matrix, p: &Prototypes) -> Result<Matrix, ReadoutError> {
    check_dims(h, p)?;
    let pm = p.matrix();
    let p_norms: Vec<f64> = pm.row_iter().map(norm).collect();
    let mut out = Matrix::zeros(h.rows(), p.k());
    for n in 0..h.rows() {
        let hn = h.row(n);
        let h_norm = norm(hn);
        for k in 0..p.k() {
            out.set(n, k, cost_with_norms(hn, h_norm, pm.row(k), p_norms[k]));
        }
    }
    Ok(out)
}

/// Node-to-position assignment with its total cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub assign: Vec<usize>,
    pub cost: f64,
}

/// Hard alignment: each node goes to its cheapest prototype, ties to the
/// smallest index.
pub fn align(h: &Matrix, p: &Prototypes) -> Result<Alignment, ReadoutError> {
    check_dims(h, p)?;
    let pm = p.matrix();
    let p_norms: Vec<f64> = pm.row_iter().map(norm).collect();
    let mut assign = Vec::with_capacity(h.rows());
    let mut cost = 0.0;
    for hn in h.row_iter() {
        let h_norm = norm(hn);
        let mut best = (0, f64::INFINITY);
        for (k, &pn) in p_norms.iter().enumerate() {
            let c = cost_with_norms(hn, h_norm, pm.row(k), pn);
            if c < best.1 {
                best = (k, c);
            }
        }
        assign.push(best.0);
        cost += best.1;
    }
    Ok(Alignment { assign, cost })
}
