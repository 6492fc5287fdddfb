use super::{cosine_cost_grads, cost_matrix, Prototypes, ReadoutError};
use crate::numkit::{axpy, Matrix};

/// `min_γ`: the exact minimum for `γ = 0`, otherwise
/// `−γ·log Σ exp(−aᵢ/γ)` evaluated around the minimum for stability.
///
/// Panics on an empty slice.
pub fn soft_min(values: &[f64], gamma: f64) -> f64 {
    assert!(!values.is_empty(), "soft_min of an empty set");
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if gamma == 0.0 {
        return min;
    }
    let s: f64 = values.iter().map(|a| (-(a - min) / gamma).exp()).sum();
    min - gamma * s.ln()
}

/// Soft alignment cost and its gradients.
#[derive(Clone, Debug)]
pub struct SoftSsa {
    pub value: f64,
    /// `∂SSA_γ/∂P`, `K×d`.
    pub grad_prototypes: Matrix,
    /// `∂SSA_γ/∂H`, `N×d`.
    pub grad_nodes: Matrix,
    /// Per-node position weights `softmax(−δ(h_n,·)/γ)`, `N×K`; one-hot at
    /// the hard assignment when `γ = 0`.
    pub weights: Matrix,
}

/// `SSA_γ(H, P) = Σ_n min_γ{δ(h_n, p_k)}_k`.
///
/// The soft minimum over all `K^N` one-hot alignment matrices factorizes
/// node by node, so the cost is linear in `N·K`.
pub fn soft_ssa(h: &Matrix, p: &Prototypes, gamma: f64) -> Result<SoftSsa, ReadoutError> {
    assert!(gamma >= 0.0, "gamma must be non-negative");
    let delta = cost_matrix(h, p)?;
    let (n_nodes, k) = delta.shape();
    let mut weights = Matrix::zeros(n_nodes, k);
    let mut value = 0.0;
    for n in 0..n_nodes {
        let row = delta.row(n);
        value += soft_min(row, gamma);
        let w = weights.row_mut(n);
        if gamma == 0.0 {
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |b, (i, &c)| if c < b.1 { (i, c) } else { b })
                .0;
            w[best] = 1.0;
        } else {
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            let mut z = 0.0;
            for (wi, &c) in w.iter_mut().zip(row) {
                *wi = (-(c - min) / gamma).exp();
                z += *wi;
            }
            w.iter_mut().for_each(|wi| *wi /= z);
        }
    }

    let pm = p.matrix();
    let mut grad_prototypes = Matrix::zeros(k, h.cols());
    let mut grad_nodes = Matrix::zeros(n_nodes, h.cols());
    for n in 0..n_nodes {
        for kk in 0..k {
            let w = weights.get(n, kk);
            if w == 0.0 {
                continue;
            }
            let (gh, gp) = cosine_cost_grads(h.row(n), pm.row(kk));
            axpy(w, &gp, grad_prototypes.row_mut(kk));
            axpy(w, &gh, grad_nodes.row_mut(n));
        }
    }
    Ok(SoftSsa {
        value,
        grad_prototypes,
        grad_nodes,
        weights,
    })
}
