//! Graph readouts.
//!
//! [`gread`] aggregates all node vectors into one. [`ssread`] first aligns
//! every node to its nearest structural prototype under cosine cost, then
//! aggregates each prototype's nodes separately, yielding a `K×d`
//! position-level representation. [`soft_ssa`] is the smoothed alignment
//! cost used to learn the prototypes.

mod aggregate;
mod cost;
mod soft;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{norm, Matrix, Rng};

pub use aggregate::{gread, pool, positions, ssread, ssread_full, Aggregator, AggregatorKind, Pooled, PooledGrads};
pub use cost::{align, cosine_cost, cosine_cost_grads, cost_matrix, Alignment};
pub use soft::{soft_min, soft_ssa, SoftSsa};

/// Norm guard used by every cosine computation.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ReadoutError {
    #[error("node vectors have {h} columns, prototypes have {p}")]
    Dim { h: usize, p: usize },
    #[error("readout over an empty node set")]
    Empty,
    #[error("need at least one prototype")]
    NoPrototypes,
    #[error("prototype {0} has norm ≤ {EPS}")]
    DegeneratePrototype(usize),
    #[error("attention aggregator needs a gate of length {expected}, got {got}")]
    Gate { expected: usize, got: usize },
}

/// The `K×d` matrix of structural prototypes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prototypes(Matrix);

impl Prototypes {
    pub fn new(p: Matrix) -> Result<Self, ReadoutError> {
        if p.rows() == 0 {
            return Err(ReadoutError::NoPrototypes);
        }
        if let Some(k) = p.row_iter().position(|r| norm(r) <= EPS) {
            return Err(ReadoutError::DegeneratePrototype(k));
        }
        Ok(Self(p))
    }

    /// Rows drawn from a standard normal, then scaled to unit length.
    pub fn init(rng: &mut Rng, k: usize, d: usize) -> Result<Self, ReadoutError> {
        let mut p = Matrix::zeros(k, d);
        for r in 0..k {
            loop {
                let row = p.row_mut(r);
                row.iter_mut().for_each(|v| *v = rng.normal());
                let n = norm(row);
                if n > EPS {
                    row.iter_mut().for_each(|v| *v /= n);
                    break;
                }
            }
        }
        Self::new(p)
    }

    pub fn k(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Mutable access for optimizer updates.
    pub fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.0
    }
}
