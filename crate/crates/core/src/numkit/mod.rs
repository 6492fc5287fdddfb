//! Dense numerical substrate: matrices, seeded randomness, optimizers and
//! finite-difference gradient checking.

mod gradcheck;
mod matrix;
mod optim;
mod rng;

use thiserror::Error;

pub use gradcheck::{grad_check, GradCheckError, GradCheckReport};
pub use matrix::{axpy, dot, norm, Matrix};
pub use optim::{optimizer_step, Optimizer, OptimizerConfig, OptimizerKind};
pub use rng::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum NumError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("cannot view {len} values as a {rows}x{cols} matrix")]
    Length { rows: usize, cols: usize, len: usize },
}

/// Uniform Glorot initialization in ±√(6/(fan_in+fan_out)).
pub fn glorot_uniform(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("length matches by construction")
}
