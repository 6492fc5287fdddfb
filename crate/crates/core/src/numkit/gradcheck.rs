use thiserror::Error;

use super::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum GradCheckError {
    #[error("step size {0} outside [1e-7, 1e-4]")]
    StepSize(f64),
    #[error("analytic gradient shape {analytic:?} differs from parameter shape {param:?}")]
    Shape {
        analytic: (usize, usize),
        param: (usize, usize),
    },
    #[error("non-finite function value at entry ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Entry with the largest error.
    pub worst: (usize, usize),
}

/// Compares an analytic gradient with central differences.
///
/// `f` returns the function value and its analytic gradient at the given
/// point. The error of each entry is `|analytic − numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, x: &Matrix, h: f64) -> Result<GradCheckReport, GradCheckError>
where
    F: Fn(&Matrix) -> (f64, Matrix),
{
    if !(1e-7..=1e-4).contains(&h) {
        return Err(GradCheckError::StepSize(h));
    }
    let (f0, analytic) = f(x);
    if analytic.shape() != x.shape() {
        return Err(GradCheckError::Shape {
            analytic: analytic.shape(),
            param: x.shape(),
        });
    }
    if !f0.is_finite() {
        return Err(GradCheckError::NonFinite { row: 0, col: 0 });
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
    };
    let mut probe = x.clone();
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let orig = x.get(r, c);
            probe.set(r, c, orig + h);
            let (fp, _) = f(&probe);
            probe.set(r, c, orig - h);
            let (fm, _) = f(&probe);
            probe.set(r, c, orig);
            if !fp.is_finite() || !fm.is_finite() {
                return Err(GradCheckError::NonFinite { row: r, col: c });
            }
            let numeric = (fp - fm) / (2.0 * h);
            let err = (analytic.get(r, c) - numeric).abs() / numeric.abs().max(1.0);
            if err > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: err,
                    worst: (r, c),
                };
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    #[test]
    fn quadratic_is_exact() {
        let mut rng = Rng::new(9);
        let x = Matrix::from_vec(3, 2, (0..6).map(|_| rng.uniform(-5.0, 5.0)).collect()).unwrap();
        let report = grad_check(|m| (m.as_slice().iter().map(|v| v * v).sum(), m.scale(2.0)), &x, 1e-6).unwrap();
        assert!(report.max_rel_error <= 1e-8, "{report:?}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let x = Matrix::row_vector(&[1.0, 2.0]);
        let report = grad_check(|m| (m.sum(), Matrix::zeros(1, 2)), &x, 1e-6).unwrap();
        assert!(report.max_rel_error > 0.5);
    }

    #[test]
    fn non_finite_reports_index() {
        let x = Matrix::row_vector(&[1.0, 0.0]);
        let err = grad_check(
            |m| {
                let v = if m.get(0, 1) > 0.0 { f64::NAN } else { 0.0 };
                (v, Matrix::zeros(1, 2))
            },
            &x,
            1e-6,
        )
        .unwrap_err();
        assert_eq!(err, GradCheckError::NonFinite { row: 0, col: 1 });
    }

    #[test]
    fn step_size_bounds() {
        let x = Matrix::row_vector(&[1.0]);
        assert!(matches!(
            grad_check(|m| (m.sum(), Matrix::filled(1, 1, 1.0)), &x, 1e-2),
            Err(GradCheckError::StepSize(_))
        ));
    }
}
