use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::features::CovarianceMatrix;

/// Generalized eigenvalues `lambda` of `det(ci - lambda * cj) = 0`, ascending.
///
/// Reduces to a symmetric problem by factoring `cj = L L^T` and solving the
/// eigenproblem of `L^-1 ci L^-T`.
pub fn generalized_eigenvalues(ci: &CovarianceMatrix, cj: &CovarianceMatrix) -> Result<Vec<f64>> {
    if ci.dim() != cj.dim() {
        return Err(Error::Numerical(format!(
            "covariance dimension mismatch: {} vs {}",
            ci.dim(),
            cj.dim()
        )));
    }
    let chol = Cholesky::new(cj.to_dmatrix())
        .ok_or_else(|| Error::Numerical("second covariance is not positive definite".into()))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(&ci.to_dmatrix())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let y = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let m = (&y + y.transpose()) * 0.5;
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Förstner distance `sqrt(sum_k ln^2 lambda_k)` between two positive
/// definite matrices. Inputs are used as given; callers regularize.
///
/// Swapping the arguments inverts every eigenvalue, so the distance is
/// symmetric in exact arithmetic. The pair is put in a canonical order first
/// so that it is also bit-for-bit symmetric in floating point.
pub fn forstner_distance(ci: &CovarianceMatrix, cj: &CovarianceMatrix) -> Result<f64> {
    if ci == cj {
        return Ok(0.0);
    }
    let swap = ci.dim() == cj.dim() && canonical_cmp(ci, cj).is_gt();
    let (ci, cj) = if swap { (cj, ci) } else { (ci, cj) };
    let ev = generalized_eigenvalues(ci, cj)?;
    if let Some(bad) = ev.iter().find(|l| **l <= 0.0 || !l.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-positive generalized eigenvalue {bad}: a covariance is not positive definite"
        )));
    }
    Ok(ev.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
}

fn canonical_cmp(a: &CovarianceMatrix, b: &CovarianceMatrix) -> std::cmp::Ordering {
    a.entries()
        .iter()
        .zip(b.entries())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}
