//! Matrix-free conjugate gradients in the weighted inner product.
//!
//! The discrete operators of this crate are symmetric with respect to the
//! cylindrical quadrature weights, not the Euclidean dot product, so CG runs
//! with all inner products taken as sum_ij w_ij a_ij b_ij.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Convergence diagnostics; only tests read them today.
#[allow(dead_code)]
pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Solves A x = b for a map `apply` that is symmetric positive definite in the
/// weighted inner product. `x0` provides a warm start. Convergence is
/// declared at relative residual `tol` (measured against ||b||).
pub(crate) fn cg_weighted(
    grid: &Grid,
    apply: &mut dyn FnMut(&Array2<f64>, &mut Array2<f64>),
    b: &Array2<f64>,
    x0: Option<&Array2<f64>>,
    tol: f64,
    max_iters: usize,
) -> Result<(Array2<f64>, CgOutcome)> {
    let norm_b = grid.norm(b);
    if norm_b == 0.0 {
        return Ok((
            Array2::zeros(b.dim()),
            CgOutcome {
                iterations: 0,
                rel_residual: 0.0,
            },
        ));
    }

    let mut x = match x0 {
        Some(x0) => x0.clone(),
        None => Array2::zeros(b.dim()),
    };
    let mut ax = Array2::zeros(b.dim());
    apply(&x, &mut ax);
    let mut res = b - &ax;
    let mut p = res.clone();
    let mut rr = grid.inner(&res, &res);
    let mut ap = Array2::zeros(b.dim());

    for it in 0..max_iters {
        let rel = rr.max(0.0).sqrt() / norm_b;
        if rel <= tol {
            return Ok((
                x,
                CgOutcome {
                    iterations: it,
                    rel_residual: rel,
                },
            ));
        }
        apply(&p, &mut ap);
        let pap = grid.inner(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return Err(Error::IterationFailure(format!(
                "CG curvature not positive (p.Ap = {pap:.3e}); operator not positive definite"
            )));
        }
        let alpha = rr / pap;
        x.zip_mut_with(&p, |xi, &pi| *xi += alpha * pi);
        res.zip_mut_with(&ap, |ri, &api| *ri -= alpha * api);
        let rr_new = grid.inner(&res, &res);
        let beta = rr_new / rr;
        rr = rr_new;
        p.zip_mut_with(&res, |pi, &ri| *pi = ri + beta * *pi);
        // Periodic residual refresh guards against drift in long solves.
        if it % 256 == 255 {
            apply(&x, &mut ax);
            res = b - &ax;
            rr = grid.inner(&res, &res);
            p = res.clone();
        }
    }

    let rel = rr.max(0.0).sqrt() / norm_b;
    if rel <= tol {
        Ok((
            x,
            CgOutcome {
                iterations: max_iters,
                rel_residual: rel,
            },
        ))
    } else {
        Err(Error::IterationFailure(format!(
            "CG stalled at relative residual {rel:.3e} after {max_iters} iterations"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_diagonal_system() {
        let grid = Grid::new(8, 8, 2.0, 1).unwrap();
        let diag = Array2::from_shape_fn((8, 8), |(i, j)| 1.0 + (i + 2 * j) as f64 * 0.1);
        let x_true = Array2::from_shape_fn((8, 8), |(i, j)| (i as f64 - j as f64) * 0.3);
        let b = &diag * &x_true;
        let mut apply = |x: &Array2<f64>, out: &mut Array2<f64>| {
            out.assign(&( &diag * x ));
        };
        let (x, outcome) = cg_weighted(&grid, &mut apply, &b, None, 1e-12, 500).unwrap();
        let err = grid.norm(&(&x - &x_true)) / grid.norm(&x_true);
        assert!(err < 1e-10, "error {err}, iterations {}", outcome.iterations);
    }

    #[test]
    fn rejects_indefinite_operator() {
        let grid = Grid::new(4, 4, 1.0, 1).unwrap();
        let b = Array2::ones((4, 4));
        let mut apply = |x: &Array2<f64>, out: &mut Array2<f64>| {
            out.assign(&(x * -1.0));
        };
        assert!(cg_weighted(&grid, &mut apply, &b, None, 1e-10, 50).is_err());
    }
}
