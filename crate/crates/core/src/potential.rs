//! Potentials, the singular elliptic operator A = -Delta + 1/r^2 + V, and its
//! positivity certificate.
//!
//! The radial part is discretized in flux form: face coefficients carry the
//! cylindrical measure, the axis face coefficient is exactly zero (the flux
//! r du/dr vanishes there), and the outer wall is a homogeneous Dirichlet
//! ghost. The axial part is the periodic three-point stencil. This makes A
//! exactly symmetric in the weighted inner product, so its quadratic form is
//! a discrete Dirichlet energy and positivity can be certified by the lowest
//! eigenvalue alone.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::linalg::cg_weighted;
use crate::sampling::seeded_rng;

/// Potential V(r, z), 1-periodic in z.
#[derive(Clone)]
pub enum PotentialSpec {
    Constant(f64),
    /// The cylindrically singular benchmark potential
    /// V(r,z) = -1/(2 r^2) for r >= 1, plus 1/4 + cos(2 pi z)/8.
    /// Pointwise 1/r^2 + V >= 1/(2 r^2) + 1/8, so A is uniformly positive.
    Benchmark,
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl PotentialSpec {
    pub fn eval(&self, r: f64, z: f64) -> f64 {
        match self {
            PotentialSpec::Constant(c) => *c,
            PotentialSpec::Benchmark => benchmark_potential(r, z),
            PotentialSpec::Custom(f) => f(r, z),
        }
    }
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::Constant(c) => write!(f, "PotentialSpec::Constant({c})"),
            PotentialSpec::Benchmark => write!(f, "PotentialSpec::Benchmark"),
            PotentialSpec::Custom(_) => write!(f, "PotentialSpec::Custom(..)"),
        }
    }
}

/// V(r,z) = -1/(2 r^2) [r >= 1] + 1/4 + cos(2 pi z)/8.
pub fn benchmark_potential(r: f64, z: f64) -> f64 {
    let well = if r >= 1.0 { -0.5 / (r * r) } else { 0.0 };
    well + 0.25 + 0.125 * (TAU * z).cos()
}

/// Matrix-free A = -Delta_cyl + (1/r^2 + V) on the cell-centered grid.
#[derive(Debug, Clone)]
pub struct CylOperator {
    grid: Arc<Grid>,
    /// 1/r_i^2 + V(r_i, z_j).
    multiplier: Array2<f64>,
    /// Up-face coefficient r_{i+1/2} / (r_i dr^2); couples row i to i+1.
    cu: Vec<f64>,
    /// Down-face coefficient r_{i-1/2} / (r_i dr^2); cd[0] = 0 exactly.
    cd: Vec<f64>,
    inv_dz2: f64,
}

impl CylOperator {
    pub fn assemble(grid: &Arc<Grid>, potential: &PotentialSpec) -> Result<Self> {
        let (n_r, n_z) = (grid.n_r(), grid.n_z());
        let dr = grid.dr();
        let mut multiplier = Array2::zeros((n_r, n_z));
        for i in 0..n_r {
            let r = grid.r(i);
            for j in 0..n_z {
                let m = 1.0 / (r * r) + potential.eval(r, grid.z(j));
                if !m.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("potential multiplier at (r, z) = ({r}, {})", grid.z(j)),
                    });
                }
                multiplier[[i, j]] = m;
            }
        }
        // Face radius r_{i+1/2} = (i+1) dr exactly; the axis face i = -1/2 has
        // radius 0, so no axis boundary condition is ever needed.
        let mut cu = vec![0.0; n_r];
        let mut cd = vec![0.0; n_r];
        for i in 0..n_r {
            let r_i = grid.r(i);
            cu[i] = ((i + 1) as f64 * dr) / (r_i * dr * dr);
            cd[i] = (i as f64 * dr) / (r_i * dr * dr);
        }
        Ok(CylOperator {
            grid: Arc::clone(grid),
            multiplier,
            cu,
            cd,
            inv_dz2: 1.0 / (grid.dz() * grid.dz()),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn multiplier(&self) -> &Array2<f64> {
        &self.multiplier
    }

    /// Pointwise minimum of 1/r^2 + V; a rigorous lower bound for the
    /// smallest eigenvalue is this minus nothing (the differential part is
    /// positive semidefinite).
    pub fn min_multiplier(&self) -> f64 {
        self.multiplier.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// out = A u. The wall ghost u[n_r, j] = 0; z wraps periodically.
    pub fn apply(&self, u: &Array2<f64>, out: &mut Array2<f64>) {
        let (n_r, n_z) = (self.grid.n_r(), self.grid.n_z());
        for i in 0..n_r {
            let cu = self.cu[i];
            let cd = self.cd[i];
            for j in 0..n_z {
                let c = u[[i, j]];
                let up = if i + 1 < n_r { u[[i + 1, j]] } else { 0.0 };
                let down = if i > 0 { u[[i - 1, j]] } else { c };
                // cd[0] = 0 makes the `down` value at i = 0 irrelevant.
                let radial = -(cu * (up - c) - cd * (c - down));
                let jp = if j + 1 < n_z { j + 1 } else { 0 };
                let jm = if j > 0 { j - 1 } else { n_z - 1 };
                let axial = -(u[[i, jp]] - 2.0 * c + u[[i, jm]]) * self.inv_dz2;
                out[[i, j]] = radial + axial + self.multiplier[[i, j]] * c;
            }
        }
    }

    pub fn apply_field(&self, u: &ScalarField) -> ScalarField {
        let mut out = ScalarField::zeros(u.grid());
        self.apply(u.values(), out.values_mut());
        out
    }

    /// Q0(u) = <A u, u>_w, the quadratic form without the nonlinear terms.
    pub fn quadratic_form(&self, u: &Array2<f64>) -> f64 {
        let mut au = Array2::zeros(u.raw_dim());
        self.apply(u, &mut au);
        self.grid.inner(&au, u)
    }

    /// Smallest eigenvalue of A in the weighted inner product, computed by
    /// shifted inverse iteration with warm-started conjugate-gradient solves.
    /// The shift min(multiplier) - 1 keeps the shifted operator positive
    /// definite regardless of the sign of the spectrum.
    pub fn min_eigenvalue(&self, tol: f64) -> Result<SpectralCertificate> {
        self.min_eigenvalue_with(tol, DEFAULT_MARGIN, 2000)
    }

    pub fn min_eigenvalue_with(
        &self,
        tol: f64,
        margin: f64,
        max_outer: usize,
    ) -> Result<SpectralCertificate> {
        let grid = &self.grid;
        let sigma = self.min_multiplier() - 1.0;
        let mut shifted = |x: &Array2<f64>, out: &mut Array2<f64>| {
            self.apply(x, out);
            out.zip_mut_with(x, |o, &xv| *o -= sigma * xv);
        };

        let mut rng = seeded_rng(0xC0FF_EE00);
        let mut x = Array2::from_shape_fn((grid.n_r(), grid.n_z()), |_| {
            rng.random_range(-1.0..1.0)
        });
        let nx = grid.norm(&x);
        x.mapv_inplace(|v| v / nx);

        let mut ax = Array2::zeros(x.raw_dim());
        let mut warm: Option<Array2<f64>> = None;
        let mut lambda = 0.0;
        let mut residual = f64::INFINITY;
        let mut converged = false;
        let mut iterations = 0;
        for it in 1..=max_outer {
            iterations = it;
            let (y, _) = cg_weighted(grid, &mut shifted, &x, warm.as_ref(), 1e-12, 50_000)?;
            let ny = grid.norm(&y);
            if !(ny.is_finite() && ny > 0.0) {
                return Err(Error::IterationFailure(
                    "inverse iteration produced a degenerate vector".into(),
                ));
            }
            x = y.mapv(|v| v / ny);
            warm = Some(x.mapv(|v| v * ny));
            self.apply(&x, &mut ax);
            lambda = grid.inner(&ax, &x);
            let mut r = ax.clone();
            r.zip_mut_with(&x, |rv, &xv| *rv -= lambda * xv);
            residual = grid.norm(&r);
            if residual <= tol {
                converged = true;
                break;
            }
        }
        let passed = converged && lambda > margin;
        Ok(SpectralCertificate {
            lambda_min: lambda,
            residual,
            iterations,
            converged,
            margin,
            passed,
        })
    }

    /// Ten-pair randomized symmetry probe: max |<Au,v> - <u,Av>| relative to
    /// the norms involved.
    pub fn symmetry_defect(&self) -> f64 {
        let grid = &self.grid;
        let mut rng = seeded_rng(0x5EED_0001);
        let mut worst = 0.0f64;
        let mut au = Array2::zeros((grid.n_r(), grid.n_z()));
        let mut av = Array2::zeros((grid.n_r(), grid.n_z()));
        for _ in 0..10 {
            let u = Array2::from_shape_fn((grid.n_r(), grid.n_z()), |_| {
                rng.random_range(-1.0..1.0)
            });
            let v = Array2::from_shape_fn((grid.n_r(), grid.n_z()), |_| {
                rng.random_range(-1.0..1.0)
            });
            self.apply(&u, &mut au);
            self.apply(&v, &mut av);
            let lhs = grid.inner(&au, &v);
            let rhs = grid.inner(&u, &av);
            let scale = grid.norm(&au) * grid.norm(&v) + grid.norm(&u) * grid.norm(&av);
            worst = worst.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
        }
        worst
    }
}

/// Margin the certificate demands above zero.
pub const DEFAULT_MARGIN: f64 = 1e-6;

/// Outcome of the lowest-eigenvalue computation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralCertificate {
    pub lambda_min: f64,
    /// ||A x - lambda x||_w on the unit-norm eigenvector estimate.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub margin: f64,
    /// converged and lambda_min > margin.
    pub passed: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn benchmark_values() {
        assert_eq!(benchmark_potential(1.0, 0.0), -0.125);
        assert_eq!(benchmark_potential(0.5, 0.25), 0.25);
        assert_eq!(benchmark_potential(2.0, 0.5), 0.0);
    }

    #[test]
    fn zero_maps_to_zero() {
        let grid = Grid::shared(8, 8, 3.0, 1).unwrap();
        let op = CylOperator::assemble(&grid, &PotentialSpec::Constant(1.0)).unwrap();
        let u = Array2::zeros((8, 8));
        let mut out = Array2::from_elem((8, 8), 7.0);
        op.apply(&u, &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    /// u(r, z) = sin(2 pi z / z_len), constant in r, is an exact eigenvector
    /// of the axial stencil: on every row not touching the wall ghost,
    /// (A u)_ij = [mu_z + 1/r_i^2 + V] u_ij with
    /// mu_z = (2/dz^2)(1 - cos(2 pi dz / z_len)).
    #[test]
    fn axial_fourier_eigen_relation() {
        let grid = Grid::shared(16, 24, 5.0, 3).unwrap();
        let op = CylOperator::assemble(&grid, &PotentialSpec::Constant(0.5)).unwrap();
        let u = Array2::from_shape_fn((16, 24), |(_, j)| {
            (TAU * grid.z(j) / grid.z_len() as f64).sin()
        });
        let mut au = Array2::zeros((16, 24));
        op.apply(&u, &mut au);
        let dz = grid.dz();
        let mu_z = 2.0 / (dz * dz) * (1.0 - (TAU * dz / grid.z_len() as f64).cos());
        for i in 0..15 {
            let r = grid.r(i);
            let mu = mu_z + 1.0 / (r * r) + 0.5;
            for j in 0..24 {
                let expect = mu * u[[i, j]];
                assert!(
                    (au[[i, j]] - expect).abs() <= 1e-11 * (1.0 + mu.abs()),
                    "row {i}, col {j}: {} vs {expect}",
                    au[[i, j]]
                );
            }
        }
    }

    #[test]
    fn weighted_symmetry() {
        let grid = Grid::shared(20, 12, 4.0, 2).unwrap();
        let op = CylOperator::assemble(&grid, &PotentialSpec::Benchmark).unwrap();
        assert!(op.symmetry_defect() <= 1e-12, "defect {}", op.symmetry_defect());
    }

    #[test]
    fn quadratic_form_positive_for_positive_potential() {
        let grid = Grid::shared(16, 16, 4.0, 1).unwrap();
        let op = CylOperator::assemble(&grid, &PotentialSpec::Constant(1.0)).unwrap();
        let mut rng = seeded_rng(7);
        for _ in 0..5 {
            let u = Array2::from_shape_fn((16, 16), |_| rng.random_range(-1.0..1.0));
            let q = op.quadratic_form(&u);
            let n2 = grid.inner(&u, &u);
            assert!(q >= n2 - 1e-12 * n2, "Q = {q}, |u|^2 = {n2}");
        }
    }

    #[test]
    fn eigenvalue_constant_potential() {
        let grid = Grid::shared(24, 16, 4.0, 1).unwrap();
        let op = CylOperator::assemble(&grid, &PotentialSpec::Constant(1.0)).unwrap();
        let cert = op.min_eigenvalue(1e-9).unwrap();
        assert!(cert.converged);
        assert!(cert.passed);
        assert!(cert.residual <= 1e-9);
        // 1/r^2 >= 0 and -Delta is positive semidefinite.
        assert!(cert.lambda_min >= 1.0, "lambda = {}", cert.lambda_min);
        assert!(cert.lambda_min >= op.min_multiplier() - 1e-10);
    }

    #[test]
    fn eigenvalue_benchmark_potential() {
        let grid = Grid::shared(32, 32, 6.0, 2).unwrap();
        let op = CylOperator::assemble(&grid, &PotentialSpec::Benchmark).unwrap();
        let cert = op.min_eigenvalue(1e-8).unwrap();
        assert!(cert.passed);
        // Pointwise 1/r^2 + V >= 1/8 on every node.
        assert!(op.min_multiplier() >= 0.125 - 1e-15);
        assert!(cert.lambda_min >= 0.125 - 1e-10, "lambda = {}", cert.lambda_min);
    }

    /// Shifting V by the negated lowest eigenvalue moves it to zero: the
    /// certificate must then sit within solver noise of zero and fail the
    /// positivity margin.
    #[test]
    fn eigenvalue_shift_property() {
        let grid = Grid::shared(16, 12, 4.0, 1).unwrap();
        let base = CylOperator::assemble(&grid, &PotentialSpec::Constant(0.3)).unwrap();
        let tol = 1e-9;
        let lam = base.min_eigenvalue(tol).unwrap();
        assert!(lam.converged);
        let shifted = CylOperator::assemble(
            &grid,
            &PotentialSpec::Constant(0.3 - lam.lambda_min),
        )
        .unwrap();
        let cert = shifted.min_eigenvalue_with(tol, DEFAULT_MARGIN, 4000).unwrap();
        assert!(
            cert.lambda_min.abs() <= 10.0 * tol,
            "shifted lambda = {}",
            cert.lambda_min
        );
        assert!(!cert.passed);
    }

    /// V1 <= V2 pointwise implies lambda_min(V1) <= lambda_min(V2); the
    /// constant -1/8 lies below the benchmark potential everywhere.
    #[test]
    fn eigenvalue_monotone_in_potential() {
        let grid = Grid::shared(20, 16, 5.0, 1).unwrap();
        let low = CylOperator::assemble(&grid, &PotentialSpec::Constant(-0.125)).unwrap();
        let high = CylOperator::assemble(&grid, &PotentialSpec::Benchmark).unwrap();
        let l1 = low.min_eigenvalue(1e-9).unwrap();
        let l2 = high.min_eigenvalue(1e-9).unwrap();
        assert!(l1.lambda_min <= l2.lambda_min + 1e-8);
    }

    #[test]
    fn rejects_non_finite_potential() {
        let grid = Grid::shared(8, 8, 2.0, 1).unwrap();
        let bad = PotentialSpec::Custom(Arc::new(|r, _| 1.0 / (r - r)));
        assert!(CylOperator::assemble(&grid, &bad).is_err());
    }

    #[test]
    fn benchmark_multiplier_bound_on_any_grid() {
        for (n_r, r_max) in [(16usize, 3.0), (40, 9.0)] {
            let grid = Grid::shared(n_r, 8, r_max, 1).unwrap();
            let op = CylOperator::assemble(&grid, &PotentialSpec::Benchmark).unwrap();
            let mut expected = f64::INFINITY;
            for i in 0..n_r {
                let r = grid.r(i);
                for j in 0..8 {
                    expected =
                        expected.min(1.0 / (r * r) + benchmark_potential(r, grid.z(j)));
                }
            }
            assert_relative_eq!(op.min_multiplier(), expected);
            assert!(op.min_multiplier() >= 0.125);
        }
    }
}
