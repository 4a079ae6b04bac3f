//! Truncated cylindrical computational domain.
//!
//! The domain is the solid cylinder {r <= r_max} x [0, z_len) with a periodic
//! axial direction. Radial nodes are cell-centered, r_i = (i + 1/2) dr, so the
//! 1/r^2 term of the reduced operator is always finite on nodes; scalar fields
//! follow a Dirichlet ghost convention (value 0) at the axis and at the outer
//! wall. The axial period z_len is an integer, which makes 1-periodic
//! coefficients and integer z-shifts exact grid symmetries.
//!
//! Quadrature is the cylindrical midpoint/trapezoid rule with weights
//! w_ij = 2 pi r_i dr dz; it is second-order accurate and exact for
//! z-constants, and nonzero axial Fourier modes integrate to zero up to
//! rounding.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Immutable description of the truncated cylinder and its quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n_r: usize,
    n_z: usize,
    r_max: f64,
    z_len: u32,
    dr: f64,
    dz: f64,
    r: Vec<f64>,
    z: Vec<f64>,
    /// Row quadrature weight 2 pi r_i dr dz (independent of j).
    row_weight: Vec<f64>,
}

impl Grid {
    /// Builds the grid. Requires n_r, n_z >= 4, r_max > 0 and z_len >= 1;
    /// z_len is an integer by type so a fractional period cannot be expressed.
    pub fn new(n_r: usize, n_z: usize, r_max: f64, z_len: u32) -> Result<Self> {
        if n_r < 4 || n_z < 4 {
            return Err(Error::Grid(format!(
                "need at least 4 cells per direction, got n_r = {n_r}, n_z = {n_z}"
            )));
        }
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::Grid(format!("r_max must be positive, got {r_max}")));
        }
        if z_len < 1 {
            return Err(Error::Grid("z_len must be a positive integer".into()));
        }
        let dr = r_max / n_r as f64;
        let dz = f64::from(z_len) / n_z as f64;
        let r: Vec<f64> = (0..n_r).map(|i| (i as f64 + 0.5) * dr).collect();
        let z: Vec<f64> = (0..n_z).map(|j| j as f64 * dz).collect();
        let row_weight: Vec<f64> = r
            .iter()
            .map(|&ri| 2.0 * std::f64::consts::PI * ri * dr * dz)
            .collect();
        Ok(Grid {
            n_r,
            n_z,
            r_max,
            z_len,
            dr,
            dz,
            r,
            z,
            row_weight,
        })
    }

    /// Convenience constructor returning a shareable handle.
    pub fn shared(n_r: usize, n_z: usize, r_max: f64, z_len: u32) -> Result<Arc<Self>> {
        Ok(Arc::new(Self::new(n_r, n_z, r_max, z_len)?))
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn z_len(&self) -> u32 {
        self.z_len
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    /// Cell-centered radial node r_i = (i + 1/2) dr; always > 0.
    pub fn r(&self, i: usize) -> f64 {
        self.r[i]
    }

    /// Axial node z_j = j dz (periodic, z_{n_z} wraps to 0).
    pub fn z(&self, j: usize) -> f64 {
        self.z[j]
    }

    pub fn r_nodes(&self) -> &[f64] {
        &self.r
    }

    pub fn z_nodes(&self) -> &[f64] {
        &self.z
    }

    /// Quadrature weight w_ij = 2 pi r_i dr dz; independent of j.
    pub fn weight(&self, i: usize) -> f64 {
        self.row_weight[i]
    }

    /// Total measure pi r_max^2 z_len of the truncated cylinder.
    pub fn total_measure(&self) -> f64 {
        std::f64::consts::PI * self.r_max * self.r_max * f64::from(self.z_len)
    }

    /// Number of grid cells per unit axial period, when the grid resolves the
    /// unit period exactly (n_z divisible by z_len). Unit-period shifts are
    /// exact symmetries of 1-periodic coefficients only in that case.
    pub fn unit_period_cells(&self) -> Option<usize> {
        let z = self.z_len as usize;
        (self.n_z % z == 0).then(|| self.n_z / z)
    }

    /// Cylindrical quadrature of nodal values: sum_ij w_ij v_ij.
    pub fn integrate(&self, values: &Array2<f64>) -> f64 {
        assert_eq!(
            values.dim(),
            (self.n_r, self.n_z),
            "value array shape does not match grid"
        );
        let mut total = 0.0;
        for i in 0..self.n_r {
            let w = self.row_weight[i];
            let mut row = 0.0;
            for j in 0..self.n_z {
                row += values[[i, j]];
            }
            total += w * row;
        }
        total
    }

    /// Weighted inner product sum_ij w_ij a_ij b_ij.
    pub fn inner(&self, a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        assert_eq!(a.dim(), (self.n_r, self.n_z));
        assert_eq!(b.dim(), (self.n_r, self.n_z));
        let mut total = 0.0;
        for i in 0..self.n_r {
            let w = self.row_weight[i];
            let mut row = 0.0;
            for j in 0..self.n_z {
                row += a[[i, j]] * b[[i, j]];
            }
            total += w * row;
        }
        total
    }

    /// Weighted L2 norm.
    pub fn norm(&self, a: &Array2<f64>) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }
}

/// Nodal values of a cylindrically symmetric scalar field u(r, z).
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Array2<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ScalarField {
            grid: Arc::clone(grid),
            values: Array2::zeros((grid.n_r(), grid.n_z())),
        }
    }

    /// Samples f(r, z) at the grid nodes.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values =
            Array2::from_shape_fn((grid.n_r(), grid.n_z()), |(i, j)| f(grid.r(i), grid.z(j)));
        ScalarField {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (grid.n_r(), grid.n_z()) {
            return Err(Error::Grid(format!(
                "value array of shape {:?} does not match grid ({}, {})",
                values.dim(),
                grid.n_r(),
                grid.n_z()
            )));
        }
        Ok(ScalarField {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Integral of the field itself.
    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Weighted L2 inner product with another field on the same grid.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        self.assert_same_grid(other);
        self.grid.inner(&self.values, &other.values)
    }

    /// Weighted L2 norm.
    pub fn norm(&self) -> f64 {
        self.grid.norm(&self.values)
    }

    pub fn scaled(&self, s: f64) -> Self {
        ScalarField {
            grid: Arc::clone(&self.grid),
            values: &self.values * s,
        }
    }

    /// In-place self += alpha * other.
    pub fn axpy(&mut self, alpha: f64, other: &ScalarField) {
        self.assert_same_grid(other);
        self.values.zip_mut_with(&other.values, |a, &b| *a += alpha * b);
    }

    /// Returns self - alpha * other.
    pub fn minus_scaled(&self, alpha: f64, other: &ScalarField) -> Self {
        let mut out = self.clone();
        out.axpy(-alpha, other);
        out
    }

    /// Circular shift by k cells along z: result(r, z_j) = self(r, z_{j-k}).
    /// An exact permutation of values; no interpolation.
    pub fn shift_z(&self, k: i64) -> Self {
        let n_z = self.grid.n_z() as i64;
        let mut out = Array2::zeros(self.values.dim());
        for i in 0..self.grid.n_r() {
            for j in 0..self.grid.n_z() {
                let src = (j as i64 - k).rem_euclid(n_z) as usize;
                out[[i, j]] = self.values[[i, src]];
            }
        }
        ScalarField {
            grid: Arc::clone(&self.grid),
            values: out,
        }
    }

    fn assert_same_grid(&self, other: &ScalarField) {
        assert!(
            Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid,
            "fields live on different grids"
        );
    }
}
