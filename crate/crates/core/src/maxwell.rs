//! 3-D vector fields built from the reduced scalar profile, discrete vector
//! calculus on the cylindrical sampling, and the energy-equivalence
//! certificate tying the two formulations together.
//!
//! Fields are sampled on the tensor grid (r_i, theta_k, z_j) and store
//! Cartesian components, so rotations act on values as well as sample points
//! and curl/div keep their frame-free formulas. Differentiation is
//! trigonometric in theta (exact on resolved frequencies) and second-order
//! central in r and z; the r stencil reflects through the axis (a point at
//! negative radius is the point at theta + pi) and switches to a one-sided
//! second-order stencil at the outer wall.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use ndarray::Array3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::Problem;
use crate::grid::{Grid, ScalarField};
use crate::nonlinearity::NonlinearitySpec;
use crate::potential::PotentialSpec;
use crate::sampling::{seeded_rng, smooth_random_field};

/// Three Cartesian components sampled on the (r, theta, z) tensor grid.
/// All values finite; the theta index is periodic.
#[derive(Debug, Clone)]
pub struct VectorField3 {
    grid: Arc<Grid>,
    n_theta: usize,
    e1: Array3<f64>,
    e2: Array3<f64>,
    e3: Array3<f64>,
}

fn validate_n_theta(n_theta: usize) -> Result<()> {
    if n_theta < 8 {
        return Err(Error::Invalid(format!(
            "angular sampling needs at least 8 nodes, got {n_theta}"
        )));
    }
    Ok(())
}

impl VectorField3 {
    pub fn zeros(grid: &Arc<Grid>, n_theta: usize) -> Result<Self> {
        validate_n_theta(n_theta)?;
        let shape = (grid.n_r(), n_theta, grid.n_z());
        Ok(VectorField3 {
            grid: Arc::clone(grid),
            n_theta,
            e1: Array3::zeros(shape),
            e2: Array3::zeros(shape),
            e3: Array3::zeros(shape),
        })
    }

    /// Samples `f(x1, x2, x3) -> [E1, E2, E3]` at every node.
    pub fn from_fn(
        grid: &Arc<Grid>,
        n_theta: usize,
        f: impl Fn(f64, f64, f64) -> [f64; 3],
    ) -> Result<Self> {
        let mut out = Self::zeros(grid, n_theta)?;
        for i in 0..grid.n_r() {
            let r = grid.r(i);
            for k in 0..n_theta {
                let th = out.theta(k);
                let (x1, x2) = (r * th.cos(), r * th.sin());
                for j in 0..grid.n_z() {
                    let v = f(x1, x2, grid.z(j));
                    out.e1[[i, k, j]] = v[0];
                    out.e2[[i, k, j]] = v[1];
                    out.e3[[i, k, j]] = v[2];
                }
            }
        }
        if !out.is_finite() {
            return Err(Error::NonFinite {
                context: "vector field construction".into(),
            });
        }
        Ok(out)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn theta(&self, k: usize) -> f64 {
        TAU * k as f64 / self.n_theta as f64
    }

    pub fn components(&self) -> (&Array3<f64>, &Array3<f64>, &Array3<f64>) {
        (&self.e1, &self.e2, &self.e3)
    }

    pub fn magnitude(&self, i: usize, k: usize, j: usize) -> f64 {
        let idx = [i, k, j];
        self.e1[idx].hypot(self.e2[idx]).hypot(self.e3[idx])
    }

    /// Cell measure r_i dr dtheta dz of every node in row i.
    pub fn node_weight(&self, i: usize) -> f64 {
        self.grid.r(i) * self.grid.dr() * (TAU / self.n_theta as f64) * self.grid.dz()
    }

    pub fn is_finite(&self) -> bool {
        self.e1.iter().all(|v| v.is_finite())
            && self.e2.iter().all(|v| v.is_finite())
            && self.e3.iter().all(|v| v.is_finite())
    }

    pub fn inner(&self, other: &VectorField3) -> f64 {
        assert_eq!(self.e1.dim(), other.e1.dim(), "sampling mismatch");
        let mut total = 0.0;
        for i in 0..self.grid.n_r() {
            let w = self.node_weight(i);
            let mut row = 0.0;
            for k in 0..self.n_theta {
                for j in 0..self.grid.n_z() {
                    let idx = [i, k, j];
                    row += self.e1[idx] * other.e1[idx]
                        + self.e2[idx] * other.e2[idx]
                        + self.e3[idx] * other.e3[idx];
                }
            }
            total += w * row;
        }
        total
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().max(0.0).sqrt()
    }

    /// self += alpha * other.
    pub fn axpy(&mut self, alpha: f64, other: &VectorField3) {
        assert_eq!(self.e1.dim(), other.e1.dim(), "sampling mismatch");
        self.e1.zip_mut_with(&other.e1, |a, &b| *a += alpha * b);
        self.e2.zip_mut_with(&other.e2, |a, &b| *a += alpha * b);
        self.e3.zip_mut_with(&other.e3, |a, &b| *a += alpha * b);
    }
}

/// E(x) = u(r, z)/r * (-x2, x1, 0): tangential, axis-regular and |E| = |u|
/// at every node.
pub fn reconstruct_e(u: &ScalarField, n_theta: usize) -> Result<VectorField3> {
    validate_n_theta(n_theta)?;
    let grid = u.grid();
    let mut out = VectorField3::zeros(grid, n_theta)?;
    for k in 0..n_theta {
        let th = out.theta(k);
        let (sin, cos) = (th.sin(), th.cos());
        for i in 0..grid.n_r() {
            for j in 0..grid.n_z() {
                let val = u.values()[[i, j]];
                out.e1[[i, k, j]] = -val * sin;
                out.e2[[i, k, j]] = val * cos;
            }
        }
    }
    Ok(out)
}

/// Recovers u as the theta average of the tangential component and reports
/// the squared-mass fraction of E outside the reconstructed form.
pub fn extract_u(e: &VectorField3) -> (ScalarField, f64) {
    let grid = e.grid();
    let n = e.n_theta();
    let mut u = ScalarField::zeros(grid);
    for i in 0..grid.n_r() {
        for j in 0..grid.n_z() {
            let mut acc = 0.0;
            for k in 0..n {
                let th = e.theta(k);
                acc += -th.sin() * e.e1[[i, k, j]] + th.cos() * e.e2[[i, k, j]];
            }
            u.values_mut()[[i, j]] = acc / n as f64;
        }
    }
    let total = e.norm_sq();
    if total <= 0.0 {
        return (u, 0.0);
    }
    let recon = reconstruct_e(&u, n).expect("n_theta already validated");
    let mut outside = 0.0;
    for i in 0..grid.n_r() {
        let w = e.node_weight(i);
        let mut row = 0.0;
        for k in 0..n {
            for j in 0..grid.n_z() {
                let idx = [i, k, j];
                let d1 = e.e1[idx] - recon.e1[idx];
                let d2 = e.e2[idx] - recon.e2[idx];
                let d3 = e.e3[idx];
                row += d1 * d1 + d2 * d2 + d3 * d3;
            }
        }
        outside += w * row;
    }
    (u, outside / total)
}

/// Pointwise orthogonal split along (x1, x2, 0), (-x2, x1, 0), (0, 0, 1).
#[derive(Debug, Clone)]
pub struct ComponentSplit {
    pub rho: VectorField3,
    pub tau: VectorField3,
    pub zeta: VectorField3,
}

pub fn project_components(e: &VectorField3) -> ComponentSplit {
    let grid = e.grid();
    let n = e.n_theta();
    let mut rho = VectorField3::zeros(grid, n).expect("existing field has valid n_theta");
    let mut tau = rho.clone();
    let mut zeta = rho.clone();
    for k in 0..n {
        let th = e.theta(k);
        let (sin, cos) = (th.sin(), th.cos());
        for i in 0..grid.n_r() {
            for j in 0..grid.n_z() {
                let idx = [i, k, j];
                let c_rho = e.e1[idx] * cos + e.e2[idx] * sin;
                let c_tau = -e.e1[idx] * sin + e.e2[idx] * cos;
                rho.e1[idx] = c_rho * cos;
                rho.e2[idx] = c_rho * sin;
                tau.e1[idx] = -c_tau * sin;
                tau.e2[idx] = c_tau * cos;
                zeta.e3[idx] = e.e3[idx];
            }
        }
    }
    ComponentSplit { rho, tau, zeta }
}

/// Trigonometric cardinal function on n uniform nodes.
fn interp_kernel(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let s = half.sin();
    if s.abs() < 1e-14 {
        return 1.0;
    }
    let nf = n as f64;
    if n % 2 == 0 {
        (nf * half).sin() * half.cos() / (nf * s)
    } else {
        (nf * half).sin() / (nf * s)
    }
}

/// Weights w[m] so that f(theta_k + phi) = sum_m w[m] f[(k + m) mod n].
fn theta_shift_weights(n: usize, phi: f64) -> Vec<f64> {
    let dth = TAU / n as f64;
    (0..n)
        .map(|m| interp_kernel(n, phi - m as f64 * dth))
        .collect()
}

/// Removes the alternating theta mode of each component. An off-grid
/// rotation has no consistent action on that mode (its shift is not a pure
/// phase), and equivariant fields carry none of it.
fn remove_theta_nyquist(a: &mut Array3<f64>, n_theta: usize) {
    let (n_r, _, n_z) = a.dim();
    let nf = n_theta as f64;
    for i in 0..n_r {
        for j in 0..n_z {
            let mut c = 0.0;
            for k in 0..n_theta {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                c += sign * a[[i, k, j]];
            }
            c /= nf;
            for k in 0..n_theta {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                a[[i, k, j]] -= sign * c;
            }
        }
    }
}

/// Discrete Haar average over n_angles uniform rotations about the z-axis,
/// rotating both the sample point and the component vector. Fixes
/// equivariant fields and is idempotent.
pub fn symmetrize_so(e: &VectorField3, n_angles: usize) -> Result<VectorField3> {
    if n_angles < 4 {
        return Err(Error::Invalid(format!(
            "rotation averaging needs at least 4 angles, got {n_angles}"
        )));
    }
    let grid = e.grid();
    let n = e.n_theta();
    let needs_interp =
        (1..n_angles).any(|a| (a * n) % n_angles != 0) && n % 2 == 0;
    let mut source = e.clone();
    if needs_interp {
        remove_theta_nyquist(&mut source.e1, n);
        remove_theta_nyquist(&mut source.e2, n);
        remove_theta_nyquist(&mut source.e3, n);
    }
    let mut out = VectorField3::zeros(grid, n)?;
    let inv = 1.0 / n_angles as f64;
    for a in 0..n_angles {
        let phi = TAU * a as f64 / n_angles as f64;
        let (sin, cos) = (phi.sin(), phi.cos());
        // Values of each component at theta_k + phi: an index shift when
        // phi lands on the sampling, trigonometric interpolation otherwise.
        let weights = if (a * n) % n_angles == 0 {
            None
        } else {
            Some(theta_shift_weights(n, phi))
        };
        for i in 0..grid.n_r() {
            for k in 0..n {
                for j in 0..grid.n_z() {
                    let (v1, v2, v3) = match &weights {
                        None => {
                            let ks = (k + a * n / n_angles) % n;
                            (
                                source.e1[[i, ks, j]],
                                source.e2[[i, ks, j]],
                                source.e3[[i, ks, j]],
                            )
                        }
                        Some(w) => {
                            let mut acc = [0.0; 3];
                            for (m, wm) in w.iter().enumerate() {
                                let kk = (k + m) % n;
                                acc[0] += wm * source.e1[[i, kk, j]];
                                acc[1] += wm * source.e2[[i, kk, j]];
                                acc[2] += wm * source.e3[[i, kk, j]];
                            }
                            (acc[0], acc[1], acc[2])
                        }
                    };
                    out.e1[[i, k, j]] += inv * (cos * v1 + sin * v2);
                    out.e2[[i, k, j]] += inv * (-sin * v1 + cos * v2);
                    out.e3[[i, k, j]] += inv * v3;
                }
            }
        }
    }
    Ok(out)
}

/// Antisymmetric circulant weights of the trigonometric derivative:
/// (Df)_k = sum_{m=1}^{n-1} c[m] f_{k-m}.
fn theta_derivative_weights(n: usize) -> Vec<f64> {
    let dth = TAU / n as f64;
    let mut c = vec![0.0; n];
    for (m, cm) in c.iter_mut().enumerate().skip(1) {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let half = 0.5 * m as f64 * dth;
        *cm = if n % 2 == 0 {
            0.5 * sign / half.tan()
        } else {
            0.5 * sign / half.sin()
        };
    }
    c
}

fn theta_derivative(a: &Array3<f64>, n_theta: usize) -> Array3<f64> {
    let (n_r, _, n_z) = a.dim();
    let c = theta_derivative_weights(n_theta);
    let mut out = Array3::zeros((n_r, n_theta, n_z));
    for i in 0..n_r {
        for k in 0..n_theta {
            for (m, &cm) in c.iter().enumerate().skip(1) {
                let km = (k + n_theta - m) % n_theta;
                for j in 0..n_z {
                    out[[i, k, j]] += cm * a[[i, km, j]];
                }
            }
        }
    }
    out
}

/// Central differences in r with axis reflection (value at theta + pi) and
/// a one-sided second-order stencil at the wall.
fn radial_derivative(a: &Array3<f64>, grid: &Grid, n_theta: usize) -> Array3<f64> {
    let (n_r, _, n_z) = a.dim();
    let inv2 = 1.0 / (2.0 * grid.dr());
    let half_turn: Option<Vec<f64>> = if n_theta % 2 == 0 {
        None
    } else {
        Some(theta_shift_weights(n_theta, PI))
    };
    let mut out = Array3::zeros((n_r, n_theta, n_z));
    for k in 0..n_theta {
        for j in 0..n_z {
            let ghost = match &half_turn {
                None => a[[0, (k + n_theta / 2) % n_theta, j]],
                Some(w) => (0..n_theta)
                    .map(|m| w[m] * a[[0, (k + m) % n_theta, j]])
                    .sum(),
            };
            out[[0, k, j]] = (a[[1, k, j]] - ghost) * inv2;
            for i in 1..n_r - 1 {
                out[[i, k, j]] = (a[[i + 1, k, j]] - a[[i - 1, k, j]]) * inv2;
            }
            let i = n_r - 1;
            out[[i, k, j]] =
                (3.0 * a[[i, k, j]] - 4.0 * a[[i - 1, k, j]] + a[[i - 2, k, j]]) * inv2;
        }
    }
    out
}

fn axial_derivative(a: &Array3<f64>, grid: &Grid) -> Array3<f64> {
    let (n_r, n_th, n_z) = a.dim();
    let inv2 = 1.0 / (2.0 * grid.dz());
    let mut out = Array3::zeros((n_r, n_th, n_z));
    for i in 0..n_r {
        for k in 0..n_th {
            for j in 0..n_z {
                let up = a[[i, k, (j + 1) % n_z]];
                let down = a[[i, k, (j + n_z - 1) % n_z]];
                out[[i, k, j]] = (up - down) * inv2;
            }
        }
    }
    out
}

/// Discrete divergence and curl of a sampled field.
#[derive(Debug, Clone)]
pub struct VectorCalculus {
    pub div: Array3<f64>,
    pub curl: VectorField3,
}

impl VectorCalculus {
    pub fn div_l2(&self) -> f64 {
        let grid = self.curl.grid();
        let mut total = 0.0;
        for i in 0..grid.n_r() {
            let w = self.curl.node_weight(i);
            let mut row = 0.0;
            for k in 0..self.curl.n_theta() {
                for j in 0..grid.n_z() {
                    row += self.div[[i, k, j]] * self.div[[i, k, j]];
                }
            }
            total += w * row;
        }
        total.max(0.0).sqrt()
    }
}

pub fn vector_calculus(e: &VectorField3) -> VectorCalculus {
    let grid = e.grid();
    let n = e.n_theta();
    let (n_r, n_z) = (grid.n_r(), grid.n_z());
    let mut div = Array3::zeros((n_r, n, n_z));
    let mut curl = VectorField3::zeros(grid, n).expect("existing field has valid n_theta");

    // Cartesian partials per component from the cylindrical chain rule:
    // d/dx1 = cos dR - sin/r dTh, d/dx2 = sin dR + cos/r dTh, d/dx3 = dZ.
    let parts = |field: &Array3<f64>| {
        (
            radial_derivative(field, grid, n),
            theta_derivative(field, n),
            axial_derivative(field, grid),
        )
    };
    let (r1, t1, z1) = parts(&e.e1);
    let (r2, t2, z2) = parts(&e.e2);
    let (r3, t3, z3) = parts(&e.e3);
    for k in 0..n {
        let th = e.theta(k);
        let (sin, cos) = (th.sin(), th.cos());
        for i in 0..n_r {
            let inv_r = 1.0 / grid.r(i);
            for j in 0..n_z {
                let idx = [i, k, j];
                let d1 = |dr: f64, dth: f64| cos * dr - sin * inv_r * dth;
                let d2 = |dr: f64, dth: f64| sin * dr + cos * inv_r * dth;
                let e1_x1 = d1(r1[idx], t1[idx]);
                let e2_x1 = d1(r2[idx], t2[idx]);
                let e3_x1 = d1(r3[idx], t3[idx]);
                let e1_x2 = d2(r1[idx], t1[idx]);
                let e2_x2 = d2(r2[idx], t2[idx]);
                let e3_x2 = d2(r3[idx], t3[idx]);
                div[idx] = e1_x1 + e2_x2 + z3[idx];
                curl.e1[idx] = e3_x2 - z2[idx];
                curl.e2[idx] = z1[idx] - e3_x1;
                curl.e3[idx] = e2_x1 - e1_x2;
            }
        }
    }
    VectorCalculus { div, curl }
}

/// 1/2 int |curl E|^2 + 1/2 int V |E|^2 - int H(x, E) with the nonlinear
/// density H evaluated in closed form at |E| (the line integral of the
/// pointwise nonlinearity along t E collapses to the primitive at |E|).
pub fn energy_e(prob: &Problem, e: &VectorField3) -> Result<f64> {
    let grid = e.grid();
    assert_eq!(
        (grid.n_r(), grid.n_z()),
        (prob.grid().n_r(), prob.grid().n_z()),
        "field and problem live on different grids"
    );
    if !e.is_finite() {
        return Err(Error::NonFinite {
            context: "maxwell energy input".into(),
        });
    }
    let curl_sq = vector_calculus(e).curl.norm_sq();
    let nl = prob.nonlinearity();
    let mult = prob.operator().multiplier();
    let mut v_term = 0.0;
    let mut h_term = 0.0;
    for i in 0..grid.n_r() {
        let w = e.node_weight(i);
        let r = grid.r(i);
        let inv_r2 = 1.0 / (r * r);
        let mut row_v = 0.0;
        let mut row_h = 0.0;
        for j in 0..grid.n_z() {
            let v = mult[[i, j]] - inv_r2;
            let z = grid.z(j);
            for k in 0..e.n_theta() {
                let idx = [i, k, j];
                let sq = e.e1[idx] * e.e1[idx] + e.e2[idx] * e.e2[idx] + e.e3[idx] * e.e3[idx];
                row_v += v * sq;
                row_h += nl.big_f_tilde(r, z, sq.max(0.0).sqrt());
            }
        }
        v_term += w * row_v;
        h_term += w * row_h;
    }
    let total = 0.5 * curl_sq + 0.5 * v_term - h_term;
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: "maxwell energy".into(),
        });
    }
    Ok(total)
}

/// Weak pairing int grad E : grad W + int V E.W - int h(x, E).W with the
/// gradient term in flux form (face differences in r and z, trigonometric
/// in theta). For fields of the reconstructed shape the pairing collapses
/// algebraically to the reduced bilinear form, which is what the
/// equivalence check exercises.
pub fn weak_residual(prob: &Problem, e: &VectorField3, test: &VectorField3) -> Result<f64> {
    let grid = e.grid();
    assert_eq!(e.e1.dim(), test.e1.dim(), "sampling mismatch");
    let n = e.n_theta();
    let (n_r, n_z) = (grid.n_r(), grid.n_z());
    let (dr, dz) = (grid.dr(), grid.dz());
    let dth = TAU / n as f64;
    let nl = prob.nonlinearity();
    let mult = prob.operator().multiplier();

    let mut grad_term = 0.0;
    // r faces between rows i and i+1 at radius (i+1) dr; the axis face has
    // zero radius and drops; the wall face pairs against a zero ghost.
    for i in 0..n_r {
        let face_w = (i + 1) as f64 * dr * dr * dth * dz / (dr * dr);
        let mut face = 0.0;
        for k in 0..n {
            for j in 0..n_z {
                let idx = [i, k, j];
                let (de1, de2, de3, dw1, dw2, dw3) = if i + 1 < n_r {
                    let up = [i + 1, k, j];
                    (
                        e.e1[up] - e.e1[idx],
                        e.e2[up] - e.e2[idx],
                        e.e3[up] - e.e3[idx],
                        test.e1[up] - test.e1[idx],
                        test.e2[up] - test.e2[idx],
                        test.e3[up] - test.e3[idx],
                    )
                } else {
                    (
                        -e.e1[idx], -e.e2[idx], -e.e3[idx],
                        -test.e1[idx], -test.e2[idx], -test.e3[idx],
                    )
                };
                face += de1 * dw1 + de2 * dw2 + de3 * dw3;
            }
        }
        grad_term += face_w * face;
    }
    // z faces, periodic.
    for i in 0..n_r {
        let face_w = grid.r(i) * dr * dth * dz / (dz * dz);
        let mut face = 0.0;
        for k in 0..n {
            for j in 0..n_z {
                let idx = [i, k, j];
                let up = [i, k, (j + 1) % n_z];
                face += (e.e1[up] - e.e1[idx]) * (test.e1[up] - test.e1[idx])
                    + (e.e2[up] - e.e2[idx]) * (test.e2[up] - test.e2[idx])
                    + (e.e3[up] - e.e3[idx]) * (test.e3[up] - test.e3[idx]);
            }
        }
        grad_term += face_w * face;
    }
    // theta term at centers, trigonometric derivatives.
    let (et1, et2, et3) = (
        theta_derivative(&e.e1, n),
        theta_derivative(&e.e2, n),
        theta_derivative(&e.e3, n),
    );
    let (wt1, wt2, wt3) = (
        theta_derivative(&test.e1, n),
        theta_derivative(&test.e2, n),
        theta_derivative(&test.e3, n),
    );
    for i in 0..n_r {
        let w = grid.r(i) * dr * dth * dz / (grid.r(i) * grid.r(i));
        let mut row = 0.0;
        for k in 0..n {
            for j in 0..n_z {
                let idx = [i, k, j];
                row += et1[idx] * wt1[idx] + et2[idx] * wt2[idx] + et3[idx] * wt3[idx];
            }
        }
        grad_term += w * row;
    }

    let mut v_term = 0.0;
    let mut h_term = 0.0;
    for i in 0..n_r {
        let w = e.node_weight(i);
        let r = grid.r(i);
        let inv_r2 = 1.0 / (r * r);
        let mut row_v = 0.0;
        let mut row_h = 0.0;
        for j in 0..n_z {
            let v = mult[[i, j]] - inv_r2;
            let z = grid.z(j);
            for k in 0..n {
                let idx = [i, k, j];
                let dot = e.e1[idx] * test.e1[idx]
                    + e.e2[idx] * test.e2[idx]
                    + e.e3[idx] * test.e3[idx];
                row_v += v * dot;
                let s = e.magnitude(i, k, j);
                if s > 0.0 {
                    row_h += nl.f_tilde(r, z, s) / s * dot;
                }
            }
        }
        v_term += w * row_v;
        h_term += w * row_h;
    }
    let total = grad_term + v_term - h_term;
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: "maxwell weak residual".into(),
        });
    }
    Ok(total)
}

/// Interpolates u onto a grid refined by an integer factor in r and z:
/// trigonometric in the periodic direction, local cubic in r with odd
/// reflection through the axis and an inward-shifted stencil at the wall.
pub fn refine_scalar(u: &ScalarField, factor: usize) -> Result<ScalarField> {
    if factor == 0 {
        return Err(Error::Invalid("refinement factor must be positive".into()));
    }
    let coarse = u.grid();
    if factor == 1 {
        return Ok(u.clone());
    }
    let fine = Grid::shared(
        coarse.n_r() * factor,
        coarse.n_z() * factor,
        coarse.r_max(),
        coarse.z_len(),
    )?;
    let (n_rc, n_zc) = (coarse.n_r(), coarse.n_z());
    let (n_rf, n_zf) = (fine.n_r(), fine.n_z());

    // Stage 1: periodic trigonometric interpolation in z on coarse rows.
    let mut stage = ndarray::Array2::<f64>::zeros((n_rc, n_zf));
    let period = f64::from(coarse.z_len());
    for jf in 0..n_zf {
        let x = TAU * fine.z(jf) / period;
        let weights: Vec<f64> = (0..n_zc)
            .map(|jc| interp_kernel(n_zc, x - TAU * jc as f64 / n_zc as f64))
            .collect();
        for i in 0..n_rc {
            let mut acc = 0.0;
            for (jc, &w) in weights.iter().enumerate() {
                acc += w * u.values()[[i, jc]];
            }
            stage[[i, jf]] = acc;
        }
    }

    // Stage 2: cubic Lagrange in r per fine column. Nodes extend through
    // the axis by odd reflection: value(-r) = -value(r).
    let sample = |col: &dyn Fn(i64) -> f64, l: i64| -> f64 {
        if l >= 0 {
            col(l)
        } else {
            -col(-1 - l)
        }
    };
    let mut values = ndarray::Array2::<f64>::zeros((n_rf, n_zf));
    let dr_c = coarse.dr();
    for (i_f, row) in (0..n_rf).map(|i| (i, fine.r(i))) {
        let target = row;
        let mut base = (target / dr_c - 0.5).floor() as i64;
        base = base.min(n_rc as i64 - 3).max(-1);
        let nodes: Vec<i64> = (base - 1..=base + 2).collect();
        let pos: Vec<f64> = nodes.iter().map(|&l| (l as f64 + 0.5) * dr_c).collect();
        let mut w = [0.0; 4];
        for a in 0..4 {
            let mut prod = 1.0;
            for b in 0..4 {
                if a != b {
                    prod *= (target - pos[b]) / (pos[a] - pos[b]);
                }
            }
            w[a] = prod;
        }
        for jf in 0..n_zf {
            let col = |l: i64| stage[[l as usize, jf]];
            let mut acc = 0.0;
            for (a, &l) in nodes.iter().enumerate() {
                acc += w[a] * sample(&col, l);
            }
            values[[i_f, jf]] = acc;
        }
    }
    ScalarField::from_values(&fine, values)
}

/// Magnitudes tying the 3-D formulation to the reduced one. All gap fields
/// are nonnegative.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceCertificate {
    /// |energy of the reconstructed field - J(u)|.
    pub energy_gap: f64,
    pub energy_j: f64,
    pub energy_maxwell: f64,
    /// L2 norm of the discrete divergence of the reconstructed field.
    pub div_norm: f64,
    /// |int |curl E|^2 - (int |grad u|^2 + u^2/r^2)|.
    pub curl_identity_gap: f64,
    /// int |curl E|^2, kept as the scale reference for the gaps.
    pub curl_energy: f64,
    pub u_roundtrip_error: f64,
    /// |weak Maxwell residual - J'(u)(v)| per random test direction.
    pub weak_gaps: Vec<f64>,
    /// 1 + |J'(u)(v)| per test direction, the scale the gaps compare to.
    pub weak_references: Vec<f64>,
}

const WEAK_PROBES: usize = 5;

pub fn certify_equivalence(
    prob: &Problem,
    u: &ScalarField,
    n_theta: usize,
) -> Result<EquivalenceCertificate> {
    let grid = prob.grid();
    assert_eq!(
        (grid.n_r(), grid.n_z()),
        (u.grid().n_r(), u.grid().n_z()),
        "field and problem live on different grids"
    );
    let e = reconstruct_e(u, n_theta)?;
    let (u_back, _) = extract_u(&e);
    let u_roundtrip_error = u_back.minus_scaled(1.0, u).norm();

    let vc = vector_calculus(&e);
    let div_norm = vc.div_l2();
    let curl_energy = vc.curl.norm_sq();
    let mut v_mass = 0.0;
    let mult = prob.operator().multiplier();
    for i in 0..grid.n_r() {
        let w = grid.weight(i);
        let inv_r2 = 1.0 / (grid.r(i) * grid.r(i));
        for j in 0..grid.n_z() {
            let val = u.values()[[i, j]];
            v_mass += w * (mult[[i, j]] - inv_r2) * val * val;
        }
    }
    let dirichlet_plus_axis = prob.quadratic(u) - v_mass;
    let curl_identity_gap = (curl_energy - dirichlet_plus_axis).abs();

    let energy_j = prob.energy(u)?;
    let energy_maxwell = energy_e(prob, &e)?;
    let energy_gap = (energy_maxwell - energy_j).abs();

    let mut weak_gaps = Vec::with_capacity(WEAK_PROBES);
    let mut weak_references = Vec::with_capacity(WEAK_PROBES);
    let mut rng = seeded_rng(0x3D_F1E1D);
    for _ in 0..WEAK_PROBES {
        let v = smooth_random_field(grid, &mut rng);
        let v3 = reconstruct_e(&v, n_theta)?;
        let maxwell = weak_residual(prob, &e, &v3)?;
        let reduced = prob.directional_derivative(u, &v)?;
        weak_gaps.push((maxwell - reduced).abs());
        weak_references.push(1.0 + reduced.abs());
    }

    Ok(EquivalenceCertificate {
        energy_gap,
        energy_j,
        energy_maxwell,
        div_norm,
        curl_identity_gap,
        curl_energy,
        u_roundtrip_error,
        weak_gaps,
        weak_references,
    })
}

/// Certificates across dyadic refinements of the same physical field, with
/// the refinement slopes of the O(h^2) gaps. The discrete divergence of a
/// reconstructed field vanishes identically (the radial and angular
/// contributions cancel algebraically), so its slope is reported only when
/// the norms rise above the rounding floor.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceStudy {
    pub certificates: Vec<EquivalenceCertificate>,
    pub relative_energy_gaps: Vec<f64>,
    pub div_below_floor: bool,
    pub div_slopes: Option<Vec<f64>>,
    pub curl_gap_slopes: Vec<f64>,
}

fn log2_slopes(values: &[f64]) -> Vec<f64> {
    values
        .windows(2)
        .map(|w| (w[0].max(f64::MIN_POSITIVE) / w[1].max(f64::MIN_POSITIVE)).log2())
        .collect()
}

pub fn equivalence_study(
    potential: &PotentialSpec,
    nonlinearity: &NonlinearitySpec,
    u: &ScalarField,
    n_theta: usize,
    refinements: usize,
) -> Result<EquivalenceStudy> {
    let mut certificates = Vec::with_capacity(refinements + 1);
    for level in 0..=refinements {
        let u_l = refine_scalar(u, 1 << level)?;
        let prob = Problem::with_certificate_tolerance(
            u_l.grid(),
            potential,
            nonlinearity.clone(),
            1e-6,
        )?;
        certificates.push(certify_equivalence(&prob, &u_l, n_theta)?);
    }
    let relative_energy_gaps = certificates
        .iter()
        .map(|c| c.energy_gap / c.energy_j.abs().max(f64::MIN_POSITIVE))
        .collect();
    let curl_scale = certificates
        .iter()
        .map(|c| c.curl_energy)
        .fold(0.0_f64, f64::max);
    let floor = 1e-9 * (1.0 + curl_scale.sqrt());
    let div_below_floor = certificates.iter().all(|c| c.div_norm <= floor);
    let div_norms: Vec<f64> = certificates.iter().map(|c| c.div_norm).collect();
    let div_slopes = if div_below_floor {
        None
    } else {
        Some(log2_slopes(&div_norms))
    };
    let gaps: Vec<f64> = certificates.iter().map(|c| c.curl_identity_gap).collect();
    let curl_gap_slopes = log2_slopes(&gaps);
    Ok(EquivalenceStudy {
        certificates,
        relative_energy_gaps,
        div_below_floor,
        div_slopes,
        curl_gap_slopes,
    })
}
