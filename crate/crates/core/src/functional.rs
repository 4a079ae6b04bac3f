//! The energy J(u) = 1/2 Q(u) - int F + int G, its derivative, and gradients.
//!
//! Q(u) = <A u, u>_w is the quadratic form of the certified operator. The
//! L2 gradient is the pointwise residual A u - f_tilde(u); the Q-gradient
//! solves A g = residual so that <g, v>_Q = J'(u)(v), which is the natural
//! descent direction for the constrained minimization.

use std::sync::Arc;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::linalg::{cg_weighted, CgOutcome};
use crate::nonlinearity::NonlinearitySpec;
use crate::potential::{CylOperator, PotentialSpec, SpectralCertificate};

/// Inner product in which a gradient is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Metric {
    /// Weighted L2: the raw Euler-Lagrange residual.
    L2,
    /// The Q-form of the operator: preconditioned residual.
    Q,
}

/// Additive pieces of the energy.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBreakdown {
    pub quadratic: f64,
    pub focusing: f64,
    pub defocusing: f64,
    pub total: f64,
}

/// A certified problem instance: grid, operator, and nonlinearity together.
/// Construction fails unless the positivity certificate passes, so every
/// `Problem` has an equivalent norm sqrt(Q).
#[derive(Debug, Clone)]
pub struct Problem {
    grid: Arc<Grid>,
    op: CylOperator,
    nonlinearity: NonlinearitySpec,
    certificate: SpectralCertificate,
    gamma_min: f64,
}

/// Relative tolerance of the Q-gradient solve.
pub const Q_SOLVE_TOL: f64 = 1e-10;

impl Problem {
    pub fn new(
        grid: &Arc<Grid>,
        potential: &PotentialSpec,
        nonlinearity: NonlinearitySpec,
    ) -> Result<Self> {
        Self::with_certificate_tolerance(grid, potential, nonlinearity, 1e-8)
    }

    pub fn with_certificate_tolerance(
        grid: &Arc<Grid>,
        potential: &PotentialSpec,
        nonlinearity: NonlinearitySpec,
        eig_tol: f64,
    ) -> Result<Self> {
        let op = CylOperator::assemble(grid, potential)?;
        let certificate = op.min_eigenvalue(eig_tol)?;
        if !certificate.passed {
            return Err(Error::CertificateFailed {
                lambda_min: certificate.lambda_min,
                margin: certificate.margin,
            });
        }
        let gamma_min = nonlinearity.validate_gamma_on(grid)?;
        Ok(Problem {
            grid: Arc::clone(grid),
            op,
            nonlinearity,
            certificate,
            gamma_min,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn operator(&self) -> &CylOperator {
        &self.op
    }

    pub fn nonlinearity(&self) -> &NonlinearitySpec {
        &self.nonlinearity
    }

    pub fn certificate(&self) -> &SpectralCertificate {
        &self.certificate
    }

    pub fn gamma_min(&self) -> f64 {
        self.gamma_min
    }

    /// Q(u) = <A u, u>_w; positive for u != 0 by the certificate.
    pub fn quadratic(&self, u: &ScalarField) -> f64 {
        self.op.quadratic_form(u.values())
    }

    /// sqrt(Q(u)), the equivalent norm.
    pub fn norm_q(&self, u: &ScalarField) -> f64 {
        self.quadratic(u).max(0.0).sqrt()
    }

    /// int F(x, u) dw.
    pub fn focusing_integral(&self, u: &ScalarField) -> Result<f64> {
        self.integrate_term(u, |nl, r, z, v| nl.big_f(r, z, v), "focusing integral")
    }

    /// int G(x, u) dw.
    pub fn defocusing_integral(&self, u: &ScalarField) -> Result<f64> {
        self.integrate_term(u, |nl, r, z, v| nl.big_g(r, z, v), "defocusing integral")
    }

    /// int |u|^p dw, the focusing moment of the built-in power pair.
    pub(crate) fn moment_p(&self, u: &ScalarField) -> f64 {
        let p = self.nonlinearity.p();
        let mut total = 0.0;
        for i in 0..self.grid.n_r() {
            let mut row = 0.0;
            for j in 0..self.grid.n_z() {
                row += u.values()[[i, j]].abs().powf(p);
            }
            total += self.grid.weight(i) * row;
        }
        total
    }

    /// int Gamma |u|^q dw for the built-in defocusing power.
    pub(crate) fn moment_q_gamma(&self, u: &ScalarField) -> f64 {
        let q = self.nonlinearity.q();
        let mut total = 0.0;
        for i in 0..self.grid.n_r() {
            let r = self.grid.r(i);
            let mut row = 0.0;
            for j in 0..self.grid.n_z() {
                let gamma = self.nonlinearity.gamma().eval(r, self.grid.z(j));
                row += gamma * u.values()[[i, j]].abs().powf(q);
            }
            total += self.grid.weight(i) * row;
        }
        total
    }

    fn integrate_term(
        &self,
        u: &ScalarField,
        term: impl Fn(&NonlinearitySpec, f64, f64, f64) -> f64,
        context: &str,
    ) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.grid.n_r() {
            let r = self.grid.r(i);
            let mut row = 0.0;
            for j in 0..self.grid.n_z() {
                row += term(&self.nonlinearity, r, self.grid.z(j), u.values()[[i, j]]);
            }
            total += self.grid.weight(i) * row;
        }
        if !total.is_finite() {
            return Err(Error::NonFinite {
                context: context.into(),
            });
        }
        Ok(total)
    }

    pub fn energy_breakdown(&self, u: &ScalarField) -> Result<EnergyBreakdown> {
        if !u.is_finite() {
            return Err(Error::NonFinite {
                context: "energy argument".into(),
            });
        }
        let quadratic = self.quadratic(u);
        let focusing = self.focusing_integral(u)?;
        let defocusing = self.defocusing_integral(u)?;
        Ok(EnergyBreakdown {
            quadratic,
            focusing,
            defocusing,
            total: 0.5 * quadratic - focusing + defocusing,
        })
    }

    pub fn energy(&self, u: &ScalarField) -> Result<f64> {
        Ok(self.energy_breakdown(u)?.total)
    }

    /// J'(u)(v) = <A u, v>_w - int f_tilde(u) v dw.
    pub fn directional_derivative(&self, u: &ScalarField, v: &ScalarField) -> Result<f64> {
        let au = self.op.apply_field(u);
        let linear = self.grid.inner(au.values(), v.values());
        let mut nonlinear = 0.0;
        for i in 0..self.grid.n_r() {
            let r = self.grid.r(i);
            let mut row = 0.0;
            for j in 0..self.grid.n_z() {
                row += self.nonlinearity.f_tilde(r, self.grid.z(j), u.values()[[i, j]])
                    * v.values()[[i, j]];
            }
            nonlinear += self.grid.weight(i) * row;
        }
        let val = linear - nonlinear;
        if !val.is_finite() {
            return Err(Error::NonFinite {
                context: "directional derivative".into(),
            });
        }
        Ok(val)
    }

    /// The L2 representative A u - f_tilde(u) of J'(u).
    pub fn residual_l2(&self, u: &ScalarField) -> Result<ScalarField> {
        let mut out = self.op.apply_field(u);
        for i in 0..self.grid.n_r() {
            let r = self.grid.r(i);
            for j in 0..self.grid.n_z() {
                out.values_mut()[[i, j]] -=
                    self.nonlinearity.f_tilde(r, self.grid.z(j), u.values()[[i, j]]);
            }
        }
        if !out.is_finite() {
            return Err(Error::NonFinite {
                context: "L2 gradient".into(),
            });
        }
        Ok(out)
    }

    /// Solve A g = rhs in the weighted inner product.
    pub(crate) fn q_solve(
        &self,
        rhs: &ScalarField,
        warm: Option<&Array2<f64>>,
    ) -> Result<(ScalarField, CgOutcome)> {
        let mut apply = |x: &Array2<f64>, out: &mut Array2<f64>| self.op.apply(x, out);
        let (g, outcome) = cg_weighted(
            &self.grid,
            &mut apply,
            rhs.values(),
            warm,
            Q_SOLVE_TOL,
            200_000,
        )?;
        Ok((ScalarField::from_values(&self.grid, g)?, outcome))
    }

    pub fn gradient(&self, u: &ScalarField, metric: Metric) -> Result<ScalarField> {
        let r = self.residual_l2(u)?;
        match metric {
            Metric::L2 => Ok(r),
            Metric::Q => Ok(self.q_solve(&r, None)?.0),
        }
    }

    /// (1 + ||u||_Q) ||J'(u)||_{Q*}, the stationarity measure used as the
    /// solver stopping criterion. The dual norm is ||g||_Q for the Q-gradient
    /// g, and <A g, g> = <rhs, g> up to the solve tolerance.
    pub fn cerami_residual(&self, u: &ScalarField) -> Result<f64> {
        let rhs = self.residual_l2(u)?;
        let (g, _) = self.q_solve(&rhs, None)?;
        let g_norm2 = self.grid.inner(rhs.values(), g.values()).max(0.0);
        Ok((1.0 + self.norm_q(u)) * g_norm2.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::Gamma;
    use crate::sampling::{seeded_rng, smooth_random_field};
    use approx::assert_relative_eq;

    fn power_problem(grid: &Arc<Grid>) -> Problem {
        let nl = NonlinearitySpec::competing_powers(4.0, 3.0, Gamma::Constant(1.0)).unwrap();
        Problem::new(grid, &PotentialSpec::Constant(1.0), nl).unwrap()
    }

    /// Kahan-compensated sum, used by the independent energy oracle.
    struct Kahan {
        sum: f64,
        c: f64,
    }

    impl Kahan {
        fn new() -> Self {
            Kahan { sum: 0.0, c: 0.0 }
        }
        fn add(&mut self, v: f64) {
            let y = v - self.c;
            let t = self.sum + y;
            self.c = (t - self.sum) - y;
            self.sum = t;
        }
    }

    /// Independent re-implementation of the energy: the quadratic part as an
    /// explicit Dirichlet sum over faces (never applying the operator), the
    /// nonlinear part summed in the opposite loop order, all compensated.
    fn energy_oracle(problem: &Problem, potential: &PotentialSpec, u: &ScalarField) -> f64 {
        let grid = problem.grid();
        let (n_r, n_z) = (grid.n_r(), grid.n_z());
        let (dr, dz) = (grid.dr(), grid.dz());
        let vals = u.values();
        let mut quad = Kahan::new();
        // Radial faces: 2 pi dz sum_j sum_i r_{i+1/2} (u_{i+1} - u_i)^2 / dr,
        // with the wall ghost u_{n_r} = 0; the axis face has radius zero.
        for j in 0..n_z {
            for i in 0..n_r {
                let up = if i + 1 < n_r { vals[[i + 1, j]] } else { 0.0 };
                let d = up - vals[[i, j]];
                let r_face = (i + 1) as f64 * dr;
                quad.add(std::f64::consts::TAU * dz * r_face * d * d / dr);
            }
        }
        // Axial faces and the multiplier, row-weighted.
        for j in 0..n_z {
            let jp = (j + 1) % n_z;
            for i in 0..n_r {
                let w = grid.weight(i);
                let d = vals[[i, jp]] - vals[[i, j]];
                quad.add(w * d * d / (dz * dz));
                let r = grid.r(i);
                let m = 1.0 / (r * r) + potential.eval(r, grid.z(j));
                quad.add(w * m * vals[[i, j]] * vals[[i, j]]);
            }
        }
        let mut nonlin = Kahan::new();
        for j in 0..n_z {
            for i in 0..n_r {
                let r = grid.r(i);
                let ft = problem
                    .nonlinearity()
                    .big_f_tilde(r, grid.z(j), vals[[i, j]]);
                nonlin.add(grid.weight(i) * ft);
            }
        }
        0.5 * quad.sum - nonlin.sum
    }

    #[test]
    fn energy_matches_independent_oracle() {
        let grid = Grid::shared(24, 20, 6.0, 2).unwrap();
        let potential = PotentialSpec::Benchmark;
        let nl = NonlinearitySpec::competing_powers(4.0, 3.0, Gamma::Constant(1.0)).unwrap();
        let problem = Problem::new(&grid, &potential, nl).unwrap();
        let mut rng = seeded_rng(42);
        for _ in 0..4 {
            let u = smooth_random_field(&grid, &mut rng);
            let j = problem.energy(&u).unwrap();
            let oracle = energy_oracle(&problem, &potential, &u);
            assert_relative_eq!(j, oracle, max_relative = 1e-10);
        }
    }

    #[test]
    fn breakdown_is_consistent() {
        let grid = Grid::shared(16, 16, 4.0, 1).unwrap();
        let problem = power_problem(&grid);
        let mut rng = seeded_rng(3);
        let u = smooth_random_field(&grid, &mut rng);
        let b = problem.energy_breakdown(&u).unwrap();
        assert_relative_eq!(b.total, 0.5 * b.quadratic - b.focusing + b.defocusing);
        assert!(b.focusing > 0.0);
        assert!(b.defocusing > 0.0);
        // Power moments agree with the generic integrals.
        assert_relative_eq!(
            problem.moment_p(&u) / 4.0,
            b.focusing,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            problem.moment_q_gamma(&u) / 3.0,
            b.defocusing,
            max_relative = 1e-12
        );
    }

    #[test]
    fn directional_derivative_matches_finite_differences() {
        let grid = Grid::shared(16, 16, 4.0, 1).unwrap();
        let problem = power_problem(&grid);
        let mut rng = seeded_rng(11);
        for _ in 0..20 {
            let u = smooth_random_field(&grid, &mut rng);
            let v = smooth_random_field(&grid, &mut rng);
            let analytic = problem.directional_derivative(&u, &v).unwrap();
            let h = 1e-5 * (1.0 + u.norm()) / (1.0 + v.norm());
            let plus = problem.energy(&u.minus_scaled(-h, &v)).unwrap();
            let minus = problem.energy(&u.minus_scaled(h, &v)).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            assert!(
                (analytic - fd).abs() <= 1e-6 * (1.0 + analytic.abs()),
                "analytic {analytic} vs fd {fd}"
            );
        }
    }

    #[test]
    fn l2_gradient_represents_derivative() {
        let grid = Grid::shared(16, 12, 4.0, 1).unwrap();
        let problem = power_problem(&grid);
        let mut rng = seeded_rng(5);
        let u = smooth_random_field(&grid, &mut rng);
        let v = smooth_random_field(&grid, &mut rng);
        let g = problem.gradient(&u, Metric::L2).unwrap();
        let lhs = g.inner(&v);
        let rhs = problem.directional_derivative(&u, &v).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn q_gradient_solve_residual() {
        let grid = Grid::shared(24, 24, 6.0, 2).unwrap();
        let problem = power_problem(&grid);
        let mut rng = seeded_rng(9);
        let u = smooth_random_field(&grid, &mut rng);
        let rhs = problem.residual_l2(&u).unwrap();
        let g = problem.gradient(&u, Metric::Q).unwrap();
        let ag = problem.operator().apply_field(&g);
        let diff = ag.minus_scaled(1.0, &rhs);
        assert!(
            diff.norm() <= 1e-8 * rhs.norm(),
            "residual {} vs rhs {}",
            diff.norm(),
            rhs.norm()
        );
        // <g, v>_Q = J'(u)(v) within the same tolerance.
        let v = smooth_random_field(&grid, &mut rng);
        let av = problem.operator().apply_field(&v);
        let lhs = g.inner(&av);
        let rhs_d = problem.directional_derivative(&u, &v).unwrap();
        assert!((lhs - rhs_d).abs() <= 1e-7 * (1.0 + rhs_d.abs()));
    }

    /// J(u) - (1/q) J'(u)(u) >= (1/2 - 1/q) Q(u) for the built-in pair; the
    /// defocusing side-bound q G >= g u makes the dropped term one-signed.
    #[test]
    fn coercivity_identity() {
        let grid = Grid::shared(16, 16, 4.0, 2).unwrap();
        let problem = power_problem(&grid);
        let q = problem.nonlinearity().q();
        let mut rng = seeded_rng(17);
        for _ in 0..20 {
            let u = smooth_random_field(&grid, &mut rng);
            let j = problem.energy(&u).unwrap();
            let du = problem.directional_derivative(&u, &u).unwrap();
            let quad = problem.quadratic(&u);
            let lhs = j - du / q;
            let rhs = (0.5 - 1.0 / q) * quad;
            let scale = 1.0 + j.abs() + du.abs() + quad;
            assert!(
                lhs >= rhs - 1e-10 * scale,
                "lhs {lhs} < rhs {rhs} (scale {scale})"
            );
        }
    }

    #[test]
    fn energy_is_even() {
        let grid = Grid::shared(16, 16, 4.0, 1).unwrap();
        let problem = power_problem(&grid);
        let mut rng = seeded_rng(23);
        let u = smooth_random_field(&grid, &mut rng);
        let j = problem.energy(&u).unwrap();
        let jm = problem.energy(&u.scaled(-1.0)).unwrap();
        assert!((j - jm).abs() <= 1e-12 * (1.0 + j.abs()));
    }

    /// Shifting by a whole potential period in z leaves the energy unchanged.
    #[test]
    fn energy_shift_invariance() {
        let grid = Grid::shared(16, 16, 4.0, 2).unwrap();
        let cells = grid.unit_period_cells().unwrap();
        let nl = NonlinearitySpec::competing_powers(4.0, 3.0, Gamma::Constant(1.0)).unwrap();
        let problem = Problem::new(&grid, &PotentialSpec::Benchmark, nl).unwrap();
        let mut rng = seeded_rng(29);
        let u = smooth_random_field(&grid, &mut rng);
        let shifted = u.shift_z(cells as i64);
        let j0 = problem.energy(&u).unwrap();
        let j1 = problem.energy(&shifted).unwrap();
        assert_relative_eq!(j0, j1, max_relative = 1e-12);
    }

    #[test]
    fn cerami_residual_positive_off_critical_points() {
        let grid = Grid::shared(16, 12, 4.0, 1).unwrap();
        let problem = power_problem(&grid);
        let mut rng = seeded_rng(31);
        let u = smooth_random_field(&grid, &mut rng);
        let c = problem.cerami_residual(&u).unwrap();
        assert!(c > 0.0);
        let zero = ScalarField::zeros(&grid);
        assert_eq!(problem.cerami_residual(&zero).unwrap(), 0.0);
    }

    #[test]
    fn construction_refuses_indefinite_operator() {
        let grid = Grid::shared(16, 12, 4.0, 1).unwrap();
        let nl = NonlinearitySpec::pure_power(4.0).unwrap();
        let err = Problem::new(&grid, &PotentialSpec::Constant(-50.0), nl);
        assert!(matches!(err, Err(Error::CertificateFailed { .. })));
    }
}
