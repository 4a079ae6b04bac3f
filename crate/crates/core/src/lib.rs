//! Ground states of a cylindrical curl-curl problem.
//!
//! Time-harmonic fields of the form E = u(r, z)/r (-x2, x1, 0) are
//! divergence-free, and for them the curl-curl equation with potential V and
//! competing nonlinear terms reduces to a scalar equation
//! -Delta u + u/r^2 + V u = f_tilde(x, u) on the half-plane, periodic in z.
//! This crate discretizes that reduction on a cell-centered cylindrical grid,
//! certifies positivity of the quadratic part, minimizes the energy over the
//! natural constraint where J'(u)(u) = 0, and lifts the result back to a
//! three-dimensional vector field with a posteriori equivalence checks.

pub mod error;
pub mod functional;
pub mod grid;
mod linalg;
pub mod maxwell;
pub mod nehari;
pub mod nonlinearity;
pub mod potential;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use functional::{EnergyBreakdown, Metric, Problem};
pub use nehari::{
    check_hypotheses, maximize_ray, project_nehari, ray_profile, DiagnosticsReport,
    NehariRayResult,
};
pub use grid::{Grid, ScalarField};
pub use maxwell::{
    certify_equivalence, energy_e, equivalence_study, extract_u, project_components,
    reconstruct_e, refine_scalar, symmetrize_so, vector_calculus, weak_residual,
    ComponentSplit, EquivalenceCertificate, EquivalenceStudy, VectorCalculus, VectorField3,
};
pub use nonlinearity::{
    AssumptionReport, CheckKind, Evaluation, FKind, GKind, Gamma, GrowthConstants,
    HypothesisCheck, NonlinearitySpec,
};
pub use potential::{benchmark_potential, CylOperator, PotentialSpec, SpectralCertificate};
pub use solver::{
    gaussian_bump, minimax_over_rays, minimize_on_nehari, InitialGuess, SolveOptions, SolveReport,
};
