//! End-to-end runs against the public API only: build a problem, minimize,
//! lift the result, and cross-check the diagnostics the crates promise.

use curlvar_core::{
    certify_equivalence, check_hypotheses, minimize_on_nehari, Error, Gamma, Grid,
    NonlinearitySpec, PotentialSpec, Problem, SolveOptions,
};

fn competing_problem() -> Problem {
    let grid = Grid::shared(24, 24, 6.0, 2).unwrap();
    let nl = NonlinearitySpec::competing_powers(4.0, 3.0, Gamma::Constant(1.0)).unwrap();
    Problem::new(&grid, &PotentialSpec::Benchmark, nl).unwrap()
}

#[test]
fn solve_then_certify_keeps_the_reduction_honest() {
    let prob = competing_problem();
    let report = minimize_on_nehari(&prob, &SolveOptions::default()).unwrap();
    assert!(report.converged, "{}", report.termination);
    assert!(report.c_estimate > 0.0);
    assert!(report.nehari_residual <= 1e-9);

    let cert = certify_equivalence(&prob, &report.u_star, 16).unwrap();
    assert!(cert.u_roundtrip_error <= 1e-12, "{}", cert.u_roundtrip_error);
    assert!(
        cert.div_norm <= 1e-9 * (1.0 + cert.curl_energy.sqrt()),
        "div {} vs curl energy {}",
        cert.div_norm,
        cert.curl_energy
    );
    for (gap, reference) in cert.weak_gaps.iter().zip(&cert.weak_references) {
        assert!(gap <= &(1e-3 * reference), "weak gap {gap} vs {reference}");
    }
}

#[test]
fn diagnostics_accept_the_converged_point() {
    let prob = competing_problem();
    let report = minimize_on_nehari(&prob, &SolveOptions::default()).unwrap();
    let ts: Vec<f64> = (0..32).map(|i| 0.1 * 1.2f64.powi(i)).collect();
    let sphere: Vec<_> = (0..4)
        .map(|k| {
            let mut rng = curlvar_core::sampling::seeded_rng(90 + k);
            curlvar_core::sampling::smooth_random_field(prob.grid(), &mut rng)
        })
        .collect();
    let diag = check_hypotheses(&prob, &report.u_star, &ts, &sphere).unwrap();
    assert!(diag.j1_positive, "sphere minimum {}", diag.j1_sphere_min);
    assert!(diag.j2_diverging);
    assert!(diag.j3_passed, "max phi {}", diag.j3_max);
}

#[test]
fn indefinite_potentials_are_rejected_up_front() {
    let grid = Grid::shared(16, 16, 8.0, 2).unwrap();
    let nl = NonlinearitySpec::pure_power(4.0).unwrap();
    match Problem::new(&grid, &PotentialSpec::Constant(-5.0), nl) {
        Err(Error::CertificateFailed { lambda_min, .. }) => assert!(lambda_min < 0.0),
        other => panic!("expected a certificate failure, got {other:?}"),
    }
}
