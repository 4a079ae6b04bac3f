//! Ray analysis t -> J(tu): profile, maximizer interval, projection onto the
//! set where J'(u)(u) = 0, and the (J1)-(J3) ray-geometry diagnostics.
//!
//! psi(t) = J(tu) rises from zero, peaks, and escapes to -infinity when the
//! focusing term dominates. The maximizer is bracketed by a factor-2 scan,
//! refined by golden section on psi, then polished on the sign structure of
//! psi'(t) = J'(tu)(u); the last step is what gets the projection residual
//! below its tolerance, since psi-value comparisons alone stall at the
//! square root of machine precision. A flat maximizer interval is detected
//! by probing psi around the peak and reported as [t_min, t_max].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::Problem;
use crate::grid::ScalarField;

/// Relative t-tolerance of the golden-section stage.
const GOLDEN_REL_TOL: f64 = 1e-10;
/// Relative bracket width at which the psi' bisection stops.
const POLISH_REL_TOL: f64 = 1e-13;
/// Absolute psi slack below the peak that still counts as the same plateau.
const PLATEAU_SLACK: f64 = 1e-12;
/// Scan cap: beyond this t the ray is declared to never turn downward.
const T_CAP: f64 = 1e18;
const T_FLOOR: f64 = 1e-18;

/// Maximizer interval of one ray together with slope diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct NehariRayResult {
    pub t_min: f64,
    pub t_max: f64,
    /// J(t u) on the maximizer interval.
    pub value: f64,
    /// (t, psi'(t)) sampled below t_min and above t_max; positive before,
    /// negative after.
    pub phi_prime_samples: Vec<(f64, f64)>,
}

impl NehariRayResult {
    /// True when the maximizer is a nondegenerate interval.
    pub fn is_plateau(&self) -> bool {
        self.t_max > self.t_min
    }

    pub fn t_star(&self) -> f64 {
        0.5 * (self.t_min + self.t_max)
    }
}

/// Scaling structure of one ray. Built-in power pairs reduce to three
/// scalars; anything else re-integrates the nonlinear part per evaluation.
enum RayEnergy<'a> {
    Power {
        a: f64,
        b: f64,
        c: f64,
        p: f64,
        q: f64,
    },
    Generic {
        problem: &'a Problem,
        u: &'a ScalarField,
        a: f64,
    },
}

impl<'a> RayEnergy<'a> {
    fn new(problem: &'a Problem, u: &'a ScalarField) -> Result<Self> {
        let a = problem.quadratic(u);
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Invalid(
                "ray analysis requires a nonzero field".into(),
            ));
        }
        if problem.nonlinearity().is_power_pair() {
            let b = problem.moment_p(u);
            let c = if problem.nonlinearity().g_is_zero() {
                0.0
            } else {
                problem.moment_q_gamma(u)
            };
            if !(b.is_finite() && c.is_finite()) {
                return Err(Error::NonFinite {
                    context: "ray moments".into(),
                });
            }
            Ok(RayEnergy::Power {
                a,
                b,
                c,
                p: problem.nonlinearity().p(),
                q: problem.nonlinearity().q(),
            })
        } else {
            Ok(RayEnergy::Generic { problem, u, a })
        }
    }

    /// psi(t) = J(t u). The quadratic part is reused as t^2 a / 2.
    fn psi(&self, t: f64) -> Result<f64> {
        let v = match *self {
            RayEnergy::Power { a, b, c, p, q } => {
                0.5 * a * t * t - b * t.powf(p) / p + c * t.powf(q) / q
            }
            RayEnergy::Generic { problem, u, a } => {
                let grid = problem.grid();
                let nl = problem.nonlinearity();
                let mut nonlinear = 0.0;
                for i in 0..grid.n_r() {
                    let r = grid.r(i);
                    let mut row = 0.0;
                    for j in 0..grid.n_z() {
                        row += nl.big_f_tilde(r, grid.z(j), t * u.values()[[i, j]]);
                    }
                    nonlinear += grid.weight(i) * row;
                }
                0.5 * a * t * t - nonlinear
            }
        };
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!("ray energy at t = {t}"),
            });
        }
        Ok(v)
    }

    /// psi'(t) = J'(t u)(u).
    fn dpsi(&self, t: f64) -> Result<f64> {
        let v = match *self {
            RayEnergy::Power { a, b, c, p, q } => {
                t * (a - b * t.powf(p - 2.0) + c * t.powf(q - 2.0))
            }
            RayEnergy::Generic { problem, u, a } => {
                let grid = problem.grid();
                let nl = problem.nonlinearity();
                let mut nonlinear = 0.0;
                for i in 0..grid.n_r() {
                    let r = grid.r(i);
                    let mut row = 0.0;
                    for j in 0..grid.n_z() {
                        let uv = u.values()[[i, j]];
                        row += nl.f_tilde(r, grid.z(j), t * uv) * uv;
                    }
                    nonlinear += grid.weight(i) * row;
                }
                t * a - nonlinear
            }
        };
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!("ray slope at t = {t}"),
            });
        }
        Ok(v)
    }

    fn escape_guaranteed(&self) -> bool {
        matches!(self, RayEnergy::Power { b, .. } if *b > 0.0)
    }

    fn quad_coeff(&self) -> f64 {
        match self {
            RayEnergy::Power { a, .. } | RayEnergy::Generic { a, .. } => *a,
        }
    }
}

/// J(t u) for each t in `t_grid`. One quadratic-form evaluation serves all t.
pub fn ray_profile(problem: &Problem, u: &ScalarField, t_grid: &[f64]) -> Result<Vec<f64>> {
    if t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Invalid("ray profile needs t > 0".into()));
    }
    let ray = RayEnergy::new(problem, u)?;
    t_grid.iter().map(|&t| ray.psi(t)).collect()
}

/// Bracket, refine, and polish the maximizer of psi; detect plateaus.
pub fn maximize_ray(problem: &Problem, u: &ScalarField) -> Result<NehariRayResult> {
    let ray = RayEnergy::new(problem, u)?;
    analyze(&ray)
}

/// Midpoint of the maximizer interval scaled onto the constraint set,
/// guaranteeing |J'(w)(w)| <= 1e-9 ||w||_Q^2.
pub fn project_nehari(problem: &Problem, u: &ScalarField) -> Result<ScalarField> {
    let ray = RayEnergy::new(problem, u)?;
    let result = analyze(&ray)?;
    let mut t = result.t_star();
    let a = ray.quad_coeff();
    let residual_ok = |t: f64| -> Result<bool> {
        // J'(tu)(tu) = t psi'(t); the constraint norm is t^2 a.
        let slope = ray.dpsi(t)?;
        Ok((t * slope).abs() <= 1e-9 * t * t * a)
    };
    if !residual_ok(t)? {
        // Tighten by bisecting psi' on a sign-changing bracket around t.
        if let Some((mut lo, mut hi)) = sign_bracket(&ray, t)? {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if residual_ok(mid)? {
                    t = mid;
                    break;
                }
                if ray.dpsi(mid)? > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                t = 0.5 * (lo + hi);
            }
        }
    }
    if !residual_ok(t)? {
        return Err(Error::IterationFailure(
            "constraint projection could not reach its residual tolerance".into(),
        ));
    }
    Ok(u.scaled(t))
}

/// Expanding search for psi'(t0(1-d)) > 0 > psi'(t0(1+d)).
fn sign_bracket(ray: &RayEnergy, t0: f64) -> Result<Option<(f64, f64)>> {
    let mut d = 1e-9;
    while d < 0.75 {
        let lo = t0 * (1.0 - d);
        let hi = t0 * (1.0 + d);
        if ray.dpsi(lo)? > 0.0 && ray.dpsi(hi)? < 0.0 {
            return Ok(Some((lo, hi)));
        }
        d *= 4.0;
    }
    Ok(None)
}

fn analyze(ray: &RayEnergy) -> Result<NehariRayResult> {
    // Factor-2 scan for the slope sign change.
    let (lo, hi) = scan_bracket(ray)?;
    // Confirm the ray escapes to -infinity unless the structure guarantees it.
    if !ray.escape_guaranteed() {
        let mut t = hi;
        let mut escaped = false;
        while t <= T_CAP {
            if ray.psi(t)? < 0.0 {
                escaped = true;
                break;
            }
            t *= 4.0;
        }
        if !escaped {
            return Err(Error::RayCrossing(
                "J(tu) never becomes negative below the probing cap".into(),
            ));
        }
    }

    // Golden-section refinement of the psi maximum on [lo, hi].
    let (mut t_star, mut psi_star) = golden_max(ray, lo, hi)?;

    // Polish on the slope: bisect psi' over the scan bracket. psi values
    // near the peak agree to machine precision over an O(sqrt(eps)) t-range,
    // so only the slope localizes the maximizer sharply.
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        if b - a <= POLISH_REL_TOL * b {
            break;
        }
        let mid = 0.5 * (a + b);
        if ray.dpsi(mid)? > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let t_polish = 0.5 * (a + b);
    let psi_polish = ray.psi(t_polish)?;
    if psi_polish >= psi_star - PLATEAU_SLACK {
        t_star = t_polish;
        psi_star = psi_star.max(psi_polish);
    }

    // Plateau detection: probe psi just off the peak; expand any side that
    // stays within the slack and locate the crossing of psi = psi* - slack.
    let probe = 1e-3;
    let right_flat = ray.psi(t_star * (1.0 + probe))? >= psi_star - PLATEAU_SLACK;
    let left_flat = ray.psi(t_star * (1.0 - probe))? >= psi_star - PLATEAU_SLACK;
    let t_max = if right_flat {
        plateau_edge(ray, t_star, psi_star, 1.0)?
    } else {
        t_star
    };
    let t_min = if left_flat {
        plateau_edge(ray, t_star, psi_star, -1.0)?
    } else {
        t_star
    };

    let mut phi_prime_samples = Vec::new();
    for f in [0.25, 0.5, 0.75] {
        let t = t_min * f;
        phi_prime_samples.push((t, ray.dpsi(t)?));
    }
    for f in [1.5, 2.5, 4.0] {
        let t = t_max * f;
        phi_prime_samples.push((t, ray.dpsi(t)?));
    }

    Ok(NehariRayResult {
        t_min,
        t_max,
        value: psi_star,
        phi_prime_samples,
    })
}

/// Maximizer of the scalar power ray a t^2/2 - b t^p/p + c t^q/q, polished
/// until |t psi'(t)| <= 1e-10 t^2 a. Used by the solver's line search, where
/// the ray coefficients are updated incrementally.
pub(crate) fn power_ray_maximizer(a: f64, b: f64, c: f64, p: f64, q: f64) -> Result<f64> {
    let ray = RayEnergy::Power { a, b, c, p, q };
    let (mut lo, mut hi) = scan_bracket(&ray)?;
    for _ in 0..500 {
        let mid = 0.5 * (lo + hi);
        let s = ray.dpsi(mid)?;
        if (mid * s).abs() <= 1e-10 * mid * mid * a {
            return Ok(mid);
        }
        if s > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Find lo < hi with psi'(lo) > 0 >= psi'(hi) by factor-2 scanning from t = 1.
fn scan_bracket(ray: &RayEnergy) -> Result<(f64, f64)> {
    if ray.dpsi(1.0)? > 0.0 {
        let mut t = 1.0;
        while t <= T_CAP {
            let next = 2.0 * t;
            if ray.dpsi(next)? <= 0.0 {
                return Ok((t, next));
            }
            t = next;
        }
        Err(Error::RayCrossing(
            "J'(tu)(u) stays positive below the probing cap".into(),
        ))
    } else {
        let mut t = 1.0;
        while t >= T_FLOOR {
            let next = 0.5 * t;
            if ray.dpsi(next)? > 0.0 {
                return Ok((next, t));
            }
            t = next;
        }
        Err(Error::RayCrossing(
            "J'(tu)(u) is never positive; the ray rises nowhere".into(),
        ))
    }
}

fn golden_max(ray: &RayEnergy, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = ray.psi(c)?;
    let mut fd = ray.psi(d)?;
    for _ in 0..300 {
        if b - a <= GOLDEN_REL_TOL * b {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = ray.psi(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = ray.psi(d)?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((t, ray.psi(t)?.max(fc).max(fd)))
}

/// Expand from the peak while psi stays within the plateau slack, then bisect
/// the slack crossing. `dir` = +1 expands right, -1 left; expansion is
/// geometric in t so either side can reach any scale.
fn plateau_edge(ray: &RayEnergy, t_star: f64, psi_star: f64, dir: f64) -> Result<f64> {
    let floor = psi_star - PLATEAU_SLACK;
    let mut step = 1e-3;
    let mut inside = t_star;
    let mut outside = None;
    while step < 1e6 {
        let factor = if dir > 0.0 {
            1.0 + step
        } else {
            1.0 / (1.0 + step)
        };
        let cand = t_star * factor;
        if ray.psi(cand)? >= floor {
            inside = cand;
            step *= 2.0;
        } else {
            outside = Some(cand);
            break;
        }
    }
    let Some(mut out) = outside else {
        return Ok(inside);
    };
    for _ in 0..100 {
        let mid = 0.5 * (inside + out);
        if ray.psi(mid)? >= floor {
            inside = mid;
        } else {
            out = mid;
        }
    }
    Ok(inside)
}

/// Sphere, divergence, and ray-concavity diagnostics for the minimax
/// structure of the energy.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    /// Sphere radius at which the nonlinear part is at most a quarter of the
    /// quadratic part for every sampled field.
    pub j1_radius: f64,
    /// Minimum of J over the sampled sphere of that radius.
    pub j1_sphere_min: f64,
    /// j1_sphere_min > 0.
    pub j1_positive: bool,
    /// (t, I(tu)/t^2) along a geometric ladder; I is the nonlinear part.
    pub j2_ratios: Vec<(f64, f64)>,
    /// Ratios grow monotonically toward the ladder end and at least double.
    pub j2_diverging: bool,
    /// (t, phi(t)) with phi(t) = (t^2-1)/2 J'(u)(u)|_nonlin-compensated form;
    /// phi(t) = J(tu) - J(u) for u on the constraint set.
    pub j3_phi: Vec<(f64, f64)>,
    pub j3_max: f64,
    /// max phi <= 1e-10.
    pub j3_passed: bool,
}

/// Evaluate the three ray-geometry hypotheses at a constrained point.
/// `u` must satisfy the constraint identity to 1e-6 relative; `t_samples`
/// feeds the concavity check; `sphere_samples` are directions for the
/// small-sphere minimum.
pub fn check_hypotheses(
    problem: &Problem,
    u: &ScalarField,
    t_samples: &[f64],
    sphere_samples: &[ScalarField],
) -> Result<DiagnosticsReport> {
    let quad = problem.quadratic(u);
    if !(quad > 0.0) {
        return Err(Error::Invalid("diagnostics need a nonzero field".into()));
    }
    let du = problem.directional_derivative(u, u)?;
    if du.abs() > 1e-6 * quad {
        return Err(Error::Invalid(format!(
            "field is not on the constraint set: J'(u)(u) = {du:.3e} vs Q = {quad:.3e}"
        )));
    }
    if t_samples.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Invalid("t samples must be positive".into()));
    }
    if sphere_samples.is_empty() {
        return Err(Error::EmptySamples);
    }

    // (J3): phi(t) = (t^2-1)/2 I'(u)(u) - I(tu) + I(u), I = nonlinear part.
    // On the constraint set I'(u)(u) = Q(u), so phi(t) = J(tu) - J(u).
    let nonlin = |w: &ScalarField| -> Result<f64> {
        Ok(problem.focusing_integral(w)? - problem.defocusing_integral(w)?)
    };
    let i_u = nonlin(u)?;
    let di_u = quad - du; // I'(u)(u) = <Au,u> - J'(u)(u)
    let mut j3_phi = Vec::with_capacity(t_samples.len());
    let mut j3_max = f64::NEG_INFINITY;
    for &t in t_samples {
        let phi = 0.5 * (t * t - 1.0) * di_u - nonlin(&u.scaled(t))? + i_u;
        j3_max = j3_max.max(phi);
        j3_phi.push((t, phi));
    }

    // (J1): halve the sphere radius until the nonlinear part is dominated by
    // a quarter of the quadratic part on every sample, then record min J.
    let mut radius = 1.0;
    let mut scaled: Vec<ScalarField> = Vec::new();
    for _ in 0..200 {
        scaled = sphere_samples
            .iter()
            .map(|w| {
                let n = problem.norm_q(w);
                w.scaled(radius / n)
            })
            .collect();
        let mut dominated = true;
        for w in &scaled {
            if nonlin(w)? > 0.25 * problem.quadratic(w) {
                dominated = false;
                break;
            }
        }
        if dominated {
            break;
        }
        radius *= 0.5;
    }
    let mut j1_sphere_min = f64::INFINITY;
    for w in &scaled {
        j1_sphere_min = j1_sphere_min.min(problem.energy(w)?);
    }

    // (J2): I(t u-hat)/t^2 along a geometric ladder on the normalized ray.
    let unit = u.scaled(1.0 / quad.sqrt());
    let mut j2_ratios = Vec::new();
    let mut t = 1.0;
    for _ in 0..12 {
        j2_ratios.push((t, nonlin(&unit.scaled(t))? / (t * t)));
        t *= 2.0;
    }
    let tail = &j2_ratios[j2_ratios.len() - 5..];
    let mut j2_diverging = tail.windows(2).all(|w| w[1].1 > w[0].1);
    let last = j2_ratios.last().unwrap().1;
    j2_diverging = j2_diverging && last > 0.0 && last >= 2.0 * tail[0].1.max(0.0);

    Ok(DiagnosticsReport {
        j1_radius: radius,
        j1_sphere_min,
        j1_positive: j1_sphere_min > 0.0,
        j2_ratios,
        j2_diverging,
        j3_phi,
        j3_max,
        j3_passed: j3_max <= 1e-10,
    })
}
