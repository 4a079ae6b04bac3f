//! Competing nonlinearities f and g and their structural hypothesis checks.
//!
//! The driving term of the reduced equation is f_tilde = f - g with
//! F(x,u) = int_0^u f(x,s) ds and G likewise. Built-in power kinds use closed
//! forms; custom callables get F, G by adaptive quadrature. The validator
//! samples the hypotheses the variational argument rests on and reports signed
//! slacks; asymptotic conditions can only be sampled, so their entries are
//! labeled evidence rather than proof.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Signature of a custom pointwise nonlinearity term: (r, z, u) -> value.
pub type PointFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Coefficient of the defocusing term; positive and 1-periodic in z.
#[derive(Clone)]
pub enum Gamma {
    Constant(f64),
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl Gamma {
    pub fn eval(&self, r: f64, z: f64) -> f64 {
        match self {
            Gamma::Constant(c) => *c,
            Gamma::Custom(f) => f(r, z),
        }
    }
}

impl fmt::Debug for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Constant(c) => write!(f, "Gamma::Constant({c})"),
            Gamma::Custom(_) => write!(f, "Gamma::Custom(..)"),
        }
    }
}

/// Focusing term kind.
#[derive(Clone)]
pub enum FKind {
    /// f(x,u) = |u|^(p-2) u.
    Power,
    Custom(PointFn),
}

impl fmt::Debug for FKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FKind::Power => write!(f, "FKind::Power"),
            FKind::Custom(_) => write!(f, "FKind::Custom(..)"),
        }
    }
}

/// Defocusing term kind.
#[derive(Clone)]
pub enum GKind {
    /// g(x,u) = Gamma(r,z) |u|^(q-2) u.
    Power,
    Zero,
    Custom(PointFn),
}

impl fmt::Debug for GKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GKind::Power => write!(f, "GKind::Power"),
            GKind::Zero => write!(f, "GKind::Zero"),
            GKind::Custom(_) => write!(f, "GKind::Custom(..)"),
        }
    }
}

/// Optional user-supplied constants for the growth-bound checks. The growth
/// constants are existential, so without candidates those checks are skipped.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GrowthConstants {
    /// Candidate c for |f| <= c (1 + |u|^(p-1)) and |g| <= c (1 + |u|^(q-1)).
    pub c: Option<f64>,
    /// Candidate epsilon for the small-slope bounds.
    pub eps: Option<f64>,
    /// Candidate C_eps paired with eps.
    pub c_eps: Option<f64>,
}

/// The pair (f, g) with exponents 2 < q < p < 6 and coefficient Gamma.
#[derive(Debug, Clone)]
pub struct NonlinearitySpec {
    kind_f: FKind,
    p: f64,
    kind_g: GKind,
    q: f64,
    gamma: Gamma,
    growth: GrowthConstants,
}

/// Pointwise evaluation bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub f: f64,
    pub big_f: f64,
    pub g: f64,
    pub big_g: f64,
    pub f_tilde: f64,
    pub big_f_tilde: f64,
}

impl NonlinearitySpec {
    /// Full constructor; rejects exponents outside 2 < q < p < 6.
    pub fn new(kind_f: FKind, p: f64, kind_g: GKind, q: f64, gamma: Gamma) -> Result<Self> {
        if !(p > 2.0 && p < 6.0) || !p.is_finite() {
            return Err(Error::Hypothesis {
                name: "(F1)",
                message: format!("2 < p < 6 required, got p = {p}"),
            });
        }
        if !(q > 2.0 && q < p) || !q.is_finite() {
            return Err(Error::Hypothesis {
                name: "(G1)",
                message: format!("2 < q < p required, got q = {q}, p = {p}"),
            });
        }
        Ok(NonlinearitySpec {
            kind_f,
            p,
            kind_g,
            q,
            gamma,
            growth: GrowthConstants::default(),
        })
    }

    /// Pure focusing power without a defocusing term. The reference exponent
    /// q, used by the coercivity and ray diagnostics, defaults to the midpoint
    /// of (2, p).
    pub fn pure_power(p: f64) -> Result<Self> {
        let q = 0.5 * (2.0 + p);
        Self::new(FKind::Power, p, GKind::Zero, q, Gamma::Constant(1.0))
    }

    /// Competing built-in powers with coefficient gamma on the defocusing term.
    pub fn competing_powers(p: f64, q: f64, gamma: Gamma) -> Result<Self> {
        Self::new(FKind::Power, p, GKind::Power, q, gamma)
    }

    pub fn with_growth_constants(mut self, growth: GrowthConstants) -> Self {
        self.growth = growth;
        self
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn gamma(&self) -> &Gamma {
        &self.gamma
    }

    pub fn kind_f(&self) -> &FKind {
        &self.kind_f
    }

    pub fn kind_g(&self) -> &GKind {
        &self.kind_g
    }

    /// True when both terms are built-in powers (or g is absent); ray
    /// energies then scale by closed-form powers of t.
    pub fn is_power_pair(&self) -> bool {
        matches!(self.kind_f, FKind::Power) && matches!(self.kind_g, GKind::Power | GKind::Zero)
    }

    /// True when g vanishes identically.
    pub fn g_is_zero(&self) -> bool {
        matches!(self.kind_g, GKind::Zero)
    }

    pub fn f(&self, r: f64, z: f64, u: f64) -> f64 {
        match &self.kind_f {
            FKind::Power => odd_power(u, self.p - 1.0),
            FKind::Custom(func) => func(r, z, u),
        }
    }

    pub fn big_f(&self, r: f64, z: f64, u: f64) -> f64 {
        match &self.kind_f {
            FKind::Power => u.abs().powf(self.p) / self.p,
            FKind::Custom(func) => primitive(|s| func(r, z, s), u),
        }
    }

    pub fn g(&self, r: f64, z: f64, u: f64) -> f64 {
        match &self.kind_g {
            GKind::Power => self.gamma.eval(r, z) * odd_power(u, self.q - 1.0),
            GKind::Zero => 0.0,
            GKind::Custom(func) => func(r, z, u),
        }
    }

    pub fn big_g(&self, r: f64, z: f64, u: f64) -> f64 {
        match &self.kind_g {
            GKind::Power => self.gamma.eval(r, z) * u.abs().powf(self.q) / self.q,
            GKind::Zero => 0.0,
            GKind::Custom(func) => primitive(|s| func(r, z, s), u),
        }
    }

    pub fn f_tilde(&self, r: f64, z: f64, u: f64) -> f64 {
        self.f(r, z, u) - self.g(r, z, u)
    }

    pub fn big_f_tilde(&self, r: f64, z: f64, u: f64) -> f64 {
        self.big_f(r, z, u) - self.big_g(r, z, u)
    }

    /// All six values at once; errors if any is non-finite (custom callables
    /// are unconstrained and may overflow).
    pub fn evaluate(&self, r: f64, z: f64, u: f64) -> Result<Evaluation> {
        if !u.is_finite() {
            return Err(Error::NonFinite {
                context: "nonlinearity argument".into(),
            });
        }
        let f = self.f(r, z, u);
        let big_f = self.big_f(r, z, u);
        let g = self.g(r, z, u);
        let big_g = self.big_g(r, z, u);
        let ev = Evaluation {
            f,
            big_f,
            g,
            big_g,
            f_tilde: f - g,
            big_f_tilde: big_f - big_g,
        };
        if ![f, big_f, g, big_g].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("nonlinearity at u = {u}"),
            });
        }
        Ok(ev)
    }

    /// Minimum of Gamma over the grid nodes; errors when the defocusing power
    /// coefficient is not positive there.
    pub fn validate_gamma_on(&self, grid: &Grid) -> Result<f64> {
        let mut min = f64::INFINITY;
        for i in 0..grid.n_r() {
            for j in 0..grid.n_z() {
                let v = self.gamma.eval(grid.r(i), grid.z(j));
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: "Gamma on grid".into(),
                    });
                }
                min = min.min(v);
            }
        }
        if matches!(self.kind_g, GKind::Power) && !(min > 0.0) {
            return Err(Error::Hypothesis {
                name: "(G1)",
                message: format!("Gamma must be positive on the grid, found minimum {min}"),
            });
        }
        Ok(min)
    }

    /// Samples the structural hypotheses over `u_samples` at a lattice of grid
    /// points and returns per-hypothesis signed slacks.
    pub fn validate_assumptions(&self, grid: &Grid, u_samples: &[f64]) -> Result<AssumptionReport> {
        if u_samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let xs = x_lattice(grid);
        let custom = !self.is_power_pair();
        // Quadrature-backed primitives carry more noise than closed forms.
        let rel_eps = if custom { 1e-9 } else { 1e-12 };

        let mut entries = Vec::new();
        entries.push(self.check_growth_f(&xs, u_samples));
        entries.push(self.check_vanishing_slope("(F2)", &xs, u_samples, |r, z, u| self.f(r, z, u)));
        entries.push(self.check_superlinearity(&xs, u_samples, rel_eps));
        entries.push(self.check_ratio_monotone(
            "(F4)",
            &xs,
            u_samples,
            true,
            |r, z, u| self.f(r, z, u),
        ));
        entries.push(self.check_growth_g(&xs, u_samples));
        entries.push(self.check_vanishing_slope("(G2)", &xs, u_samples, |r, z, u| self.g(r, z, u)));
        entries.push(self.check_g3(&xs, u_samples));
        entries.push(self.check_eps_bound("(f-eps)", &xs, u_samples, EpsBound::F));
        entries.push(self.check_eps_bound("(g-eps)", &xs, u_samples, EpsBound::G));
        entries.push(self.check_eps_bound("(fg-eps)", &xs, u_samples, EpsBound::FTilde));
        entries.push(self.check_ar(&xs, u_samples, rel_eps));
        Ok(AssumptionReport { entries })
    }

    fn check_growth_f(&self, xs: &[(f64, f64)], us: &[f64]) -> HypothesisCheck {
        let Some(c) = self.growth.c else {
            return HypothesisCheck::skipped("(F1)");
        };
        let mut worst = Slack::new();
        for &(r, z) in xs {
            for &u in us {
                let bound = c * (1.0 + u.abs().powf(self.p - 1.0));
                let raw = self.f(r, z, u).abs() - bound;
                worst.update(raw, raw - 1e-12 * (1.0 + bound), r, z, u);
            }
        }
        worst.into_check("(F1)", CheckKind::Sampled)
    }

    fn check_growth_g(&self, xs: &[(f64, f64)], us: &[f64]) -> HypothesisCheck {
        let Some(c) = self.growth.c else {
            return HypothesisCheck::skipped("(G1)");
        };
        if self.g_is_zero() {
            return HypothesisCheck::trivial("(G1)");
        }
        let mut worst = Slack::new();
        for &(r, z) in xs {
            for &u in us {
                let bound = c * (1.0 + u.abs().powf(self.q - 1.0));
                let raw = self.g(r, z, u).abs() - bound;
                worst.update(raw, raw - 1e-12 * (1.0 + bound), r, z, u);
            }
        }
        worst.into_check("(G1)", CheckKind::Sampled)
    }

    /// Evidence that term(x,u)/u -> 0 as u -> 0: the worst-case slope ratio
    /// must decay along the small-|u| ladder.
    fn check_vanishing_slope(
        &self,
        name: &str,
        xs: &[(f64, f64)],
        us: &[f64],
        term: impl Fn(f64, f64, f64) -> f64,
    ) -> HypothesisCheck {
        if name == "(G2)" && self.g_is_zero() {
            return HypothesisCheck::trivial("(G2)");
        }
        let mut ladder: Vec<f64> = us
            .iter()
            .copied()
            .filter(|u| *u != 0.0 && u.abs() <= 1e-3)
            .collect();
        ladder.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
        ladder.dedup_by(|a, b| a.abs() == b.abs());
        if ladder.len() < 2 {
            return HypothesisCheck::skipped(name);
        }
        let ratios: Vec<f64> = ladder
            .iter()
            .map(|&u| {
                xs.iter()
                    .map(|&(r, z)| (term(r, z, u) / u).abs())
                    .fold(0.0f64, f64::max)
            })
            .collect();
        let scale = 1.0 + ratios[0];
        let mut worst = Slack::new();
        for k in 0..ratios.len() - 1 {
            let raw = ratios[k + 1] - ratios[k];
            worst.update(raw, raw - 1e-12 * scale, 0.0, 0.0, ladder[k + 1]);
        }
        let raw_decay = ratios[ratios.len() - 1] - 0.5 * ratios[0];
        worst.update(
            raw_decay,
            raw_decay - 1e-12 * scale,
            0.0,
            0.0,
            *ladder.last().unwrap(),
        );
        worst.into_check(name, CheckKind::Evidence)
    }

    /// Evidence for F/|u|^q -> +infinity plus the pointwise F >= 0 sample check.
    fn check_superlinearity(
        &self,
        xs: &[(f64, f64)],
        us: &[f64],
        rel_eps: f64,
    ) -> HypothesisCheck {
        let mut worst = Slack::new();
        for &(r, z) in xs {
            for &u in us {
                let big_f = self.big_f(r, z, u);
                let raw = -big_f;
                worst.update(raw, raw - rel_eps * (1.0 + big_f.abs()), r, z, u);
            }
        }
        let mut ladder: Vec<f64> = us
            .iter()
            .copied()
            .filter(|u| u.abs() >= 1e3)
            .collect();
        ladder.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
        ladder.dedup_by(|a, b| a.abs() == b.abs());
        if ladder.len() < 2 {
            return HypothesisCheck {
                kind: CheckKind::Evidence,
                ..worst.into_check("(F3)", CheckKind::Evidence)
            };
        }
        let ratios: Vec<f64> = ladder
            .iter()
            .map(|&u| {
                xs.iter()
                    .map(|&(r, z)| self.big_f(r, z, u) / u.abs().powf(self.q))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let scale = 1.0 + ratios[0].abs();
        for k in 0..ratios.len() - 1 {
            let raw = ratios[k] - ratios[k + 1];
            worst.update(raw, raw - rel_eps * scale, 0.0, 0.0, ladder[k + 1]);
        }
        // Divergence evidence: the ratio must at least double across the ladder.
        let raw_growth = 2.0 * ratios[0] - ratios[ratios.len() - 1];
        worst.update(
            raw_growth,
            raw_growth - rel_eps * scale,
            0.0,
            0.0,
            *ladder.last().unwrap(),
        );
        worst.into_check("(F3)", CheckKind::Evidence)
    }

    /// Monotonicity of term(x,u)/|u|^(q-1) on each half-line; `nondecreasing`
    /// selects the direction.
    fn check_ratio_monotone(
        &self,
        name: &str,
        xs: &[(f64, f64)],
        us: &[f64],
        nondecreasing: bool,
        term: impl Fn(f64, f64, f64) -> f64,
    ) -> HypothesisCheck {
        let mut pos: Vec<f64> = us.iter().copied().filter(|u| *u > 0.0).collect();
        let mut neg: Vec<f64> = us.iter().copied().filter(|u| *u < 0.0).collect();
        pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pos.dedup();
        neg.sort_by(|a, b| a.partial_cmp(b).unwrap());
        neg.dedup();
        let mut worst = Slack::new();
        for &(r, z) in xs {
            for side in [&pos, &neg] {
                for w in side.windows(2) {
                    let ratio = |u: f64| term(r, z, u) / u.abs().powf(self.q - 1.0);
                    let (lo, hi) = (ratio(w[0]), ratio(w[1]));
                    let raw = if nondecreasing { lo - hi } else { hi - lo };
                    let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
                    worst.update(raw, raw - tol, r, z, w[1]);
                }
            }
        }
        worst.into_check(name, CheckKind::Sampled)
    }

    /// Sign condition g(x,u) u >= 0 plus nonincreasing ratio monotonicity.
    fn check_g3(&self, xs: &[(f64, f64)], us: &[f64]) -> HypothesisCheck {
        if self.g_is_zero() {
            return HypothesisCheck::trivial("(G3)");
        }
        let mono = self.check_ratio_monotone("(G3)", xs, us, false, |r, z, u| self.g(r, z, u));
        let mut worst = Slack {
            raw: mono.raw,
            adjusted: mono.worst_violation,
            witness: mono.witness,
        };
        for &(r, z) in xs {
            for &u in us {
                let sign = self.g(r, z, u) * u;
                let raw = -sign;
                worst.update(raw, raw - 1e-12 * (1.0 + sign.abs()), r, z, u);
            }
        }
        worst.into_check("(G3)", CheckKind::Sampled)
    }

    fn check_eps_bound(
        &self,
        name: &str,
        xs: &[(f64, f64)],
        us: &[f64],
        which: EpsBound,
    ) -> HypothesisCheck {
        let (Some(eps), Some(c_eps)) = (self.growth.eps, self.growth.c_eps) else {
            return HypothesisCheck::skipped(name);
        };
        let mut worst = Slack::new();
        for &(r, z) in xs {
            for &u in us {
                let au = u.abs();
                let (value, bound) = match which {
                    EpsBound::F => (
                        self.f(r, z, u).abs(),
                        eps * au + c_eps * au.powf(self.p - 1.0),
                    ),
                    EpsBound::G => (
                        self.g(r, z, u).abs(),
                        eps * au + c_eps * au.powf(self.q - 1.0),
                    ),
                    EpsBound::FTilde => (
                        self.f_tilde(r, z, u).abs(),
                        eps * au + c_eps * (au.powf(self.q - 1.0) + au.powf(self.p - 1.0)),
                    ),
                };
                let raw = value - bound;
                worst.update(raw, raw - 1e-12 * (1.0 + bound), r, z, u);
            }
        }
        worst.into_check(name, CheckKind::Sampled)
    }

    /// Ambrosetti-Rabinowitz-type slack q F_tilde - f_tilde u <= 0.
    fn check_ar(&self, xs: &[(f64, f64)], us: &[f64], rel_eps: f64) -> HypothesisCheck {
        let mut worst = Slack::new();
        for &(r, z) in xs {
            for &u in us {
                let ft = self.f_tilde(r, z, u);
                let big_ft = self.big_f_tilde(r, z, u);
                let raw = self.q * big_ft - ft * u;
                let tol =
                    1e-12 + rel_eps * ((self.q * big_ft).abs() + (ft * u).abs());
                worst.update(raw, raw - tol, r, z, u);
            }
        }
        worst.into_check("(AR)", CheckKind::Sampled)
    }
}

enum EpsBound {
    F,
    G,
    FTilde,
}

/// A logarithmic sample ladder covering small, moderate, and large magnitudes
/// of both signs, suitable as `u_samples` for the validator.
pub fn default_sample_ladder() -> Vec<f64> {
    let mut out = vec![0.0];
    for e in -6..=6 {
        for m in [1.0, 3.0] {
            let v = m * 10f64.powi(e);
            out.push(v);
            out.push(-v);
        }
    }
    out
}

/// |u|^(e) * sign(u) with the convention 0 at u = 0 (e > 0).
fn odd_power(u: f64, e: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.abs().powf(e) * u.signum()
    }
}

/// Primitive int_0^u of a 1-D integrand by adaptive Simpson quadrature.
/// Tolerance 1e-10 absolute, relaxed to f64 relative precision for huge
/// integrals.
fn primitive(f: impl Fn(f64) -> f64, u: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let (a, b, sign) = if u > 0.0 { (0.0, u, 1.0) } else { (u, 0.0, -1.0) };
    sign * adaptive_simpson(&|s| f(s), a, b, 1e-10)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn node(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = node(f, a, fa, m, fm);
        let (right, rm, frm) = node(f, m, fm, b, fb);
        let delta = left + right - whole;
        let floor = 1e-15 * whole.abs();
        if depth == 0 || delta.abs() <= (15.0 * tol).max(floor) {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = node(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// A small lattice of (r, z) evaluation points spread over the grid.
fn x_lattice(grid: &Grid) -> Vec<(f64, f64)> {
    let pick = |n: usize| -> Vec<usize> {
        let count = n.min(5);
        (0..count).map(|k| k * (n - 1) / count.max(1)).collect()
    };
    let mut out = Vec::new();
    for &i in &pick(grid.n_r()) {
        for &j in &pick(grid.n_z()) {
            out.push((grid.r(i), grid.z(j)));
        }
    }
    out
}

/// How a hypothesis entry was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckKind {
    /// Direct inequality check on the sample set.
    Sampled,
    /// Trend evidence for an asymptotic condition; not a proof.
    Evidence,
    /// Not checked (missing candidate constants or not applicable).
    Skipped,
}

/// Sample location achieving the worst slack.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Witness {
    pub r: f64,
    pub z: f64,
    pub u: f64,
}

/// One hypothesis entry. `worst_violation` is the tolerance-adjusted signed
/// slack (<= 0 iff passed); `raw` is the unadjusted extreme of the tested
/// expression.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub raw: f64,
    pub witness: Option<Witness>,
    pub kind: CheckKind,
}

impl HypothesisCheck {
    fn skipped(name: &str) -> Self {
        HypothesisCheck {
            name: name.into(),
            passed: true,
            worst_violation: 0.0,
            raw: 0.0,
            witness: None,
            kind: CheckKind::Skipped,
        }
    }

    /// Vacuously true (e.g. conditions on g when g = 0).
    fn trivial(name: &str) -> Self {
        HypothesisCheck {
            name: name.into(),
            passed: true,
            worst_violation: 0.0,
            raw: 0.0,
            witness: None,
            kind: CheckKind::Sampled,
        }
    }
}

struct Slack {
    raw: f64,
    adjusted: f64,
    witness: Option<Witness>,
}

impl Slack {
    fn new() -> Self {
        Slack {
            raw: f64::NEG_INFINITY,
            adjusted: f64::NEG_INFINITY,
            witness: None,
        }
    }

    fn update(&mut self, raw: f64, adjusted: f64, r: f64, z: f64, u: f64) {
        if raw > self.raw {
            self.raw = raw;
        }
        if adjusted > self.adjusted {
            self.adjusted = adjusted;
            self.witness = Some(Witness { r, z, u });
        }
    }

    fn into_check(self, name: &str, kind: CheckKind) -> HypothesisCheck {
        let adjusted = if self.adjusted.is_finite() { self.adjusted } else { 0.0 };
        let raw = if self.raw.is_finite() { self.raw } else { 0.0 };
        HypothesisCheck {
            name: name.into(),
            passed: adjusted <= 0.0,
            worst_violation: adjusted,
            raw,
            witness: self.witness,
            kind,
        }
    }
}

/// Aggregated validator output.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub entries: Vec<HypothesisCheck>,
}

impl AssumptionReport {
    /// All non-skipped entries passed.
    pub fn passed(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.passed || e.kind == CheckKind::Skipped)
    }

    pub fn entry(&self, name: &str) -> Option<&HypothesisCheck> {
        self.entries.iter().find(|e| e.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn test_grid() -> Grid {
        Grid::new(8, 8, 4.0, 2).unwrap()
    }

    #[test]
    fn power_closed_forms() {
        let spec = NonlinearitySpec::pure_power(4.0).unwrap();
        let ev = spec.evaluate(1.0, 0.0, 2.0).unwrap();
        assert_relative_eq!(ev.f, 8.0);
        assert_relative_eq!(ev.big_f, 4.0);
        assert_eq!(ev.g, 0.0);
        assert_eq!(ev.big_g, 0.0);
    }

    #[test]
    fn competing_powers_at_one() {
        let spec = NonlinearitySpec::competing_powers(4.0, 3.0, Gamma::Constant(1.0)).unwrap();
        let ev = spec.evaluate(1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(ev.f_tilde, 0.0);
        assert_relative_eq!(ev.big_f_tilde, 0.25 - 1.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn custom_primitive_matches_closed_form() {
        // Oracle: F(1.5) = 1.5^4 / 4 = 1.265625 exactly.
        let cubic: PointFn = Arc::new(|_, _, u| u * u * u);
        let spec = NonlinearitySpec::new(
            FKind::Custom(cubic),
            4.0,
            GKind::Zero,
            3.0,
            Gamma::Constant(1.0),
        )
        .unwrap();
        let val = spec.big_f(1.0, 0.0, 1.5);
        assert!((val - 1.265625).abs() <= 1e-10, "F = {val}");
        // Odd argument side of the primitive.
        let neg = spec.big_f(1.0, 0.0, -1.5);
        assert!((neg - 1.265625).abs() <= 1e-10, "F(-1.5) = {neg}");
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(matches!(
            NonlinearitySpec::pure_power(7.0),
            Err(Error::Hypothesis { name: "(F1)", .. })
        ));
        assert!(matches!(
            NonlinearitySpec::pure_power(2.0),
            Err(Error::Hypothesis { name: "(F1)", .. })
        ));
        assert!(matches!(
            NonlinearitySpec::competing_powers(4.0, 4.5, Gamma::Constant(1.0)),
            Err(Error::Hypothesis { name: "(G1)", .. })
        ));
        assert!(matches!(
            NonlinearitySpec::competing_powers(4.0, 2.0, Gamma::Constant(1.0)),
            Err(Error::Hypothesis { name: "(G1)", .. })
        ));
    }

    #[test]
    fn validator_passes_builtin_powers() {
        let spec = NonlinearitySpec::competing_powers(4.0, 3.0, Gamma::Constant(1.0)).unwrap();
        let report = spec
            .validate_assumptions(&test_grid(), &default_sample_ladder())
            .unwrap();
        assert!(report.passed(), "report: {report:?}");
        let ar = report.entry("(AR)").unwrap();
        assert!(ar.raw <= 1e-12, "AR raw slack {}", ar.raw);
        assert_eq!(report.entry("(F1)").unwrap().kind, CheckKind::Skipped);
    }

    #[test]
    fn validator_accepts_supplied_growth_constants() {
        let spec = NonlinearitySpec::competing_powers(4.0, 3.0, Gamma::Constant(1.0))
            .unwrap()
            .with_growth_constants(GrowthConstants {
                c: Some(1.0),
                eps: Some(0.5),
                c_eps: Some(2.0),
            });
        let report = spec
            .validate_assumptions(&test_grid(), &default_sample_ladder())
            .unwrap();
        for name in ["(F1)", "(G1)", "(f-eps)", "(g-eps)", "(fg-eps)"] {
            let e = report.entry(name).unwrap();
            assert_eq!(e.kind, CheckKind::Sampled, "{name} should be checked");
            assert!(e.passed, "{name} failed: {e:?}");
        }
    }

    #[test]
    fn validator_flags_increasing_g_ratio() {
        // Defocusing term growing like the focusing exponent p: the ratio
        // g/|u|^(q-1) = |u|^(p-q) increases, violating the monotonicity side.
        let gp: PointFn = Arc::new(|_, _, u| odd_power(u, 3.0));
        let spec = NonlinearitySpec::new(
            FKind::Power,
            4.0,
            GKind::Custom(gp),
            3.0,
            Gamma::Constant(1.0),
        )
        .unwrap();
        let report = spec
            .validate_assumptions(&test_grid(), &default_sample_ladder())
            .unwrap();
        let g3 = report.entry("(G3)").unwrap();
        assert!(!g3.passed);
        assert!(g3.worst_violation > 0.0);
    }

    #[test]
    fn validator_flags_bounded_superlinear_ratio() {
        // f identical to g: f_tilde vanishes, AR slack collapses to zero, and
        // F/|u|^q stays bounded so the superlinearity evidence must fail.
        let fq: PointFn = Arc::new(|_, _, u| odd_power(u, 2.0));
        let spec = NonlinearitySpec::new(
            FKind::Custom(fq),
            4.0,
            GKind::Power,
            3.0,
            Gamma::Constant(1.0),
        )
        .unwrap();
        let samples: Vec<f64> = default_sample_ladder()
            .into_iter()
            .filter(|u| u.abs() <= 10.0)
            .collect();
        let report = spec.validate_assumptions(&test_grid(), &samples).unwrap();
        let ar = report.entry("(AR)").unwrap();
        assert!(ar.raw.abs() <= 1e-8, "AR raw {}", ar.raw);
        assert_eq!(spec.f_tilde(1.0, 0.0, 1.0), 0.0);

        // The F3 evidence needs large samples; run it on the full ladder.
        let report = spec
            .validate_assumptions(&test_grid(), &default_sample_ladder())
            .unwrap();
        let f3 = report.entry("(F3)").unwrap();
        assert!(!f3.passed, "bounded ratio must fail the divergence evidence");
    }

    #[test]
    fn validator_rejects_empty_samples() {
        let spec = NonlinearitySpec::pure_power(4.0).unwrap();
        assert!(matches!(
            spec.validate_assumptions(&test_grid(), &[]),
            Err(Error::EmptySamples)
        ));
    }

    #[test]
    fn gamma_positivity_enforced() {
        let bad = NonlinearitySpec::competing_powers(
            4.0,
            3.0,
            Gamma::Custom(Arc::new(|r, _| r - 2.0)),
        )
        .unwrap();
        assert!(bad.validate_gamma_on(&test_grid()).is_err());
        let good = NonlinearitySpec::competing_powers(4.0, 3.0, Gamma::Constant(0.5)).unwrap();
        assert_relative_eq!(good.validate_gamma_on(&test_grid()).unwrap(), 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// f_tilde is odd in u for the built-in powers.
        #[test]
        fn f_tilde_odd(u in -1e4f64..1e4, pt in 0.05f64..0.95, qt in 0.05f64..0.95) {
            let p = 2.0 + pt * 3.9;
            let q = 2.0 + qt * (p - 2.0) * 0.98;
            prop_assume!(q > 2.0 && q < p);
            let spec = NonlinearitySpec::competing_powers(p, q, Gamma::Constant(1.3)).unwrap();
            let plus = spec.f_tilde(0.7, 0.3, u);
            let minus = spec.f_tilde(0.7, 0.3, -u);
            prop_assert!((plus + minus).abs() <= 1e-12 * (1.0 + plus.abs()));
        }

        /// The one-sided bounds q F <= f u and q G >= g u for built-in powers.
        #[test]
        fn power_ar_side_bounds(u in -1e4f64..1e4, pt in 0.05f64..0.95, qt in 0.05f64..0.95) {
            let p = 2.0 + pt * 3.9;
            let q = 2.0 + qt * (p - 2.0) * 0.98;
            prop_assume!(q > 2.0 && q < p);
            let spec = NonlinearitySpec::competing_powers(p, q, Gamma::Constant(0.8)).unwrap();
            let (r, z) = (1.1, 0.4);
            let fu = spec.f(r, z, u) * u;
            let gu = spec.g(r, z, u) * u;
            let scale = 1.0 + fu.abs() + gu.abs();
            prop_assert!(q * spec.big_f(r, z, u) - fu <= 1e-12 * scale);
            prop_assert!(q * spec.big_g(r, z, u) - gu >= -1e-12 * scale);
        }
    }
}
