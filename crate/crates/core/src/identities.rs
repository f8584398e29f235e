//! Numerical checks of the Pohozaev identities, the Rayleigh-type quotient
//! bound, the Hardy inequality and the pointwise lemma `L G' >= c G^2`.
//!
//! Profile checks read the integrals accumulated by the integrator. Test
//! functions are integrated by adaptive quadrature instead, so the two
//! routes do not share failure modes.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hyperfun::{f_fun, g_fun, h_fun, moments, sinh_pow, Dimension, DomainError};
use crate::odecore::{ProblemParams, RadialProfile};
use crate::quadrature::{simpson_vec, QuadratureError};

/// Relative tolerance for the Pohozaev identities on converged solutions.
pub const IDENTITY_TOL: f64 = 1e-6;

/// Relative slack for inequalities, measured against the larger side.
pub const INEQUALITY_TOL: f64 = 1e-9;

/// Pointwise slack of the lemma scan.
pub const LEMMA_TOL: f64 = 1e-10;

/// Profiles whose `|u(R)|` exceeds this multiple of `max|u|` are not solutions.
pub const BOUNDARY_GATE: f64 = 1e-6;

/// Relative accuracy of test-function quadrature.
pub const QUADRATURE_TOL: f64 = 1e-11;

/// Relative finite-difference step of the lemma scan.
pub const FD_STEP: f64 = 1e-5;

/// Allowed relative error of the finite-difference derivative identities.
pub const FD_TOL: f64 = 1e-6;

/// Smallest abscissa of the lemma grid.
pub const LEMMA_GRID_START: f64 = 1e-6;

const REL_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentityError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("boundary residual {residual:e} exceeds {limit:e}; the profile is not a solution")]
    BoundaryResidual { residual: f64, limit: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("invalid lemma grid: x_max = {x_max}, points = {points}")]
    Grid { x_max: f64, points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityName {
    Po1,
    Po2,
    Po,
    Hardy,
    Quotient,
    QuotientHardy,
    Lemma,
}

/// How the two sides are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Equal,
    /// `lhs >= rhs`
    AtLeast,
    /// `lhs <= rhs`
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub n: f64,
    /// Absent for checks that do not involve `λ`.
    pub lambda: Option<f64>,
    #[serde(rename = "R")]
    pub radius: f64,
}

impl From<&ProblemParams> for ReportParams {
    fn from(p: &ProblemParams) -> Self {
        Self { n: p.n.n(), lambda: Some(p.lambda), radius: p.radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: IdentityName,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub rel_residual: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub params: ReportParams,
}

impl IdentityReport {
    pub fn new(name: IdentityName, relation: Relation, lhs: f64, rhs: f64, tolerance: f64, params: ReportParams) -> Self {
        let residual = lhs - rhs;
        let rel_residual = residual.abs() / (lhs.abs() + rhs.abs() + REL_FLOOR);
        let slack = tolerance * lhs.abs().max(rhs.abs()).max(REL_FLOOR);
        let pass = match relation {
            Relation::Equal => rel_residual <= tolerance,
            Relation::AtLeast => residual >= -slack,
            Relation::AtMost => residual <= slack,
        };
        Self { name, relation, lhs, rhs, residual, rel_residual, pass, tolerance, params }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reports contain only plain numbers")
    }
}

/// Everything the identities consume, from a profile or from quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityInputs {
    pub params: ProblemParams,
    /// `∫ u² G'`
    pub iu2: f64,
    /// `∫ u'² G'`
    pub idu2: f64,
    /// `∫ |u|^{p+1} G'`
    pub iup1: f64,
    /// `∫ u'² L`
    pub il: f64,
    /// `∫ u'² G²/G'`
    pub ih: f64,
    /// `u'` at the outer end.
    pub du_end: f64,
    /// `G` at the outer end.
    pub g_end: f64,
    pub boundary_residual: f64,
    pub max_abs_u: f64,
}

impl From<&RadialProfile> for IdentityInputs {
    fn from(profile: &RadialProfile) -> Self {
        let i = profile.integrals();
        Self {
            params: profile.params,
            iu2: i.iu2,
            idu2: i.idu2,
            iup1: i.iup1,
            il: i.il,
            ih: i.ih,
            du_end: profile.du_end(),
            g_end: profile.g_end(),
            boundary_residual: profile.boundary_residual(),
            max_abs_u: profile.max_abs_u(),
        }
    }
}

impl IdentityInputs {
    /// Integrates a test function over `[0, R]` by adaptive quadrature.
    pub fn from_test_function<T: TestFunction + ?Sized>(f: &T, params: &ProblemParams) -> Result<Self, IdentityError> {
        let dim = params.n;
        let radius = params.radius;
        let p1 = params.p() + 1.0;
        let k = dim.n() - 1.0;

        let mut cuts = vec![0.0];
        cuts.extend(f.breakpoints().into_iter().filter(|&b| b > 0.0 && b < radius));
        cuts.push(radius);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let integrand = |x: f64| -> [f64; 5] {
            let (u, du) = (f.value(x), f.derivative(x));
            if x == 0.0 {
                return [0.0; 5];
            }
            let Ok(mo) = moments(x, dim) else { return [f64::NAN; 5] };
            let w = sinh_pow(x, k);
            let du2 = du * du;
            [
                u * u * w,
                du2 * w,
                u.abs().powf(p1) * w,
                du2 * mo.m / x.sinh(),
                du2 * mo.g * mo.g / w,
            ]
        };
        let mut acc = [0.0; 5];
        for c in cuts.windows(2) {
            let part = simpson_vec(integrand, c[0], c[1], QUADRATURE_TOL, REL_FLOOR)?;
            for (a, v) in acc.iter_mut().zip(part) {
                *a += v;
            }
        }

        let mut max_abs_u: f64 = 0.0;
        for i in 0..=1024 {
            max_abs_u = max_abs_u.max(f.value(radius * i as f64 / 1024.0).abs());
        }
        for &b in &cuts {
            max_abs_u = max_abs_u.max(f.value(b).abs());
        }
        Ok(Self {
            params: *params,
            iu2: acc[0],
            idu2: acc[1],
            iup1: acc[2],
            il: acc[3],
            ih: acc[4],
            du_end: f.derivative(radius),
            g_end: moments(radius, dim)?.g,
            boundary_residual: f.value(radius).abs(),
            max_abs_u,
        })
    }

    fn gate(&self) -> Result<(), IdentityError> {
        let limit = BOUNDARY_GATE * self.max_abs_u;
        if self.boundary_residual <= limit {
            Ok(())
        } else {
            Err(IdentityError::BoundaryResidual { residual: self.boundary_residual, limit })
        }
    }

    fn report_params(&self) -> ReportParams {
        ReportParams::from(&self.params)
    }

    fn boundary_term(&self) -> f64 {
        0.5 * self.du_end * self.du_end * self.g_end
    }
}

/// `∫u'² G' = λ∫u² G' + ∫|u|^{p+1} G'`, without the boundary gate.
pub fn po1_report(x: &IdentityInputs, tol: f64) -> IdentityReport {
    let rhs = x.params.lambda * x.iu2 + x.iup1;
    IdentityReport::new(IdentityName::Po1, Relation::Equal, x.idu2, rhs, tol, x.report_params())
}

/// The identity from the multiplier `u'G`, without the boundary gate:
/// `u'(R)²G(R)/2 + ∫u'²((n-1)G coth - G'/2) = λ/2 ∫u²G' + 1/(p+1) ∫|u|^{p+1}G'`.
pub fn po2_report(x: &IdentityInputs, tol: f64) -> IdentityReport {
    let n = x.params.n.n();
    // ∫u'² G coth = I_L + I_du2 / n
    let lhs = x.boundary_term() + (n - 1.0) * (x.il + x.idu2 / n) - 0.5 * x.idu2;
    let rhs = 0.5 * x.params.lambda * x.iu2 + x.iup1 / (x.params.p() + 1.0);
    IdentityReport::new(IdentityName::Po2, Relation::Equal, lhs, rhs, tol, x.report_params())
}

/// `(n-1)∫u'² L + u'(R)²G(R)/2 = (λ/n)∫u² G'`, without the boundary gate.
pub fn po_report(x: &IdentityInputs, tol: f64) -> IdentityReport {
    let n = x.params.n.n();
    let lhs = (n - 1.0) * x.il + x.boundary_term();
    let rhs = x.params.lambda / n * x.iu2;
    IdentityReport::new(IdentityName::Po, Relation::Equal, lhs, rhs, tol, x.report_params())
}

pub fn check_po1(x: &IdentityInputs, tol: f64) -> Result<IdentityReport, IdentityError> {
    x.gate()?;
    Ok(po1_report(x, tol))
}

pub fn check_po2(x: &IdentityInputs, tol: f64) -> Result<IdentityReport, IdentityError> {
    x.gate()?;
    Ok(po2_report(x, tol))
}

pub fn check_po(x: &IdentityInputs, tol: f64) -> Result<IdentityReport, IdentityError> {
    x.gate()?;
    Ok(po_report(x, tol))
}

/// `λ >= n(n-1) ∫u'² L / ∫u² G'`.
pub fn check_quotient(x: &IdentityInputs, tol: f64) -> Result<IdentityReport, IdentityError> {
    if x.iu2 <= 0.0 {
        return Err(IdentityError::Degenerate("u vanishes identically"));
    }
    let n = x.params.n.n();
    let rhs = n * (n - 1.0) * x.il / x.iu2;
    Ok(IdentityReport::new(IdentityName::Quotient, Relation::AtLeast, x.params.lambda, rhs, tol, x.report_params()))
}

/// `∫u² G' <= 4 ∫u'² G²/G'`.
pub fn check_hardy(x: &IdentityInputs, tol: f64) -> IdentityReport {
    IdentityReport::new(IdentityName::Hardy, Relation::AtMost, x.iu2, 4.0 * x.ih, tol, x.report_params())
}

/// `n(n-1) ∫u'² L / (4 ∫u'² G²/G') >= n²(n-1)/(4(n+2))`.
pub fn check_quotient_hardy(x: &IdentityInputs, tol: f64) -> Result<IdentityReport, IdentityError> {
    if x.ih <= 0.0 {
        return Err(IdentityError::Degenerate("u' vanishes identically"));
    }
    let n = x.params.n.n();
    let ratio = n * (n - 1.0) * x.il / (4.0 * x.ih);
    let bound = x.params.n.bounds().paper_bound;
    Ok(IdentityReport::new(IdentityName::QuotientHardy, Relation::AtLeast, ratio, bound, tol, x.report_params()))
}

/// The links `λ >= quotient >= quotient_hardy >= paper bound`, each checked on its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub quotient: IdentityReport,
    pub hardy_link: IdentityReport,
    pub quotient_hardy: IdentityReport,
}

impl ChainReport {
    pub fn pass(&self) -> bool {
        self.quotient.pass && self.hardy_link.pass && self.quotient_hardy.pass
    }
}

pub fn check_chain(x: &IdentityInputs, tol: f64) -> Result<ChainReport, IdentityError> {
    let quotient = check_quotient(x, tol)?;
    let quotient_hardy = check_quotient_hardy(x, tol)?;
    // The middle link compares the two quotients directly.
    let hardy_link = IdentityReport::new(
        IdentityName::Hardy,
        Relation::AtLeast,
        quotient.rhs,
        quotient_hardy.lhs,
        tol,
        x.report_params(),
    );
    Ok(ChainReport { quotient, hardy_link, quotient_hardy })
}

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

/// A `C¹` function on `[0, R]` with `f(R) = 0`.
pub trait TestFunction: Sync {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    /// Points where the derivative is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `1 - x/R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub radius: f64,
}

impl TestFunction for Ramp {
    fn value(&self, x: f64) -> f64 {
        1.0 - x / self.radius
    }

    fn derivative(&self, _x: f64) -> f64 {
        -1.0 / self.radius
    }
}

/// `(R - x) q(x)` with a cubic `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyBump {
    pub radius: f64,
    pub q: [f64; 4],
}

impl PolyBump {
    /// Coefficients of `q` uniform in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> Self {
        let mut q = [0.0; 4];
        for c in &mut q {
            *c = rng.random_range(-1.0..=1.0);
        }
        Self { radius, q }
    }

    fn q(&self, x: f64) -> (f64, f64) {
        let [a, b, c, d] = self.q;
        (a + x * (b + x * (c + x * d)), b + x * (2.0 * c + 3.0 * d * x))
    }
}

impl TestFunction for PolyBump {
    fn value(&self, x: f64) -> f64 {
        (self.radius - x) * self.q(x).0
    }

    fn derivative(&self, x: f64) -> f64 {
        let (q, dq) = self.q(x);
        (self.radius - x) * dq - q
    }
}

/// Equal to 1 on `[0, ε]`, 0 beyond `2ε`, smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NarrowBump {
    pub eps: f64,
}

impl TestFunction for NarrowBump {
    fn value(&self, x: f64) -> f64 {
        let s = ((x - self.eps) / self.eps).clamp(0.0, 1.0);
        1.0 - s * s * (3.0 - 2.0 * s)
    }

    fn derivative(&self, x: f64) -> f64 {
        if x <= self.eps || x >= 2.0 * self.eps {
            return 0.0;
        }
        let s = (x - self.eps) / self.eps;
        -6.0 * s * (1.0 - s) / self.eps
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![self.eps, 2.0 * self.eps]
    }
}

// ---------------------------------------------------------------------------
// Lemma scan
// ---------------------------------------------------------------------------

/// Result of [`lemma_scan`]: the worst grid point of `f = L G' - c G²`
/// plus the auxiliary sign and derivative checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    /// `lhs = L G'`, `rhs = c G²` at the worst point.
    pub report: IdentityReport,
    pub worst_x: f64,
    /// `min f / max(|L G'|, c G²)` over the grid.
    pub min_normalized_f: f64,
    pub constant: f64,
    pub points: usize,
    pub x_max: f64,
    pub auxiliary_nonnegative: bool,
    /// Largest relative error of `m' = G sinh`, `h' = n G sinh`,
    /// `g' = (2(n+1)(n-2)/(n(n+2))) sinh h` by central differences.
    pub derivative_errors: [f64; 3],
    pub derivatives_pass: bool,
    pub pass: bool,
}

/// Log-uniform grid on `[LEMMA_GRID_START, x_max]`.
pub fn lemma_grid(x_max: f64, points: usize) -> Result<Vec<f64>, IdentityError> {
    if !(x_max.is_finite() && x_max > LEMMA_GRID_START && points >= 2) {
        return Err(IdentityError::Grid { x_max, points });
    }
    Ok(crate::shooting::log_grid(LEMMA_GRID_START, x_max, points))
}

/// Samples `f = L G' - c G²` on a log grid and checks its sign pointwise.
pub fn lemma_scan(dim: Dimension, x_max: f64, points: usize) -> Result<LemmaReport, IdentityError> {
    lemma_scan_with_constant(dim, x_max, points, dim.lemma_constant())
}

/// [`lemma_scan`] with `c` replaced; larger constants must fail near the origin.
pub fn lemma_scan_with_constant(dim: Dimension, x_max: f64, points: usize, c: f64) -> Result<LemmaReport, IdentityError> {
    let grid = lemma_grid(x_max, points)?;
    let n = dim.n();
    let c0 = dim.lemma_constant();
    let k_g = 2.0 * (n + 1.0) * (n - 2.0) / (n * (n + 2.0));

    let mut worst = (f64::INFINITY, 0.0, 0.0, 0.0);
    let mut nonneg = true;
    let mut fd_err = [0.0f64; 3];
    for &x in &grid {
        let mo = moments(x, dim)?;
        let g2 = mo.g * mo.g;
        // f with the true constant is evaluated stably; shift it for other constants.
        let f = f_fun(x, dim)? - (c - c0) * g2;
        let lg = f + c * g2;
        let scale = lg.abs().max(c * g2).max(REL_FLOOR);
        if f / scale < worst.0 {
            worst = (f / scale, x, lg, c * g2);
        }
        let (g_aux, h_aux) = (g_fun(x, dim)?, h_fun(x, dim)?);
        nonneg &= mo.m >= 0.0 && g_aux >= 0.0 && h_aux >= 0.0;

        let step = FD_STEP * x;
        let (lo, hi) = (x - step, x + step);
        let (mlo, mhi) = (moments(lo, dim)?, moments(hi, dim)?);
        let s = x.sinh();
        let dm = (mhi.m - mlo.m) / (2.0 * step);
        let dh = (h_fun(hi, dim)? - h_fun(lo, dim)?) / (2.0 * step);
        let dg = (g_fun(hi, dim)? - g_fun(lo, dim)?) / (2.0 * step);
        let exact = [mo.g * s, n * mo.g * s, k_g * s * h_aux];
        for (e, (fd, ex)) in fd_err.iter_mut().zip([dm, dh, dg].into_iter().zip(exact)) {
            *e = e.max((fd - ex).abs() / ex.abs().max(REL_FLOOR));
        }
    }

    let (min_norm, worst_x, lhs, rhs) = worst;
    let mut report = IdentityReport::new(
        IdentityName::Lemma,
        Relation::AtLeast,
        lhs,
        rhs,
        LEMMA_TOL,
        ReportParams { n, lambda: None, radius: x_max },
    );
    // Pass is decided pointwise over the grid, not only at the reported point.
    report.pass = min_norm >= -LEMMA_TOL;
    let derivatives_pass = fd_err.iter().all(|&e| e <= FD_TOL);
    Ok(LemmaReport {
        pass: report.pass && nonneg && derivatives_pass,
        report,
        worst_x,
        min_normalized_f: min_norm,
        constant: c,
        points,
        x_max,
        auxiliary_nonnegative: nonneg,
        derivative_errors: fd_err,
        derivatives_pass,
    })
}
