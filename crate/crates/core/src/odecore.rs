//! Outward integration of the radial equation
//!
//! ```text
//! -u'' - (n-1) coth(x) u' = λ u + |u|^{p-1} u,    u(0) = a,  u'(0) = 0
//! ```
//!
//! with a Dormand–Prince 5(4) pair. Besides `(u, u')` the state carries the
//! volume primitive `G`, the moment `m` (`m' = G sinh x`) and the five
//! weighted integrals that appear in the integral identities, so those
//! integrals inherit the integrator's error control.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hyperfun::{self, sinh_pow, Dimension, DomainError};

pub const STATE_DIM: usize = 9;
pub type State = [f64; STATE_DIM];

/// Indices into [`State`].
pub mod idx {
    pub const U: usize = 0;
    pub const V: usize = 1;
    pub const G: usize = 2;
    pub const M: usize = 3;
    pub const IU2: usize = 4;
    pub const IDU2: usize = 5;
    pub const IUP1: usize = 6;
    pub const IL: usize = 7;
    pub const IH: usize = 8;
}

/// `|u|` beyond which a trajectory is classified as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e100;

/// Default offset from the singular origin.
pub const DEFAULT_START: f64 = 1e-4;

/// Largest admissible offset from the origin.
pub const MAX_START: f64 = 1e-3;

/// A step is rejected as underflow when `h <= STEP_FLOOR * x`.
pub const STEP_FLOOR: f64 = 1e-14;

const MAX_STEPS: usize = 2_000_000;

/// Floor added to the relative error scale of the accumulated integrals.
const INTEGRAL_FLOOR: f64 = 1e-290;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("invalid problem parameters: {0}")]
    Params(String),
    #[error("right-hand side evaluated at x = {0}; the equation is singular for x <= 0")]
    Abscissa(f64),
    #[error("|u| exceeded the divergence threshold at x = {x}")]
    Overflow { x: f64 },
    #[error("origin offset {0} outside (0, 1e-3]")]
    StartOutOfRange(f64),
    #[error("tolerance {0} outside [1e-13, 1e-6]")]
    Tolerance(f64),
    #[error("step size collapsed to {h:e} at x = {x}")]
    StepSizeUnderflow { x: f64, h: f64 },
    #[error("step budget exhausted at x = {x}")]
    TooManySteps { x: f64 },
}

/// `(n, λ, R)`; the exponent `p` is always derived from `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ProblemParams {
    pub n: Dimension,
    pub lambda: f64,
    pub radius: f64,
}

#[derive(Deserialize)]
struct RawParams {
    n: f64,
    lambda: f64,
    radius: f64,
}

impl TryFrom<RawParams> for ProblemParams {
    type Error = OdeError;
    fn try_from(r: RawParams) -> Result<Self, OdeError> {
        ProblemParams::new(r.n, r.lambda, r.radius)
    }
}

impl ProblemParams {
    pub fn new(n: f64, lambda: f64, radius: f64) -> Result<Self, OdeError> {
        let n = Dimension::new(n)?;
        if !lambda.is_finite() {
            return Err(OdeError::Params(format!("lambda must be finite (got {lambda})")));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(OdeError::Params(format!("radius must be positive (got {radius})")));
        }
        Ok(Self { n, lambda, radius })
    }

    #[inline]
    pub fn p(&self) -> f64 {
        self.n.critical_exponent()
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self, OdeError> {
        Self::new(self.n.n(), lambda, self.radius)
    }
}

/// Whether the critical nonlinearity is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Nonlinear,
    /// `|u|^{p-1} u` suppressed: the Dirichlet eigenvalue integrator.
    Linear,
}

/// Classification of one outward trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShootingOutcome {
    /// The targeted zero of `u` (the first, unless a later one was requested).
    FirstZero { x: f64 },
    NoZero { x_max: f64 },
    Diverged { x: f64 },
}

impl ShootingOutcome {
    pub fn zero(&self) -> Option<f64> {
        match *self {
            ShootingOutcome::FirstZero { x } => Some(x),
            _ => None,
        }
    }
}

/// When to stop integrating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Stop at the k-th sign change of `u` (1-based).
    AtZero(usize),
    /// Integrate to `x_max` regardless of zeros.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub tol: f64,
    pub mode: Mode,
    pub stop: StopRule,
    /// Origin offset; chosen from the amplitude when `None`.
    pub start: Option<f64>,
}

impl IntegrateOptions {
    pub fn new(tol: f64) -> Self {
        Self { tol, mode: Mode::Nonlinear, stop: StopRule::AtZero(1), start: None }
    }

    pub fn mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn start(mut self, x1: f64) -> Self {
        self.start = Some(x1);
        self
    }
}

/// `F(u) = λu + |u|^{p-1}u` and its derivative.
#[inline]
fn forcing(params: &ProblemParams, mode: Mode, u: f64) -> (f64, f64) {
    match mode {
        Mode::Linear => (params.lambda * u, params.lambda),
        Mode::Nonlinear => {
            let p = params.p();
            let au = u.abs();
            let pow = au.powf(p - 1.0);
            (params.lambda * u + pow * u, params.lambda + p * pow)
        }
    }
}

/// Right-hand side of the augmented system at `x > 0`.
pub fn rhs(params: &ProblemParams, mode: Mode, x: f64, y: &State) -> Result<State, OdeError> {
    if !(x > 0.0) {
        return Err(OdeError::Abscissa(x));
    }
    let u = y[idx::U];
    let v = y[idx::V];
    if !(u.abs() <= DIVERGENCE_THRESHOLD) {
        return Err(OdeError::Overflow { x });
    }
    let n = params.n.n();
    let (f, _) = forcing(params, mode, u);
    let sh = x.sinh();
    let w = sinh_pow(x, n - 1.0);
    let g = y[idx::G];
    let m = y[idx::M];
    let v2 = v * v;
    let mut d = [0.0; STATE_DIM];
    d[idx::U] = v;
    d[idx::V] = -(n - 1.0) * v / x.tanh() - f;
    d[idx::G] = w;
    d[idx::M] = g * sh;
    d[idx::IU2] = u * u * w;
    d[idx::IDU2] = v2 * w;
    d[idx::IUP1] = u.abs().powf(params.p() + 1.0) * w;
    d[idx::IL] = v2 * m / sh;
    d[idx::IH] = v2 * g * (g / w);
    if d.iter().all(|c| c.is_finite()) {
        Ok(d)
    } else {
        Err(OdeError::Overflow { x })
    }
}

/// Second derivative `u''` implied by the equation, including the limit at the origin.
pub fn second_derivative(params: &ProblemParams, mode: Mode, x: f64, u: f64, v: f64) -> f64 {
    let (f, _) = forcing(params, mode, u);
    if x == 0.0 {
        -f / params.n.n()
    } else {
        -(params.n.n() - 1.0) * v / x.tanh() - f
    }
}

/// Origin offset that keeps the fourth-order Taylor start accurate for amplitude `a`.
pub fn default_start(params: &ProblemParams, mode: Mode, a: f64) -> f64 {
    let (_, df) = forcing(params, mode, a);
    let kappa = 1.0 + params.lambda.abs() + df.abs();
    DEFAULT_START.min(1e-3 / kappa.sqrt())
}

/// Regular Taylor state at `x1` for `u(0) = a`, `u'(0) = 0`.
///
/// `u = a + b x² + d x⁴` with `b = -F(a)/(2n)` and
/// `d = -b (2(n-1)/3 + F'(a)) / (4(n+2))`; the integrals start from their
/// leading powers.
pub fn origin_step(params: &ProblemParams, mode: Mode, a: f64, x1: f64) -> Result<State, OdeError> {
    if !(x1 > 0.0 && x1 <= MAX_START) {
        return Err(OdeError::StartOutOfRange(x1));
    }
    let n = params.n.n();
    let (f, df) = forcing(params, mode, a);
    let b = -f / (2.0 * n);
    let d = -b * (2.0 * (n - 1.0) / 3.0 + df) / (4.0 * (n + 2.0));
    let x2 = x1 * x1;
    let mo = hyperfun::moments(x1, params.n)?;
    let xn2 = x1.powf(n + 2.0);
    let xn4 = xn2 * x2;
    let mut y = [0.0; STATE_DIM];
    y[idx::U] = a + b * x2 + d * x2 * x2;
    y[idx::V] = 2.0 * b * x1 + 4.0 * d * x1 * x2;
    y[idx::G] = mo.g;
    y[idx::M] = mo.m;
    y[idx::IU2] = a * a * mo.g + 2.0 * a * b * xn2 / (n + 2.0);
    y[idx::IDU2] = 4.0 * b * b * xn2 / (n + 2.0);
    y[idx::IUP1] = a.abs().powf(params.p() + 1.0) * mo.g;
    y[idx::IL] = 4.0 * b * b * xn4 / (n * (n + 2.0) * (n + 4.0));
    y[idx::IH] = 4.0 * b * b * xn4 / (n * n * (n + 4.0));
    Ok(y)
}

// ---------------------------------------------------------------------------
// Dormand–Prince 5(4)
// ---------------------------------------------------------------------------

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct StepResult {
    y: State,
    dy: State,
    err: State,
}

fn combine(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for i in 0..STATE_DIM {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] += h * s;
    }
    out
}

fn dp5_step<F>(f: &F, x: f64, y: &State, k1: &State, h: f64) -> Result<StepResult, OdeError>
where
    F: Fn(f64, &State) -> Result<State, OdeError>,
{
    let k2 = f(x + C2 * h, &combine(y, h, &[(A21, k1)]))?;
    let k3 = f(x + C3 * h, &combine(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(x + C4 * h, &combine(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(x + C5 * h, &combine(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = f(
        x + h,
        &combine(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    )?;
    let y_new = combine(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(x + h, &y_new)?;
    let mut err = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Ok(StepResult { y: y_new, dy: k7, err })
}

/// Scaled max-norm of the local error estimate.
///
/// `u` and `u'` share the local size `|u| + ℓ|u'|` with the length scale
/// `ℓ = min(x, 1)`, so a tail many orders of magnitude below the peak is
/// still resolved relatively. The monotone accumulated quantities are
/// controlled relative to their own size.
fn error_norm(step: &StepResult, x: f64, y: &State, tol: f64) -> f64 {
    let local = |i: usize| y[i].abs().max(step.y[i].abs());
    let ell = x.min(1.0);
    let size_u = local(idx::U) + ell * local(idx::V);
    let mut worst: f64 = 0.0;
    for i in 0..STATE_DIM {
        let scale = match i {
            idx::U => tol * size_u,
            idx::V => tol * size_u / ell,
            _ => tol * local(i) + INTEGRAL_FLOOR,
        };
        worst = worst.max(step.err[i].abs() / scale.max(f64::MIN_POSITIVE));
    }
    worst
}

/// Quintic Hermite interpolant of `u` on one step, from `(u, u', u'')` at both ends.
#[derive(Debug, Clone, Copy)]
pub struct HermiteSegment {
    pub x0: f64,
    pub h: f64,
    coef: [f64; 6],
}

impl HermiteSegment {
    pub fn new(x0: f64, x1: f64, start: (f64, f64, f64), end: (f64, f64, f64)) -> Self {
        let h = x1 - x0;
        Self {
            x0,
            h,
            coef: [start.0, h * start.1, h * h * start.2, h * h * end.2, h * end.1, end.0],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.x0) / self.h;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
        let h3 = 0.5 * (t3 - 2.0 * t4 + t5);
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let c = &self.coef;
        h0 * c[0] + h1 * c[1] + h2 * c[2] + h3 * c[3] + h4 * c[4] + h5 * c[5]
    }

    /// Root of the interpolant in a step whose end values differ in sign.
    fn root(&self, u0: f64) -> f64 {
        let (mut lo, mut hi) = (self.x0, self.x0 + self.h);
        let mut f_lo = u0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = self.eval(mid);
            if fm == 0.0 {
                return mid;
            }
            if (fm > 0.0) == (f_lo > 0.0) {
                lo = mid;
                f_lo = fm;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

/// Column data of a profile; one entry per accepted step plus the origin.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileColumns {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub g: Vec<f64>,
    pub iu2: Vec<f64>,
    pub idu2: Vec<f64>,
    pub iup1: Vec<f64>,
    pub il: Vec<f64>,
    pub ih: Vec<f64>,
}

pub const CSV_HEADER: [&str; 9] = ["x", "u", "du", "G", "Iu2", "Idu2", "Iup1", "IL", "IH"];

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("row {row}: expected 9 fields, found {found}")]
    FieldCount { row: usize, found: usize },
    #[error("row {row}, column {column}: cannot parse {text:?} as a number")]
    Number { row: usize, column: &'static str, text: String },
    #[error("invalid profile: {0}")]
    Invalid(String),
}

impl ProfileColumns {
    fn push(&mut self, x: f64, y: &State) {
        self.x.push(x);
        self.u.push(y[idx::U]);
        self.du.push(y[idx::V]);
        self.g.push(y[idx::G]);
        self.iu2.push(y[idx::IU2]);
        self.idu2.push(y[idx::IDU2]);
        self.iup1.push(y[idx::IUP1]);
        self.il.push(y[idx::IL]);
        self.ih.push(y[idx::IH]);
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn columns(&self) -> [&Vec<f64>; 9] {
        [&self.x, &self.u, &self.du, &self.g, &self.iu2, &self.idu2, &self.iup1, &self.il, &self.ih]
    }

    /// Checks the structural invariants of a profile.
    pub fn validate(&self) -> Result<(), ProfileError> {
        let bad = |m: String| Err(ProfileError::Invalid(m));
        let len = self.x.len();
        if len == 0 {
            return bad("profile has no rows".into());
        }
        for (name, col) in CSV_HEADER.iter().zip(self.columns()) {
            if col.len() != len {
                return bad(format!("column {name} has {} entries, expected {len}", col.len()));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return bad(format!("column {name} row {i} is not finite"));
            }
        }
        if self.x[0] != 0.0 {
            return bad(format!("grid must start at 0 (got {})", self.x[0]));
        }
        if self.du[0] != 0.0 {
            return bad("u'(0) must be 0".into());
        }
        if let Some(i) = self.x.windows(2).position(|w| !(w[1] > w[0])) {
            return bad(format!("grid not strictly increasing at row {}", i + 1));
        }
        for (name, col) in CSV_HEADER[3..].iter().zip(&self.columns()[3..]) {
            if let Some(i) = col.iter().position(|v| *v < 0.0) {
                return bad(format!("accumulated {name} is negative at row {i}"));
            }
        }
        Ok(())
    }

    /// Writes the profile as CSV with 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", CSV_HEADER.join(","))?;
        let cols = self.columns();
        for i in 0..self.len() {
            let row: Vec<String> = cols.iter().map(|c| format!("{:.16e}", c[i])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Parses and validates CSV produced by [`ProfileColumns::write_csv`].
    pub fn parse_csv<R: Read>(input: R) -> Result<Self, ProfileError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(ProfileError::Header {
                expected: CSV_HEADER.join(","),
                found: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut cols = ProfileColumns::default();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != 9 {
                return Err(ProfileError::FieldCount { row, found: record.len() });
            }
            let mut vals = [0.0; 9];
            for (k, field) in record.iter().enumerate() {
                vals[k] = field.parse::<f64>().map_err(|_| ProfileError::Number {
                    row,
                    column: CSV_HEADER[k],
                    text: field.chars().take(64).collect(),
                })?;
            }
            cols.x.push(vals[0]);
            cols.u.push(vals[1]);
            cols.du.push(vals[2]);
            cols.g.push(vals[3]);
            cols.iu2.push(vals[4]);
            cols.idu2.push(vals[5]);
            cols.iup1.push(vals[6]);
            cols.il.push(vals[7]);
            cols.ih.push(vals[8]);
        }
        cols.validate()?;
        Ok(cols)
    }
}

/// Dense numerical trajectory with its accumulated identity integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub params: ProblemParams,
    pub mode: Mode,
    pub amplitude: f64,
    #[serde(flatten)]
    pub columns: ProfileColumns,
}

/// Values of the accumulated integrals at the end of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndIntegrals {
    pub iu2: f64,
    pub idu2: f64,
    pub iup1: f64,
    pub il: f64,
    pub ih: f64,
}

impl RadialProfile {
    pub fn from_columns(params: ProblemParams, mode: Mode, columns: ProfileColumns) -> Result<Self, ProfileError> {
        columns.validate()?;
        Ok(Self { params, mode, amplitude: columns.u[0], columns })
    }

    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let p: RadialProfile = serde_json::from_str(text)?;
        p.columns.validate()?;
        if p.amplitude != p.columns.u[0] {
            return Err(ProfileError::Invalid("amplitude differs from u(0)".into()));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("profile serializes")
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    fn last(col: &[f64]) -> f64 {
        *col.last().expect("profiles are nonempty")
    }

    pub fn x_end(&self) -> f64 {
        Self::last(&self.columns.x)
    }

    pub fn u_end(&self) -> f64 {
        Self::last(&self.columns.u)
    }

    pub fn du_end(&self) -> f64 {
        Self::last(&self.columns.du)
    }

    pub fn g_end(&self) -> f64 {
        Self::last(&self.columns.g)
    }

    pub fn max_abs_u(&self) -> f64 {
        self.columns.u.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `|u|` at the last grid point.
    pub fn boundary_residual(&self) -> f64 {
        self.u_end().abs()
    }

    pub fn integrals(&self) -> EndIntegrals {
        let c = &self.columns;
        EndIntegrals {
            iu2: Self::last(&c.iu2),
            idu2: Self::last(&c.idu2),
            iup1: Self::last(&c.iup1),
            il: Self::last(&c.il),
            ih: Self::last(&c.ih),
        }
    }

    /// Sign changes of `u` strictly before `x_limit`.
    pub fn sign_changes_before(&self, x_limit: f64) -> usize {
        let c = &self.columns;
        let mut count = 0;
        for i in 1..c.len() {
            if c.x[i] >= x_limit {
                break;
            }
            if c.u[i] == 0.0 || (c.u[i] > 0.0) != (c.u[i - 1] > 0.0) {
                count += 1;
            }
        }
        count
    }

    /// Quintic Hermite interpolant of `u` on grid interval `i`.
    pub fn segment(&self, i: usize) -> HermiteSegment {
        let c = &self.columns;
        let end = |j: usize| {
            let a = second_derivative(&self.params, self.mode, c.x[j], c.u[j], c.du[j]);
            (c.u[j], c.du[j], a)
        };
        HermiteSegment::new(c.x[i], c.x[i + 1], end(i), end(i + 1))
    }

    /// `u` at an arbitrary `x` inside the grid, via the dense interpolant.
    pub fn u_at(&self, x: f64) -> Option<f64> {
        let c = &self.columns;
        if !(x >= 0.0 && x <= self.x_end()) {
            return None;
        }
        let i = match c.x.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return Some(c.u[i]),
            Err(i) => i - 1,
        };
        Some(self.segment(i).eval(x))
    }

    /// `∫ u² G'` recomputed by composite Simpson on the dense output.
    ///
    /// Independent of the accumulated state; each accepted step is split
    /// into four Simpson panels.
    pub fn simpson_iu2(&self) -> f64 {
        let k = self.params.n.n() - 1.0;
        let c = &self.columns;
        let mut total = 0.0;
        for i in 0..c.len() - 1 {
            let seg = self.segment(i);
            let (a, b) = (c.x[i], c.x[i + 1]);
            let panels = 4;
            let h = (b - a) / panels as f64;
            let f = |x: f64, u: f64| u * u * sinh_pow(x, k);
            let mut s = f(a, c.u[i]) + f(b, c.u[i + 1]);
            for j in 1..2 * panels {
                let x = a + 0.5 * h * j as f64;
                let w = if j % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(x, seg.eval(x));
            }
            total += s * h / 6.0;
        }
        total
    }
}

/// Output of [`integrate`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub profile: RadialProfile,
    pub outcome: ShootingOutcome,
}

/// Integrates from the origin with amplitude `a` and stops at the first zero of `u`.
pub fn integrate(params: &ProblemParams, a: f64, x_max: f64, tol: f64) -> Result<Trajectory, OdeError> {
    integrate_with(params, a, x_max, &IntegrateOptions::new(tol))
}

pub fn integrate_with(
    params: &ProblemParams,
    a: f64,
    x_max: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, OdeError> {
    let tol = opts.tol;
    if !(1e-13..=1e-6).contains(&tol) {
        return Err(OdeError::Tolerance(tol));
    }
    if !(a.is_finite()) {
        return Err(OdeError::Params(format!("amplitude must be finite (got {a})")));
    }
    if !(x_max.is_finite() && x_max > 0.0) {
        return Err(OdeError::Params(format!("x_max must be positive (got {x_max})")));
    }
    let mode = opts.mode;
    let x1 = opts.start.unwrap_or_else(|| default_start(params, mode, a)).min(0.5 * x_max);

    let mut cols = ProfileColumns::default();
    let mut origin = [0.0; STATE_DIM];
    origin[idx::U] = a;
    cols.push(0.0, &origin);

    let finish = |cols: ProfileColumns, outcome| Trajectory {
        profile: RadialProfile { params: *params, mode, amplitude: a, columns: cols },
        outcome,
    };

    if a == 0.0 {
        cols.push(x_max, &origin);
        return Ok(finish(cols, ShootingOutcome::NoZero { x_max }));
    }

    let f = |x: f64, y: &State| rhs(params, mode, x, y);
    let mut x = x1;
    let mut y = origin_step(params, mode, a, x1)?;
    cols.push(x, &y);
    let mut k1 = match f(x, &y) {
        Ok(k) => k,
        Err(OdeError::Overflow { x }) => return Ok(finish(cols, ShootingOutcome::Diverged { x })),
        Err(e) => return Err(e),
    };
    let mut amp = a.abs().max(y[idx::U].abs());
    let mut h = 0.05 * x1;
    let mut zeros = 0usize;

    for _ in 0..MAX_STEPS {
        if x >= x_max {
            return Ok(finish(cols, ShootingOutcome::NoZero { x_max }));
        }
        let last = h >= x_max - x;
        if last {
            h = x_max - x;
        }
        if h <= STEP_FLOOR * x {
            return Err(OdeError::StepSizeUnderflow { x, h });
        }
        let step = match dp5_step(&f, x, &y, &k1, h) {
            Ok(s) => s,
            Err(OdeError::Overflow { .. }) => {
                // Shrink first; only a persistent overflow means divergence.
                if h > 1e-8 * x {
                    h *= 0.2;
                    continue;
                }
                return Ok(finish(cols, ShootingOutcome::Diverged { x }));
            }
            Err(e) => return Err(e),
        };
        let err = error_norm(&step, x, &y, tol);
        if !(err <= 1.0) {
            let factor = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.2) } else { 0.2 };
            h *= factor;
            continue;
        }
        let x_new = if last { x_max } else { x + h };
        let u_old = y[idx::U];
        let u_new = step.y[idx::U];

        if u_new.abs() > DIVERGENCE_THRESHOLD {
            cols.push(x_new, &step.y);
            return Ok(finish(cols, ShootingOutcome::Diverged { x: x_new }));
        }

        let crossed = u_new == 0.0 || (u_new > 0.0) != (u_old > 0.0);
        if crossed {
            zeros += 1;
            if opts.stop == StopRule::AtZero(zeros) {
                let (xz, yz) = locate_zero(&f, params, mode, x, &y, &k1, x_new, &step, amp)?;
                cols.push(xz, &yz);
                return Ok(finish(cols, ShootingOutcome::FirstZero { x: xz }));
            }
        }

        cols.push(x_new, &step.y);
        amp = amp.max(u_new.abs());
        x = x_new;
        y = step.y;
        k1 = step.dy;
        let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= grow;
    }
    Err(OdeError::TooManySteps { x })
}

/// Places the zero inside an accepted step and re-steps exactly onto it.
#[allow(clippy::too_many_arguments)]
fn locate_zero<F>(
    f: &F,
    params: &ProblemParams,
    mode: Mode,
    x0: f64,
    y0: &State,
    k1: &State,
    x1: f64,
    step: &StepResult,
    amp: f64,
) -> Result<(f64, State), OdeError>
where
    F: Fn(f64, &State) -> Result<State, OdeError>,
{
    let u1 = step.y[idx::U];
    if u1 == 0.0 {
        return Ok((x1, step.y));
    }
    let a0 = second_derivative(params, mode, x0, y0[idx::U], y0[idx::V]);
    let a1 = step.dy[idx::V];
    let seg = HermiteSegment::new(
        x0,
        x1,
        (y0[idx::U], y0[idx::V], a0),
        (u1, step.y[idx::V], a1),
    );
    let mut xz = seg.root(y0[idx::U]);
    let mut best = (xz, *y0, f64::INFINITY);
    // Newton on the step length using the one-step map itself.
    for _ in 0..8 {
        let hz = xz - x0;
        if !(hz > 0.0) {
            break;
        }
        let s = dp5_step(f, x0, y0, k1, hz)?;
        let uz = s.y[idx::U];
        if uz.abs() < best.2 {
            best = (xz, s.y, uz.abs());
        }
        if uz.abs() <= 1e-15 * amp {
            break;
        }
        let vz = s.y[idx::V];
        if vz == 0.0 {
            break;
        }
        let next = (xz - uz / vz).clamp(x0 + 0.5 * (xz - x0), x1);
        if next == xz {
            break;
        }
        xz = next;
    }
    Ok((best.0, best.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(n: f64, lambda: f64) -> ProblemParams {
        ProblemParams::new(n, lambda, 1.0).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ProblemParams::new(2.0, 1.0, 1.0).is_err());
        assert!(ProblemParams::new(3.0, f64::NAN, 1.0).is_err());
        assert!(ProblemParams::new(3.0, 1.0, 0.0).is_err());
        assert!(ProblemParams::new(3.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn rhs_zero_state() {
        let p = params(3.0, 2.0);
        let mut y = [0.0; STATE_DIM];
        y[idx::G] = 0.3;
        let d = rhs(&p, Mode::Nonlinear, 0.7, &y).unwrap();
        for i in [idx::U, idx::V, idx::IU2, idx::IDU2, idx::IUP1, idx::IL, idx::IH] {
            assert_eq!(d[i], 0.0);
        }
        assert!(d[idx::G] > 0.0);
        // m' = G sinh is geometric and independent of u.
        assert!((d[idx::M] - 0.3 * 0.7f64.sinh()).abs() < 1e-16);
    }

    #[test]
    fn rhs_domain() {
        let p = params(3.0, 2.0);
        let y = [0.0; STATE_DIM];
        assert!(matches!(rhs(&p, Mode::Linear, 0.0, &y), Err(OdeError::Abscissa(_))));
        assert!(matches!(rhs(&p, Mode::Linear, -1.0, &y), Err(OdeError::Abscissa(_))));
        let mut big = y;
        big[idx::U] = 1e101;
        assert!(matches!(rhs(&p, Mode::Linear, 1.0, &big), Err(OdeError::Overflow { .. })));
    }

    #[test]
    fn rhs_exact_linear_solution() {
        // n=3, λ=2: u = sin x / sinh x solves the linear equation exactly.
        let p = params(3.0, 2.0);
        let x: f64 = 1.0;
        let (s, sh, c, ch) = (x.sin(), x.sinh(), x.cos(), x.cosh());
        let u = s / sh;
        let du = c / sh - s * ch / (sh * sh);
        let d2u = -s / sh - 2.0 * c * ch / (sh * sh) - s / sh + 2.0 * s * ch * ch / (sh * sh * sh);
        let mut y = [0.0; STATE_DIM];
        y[idx::U] = u;
        y[idx::V] = du;
        let d = rhs(&p, Mode::Linear, x, &y).unwrap();
        assert!((d[idx::V] - d2u).abs() < 1e-12);
        let residual = -d2u - 2.0 * ch / sh * du - 2.0 * u;
        assert!(residual.abs() < 1e-10);
    }

    #[test]
    fn coth_term_near_origin() {
        let p = params(3.0, 0.0);
        let x = 1e-8;
        let mut y = [0.0; STATE_DIM];
        y[idx::V] = 0.37;
        let d = rhs(&p, Mode::Linear, x, &y).unwrap();
        let expected = -(2.0) * 0.37 / x;
        assert!(((d[idx::V] - expected) / expected).abs() < 1e-15);
    }

    #[test]
    fn origin_step_values() {
        let p = params(3.0, 0.0);
        let y = origin_step(&p, Mode::Nonlinear, 0.0, 1e-4).unwrap();
        assert_eq!(y[idx::U], 0.0);
        assert_eq!(y[idx::V], 0.0);
        let y = origin_step(&p, Mode::Nonlinear, 1.0, 1e-4).unwrap();
        assert!((y[idx::U] - (1.0 - 1e-8 / 6.0)).abs() < 1e-15);
        assert!(origin_step(&p, Mode::Nonlinear, 1.0, 0.0).is_err());
        assert!(origin_step(&p, Mode::Nonlinear, 1.0, 2e-3).is_err());
    }

    #[test]
    fn origin_step_matches_tiny_start_integration() {
        // Oracle: integrate from x1 = 1e-6 (where the Taylor error is ~1e-36).
        let p = params(3.0, 0.0);
        let fine = integrate_with(
            &p,
            1.0,
            1e-4,
            &IntegrateOptions::new(1e-13).start(1e-6).stop(StopRule::Never),
        )
        .unwrap();
        let y = origin_step(&p, Mode::Nonlinear, 1.0, 1e-4).unwrap();
        assert!((fine.profile.u_end() - y[idx::U]).abs() < 1e-14);
        assert!(((fine.profile.du_end() - y[idx::V]) / y[idx::V]).abs() < 1e-9);
    }

    #[test]
    fn start_offset_independence() {
        let p = params(3.0, 1.5);
        let opts = IntegrateOptions::new(1e-12).stop(StopRule::Never);
        let a = integrate_with(&p, 0.8, 1.0, &opts.start(1e-4)).unwrap();
        let b = integrate_with(&p, 0.8, 1.0, &opts.start(1e-3)).unwrap();
        let (ua, ub) = (a.profile.u_end(), b.profile.u_end());
        assert!(((ua - ub) / ua).abs() < 1e-9, "{ua} {ub}");
    }

    #[test]
    fn zero_amplitude() {
        let p = params(3.0, 5.0);
        let t = integrate(&p, 0.0, 3.0, 1e-10).unwrap();
        assert!(matches!(t.outcome, ShootingOutcome::NoZero { .. }));
        assert!(t.profile.columns.u.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn linear_first_zero_is_pi() {
        let p = params(3.0, 2.0);
        let opts = IntegrateOptions::new(1e-12).mode(Mode::Linear);
        let t = integrate_with(&p, 1.0, 10.0, &opts).unwrap();
        let x = t.outcome.zero().unwrap();
        assert!((x - PI).abs() < 1e-9, "{x}");
        assert!(t.profile.u_end().abs() <= 1e-10 * t.profile.max_abs_u());
    }

    #[test]
    fn linear_mode_scales_with_amplitude() {
        let p = params(2.7, 1.3);
        let opts = IntegrateOptions::new(1e-11).mode(Mode::Linear).stop(StopRule::Never).start(1e-4);
        let one = integrate_with(&p, 1.0, 6.0, &opts).unwrap();
        let big = integrate_with(&p, 1e3, 6.0, &opts).unwrap();
        let r = big.profile.u_end() / (1e3 * one.profile.u_end());
        assert!((r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hermite_reproduces_quintic() {
        let q = |x: f64| 1.0 - 2.0 * x + 0.5 * x.powi(3) - x.powi(5);
        let dq = |x: f64| -2.0 + 1.5 * x * x - 5.0 * x.powi(4);
        let d2q = |x: f64| 3.0 * x - 20.0 * x.powi(3);
        let (a, b) = (0.3, 1.1);
        let seg = HermiteSegment::new(a, b, (q(a), dq(a), d2q(a)), (q(b), dq(b), d2q(b)));
        for i in 0..=10 {
            let x = a + (b - a) * i as f64 / 10.0;
            assert!((seg.eval(x) - q(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn csv_round_trip() {
        let p = params(3.0, 4.0);
        let t = integrate(&p, 1.0, 5.0, 1e-9).unwrap();
        let text = t.profile.columns.to_csv_string();
        assert!(text.starts_with("x,u,du,G,Iu2,Idu2,Iup1,IL,IH\n"));
        let back = ProfileColumns::parse_csv(text.as_bytes()).unwrap();
        assert_eq!(back, t.profile.columns);
    }

    #[test]
    fn json_round_trip() {
        let p = params(3.0, 4.0);
        let t = integrate(&p, 1.0, 5.0, 1e-9).unwrap();
        let text = t.profile.to_json();
        let back = RadialProfile::from_json(&text).unwrap();
        assert_eq!(back, t.profile);
    }

    #[test]
    fn csv_rejects_malformed() {
        assert!(ProfileColumns::parse_csv("a,b\n1,2\n".as_bytes()).is_err());
        let hdr = "x,u,du,G,Iu2,Idu2,Iup1,IL,IH\n";
        assert!(ProfileColumns::parse_csv(hdr.as_bytes()).is_err());
        let text = format!("{hdr}0,1,0,0,0,0,0,0,0\n0.5,1,0,0,0,0,0,0,0\n0.4,1,0,0,0,0,0,0,0\n");
        assert!(ProfileColumns::parse_csv(text.as_bytes()).is_err());
        let text = format!("{hdr}0,1,0.1,0,0,0,0,0,0\n");
        assert!(ProfileColumns::parse_csv(text.as_bytes()).is_err());
        let text = format!("{hdr}0,1,0,0,0,0,0,0,nan\n");
        assert!(ProfileColumns::parse_csv(text.as_bytes()).is_err());
        let text = format!("{hdr}0,1,0,0,-1,0,0,0,0\n");
        assert!(ProfileColumns::parse_csv(text.as_bytes()).is_err());
        let text = format!("{hdr}0,1,0,0,0,0,0,0\n");
        assert!(ProfileColumns::parse_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn json_rejects_bad_params() {
        let p = params(3.0, 4.0);
        let t = integrate(&p, 1.0, 2.0, 1e-9).unwrap();
        let text = t.profile.to_json().replace("\"n\":3.0", "\"n\":1.5");
        assert!(RadialProfile::from_json(&text).is_err());
    }

    #[test]
    fn tolerance_range_enforced() {
        let p = params(3.0, 4.0);
        assert!(matches!(integrate(&p, 1.0, 2.0, 1e-5), Err(OdeError::Tolerance(_))));
        assert!(matches!(integrate(&p, 1.0, 2.0, 1e-14), Err(OdeError::Tolerance(_))));
    }
}
