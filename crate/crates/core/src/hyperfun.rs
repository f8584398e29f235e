//! Closed-form radial functions on hyperbolic space and the bound constants.
//!
//! Every function here is built from the volume primitive
//! `G(x) = ∫_0^x sinh^{n-1}(s) ds` and the two higher moments
//!
//! ```text
//! m(x) = ∫_0^x sinh^{n-1}(t) (cosh x - cosh t) dt   = G cosh x - sinh^n x / n
//! q(x) = ∫_0^x sinh^{n-1}(t) (cosh x - cosh t)^2 dt
//! ```
//!
//! Writing `m` and `q` as integrals of nonnegative integrands removes the
//! cancellation that the closed forms suffer near the origin. The auxiliary
//! functions then follow as `h = n m`, `g = ((n+1)(n-2)/(n+2)) q`,
//! `L = m / sinh x` and `f = sinh^{n-2} m - c G^2`.
//!
//! Below [`SERIES_SWITCH`] everything is evaluated from fractional power
//! series; above it, moments are accumulated on a memoized grid of nodes and
//! completed by graded Gauss–Legendre quadrature on the last partial panel.
//! Direct adaptive Simpson from the origin is kept as an independent route.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{graded_gauss_vec, simpson_vec, QuadratureError};

/// Abscissa below which the power series are used.
pub const SERIES_SWITCH: f64 = 1e-2;

/// Spacing of the memoized moment nodes.
const NODE_SPACING: f64 = 0.25;

/// Relative tolerance of the direct Simpson route.
const PANEL_TOL: f64 = 1e-14;

/// Widest Gauss–Legendre panel.
const GAUSS_WIDTH: f64 = 0.125;

/// Number of even-power coefficients carried by each series.
const TERMS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DomainError {
    #[error("dimension parameter must satisfy n > 2 (got {0})")]
    Dimension(f64),
    #[error("abscissa must be finite and nonnegative (got {0})")]
    Abscissa(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Real dimension parameter `n > 2`, together with the exponents derived from it.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Dimension(f64);

impl Dimension {
    pub fn new(n: f64) -> Result<Self, DomainError> {
        if n.is_finite() && n > 2.0 {
            Ok(Self(n))
        } else {
            Err(DomainError::Dimension(n))
        }
    }

    #[inline]
    pub fn n(self) -> f64 {
        self.0
    }

    /// Critical Sobolev exponent `p = (n+2)/(n-2)`.
    #[inline]
    pub fn critical_exponent(self) -> f64 {
        (self.0 + 2.0) / (self.0 - 2.0)
    }

    /// `σ = 1/p = (n-2)/(n+2)`.
    #[inline]
    pub fn sigma(self) -> f64 {
        (self.0 - 2.0) / (self.0 + 2.0)
    }

    /// Sharp constant `c = n/(n+2)` of the pointwise lemma.
    #[inline]
    pub fn lemma_constant(self) -> f64 {
        self.0 / (self.0 + 2.0)
    }

    pub fn bounds(self) -> BoundSet {
        bounds(self)
    }

    /// True when `2 < n < 4`, the range in which the improved bound is claimed.
    pub fn in_theorem_range(self) -> bool {
        self.0 < 4.0
    }
}

impl TryFrom<f64> for Dimension {
    type Error = DomainError;
    fn try_from(n: f64) -> Result<Self, DomainError> {
        Dimension::new(n)
    }
}

impl From<Dimension> for f64 {
    fn from(d: Dimension) -> f64 {
        d.0
    }
}

/// The three constants compared throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    /// `n^2 (n-1) / (4 (n+2))`: no radial solution at or below this value.
    pub paper_bound: f64,
    /// `n (n-2) / 4`: the star-shaped-domain bound.
    pub stapelkamp_bound: f64,
    /// `(n-1)^2 / 4`: bottom of the spectrum of the Laplacian on H^n.
    pub spectrum_bottom: f64,
}

pub fn bounds(dim: Dimension) -> BoundSet {
    let n = dim.n();
    BoundSet {
        paper_bound: n * n * (n - 1.0) / (4.0 * (n + 2.0)),
        stapelkamp_bound: n * (n - 2.0) / 4.0,
        spectrum_bottom: (n - 1.0) * (n - 1.0) / 4.0,
    }
}

fn check_abscissa(x: f64) -> Result<(), DomainError> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(DomainError::Abscissa(x))
    }
}

/// `ln sinh x` for `x > 0`, without overflow for large `x`.
pub fn ln_sinh(x: f64) -> f64 {
    if x > 20.0 {
        x - std::f64::consts::LN_2 + (-(-2.0 * x).exp()).ln_1p()
    } else {
        x.sinh().ln()
    }
}

/// `sinh^k(x)` for `x ≥ 0`; the value at 0 is 0 for `k > 0` and 1 for `k = 0`.
#[inline]
pub fn sinh_pow(x: f64, k: f64) -> f64 {
    if x == 0.0 {
        return if k > 0.0 {
            0.0
        } else if k == 0.0 {
            1.0
        } else {
            f64::INFINITY
        };
    }
    (k * ln_sinh(x)).exp()
}

/// `cosh x - cosh t` as a product of sinh factors (no cancellation for t ≈ x).
#[inline]
pub(crate) fn cosh_diff(x: f64, t: f64) -> f64 {
    2.0 * (0.5 * (x + t)).sinh() * (0.5 * (x - t)).sinh()
}

// ---------------------------------------------------------------------------
// Fractional power series
// ---------------------------------------------------------------------------

/// `x^lead · Σ_j coef[j] x^{2j}`.
#[derive(Debug, Clone, Copy)]
struct PowerSeries {
    lead: f64,
    coef: [f64; TERMS],
}

impl PowerSeries {
    fn eval(&self, x: f64) -> f64 {
        let y = x * x;
        let mut acc = 0.0;
        for c in self.coef.iter().rev() {
            acc = acc * y + c;
        }
        acc * x.powf(self.lead)
    }

    fn mul(&self, other: &PowerSeries) -> PowerSeries {
        let mut coef = [0.0; TERMS];
        for (i, a) in self.coef.iter().enumerate() {
            for (j, b) in other.coef.iter().enumerate().take(TERMS - i) {
                coef[i + j] += a * b;
            }
        }
        PowerSeries { lead: self.lead + other.lead, coef }
    }

    fn integrate(&self) -> PowerSeries {
        let mut coef = self.coef;
        for (j, c) in coef.iter_mut().enumerate() {
            *c /= self.lead + 2.0 * j as f64 + 1.0;
        }
        PowerSeries { lead: self.lead + 1.0, coef }
    }

    fn scale(mut self, s: f64) -> PowerSeries {
        for c in self.coef.iter_mut() {
            *c *= s;
        }
        self
    }
}

/// Coefficients of `sinh(x)/x` in powers of `x^2`.
fn sinhc_coefficients() -> [f64; TERMS] {
    let mut c = [0.0; TERMS];
    let mut fact = 1.0;
    for (j, cj) in c.iter_mut().enumerate() {
        if j > 0 {
            fact *= (2 * j) as f64 * (2 * j + 1) as f64;
        }
        *cj = 1.0 / fact;
    }
    c
}

/// `A(y)^k` for a series with `a[0] = 1` (J. C. P. Miller recurrence).
fn series_power(a: &[f64; TERMS], k: f64) -> [f64; TERMS] {
    let mut b = [0.0; TERMS];
    b[0] = 1.0;
    for m in 1..TERMS {
        let mut s = 0.0;
        for i in 1..=m {
            s += ((k + 1.0) * i as f64 - m as f64) * a[i] * b[m - i];
        }
        b[m] = s / m as f64;
    }
    b
}

/// `sinh^k(x)` as a fractional power series.
fn sinh_power_series(k: f64) -> PowerSeries {
    PowerSeries { lead: k, coef: series_power(&sinhc_coefficients(), k) }
}

struct SeriesSet {
    g: PowerSeries,
    m: PowerSeries,
    q: PowerSeries,
    f: PowerSeries,
}

fn series_set(dim: Dimension) -> SeriesSet {
    let n = dim.n();
    let sinh = sinh_power_series(1.0);
    let g = sinh_power_series(n - 1.0).integrate();
    // m' = G sinh, (q/2)' = m sinh
    let m = g.mul(&sinh).integrate();
    let q = m.mul(&sinh).integrate().scale(2.0);
    // f' = sinh^{n-3} g, g = ((n+1)(n-2)/(n+2)) q
    let g_aux = q.scale(g_over_q(dim));
    let f = sinh_power_series(n - 3.0).mul(&g_aux).integrate();
    SeriesSet { g, m, q, f }
}

#[inline]
fn g_over_q(dim: Dimension) -> f64 {
    let n = dim.n();
    (n + 1.0) * (n - 2.0) / (n + 2.0)
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

/// `(G, m, q)` at one abscissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub g: f64,
    pub m: f64,
    pub q: f64,
}

impl Moments {
    fn is_finite(&self) -> bool {
        self.g.is_finite() && self.m.is_finite() && self.q.is_finite()
    }
}

fn moments_series(x: f64, dim: Dimension) -> Moments {
    let s = series_set(dim);
    Moments { g: s.g.eval(x), m: s.m.eval(x), q: s.q.eval(x) }
}

/// Moment integrands at `t` for the outer abscissa `x`.
#[inline]
fn moment_integrands(x: f64, t: f64, k: f64) -> [f64; 3] {
    let w = sinh_pow(t, k);
    let e = cosh_diff(x, t);
    [w, w * e, w * e * e]
}

/// Shifts moments known at `x0` to `x` and adds the panel `[x0, x]`.
fn shift(x0: f64, base: &Moments, x: f64, panel: [f64; 3]) -> Moments {
    let d = cosh_diff(x, x0);
    Moments {
        g: base.g + panel[0],
        m: base.m + d * base.g + panel[1],
        q: base.q + 2.0 * d * base.m + d * d * base.g + panel[2],
    }
}

/// Advances known moments at `x0 > 0` to `x ≥ x0` by graded Gauss–Legendre.
fn advance(x0: f64, base: &Moments, x: f64, dim: Dimension) -> Moments {
    if x == x0 {
        return *base;
    }
    let k = dim.n() - 1.0;
    let panel = graded_gauss_vec(|t| moment_integrands(x, t, k), x0, x, GAUSS_WIDTH);
    shift(x0, base, x, panel)
}

/// Advances known moments at `x0 >= 0` to `x` by adaptive Simpson.
fn advance_simpson(x0: f64, base: &Moments, x: f64, dim: Dimension) -> Result<Moments, QuadratureError> {
    let k = dim.n() - 1.0;
    let panel = simpson_vec(|t| moment_integrands(x, t, k), x0, x, PANEL_TOL, f64::MIN_POSITIVE)?;
    Ok(shift(x0, base, x, panel))
}

fn node_x(k: usize) -> f64 {
    SERIES_SWITCH + NODE_SPACING * k as f64
}

type NodeTables = Mutex<HashMap<u64, Vec<Moments>>>;

fn tables() -> &'static NodeTables {
    static TABLES: OnceLock<NodeTables> = OnceLock::new();
    TABLES.get_or_init(|| Mutex::new(HashMap::new()))
}

fn node(dim: Dimension, k: usize) -> Moments {
    let mut guard = tables().lock().unwrap_or_else(|e| e.into_inner());
    let table = guard
        .entry(dim.n().to_bits())
        .or_insert_with(|| vec![moments_series(SERIES_SWITCH, dim)]);
    while table.len() <= k {
        let j = table.len() - 1;
        let next = advance(node_x(j), &table[j], node_x(j + 1), dim);
        if !next.is_finite() {
            // Past the overflow point; don't grow the table.
            return next;
        }
        table.push(next);
    }
    table[k]
}

/// Evaluates `(G, m, q)` at `x ≥ 0`.
pub fn moments(x: f64, dim: Dimension) -> Result<Moments, DomainError> {
    check_abscissa(x)?;
    if x < SERIES_SWITCH {
        return Ok(moments_series(x, dim));
    }
    let k = ((x - SERIES_SWITCH) / NODE_SPACING).floor() as usize;
    let base = node(dim, k);
    if !base.is_finite() {
        return Ok(base);
    }
    Ok(advance(node_x(k), &base, x, dim))
}

/// Moments by direct quadrature from the origin, bypassing series and memo.
///
/// Slow; used to cross-check the two evaluation branches.
pub fn moments_by_quadrature(x: f64, dim: Dimension) -> Result<Moments, DomainError> {
    check_abscissa(x)?;
    Ok(advance_simpson(0.0, &Moments { g: 0.0, m: 0.0, q: 0.0 }, x, dim)?)
}

/// Moments from the power series regardless of `x`. Accurate only for small `x`.
pub fn moments_by_series(x: f64, dim: Dimension) -> Result<Moments, DomainError> {
    check_abscissa(x)?;
    Ok(moments_series(x, dim))
}

// ---------------------------------------------------------------------------
// Public functions
// ---------------------------------------------------------------------------

/// `G(x) = ∫_0^x sinh^{n-1}(s) ds`.
pub fn g_big(x: f64, dim: Dimension) -> Result<f64, DomainError> {
    Ok(moments(x, dim)?.g)
}

/// `G'(x) = sinh^{n-1}(x)`.
pub fn g_prime(x: f64, dim: Dimension) -> Result<f64, DomainError> {
    check_abscissa(x)?;
    Ok(sinh_pow(x, dim.n() - 1.0))
}

/// `m(x) = G cosh x - sinh^n(x)/n`.
pub fn m_fun(x: f64, dim: Dimension) -> Result<f64, DomainError> {
    Ok(moments(x, dim)?.m)
}

/// `L(x) = G coth x - G'/n = m(x)/sinh x`, with `L(0) = 0`.
pub fn l_fun(x: f64, dim: Dimension) -> Result<f64, DomainError> {
    let m = m_fun(x, dim)?;
    Ok(if x == 0.0 { 0.0 } else { m / x.sinh() })
}

/// `f(x) = L G' - c G^2 = sinh^{n-2}(x) m(x) - c G(x)^2`.
pub fn f_fun(x: f64, dim: Dimension) -> Result<f64, DomainError> {
    check_abscissa(x)?;
    if x < SERIES_SWITCH {
        return Ok(series_set(dim).f.eval(x));
    }
    let mo = moments(x, dim)?;
    Ok(sinh_pow(x, dim.n() - 2.0) * mo.m - dim.lemma_constant() * mo.g * mo.g)
}

/// `g(x) = (n-2) cosh(x) m(x) - σ G sinh^2(x)`.
pub fn g_fun(x: f64, dim: Dimension) -> Result<f64, DomainError> {
    Ok(g_over_q(dim) * moments(x, dim)?.q)
}

/// `h(x) = n G cosh x - sinh^n x`, which is `n m(x)`.
pub fn h_fun(x: f64, dim: Dimension) -> Result<f64, DomainError> {
    Ok(dim.n() * m_fun(x, dim)?)
}

/// `(n-2) cosh(x) m(x) - σ G sinh^2(x)` for an arbitrary `σ`, by the literal formula.
///
/// Only the choice `σ = 1/p` kills the `x^{n+2}` term near the origin.
pub fn g_fun_with_sigma(x: f64, dim: Dimension, sigma: f64) -> Result<f64, DomainError> {
    let mo = moments(x, dim)?;
    let s = x.sinh();
    Ok((dim.n() - 2.0) * x.cosh() * mo.m - sigma * mo.g * s * s)
}
