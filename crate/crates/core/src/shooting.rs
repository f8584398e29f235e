//! Shooting from the origin: amplitudes whose targeted zero lands at `R`,
//! and the first Dirichlet eigenvalue of the linearized problem.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hyperfun::{Dimension, DomainError};
use crate::odecore::{
    integrate_with, IntegrateOptions, Mode, OdeError, ProblemParams, RadialProfile, StopRule,
};
pub use crate::odecore::ShootingOutcome;

/// Default amplitude bracket of the logarithmic scan.
pub const DEFAULT_BRACKET: (f64, f64) = (1e-6, 1e6);

/// Default number of scan amplitudes.
pub const DEFAULT_SCAN_POINTS: usize = 200;

/// Refinement stops once the targeted zero is this close to `R`.
pub const ZERO_MATCH: f64 = 1e-10;

/// Relative tolerance for deciding that a linear trajectory has its zero at `R`.
pub const DEGENERACY_TOL: f64 = 1e-8;

const MAX_REFINE: usize = 300;

/// Integrator tolerance used by [`eigen_lambda1`].
const EIGEN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShootingError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("amplitude must be positive and finite (got {0})")]
    Amplitude(f64),
    #[error("invalid amplitude bracket [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },
    #[error("scan needs at least two points (got {0})")]
    ScanPoints(usize),
    #[error("radius must be positive and finite (got {0})")]
    Radius(f64),
    #[error("eigenvalue window [{lo}, {hi}] does not bracket the first zero at R = {radius}")]
    EigenBracket { lo: f64, hi: f64, radius: f64 },
}

/// Settings shared by the first-zero map and the boundary-value solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootConfig {
    pub tol: f64,
    pub mode: Mode,
    pub bracket: (f64, f64),
    pub scan_points: usize,
    /// Interior zeros of the sought solution; the `(k+1)`-th zero is matched to `R`.
    pub node_count: usize,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            mode: Mode::Nonlinear,
            bracket: DEFAULT_BRACKET,
            scan_points: DEFAULT_SCAN_POINTS,
            node_count: 0,
        }
    }
}

impl ShootConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    fn integrate_options(&self) -> IntegrateOptions {
        IntegrateOptions::new(self.tol)
            .mode(self.mode)
            .stop(StopRule::AtZero(self.node_count + 1))
    }
}

/// Integration horizon for classifying a trajectory.
pub fn horizon(radius: f64) -> f64 {
    (4.0 * radius).max(20.0)
}

/// `ρ(a)`: location of the targeted zero of the trajectory with `u(0) = a`.
pub fn first_zero_map(params: &ProblemParams, a: f64, cfg: &ShootConfig) -> Result<ShootingOutcome, ShootingError> {
    if !(a.is_finite() && a > 0.0) {
        return Err(ShootingError::Amplitude(a));
    }
    let t = integrate_with(params, a, horizon(params.radius), &cfg.integrate_options())?;
    Ok(t.outcome)
}

/// One sample of the amplitude scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub amplitude: f64,
    pub outcome: ShootingOutcome,
}

impl ScanPoint {
    /// `ρ(a) − R`, with missing zeros counted as `+∞`.
    pub fn offset(&self, radius: f64) -> f64 {
        self.outcome.zero().map_or(f64::INFINITY, |x| x - radius)
    }
}

/// The scan behind a solve, kept so an empty result can be told apart from
/// a bracket that was too narrow.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScanTrace {
    pub points: Vec<ScanPoint>,
    /// Sign changes of `ρ(a) − R` between neighbouring scan points.
    pub sign_changes: usize,
    /// Sign changes where bisection collapsed without matching `R`
    /// (a jump of `ρ`, not a root).
    pub unresolved: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvpSolution {
    pub profile: RadialProfile,
    pub amplitude: f64,
    /// `|u(R)|` of the profile integrated straight to `R`.
    pub boundary_residual: f64,
    pub node_count: usize,
}

impl BvpSolution {
    fn at_amplitude(params: &ProblemParams, a: f64, tol: f64, mode: Mode) -> Result<Self, ShootingError> {
        let opts = IntegrateOptions::new(tol).mode(mode).stop(StopRule::Never);
        let t = integrate_with(params, a, params.radius, &opts)?;
        let profile = t.profile;
        let node_count = profile.sign_changes_before(params.radius * (1.0 - 1e-8));
        Ok(Self { boundary_residual: profile.boundary_residual(), amplitude: a, profile, node_count })
    }

    /// The same amplitude integrated again at another tolerance.
    pub fn reintegrate(&self, tol: f64) -> Result<Self, ShootingError> {
        Self::at_amplitude(&self.profile.params, self.amplitude, tol, self.profile.mode)
    }

    /// `boundary_residual / max|u|`.
    pub fn relative_residual(&self) -> f64 {
        self.boundary_residual / self.profile.max_abs_u().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BvpOutcome {
    Found { solutions: Vec<BvpSolution>, trace: ScanTrace },
    /// Linear mode at an eigenvalue: every amplitude has its zero at `rho ≈ R`.
    Degenerate { rho: f64 },
    NotFound { trace: ScanTrace },
}

impl BvpOutcome {
    pub fn solutions(&self) -> &[BvpSolution] {
        match self {
            BvpOutcome::Found { solutions, .. } => solutions,
            _ => &[],
        }
    }

    pub fn trace(&self) -> Option<&ScanTrace> {
        match self {
            BvpOutcome::Found { trace, .. } | BvpOutcome::NotFound { trace } => Some(trace),
            BvpOutcome::Degenerate { .. } => None,
        }
    }
}

/// Log-spaced amplitudes spanning `[lo, hi]` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == points {
                hi
            } else {
                (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

/// Scans `ρ(a) − R` on a log grid, then refines every sign change.
pub fn solve_bvp(params: &ProblemParams, cfg: &ShootConfig) -> Result<BvpOutcome, ShootingError> {
    let (lo, hi) = cfg.bracket;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
        return Err(ShootingError::Bracket { lo, hi });
    }
    if cfg.scan_points < 2 {
        return Err(ShootingError::ScanPoints(cfg.scan_points));
    }
    let radius = params.radius;

    if cfg.mode == Mode::Linear {
        // ρ does not depend on a; compare two amplitudes to confirm.
        let points = [lo, hi]
            .iter()
            .map(|&a| Ok(ScanPoint { amplitude: a, outcome: first_zero_map(params, a, cfg)? }))
            .collect::<Result<Vec<_>, ShootingError>>()?;
        if let (Some(r0), Some(r1)) = (points[0].outcome.zero(), points[1].outcome.zero()) {
            let tight = DEGENERACY_TOL * radius;
            if (r0 - r1).abs() <= tight && (r0 - radius).abs() <= tight {
                return Ok(BvpOutcome::Degenerate { rho: 0.5 * (r0 + r1) });
            }
        }
        return Ok(BvpOutcome::NotFound { trace: ScanTrace { points, ..ScanTrace::default() } });
    }

    let grid = log_grid(lo, hi, cfg.scan_points);
    let points = grid
        .par_iter()
        .map(|&a| Ok(ScanPoint { amplitude: a, outcome: first_zero_map(params, a, cfg)? }))
        .collect::<Result<Vec<_>, ShootingError>>()?;

    let mut trace = ScanTrace { points, ..ScanTrace::default() };
    let mut roots = Vec::new();
    for w in trace.points.windows(2) {
        let (d0, d1) = (w[0].offset(radius), w[1].offset(radius));
        if d0 == 0.0 {
            roots.push(Some(w[0].amplitude));
            continue;
        }
        if (d0 > 0.0) == (d1 > 0.0) {
            continue;
        }
        trace.sign_changes += 1;
        match refine(params, cfg, (w[0].amplitude, d0), (w[1].amplitude, d1))? {
            Some(a) => roots.push(Some(a)),
            None => trace.unresolved.push((w[0].amplitude, w[1].amplitude)),
        }
    }
    if let Some(last) = trace.points.last() {
        if last.offset(radius) == 0.0 {
            roots.push(Some(last.amplitude));
        }
    }

    let solutions = roots
        .into_iter()
        .flatten()
        .map(|a| BvpSolution::at_amplitude(params, a, cfg.tol, cfg.mode))
        .collect::<Result<Vec<_>, _>>()?;
    if solutions.is_empty() {
        Ok(BvpOutcome::NotFound { trace })
    } else {
        Ok(BvpOutcome::Found { solutions, trace })
    }
}

/// Root of `ρ(e^s) − R` between two scan points of opposite sign.
///
/// Illinois steps while both ends are finite, bisection otherwise. Returns
/// `None` when the bracket collapses onto a jump.
fn refine(
    params: &ProblemParams,
    cfg: &ShootConfig,
    lo: (f64, f64),
    hi: (f64, f64),
) -> Result<Option<f64>, ShootingError> {
    let radius = params.radius;
    let (mut s0, mut d0) = (lo.0.ln(), lo.1);
    let (mut s1, mut d1) = (hi.0.ln(), hi.1);
    let mut side = 0i8;
    for _ in 0..MAX_REFINE {
        let width = (s1 - s0).abs();
        if width <= 4.0 * f64::EPSILON * s0.abs().max(s1.abs()).max(1.0) {
            return Ok(None);
        }
        let mut s = if d0.is_finite() && d1.is_finite() {
            s1 - d1 * (s1 - s0) / (d1 - d0)
        } else {
            0.5 * (s0 + s1)
        };
        let (a, b) = if s0 < s1 { (s0, s1) } else { (s1, s0) };
        if !(s > a && s < b) {
            s = 0.5 * (s0 + s1);
        }
        let point = ScanPoint { amplitude: s.exp(), outcome: first_zero_map(params, s.exp(), cfg)? };
        let d = point.offset(radius);
        if d.abs() <= ZERO_MATCH {
            return Ok(Some(point.amplitude));
        }
        if (d > 0.0) == (d1 > 0.0) {
            s1 = s;
            d1 = d;
            if side == 1 {
                d0 *= 0.5;
            }
            side = 1;
        } else {
            s0 = s;
            d0 = d;
            if side == -1 {
                d1 *= 0.5;
            }
            side = -1;
        }
    }
    Ok(None)
}

/// First Dirichlet eigenvalue of the radial Laplacian on the geodesic ball
/// of radius `R`, located by bisection in λ to absolute accuracy `tol`.
pub fn eigen_lambda1(n: Dimension, radius: f64, tol: f64) -> Result<f64, ShootingError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(ShootingError::Radius(radius));
    }
    let bottom = n.bounds().spectrum_bottom;
    let (mut lo, mut hi) = (bottom, bottom + (4.0 * std::f64::consts::PI / radius).powi(2));
    let zero_inside = |lambda: f64| -> Result<bool, ShootingError> {
        let params = ProblemParams::new(n.n(), lambda, radius)?;
        let opts = IntegrateOptions::new(EIGEN_TOL).mode(Mode::Linear);
        let t = integrate_with(&params, 1.0, radius, &opts)?;
        Ok(t.outcome.zero().is_some_and(|x| x < radius))
    };
    if zero_inside(lo)? || !zero_inside(hi)? {
        return Err(ShootingError::EigenBracket { lo, hi, radius });
    }
    let tol = tol.max(4.0 * f64::EPSILON * hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if zero_inside(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
