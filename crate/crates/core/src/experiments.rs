//! Parameter sweeps: the empirical existence threshold λ*(n, R), bound
//! tables, the threshold surface and batch Hardy checks on random bumps.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hyperfun::{Dimension, DomainError};
use crate::identities::{
    check_hardy, check_quotient_hardy, po1_report, IdentityError, IdentityInputs, IdentityReport, PolyBump,
    IDENTITY_TOL, INEQUALITY_TOL,
};
use crate::odecore::{OdeError, ProblemParams};
use crate::shooting::{eigen_lambda1, solve_bvp, BvpOutcome, BvpSolution, ScanTrace, ShootConfig, ShootingError};

/// Final width of the refined λ* bracket.
pub const LAMBDA_STAR_WIDTH: f64 = 1e-4;

/// A re-integrated solution must keep `|u(R)| <= EVIDENCE_RESIDUAL · max|u|`.
pub const EVIDENCE_RESIDUAL: f64 = 1e-8;

/// Boundary residual every reported solution must meet.
pub const SOLUTION_RESIDUAL: f64 = 1e-9;

/// Absolute accuracy of λ1 in sweeps.
pub const EIGEN_TOL: f64 = 1e-10;

pub const DEFAULT_N_GRID: [f64; 5] = [2.1, 2.5, 3.0, 3.5, 3.9];
pub const DEFAULT_R_GRID: [f64; 4] = [0.5, 1.0, 2.0, 5.0];
pub const DEFAULT_LAMBDA_STEPS: usize = 60;

/// Default λ windows are `[0, LAMBDA_SPAN · λ1]`.
pub const LAMBDA_SPAN: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Shooting(#[from] ShootingError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error("invalid λ range: need lambda_min < lambda_max and steps >= 2 (got [{min}, {max}], {steps})")]
    LambdaRange { min: f64, max: f64, steps: usize },
    #[error("invalid grid: {0}")]
    Grid(String),
}

/// Settings of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub shoot: ShootConfig,
    pub lambda_star_width: f64,
    pub eigen_tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { shoot: ShootConfig::default(), lambda_star_width: LAMBDA_STAR_WIDTH, eigen_tol: EIGEN_TOL }
    }
}

impl SweepConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { shoot: ShootConfig::with_tol(tol), ..Self::default() }
    }
}

/// What a solution found by the solver looks like after the evidence checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub amplitude: f64,
    pub max_abs_u: f64,
    pub boundary_residual: f64,
    pub node_count: usize,
    /// `|u(R)| / max|u|` after re-integration at a tenth of the tolerance.
    pub recheck_residual: f64,
    pub po1_rel_residual: f64,
    pub verified: bool,
}

/// Applies the existence evidence standard to one solution.
pub fn assess(solution: &BvpSolution, tol: f64) -> Result<SolutionSummary, ExperimentError> {
    let again = solution.reintegrate((0.1 * tol).max(1e-13))?;
    let recheck = again.relative_residual();
    let po1 = po1_report(&IdentityInputs::from(&solution.profile), IDENTITY_TOL);
    let max_abs_u = solution.profile.max_abs_u();
    let verified = solution.node_count == 0
        && solution.boundary_residual <= SOLUTION_RESIDUAL * max_abs_u
        && recheck <= EVIDENCE_RESIDUAL
        && po1.pass;
    Ok(SolutionSummary {
        amplitude: solution.amplitude,
        max_abs_u,
        boundary_residual: solution.boundary_residual,
        node_count: solution.node_count,
        recheck_residual: recheck,
        po1_rel_residual: po1.rel_residual,
        verified,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Found { solutions: Vec<SolutionSummary> },
    NotFound { trace: ScanTrace },
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub lambda: f64,
    pub exists: bool,
    pub evidence: Evidence,
    /// The solver's solutions, kept in memory for follow-up checks.
    #[serde(skip)]
    pub solutions: Vec<BvpSolution>,
}

/// Runs the solver at one λ and grades what it finds.
pub fn probe_lambda(n: Dimension, radius: f64, lambda: f64, cfg: &SweepConfig) -> ScanEntry {
    let run = || -> Result<(Evidence, Vec<BvpSolution>), ExperimentError> {
        let params = ProblemParams::new(n.n(), lambda, radius)?;
        match solve_bvp(&params, &cfg.shoot)? {
            BvpOutcome::Found { solutions, .. } => {
                let summaries =
                    solutions.iter().map(|s| assess(s, cfg.shoot.tol)).collect::<Result<Vec<_>, _>>()?;
                Ok((Evidence::Found { solutions: summaries }, solutions))
            }
            BvpOutcome::NotFound { trace } => Ok((Evidence::NotFound { trace }, Vec::new())),
            BvpOutcome::Degenerate { rho } => {
                Err(ExperimentError::Grid(format!("degenerate linear problem (zero at {rho}) in a nonlinear sweep")))
            }
        }
    };
    match run() {
        Ok((evidence, solutions)) => {
            let exists = matches!(&evidence, Evidence::Found { solutions } if solutions.iter().any(|s| s.verified));
            ScanEntry { lambda, exists, evidence, solutions }
        }
        Err(e) => ScanEntry { lambda, exists: false, evidence: Evidence::Failed { message: e.to_string() }, solutions: Vec::new() },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub n: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub lambda_grid: Vec<f64>,
    pub entries: Vec<ScanEntry>,
    /// First grid transition from "no" to "exists", as `(λ_no, λ_yes)`.
    pub grid_bracket: Option<(f64, f64)>,
    /// `grid_bracket` refined by bisection in λ.
    pub lambda_star_bracket: Option<(f64, f64)>,
    /// Probes made while refining, in order.
    pub refinement: Vec<ScanEntry>,
    pub eigen_lambda1: Option<f64>,
}

impl ScanResult {
    /// Largest λ carrying a verified solution at or below `bound`, if any.
    pub fn violation_at_or_below(&self, bound: f64) -> Option<f64> {
        self.entries
            .iter()
            .chain(&self.refinement)
            .filter(|e| e.exists && e.lambda <= bound)
            .map(|e| e.lambda)
            .reduce(f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scan results are plain data")
    }
}

/// Equally spaced grid with both ends included.
pub fn linear_grid(min: f64, max: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|i| if i + 1 == steps { max } else { min + (max - min) * i as f64 / (steps - 1) as f64 })
        .collect()
}

/// Solves on an ascending λ grid, then narrows the first no/yes transition.
pub fn scan_lambda(
    n: Dimension,
    radius: f64,
    lambda_min: f64,
    lambda_max: f64,
    steps: usize,
    cfg: &SweepConfig,
) -> Result<ScanResult, ExperimentError> {
    if !(lambda_min.is_finite() && lambda_max.is_finite() && lambda_min < lambda_max && steps >= 2) {
        return Err(ExperimentError::LambdaRange { min: lambda_min, max: lambda_max, steps });
    }
    ProblemParams::new(n.n(), lambda_min, radius)?;
    let lambda_grid = linear_grid(lambda_min, lambda_max, steps);
    let entries: Vec<ScanEntry> =
        lambda_grid.par_iter().map(|&lambda| probe_lambda(n, radius, lambda, cfg)).collect();

    let grid_bracket = entries.windows(2).find(|w| !w[0].exists && w[1].exists).map(|w| (w[0].lambda, w[1].lambda));
    let mut refinement = Vec::new();
    let lambda_star_bracket = grid_bracket.map(|(mut lo, mut hi)| {
        while hi - lo > cfg.lambda_star_width {
            let mid = 0.5 * (lo + hi);
            let entry = probe_lambda(n, radius, mid, cfg);
            if entry.exists {
                hi = mid;
            } else {
                lo = mid;
            }
            refinement.push(entry);
        }
        (lo, hi)
    });
    let eigen = eigen_lambda1(n, radius, cfg.eigen_tol).ok();
    Ok(ScanResult {
        n: n.n(),
        radius,
        lambda_grid,
        entries,
        grid_bracket,
        lambda_star_bracket,
        refinement,
        eigen_lambda1: eigen,
    })
}

/// [`scan_lambda`] over the default window `[0, 1.2 λ1]` with 60 points.
pub fn default_scan(n: Dimension, radius: f64, cfg: &SweepConfig) -> Result<ScanResult, ExperimentError> {
    let lambda1 = eigen_lambda1(n, radius, cfg.eigen_tol)?;
    scan_lambda(n, radius, 0.0, LAMBDA_SPAN * lambda1, DEFAULT_LAMBDA_STEPS, cfg)
}

// ---------------------------------------------------------------------------
// Tables and datasets
// ---------------------------------------------------------------------------

/// Writes `v` with 17 significant digits; `None` becomes an empty cell.
pub fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.16e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n: f64,
    pub paper_bound: f64,
    pub stapelkamp_bound: f64,
    pub spectrum_bottom: f64,
    pub ratio: f64,
}

/// Bound constants for each `n`, ascending.
pub fn bound_table(n_grid: &[f64]) -> Result<Vec<BoundRow>, ExperimentError> {
    let mut rows = n_grid
        .iter()
        .map(|&n| {
            let b = Dimension::new(n)?.bounds();
            Ok(BoundRow {
                n,
                paper_bound: b.paper_bound,
                stapelkamp_bound: b.stapelkamp_bound,
                spectrum_bottom: b.spectrum_bottom,
                ratio: b.paper_bound / b.stapelkamp_bound,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    rows.sort_by(|a, b| a.n.total_cmp(&b.n));
    Ok(rows)
}

pub fn bound_table_csv(rows: &[BoundRow]) -> String {
    let mut out = String::from("n,paper_bound,stapelkamp_bound,spectrum_bottom,ratio\n");
    for r in rows {
        let cells = [r.n, r.paper_bound, r.stapelkamp_bound, r.spectrum_bottom, r.ratio].map(|v| fmt_cell(Some(v)));
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub n: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub lambda_no: Option<f64>,
    pub lambda_yes: Option<f64>,
    pub paper_bound: f64,
    pub stapelkamp_bound: f64,
    pub lambda1: Option<f64>,
    /// Largest λ at or below the paper bound with a verified solution.
    pub violation: Option<f64>,
    pub error: Option<String>,
}

pub const SURFACE_HEADER: &str = "n,R,lambda_no,lambda_yes,paper_bound,stapelkamp_bound,lambda1";

/// One default λ scan per `(n, R)` cell.
pub fn threshold_surface(n_grid: &[f64], r_grid: &[f64], cfg: &SweepConfig) -> Result<Vec<SurfaceRow>, ExperimentError> {
    let dims = n_grid.iter().map(|&n| Dimension::new(n)).collect::<Result<Vec<_>, _>>()?;
    if let Some(&r) = r_grid.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(ExperimentError::Grid(format!("radius must be positive (got {r})")));
    }
    let cells: Vec<(Dimension, f64)> = dims.iter().flat_map(|&d| r_grid.iter().map(move |&r| (d, r))).collect();
    Ok(cells
        .par_iter()
        .map(|&(dim, radius)| {
            let b = dim.bounds();
            let mut row = SurfaceRow {
                n: dim.n(),
                radius,
                lambda_no: None,
                lambda_yes: None,
                paper_bound: b.paper_bound,
                stapelkamp_bound: b.stapelkamp_bound,
                lambda1: None,
                violation: None,
                error: None,
            };
            match default_scan(dim, radius, cfg) {
                Ok(scan) => {
                    row.lambda1 = scan.eigen_lambda1;
                    if let Some((lo, hi)) = scan.lambda_star_bracket {
                        row.lambda_no = Some(lo);
                        row.lambda_yes = Some(hi);
                    }
                    row.violation = scan.violation_at_or_below(b.paper_bound);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect())
}

pub fn surface_csv(rows: &[SurfaceRow]) -> String {
    let mut out = format!("{SURFACE_HEADER}\n");
    for r in rows {
        let cells = [
            Some(r.n),
            Some(r.radius),
            r.lambda_no,
            r.lambda_yes,
            Some(r.paper_bound),
            Some(r.stapelkamp_bound),
            r.lambda1,
        ]
        .map(fmt_cell);
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

// ---------------------------------------------------------------------------
// Synthetic batches
// ---------------------------------------------------------------------------

/// Hardy and quotient-bound reports for one random bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpCheck {
    pub q: [f64; 4],
    pub hardy: IdentityReport,
    pub quotient_hardy: IdentityReport,
}

/// `count` seeded random bumps on `[0, R]`, checked at dimension `n`.
pub fn hardy_batch(n: Dimension, radius: f64, count: usize, seed: u64) -> Result<Vec<BumpCheck>, ExperimentError> {
    let params = ProblemParams::new(n.n(), 0.0, radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<PolyBump> = (0..count).map(|_| PolyBump::random(radius, &mut rng)).collect();
    bumps
        .par_iter()
        .map(|b| {
            let x = IdentityInputs::from_test_function(b, &params)?;
            Ok(BumpCheck {
                q: b.q,
                hardy: check_hardy(&x, INEQUALITY_TOL),
                quotient_hardy: check_quotient_hardy(&x, INEQUALITY_TOL)?,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Grid lists and manifests
// ---------------------------------------------------------------------------

/// Parses a comma-separated list of finite numbers, e.g. `2.5, 3,3.5`.
///
/// An empty or all-blank input is an empty grid.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, ExperimentError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(v) => Err(ExperimentError::Grid(format!("non-finite grid value {v}"))),
                Err(_) => Err(ExperimentError::Grid(format!("cannot parse {tok:?} as a number"))),
            }
        })
        .collect()
}

/// Every tolerance a run depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub integrator: f64,
    pub zero_match: f64,
    pub identity: f64,
    pub inequality: f64,
    pub evidence_residual: f64,
    pub solution_residual: f64,
    pub lambda_star_width: f64,
    pub eigen: f64,
}

impl From<&SweepConfig> for Tolerances {
    fn from(cfg: &SweepConfig) -> Self {
        Self {
            integrator: cfg.shoot.tol,
            zero_match: crate::shooting::ZERO_MATCH,
            identity: IDENTITY_TOL,
            inequality: INEQUALITY_TOL,
            evidence_residual: EVIDENCE_RESIDUAL,
            solution_residual: SOLUTION_RESIDUAL,
            lambda_star_width: cfg.lambda_star_width,
            eigen: cfg.eigen_tol,
        }
    }
}

/// Record of one run: what was asked, with every default resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub tolerances: Tolerances,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, cfg: &SweepConfig, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            tolerances: Tolerances::from(cfg),
            config,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifests are plain data")
    }
}
