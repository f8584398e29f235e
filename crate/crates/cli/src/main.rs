use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hyperbolic_bn::experiments::{
    bound_table, bound_table_csv, fmt_cell, parse_grid, scan_lambda, surface_csv, threshold_surface, Evidence,
    ExperimentError, Manifest, SweepConfig, DEFAULT_N_GRID, DEFAULT_R_GRID,
};
use hyperbolic_bn::hyperfun::{Dimension, DomainError};
use hyperbolic_bn::identities::{
    check_chain, check_hardy, check_po, check_po1, check_po2, lemma_scan, IdentityError, IdentityInputs,
    IdentityReport, IDENTITY_TOL, INEQUALITY_TOL,
};
use hyperbolic_bn::odecore::{OdeError, ProblemParams, ProfileColumns, ProfileError, RadialProfile};
use hyperbolic_bn::shooting::{eigen_lambda1, solve_bvp, BvpOutcome, ShootConfig, ShootingError};

#[derive(Debug, Parser)]
#[command(name = "hbn", version, about = "Radial Brezis–Nirenberg problem on geodesic balls of hyperbolic space")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct Global {
    /// Integrator tolerance, within [1e-13, 1e-6].
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    /// Write the result here instead of stdout; the manifest goes to `<output>.manifest.json`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads for sweeps (0 = logical cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the paper bound, the Stapelkamp bound and the bottom of the spectrum.
    Bounds {
        #[arg(long)]
        n: f64,
    },
    /// Check L G' >= c G^2 and the auxiliary identities on a log grid.
    Lemma {
        #[arg(long)]
        n: f64,
        #[arg(long, default_value_t = 20.0)]
        x_max: f64,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
    },
    /// Solve the boundary-value problem by shooting.
    Solve {
        #[arg(long)]
        n: f64,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long)]
        radius: f64,
        /// Interior zeros of the sought solution.
        #[arg(long, default_value_t = 0)]
        nodes: usize,
    },
    /// First Dirichlet eigenvalue of the ball.
    Eigen {
        #[arg(long)]
        n: f64,
        #[arg(long)]
        radius: f64,
    },
    /// Existence scan over a λ range with a refined threshold bracket.
    Scan {
        #[arg(long)]
        n: f64,
        #[arg(long)]
        radius: f64,
        #[arg(long, allow_negative_numbers = true)]
        lambda_min: f64,
        #[arg(long, allow_negative_numbers = true)]
        lambda_max: f64,
        #[arg(long)]
        steps: usize,
    },
    /// Threshold brackets over an (n, R) grid.
    Surface {
        /// Comma-separated dimensions.
        #[arg(long)]
        n_grid: Option<String>,
        /// Comma-separated radii.
        #[arg(long)]
        r_grid: Option<String>,
    },
    /// Run every identity check on a stored profile (CSV or JSON).
    Verify {
        #[arg(long)]
        input: PathBuf,
        /// Dimension; required for CSV input.
        #[arg(long)]
        n: Option<f64>,
        /// Spectral parameter; required for CSV input.
        #[arg(long, allow_negative_numbers = true)]
        lambda: Option<f64>,
        /// Radius; defaults to the last abscissa of the profile.
        #[arg(long)]
        radius: Option<f64>,
    },
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Numerical(String),
    Consistency(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Consistency(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) | Failure::Consistency(m) => m,
        }
    }
}

impl From<DomainError> for Failure {
    fn from(e: DomainError) -> Self {
        match e {
            DomainError::Quadrature(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<OdeError> for Failure {
    fn from(e: OdeError) -> Self {
        match e {
            OdeError::Domain(d) => d.into(),
            OdeError::Overflow { .. } | OdeError::StepSizeUnderflow { .. } | OdeError::TooManySteps { .. } => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<ShootingError> for Failure {
    fn from(e: ShootingError) -> Self {
        match e {
            ShootingError::Ode(o) => o.into(),
            ShootingError::Domain(d) => d.into(),
            ShootingError::EigenBracket { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<IdentityError> for Failure {
    fn from(e: IdentityError) -> Self {
        match e {
            IdentityError::Domain(d) => d.into(),
            IdentityError::Quadrature(_) => Failure::Numerical(e.to_string()),
            IdentityError::BoundaryResidual { .. } => Failure::Consistency(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Domain(d) => d.into(),
            ExperimentError::Ode(o) => o.into(),
            ExperimentError::Shooting(s) => s.into(),
            ExperimentError::Identity(i) => i.into(),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<ProfileError> for Failure {
    fn from(e: ProfileError) -> Self {
        Failure::Validation(e.to_string())
    }
}

/// What a subcommand produced.
struct Outcome {
    body: String,
    config: serde_json::Value,
    /// Set when a consistency check failed; the body is still written.
    failed_check: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    if !(1e-13..=1e-6).contains(&g.tol) {
        return Err(Failure::Validation(format!("--tol {} outside [1e-13, 1e-6]", g.tol)));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(g.jobs)
        .build_global()
        .map_err(|e| Failure::Numerical(format!("cannot start worker pool: {e}")))?;

    let sweep = SweepConfig::with_tol(g.tol);
    let (name, outcome) = match &cli.command {
        Command::Bounds { n } => ("bounds", bounds(*n, g)?),
        Command::Lemma { n, x_max, points } => ("lemma", lemma(*n, *x_max, *points, g)?),
        Command::Solve { n, lambda, radius, nodes } => ("solve", solve(*n, *lambda, *radius, *nodes, g)?),
        Command::Eigen { n, radius } => ("eigen", eigen(*n, *radius, g)?),
        Command::Scan { n, radius, lambda_min, lambda_max, steps } => {
            ("scan", scan(*n, *radius, *lambda_min, *lambda_max, *steps, &sweep, g)?)
        }
        Command::Surface { n_grid, r_grid } => ("surface", surface(n_grid.as_deref(), r_grid.as_deref(), &sweep, g)?),
        Command::Verify { input, n, lambda, radius } => ("verify", verify(input, *n, *lambda, *radius, g)?),
    };

    let mut config = outcome.config;
    config["tol"] = json!(g.tol);
    config["format"] = json!(match g.format {
        Format::Csv => "csv",
        Format::Json => "json",
    });
    config["jobs"] = json!(rayon::current_num_threads());
    config["output"] = json!(g.output.as_ref().map(|p| p.display().to_string()));
    let manifest = Manifest::new(name, &sweep, config).to_json() + "\n";

    match &g.output {
        Some(path) => {
            write_file(path, &outcome.body)?;
            write_file(&manifest_path(path), &manifest)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(outcome.body.as_bytes())
                .map_err(|e| Failure::Validation(format!("cannot write to stdout: {e}")))?;
            eprint!("{manifest}");
        }
    }
    match outcome.failed_check {
        Some(msg) => Err(Failure::Consistency(msg)),
        None => Ok(()),
    }
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Validation(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output types serialize") + "\n"
}

fn dimension(n: f64) -> Result<Dimension, Failure> {
    Ok(Dimension::new(n)?)
}

fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Failure::Validation(format!("--{name} must be positive (got {v})")))
    }
}

fn bounds(n: f64, g: &Global) -> Result<Outcome, Failure> {
    dimension(n)?;
    let rows = bound_table(&[n])?;
    let body = match g.format {
        Format::Csv => bound_table_csv(&rows),
        Format::Json => to_json(&rows[0]),
    };
    Ok(Outcome { body, config: json!({ "n": n }), failed_check: None })
}

fn lemma(n: f64, x_max: f64, points: usize, g: &Global) -> Result<Outcome, Failure> {
    let dim = dimension(n)?;
    positive("x-max", x_max)?;
    if points < 2 {
        return Err(Failure::Validation(format!("--points must be at least 2 (got {points})")));
    }
    let r = lemma_scan(dim, x_max, points)?;
    let body = match g.format {
        Format::Csv => {
            let mut s = String::from(
                "n,x_max,points,constant,worst_x,min_normalized_f,err_m,err_h,err_g,auxiliary_nonnegative,pass\n",
            );
            let nums = [n, x_max, points as f64, r.constant, r.worst_x, r.min_normalized_f]
                .into_iter()
                .chain(r.derivative_errors)
                .map(|v| fmt_cell(Some(v)))
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(s, "{nums},{},{}", r.auxiliary_nonnegative, r.pass);
            s
        }
        Format::Json => to_json(&r),
    };
    let failed_check = (!r.pass).then(|| format!("lemma scan failed for n = {n}"));
    Ok(Outcome { body, config: json!({ "n": n, "x_max": x_max, "points": points }), failed_check })
}

fn solve(n: f64, lambda: f64, radius: f64, nodes: usize, g: &Global) -> Result<Outcome, Failure> {
    dimension(n)?;
    positive("radius", radius)?;
    let params = ProblemParams::new(n, lambda, radius)?;
    let cfg = ShootConfig { node_count: nodes, ..ShootConfig::with_tol(g.tol) };
    let out = solve_bvp(&params, &cfg)?;
    let sols = out.solutions();
    for (i, s) in sols.iter().enumerate() {
        eprintln!(
            "solution {i}: a = {:e}, |u(R)| = {:e}, nodes = {}",
            s.amplitude, s.boundary_residual, s.node_count
        );
    }
    if sols.is_empty() {
        eprintln!("no solution found in the amplitude bracket");
    }
    let body = match g.format {
        Format::Csv => match sols.first() {
            Some(s) => s.profile.columns.to_csv_string(),
            None => ProfileColumns::default().to_csv_string(),
        },
        Format::Json => to_json(&out),
    };
    let config = json!({
        "n": n, "lambda": lambda, "radius": radius, "nodes": nodes,
        "bracket": [cfg.bracket.0, cfg.bracket.1], "scan_points": cfg.scan_points,
        "solutions": sols.len(),
        "outcome": match out { BvpOutcome::Found { .. } => "found", BvpOutcome::NotFound { .. } => "not_found", BvpOutcome::Degenerate { .. } => "degenerate" },
    });
    Ok(Outcome { body, config, failed_check: None })
}

fn eigen(n: f64, radius: f64, g: &Global) -> Result<Outcome, Failure> {
    let dim = dimension(n)?;
    positive("radius", radius)?;
    let tol = 1e-10;
    let l = eigen_lambda1(dim, radius, tol)?;
    let body = match g.format {
        Format::Csv => format!("n,R,lambda1\n{},{},{}\n", fmt_cell(Some(n)), fmt_cell(Some(radius)), fmt_cell(Some(l))),
        Format::Json => to_json(&json!({ "n": n, "R": radius, "lambda1": l })),
    };
    Ok(Outcome { body, config: json!({ "n": n, "radius": radius, "eigen_tol": tol }), failed_check: None })
}

fn scan(
    n: f64,
    radius: f64,
    lambda_min: f64,
    lambda_max: f64,
    steps: usize,
    sweep: &SweepConfig,
    g: &Global,
) -> Result<Outcome, Failure> {
    let dim = dimension(n)?;
    positive("radius", radius)?;
    let r = scan_lambda(dim, radius, lambda_min, lambda_max, steps, sweep)?;
    let bound = dim.bounds().paper_bound;
    let violation = if dim.in_theorem_range() { r.violation_at_or_below(bound) } else { None };
    let body = match g.format {
        Format::Csv => {
            let mut s = String::from("lambda,exists,status,amplitude,recheck_residual,po1_rel_residual\n");
            for e in r.entries.iter().chain(&r.refinement) {
                let (status, first) = match &e.evidence {
                    Evidence::Found { solutions } => ("found", solutions.first().copied()),
                    Evidence::NotFound { .. } => ("not_found", None),
                    Evidence::Failed { .. } => ("failed", None),
                };
                let _ = writeln!(
                    s,
                    "{},{},{status},{},{},{}",
                    fmt_cell(Some(e.lambda)),
                    e.exists,
                    fmt_cell(first.map(|x| x.amplitude)),
                    fmt_cell(first.map(|x| x.recheck_residual)),
                    fmt_cell(first.map(|x| x.po1_rel_residual)),
                );
            }
            s
        }
        Format::Json => to_json(&r),
    };
    if let Some((lo, hi)) = r.lambda_star_bracket {
        eprintln!("lambda* in ({lo}, {hi}]");
    }
    let config = json!({
        "n": n, "radius": radius, "lambda_min": lambda_min, "lambda_max": lambda_max, "steps": steps,
        "lambda_star_bracket": r.lambda_star_bracket, "eigen_lambda1": r.eigen_lambda1,
    });
    let failed_check = violation.map(|l| format!("verified solution at λ = {l} <= paper bound {bound}"));
    Ok(Outcome { body, config, failed_check })
}

fn surface(n_grid: Option<&str>, r_grid: Option<&str>, sweep: &SweepConfig, g: &Global) -> Result<Outcome, Failure> {
    let ns = match n_grid {
        Some(t) => parse_grid(t)?,
        None => DEFAULT_N_GRID.to_vec(),
    };
    let rs = match r_grid {
        Some(t) => parse_grid(t)?,
        None => DEFAULT_R_GRID.to_vec(),
    };
    if ns.is_empty() || rs.is_empty() {
        return Err(Failure::Validation("--n-grid and --r-grid must be nonempty".into()));
    }
    let rows = threshold_surface(&ns, &rs, sweep)?;
    for r in &rows {
        if let Some(e) = &r.error {
            eprintln!("cell n = {}, R = {}: {e}", r.n, r.radius);
        }
    }
    let body = match g.format {
        Format::Csv => surface_csv(&rows),
        Format::Json => to_json(&rows),
    };
    let violations: Vec<String> = rows
        .iter()
        .filter(|r| r.n < 4.0)
        .filter_map(|r| r.violation.map(|l| format!("n = {}, R = {}, λ = {l}", r.n, r.radius)))
        .collect();
    let failed_check =
        (!violations.is_empty()).then(|| format!("verified solutions at or below the paper bound: {}", violations.join("; ")));
    Ok(Outcome { body, config: json!({ "n_grid": ns, "r_grid": rs }), failed_check })
}

fn verify(input: &Path, n: Option<f64>, lambda: Option<f64>, radius: Option<f64>, g: &Global) -> Result<Outcome, Failure> {
    let text = fs::read_to_string(input)
        .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", input.display())))?;
    let profile = if text.trim_start().starts_with('{') {
        RadialProfile::from_json(&text)?
    } else {
        let columns = ProfileColumns::parse_csv(text.as_bytes())?;
        let (Some(n), Some(lambda)) = (n, lambda) else {
            return Err(Failure::Validation("CSV profiles need --n and --lambda".into()));
        };
        let x_end = *columns.x.last().expect("validated profiles are nonempty");
        let radius = radius.unwrap_or(x_end);
        let params = ProblemParams::new(n, lambda, radius)?;
        RadialProfile::from_columns(params, Default::default(), columns)?
    };
    let x = IdentityInputs::from(&profile);
    let mut reports: Vec<IdentityReport> = Vec::new();
    let mut problems: Vec<String> = Vec::new();
    type Check = fn(&IdentityInputs, f64) -> Result<IdentityReport, IdentityError>;
    for check in [check_po1 as Check, check_po2, check_po] {
        match check(&x, IDENTITY_TOL) {
            Ok(r) => reports.push(r),
            Err(e) => problems.push(e.to_string()),
        }
    }
    reports.push(check_hardy(&x, INEQUALITY_TOL));
    match check_chain(&x, INEQUALITY_TOL) {
        Ok(c) => reports.extend([c.quotient, c.hardy_link, c.quotient_hardy]),
        Err(e) => problems.push(e.to_string()),
    }
    problems.extend(reports.iter().filter(|r| !r.pass).map(|r| format!("{} check failed", label(r))));
    problems.dedup();

    let body = match g.format {
        Format::Csv => {
            let mut s = String::from("name,relation,lhs,rhs,residual,rel_residual,pass,tolerance\n");
            for r in &reports {
                let rel = serde_json::to_value(r.relation).expect("relations serialize");
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    label(r),
                    rel.as_str().unwrap_or_default(),
                    fmt_cell(Some(r.lhs)),
                    fmt_cell(Some(r.rhs)),
                    fmt_cell(Some(r.residual)),
                    fmt_cell(Some(r.rel_residual)),
                    r.pass,
                    fmt_cell(Some(r.tolerance)),
                );
            }
            s
        }
        Format::Json => to_json(&reports),
    };
    let config = json!({
        "input": input.display().to_string(),
        "n": profile.params.n.n(), "lambda": profile.params.lambda, "radius": profile.params.radius,
        "identity_tol": IDENTITY_TOL, "inequality_tol": INEQUALITY_TOL,
    });
    let failed_check = (!problems.is_empty()).then(|| problems.join("; "));
    Ok(Outcome { body, config, failed_check })
}

/// The report name as it appears in JSON.
fn label(r: &IdentityReport) -> String {
    serde_json::to_value(r.name).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}
