//! Adaptive Simpson quadrature with Richardson correction.
//!
//! The vector form integrates several integrands sharing one set of samples,
//! with a separate error budget per component. A fixed-order Gauss–Legendre
//! rule on geometrically graded panels serves the hot paths where the
//! integrand is analytic away from the origin.

use std::sync::OnceLock;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum QuadratureError {
    #[error("quadrature did not converge on [{a}, {b}] (max depth reached)")]
    NotConverged { a: f64, b: f64 },
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
}

const MAX_DEPTH: u32 = 60;

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol` per component.
///
/// Each component gets an absolute budget of `rel_tol * max(|coarse estimate|, abs_floor)`,
/// split between sub-intervals in proportion to their length.
pub fn simpson_vec<const N: usize, F>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_floor: f64,
) -> Result<[f64; N], QuadratureError>
where
    F: Fn(f64) -> [f64; N],
{
    if a == b {
        return Ok([0.0; N]);
    }
    let eval = |x: f64| -> Result<[f64; N], QuadratureError> {
        let v = f(x);
        if v.iter().all(|c| c.is_finite()) {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite { x })
        }
    };

    // Coarse 8-panel composite estimate fixes the error budget.
    let panels = 8;
    let h = (b - a) / panels as f64;
    let mut xs = [0.0; 9];
    let mut fs = [[0.0; N]; 9];
    for i in 0..=panels {
        xs[i] = if i == panels { b } else { a + h * i as f64 };
        fs[i] = eval(xs[i])?;
    }
    let mut budget = [0.0; N];
    for k in 0..N {
        let mut s = fs[0][k] + fs[panels][k];
        for (i, fi) in fs.iter().enumerate().take(panels).skip(1) {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * fi[k];
        }
        let coarse = (s * h / 3.0).abs();
        budget[k] = rel_tol * coarse.max(abs_floor);
    }

    // Recurse on each pair of coarse panels.
    let mut total = [0.0; N];
    for i in (0..panels).step_by(2) {
        let (x0, x2) = (xs[i], xs[i + 2]);
        let frac = (x2 - x0) / (b - a);
        let mut tol = [0.0; N];
        for k in 0..N {
            tol[k] = budget[k] * frac.abs();
        }
        let whole = simpson_rule(x0, x2, &fs[i], &fs[i + 1], &fs[i + 2]);
        let part = recurse(&eval, x0, x2, &fs[i], &fs[i + 1], &fs[i + 2], &whole, &tol, 0)?;
        for k in 0..N {
            total[k] += part[k];
        }
    }
    Ok(total)
}

/// Scalar convenience wrapper around [`simpson_vec`].
pub fn simpson<F>(f: F, a: f64, b: f64, rel_tol: f64, abs_floor: f64) -> Result<f64, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    simpson_vec(|x| [f(x)], a, b, rel_tol, abs_floor).map(|v| v[0])
}

fn simpson_rule<const N: usize>(a: f64, b: f64, fa: &[f64; N], fm: &[f64; N], fb: &[f64; N]) -> [f64; N] {
    let h6 = (b - a) / 6.0;
    let mut out = [0.0; N];
    for k in 0..N {
        out[k] = h6 * (fa[k] + 4.0 * fm[k] + fb[k]);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn recurse<const N: usize, E>(
    eval: &E,
    a: f64,
    b: f64,
    fa: &[f64; N],
    fm: &[f64; N],
    fb: &[f64; N],
    whole: &[f64; N],
    tol: &[f64; N],
    depth: u32,
) -> Result<[f64; N], QuadratureError>
where
    E: Fn(f64) -> Result<[f64; N], QuadratureError>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = eval(lm)?;
    let frm = eval(rm)?;
    let left = simpson_rule(a, m, fa, &flm, fm);
    let right = simpson_rule(m, b, fm, &frm, fb);

    let mut converged = true;
    let mut out = [0.0; N];
    for k in 0..N {
        let delta = left[k] + right[k] - whole[k];
        if delta.abs() > 15.0 * tol[k] {
            converged = false;
        }
        out[k] = left[k] + right[k] + delta / 15.0;
    }
    // Sub-intervals narrower than a few ulps cannot be refined further.
    let unresolvable = (b - a).abs() <= 4.0 * f64::EPSILON * m.abs().max(f64::MIN_POSITIVE);
    if converged || unresolvable {
        return Ok(out);
    }
    if depth >= MAX_DEPTH {
        return Err(QuadratureError::NotConverged { a, b });
    }
    let mut half = [0.0; N];
    for k in 0..N {
        half[k] = 0.5 * tol[k];
    }
    let l = recurse(eval, a, m, fa, &flm, fm, &left, &half, depth + 1)?;
    let r = recurse(eval, m, b, fm, &frm, fb, &right, &half, depth + 1)?;
    for k in 0..N {
        out[k] = l[k] + r[k];
    }
    Ok(out)
}

/// Points of the Gauss–Legendre rule used by [`graded_gauss_vec`].
pub const GAUSS_POINTS: usize = 20;

/// Nodes and weights on `[-1, 1]`, by Newton iteration on `P_N`.
fn gauss_rule() -> &'static [(f64, f64); GAUSS_POINTS] {
    static RULE: OnceLock<[(f64, f64); GAUSS_POINTS]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_POINTS;
        let mut rule = [(0.0, 0.0); GAUSS_POINTS];
        for (i, slot) in rule.iter_mut().enumerate() {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            *slot = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        rule
    })
}

/// Composite Gauss–Legendre quadrature on `[a, b]` with `0 < a <= b`.
///
/// Each panel `[s, e]` satisfies `e - s <= min(max_width, s / 2)`, which keeps
/// the nearest singularity at the origin far from every panel in the sense of
/// Bernstein ellipses; the rule then converges to machine precision for
/// integrands like `sinh^k(t)` with fractional `k`.
pub fn graded_gauss_vec<const N: usize, F>(f: F, a: f64, b: f64, max_width: f64) -> [f64; N]
where
    F: Fn(f64) -> [f64; N],
{
    debug_assert!(a > 0.0 && a <= b);
    let rule = gauss_rule();
    let mut total = [0.0; N];
    let mut s = a;
    while s < b {
        let e = (s + max_width.min(0.5 * s)).min(b);
        let (mid, half) = (0.5 * (s + e), 0.5 * (e - s));
        for &(x, w) in rule {
            let v = f(mid + half * x);
            for k in 0..N {
                total[k] += half * w * v[k];
            }
        }
        s = e;
    }
    total
}
