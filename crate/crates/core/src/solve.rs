//! Scalar root finding and one-dimensional maximization.
//!
//! Everything here works on plain `f64 -> f64` closures. The solvers are
//! bracketing methods: they never leave the initial interval.

use crate::error::{Error, Result};

/// Brent's method on `[lo, hi]`. Requires `f(lo)` and `f(hi)` of opposite sign
/// (or one of them zero).
pub fn brent<F>(mut f: F, lo: f64, hi: f64, xtol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket(format!(
            "f({a:e}) = {fa:e} and f({b:e}) = {fb:e} have the same sign"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(Error::NotConverged {
        solver: "brent",
        iterations: max_iter,
        residual: fb,
        history: Vec::new(),
    })
}

/// Root of a monotone function, growing the bracket geometrically from an
/// initial guess. Works in log space, so `x` must be positive. `increasing`
/// states the direction of monotonicity.
pub fn monotone_root_log<F>(
    f: F,
    guess: f64,
    increasing: bool,
    range: (f64, f64),
    rtol: f64,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    monotone_root_log_from(f, guess, increasing, range, rtol, 2f64.ln())
}

/// As [`monotone_root_log`], with the first bracket step `step` in `ln x`;
/// the step doubles on every expansion. Small steps suit warm starts.
pub fn monotone_root_log_from<F>(
    mut f: F,
    guess: f64,
    increasing: bool,
    (min_x, max_x): (f64, f64),
    rtol: f64,
    step: f64,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let sgn = if increasing { 1.0 } else { -1.0 };
    let g = |t: f64, f: &mut F| sgn * f(t.exp());
    let mut lo = guess.clamp(min_x, max_x).ln();
    let mut hi = lo;
    let mut glo = g(lo, &mut f);
    if glo == 0.0 {
        return Ok(lo.exp());
    }
    let mut ghi = glo;
    let mut step = step;
    if glo < 0.0 {
        // root lies above
        while ghi < 0.0 {
            lo = hi;
            hi += step;
            if hi > max_x.ln() {
                return Err(Error::Bracket(format!(
                    "no sign change below upper limit {max_x:e}"
                )));
            }
            ghi = g(hi, &mut f);
            step *= 2.0;
        }
    } else {
        while glo > 0.0 {
            hi = lo;
            lo -= step;
            if lo < min_x.ln() {
                return Err(Error::Bracket(format!(
                    "no sign change above lower limit {min_x:e}"
                )));
            }
            glo = g(lo, &mut f);
            step *= 2.0;
        }
    }
    let t = brent(|t| g(t, &mut f), lo, hi, rtol, 200)?;
    Ok(t.exp())
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
/// Returns `(argmax, max)`.
pub fn golden_max<F>(mut f: F, lo: f64, hi: f64, xtol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |best, p| if p.1 > best.1 { p } else { best })
}

/// Grid scan followed by golden-section refinement around the best grid
/// point. Guards against objectives that are not quite unimodal.
pub fn grid_golden_max<F>(mut f: F, lo: f64, hi: f64, grid: usize, xtol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let grid = grid.max(3);
    let h = (hi - lo) / (grid - 1) as f64;
    let mut best = (lo, f(lo));
    let mut best_i = 0;
    for i in 1..grid {
        let x = lo + h * i as f64;
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
            best_i = i;
        }
    }
    let a = lo + h * best_i.saturating_sub(1) as f64;
    let b = (lo + h * (best_i + 1) as f64).min(hi);
    let refined = golden_max(&mut f, a, b, xtol);
    if refined.1 >= best.1 {
        refined
    } else {
        best
    }
}

/// Least-squares line fit; returns `(slope, intercept, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    (slope, my - slope * mx, r2)
}
