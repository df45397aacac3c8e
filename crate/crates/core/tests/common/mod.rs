#![allow(dead_code)]

use effcap::{Scenario, SystemConfig};

pub fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Two users, both at `snr_db`, common `theta`, given TB product.
pub fn two_user(snr_db: [f64; 2], theta: f64, tb: f64) -> Scenario {
    let users = snr_db
        .iter()
        .map(|&d| effcap::UserParams { snr: db(d), theta })
        .collect();
    Scenario::rayleigh(SystemConfig::new(users, tb).unwrap()).unwrap()
}

pub fn single(snr: f64, beta: f64) -> Scenario {
    Scenario::rayleigh(SystemConfig::from_betas(&[snr], &[beta]).unwrap()).unwrap()
}

fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `∫_0^∞ f(z) e^{-z} dz`, split into unit pieces up to 60.
pub fn exp_expect<F: Fn(f64) -> f64>(f: F) -> f64 {
    (0..60)
        .map(|k| simpson(|z| f(z) * (-z).exp(), k as f64, (k + 1) as f64, 1e-14))
        .sum()
}

/// `E_1(x)` by its power series (small `x`).
pub fn e1(x: f64) -> f64 {
    let gamma = 0.577_215_664_901_532_9;
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..80 {
        term *= -x / k as f64;
        sum += term / k as f64;
    }
    -gamma - x.ln() - sum
}

/// `E{f(z1, z2)}` for independent unit exponentials, by nested Simpson.
pub fn exp_expect2<F: Fn(f64, f64) -> f64>(f: F) -> f64 {
    exp_expect(|z1| exp_expect(|z2| f(z1, z2)))
}
