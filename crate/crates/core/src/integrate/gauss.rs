//! Gauss–Legendre and Gauss–Laguerre nodes and weights.
//!
//! Both are computed by Newton iteration on the three-term recurrence. The
//! Laguerre recurrence is rescaled on the fly so large rules do not overflow.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub type Rule = Arc<(Vec<f64>, Vec<f64>)>;

fn cached(kind: u8, n: usize, build: fn(usize) -> (Vec<f64>, Vec<f64>)) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<(u8, usize), Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().unwrap().get(&(kind, n)) {
        return r.clone();
    }
    let r = Arc::new(build(n));
    cache.lock().unwrap().insert((kind, n), r.clone());
    r
}

/// Memoized [`legendre`].
pub fn legendre_rule(n: usize) -> Rule {
    cached(0, n, legendre)
}

/// Memoized [`laguerre`].
pub fn laguerre_rule(n: usize) -> Rule {
    cached(1, n, laguerre)
}

/// Gauss–Legendre rule on `[-1, 1]`, nodes ascending.
pub fn legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * pp * pp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Laguerre rule for the weight `e^{-x}` on `[0, ∞)`, nodes ascending.
pub fn laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    const RESCALE: f64 = 1e150;
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z: f64 = 0.0;
    for i in 0..n {
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - x[i - 2])
            }
        };
        let mut log_w = 0.0;
        for _ in 0..200 {
            let (mut p1, mut p2) = (1.0f64, 0.0f64);
            let mut log_scale = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0 - z) * p2 - (jf - 1.0) * p3) / jf;
                if p1.abs() > RESCALE {
                    p1 /= RESCALE;
                    p2 /= RESCALE;
                    log_scale += RESCALE.ln();
                }
            }
            let pp = (nf * p1 - nf * p2) / z;
            let dz = p1 / pp;
            z -= dz;
            // w = -1 / (n pp p2), with both factors carrying exp(log_scale)
            log_w = -(-(nf * pp * p2)).ln() - 2.0 * log_scale;
            if dz.abs() <= 1e-14 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = log_w.exp();
    }
    (x, w)
}
