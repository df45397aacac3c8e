//! Expectations over the fading distribution.
//!
//! Two backends share one interface: Gauss-type quadrature (exponential
//! weight, Laguerre tails, Legendre pieces between breakpoints) and plain
//! Monte Carlo. Quadrature reports the change against a half-order rule as
//! its error; Monte Carlo reports the standard error.
//!
//! Integrands that jump across a decoding-order boundary are integrated one
//! region at a time, so each piece stays smooth.

pub mod gauss;

use serde::{Deserialize, Serialize};

use crate::channel::{FadingModel, Marginal};
use crate::error::{usage, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Quadrature for up to two users, Monte Carlo beyond.
    #[default]
    Auto,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationSpec {
    pub method: Method,
    pub nodes_per_dim: usize,
    pub samples: usize,
    pub seed: u64,
    /// Integration domain cut-off per dimension, in units of the marginal mean.
    pub truncation: f64,
}

impl Default for IntegrationSpec {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            nodes_per_dim: 64,
            samples: 200_000,
            seed: 1,
            truncation: 45.0,
        }
    }
}

impl IntegrationSpec {
    pub fn quadrature(nodes_per_dim: usize) -> Self {
        Self {
            method: Method::Quadrature,
            nodes_per_dim,
            ..Self::default()
        }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            method: Method::MonteCarlo,
            samples,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_dim < 8 {
            return usage(format!(
                "nodes_per_dim must be >= 8, got {}",
                self.nodes_per_dim
            ));
        }
        if self.samples < 1000 {
            return usage(format!("samples must be >= 1000, got {}", self.samples));
        }
        if !(self.truncation > 1.0) {
            return usage(format!("truncation must exceed 1, got {}", self.truncation));
        }
        Ok(())
    }

    fn uses_quadrature(&self, users: usize) -> bool {
        match self.method {
            Method::Auto => users <= 2,
            Method::Quadrature => true,
            Method::MonteCarlo => false,
        }
    }
}

/// A value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Two-user region `{ z_inner < intercept + slope * z_outer }` and its
/// complement, with `z_outer = z[0]` and `z_inner = z[1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSplit {
    pub intercept: f64,
    pub slope: f64,
}

impl LineSplit {
    pub fn below(&self, z: &[f64]) -> bool {
        z[1] < self.intercept + self.slope * z[0]
    }
}

/// Weighted point set: quadrature nodes or Monte Carlo samples.
#[derive(Debug, Clone, Default)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl PointSet {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
            weights: Vec::new(),
        }
    }

    fn push(&mut self, z: &[f64], w: f64) {
        if w > 0.0 {
            self.coords.extend_from_slice(z);
            self.weights.push(w);
        }
    }

    fn normalize(&mut self) {
        let s: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= s);
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.coords
            .chunks_exact(self.dim.max(1))
            .zip(self.weights.iter().copied())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn weighted_mean<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Result<f64> {
        let mut acc = 0.0;
        for (z, w) in self.iter() {
            let v = f(z);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    value: v,
                    state: z.to_vec(),
                });
            }
            acc += w * v;
        }
        Ok(acc)
    }

    fn log_mean_exp<F: FnMut(&[f64]) -> f64>(&self, mut g: F) -> Result<f64> {
        let vals = self.eval_all(&mut g)?;
        Ok(log_mean_exp_weighted(&vals, &self.weights))
    }

    fn eval_all<F: FnMut(&[f64]) -> f64>(&self, g: &mut F) -> Result<Vec<f64>> {
        let mut vals = Vec::with_capacity(self.len());
        for (z, _) in self.iter() {
            let v = g(z);
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::NonFinite {
                    value: v,
                    state: z.to_vec(),
                });
            }
            vals.push(v);
        }
        Ok(vals)
    }
}

/// `ln Σ w_i e^{g_i}` for weights summing to one, with the largest exponent
/// shifted out and the small-exponent regime kept accurate via `expm1`.
pub fn log_mean_exp_weighted(g: &[f64], w: &[f64]) -> f64 {
    let m = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = g
        .iter()
        .zip(w)
        .map(|(&gi, &wi)| wi * (gi - m).exp_m1())
        .sum();
    m + s.ln_1p()
}

#[derive(Debug, Clone)]
enum Backend {
    Quadrature { coarse: PointSet },
    MonteCarlo,
}

/// Reusable expectation engine for a fixed model and point set.
#[derive(Debug, Clone)]
pub struct Integrator {
    fine: PointSet,
    backend: Backend,
}

impl Integrator {
    /// Tensor quadrature or Monte Carlo over the whole orthant.
    pub fn new(model: &FadingModel, spec: &IntegrationSpec) -> Result<Self> {
        spec.validate()?;
        if spec.uses_quadrature(model.users()) {
            let build = |n| tensor(model, n, spec.truncation);
            Ok(Self::quadrature(
                build(spec.nodes_per_dim),
                build(spec.nodes_per_dim / 2),
            ))
        } else {
            Ok(Self::monte_carlo(model, spec))
        }
    }

    /// Quadrature integrating the two sides of a line separately. Falls back
    /// to [`Integrator::new`] for Monte Carlo or non-two-user models.
    pub fn with_line_split(
        model: &FadingModel,
        spec: &IntegrationSpec,
        line: LineSplit,
    ) -> Result<Self> {
        spec.validate()?;
        if model.users() != 2 || !spec.uses_quadrature(2) {
            return Self::new(model, spec);
        }
        if !(line.slope >= 0.0 && line.slope.is_finite() && line.intercept.is_finite()) {
            return usage(format!("unsupported split line {line:?}"));
        }
        let build = |n| line_split(model, n, spec.truncation, line);
        Ok(Self::quadrature(
            build(spec.nodes_per_dim),
            build(spec.nodes_per_dim / 2),
        ))
    }

    /// Two-user quadrature with explicit breakpoints: `outer_breaks` along
    /// `z[outer_axis]`, and `inner_breaks(z_outer)` along the other axis.
    pub fn with_breaks<B>(
        model: &FadingModel,
        spec: &IntegrationSpec,
        outer_axis: usize,
        outer_breaks: &[f64],
        inner_breaks: B,
    ) -> Result<Self>
    where
        B: Fn(f64) -> Vec<f64>,
    {
        spec.validate()?;
        if model.users() != 2 || !spec.uses_quadrature(2) {
            return Self::new(model, spec);
        }
        let build = |n| {
            split_2d(
                model,
                n,
                spec.truncation,
                outer_axis,
                outer_breaks,
                &inner_breaks,
            )
        };
        Ok(Self::quadrature(
            build(spec.nodes_per_dim),
            build(spec.nodes_per_dim / 2),
        ))
    }

    /// One-dimensional quadrature with breakpoints (quadrature specs only).
    pub fn with_breaks_1d(
        model: &FadingModel,
        spec: &IntegrationSpec,
        breaks: &[f64],
    ) -> Result<Self> {
        spec.validate()?;
        if model.users() != 1 || !spec.uses_quadrature(1) {
            return Self::new(model, spec);
        }
        let m = model.per_user[0];
        let build = |n| {
            let mut ps = PointSet::new(1);
            for (z, w) in rule_1d(m, n, breaks, spec.truncation) {
                ps.push(&[z], w);
            }
            ps.normalize();
            ps
        };
        Ok(Self::quadrature(
            build(spec.nodes_per_dim),
            build(spec.nodes_per_dim / 2),
        ))
    }

    fn quadrature(fine: PointSet, coarse: PointSet) -> Self {
        Self {
            fine,
            backend: Backend::Quadrature { coarse },
        }
    }

    fn monte_carlo(model: &FadingModel, spec: &IntegrationSpec) -> Self {
        let coords = model.sample_flat(spec.samples, spec.seed);
        let n = spec.samples;
        Self {
            fine: PointSet {
                dim: model.users(),
                coords,
                weights: vec![1.0 / n as f64; n],
            },
            backend: Backend::MonteCarlo,
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self.backend, Backend::MonteCarlo)
    }

    pub fn points(&self) -> &PointSet {
        &self.fine
    }

    /// Lower-order companion rule used for the quadrature error estimate.
    pub fn coarse_points(&self) -> Option<&PointSet> {
        match &self.backend {
            Backend::Quadrature { coarse } => Some(coarse),
            Backend::MonteCarlo => None,
        }
    }

    /// `E{f(z)}`.
    pub fn expect<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Result<Estimate> {
        match &self.backend {
            Backend::Quadrature { coarse } => {
                let value = self.fine.weighted_mean(&mut f)?;
                let low = coarse.weighted_mean(&mut f)?;
                Ok(Estimate {
                    value,
                    error: quad_error(value, low),
                })
            }
            Backend::MonteCarlo => {
                let n = self.fine.len() as f64;
                let (mut s, mut s2) = (0.0, 0.0);
                for (z, _) in self.fine.iter() {
                    let v = f(z);
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            value: v,
                            state: z.to_vec(),
                        });
                    }
                    s += v;
                    s2 += v * v;
                }
                let mean = s / n;
                let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
                Ok(Estimate {
                    value: mean,
                    error: (var / n).sqrt(),
                })
            }
        }
    }

    /// `ln E{exp(g(z))}`, computed without overflow or underflow.
    pub fn log_expect_exp<F: FnMut(&[f64]) -> f64>(&self, mut g: F) -> Result<Estimate> {
        match &self.backend {
            Backend::Quadrature { coarse } => {
                let value = self.fine.log_mean_exp(&mut g)?;
                let low = coarse.log_mean_exp(&mut g)?;
                Ok(Estimate {
                    value,
                    error: quad_error(value, low),
                })
            }
            Backend::MonteCarlo => {
                let vals = self.fine.eval_all(&mut g)?;
                let value = log_mean_exp_weighted(&vals, &self.fine.weights);
                // delta method on the shifted sample mean
                let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let n = vals.len() as f64;
                let (mut s, mut s2) = (0.0, 0.0);
                for v in &vals {
                    let e = (v - m).exp();
                    s += e;
                    s2 += e * e;
                }
                let mean = s / n;
                let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
                let error = if mean > 0.0 {
                    (var / n).sqrt() / mean
                } else {
                    f64::INFINITY
                };
                Ok(Estimate { value, error })
            }
        }
    }

    /// Integrator for a single user's marginal. Monte Carlo keeps the same
    /// samples (that user's column); quadrature switches to a 1-D rule.
    pub fn marginal(
        &self,
        model: &FadingModel,
        spec: &IntegrationSpec,
        user: usize,
    ) -> Result<Self> {
        match &self.backend {
            Backend::MonteCarlo => {
                let coords = self.fine.iter().map(|(z, _)| z[user]).collect();
                Ok(Self {
                    fine: PointSet {
                        dim: 1,
                        coords,
                        weights: self.fine.weights.clone(),
                    },
                    backend: Backend::MonteCarlo,
                })
            }
            Backend::Quadrature { .. } => {
                let q = IntegrationSpec {
                    method: Method::Quadrature,
                    ..spec.clone()
                };
                Self::new(&model.marginal(user), &q)
            }
        }
    }
}

fn quad_error(fine: f64, coarse: f64) -> f64 {
    (fine - coarse).abs().max(4.0 * f64::EPSILON * fine.abs())
}

/// `E{f(z)}` under `model` using `spec`.
pub fn expect<F>(model: &FadingModel, f: F, spec: &IntegrationSpec) -> Result<Estimate>
where
    F: FnMut(&[f64]) -> f64,
{
    Integrator::new(model, spec)?.expect(f)
}

/// Density-weighted nodes on `[a, b]`.
fn rule_interval(m: Marginal, n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    if !(b > a) {
        return Vec::new();
    }
    let rule = gauss::legendre_rule(n);
    let (t, w) = (&rule.0, &rule.1);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    t.iter()
        .zip(w)
        .map(|(&t, &w)| {
            let z = mid + half * t;
            (z, half * w * m.pdf(z))
        })
        .collect()
}

/// Density-weighted nodes on `[a, ∞)`.
fn rule_tail(m: Marginal, n: usize, a: f64) -> Vec<(f64, f64)> {
    let Marginal::Exponential { mean } = m;
    let rule = gauss::laguerre_rule(n);
    let (x, w) = (&rule.0, &rule.1);
    let scale = (-a / mean).exp();
    x.iter()
        .zip(w)
        .map(|(&x, &w)| (a + mean * x, scale * w))
        .collect()
}

/// Full `[0, ∞)` rule with interior breakpoints.
fn rule_1d(m: Marginal, n: usize, breaks: &[f64], truncation: f64) -> Vec<(f64, f64)> {
    let limit = truncation * m.mean();
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| *b > 0.0 && *b < limit && b.is_finite())
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    let mut out = Vec::new();
    let mut lo = 0.0;
    for c in cuts {
        out.extend(rule_interval(m, n, lo, c));
        lo = c;
    }
    // integrands with a kink at a small break often carry a 1/z-type factor;
    // doubling panels keep the nearby singularity resolved
    let mut panels = 0;
    while lo > 0.0 && lo < m.mean() && panels < 8 {
        let hi = (2.0 * lo).min(m.mean());
        out.extend(rule_interval(m, n, lo, hi));
        lo = hi;
        panels += 1;
    }
    out.extend(rule_tail(m, n, lo));
    out
}

/// Rule on `[0, upper]`, or on `[0, ∞)` if `upper` is beyond the truncation.
fn rule_lower(m: Marginal, n: usize, upper: f64, truncation: f64) -> Vec<(f64, f64)> {
    let limit = truncation * m.mean();
    if upper >= limit || !upper.is_finite() {
        rule_1d(m, n, &[], truncation)
    } else {
        rule_interval(m, n, 0.0, upper)
    }
}

fn tensor(model: &FadingModel, n: usize, truncation: f64) -> PointSet {
    let rules: Vec<Vec<(f64, f64)>> = model
        .per_user
        .iter()
        .map(|&m| rule_1d(m, n, &[], truncation))
        .collect();
    let dim = rules.len();
    let mut ps = PointSet::new(dim);
    let mut idx = vec![0usize; dim];
    let mut z = vec![0.0; dim];
    'outer: loop {
        let mut w = 1.0;
        for d in 0..dim {
            let (zd, wd) = rules[d][idx[d]];
            z[d] = zd;
            w *= wd;
        }
        ps.push(&z, w);
        for d in (0..dim).rev() {
            idx[d] += 1;
            if idx[d] < rules[d].len() {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    ps.normalize();
    ps
}

fn split_2d(
    model: &FadingModel,
    n: usize,
    truncation: f64,
    outer_axis: usize,
    outer_breaks: &[f64],
    inner_breaks: &dyn Fn(f64) -> Vec<f64>,
) -> PointSet {
    let inner_axis = 1 - outer_axis;
    let (mo, mi) = (model.per_user[outer_axis], model.per_user[inner_axis]);
    let mut ps = PointSet::new(2);
    let mut z = [0.0; 2];
    for (zo, wo) in rule_1d(mo, n, outer_breaks, truncation) {
        z[outer_axis] = zo;
        for (zi, wi) in rule_1d(mi, n, &inner_breaks(zo), truncation) {
            z[inner_axis] = zi;
            ps.push(&z, wo * wi);
        }
    }
    ps.normalize();
    ps
}

/// Below the line: outer `z[0]`, inner `z[1]` on `[0, a + b z[0]]`.
/// Above the line: outer `z[1]` from `max(a, 0)`, inner `z[0]` on
/// `[0, (z[1] - a) / b]`. For `a = 0, b = 1` the two halves mirror each other.
fn line_split(model: &FadingModel, n: usize, truncation: f64, line: LineSplit) -> PointSet {
    let (m0, m1) = (model.per_user[0], model.per_user[1]);
    let LineSplit {
        intercept: a,
        slope: b,
    } = line;
    let mut ps = PointSet::new(2);

    // below
    if a > 0.0 || b > 0.0 {
        let start = if a >= 0.0 { 0.0 } else { -a / b };
        for (z0, w0) in rule_tail(m0, n, start) {
            let upper = a + b * z0;
            for (z1, w1) in rule_lower(m1, n, upper, truncation) {
                ps.push(&[z0, z1], w0 * w1);
            }
        }
    }
    // above
    for (z1, w1) in rule_tail(m1, n, a.max(0.0)) {
        let upper = if b > 0.0 { (z1 - a) / b } else { f64::INFINITY };
        for (z0, w0) in rule_lower(m0, n, upper, truncation) {
            ps.push(&[z0, z1], w0 * w1);
        }
    }
    ps.normalize();
    ps
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(users: usize) -> FadingModel {
        FadingModel::rayleigh(users, 1.0).unwrap()
    }

    /// Adaptive Simpson on a finite interval; the oracle for exponential-weighted
    /// integrals after mapping `[0, ∞)` to `[0, 1)` with `z = t / (1 - t)`.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn rec<F: Fn(f64) -> f64 + Copy>(
            f: F,
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
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(
            f,
            a,
            b,
            fa,
            fm,
            fb,
            (b - a) / 6.0 * (fa + 4.0 * fm + fb),
            tol,
            50,
        )
    }

    pub(crate) fn exp_weighted_oracle<F: Fn(f64) -> f64 + Copy>(g: F) -> f64 {
        simpson(
            move |t: f64| {
                if t >= 1.0 {
                    return 0.0;
                }
                let z = t / (1.0 - t);
                g(z) * (-z).exp() / ((1.0 - t) * (1.0 - t))
            },
            0.0,
            1.0,
            1e-13,
        )
    }

    #[test]
    fn constant_integrates_to_one() {
        for users in [1, 2] {
            let e = expect(&unit(users), |_| 1.0, &IntegrationSpec::default()).unwrap();
            assert!((e.value - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_square_matches_adaptive_oracle() {
        let oracle = exp_weighted_oracle(|z| (1.0 + z).powi(-2));
        assert!(
            (oracle - 0.403_652_637_676_806).abs() < 1e-10,
            "oracle {oracle}"
        );
        let e = expect(
            &unit(1),
            |z| (1.0 + z[0]).powi(-2),
            &IntegrationSpec::default(),
        )
        .unwrap();
        assert!((e.value - 0.40365).abs() < 1e-4);
        assert!((e.value - oracle).abs() < 1e-6);
    }

    #[test]
    fn product_of_independent_means() {
        let e = expect(&unit(2), |z| z[0] * z[1], &IntegrationSpec::default()).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polynomial_exactness_with_scaled_mean() {
        let m = FadingModel::rayleigh(1, 2.5).unwrap();
        // E{z^3} = 6 mean^3
        let e = expect(&m, |z| z[0].powi(3), &IntegrationSpec::quadrature(8)).unwrap();
        assert!((e.value - 6.0 * 2.5f64.powi(3)).abs() < 1e-10);
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let model = unit(2);
        let q = Integrator::new(&model, &IntegrationSpec::default()).unwrap();
        let mc = Integrator::new(&model, &IntegrationSpec::monte_carlo(200_000, 5)).unwrap();
        for beta in [0.5, 2.0, 5.0] {
            let f = |z: &[f64]| (1.0 + z[0] / (1.0 + z[1])).powf(-beta);
            let a = q.expect(f).unwrap();
            let b = mc.expect(f).unwrap();
            assert!(
                (a.value - b.value).abs() < 3.0 * (a.error + b.error),
                "beta {beta}: {a:?} vs {b:?}"
            );
        }
    }

    #[test]
    fn node_doubling_within_reported_error() {
        let model = unit(2);
        let f = |z: &[f64]| (1.0 + z[0] + 0.3 * z[1]).powf(-2.885);
        for n in [16, 32] {
            let e = Integrator::new(&model, &IntegrationSpec::quadrature(n))
                .unwrap()
                .expect(f)
                .unwrap();
            let e2 = Integrator::new(&model, &IntegrationSpec::quadrature(2 * n))
                .unwrap()
                .expect(f)
                .unwrap();
            assert!((e2.value - e.value).abs() <= e.error, "n={n}: {e:?} {e2:?}");
        }
    }

    #[test]
    fn line_split_handles_indicator_exactly() {
        // P(z2 < z1) = 1/2 and P(z2 < 1 + 2 z1) = 1 - e^{-1}/3 for unit exponentials
        let model = unit(2);
        let spec = IntegrationSpec::default();
        let diag = LineSplit {
            intercept: 0.0,
            slope: 1.0,
        };
        let integ = Integrator::with_line_split(&model, &spec, diag).unwrap();
        let p = integ
            .expect(|z| if diag.below(z) { 1.0 } else { 0.0 })
            .unwrap();
        assert!((p.value - 0.5).abs() < 1e-13);
        let shifted = LineSplit {
            intercept: 1.0,
            slope: 2.0,
        };
        let integ = Integrator::with_line_split(&model, &spec, shifted).unwrap();
        let p = integ
            .expect(|z| if shifted.below(z) { 1.0 } else { 0.0 })
            .unwrap();
        assert!(
            (p.value - (1.0 - (-1f64).exp() / 3.0)).abs() < 1e-12,
            "{p:?}"
        );
        let neg = LineSplit {
            intercept: -0.5,
            slope: 2.0,
        };
        let integ = Integrator::with_line_split(&model, &spec, neg).unwrap();
        // P(z2 < 2 z1 - 1/2) = (2/3) e^{-1/4}
        let p = integ
            .expect(|z| if neg.below(z) { 1.0 } else { 0.0 })
            .unwrap();
        assert!(
            (p.value - 2.0 / 3.0 * (-0.25f64).exp()).abs() < 1e-12,
            "{p:?}"
        );
    }

    #[test]
    fn diagonal_split_is_mirror_symmetric() {
        let model = unit(2);
        let integ = Integrator::with_line_split(
            &model,
            &IntegrationSpec::default(),
            LineSplit {
                intercept: 0.0,
                slope: 1.0,
            },
        )
        .unwrap();
        let f = |z: &[f64]| (1.0 + 3.0 * z[0]).ln() * (-z[1]).exp();
        let g = |z: &[f64]| (1.0 + 3.0 * z[1]).ln() * (-z[0]).exp();
        let (a, b) = (
            integ.expect(f).unwrap().value,
            integ.expect(g).unwrap().value,
        );
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn breaks_recover_kinked_integrand() {
        // E{(z - 1.3)^+} = e^{-1.3}
        let model = unit(1);
        let integ =
            Integrator::with_breaks_1d(&model, &IntegrationSpec::default(), &[1.3]).unwrap();
        let e = integ.expect(|z| (z[0] - 1.3).max(0.0)).unwrap();
        assert!((e.value - (-1.3f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn log_expect_exp_small_exponent_precision() {
        let model = unit(1);
        let integ = Integrator::new(&model, &IntegrationSpec::default()).unwrap();
        let beta = 1e-9;
        let l = integ.log_expect_exp(|z| -beta * (1.0 + z[0]).ln()).unwrap();
        // ln E{e^{-b X}} ≈ -b E{X}; E{ln(1+z)} = e E1(1)
        let ergodic = 0.596_347_362_323_194;
        assert!(
            (l.value / -beta - ergodic).abs() < 1e-6,
            "{}",
            l.value / -beta
        );
    }

    #[test]
    fn non_finite_integrand_reports_state() {
        let e = expect(
            &unit(1),
            |z| if z[0] > 5.0 { f64::NAN } else { 0.0 },
            &IntegrationSpec::default(),
        );
        match e {
            Err(Error::NonFinite { state, .. }) => assert!(state[0] > 5.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        assert!(IntegrationSpec::quadrature(4).validate().is_err());
        assert!(IntegrationSpec::monte_carlo(10, 1).validate().is_err());
        assert!(IntegrationSpec::default().validate().is_ok());
    }

    #[test]
    fn auto_method_switches_to_monte_carlo_above_two_users() {
        let integ = Integrator::new(&unit(3), &IntegrationSpec::default()).unwrap();
        assert!(integ.is_monte_carlo());
        assert!(!Integrator::new(&unit(2), &IntegrationSpec::default())
            .unwrap()
            .is_monte_carlo());
    }
}
