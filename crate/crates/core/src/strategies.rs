//! Transmission strategies at constant power: fixed decoding orders with time
//! sharing, TDMA, the optimal two-user state-dependent decoding order, and the
//! `λ_j / z_j` ordering rule.

use std::f64::consts::{LN_2, LOG2_E};

use serde::{Deserialize, Serialize};

use crate::effcap::{
    capacity_from_log_moment, effective_capacity_with, log_moment, sic_rates_into, tdma_rate,
    DecodingOrder, EffCap, Scenario,
};
use crate::error::{usage, Error, Result};
use crate::integrate::{log_mean_exp_weighted, Integrator, LineSplit};
use crate::solve::{brent, golden_max, grid_golden_max, monotone_root_log};

const ORDER_12: [usize; 2] = [0, 1];
const ORDER_21: [usize; 2] = [1, 0];

/// Fractions of each frame spent in each decoding order; `tau[m]` belongs to
/// `DecodingOrder::all(M)[m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSharing {
    pub tau: Vec<f64>,
}

impl TimeSharing {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.iter().any(|t| !(*t >= 0.0)) {
            return usage(format!(
                "time-sharing fractions must be nonnegative: {tau:?}"
            ));
        }
        let s: f64 = tau.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return usage(format!("time-sharing fractions sum to {s}, not 1"));
        }
        Ok(Self { tau })
    }

    /// All time in one order.
    pub fn pure(order: &DecodingOrder) -> Self {
        let all = DecodingOrder::all(order.len());
        let tau = all
            .iter()
            .map(|o| if o == order { 1.0 } else { 0.0 })
            .collect();
        Self { tau }
    }

    /// Two users: fraction `t` in order (1,2), the rest in (2,1).
    pub fn two_user(t: f64) -> Result<Self> {
        Self::new(vec![t, 1.0 - t])
    }

    fn users(&self) -> usize {
        (1..=12)
            .find(|m| factorial(*m) == self.tau.len())
            .unwrap_or(0)
    }
}

fn factorial(m: usize) -> usize {
    (1..=m).product()
}

/// Rule assigning a decoding order to each fading state.
///
/// The two-user rules split the plane along a line `z2 = a + b z1`; below it
/// the order is (1,2), i.e. user 2 is decoded last. `swapped` flips that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecodingPartition {
    Fixed {
        order: DecodingOrder,
    },
    KRule {
        k: f64,
        beta: f64,
        snr: [f64; 2],
        #[serde(default)]
        swapped: bool,
    },
    LambdaRule {
        lambda: Vec<f64>,
    },
    Linear {
        intercept: f64,
        slope: f64,
        #[serde(default)]
        swapped: bool,
    },
}

impl DecodingPartition {
    pub fn fixed(order: DecodingOrder) -> Self {
        Self::Fixed { order }
    }

    pub fn k_rule(k: f64, beta: f64, snr: [f64; 2]) -> Self {
        Self::KRule {
            k,
            beta,
            snr,
            swapped: false,
        }
    }

    pub fn lambda_rule(lambda: Vec<f64>) -> Self {
        Self::LambdaRule { lambda }
    }

    /// `z2 = c z1` with (1,2) below.
    pub fn ray(c: f64) -> Self {
        Self::Linear {
            intercept: 0.0,
            slope: c,
            swapped: false,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            Self::Fixed { order } if order.len() != m => {
                usage(format!("order {order} does not cover {m} users"))
            }
            Self::KRule { k, beta, snr, .. } => {
                if m != 2 {
                    return usage("the K rule is defined for two users");
                }
                if !(*k >= 0.0 && *beta > 0.0 && snr.iter().all(|s| *s > 0.0)) {
                    return usage(format!(
                        "invalid K rule: K = {k}, beta = {beta}, snr = {snr:?}"
                    ));
                }
                Ok(())
            }
            Self::LambdaRule { lambda } => {
                if lambda.len() != m || lambda.iter().any(|l| !(*l >= 0.0)) {
                    return usage(format!(
                        "lambda {lambda:?} must hold {m} nonnegative weights"
                    ));
                }
                if lambda.iter().all(|l| *l == 0.0) {
                    return usage("lambda weights are all zero");
                }
                Ok(())
            }
            Self::Linear {
                intercept, slope, ..
            } => {
                if m != 2 {
                    return usage("linear partitions are defined for two users");
                }
                if !(intercept.is_finite() && *slope >= 0.0 && slope.is_finite()) {
                    return usage(format!(
                        "invalid linear partition z2 = {intercept} + {slope} z1"
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Boundary line for two-user rules; `None` when the order never changes.
    pub fn line(&self) -> Option<LineSplit> {
        match *self {
            Self::KRule { k, beta, snr, .. } => {
                if k == 0.0 || !k.is_finite() {
                    return None;
                }
                let kb = (k.ln() / beta).exp();
                Some(LineSplit {
                    intercept: (kb - 1.0) / snr[1],
                    slope: snr[0] * kb / snr[1],
                })
            }
            Self::LambdaRule { ref lambda } if lambda.len() == 2 => {
                if lambda[0] == 0.0 || lambda[1] == 0.0 {
                    return None;
                }
                Some(LineSplit {
                    intercept: 0.0,
                    slope: lambda[1] / lambda[0],
                })
            }
            Self::Linear {
                intercept, slope, ..
            } => Some(LineSplit { intercept, slope }),
            _ => None,
        }
    }

    fn swapped(&self) -> bool {
        matches!(
            self,
            Self::KRule { swapped: true, .. } | Self::Linear { swapped: true, .. }
        )
    }

    /// Two-user order at `z`, as a 0-based slice.
    fn order2(&self, z: &[f64]) -> &'static [usize] {
        let below = match self {
            Self::Fixed { order } => {
                return if order.first() == 0 {
                    &ORDER_12
                } else {
                    &ORDER_21
                }
            }
            // K = 0: every state is above; K = ∞: every state is below
            Self::KRule { k, .. } if *k == 0.0 => false,
            Self::KRule { k, .. } if !k.is_finite() => true,
            Self::LambdaRule { lambda } => {
                let ratio = |j: usize| {
                    if z[j] > 0.0 {
                        lambda[j] / z[j]
                    } else {
                        f64::INFINITY
                    }
                };
                ratio(0) <= ratio(1)
            }
            _ => self.line().unwrap().below(z),
        };
        if below != self.swapped() {
            &ORDER_12
        } else {
            &ORDER_21
        }
    }

    /// Decoding order used at state `z`.
    pub fn order_at(&self, z: &[f64]) -> DecodingOrder {
        match self {
            Self::Fixed { order } => order.clone(),
            Self::LambdaRule { lambda } if lambda.len() != 2 => {
                decode_order_lambda_rule(lambda, z).expect("validated partition")
            }
            _ => DecodingOrder::new(self.order2(z).to_vec()).unwrap(),
        }
    }

    /// Two-user order at `z` as a 0-based slice (first decoded, last decoded).
    pub fn order2_at(&self, z: &[f64]) -> &'static [usize] {
        self.order2(z)
    }

    /// SIC rates at `z` for received SNRs `received`.
    pub fn rates_into(&self, received: &[f64], z: &[f64], out: &mut [f64]) {
        match self {
            Self::Fixed { order } => sic_rates_into(received, order.as_slice(), out),
            Self::LambdaRule { lambda } if lambda.len() != 2 => {
                let order = decode_order_lambda_rule(lambda, z).expect("validated partition");
                sic_rates_into(received, order.as_slice(), out)
            }
            _ => sic_rates_into(received, self.order2(z), out),
        }
    }

    /// Integrator that respects the partition boundary.
    pub fn integrator(&self, scn: &Scenario) -> Result<Integrator> {
        self.validate(scn.m())?;
        match self.line() {
            Some(line) => Integrator::with_line_split(&scn.fading, &scn.integration, line),
            None => scn.integrator(),
        }
    }
}

/// K-rule boundary `z2 = g(z1)`; negative values mean no state lies below.
pub fn k_boundary(k: f64, beta: f64, snr: [f64; 2], z1: f64) -> f64 {
    ((1.0 + snr[0] * z1) * (k.ln() / beta).exp() - 1.0) / snr[1]
}

/// Same curve solved for `z1 = f(z2)`, the natural form when `K < 1`.
pub fn k_boundary_inverse(k: f64, beta: f64, snr: [f64; 2], z2: f64) -> f64 {
    ((1.0 + snr[1] * z2) * (-k.ln() / beta).exp() - 1.0) / snr[0]
}

/// Users sorted by ascending `λ_j / z_j`; `z_j = 0` counts as `+∞`, and ties
/// keep the lower index first.
pub fn decode_order_lambda_rule(lambda: &[f64], z: &[f64]) -> Result<DecodingOrder> {
    if lambda.len() != z.len() || lambda.iter().any(|l| !(*l >= 0.0)) {
        return usage("lambda must be nonnegative and match the state dimension");
    }
    let ratio = |j: usize| {
        if z[j] > 0.0 {
            lambda[j] / z[j]
        } else {
            f64::INFINITY
        }
    };
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&a, &b| ratio(a).partial_cmp(&ratio(b)).unwrap());
    DecodingOrder::new(idx)
}

fn received_into(snr: &[f64], z: &[f64], out: &mut [f64]) {
    for j in 0..z.len() {
        out[j] = snr[j] * z[j];
    }
}

/// Per-user effective capacities under a state-dependent decoding order.
pub fn variable_order_capacities(scn: &Scenario, part: &DecodingPartition) -> Result<Vec<EffCap>> {
    let integ = part.integrator(scn)?;
    capacities_on(scn, &integ, |s, z, r| part.rates_into(s, z, r))
}

/// Per-user effective capacities when every frame is split between decoding
/// orders in the proportions `ts`. Each frame mixes the orders' rates before
/// the exponent is applied.
pub fn fixed_order_capacities(scn: &Scenario, ts: &TimeSharing) -> Result<Vec<EffCap>> {
    let m = scn.m();
    if ts.users() != m {
        return usage(format!("{} fractions do not match {m} users", ts.tau.len()));
    }
    let orders = DecodingOrder::all(m);
    let integ = scn.integrator()?;
    let mut tmp = vec![0.0; m];
    capacities_on(scn, &integ, |s, _z, r| {
        r.iter_mut().for_each(|v| *v = 0.0);
        for (o, &t) in orders.iter().zip(&ts.tau) {
            if t > 0.0 {
                sic_rates_into(s, o.as_slice(), &mut tmp);
                r.iter_mut().zip(&tmp).for_each(|(v, x)| *v += t * x);
            }
        }
    })
}

/// Capacities of all users for a rate map `rates(received, z, out)`.
pub(crate) fn capacities_on<F>(
    scn: &Scenario,
    integ: &Integrator,
    mut rates: F,
) -> Result<Vec<EffCap>>
where
    F: FnMut(&[f64], &[f64], &mut [f64]),
{
    let m = scn.m();
    let snr = scn.system.snrs();
    let (mut s, mut r) = (vec![0.0; m], vec![0.0; m]);
    (0..m)
        .map(|j| {
            effective_capacity_with(integ, scn.system.beta(j), |z| {
                received_into(&snr, z, &mut s);
                rates(&s, z, &mut r);
                r[j]
            })
        })
        .collect()
}

pub fn weighted_sum(lambda: &[f64], caps: &[EffCap]) -> f64 {
    lambda.iter().zip(caps).map(|(l, c)| l * c.value).sum()
}

/// Weighted error bound matching [`weighted_sum`].
pub fn weighted_error(lambda: &[f64], caps: &[EffCap]) -> f64 {
    lambda.iter().zip(caps).map(|(l, c)| l * c.error).sum()
}

pub(crate) fn check_weights(lambda: &[f64], m: usize) -> Result<()> {
    if lambda.len() != m || lambda.iter().any(|l| !(*l >= 0.0)) {
        return usage(format!(
            "weights {lambda:?} must be {m} nonnegative numbers"
        ));
    }
    if (lambda.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return usage(format!("weights {lambda:?} must sum to 1"));
    }
    Ok(())
}

/// Fixed point of the optimal two-user decoding partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSolution {
    pub k: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// `K - (1-λ1) φ1 / (λ1 φ2)`.
    pub residual: f64,
    pub iterations: usize,
    pub beta: f64,
    pub snr: [f64; 2],
}

impl KSolution {
    pub fn partition(&self) -> DecodingPartition {
        DecodingPartition::k_rule(self.k, self.beta, self.snr)
    }

    pub fn boundary(&self, z1: f64) -> f64 {
        k_boundary(self.k, self.beta, self.snr, z1)
    }
}

const K_TOL: f64 = 1e-6;
const K_RANGE: (f64, f64) = (1e-6, 1e6);

/// Solves `K = (1-λ1) φ1(K) / (λ1 φ2(K))`, with `φ_j = E{2^{-β r_j}}` taken
/// under the partition `K` induces.
///
/// Damped iteration on `ln K`, falling back to a bracketed solve when the
/// iteration stalls. Requires two users with a common `θ` and `0 < λ1 < 1`.
pub fn optimal_partition_two_user(scn: &Scenario, lambda1: f64) -> Result<KSolution> {
    optimal_partition_with(scn, lambda1, false)
}

/// As [`optimal_partition_two_user`] with the region labels exchanged.
pub fn optimal_partition_two_user_swapped(scn: &Scenario, lambda1: f64) -> Result<KSolution> {
    optimal_partition_with(scn, lambda1, true)
}

fn optimal_partition_with(scn: &Scenario, lambda1: f64, swapped: bool) -> Result<KSolution> {
    if scn.m() != 2 {
        return usage("the optimal partition is implemented for two users");
    }
    if scn.system.common_theta().is_none() {
        return usage("the optimal partition requires a common QoS exponent");
    }
    if !(lambda1 > 0.0 && lambda1 < 1.0) {
        return usage(format!("lambda1 must lie in (0, 1), got {lambda1}"));
    }
    let beta = scn.system.beta(0);
    let snr = [scn.system.snr(0), scn.system.snr(1)];
    let offset = ((1.0 - lambda1) / lambda1).ln();
    let phis = |t: f64| -> Result<(f64, f64)> {
        let part = DecodingPartition::KRule {
            k: t.exp(),
            beta,
            snr,
            swapped,
        };
        let integ = part.integrator(scn)?;
        let mut s = [0.0; 2];
        let mut r = [0.0; 2];
        let mut lp = [0.0; 2];
        for (j, l) in lp.iter_mut().enumerate() {
            *l = log_moment(&integ, beta, |z| {
                received_into(&snr, z, &mut s);
                part.rates_into(&s, z, &mut r);
                r[j]
            })?
            .value;
        }
        Ok((lp[0], lp[1]))
    };
    // ln of the right-hand side minus ln K
    let gap = |t: f64| -> Result<f64> {
        let (l1, l2) = phis(t)?;
        Ok(offset + l1 - l2 - t)
    };
    let converged = |t: f64, g: f64| {
        let k = t.exp();
        (k - (t + g).exp()).abs() / k.max(1.0) < K_TOL
    };

    let (lo, hi) = (K_RANGE.0.ln(), K_RANGE.1.ln());
    let mut t = offset.clamp(lo, hi);
    let mut iterations = 0;
    let mut found = None;
    for _ in 0..60 {
        iterations += 1;
        let g = gap(t)?;
        if converged(t, g) {
            found = Some(t);
            break;
        }
        t = (t + 0.5 * g).clamp(lo, hi);
    }
    let t = match found {
        Some(t) => t,
        None => {
            let mut err = None;
            let root = brent(
                |t| match gap(t) {
                    Ok(g) => g,
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                },
                lo,
                hi,
                1e-12,
                200,
            );
            if let Some(e) = err {
                return Err(e);
            }
            root.map_err(|_| Error::NotConverged {
                solver: "K fixed point",
                iterations,
                residual: gap(t).unwrap_or(f64::NAN),
                history: Vec::new(),
            })?
        }
    };
    let (l1, l2) = phis(t)?;
    let k = t.exp();
    Ok(KSolution {
        k,
        phi1: l1.exp(),
        phi2: l2.exp(),
        residual: k - (offset + l1 - l2).exp(),
        iterations,
        beta,
        snr,
    })
}

/// Per-order SIC rates at every point of an integrator, for fast repeated
/// evaluation of time-sharing mixtures.
struct OrderRateTable {
    m: usize,
    orders: usize,
    weights: Vec<f64>,
    // [point][order][user]
    rates: Vec<f64>,
}

impl OrderRateTable {
    fn new(scn: &Scenario, integ: &Integrator) -> Self {
        let m = scn.m();
        let all = DecodingOrder::all(m);
        let snr = scn.system.snrs();
        let pts = integ.points();
        let mut rates = Vec::with_capacity(pts.len() * all.len() * m);
        let (mut s, mut r) = (vec![0.0; m], vec![0.0; m]);
        for (z, _) in pts.iter() {
            received_into(&snr, z, &mut s);
            for o in &all {
                sic_rates_into(&s, o.as_slice(), &mut r);
                rates.extend_from_slice(&r);
            }
        }
        Self {
            m,
            orders: all.len(),
            weights: pts.weights().to_vec(),
            rates,
        }
    }

    fn weighted_sum(&self, betas: &[f64], lambda: &[f64], tau: &[f64], buf: &mut Vec<f64>) -> f64 {
        let (m, n_o) = (self.m, self.orders);
        let mut total = 0.0;
        for j in 0..m {
            if lambda[j] == 0.0 {
                continue;
            }
            let s = betas[j] * LN_2;
            buf.clear();
            for p in self.rates.chunks_exact(m * n_o) {
                let r: f64 = (0..n_o).map(|o| tau[o] * p[o * m + j]).sum();
                buf.push(-s * r);
            }
            let lm = log_mean_exp_weighted(buf, &self.weights);
            total += lambda[j] * (-lm / s);
        }
        total
    }
}

/// Best time-sharing over fixed orders for weights `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSharingSolution {
    pub tau: TimeSharing,
    pub capacities: Vec<EffCap>,
    pub weighted_sum: f64,
}

/// Maximizes `λ·C` over time-sharing fractions. Two users: grid scan plus
/// golden section over the single fraction. More users: repeated line
/// searches toward each pure order, starting from the best pure order.
pub fn fixed_order_ts_optimize(scn: &Scenario, lambda: &[f64]) -> Result<TimeSharingSolution> {
    let m = scn.m();
    check_weights(lambda, m)?;
    let integ = scn.integrator()?;
    let table = OrderRateTable::new(scn, &integ);
    let betas = scn.system.betas();
    let mut buf = Vec::new();
    let mut obj = |tau: &[f64]| table.weighted_sum(&betas, lambda, tau, &mut buf);

    let tau = if m == 2 {
        let (t, _) = grid_golden_max(|t| obj(&[t, 1.0 - t]), 0.0, 1.0, 101, 1e-7);
        vec![t, 1.0 - t]
    } else {
        let n_o = table.orders;
        let vertex = |i: usize| {
            let mut v = vec![0.0; n_o];
            v[i] = 1.0;
            v
        };
        let best = (0..n_o)
            .map(|i| (obj(&vertex(i)), i))
            .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
        let mut tau = vertex(best.1);
        let mut val = best.0;
        for _ in 0..30 {
            let start = val;
            for i in 0..n_o {
                let mix = |s: f64, tau: &[f64]| -> Vec<f64> {
                    tau.iter()
                        .enumerate()
                        .map(|(k, &t)| (1.0 - s) * t + if k == i { s } else { 0.0 })
                        .collect()
                };
                let (s, v) = golden_max(|s| obj(&mix(s, &tau)), 0.0, 1.0, 1e-6);
                if v > val {
                    tau = mix(s, &tau);
                    val = v;
                }
            }
            if val - start < 1e-10 {
                break;
            }
        }
        tau
    };
    let tau = TimeSharing { tau };
    let capacities = fixed_order_capacities(scn, &tau)?;
    Ok(TimeSharingSolution {
        weighted_sum: weighted_sum(lambda, &capacities),
        tau,
        capacities,
    })
}

/// Best single decoding order for weights `lambda`.
pub fn best_fixed_order(scn: &Scenario, lambda: &[f64]) -> Result<(DecodingOrder, Vec<EffCap>)> {
    check_weights(lambda, scn.m())?;
    let mut best: Option<(f64, DecodingOrder, Vec<EffCap>)> = None;
    for o in DecodingOrder::all(scn.m()) {
        let caps = variable_order_capacities(scn, &DecodingPartition::fixed(o.clone()))?;
        let w = weighted_sum(lambda, &caps);
        if best.as_ref().is_none_or(|b| w > b.0) {
            best = Some((w, o, caps));
        }
    }
    let (_, o, caps) = best.unwrap();
    Ok((o, caps))
}

/// One user's marginal point set, for TDMA evaluations.
struct TdmaUser {
    snr: f64,
    beta: f64,
    z: Vec<f64>,
    w: Vec<f64>,
}

impl TdmaUser {
    fn new(scn: &Scenario, integ: &Integrator, user: usize) -> Self {
        let pts = integ.points();
        Self {
            snr: scn.system.snr(user),
            beta: scn.system.beta(user),
            z: pts.iter().map(|(z, _)| z[0]).collect(),
            w: pts.weights().to_vec(),
        }
    }

    /// `dC/dδ = E{w h} / E{w}` with `w = 2^{-β r}` and
    /// `h = log2(1 + x) - x/(1 + x) log2 e`, `x = snr z / δ`.
    fn derivative(&self, delta: f64) -> f64 {
        let s = self.beta * LN_2;
        let lw: Vec<f64> = self
            .z
            .iter()
            .map(|&z| -s * tdma_rate(self.snr * z, delta))
            .collect();
        let mx = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for ((&z, &l), &wt) in self.z.iter().zip(&lw).zip(&self.w) {
            let e = wt * (l - mx).exp();
            let x = self.snr * z / delta;
            num += e * (x.ln_1p() * LOG2_E - x / (1.0 + x) * LOG2_E);
            den += e;
        }
        num / den
    }
}

/// Effective capacity of `user` holding the band for a fraction `delta` of each frame.
pub fn tdma_capacity(scn: &Scenario, user: usize, delta: f64) -> Result<EffCap> {
    if user >= scn.m() {
        return usage(format!("user index {user} out of range"));
    }
    if !(0.0..=1.0).contains(&delta) {
        return usage(format!("time fraction must be in [0, 1], got {delta}"));
    }
    if delta == 0.0 {
        return Ok(EffCap {
            value: 0.0,
            error: 0.0,
            underflow: false,
        });
    }
    let integ = scn
        .integrator()?
        .marginal(&scn.fading, &scn.integration, user)?;
    tdma_capacity_on(scn, &integ, user, delta)
}

fn tdma_capacity_on(scn: &Scenario, integ: &Integrator, user: usize, delta: f64) -> Result<EffCap> {
    if delta == 0.0 {
        return Ok(EffCap {
            value: 0.0,
            error: 0.0,
            underflow: false,
        });
    }
    let snr = scn.system.snr(user);
    let beta = scn.system.beta(user);
    Ok(capacity_from_log_moment(
        beta,
        log_moment(integ, beta, |z| tdma_rate(snr * z[0], delta))?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdmaSolution {
    pub delta: Vec<f64>,
    pub capacities: Vec<EffCap>,
    /// Common multiplier of the time constraint.
    pub kappa: f64,
    pub weighted_sum: f64,
}

const DELTA_MIN: f64 = 1e-14;

/// Time allocation maximizing `Σ λ_j C_j^TD(δ_j)` subject to `Σ δ_j = 1`.
///
/// Each `C_j^TD` is concave and increasing in `δ_j` with unbounded slope at
/// zero, so every user with positive weight is active and the optimum solves
/// `λ_j C_j'(δ_j) = κ`. The outer search is over `κ`, the inner one over each `δ_j`.
pub fn tdma_optimize(scn: &Scenario, lambda: &[f64]) -> Result<TdmaSolution> {
    let m = scn.m();
    check_weights(lambda, m)?;
    let joint = scn.integrator()?;
    let margs: Vec<Integrator> = (0..m)
        .map(|j| joint.marginal(&scn.fading, &scn.integration, j))
        .collect::<Result<_>>()?;
    let users: Vec<TdmaUser> = (0..m).map(|j| TdmaUser::new(scn, &margs[j], j)).collect();
    let active: Vec<usize> = (0..m).filter(|&j| lambda[j] > 0.0).collect();

    let delta_at = |kappa: f64| -> Vec<f64> {
        let mut d = vec![0.0; m];
        for &j in &active {
            let u = &users[j];
            let f = |delta: f64| lambda[j] * u.derivative(delta) - kappa;
            d[j] = if f(1.0) >= 0.0 {
                1.0
            } else if f(DELTA_MIN) <= 0.0 {
                DELTA_MIN
            } else {
                brent(f, DELTA_MIN, 1.0, 1e-13, 200).unwrap_or(DELTA_MIN)
            };
        }
        d
    };

    let (delta, kappa) = if active.len() == 1 {
        let mut d = vec![0.0; m];
        d[active[0]] = 1.0;
        let k = lambda[active[0]] * users[active[0]].derivative(1.0);
        (d, k)
    } else {
        let share = 1.0 / active.len() as f64;
        let guess = active
            .iter()
            .map(|&j| lambda[j] * users[j].derivative(share))
            .fold(0.0, f64::max);
        let kappa = monotone_root_log(
            |k| delta_at(k).iter().sum::<f64>() - 1.0,
            guess,
            false,
            (1e-12, 1e12),
            1e-13,
        )?;
        let mut d = delta_at(kappa);
        // absorb the root-finding residual so the fractions sum to one exactly
        let s: f64 = d.iter().sum();
        d.iter_mut().for_each(|x| *x /= s);
        (d, kappa)
    };
    let capacities = (0..m)
        .map(|j| tdma_capacity_on(scn, &margs[j], j, delta[j]))
        .collect::<Result<Vec<_>>>()?;
    Ok(TdmaSolution {
        weighted_sum: weighted_sum(lambda, &capacities),
        delta,
        capacities,
        kappa,
    })
}

/// `λ_j C_j'(δ_j)` for each user, to check the stationarity condition.
pub fn tdma_marginal_values(scn: &Scenario, lambda: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
    let joint = scn.integrator()?;
    (0..scn.m())
        .map(|j| {
            let integ = joint.marginal(&scn.fading, &scn.integration, j)?;
            Ok(lambda[j] * TdmaUser::new(scn, &integ, j).derivative(delta[j]))
        })
        .collect()
}
