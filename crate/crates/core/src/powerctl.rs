//! Power control under average power constraints.
//!
//! Fixed decoding order: closed-form water-filling-type policies solved from
//! the last-decoded user backward, each with its own threshold `α_j`.
//! Variable decoding order (two users): per-state KKT solve inside nested
//! iterations on the multipliers and on `φ_j = E{2^{-β_j r_j}}`.
//!
//! Region convention for two users: `D_j` is the set of states where user `j`
//! is decoded last (sees no interference).

use std::f64::consts::LN_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::FadingModel;
use crate::effcap::{effective_capacity_with, sic_rates_into, DecodingOrder, EffCap, Scenario};
use crate::error::{usage, Error, Result};
use crate::integrate::{IntegrationSpec, Integrator, Method};
use crate::solve::{brent, monotone_root_log, monotone_root_log_from};
use crate::strategies::{check_weights, weighted_sum, DecodingPartition};

const ALPHA_RANGE: (f64, f64) = (1e-12, 1e8);

/// Fixed-order power level for one user: `[(1+I)/z · ((z/(α(1+I)))^{1/(β+1)} - 1)]^+`.
pub fn fixed_order_level(z: f64, interference: f64, alpha: f64, beta: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    let base = 1.0 + interference;
    let y = z / (alpha * base);
    if y <= 1.0 {
        0.0
    } else {
        base / z * (y.powf(1.0 / (beta + 1.0)) - 1.0)
    }
}

/// Parameters of a converged two-user variable-order policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableParams {
    pub lambda: [f64; 2],
    pub beta: [f64; 2],
    pub kappa: [f64; 2],
    pub phi: [f64; 2],
    pub alpha: [f64; 2],
    pub alpha12: f64,
    pub alpha21: f64,
}

impl VariableParams {
    fn from_alpha(lambda: [f64; 2], beta: [f64; 2], phi: [f64; 2], alpha: [f64; 2]) -> Self {
        let kappa = [
            alpha[0] * lambda[0] / (phi[0] * LN_2),
            alpha[1] * lambda[1] / (phi[1] * LN_2),
        ];
        Self {
            lambda,
            beta,
            kappa,
            phi,
            alpha,
            alpha12: kappa[1] * phi[0] * LN_2 / lambda[0],
            alpha21: kappa[0] * phi[1] * LN_2 / lambda[1],
        }
    }

    /// `(μ1, μ2)` at `z` given which user is decoded last.
    pub fn levels(&self, z: &[f64], last: usize) -> (f64, f64) {
        let (a, b) = (self.alpha, self.beta);
        if last == 0 {
            interior_state_solve(a[0], a[1], self.alpha21, b[0], b[1], z[0], z[1])
        } else {
            let (m2, m1) = interior_state_solve(a[1], a[0], self.alpha12, b[1], b[0], z[1], z[0]);
            (m1, m2)
        }
    }
}

/// Rule mapping fading states to transmit SNR levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PowerPolicy {
    /// Every user always transmits at its average SNR.
    Constant {
        snr: Vec<f64>,
        partition: DecodingPartition,
    },
    FixedOrder {
        order: DecodingOrder,
        alpha: Vec<f64>,
        beta: Vec<f64>,
    },
    VariableOrder {
        partition: DecodingPartition,
        params: VariableParams,
    },
}

impl PowerPolicy {
    pub fn partition(&self) -> DecodingPartition {
        match self {
            Self::Constant { partition, .. } | Self::VariableOrder { partition, .. } => {
                partition.clone()
            }
            Self::FixedOrder { order, .. } => DecodingPartition::fixed(order.clone()),
        }
    }

    pub fn users(&self) -> usize {
        match self {
            Self::Constant { snr, .. } => snr.len(),
            Self::FixedOrder { order, .. } => order.len(),
            Self::VariableOrder { .. } => 2,
        }
    }

    /// Transmit SNR levels at state `z`.
    pub fn evaluate(&self, z: &[f64]) -> Vec<f64> {
        let mut mu = vec![0.0; self.users()];
        self.levels_into(z, &mut mu);
        mu
    }

    pub fn levels_into(&self, z: &[f64], mu: &mut [f64]) {
        match self {
            Self::Constant { snr, .. } => mu.copy_from_slice(snr),
            Self::FixedOrder { order, alpha, beta } => {
                let mut interference = 0.0;
                for &u in order.as_slice().iter().rev() {
                    mu[u] = fixed_order_level(z[u], interference, alpha[u], beta[u]);
                    interference += mu[u] * z[u];
                }
            }
            Self::VariableOrder { partition, params } => {
                let last = partition.order2_at(z)[1];
                let (a, b) = params.levels(z, last);
                mu[0] = a;
                mu[1] = b;
            }
        }
    }

    /// Instantaneous rates at `z` under this policy.
    pub fn rates_into(&self, z: &[f64], mu: &mut [f64], out: &mut [f64]) {
        self.levels_into(z, mu);
        for j in 0..mu.len() {
            mu[j] *= z[j];
        }
        match self {
            Self::FixedOrder { order, .. } => sic_rates_into(mu, order.as_slice(), out),
            Self::Constant { partition, .. } | Self::VariableOrder { partition, .. } => {
                partition.rates_into(mu, z, out)
            }
        }
    }
}

/// Convergence diagnostics of the variable-order solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Largest normalized stationarity residual over the integration states;
    /// for silent users only positive residuals (a wish to transmit) count.
    pub max_residual: f64,
    /// `|E{μ_j}/SNR_j - 1|` per user.
    pub constraint_gap: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_rounds: usize,
    pub converged: bool,
    /// Relative change of `φ` per outer iteration.
    pub phi_history: Vec<f64>,
    pub message: Option<String>,
}

/// Single-user level `[((z/α)^{1/(β+1)} - 1)/z]^+`.
fn single_user_level(z: f64, alpha: f64, beta: f64) -> f64 {
    fixed_order_level(z, 0.0, alpha, beta)
}

/// Per-state optimum for a state where user 1 is decoded last.
///
/// With `u = 1 + μ1 z1`, the best `μ2` is `(u/z2)((z2/(α2 u))^{1/(β2+1)} - 1)^+`,
/// and the stationarity condition for `μ1` reduces to `h(u) = 0` with
/// `h(u) = (z1/α1) u^{-(β1+1)} - 1 - (z1 α2/(z2 α21)) ((z2/(α2 u))^{1/(β2+1)} - 1)^+`.
/// `h` falls and then rises while user 2 is active, and falls again once it
/// is silent, so the local maxima of the per-state Lagrangian are `u = 1`, the
/// root on the first falling stretch, and the single-user point. The best of
/// these is returned.
pub fn interior_state_solve(
    alpha1: f64,
    alpha2: f64,
    alpha21: f64,
    beta1: f64,
    beta2: f64,
    z1: f64,
    z2: f64,
) -> (f64, f64) {
    if z1 <= alpha1 {
        return (0.0, single_user_level(z2, alpha2, beta2));
    }
    if z2 <= alpha2 {
        return (single_user_level(z1, alpha1, beta1), 0.0);
    }
    let p = 1.0 / (beta2 + 1.0);
    let a = z1 / alpha1;
    let y = z2 / alpha2;
    let c = z1 * alpha2 / (z2 * alpha21);
    let h = |u: f64| a * u.powf(-(beta1 + 1.0)) - 1.0 - c * ((y / u).powf(p) - 1.0).max(0.0);
    let mu2_at = |u: f64| ((y / u).powf(p) - 1.0).max(0.0) * u / z2;
    let lagrangian = |u: f64| {
        let mu1 = (u - 1.0) / z1;
        let mu2 = mu2_at(u);
        let a1 = u.powf(-beta1);
        let a2 = (1.0 + mu2 * z2 / u).powf(-beta2);
        -a1 / (alpha1 * beta1) - (a2 / beta2 + alpha2 * mu2) / alpha21 - mu1
    };

    let mut candidates = vec![1.0];
    let u_off = y;
    let u_turn = ((beta1 + 1.0) * a / (c * p * y.powf(p))).powf(1.0 / (beta1 + 1.0 - p));
    let end = u_turn.min(u_off);
    if end > 1.0 && h(1.0) > 0.0 && h(end) < 0.0 {
        if let Ok(u) = brent(h, 1.0, end, 1e-15 * end, 200) {
            candidates.push(u);
        }
    }
    let u_su = a.powf(1.0 / (beta1 + 1.0));
    if u_su >= u_off {
        candidates.push(u_su);
    }
    let u = candidates
        .into_iter()
        .map(|u| (lagrangian(u), u))
        .fold(
            (f64::NEG_INFINITY, 1.0),
            |b, c| if c.0 > b.0 { c } else { b },
        )
        .1;
    ((u - 1.0) / z1, mu2_at(u))
}

/// Normalized stationarity residuals `(R1, R2)` at a state where user 1 is
/// decoded last. Each is the derivative of the per-state Lagrangian in `μ_j`
/// divided by `κ_j`: zero where the user is active, nonpositive where it is
/// silent.
pub fn kkt_residuals(p: &VariableParams, z: &[f64], mu: (f64, f64), last: usize) -> (f64, f64) {
    let (a, b) = (p.alpha, p.beta);
    if last == 0 {
        residuals_user1_last(a[0], a[1], p.alpha21, b[0], b[1], z[0], z[1], mu.0, mu.1)
    } else {
        let (r2, r1) =
            residuals_user1_last(a[1], a[0], p.alpha12, b[1], b[0], z[1], z[0], mu.1, mu.0);
        (r1, r2)
    }
}

#[allow(clippy::too_many_arguments)]
fn residuals_user1_last(
    alpha1: f64,
    alpha2: f64,
    alpha21: f64,
    beta1: f64,
    beta2: f64,
    z1: f64,
    z2: f64,
    mu1: f64,
    mu2: f64,
) -> (f64, f64) {
    let u = 1.0 + mu1 * z1;
    let s = 1.0 + mu2 * z2 / u;
    let r1 = z1 / alpha1 * u.powf(-(beta1 + 1.0))
        - s.powf(-(beta2 + 1.0)) * mu2 * z2 * z1 / (u * u) / alpha21
        - 1.0;
    let r2 = s.powf(-(beta2 + 1.0)) * z2 / (u * alpha2) - 1.0;
    (r1, r2)
}

/// Closed-form two-user levels with user 1 decoded last.
pub fn two_user_closed_form(alpha: [f64; 2], beta: [f64; 2], z: [f64; 2]) -> (f64, f64) {
    let (a1, a2) = (alpha[0], alpha[1]);
    let (b1, b2) = (beta[0], beta[1]);
    let (z1, z2) = (z[0], z[1]);
    let mu1 = if z1 > a1 {
        1.0 / (a1.powf(1.0 / (b1 + 1.0)) * z1.powf(b1 / (b1 + 1.0))) - 1.0 / z1
    } else {
        0.0
    };
    let lead = 1.0 / (a2.powf(1.0 / (b2 + 1.0)) * z2.powf(b2 / (b2 + 1.0)));
    let mu2 = if z1 <= a1 && z2 > a2 {
        lead - 1.0 / z2
    } else if z1 > a1 && z2 / a2 > (z1 / a1).powf(1.0 / (b1 + 1.0)) {
        (z1 / a1).powf(b2 / ((b1 + 1.0) * (b2 + 1.0))) * lead
            - (z1 / a1).powf(1.0 / (b1 + 1.0)) / z2
    } else {
        0.0
    };
    (mu1, mu2)
}

/// Quadrature that splits at the kinks of a two-user fixed-order policy:
/// the last user's threshold along its own axis, and the first user's
/// interference-scaled threshold along the other.
fn fixed_order_integrator(
    model: &FadingModel,
    spec: &IntegrationSpec,
    order: &DecodingOrder,
    alpha: &[f64],
    beta: &[f64],
) -> Result<Integrator> {
    let (first, last) = (order.first(), order.last());
    let (al, bl, af) = (alpha[last], beta[last], alpha[first]);
    Integrator::with_breaks(model, spec, last, &[al], move |zl| {
        let mu = single_user_level(zl, al, bl);
        vec![af * (1.0 + mu * zl)]
    })
}

fn uses_quadrature(scn: &Scenario) -> bool {
    match scn.integration.method {
        Method::Auto => scn.m() <= 2,
        Method::Quadrature => true,
        Method::MonteCarlo => false,
    }
}

/// Fixed-order power control: each user's level depends on its own gain
/// normalized by the interference of users decoded after it. Thresholds are
/// chosen so every average power constraint binds.
pub fn fixed_order_policy(scn: &Scenario, order: &DecodingOrder) -> Result<PowerPolicy> {
    let m = scn.m();
    if order.len() != m {
        return usage(format!("order {order} does not cover {m} users"));
    }
    let beta = scn.system.betas();
    let snr = scn.system.snrs();
    let mut alpha = vec![1.0; m];
    let exact = m <= 2 && uses_quadrature(scn);
    let pi = order.as_slice();

    // users already fixed contribute interference to earlier-decoded ones
    let pts_integ = if exact { None } else { Some(scn.integrator()?) };
    let mut interference: Vec<f64> = pts_integ
        .as_ref()
        .map(|i| vec![0.0; i.points().len()])
        .unwrap_or_default();

    for k in (0..m).rev() {
        let u = pi[k];
        let solve = |mean_power: &mut dyn FnMut(f64) -> Result<f64>| -> Result<f64> {
            let mut err = None;
            let r = monotone_root_log(
                |a| match mean_power(a) {
                    Ok(p) => p / snr[u] - 1.0,
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                },
                1.0,
                false,
                ALPHA_RANGE,
                1e-13,
            );
            if let Some(e) = err {
                return Err(e);
            }
            r.map_err(|e| {
                Error::Bracket(format!(
                    "user {}: power constraint unattainable ({e})",
                    u + 1
                ))
            })
        };
        alpha[u] = if exact && k == m - 1 {
            let marg = scn.fading.marginal(u);
            solve(&mut |a| {
                let integ = Integrator::with_breaks_1d(&marg, &scn.integration, &[a])?;
                Ok(integ.expect(|z| single_user_level(z[0], a, beta[u]))?.value)
            })?
        } else if exact {
            let mut trial = alpha.clone();
            solve(&mut |a| {
                trial[u] = a;
                let integ =
                    fixed_order_integrator(&scn.fading, &scn.integration, order, &trial, &beta)?;
                let last = pi[1];
                let (al, bl) = (trial[last], beta[last]);
                Ok(integ
                    .expect(|z| {
                        let i = single_user_level(z[last], al, bl) * z[last];
                        fixed_order_level(z[u], i, a, beta[u])
                    })?
                    .value)
            })?
        } else {
            let integ = pts_integ.as_ref().unwrap();
            let pts = integ.points();
            let a = solve(&mut |a| {
                let mut acc = 0.0;
                for (i, (z, w)) in pts.iter().enumerate() {
                    acc += w * fixed_order_level(z[u], interference[i], a, beta[u]);
                }
                Ok(acc)
            })?;
            for (i, (z, _)) in pts.iter().enumerate() {
                interference[i] += fixed_order_level(z[u], interference[i], a, beta[u]) * z[u];
            }
            a
        };
    }
    Ok(PowerPolicy::FixedOrder {
        order: order.clone(),
        alpha,
        beta,
    })
}

/// Integrator suited to a policy's kinks and decoding boundaries.
pub fn policy_integrator(scn: &Scenario, policy: &PowerPolicy) -> Result<Integrator> {
    match policy {
        PowerPolicy::FixedOrder { alpha, .. } if scn.m() == 1 && uses_quadrature(scn) => {
            Integrator::with_breaks_1d(&scn.fading, &scn.integration, &[alpha[0]])
        }
        PowerPolicy::FixedOrder { order, alpha, beta } if scn.m() == 2 && uses_quadrature(scn) => {
            fixed_order_integrator(&scn.fading, &scn.integration, order, alpha, beta)
        }
        _ => policy.partition().integrator(scn),
    }
}

/// Per-user effective capacities under a power policy.
pub fn policy_capacities(scn: &Scenario, policy: &PowerPolicy) -> Result<Vec<EffCap>> {
    if policy.users() != scn.m() {
        return usage("policy and scenario differ in user count");
    }
    let integ = policy_integrator(scn, policy)?;
    let m = scn.m();
    let (mut mu, mut r) = (vec![0.0; m], vec![0.0; m]);
    (0..m)
        .map(|j| {
            effective_capacity_with(&integ, scn.system.beta(j), |z| {
                policy.rates_into(z, &mut mu, &mut r);
                r[j]
            })
        })
        .collect()
}

/// Average transmit SNR of each user under a policy.
pub fn mean_powers(scn: &Scenario, policy: &PowerPolicy) -> Result<Vec<f64>> {
    let integ = policy_integrator(scn, policy)?;
    let m = scn.m();
    let mut mu = vec![0.0; m];
    (0..m)
        .map(|j| {
            Ok(integ
                .expect(|z| {
                    policy.levels_into(z, &mut mu);
                    mu[j]
                })?
                .value)
        })
        .collect()
}

/// Iteration controls for [`variable_order_policy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative change of `φ` at which the outer loop stops.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Relative power-constraint gap at which the inner loop stops.
    pub inner_tol: f64,
    pub max_rounds: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            outer_tol: 1e-6,
            max_outer: 100,
            inner_tol: 1e-9,
            max_rounds: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableOrderResult {
    /// Present only when the solver converged.
    pub policy: Option<PowerPolicy>,
    pub report: KktReport,
}

/// Fine integration points with their decoding region cached.
struct StateSet {
    z: Vec<[f64; 2]>,
    w: Vec<f64>,
    last: Vec<usize>,
}

impl StateSet {
    fn new(integ: &Integrator, part: &DecodingPartition) -> Self {
        let pts = integ.points();
        Self {
            z: pts.iter().map(|(z, _)| [z[0], z[1]]).collect(),
            w: pts.weights().to_vec(),
            last: pts.iter().map(|(z, _)| part.order2_at(z)[1]).collect(),
        }
    }

    fn mean_levels(&self, p: &VariableParams) -> [f64; 2] {
        let mut acc = [0.0; 2];
        for ((z, w), &last) in self.z.iter().zip(&self.w).zip(&self.last) {
            let (m1, m2) = p.levels(z, last);
            acc[0] += w * m1;
            acc[1] += w * m2;
        }
        acc
    }

    /// `E{2^{-β_j r_j}}` for both users.
    fn phis(&self, p: &VariableParams) -> [f64; 2] {
        let mut acc = [0.0; 2];
        for ((z, w), &last) in self.z.iter().zip(&self.w).zip(&self.last) {
            let (m1, m2) = p.levels(z, last);
            let (s1, s2) = (m1 * z[0], m2 * z[1]);
            let (r1, r2) = if last == 0 {
                (s1, s2 / (1.0 + s1))
            } else {
                (s1 / (1.0 + s2), s2)
            };
            acc[0] += w * (1.0 + r1).powf(-p.beta[0]);
            acc[1] += w * (1.0 + r2).powf(-p.beta[1]);
        }
        acc
    }

    fn max_residual(&self, p: &VariableParams) -> f64 {
        let mut worst: f64 = 0.0;
        for (z, &last) in self.z.iter().zip(&self.last) {
            let mu = p.levels(z, last);
            let (r1, r2) = kkt_residuals(p, z, mu, last);
            let e1 = if mu.0 > 0.0 { r1.abs() } else { r1.max(0.0) };
            let e2 = if mu.1 > 0.0 { r2.abs() } else { r2.max(0.0) };
            worst = worst.max(e1).max(e2);
        }
        worst
    }
}

/// Single-user threshold meeting `E{level} = snr` on a marginal.
fn single_user_alpha(
    model: &FadingModel,
    spec: &IntegrationSpec,
    snr: f64,
    beta: f64,
) -> Result<f64> {
    let mut err = None;
    let r = monotone_root_log(
        |a| match Integrator::with_breaks_1d(model, spec, &[a])
            .and_then(|i| i.expect(|z| single_user_level(z[0], a, beta)))
        {
            Ok(e) => e.value / snr - 1.0,
            Err(e) => {
                err = Some(e);
                0.0
            }
        },
        1.0,
        false,
        ALPHA_RANGE,
        1e-13,
    );
    match err {
        Some(e) => Err(e),
        None => r,
    }
}

/// Two-user power control for a fixed state-dependent decoding partition.
///
/// Outer loop: `φ` is re-evaluated from the current policy and its ratio
/// advanced by a secant step. Inner loop: alternating bracketed solves for each
/// user's threshold until both power constraints bind. The multipliers are
/// recovered from the thresholds as `κ_j = α_j λ_j / (φ_j ln 2)`.
pub fn variable_order_policy(
    scn: &Scenario,
    part: &DecodingPartition,
    lambda: &[f64],
    opts: &SolverOptions,
) -> Result<VariableOrderResult> {
    if scn.m() != 2 {
        return usage("variable-order power control is implemented for two users");
    }
    check_weights(lambda, 2)?;
    if lambda.iter().any(|l| *l <= 0.0) {
        return usage("variable-order power control needs strictly positive weights");
    }
    part.validate(2)?;
    let lambda = [lambda[0], lambda[1]];
    let beta = [scn.system.beta(0), scn.system.beta(1)];
    let snr = [scn.system.snr(0), scn.system.snr(1)];
    let integ = part.integrator(scn)?;
    let states = StateSet::new(&integ, part);

    // start from constant power for φ and from single-user thresholds
    let const_policy = PowerPolicy::Constant {
        snr: snr.to_vec(),
        partition: part.clone(),
    };
    let mut phi = {
        let mut acc = [0.0; 2];
        let (mut mu, mut r) = ([0.0; 2], [0.0; 2]);
        for (z, w) in states.z.iter().zip(&states.w) {
            const_policy.rates_into(z, &mut mu, &mut r);
            for j in 0..2 {
                acc[j] += w * 2f64.powf(-beta[j] * r[j]);
            }
        }
        acc
    };
    let mut alpha = [0.0; 2];
    for j in 0..2 {
        alpha[j] = single_user_alpha(&scn.fading.marginal(j), &scn.integration, snr[j], beta[j])?;
    }

    let mut report = KktReport {
        max_residual: f64::NAN,
        constraint_gap: vec![f64::NAN; 2],
        outer_iterations: 0,
        inner_rounds: 0,
        converged: false,
        phi_history: Vec::new(),
        message: None,
    };
    // the policy sees φ only through ρ = φ1 λ2 / (φ2 λ1), so the outer
    // update is a secant iteration on ln ρ, damped while no slope is known
    let log_rho = |phi: [f64; 2]| (phi[0] * lambda[1] / (phi[1] * lambda[0])).ln();
    let mut prev: Option<(f64, f64)> = None;
    for _ in 0..opts.max_outer {
        report.outer_iterations += 1;
        let (new_alpha, rounds, gaps) =
            match solve_thresholds(&states, lambda, beta, phi, snr, alpha, opts) {
                Ok(r) => r,
                Err(e) => {
                    report.message = Some(e.to_string());
                    return Ok(VariableOrderResult {
                        policy: None,
                        report,
                    });
                }
            };
        alpha = new_alpha;
        report.inner_rounds += rounds;
        report.constraint_gap = gaps.to_vec();
        let params = VariableParams::from_alpha(lambda, beta, phi, alpha);
        let fresh = states.phis(&params);
        let change = ((fresh[0] - phi[0]) / phi[0])
            .abs()
            .max(((fresh[1] - phi[1]) / phi[1]).abs());
        report.phi_history.push(change);
        if change < opts.outer_tol {
            report.max_residual = states.max_residual(&params);
            report.converged = gaps.iter().all(|g| *g < 1e-3);
            let policy = PowerPolicy::VariableOrder {
                partition: part.clone(),
                params,
            };
            return Ok(VariableOrderResult {
                policy: report.converged.then_some(policy),
                report,
            });
        }
        let t = log_rho(phi);
        let g = log_rho(fresh) - t;
        let next = match prev {
            Some((tp, gp)) if g != gp => {
                let secant = t - g * (t - tp) / (g - gp);
                // keep the step within a few fixed-point steps
                t + (secant - t).clamp(-4.0 * g.abs(), 4.0 * g.abs())
            }
            _ => t + 0.5 * g,
        };
        prev = Some((t, g));
        // move to the fresh φ, then shift the ratio to the secant target
        let shift = 0.5 * (next - (t + g));
        phi = [fresh[0] * shift.exp(), fresh[1] * (-shift).exp()];
    }
    report.message = Some(format!(
        "phi did not settle within {} outer iterations",
        opts.max_outer
    ));
    Ok(VariableOrderResult {
        policy: None,
        report,
    })
}

fn solve_thresholds(
    states: &StateSet,
    lambda: [f64; 2],
    beta: [f64; 2],
    phi: [f64; 2],
    snr: [f64; 2],
    start: [f64; 2],
    opts: &SolverOptions,
) -> Result<([f64; 2], usize, [f64; 2])> {
    let mut alpha = start;
    let gaps = |alpha: [f64; 2]| {
        let m = states.mean_levels(&VariableParams::from_alpha(lambda, beta, phi, alpha));
        [m[0] / snr[0] - 1.0, m[1] / snr[1] - 1.0]
    };
    let mut g = gaps(alpha);
    for round in 1..=opts.max_rounds {
        for j in 0..2 {
            let mut trial = alpha;
            alpha[j] = monotone_root_log_from(
                |a| {
                    trial[j] = a;
                    gaps(trial)[j]
                },
                alpha[j],
                false,
                ALPHA_RANGE,
                opts.inner_tol * 1e-3,
                0.02,
            )
            .map_err(|e| Error::Bracket(format!("user {} threshold: {e}", j + 1)))?;
        }
        g = gaps(alpha);
        if g[0].abs() < opts.inner_tol && g[1].abs() < opts.inner_tol {
            return Ok((alpha, round, [g[0].abs(), g[1].abs()]));
        }
    }
    Err(Error::NotConverged {
        solver: "power thresholds",
        iterations: opts.max_rounds,
        residual: g[0].abs().max(g[1].abs()),
        history: Vec::new(),
    })
}

/// Rays `z2 = c z1` with `c` log-spaced on `[lo, hi]`.
pub fn ray_family(n: usize, lo: f64, hi: f64) -> Vec<DecodingPartition> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            DecodingPartition::ray((lo.ln() + t * (hi / lo).ln()).exp())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionCandidate {
    pub partition: DecodingPartition,
    pub weighted_sum: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSearch {
    pub best: usize,
    pub weighted_sum: f64,
    pub capacities: Vec<EffCap>,
    pub candidates: Vec<PartitionCandidate>,
}

/// Best partition of a finite family for weights `lambda`, under
/// variable-order power control. Non-converged candidates are skipped.
pub fn partition_search(
    scn: &Scenario,
    lambda: &[f64],
    family: &[DecodingPartition],
    opts: &SolverOptions,
) -> Result<PartitionSearch> {
    if family.is_empty() {
        return usage("partition family is empty");
    }
    let mut candidates = Vec::with_capacity(family.len());
    let mut best: Option<(usize, f64, Vec<EffCap>)> = None;
    for (i, part) in family.iter().enumerate() {
        let res = variable_order_policy(scn, part, lambda, opts)?;
        let entry = match res.policy {
            Some(policy) => {
                let caps = policy_capacities(scn, &policy)?;
                let w = weighted_sum(lambda, &caps);
                if best.as_ref().is_none_or(|b| w > b.1) {
                    best = Some((i, w, caps));
                }
                PartitionCandidate {
                    partition: part.clone(),
                    weighted_sum: Some(w),
                    error: None,
                }
            }
            None => PartitionCandidate {
                partition: part.clone(),
                weighted_sum: None,
                error: res.report.message.or(Some("not converged".into())),
            },
        };
        candidates.push(entry);
    }
    let (best, weighted_sum, capacities) = best.ok_or_else(|| Error::NotConverged {
        solver: "partition search",
        iterations: family.len(),
        residual: f64::NAN,
        history: Vec::new(),
    })?;
    Ok(PartitionSearch {
        best,
        weighted_sum,
        capacities,
        candidates,
    })
}

/// Policy tabulated on an `n x n` grid over `[0, z_max]^2`, row-major in `z1`.
pub fn policy_grid(policy: &PowerPolicy, z_max: f64, n: usize) -> Vec<[f64; 4]> {
    let step = z_max / (n.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for k in 0..n {
            let z = [i as f64 * step, k as f64 * step];
            let mu = policy.evaluate(&z);
            out.push([z[0], z[1], mu[0], mu[1]]);
        }
    }
    out
}

/// Writes a policy grid as CSV with header `z1,z2,mu1,mu2`.
pub fn write_policy_csv<W: Write>(mut w: W, grid: &[[f64; 4]]) -> std::io::Result<()> {
    writeln!(w, "z1,z2,mu1,mu2")?;
    for r in grid {
        writeln!(w, "{},{},{},{}", r[0], r[1], r[2], r[3])?;
    }
    Ok(())
}
