//! Service-rate functions and effective-capacity primitives.
//!
//! Rates are normalized per Hz (bits/s/Hz). The QoS exponent `θ_j` and the
//! time-bandwidth product enter only through `β_j = θ_j·TB / ln 2`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelState, FadingModel};
use crate::error::{usage, Result};
use crate::integrate::{Estimate, IntegrationSpec, Integrator};

/// Default time-bandwidth product. With `θ = 0.01` it gives `β ≈ 2.885`.
pub const DEFAULT_TB_PRODUCT: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserParams {
    /// Average transmit SNR, linear.
    pub snr: f64,
    /// QoS exponent in 1/bit.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub users: Vec<UserParams>,
    pub tb_product: f64,
}

impl SystemConfig {
    pub fn new(users: Vec<UserParams>, tb_product: f64) -> Result<Self> {
        let cfg = Self { users, tb_product };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `m` identical users.
    pub fn symmetric(m: usize, snr: f64, theta: f64, tb_product: f64) -> Result<Self> {
        Self::new(vec![UserParams { snr, theta }; m], tb_product)
    }

    /// Config whose normalized exponents are exactly `betas`.
    pub fn from_betas(snrs: &[f64], betas: &[f64]) -> Result<Self> {
        if snrs.len() != betas.len() {
            return usage("snr and beta lists differ in length");
        }
        // with TB = ln 2, β_j = θ_j
        let users = snrs
            .iter()
            .zip(betas)
            .map(|(&snr, &theta)| UserParams { snr, theta })
            .collect();
        Self::new(users, LN_2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users.is_empty() {
            return usage("at least one user is required");
        }
        if !(self.tb_product > 0.0 && self.tb_product.is_finite()) {
            return usage(format!(
                "tb_product must be positive, got {}",
                self.tb_product
            ));
        }
        for (j, u) in self.users.iter().enumerate() {
            if !(u.snr > 0.0 && u.snr.is_finite()) {
                return usage(format!(
                    "user {}: snr must be positive, got {}",
                    j + 1,
                    u.snr
                ));
            }
            if !(u.theta > 0.0 && u.theta.is_finite()) {
                return usage(format!(
                    "user {}: theta must be positive, got {}",
                    j + 1,
                    u.theta
                ));
            }
            let b = self.beta(j);
            if !(b > 0.0 && b.is_finite()) {
                return usage(format!(
                    "user {}: beta = {b} is not finite and positive",
                    j + 1
                ));
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.users.len()
    }

    pub fn snr(&self, j: usize) -> f64 {
        self.users[j].snr
    }

    pub fn snrs(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.snr).collect()
    }

    pub fn beta(&self, j: usize) -> f64 {
        self.users[j].theta * self.tb_product / LN_2
    }

    pub fn betas(&self) -> Vec<f64> {
        (0..self.m()).map(|j| self.beta(j)).collect()
    }

    /// Same config with every user's `θ` replaced.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        let users = self
            .users
            .iter()
            .map(|u| UserParams { theta, ..*u })
            .collect();
        Self::new(users, self.tb_product)
    }

    pub(crate) fn common_theta(&self) -> Option<f64> {
        let t = self.users[0].theta;
        self.users
            .iter()
            .all(|u| (u.theta - t).abs() <= 1e-12 * t)
            .then_some(t)
    }
}

/// Successive decoding order, 0-based: `pi[0]` is decoded first, `pi[M-1]`
/// last (interference-free).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecodingOrder(Vec<usize>);

impl DecodingOrder {
    pub fn new(pi: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; pi.len()];
        for &p in &pi {
            if p >= pi.len() || seen[p] {
                return usage(format!("{pi:?} is not a permutation of 0..{}", pi.len()));
            }
            seen[p] = true;
        }
        Ok(Self(pi))
    }

    /// From 1-based user labels, as written in configs and reports.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.contains(&0) {
            return usage("decoding order labels are 1-based");
        }
        Self::new(labels.iter().map(|l| l - 1).collect())
    }

    pub fn identity(m: usize) -> Self {
        Self((0..m).collect())
    }

    /// All `M!` orders in lexicographic order.
    pub fn all(m: usize) -> Vec<Self> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..m).collect();
        loop {
            out.push(Self(cur.clone()));
            // next lexicographic permutation
            let Some(i) = (1..m).rev().find(|&i| cur[i - 1] < cur[i]) else {
                break;
            };
            let j = (i..m).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.0.iter().map(|p| p + 1).collect()
    }

    /// `inverse()[user]` is the decoding position of `user`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.0.len()];
        for (k, &p) in self.0.iter().enumerate() {
            inv[p] = k;
        }
        inv
    }

    pub fn last(&self) -> usize {
        *self.0.last().unwrap()
    }

    pub fn first(&self) -> usize {
        self.0[0]
    }
}

impl std::fmt::Display for DecodingOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let l: Vec<String> = self.labels().iter().map(|l| l.to_string()).collect();
        write!(f, "({})", l.join(","))
    }
}

/// Per-user normalized instantaneous rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub r: Vec<f64>,
}

/// SIC rates for received SNRs `s_j = snr_j · z_j` (or `μ_j z_j`), written into `out`.
pub fn sic_rates_into(received: &[f64], order: &[usize], out: &mut [f64]) {
    let mut interference = 0.0;
    for &u in order.iter().rev() {
        out[u] = (received[u] / (1.0 + interference)).ln_1p() / LN_2;
        interference += received[u];
    }
}

/// Instantaneous successive-decoding rates.
pub fn instant_rates(
    cfg: &SystemConfig,
    order: &DecodingOrder,
    state: &ChannelState,
) -> Result<RatePoint> {
    let m = cfg.m();
    if order.len() != m || state.len() != m {
        return usage(format!(
            "dimension mismatch: {m} users, order of {}, state of {}",
            order.len(),
            state.len()
        ));
    }
    let received: Vec<f64> = (0..m).map(|j| cfg.snr(j) * state[j]).collect();
    let mut r = vec![0.0; m];
    sic_rates_into(&received, order.as_slice(), &mut r);
    Ok(RatePoint { r })
}

/// `δ log2(1 + s/δ)` for received SNR `s`; zero at `δ = 0`.
pub fn tdma_rate(received: f64, delta: f64) -> f64 {
    if delta <= 0.0 {
        0.0
    } else {
        delta * (received / delta).ln_1p() / LN_2
    }
}

/// Rate of `user` when it holds the channel alone for a fraction `delta` of the frame.
pub fn tdma_instant_rate(
    cfg: &SystemConfig,
    user: usize,
    delta: f64,
    state: &ChannelState,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&delta) {
        return usage(format!("time fraction must be in [0, 1], got {delta}"));
    }
    if user >= cfg.m() || state.len() != cfg.m() {
        return usage("user index or state dimension out of range");
    }
    Ok(tdma_rate(cfg.snr(user) * state[user], delta))
}

/// An effective capacity with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffCap {
    pub value: f64,
    pub error: f64,
    /// `E{2^{-β r}}` left the floating-point range; `value` is reported as 0.
    pub underflow: bool,
}

/// `-(1/β) log2 E{2^{-β r(z)}}` from an estimate of `ln E{2^{-β r}}`.
pub fn capacity_from_log_moment(beta: f64, log_moment: Estimate) -> EffCap {
    let scale = beta * LN_2;
    let value = -log_moment.value / scale;
    if !value.is_finite() {
        return EffCap {
            value: 0.0,
            error: 0.0,
            underflow: true,
        };
    }
    EffCap {
        value: value.max(0.0),
        error: log_moment.error / scale,
        underflow: false,
    }
}

/// `ln E{2^{-β r(z)}}`, evaluated in log space.
pub fn log_moment<F>(integ: &Integrator, beta: f64, mut rate: F) -> Result<Estimate>
where
    F: FnMut(&[f64]) -> f64,
{
    let s = beta * LN_2;
    integ.log_expect_exp(|z| -s * rate(z))
}

/// Effective capacity of a rate process with normalized exponent `beta`.
pub fn effective_capacity_with<F>(integ: &Integrator, beta: f64, rate: F) -> Result<EffCap>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(beta > 0.0) {
        return usage(format!("beta must be positive, got {beta}"));
    }
    Ok(capacity_from_log_moment(
        beta,
        log_moment(integ, beta, rate)?,
    ))
}

/// Effective capacity of user `user` under `rate_fn`.
pub fn effective_capacity<F>(
    cfg: &SystemConfig,
    user: usize,
    model: &FadingModel,
    rate_fn: F,
    spec: &IntegrationSpec,
) -> Result<EffCap>
where
    F: FnMut(&[f64]) -> f64,
{
    if user >= cfg.m() || model.users() != cfg.m() {
        return usage("user index or fading dimension does not match the config");
    }
    let integ = Integrator::new(model, spec)?;
    effective_capacity_with(&integ, cfg.beta(user), rate_fn)
}

/// System, fading and numerics bundled for the policy evaluators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub system: SystemConfig,
    pub fading: FadingModel,
    pub integration: IntegrationSpec,
}

impl Scenario {
    pub fn new(
        system: SystemConfig,
        fading: FadingModel,
        integration: IntegrationSpec,
    ) -> Result<Self> {
        system.validate()?;
        integration.validate()?;
        if fading.users() != system.m() {
            return usage(format!(
                "fading model has {} users, system has {}",
                fading.users(),
                system.m()
            ));
        }
        Ok(Self {
            system,
            fading,
            integration,
        })
    }

    /// Unit-mean Rayleigh fading with default numerics.
    pub fn rayleigh(system: SystemConfig) -> Result<Self> {
        let fading = FadingModel::rayleigh(system.m(), 1.0)?;
        Self::new(system, fading, IntegrationSpec::default())
    }

    pub fn m(&self) -> usize {
        self.system.m()
    }

    pub fn integrator(&self) -> Result<Integrator> {
        Integrator::new(&self.fading, &self.integration)
    }

    pub fn with_system(&self, system: SystemConfig) -> Result<Self> {
        Self::new(system, self.fading.clone(), self.integration.clone())
    }
}
