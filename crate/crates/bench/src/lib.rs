//! Shared fixtures for the criterion benchmarks.

use effcap::{Scenario, SystemConfig, UserParams};

/// Two Rayleigh users at the given SNRs in dB with a common `theta`.
pub fn two_user(snr_db: [f64; 2], theta: f64) -> Scenario {
    let users = snr_db
        .iter()
        .map(|d| UserParams {
            snr: 10f64.powf(d / 10.0),
            theta,
        })
        .collect();
    Scenario::rayleigh(SystemConfig::new(users, effcap::DEFAULT_TB_PRODUCT).unwrap()).unwrap()
}
