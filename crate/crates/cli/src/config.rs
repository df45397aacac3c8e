//! Experiment configuration. SNRs are given in dB here and converted to
//! linear exactly once, in [`ExperimentConfig::scenario`].

use std::path::{Path, PathBuf};

use effcap::{
    FadingModel, IntegrationSpec, Marginal, Scenario, Strategy, SystemConfig, UserParams,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub snr_db: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerMode {
    FixedOrder,
    VariableOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSpec {
    pub mode: PowerMode,
    /// Weights for the variable-order solver; the partition is the λ-rule.
    pub lambda: Vec<f64>,
    /// Decoding order for fixed-order mode, 1-based labels, first decoded first.
    pub order: Vec<usize>,
    pub tb_sweep: Vec<f64>,
    /// Policy grid covers `[0, grid_max]^2` with `grid_points` per axis.
    pub grid_max: f64,
    pub grid_points: usize,
    pub max_outer: usize,
}

impl Default for PowerSpec {
    fn default() -> Self {
        Self {
            mode: PowerMode::VariableOrder,
            lambda: vec![0.5, 0.5],
            order: vec![2, 1],
            tb_sweep: vec![100.0, 200.0, 400.0],
            grid_max: 4.0,
            grid_points: 41,
            max_outer: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueueSpec {
    pub rhos: Vec<f64>,
    pub seeds: usize,
    pub frames: usize,
    /// Served user, 0-based.
    pub user: usize,
    /// Weights the multi-user policies are optimized for.
    pub lambda: Vec<f64>,
}

impl Default for QueueSpec {
    fn default() -> Self {
        Self {
            rhos: vec![1.0],
            seeds: 20,
            frames: 1_000_000,
            user: 0,
            lambda: vec![0.5, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub users: Vec<UserSpec>,
    pub tb_product: f64,
    pub fading: Marginal,
    pub integration: IntegrationSpec,
    pub strategies: Vec<Strategy>,
    /// `λ1` values for the region trace and the K curve.
    pub lambda_grid: Vec<f64>,
    /// Common `θ` values for the sum-rate sweep.
    pub theta_grid: Vec<f64>,
    pub power: PowerSpec,
    pub queue: QueueSpec,
    /// Not echoed into outputs, so results do not depend on where they land.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    /// Monte Carlo seed and first queue seed.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            users: vec![
                UserSpec {
                    snr_db: 0.0,
                    theta: 0.01,
                },
                UserSpec {
                    snr_db: 0.0,
                    theta: 0.01,
                },
            ],
            tb_product: effcap::DEFAULT_TB_PRODUCT,
            fading: Marginal::Exponential { mean: 1.0 },
            integration: IntegrationSpec::default(),
            strategies: vec![
                Strategy::FixedOrderTs,
                Strategy::VariableOptimal,
                Strategy::VariableLambdaRule,
                Strategy::Tdma,
            ],
            lambda_grid: (0..=20).map(|i| i as f64 / 20.0).collect(),
            theta_grid: (1..=20).map(|i| i as f64 / 1000.0).collect(),
            power: PowerSpec::default(),
            queue: QueueSpec::default(),
            out: PathBuf::from("out"),
            seed: 1,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tb: Option<f64>,
    pub strategies: Option<Vec<Strategy>>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, over: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        if let Some(out) = &over.out {
            cfg.out = out.clone();
        }
        if let Some(seed) = over.seed {
            cfg.seed = seed;
        }
        if let Some(tb) = over.tb {
            cfg.tb_product = tb;
            cfg.power.tb_sweep = vec![tb];
        }
        if let Some(s) = &over.strategies {
            cfg.strategies = s.clone();
        }
        cfg.integration.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if self.strategies.is_empty() {
            return bad("strategy list is empty".into());
        }
        if self.users.iter().any(|u| !u.snr_db.is_finite()) {
            return bad("snr_db must be finite".into());
        }
        if self.lambda_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return bad("lambda_grid values must lie in [0, 1]".into());
        }
        if self.theta_grid.is_empty() || self.theta_grid.iter().any(|t| !(*t > 0.0)) {
            return bad("theta_grid must hold positive values".into());
        }
        if self.power.tb_sweep.iter().any(|t| !(*t > 0.0)) || self.power.grid_points < 2 {
            return bad("power.tb_sweep must be positive and power.grid_points at least 2".into());
        }
        if self.queue.seeds == 0 || self.queue.frames == 0 {
            return bad("queue.seeds and queue.frames must be positive".into());
        }
        self.scenario()?;
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        self.scenario_with(self.tb_product, None)
    }

    /// Scenario with the given TB product and, optionally, a common `θ`.
    pub fn scenario_with(&self, tb: f64, theta: Option<f64>) -> Result<Scenario, CliError> {
        let users = self
            .users
            .iter()
            .map(|u| UserParams {
                snr: 10f64.powf(u.snr_db / 10.0),
                theta: theta.unwrap_or(u.theta),
            })
            .collect();
        let system = SystemConfig::new(users, tb)?;
        let fading = FadingModel::new(vec![self.fading; self.users.len()])?;
        Ok(Scenario::new(system, fading, self.integration.clone())?)
    }

    pub fn require_two_users(&self, command: &str) -> Result<(), CliError> {
        if self.users.len() != 2 {
            return Err(CliError::Usage(format!(
                "{command} needs exactly two users, config has {}",
                self.users.len()
            )));
        }
        Ok(())
    }
}
