//! Fading-state distributions.
//!
//! A fading state is the vector of per-user channel power gains `z_j = |h_j|^2`.
//! Users fade independently; each marginal is exponential (Rayleigh amplitude)
//! with a configurable mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

/// States drawn per random stream. Batch `b` of a seed always uses stream `b`,
/// so any batch can be regenerated on its own.
pub const SAMPLE_BATCH: usize = 4096;

/// Per-user marginal distribution of the power gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Marginal {
    /// Exponential power gain (Rayleigh fading amplitude).
    #[serde(alias = "rayleigh")]
    Exponential { mean: f64 },
}

impl Marginal {
    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Exponential { mean } => mean,
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match *self {
            Marginal::Exponential { mean } if z >= 0.0 => (-z / mean).exp() / mean,
            Marginal::Exponential { .. } => 0.0,
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match *self {
            Marginal::Exponential { mean } if z > 0.0 => -(-z / mean).exp_m1(),
            Marginal::Exponential { .. } => 0.0,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Exponential { mean } => mean * rng.sample::<f64, _>(Exp1),
        }
    }
}

/// Independent per-user fading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingModel {
    pub per_user: Vec<Marginal>,
}

impl FadingModel {
    /// `users` independent exponential gains with common mean.
    pub fn rayleigh(users: usize, mean: f64) -> Result<Self> {
        Self::new(vec![Marginal::Exponential { mean }; users])
    }

    pub fn new(per_user: Vec<Marginal>) -> Result<Self> {
        if per_user.is_empty() {
            return usage("fading model needs at least one user");
        }
        for (j, m) in per_user.iter().enumerate() {
            let mean = m.mean();
            if !(mean.is_finite() && mean > 0.0) {
                return usage(format!(
                    "user {j}: fading mean must be finite and positive, got {mean}"
                ));
            }
        }
        Ok(Self { per_user })
    }

    pub fn users(&self) -> usize {
        self.per_user.len()
    }

    /// Joint density at `state`: the product of the marginal densities.
    pub fn pdf(&self, state: &ChannelState) -> Result<f64> {
        if state.len() != self.users() {
            return usage(format!(
                "state has {} components, model has {} users",
                state.len(),
                self.users()
            ));
        }
        Ok(self
            .per_user
            .iter()
            .zip(state.as_slice())
            .map(|(m, &z)| m.pdf(z))
            .product())
    }

    /// `count` states, deterministic in `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<ChannelState>> {
        if count == 0 {
            return usage("sample count must be at least 1");
        }
        let flat = self.sample_flat(count, seed);
        Ok(flat
            .chunks_exact(self.users())
            .map(|z| ChannelState(z.to_vec()))
            .collect())
    }

    /// Same stream as [`FadingModel::sample`], as a row-major `count x users` buffer.
    pub fn sample_flat(&self, count: usize, seed: u64) -> Vec<f64> {
        let m = self.users();
        let mut out = Vec::with_capacity(count * m);
        let batches = count.div_ceil(SAMPLE_BATCH);
        for b in 0..batches {
            let n = SAMPLE_BATCH.min(count - b * SAMPLE_BATCH);
            self.fill_batch(b as u64, seed, n, &mut out);
        }
        out
    }

    /// Regenerates batch `batch` of the stream for `seed`.
    pub fn sample_batch(&self, batch: u64, seed: u64) -> Vec<f64> {
        let mut out = Vec::with_capacity(SAMPLE_BATCH * self.users());
        self.fill_batch(batch, seed, SAMPLE_BATCH, &mut out);
        out
    }

    fn fill_batch(&self, batch: u64, seed: u64, n: usize, out: &mut Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(batch);
        for _ in 0..n {
            for m in &self.per_user {
                out.push(m.draw(&mut rng));
            }
        }
    }

    /// Marginal model of a single user.
    pub fn marginal(&self, user: usize) -> FadingModel {
        FadingModel {
            per_user: vec![self.per_user[user]],
        }
    }
}

/// Vector of nonnegative power gains, one per user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState(Vec<f64>);

impl ChannelState {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if let Some((j, z)) = z.iter().enumerate().find(|(_, z)| !(**z >= 0.0)) {
            return usage(format!(
                "channel gain z[{j}] = {z} is not a nonnegative number"
            ));
        }
        Ok(Self(z))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for ChannelState {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
