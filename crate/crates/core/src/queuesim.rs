//! Discrete-time buffer driven by constant arrivals and the channel's
//! per-frame service, with a tail-decay estimator for the queue length.

use serde::{Deserialize, Serialize};

use crate::channel::SAMPLE_BATCH;
use crate::effcap::{
    capacity_from_log_moment, log_moment, sic_rates_into, tdma_rate, DecodingOrder, EffCap,
    Scenario,
};
use crate::error::{usage, Error, Result};
use crate::integrate::Integrator;
use crate::powerctl::{policy_integrator, PowerPolicy};
use crate::solve::linear_fit;
use crate::strategies::{DecodingPartition, TimeSharing};

/// Frames simulated and discarded before recording.
pub const WARMUP_FRAMES: usize = 10_000;
/// Exceedances required at the largest grid point of a tail fit.
pub const MIN_EXCEEDANCES: usize = 100;

/// How the channel is shared in every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ServicePolicy {
    /// Superposition with a state-dependent decoding order.
    Partition {
        partition: DecodingPartition,
    },
    /// Superposition, each frame split between fixed orders.
    TimeSharing {
        tau: TimeSharing,
    },
    Tdma {
        delta: Vec<f64>,
    },
    Power {
        policy: PowerPolicy,
    },
    /// Constant normalized rate, independent of fading.
    Deterministic {
        rate: f64,
    },
}

/// Service process of one user's queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceModel {
    pub scenario: Scenario,
    pub user: usize,
    pub policy: ServicePolicy,
}

struct RateEval<'a> {
    model: &'a ServiceModel,
    orders: Vec<DecodingOrder>,
    snr: Vec<f64>,
    s: Vec<f64>,
    r: Vec<f64>,
    tmp: Vec<f64>,
}

impl<'a> RateEval<'a> {
    fn new(model: &'a ServiceModel) -> Self {
        let m = model.scenario.m();
        let orders = match &model.policy {
            ServicePolicy::TimeSharing { .. } => DecodingOrder::all(m),
            _ => Vec::new(),
        };
        Self {
            model,
            orders,
            snr: model.scenario.system.snrs(),
            s: vec![0.0; m],
            r: vec![0.0; m],
            tmp: vec![0.0; m],
        }
    }

    /// Normalized rate of the served user at state `z`.
    fn rate(&mut self, z: &[f64]) -> f64 {
        let j = self.model.user;
        for k in 0..z.len() {
            self.s[k] = self.snr[k] * z[k];
        }
        match &self.model.policy {
            ServicePolicy::Partition { partition } => {
                partition.rates_into(&self.s, z, &mut self.r);
                self.r[j]
            }
            ServicePolicy::TimeSharing { tau } => {
                let mut acc = 0.0;
                for (o, &t) in self.orders.iter().zip(&tau.tau) {
                    if t > 0.0 {
                        sic_rates_into(&self.s, o.as_slice(), &mut self.tmp);
                        acc += t * self.tmp[j];
                    }
                }
                acc
            }
            ServicePolicy::Tdma { delta } => tdma_rate(self.s[j], delta[j]),
            ServicePolicy::Power { policy } => {
                policy.rates_into(z, &mut self.s, &mut self.r);
                self.r[j]
            }
            ServicePolicy::Deterministic { rate } => *rate,
        }
    }
}

impl ServiceModel {
    pub fn new(scenario: Scenario, user: usize, policy: ServicePolicy) -> Result<Self> {
        let model = Self {
            scenario,
            user,
            policy,
        };
        model.validate()?;
        Ok(model)
    }

    /// A single Rayleigh user at constant power.
    pub fn single_user(scenario: Scenario) -> Result<Self> {
        if scenario.m() != 1 {
            return usage("single-user service needs a one-user scenario");
        }
        let partition = DecodingPartition::fixed(DecodingOrder::identity(1));
        Self::new(scenario, 0, ServicePolicy::Partition { partition })
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.scenario.m();
        if self.user >= m {
            return usage(format!(
                "user index {} out of range for {m} users",
                self.user
            ));
        }
        match &self.policy {
            ServicePolicy::Partition { partition } => partition.validate(m),
            ServicePolicy::TimeSharing { tau } => {
                if tau.tau.len() != DecodingOrder::all(m).len() {
                    return usage("time-sharing fractions do not match the user count");
                }
                TimeSharing::new(tau.tau.clone()).map(|_| ())
            }
            ServicePolicy::Tdma { delta } => {
                if delta.len() != m || delta.iter().any(|d| !(0.0..=1.0).contains(d)) {
                    return usage(format!("invalid time fractions {delta:?}"));
                }
                Ok(())
            }
            ServicePolicy::Power { policy } => {
                if policy.users() != m {
                    return usage("policy and scenario differ in user count");
                }
                Ok(())
            }
            ServicePolicy::Deterministic { rate } => {
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return usage(format!(
                        "deterministic rate must be finite and nonnegative, got {rate}"
                    ));
                }
                Ok(())
            }
        }
    }

    fn integrator(&self) -> Result<Integrator> {
        match &self.policy {
            ServicePolicy::Partition { partition } => partition.integrator(&self.scenario),
            ServicePolicy::Power { policy } => policy_integrator(&self.scenario, policy),
            _ => self.scenario.integrator(),
        }
    }

    /// QoS exponent of the served user.
    pub fn theta(&self) -> f64 {
        self.scenario.system.users[self.user].theta
    }

    pub fn effective_capacity(&self) -> Result<EffCap> {
        if let ServicePolicy::Deterministic { rate } = self.policy {
            return Ok(EffCap {
                value: rate,
                error: 0.0,
                underflow: false,
            });
        }
        let integ = self.integrator()?;
        let beta = self.scenario.system.beta(self.user);
        let mut eval = RateEval::new(self);
        Ok(capacity_from_log_moment(
            beta,
            log_moment(&integ, beta, |z| eval.rate(z))?,
        ))
    }

    /// Mean normalized rate.
    pub fn ergodic_rate(&self) -> Result<f64> {
        if let ServicePolicy::Deterministic { rate } = self.policy {
            return Ok(rate);
        }
        let mut eval = RateEval::new(self);
        Ok(self.integrator()?.expect(|z| eval.rate(z))?.value)
    }
}

/// Arrival rate fixed against a service model, ready to simulate any seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSetup {
    pub service: ServiceModel,
    pub rho: f64,
    /// Bits per frame.
    pub arrival: f64,
    pub effective_capacity: EffCap,
    /// Mean service in bits per frame.
    pub mean_service: f64,
}

impl QueueSetup {
    /// Loads the queue at `rho` times the served user's effective capacity.
    pub fn new(service: ServiceModel, rho: f64) -> Result<Self> {
        service.validate()?;
        if !(rho >= 0.0 && rho.is_finite()) {
            return usage(format!("arrival fraction must be nonnegative, got {rho}"));
        }
        let tb = service.scenario.system.tb_product;
        let effective_capacity = service.effective_capacity()?;
        let arrival = rho * tb * effective_capacity.value;
        let mean_service = tb * service.ergodic_rate()?;
        if arrival > 0.0 && arrival >= mean_service {
            return Err(Error::UnstableQueue {
                arrival,
                mean_service,
            });
        }
        Ok(Self {
            service,
            rho,
            arrival,
            effective_capacity,
            mean_service,
        })
    }

    /// Runs `frames` recorded frames after [`WARMUP_FRAMES`] of warm-up.
    pub fn run(&self, frames: usize, seed: u64) -> QueueRun {
        let tb = self.service.scenario.system.tb_product;
        let fading = &self.service.scenario.fading;
        let m = fading.users();
        let mut eval = RateEval::new(&self.service);
        let mut batch_idx = 0u64;
        let mut batch: Vec<f64> = Vec::new();
        let mut pos = SAMPLE_BATCH;
        let service = || {
            if pos == SAMPLE_BATCH {
                batch = fading.sample_batch(batch_idx, seed);
                batch_idx += 1;
                pos = 0;
            }
            let z = &batch[pos * m..(pos + 1) * m];
            pos += 1;
            tb * eval.rate(z)
        };
        let (queue, service) = simulate_with(self.arrival, frames, WARMUP_FRAMES, service);
        QueueRun {
            frames,
            warmup: WARMUP_FRAMES,
            seed,
            arrival: self.arrival,
            queue,
            service,
        }
    }

    /// Independent runs for several seeds, one thread per seed.
    pub fn run_seeds(&self, frames: usize, seeds: &[u64]) -> Vec<QueueRun> {
        std::thread::scope(|sc| {
            let handles: Vec<_> = seeds
                .iter()
                .map(|&seed| sc.spawn(move || self.run(frames, seed)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("queue thread panicked"))
                .collect()
        })
    }
}

/// One recorded sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueRun {
    pub frames: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Bits per frame.
    pub arrival: f64,
    /// Queue length in bits after each recorded frame.
    pub queue: Vec<f64>,
    /// Bits served in each recorded frame.
    pub service: Vec<f64>,
}

/// `max(q + arrival - service, 0)`.
pub fn lindley_step(q: f64, arrival: f64, service: f64) -> f64 {
    (q + arrival - service).max(0.0)
}

/// Queue starting empty, with `service()` drawn once per frame; returns the
/// recorded queue lengths and services after `warmup` discarded frames.
pub fn simulate_with<F: FnMut() -> f64>(
    arrival: f64,
    frames: usize,
    warmup: usize,
    mut service: F,
) -> (Vec<f64>, Vec<f64>) {
    let mut q = 0.0;
    for _ in 0..warmup {
        q = lindley_step(q, arrival, service());
    }
    let mut queue = Vec::with_capacity(frames);
    let mut served = Vec::with_capacity(frames);
    for _ in 0..frames {
        let s = service();
        q = lindley_step(q, arrival, s);
        queue.push(q);
        served.push(s);
    }
    (queue, served)
}

/// Loads `service` at `rho` of its effective capacity and runs one seed.
pub fn simulate(service: ServiceModel, rho: f64, frames: usize, seed: u64) -> Result<QueueRun> {
    Ok(QueueSetup::new(service, rho)?.run(frames, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub q: f64,
    pub count: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `ln P(Q ≥ q)` against `q`, per bit.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: Vec<TailPoint>,
}

/// Default grid: 20 empirical percentiles from the 90th to the 99.9th,
/// keeping only distinct positive levels.
pub fn percentile_grid(queue: &[f64]) -> Vec<f64> {
    let mut sorted = queue.to_vec();
    sorted.sort_by(f64::total_cmp);
    grid_from_sorted(&sorted)
}

fn grid_from_sorted(sorted: &[f64]) -> Vec<f64> {
    if sorted.is_empty() {
        return Vec::new();
    }
    let n = sorted.len();
    let mut grid: Vec<f64> = (0..20)
        .map(|i| {
            let p = 0.90 + (0.999 - 0.90) * i as f64 / 19.0;
            sorted[((p * (n - 1) as f64).floor() as usize).min(n - 1)]
        })
        .filter(|q| *q > 0.0)
        .collect();
    grid.dedup();
    grid
}

/// Least-squares tail slope of the queue-length distribution.
pub fn decay_exponent(run: &QueueRun, q_grid: Option<&[f64]>) -> Result<DecayFit> {
    let mut sorted = run.queue.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let grid = match q_grid {
        Some(g) => g.to_vec(),
        None => grid_from_sorted(&sorted),
    };
    let largest_usable = (n >= MIN_EXCEEDANCES)
        .then(|| sorted[n - MIN_EXCEEDANCES])
        .filter(|q| *q > 0.0);
    let count_at = |q: f64| n - sorted.partition_point(|x| *x < q);
    if grid.len() < 2 {
        let q = grid.last().copied().unwrap_or(0.0);
        return Err(Error::InsufficientTail {
            q,
            count: count_at(q),
            largest_usable,
        });
    }
    let points: Vec<TailPoint> = grid
        .iter()
        .map(|&q| {
            let count = count_at(q);
            TailPoint {
                q,
                count,
                prob: count as f64 / n as f64,
            }
        })
        .collect();
    let top = points.iter().max_by(|a, b| a.q.total_cmp(&b.q)).unwrap();
    if top.count < MIN_EXCEEDANCES {
        return Err(Error::InsufficientTail {
            q: top.q,
            count: top.count,
            largest_usable,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.q).collect();
    let y: Vec<f64> = points.iter().map(|p| p.prob.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&x, &y);
    Ok(DecayFit {
        slope,
        intercept,
        r2,
        points,
    })
}

/// Per-run record written by the command line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSummary {
    pub rho: f64,
    pub seed: u64,
    pub frames: usize,
    pub warmup: usize,
    pub arrival: f64,
    pub effective_capacity: f64,
    pub mean_service: f64,
    pub theta: f64,
    pub target_slope: f64,
    pub fit: Option<DecayFit>,
    /// Why `fit` is absent.
    pub note: Option<String>,
}

impl QueueSummary {
    pub fn new(setup: &QueueSetup, run: &QueueRun) -> Self {
        let theta = setup.service.theta();
        let (fit, note) = match decay_exponent(run, None) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(format!("slope undefined: {e}"))),
        };
        Self {
            rho: setup.rho,
            seed: run.seed,
            frames: run.frames,
            warmup: run.warmup,
            arrival: run.arrival,
            effective_capacity: setup.effective_capacity.value,
            mean_service: setup.mean_service,
            theta,
            target_slope: -theta,
            fit,
            note,
        }
    }

    /// Slope over target, when a fit exists.
    pub fn ratio(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.slope / self.target_slope)
    }
}
