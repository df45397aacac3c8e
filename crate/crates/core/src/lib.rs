//! Effective-capacity throughput regions for fading multiple-access
//! channels under per-user QoS exponents.
//!
//! The evaluators work on a [`Scenario`]: per-user SNR and exponent, the
//! fading model, and the numerics used for expectations. On top of that sit
//! the transmission strategies (time-shared fixed orders, state-dependent
//! decoding orders, TDMA), power control, region tracing, and a queue
//! simulator that checks the exponent against simulated buffer tails.

pub mod channel;
pub mod effcap;
pub mod error;
pub mod integrate;
pub mod powerctl;
pub mod queuesim;
pub mod region;
pub mod solve;
pub mod strategies;

pub use channel::{ChannelState, FadingModel, Marginal};
pub use effcap::{
    DecodingOrder, EffCap, RatePoint, Scenario, SystemConfig, UserParams, DEFAULT_TB_PRODUCT,
};
pub use error::{Error, Result};
pub use integrate::{Estimate, IntegrationSpec, Integrator, Method};
pub use powerctl::{KktReport, PowerPolicy, SolverOptions};
pub use queuesim::{QueueRun, QueueSetup, ServiceModel, ServicePolicy};
pub use region::{RegionTrace, Strategy, TracePoint};
pub use strategies::{DecodingPartition, KSolution, TimeSharing};
