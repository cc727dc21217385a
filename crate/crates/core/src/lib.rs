//! Simulation and optimization core for RIS-assisted near-space URLLC links.
//!
//! A base station reaches a UAV through a reconfigurable surface carried by a
//! high-altitude platform; the UAV forwards short packets to ground robots.
//! The crate covers the sparse HAP → UAV channel and its estimation (R-OAMP,
//! OMP, SP), RIS phase alignment, finite-blocklength reliability, the
//! energy-efficiency optimizer and Monte Carlo drivers.
//!
//! Numerical code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

// `!(x > 0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod greedy;
pub mod harness;
pub mod linalg;
pub mod optimizer;
pub mod pipeline;
pub mod ris;
pub mod roamp;
pub mod scalar;
pub mod scenario;
pub mod sparse;
pub mod urllc;

pub use error::{Error, Infeasibility, Result};
pub use scalar::Real;

pub type Scenario = scenario::Scenario<f64>;
pub type ArrayConfig = scenario::ArrayConfig<f64>;
pub type BsHapChannel = channel::BsHapChannel<f64>;
pub type SparseChannelInstance = channel::SparseChannelInstance<f64>;
pub type UtgChannel = channel::UtgChannel<f64>;
pub type AngularGrid = sparse::AngularGrid<f64>;
pub type SparsePrior = sparse::SparsePrior<f64>;
pub type MeasurementModel = sparse::MeasurementModel<f64>;
pub type RoampConfig = roamp::RoampConfig<f64>;
pub type PosteriorEstimate = roamp::PosteriorEstimate<f64>;
pub type GreedyResult = greedy::GreedyResult<f64>;
pub type PhaseConfiguration = ris::PhaseConfiguration<f64>;
pub type CascadeGain = ris::CascadeGain<f64>;
pub type LinkBudget = urllc::LinkBudget<f64>;
pub type ResourceDecision = optimizer::ResourceDecision<f64>;
pub type EEOutcome = optimizer::EEOutcome<f64>;
pub type OptimizationReport = optimizer::OptimizationReport<f64>;
pub type ChannelRealization = pipeline::ChannelRealization<f64>;
