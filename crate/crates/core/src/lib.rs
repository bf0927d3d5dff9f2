//! Online control of multi-hop wireless networks whose nodes run on
//! harvested energy stored in imperfect batteries (finite capacity,
//! charging loss, leakage).
//!
//! Each slot the controller admits data, allocates transmit power against
//! a perturbed energy price and routes by backpressure. The crate also
//! contains two baselines, a slotted simulator, the optimality-gap
//! constants and a TOML scenario format.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

// `!(x > 0)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod baselines;
pub mod config;
pub mod controller;
pub mod error;
pub mod export;
pub mod model;
pub mod policy;
pub mod rate;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod utility;

pub use error::{Error, Result};
pub use model::{Link, NetworkSpec};
pub use policy::{Algorithm, Policy};
pub use rate::RateKind;
pub use scalar::Scalar;

pub type SystemParams = model::SystemParams<f64>;
pub type AlgorithmParams = model::AlgorithmParams<f64>;
pub type ParamWindow = model::ParamWindow<f64>;
pub type NetState = model::NetState<f64>;
pub type ChannelState = model::ChannelState<f64>;
pub type EnvSample = model::EnvSample<f64>;
pub type SlotDecision = model::SlotDecision<f64>;
pub type RatePowerModel = rate::RatePowerModel<f64>;
pub type UtilitySpec = utility::UtilitySpec<f64>;
pub type Scenario = scenario::Scenario<f64>;
pub type Config = config::Config<f64>;
pub type RunTrace = sim::RunTrace<f64>;
pub type GapBound = analysis::GapBound<f64>;
pub type GapOptimum = analysis::GapOptimum<f64>;
