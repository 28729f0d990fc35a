//! Energy bookkeeping and active base-station scheduling for sensor networks
//! with several energy-harvesting base stations, one of which is active at a
//! time.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auxiliary;
pub mod energy;
pub mod error;
pub mod lp;
pub mod schedulers;
pub mod stochastic;
pub mod tol;

pub use energy::{
    CostMatrix, DecisionVector, EnergyVector, Lifetime, RechargeSource, RechargeTrace, ResidualMatrix, SlotConfig,
};
pub use error::{Error, Result};
