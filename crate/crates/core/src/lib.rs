//! Learned Takagi-Sugeno vehicle dynamics with predictive control and
//! moving-horizon estimation for a 1/10-scale race car.

pub mod anfis;
pub mod error;
pub mod harness;
pub mod mhe;
pub mod mpc;
pub mod qp;
pub mod ts;
pub mod vehicle;
pub mod weights;

pub use error::{Error, Result};
pub use ts::{SchedulingVector, TsModel, TsSubModel};
pub use vehicle::{ControlInput, DynamicState, Measurement, NoiseSpec, VehicleParams};
