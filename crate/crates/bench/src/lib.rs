//! Shared fixtures for the benchmarks.

use tsdrive::anfis::{generate_excitation, identify, ExcitationConfig, LearnConfig};
use tsdrive::{TsModel, VehicleParams};

/// A model trained on a short excitation run; good enough to time solvers on.
pub fn bench_model() -> TsModel {
    let cfg = ExcitationConfig {
        duration: 180.0,
        ..Default::default()
    };
    let data = generate_excitation(&VehicleParams::default(), &cfg, 21).expect("excitation");
    identify(
        &data,
        &LearnConfig {
            epochs: 3,
            ..Default::default()
        },
    )
    .expect("training")
    .0
}
