//! Offline identification of the TS model by hybrid (least squares plus
//! gradient descent) learning.

mod consequents;
pub mod data;
mod gradient;
mod premises;
pub mod rls;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use consequents::{fit_consequents, regressor, ConsequentFit};
pub use data::{
    generate_excitation, observed_domain, split_miso, Dataset, ExcitationConfig, RegressionSet,
    Sample, CSV_HEADER,
};
pub use gradient::{premise_gradient, sse, PremiseGradient};
pub use premises::init_premises;
pub use train::{hybrid_train, EpochRecord, LearnConfig, SubModelReport, Trained, SHAPE_BOUNDS};

use crate::error::{Error, Result};
use crate::ts::{SchedulingVector, TsModel, SCHEDULING_NAMES};
use crate::vehicle::{ControlInput, DynamicState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainEntry {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub n_train: usize,
    pub n_validation: usize,
    pub domain: Vec<DomainEntry>,
    pub submodels: Vec<SubModelReport>,
}

impl TrainingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Trains all three sub-models (in parallel) on the head of `dataset`, holding
/// out its tail for model selection. The model domain is the box observed in
/// the whole dataset.
pub fn identify(dataset: &Dataset, config: &LearnConfig) -> Result<(TsModel, TrainingReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InsufficientData(
            "empty identification dataset".into(),
        ));
    }
    let domain = dataset.domain.clone();
    domain.validate()?;
    let (train, hold) = dataset.split_tail(config.validation_fraction);
    let train_sets = split_miso(&train);
    let hold_sets = split_miso(&hold);
    let results: Vec<Result<Trained>> = std::thread::scope(|s| {
        let handles: Vec<_> = train_sets
            .iter()
            .zip(&hold_sets)
            .map(|(t, h)| {
                let domain = &domain;
                s.spawn(move || hybrid_train(t, h, domain, config))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let mut trained = Vec::with_capacity(3);
    for r in results {
        trained.push(r?);
    }
    let reports = trained.iter().map(|t| t.report.clone()).collect();
    let [vx, vy, om]: [Trained; 3] = trained.try_into().expect("three sub-models");
    let model = TsModel::new(
        dataset.dt,
        domain.clone(),
        [vx.submodel, vy.submodel, om.submodel],
    )?;
    let report = TrainingReport {
        n_train: train.len(),
        n_validation: hold.len(),
        domain: SCHEDULING_NAMES
            .iter()
            .zip(&domain.intervals)
            .map(|(n, iv)| DomainEntry {
                name: n.to_string(),
                min: iv.lo,
                max: iv.hi,
            })
            .collect(),
        submodels: reports,
    };
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    /// Per state component (vx, vy, omega).
    pub rmse: [f64; 3],
    pub max_error: [f64; 3],
    /// Fraction of holdout scheduling vectors inside the model domain.
    pub coverage: f64,
}

/// One-step-ahead prediction errors over a holdout set. Scheduling vectors
/// outside the domain are clamped, as they are at run time.
pub fn validate(model: &TsModel, holdout: &Dataset) -> Result<ValidationReport> {
    if holdout.is_empty() {
        return Err(Error::InsufficientData("empty holdout set".into()));
    }
    let mut sq = [0.0; 3];
    let mut max_error = [0.0f64; 3];
    let mut inside = 0usize;
    for s in &holdout.samples {
        let clamped = model.clamp_to_domain(&s.zeta);
        if !clamped.clipped {
            inside += 1;
        }
        let z = SchedulingVector(s.zeta);
        let pred = model.predict_one_step(&z.state(), &z.input(), &clamped.zeta)?;
        for (i, p) in pred.to_array().iter().enumerate() {
            let e = (s.target[i] - p).abs();
            sq[i] += e * e;
            max_error[i] = max_error[i].max(e);
        }
    }
    let n = holdout.len() as f64;
    Ok(ValidationReport {
        samples: holdout.len(),
        rmse: sq.map(|v| (v / n).sqrt()),
        max_error,
        coverage: inside as f64 / n,
    })
}

/// One-step prediction of the model at an arbitrary state and input.
pub fn one_step(model: &TsModel, x: &DynamicState, u: &ControlInput) -> Result<DynamicState> {
    let zeta = model.clamp_to_domain(&SchedulingVector::new(x, u).0).zeta;
    model.predict_one_step(x, u, &zeta)
}
