use super::config::RunConfig;
use crate::anfis::{
    generate_excitation, identify, validate, Dataset, ExcitationConfig, TrainingReport,
    ValidationReport,
};
use crate::error::{Error, Result};
use crate::ts::TsModel;

/// Everything produced by one identification run.
#[derive(Debug, Clone)]
pub struct Identification {
    pub model: TsModel,
    pub training: TrainingReport,
    pub validation: ValidationReport,
    pub dataset: Dataset,
    pub holdout: Dataset,
}

/// Training data and the holdout set it is judged on.
///
/// Generated data comes from the excitation run seeded with
/// `identify.learn.seed` and the holdout from a separate run seeded with
/// `identify.holdout_seed`; the two streams are kept apart even when the
/// seeds coincide. A recorded dataset is split instead, its tail held out.
pub fn identification_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.identify.dataset {
        Some(_) => split_recorded(cfg),
        None => Ok((
            generate_excitation(
                &cfg.plant,
                &cfg.identify.excitation,
                2 * cfg.identify.learn.seed,
            )?,
            holdout_data(cfg)?,
        )),
    }
}

/// The holdout half of [`identification_data`] alone.
pub fn holdout_data(cfg: &RunConfig) -> Result<Dataset> {
    let id = &cfg.identify;
    if id.dataset.is_some() {
        return Ok(split_recorded(cfg)?.1);
    }
    let hold_cfg = ExcitationConfig {
        duration: id.holdout_duration,
        ..id.excitation
    };
    generate_excitation(&cfg.plant, &hold_cfg, 2 * id.holdout_seed + 1)
}

fn split_recorded(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let path = cfg.identify.dataset.as_ref().expect("caller checked");
    let all = Dataset::read_csv(path, cfg.run.dt)?;
    let (train, hold) = all.split_tail(cfg.identify.learn.validation_fraction);
    if train.is_empty() || hold.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} is too short to split",
            path.display()
        )));
    }
    Ok((train, hold))
}

pub fn identify_model(cfg: &RunConfig) -> Result<Identification> {
    let (dataset, holdout) = identification_data(cfg)?;
    let (model, training) = identify(&dataset, &cfg.identify.learn)?;
    let validation = validate(&model, &holdout)?;
    Ok(Identification {
        model,
        training,
        validation,
        dataset,
        holdout,
    })
}
