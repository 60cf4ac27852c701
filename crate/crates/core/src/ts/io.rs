//! JSON persistence for [`TsModel`]. The layout is described by
//! `schemas/model.schema.json` at the repository root.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Domain, Interval, TsModel, TsSubModel, N_SCHEDULING, SCHEDULING_NAMES};
use crate::error::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

const RULE_ORDER: &str = "lexicographic";

#[derive(Serialize, Deserialize)]
struct NamedInterval {
    name: String,
    lo: f64,
    hi: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    rule_order: String,
    dt: f64,
    domain: Vec<NamedInterval>,
    submodels: Vec<TsSubModel>,
}

pub fn model_to_json(model: &TsModel) -> String {
    let file = ModelFile {
        version: MODEL_VERSION,
        rule_order: RULE_ORDER.to_string(),
        dt: model.dt,
        domain: model
            .domain
            .intervals
            .iter()
            .zip(SCHEDULING_NAMES)
            .map(|(iv, name)| NamedInterval {
                name: name.to_string(),
                lo: iv.lo,
                hi: iv.hi,
            })
            .collect(),
        submodels: model.submodels.to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("model serialization is infallible")
}

pub fn model_from_json(text: &str) -> Result<TsModel> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::parse("model file", e))?;
    let version = value
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::parse("model file", "missing integer field `version`"))?;
    if version != u64::from(MODEL_VERSION) {
        return Err(Error::Version {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: MODEL_VERSION,
        });
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::parse("model file", e))?;
    if file.rule_order != RULE_ORDER {
        return Err(Error::parse(
            "model file",
            format!("unsupported rule order `{}`", file.rule_order),
        ));
    }
    if file.domain.len() != N_SCHEDULING {
        return Err(Error::parse(
            "model file",
            format!(
                "domain lists {} variables, expected {N_SCHEDULING}",
                file.domain.len()
            ),
        ));
    }
    for (iv, name) in file.domain.iter().zip(SCHEDULING_NAMES) {
        if iv.name != name {
            return Err(Error::parse(
                "model file",
                format!("domain entry `{}` where `{name}` was expected", iv.name),
            ));
        }
    }
    let domain = Domain::new(
        file.domain
            .iter()
            .map(|iv| Interval::new(iv.lo, iv.hi))
            .collect(),
    );
    let submodels: [TsSubModel; 3] = file.submodels.try_into().map_err(|v: Vec<TsSubModel>| {
        Error::parse("model file", format!("{} sub-models, expected 3", v.len()))
    })?;
    TsModel::new(file.dt, domain, submodels)
}

pub fn save_model(model: &TsModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TsModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
