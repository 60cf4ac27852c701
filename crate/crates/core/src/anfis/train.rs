use serde::{Deserialize, Serialize};

use super::consequents::fit_consequents;
use super::data::RegressionSet;
use super::gradient::{premise_gradient, sse};
use super::premises::init_premises;
use crate::error::{Error, Result};
use crate::ts::{Domain, GBellParams, TsSubModel};

pub const SHAPE_BOUNDS: (f64, f64) = (0.5, 8.0);
const MIN_WIDTH_FRACTION: f64 = 1e-3;
const ACCEPTS_BEFORE_GROWTH: usize = 3;
const DIVERGENCE_FACTOR: f64 = 10.0;
const MAX_HALVINGS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    pub n_mf: usize,
    pub epochs: usize,
    pub premise_step_size: f64,
    /// Per-sample weight pulling rule consequents toward a shared affine fit.
    pub consequent_spread_penalty: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            n_mf: 2,
            epochs: 12,
            premise_step_size: 1e-3,
            consequent_spread_penalty: 3e-5,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mf < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_mf must be at least 2, got {}",
                self.n_mf
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "validation_fraction must lie in (0, 0.5), got {}",
                self.validation_fraction
            )));
        }
        if !(self.premise_step_size > 0.0 && self.premise_step_size.is_finite()) {
            return Err(Error::InvalidParameter(
                "premise_step_size must be positive".into(),
            ));
        }
        if !(self.consequent_spread_penalty >= 0.0 && self.consequent_spread_penalty.is_finite()) {
            return Err(Error::InvalidParameter(
                "consequent_spread_penalty must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_sse: f64,
    pub validation_sse: f64,
    /// Step size used for this epoch's premise update.
    pub step_size: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubModelReport {
    pub target: String,
    pub initial_sse: f64,
    pub best_epoch: usize,
    pub train_rmse: f64,
    pub validation_rmse: f64,
    pub rank_deficient: bool,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub submodel: TsSubModel,
    pub report: SubModelReport,
}

fn rmse(sse: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        (sse / n as f64).sqrt()
    }
}

/// One normalized, per-parameter-scaled descent step: the parameter with the
/// largest scaled gradient moves by `step · scale`.
fn descend(
    mfs: &[Vec<GBellParams>],
    grad: &[Vec<[f64; 3]>],
    domain: &Domain,
    step: f64,
) -> Option<Vec<Vec<GBellParams>>> {
    let scales: Vec<[f64; 3]> = domain
        .intervals
        .iter()
        .map(|iv| [iv.span(), 1.0, iv.span()])
        .collect();
    let mut peak: f64 = 0.0;
    for (j, row) in grad.iter().enumerate() {
        for g in row {
            for p in 0..3 {
                peak = peak.max((scales[j][p] * g[p]).abs());
            }
        }
    }
    if !(peak > 0.0 && peak.is_finite()) {
        return None;
    }
    let out = mfs
        .iter()
        .zip(grad)
        .enumerate()
        .map(|(j, (row, grow))| {
            let s = scales[j];
            row.iter()
                .zip(grow)
                .map(|(mf, g)| {
                    let d = |p: usize| -step * s[p] * (s[p] * g[p]) / peak;
                    GBellParams {
                        a: (mf.a + d(0)).max(MIN_WIDTH_FRACTION * s[0]),
                        b: (mf.b + d(1)).clamp(SHAPE_BOUNDS.0, SHAPE_BOUNDS.1),
                        c: mf.c + d(2),
                    }
                })
                .collect()
        })
        .collect();
    Some(out)
}

/// Hybrid learning of one MISO sub-model: least-squares consequents for the
/// current premises, then one gradient step on the premises. A step that
/// raises the training SSE is undone and retried at half the step size. The model of
/// the epoch with the lowest validation SSE is returned.
pub fn hybrid_train(
    train: &RegressionSet,
    validation: &RegressionSet,
    domain: &Domain,
    config: &LearnConfig,
) -> Result<Trained> {
    config.validate()?;
    let target = train.target;
    let mut current = fit_consequents(
        train,
        target,
        &init_premises(domain, config.n_mf)?,
        config.consequent_spread_penalty,
    )?;
    let initial_sse = current.sse;
    let val_of = |m: &TsSubModel| -> Result<f64> {
        if validation.is_empty() {
            sse(train, m)
        } else {
            sse(validation, m)
        }
    };
    let mut best_val = val_of(&current.submodel)?;
    let mut best = (0, current.clone());
    let mut records = vec![EpochRecord {
        epoch: 0,
        train_sse: current.sse,
        validation_sse: best_val,
        step_size: 0.0,
        accepted: true,
    }];
    let mut step = config.premise_step_size;
    let mut streak = 0;

    for epoch in 1..=config.epochs {
        let grad = premise_gradient(train, &current.submodel)?;
        let mut used = step;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let Some(mfs) = descend(&current.submodel.mfs, &grad, domain, step) else {
                break;
            };
            let candidate = fit_consequents(train, target, &mfs, config.consequent_spread_penalty)?;
            if !candidate.sse.is_finite() {
                return Err(Error::Divergence {
                    sse: candidate.sse,
                    initial: initial_sse,
                });
            }
            used = step;
            if candidate.sse <= current.sse {
                current = candidate;
                accepted = true;
                streak += 1;
                if streak == ACCEPTS_BEFORE_GROWTH {
                    step *= 2.0;
                    streak = 0;
                }
                break;
            }
            step *= 0.5;
            streak = 0;
        }
        if current.sse > DIVERGENCE_FACTOR * initial_sse {
            return Err(Error::Divergence {
                sse: current.sse,
                initial: initial_sse,
            });
        }
        if !accepted {
            log::debug!("{target:?}: no descent step lowered the SSE at epoch {epoch}; stopping");
        }
        let val = val_of(&current.submodel)?;
        records.push(EpochRecord {
            epoch,
            train_sse: current.sse,
            validation_sse: val,
            step_size: used,
            accepted,
        });
        if val < best_val {
            best_val = val;
            best = (epoch, current.clone());
        }
        if !accepted {
            break;
        }
    }

    let (best_epoch, fit) = best;
    let n_val = if validation.is_empty() {
        train.len()
    } else {
        validation.len()
    };
    Ok(Trained {
        report: SubModelReport {
            target: target.name().to_string(),
            initial_sse,
            best_epoch,
            train_rmse: rmse(fit.sse, train.len()),
            validation_rmse: rmse(best_val, n_val),
            rank_deficient: fit.rank_deficient,
            epochs: records,
        },
        submodel: fit.submodel,
    })
}
