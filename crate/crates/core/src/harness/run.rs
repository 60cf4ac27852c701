use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::profile::{ReferenceProfile, ReferenceTable};
use crate::error::{Error, Result};
use crate::mhe::{MheStatus, MovingHorizonEstimator};
use crate::mpc::{MpcController, MpcStatus};
use crate::ts::{StateComponent, TsModel};
use crate::vehicle::{self, ControlInput, NoiseStream};

/// One closed-loop tick. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub vx_ref: f64,
    pub omega_ref: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    pub vx_hat: f64,
    pub vy_hat: f64,
    pub omega_hat: f64,
    pub y_vx: f64,
    pub y_omega: f64,
    pub delta: f64,
    pub a: f64,
    pub d_delta: f64,
    pub d_a: f64,
    pub mpc_status: MpcStatus,
    pub mhe_status: MheStatus,
    pub mpc_iterations: usize,
    pub mhe_iterations: usize,
    pub mpc_scheduling_clipped: bool,
    pub mhe_scheduling_clipped: bool,
    pub vy_at_bound: bool,
    pub mpc_solve_ms: f64,
    pub mhe_solve_ms: f64,
}

/// Columns holding wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 2] = ["mpc_solve_ms", "mhe_solve_ms"];

impl StepRecord {
    /// Copy with the wall-clock fields zeroed.
    pub fn without_timing(&self) -> Self {
        Self {
            mpc_solve_ms: 0.0,
            mhe_solve_ms: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    /// Why the run stopped early, if it did.
    pub aborted: Option<String>,
}

impl RunLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(file));
        if self.records.is_empty() {
            w.write_record(csv_header())
                .map_err(|e| csv_error(path, e))?;
        }
        for r in &self.records {
            w.serialize(r).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a CSV written by [`RunLog::write_csv`]; the abort reason is not
    /// part of the CSV.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(String::from)
            .collect();
        if header != csv_header() {
            return Err(Error::parse(
                path.display().to_string(),
                "unexpected runlog header",
            ));
        }
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<StepRecord>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Ok(Self {
            records,
            aborted: None,
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)
            .map_err(|e| Error::parse(path.display().to_string(), e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

pub fn export(log: &RunLog, path: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
    match format {
        ExportFormat::Csv => log.write_csv(path),
        ExportFormat::Json => log.write_json(path),
    }
}

pub fn csv_header() -> Vec<&'static str> {
    vec![
        "k",
        "t",
        "vx_ref",
        "omega_ref",
        "vx",
        "vy",
        "omega",
        "vx_hat",
        "vy_hat",
        "omega_hat",
        "y_vx",
        "y_omega",
        "delta",
        "a",
        "d_delta",
        "d_a",
        "mpc_status",
        "mhe_status",
        "mpc_iterations",
        "mhe_iterations",
        "mpc_scheduling_clipped",
        "mhe_scheduling_clipped",
        "vy_at_bound",
        "mpc_solve_ms",
        "mhe_solve_ms",
    ]
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::parse(path.display().to_string(), e)
}

/// Rejects references the model has never seen.
pub fn check_profile(profile: &ReferenceProfile, model: &TsModel) -> Result<()> {
    let dom = &model.domain().intervals;
    let (vx, om) = (
        dom[StateComponent::Vx.index()],
        dom[StateComponent::Omega.index()],
    );
    for (i, s) in profile.segments().iter().enumerate() {
        if !om.contains(s.omega) || !vx.contains(s.vx) {
            return Err(Error::InvalidParameter(format!(
                "profile segment {i} (vx {}, omega {}) is outside the learned domain",
                s.vx, s.omega
            )));
        }
    }
    Ok(())
}

/// Runs the profile (or `run.duration`, whichever is shorter) at the model rate.
///
/// Each tick reads the references, estimates the state from measurements up
/// to this tick, solves the MPC, applies the input to the plant and measures
/// the next state. A plant domain error ends the run with `aborted` set.
pub fn run_closed_loop(
    cfg: &RunConfig,
    model: &TsModel,
    profile: &ReferenceProfile,
) -> Result<RunLog> {
    cfg.validate()?;
    cfg.check_model(model)?;
    profile.validate()?;
    check_profile(profile, model)?;

    let dt = cfg.run.dt;
    let table = ReferenceTable::new(profile);
    let duration = cfg
        .run
        .duration
        .map_or(table.duration(), |d| d.min(table.duration()));
    let steps = (duration / dt + 1e-9).floor() as usize;

    let mut mpc = MpcController::new(model, cfg.mpc.clone())?;
    let mut mhe = MovingHorizonEstimator::new(cfg.mhe.clone())?;
    let mut sensor = NoiseStream::new(cfg.noise_spec())?;
    let bounds = cfg.mpc.bounds;

    let mut x = cfg.initial_state();
    let mut y = sensor.measure(&x);
    let mut applied_prev = ControlInput::default();
    let mut computed_prev = ControlInput::default();
    let mut log = RunLog::default();

    for k in 0..steps {
        let t = k as f64 * dt;
        let refs = table.window(t, dt, cfg.mpc.hp);

        let est = mhe.update(model, y, applied_prev)?;
        let x_hat = est.current();
        let (mhe_status, mhe_iterations, mhe_clip, vy_at_bound, mhe_time) = (
            est.status,
            est.iterations,
            est.scheduling_clipped,
            est.vy_at_bound,
            est.solve_time,
        );

        mpc.observe(model, &x_hat, &applied_prev)?;
        let sol = mpc.step(model, &x_hat, &computed_prev, &refs)?;
        let computed = bounds.clip(&sol.first_input(), &computed_prev);
        let applied = if cfg.run.compute_delay {
            computed_prev
        } else {
            computed
        };

        log.records.push(StepRecord {
            k,
            t,
            vx_ref: refs.0[0].vx,
            omega_ref: refs.0[0].omega,
            vx: x.vx,
            vy: x.vy,
            omega: x.omega,
            vx_hat: x_hat.vx,
            vy_hat: x_hat.vy,
            omega_hat: x_hat.omega,
            y_vx: y.vx,
            y_omega: y.omega,
            delta: applied.delta,
            a: applied.a,
            d_delta: applied.delta - applied_prev.delta,
            d_a: applied.a - applied_prev.a,
            mpc_status: sol.status,
            mhe_status,
            mpc_iterations: sol.iterations,
            mhe_iterations,
            mpc_scheduling_clipped: sol.scheduling_clipped,
            mhe_scheduling_clipped: mhe_clip,
            vy_at_bound,
            mpc_solve_ms: sol.solve_time * 1e3,
            mhe_solve_ms: mhe_time * 1e3,
        });

        x = match vehicle::step(&x, &applied, &cfg.plant, dt) {
            Ok(next) => next,
            Err(e @ Error::Domain { .. }) => {
                log::warn!("closed loop aborted at t = {t:.3} s: {e}");
                log.aborted = Some(format!("t = {t:.4} s: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        y = sensor.measure(&x);
        applied_prev = applied;
        computed_prev = computed;
    }
    Ok(log)
}
