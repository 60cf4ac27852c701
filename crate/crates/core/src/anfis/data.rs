//! Identification data: excitation runs of the plant, CSV persistence and
//! the split into single-output regression problems.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ts::{Domain, Interval, StateComponent, DEFAULT_DT, N_SCHEDULING};
use crate::vehicle::{self, ControlInput, DynamicState, NoiseSpec, NoiseStream, VehicleParams};

/// One transition: scheduling vector at step k and the state at step k+1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub zeta: [f64; N_SCHEDULING],
    pub target: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub dt: f64,
    /// Observed per-variable min/max of the scheduling vectors.
    pub domain: Domain,
    /// Excitation inputs that were rejected and resampled during generation.
    pub rejected: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, dt: f64) -> Self {
        let domain = observed_domain(&samples);
        Self {
            samples,
            dt,
            domain,
            rejected: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Splits off the trailing `fraction` of the trajectory as a holdout set.
    pub fn split_tail(&self, fraction: f64) -> (Dataset, Dataset) {
        let n_hold = ((self.len() as f64) * fraction).round() as usize;
        let cut = self.len() - n_hold.min(self.len());
        let train = Dataset::new(self.samples[..cut].to_vec(), self.dt);
        let hold = Dataset::new(self.samples[cut..].to_vec(), self.dt);
        (train, hold)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        w.write_record(CSV_HEADER).map_err(|e| csv_error(path, e))?;
        for (k, s) in self.samples.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(s.zeta.iter().chain(&s.target).map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>, dt: f64) -> Result<Dataset> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r.headers().map_err(|e| csv_error(path, e))?;
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(Error::parse(
                "dataset",
                format!("unexpected header in {}", path.display()),
            ));
        }
        let mut samples = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let v: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse("dataset", e))?;
            if v.len() != 8 {
                return Err(Error::parse(
                    "dataset",
                    "row has the wrong number of fields",
                ));
            }
            samples.push(Sample {
                zeta: [v[0], v[1], v[2], v[3], v[4]],
                target: [v[5], v[6], v[7]],
            });
        }
        Ok(Dataset::new(samples, dt))
    }
}

pub const CSV_HEADER: [&str; 9] = [
    "k",
    "vx",
    "vy",
    "omega",
    "delta",
    "a",
    "vx_next",
    "vy_next",
    "omega_next",
];

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse("dataset", format!("{other:?}")),
    }
}

pub fn observed_domain(samples: &[Sample]) -> Domain {
    let mut lo = [f64::INFINITY; N_SCHEDULING];
    let mut hi = [f64::NEG_INFINITY; N_SCHEDULING];
    for s in samples {
        for i in 0..N_SCHEDULING {
            lo[i] = lo[i].min(s.zeta[i]);
            hi[i] = hi[i].max(s.zeta[i]);
        }
    }
    Domain::new(
        (0..N_SCHEDULING)
            .map(|i| Interval::new(lo[i], hi[i]))
            .collect(),
    )
}

/// Single-output regression problem: predict one state component at k+1.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSet {
    pub target: StateComponent,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl RegressionSet {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

/// One regression set per state component, each pairing every `ζ_k` with that
/// component of `x_{k+1}`.
pub fn split_miso(ds: &Dataset) -> [RegressionSet; 3] {
    let inputs: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.zeta.to_vec()).collect();
    StateComponent::ALL.map(|t| RegressionSet {
        target: t,
        inputs: inputs.clone(),
        outputs: ds.samples.iter().map(|s| s.target[t.index()]).collect(),
    })
}

/// Operating box the excitation tries to cover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationConfig {
    pub duration: f64,
    pub dt: f64,
    pub vx_range: (f64, f64),
    pub delta_max: f64,
    pub a_range: (f64, f64),
    /// Largest per-step input change (δ, a).
    pub max_rate: (f64, f64),
    /// Adds sensor noise to the recorded vx and ω when set.
    pub measurement_noise: Option<NoiseSpec>,
    /// Per-step probability of an instantaneous lateral disturbance.
    pub kick_probability: f64,
    /// Largest disturbance added to (vy, ω).
    pub kick_size: (f64, f64),
    /// Disturbed (vy, ω) are clipped to ± these values.
    pub kick_limit: (f64, f64),
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        Self {
            duration: 600.0,
            dt: DEFAULT_DT,
            vx_range: (0.1, 2.7),
            delta_max: 0.249,
            a_range: (-1.0, 4.0),
            max_rate: (0.1, 1.0),
            measurement_noise: None,
            kick_probability: 0.1,
            kick_size: (0.08, 1.2),
            kick_limit: (0.14, 2.3),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum SteerMode {
    Chirp {
        amp: f64,
        f0: f64,
        f1: f64,
        phase: f64,
    },
    Ramp {
        target: f64,
    },
    Hold {
        value: f64,
    },
}

#[derive(Debug, Clone, Copy)]
enum AccelMode {
    Step { value: f64 },
    Track { speed: f64 },
}

struct Segment {
    start: f64,
    length: f64,
    steer: SteerMode,
    accel: AccelMode,
}

impl Segment {
    fn draw(rng: &mut ChaCha8Rng, start: f64, cfg: &ExcitationConfig) -> Self {
        let length = rng.random_range(1.0..4.0);
        let dm = cfg.delta_max;
        let steer = match rng.random_range(0..3) {
            0 => SteerMode::Chirp {
                amp: dm * rng.random_range(0.2..1.0),
                f0: rng.random_range(0.1..0.5),
                f1: rng.random_range(0.5..2.0),
                phase: rng.random_range(0.0..TAU),
            },
            1 => SteerMode::Ramp {
                target: rng.random_range(-dm..=dm),
            },
            _ => SteerMode::Hold {
                value: rng.random_range(-dm..=dm),
            },
        };
        let (lo, hi) = cfg.vx_range;
        let accel = if rng.random_bool(0.5) {
            AccelMode::Step {
                value: rng.random_range(cfg.a_range.0..=cfg.a_range.1),
            }
        } else {
            AccelMode::Track {
                speed: rng.random_range(lo + 0.1..hi - 0.05),
            }
        };
        Self {
            start,
            length,
            steer,
            accel,
        }
    }

    fn desired(&self, t: f64, state: &DynamicState, cfg: &ExcitationConfig) -> ControlInput {
        let tau = t - self.start;
        let delta = match self.steer {
            SteerMode::Chirp { amp, f0, f1, phase } => {
                let k = (f1 - f0) / self.length;
                amp * (TAU * (f0 * tau + 0.5 * k * tau * tau) + phase).sin()
            }
            SteerMode::Ramp { target } => target,
            SteerMode::Hold { value } => value,
        };
        let a = match self.accel {
            AccelMode::Step { value } => value,
            AccelMode::Track { speed } => 3.0 * (speed - state.vx) + 0.5,
        };
        ControlInput::new(delta, a.clamp(cfg.a_range.0, cfg.a_range.1))
    }
}

fn rate_limit(desired: ControlInput, prev: &ControlInput, cfg: &ExcitationConfig) -> ControlInput {
    let (rd, ra) = cfg.max_rate;
    ControlInput::new(
        (prev.delta + (desired.delta - prev.delta).clamp(-rd, rd))
            .clamp(-cfg.delta_max, cfg.delta_max),
        (prev.a + (desired.a - prev.a).clamp(-ra, ra)).clamp(cfg.a_range.0, cfg.a_range.1),
    )
}

/// Runs the plant under a randomized excitation policy.
///
/// Each 1–4 s segment combines a steering pattern (linear chirp, ramp to a
/// random angle, or hold) with an acceleration pattern (random step over the
/// full command range, or proportional tracking of a random target speed).
/// Inputs are rate limited. A step that would leave the speed band is
/// rejected and retried with a fresh input pulled toward the band center.
///
/// Left alone, vy and ω settle within a step or two onto values fixed by
/// (vx, δ), so their own dynamics would never show in the data. Random
/// disturbances of the lateral state ("kicks") expose those transients; the
/// sample chain is broken at each kick.
pub fn generate_excitation(
    params: &VehicleParams,
    cfg: &ExcitationConfig,
    seed: u64,
) -> Result<Dataset> {
    params.validate()?;
    if !(cfg.duration > 0.0) {
        return Err(Error::InvalidParameter(
            "excitation duration must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sensor = cfg.measurement_noise.map(NoiseStream::new).transpose()?;
    let n_steps = (cfg.duration / cfg.dt).round() as usize;
    let (lo, hi) = cfg.vx_range;
    let mut state = DynamicState::new(0.5 * (lo + hi), 0.0, 0.0);
    let mut input = ControlInput::default();
    let mut segment = Segment::draw(&mut rng, 0.0, cfg);
    let mut samples = Vec::with_capacity(n_steps);
    let mut rejected = 0;
    let mut kicks = 0usize;

    let observe = |x: &DynamicState, sensor: &mut Option<NoiseStream>| -> DynamicState {
        match sensor {
            Some(s) => {
                let y = s.measure(x);
                DynamicState::new(y.vx, x.vy, y.omega)
            }
            None => *x,
        }
    };
    let mut observed = observe(&state, &mut sensor);

    for k in 0..n_steps {
        let t = k as f64 * cfg.dt;
        if t >= segment.start + segment.length {
            segment = Segment::draw(&mut rng, t, cfg);
        }
        if cfg.kick_probability > 0.0 && rng.random_bool(cfg.kick_probability.min(1.0)) {
            let (sv, sw) = cfg.kick_size;
            let (lv, lw) = cfg.kick_limit;
            state.vy = (state.vy + rng.random_range(-sv..=sv)).clamp(-lv, lv);
            state.omega = (state.omega + rng.random_range(-sw..=sw)).clamp(-lw, lw);
            observed = observe(&state, &mut sensor);
            kicks += 1;
        }
        let mut candidate = rate_limit(segment.desired(t, &state, cfg), &input, cfg);
        let mut next = None;
        for attempt in 0..50 {
            match vehicle::step(&state, &candidate, params, cfg.dt) {
                Ok(x) if x.vx >= lo && x.vx <= hi && x.is_finite() => {
                    next = Some(x);
                    break;
                }
                _ => {
                    rejected += 1;
                    // Push the speed back toward the middle of the band.
                    let toward = if state.vx < 0.5 * (lo + hi) {
                        cfg.a_range.1
                    } else {
                        cfg.a_range.0
                    };
                    let shrink = 0.5f64.powi(attempt + 1);
                    let desired = ControlInput::new(
                        candidate.delta * shrink + rng.random_range(-0.01..0.01),
                        toward,
                    );
                    candidate = rate_limit(desired, &input, cfg);
                    if attempt > 10 {
                        candidate = ControlInput::new(0.0, toward);
                    }
                }
            }
        }
        let next = next.ok_or(Error::Domain {
            vx: state.vx,
            floor: lo,
        })?;
        let next_observed = observe(&next, &mut sensor);
        samples.push(Sample {
            zeta: [
                observed.vx,
                observed.vy,
                observed.omega,
                candidate.delta,
                candidate.a,
            ],
            target: next_observed.to_array(),
        });
        state = next;
        observed = next_observed;
        input = candidate;
    }
    let mut ds = Dataset::new(samples, cfg.dt);
    ds.rejected = rejected;
    if rejected > 0 {
        log::info!("excitation: {rejected} inputs rejected and resampled");
    }
    log::debug!("excitation: {kicks} lateral disturbances");
    Ok(ds)
}
