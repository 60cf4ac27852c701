use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::{Reference, ReferenceWindow};

/// Constant reference held for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub vx: f64,
    pub omega: f64,
}

/// Track piece of given length and signed curvature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub length: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceProfile {
    Segments {
        segments: Vec<Segment>,
    },
    /// Arcs are driven at `min(vx_max, sqrt(a_lat_max / |κ|))`, with `ω = κ·vx`.
    Track {
        arcs: Vec<Arc>,
        vx_max: f64,
        a_lat_max: f64,
    },
}

/// Speed and yaw rate for driving an arc of curvature `kappa`.
pub fn arc_reference(kappa: f64, vx_max: f64, a_lat_max: f64) -> Reference {
    let vx = if kappa == 0.0 {
        vx_max
    } else {
        vx_max.min((a_lat_max / kappa.abs()).sqrt())
    };
    Reference::new(vx, kappa * vx)
}

impl ReferenceProfile {
    /// Piecewise-constant form; track arcs become segments of `length / vx`.
    pub fn segments(&self) -> Vec<Segment> {
        match self {
            ReferenceProfile::Segments { segments } => segments.clone(),
            ReferenceProfile::Track {
                arcs,
                vx_max,
                a_lat_max,
            } => arcs
                .iter()
                .map(|arc| {
                    let r = arc_reference(arc.curvature, *vx_max, *a_lat_max);
                    Segment {
                        duration: arc.length / r.vx,
                        vx: r.vx,
                        omega: r.omega,
                    }
                })
                .collect(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.segments().iter().map(|s| s.duration).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if let ReferenceProfile::Track {
            vx_max, a_lat_max, ..
        } = self
        {
            if !(*vx_max > 0.0 && *a_lat_max > 0.0) {
                return Err(Error::InvalidParameter(
                    "track profile needs positive vx_max and a_lat_max".into(),
                ));
            }
        }
        let segs = self.segments();
        if segs.is_empty() {
            return Err(Error::InvalidParameter("reference profile is empty".into()));
        }
        for (i, s) in segs.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "profile segment {i} has non-positive duration"
                )));
            }
            if !(0.1..=2.7).contains(&s.vx) || !s.omega.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "profile segment {i}: vx_ref {} outside [0.1, 2.7]",
                    s.vx
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::parse("reference profile", e))?;
        p.validate()?;
        Ok(p)
    }

    /// The bundled 120 s profile: an 85 s warm-up at moderate speed followed
    /// by fast, alternating corners near the top of the speed range.
    pub fn racing() -> Self {
        Self::from_toml(BUNDLED_RACING).expect("bundled profile is valid")
    }
}

pub const BUNDLED_RACING: &str = include_str!("../../data/racing_120s.toml");

/// Reference at time `t`; segments are half-open `[start, end)`.
pub fn racing_reference(profile: &ReferenceProfile, t: f64) -> Result<Reference> {
    let mut start = 0.0;
    for s in profile.segments() {
        if t >= start && t < start + s.duration {
            return Ok(Reference::new(s.vx, s.omega));
        }
        start += s.duration;
    }
    Err(Error::EndOfRun(format!(
        "t = {t} s is outside the {start} s profile"
    )))
}

/// Precomputed lookup for the closed loop.
#[derive(Debug, Clone)]
pub struct ReferenceTable {
    ends: Vec<f64>,
    values: Vec<Reference>,
}

impl ReferenceTable {
    pub fn new(profile: &ReferenceProfile) -> Self {
        let mut t = 0.0;
        let mut ends = Vec::new();
        let mut values = Vec::new();
        for s in profile.segments() {
            t += s.duration;
            ends.push(t);
            values.push(Reference::new(s.vx, s.omega));
        }
        Self { ends, values }
    }

    pub fn duration(&self) -> f64 {
        self.ends.last().copied().unwrap_or(0.0)
    }

    pub fn at(&self, t: f64) -> Option<Reference> {
        if t < 0.0 {
            return None;
        }
        let i = self.ends.partition_point(|&e| e <= t);
        self.values.get(i).copied()
    }

    /// `r_k … r_{k+hp}`; lookahead past the end holds the final reference.
    pub fn window(&self, t: f64, dt: f64, hp: usize) -> ReferenceWindow {
        let last = *self.values.last().expect("profile is non-empty");
        ReferenceWindow(
            (0..=hp)
                .map(|i| self.at(t + i as f64 * dt).unwrap_or(last))
                .collect(),
        )
    }
}
