use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{RunLog, StepRecord};
use crate::error::{Error, Result};
use crate::mhe::MheStatus;
use crate::mpc::{InputBounds, MpcStatus};

/// Slack on bound checks, for rounding in `u_k − u_{k−1}`.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateErrors {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandedRange {
    pub vx: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Violations {
    pub delta: usize,
    pub a: usize,
    pub d_delta: usize,
    pub d_a: usize,
    pub total: usize,
}

/// Milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub steps: usize,
    pub duration: f64,
    pub aborted: Option<String>,
    /// RMSE of `r − x` against the true state; the vy reference is zero.
    pub tracking_rmse: StateErrors,
    pub commanded_range: CommandedRange,
    /// Tracking RMSE over commanded range; absent for a constant reference.
    pub tracking_rmse_vx_fraction: Option<f64>,
    pub tracking_rmse_omega_fraction: Option<f64>,
    /// RMSE of `x̂ − x`.
    pub estimation_rmse: StateErrors,
    pub violations: Violations,
    pub mpc_solve_ms: TimingStats,
    pub mhe_solve_ms: TimingStats,
    pub mpc_fallbacks: usize,
    pub mhe_fallbacks: usize,
    pub mpc_scheduling_clipped: usize,
    pub mhe_scheduling_clipped: usize,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

fn rmse(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    (sum / n as f64).sqrt()
}

fn range(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    hi - lo
}

pub fn timing_stats(samples: &[f64]) -> TimingStats {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    TimingStats {
        mean: s.iter().sum::<f64>() / n as f64,
        median,
        p95: s[rank - 1],
        max: s[n - 1],
    }
}

pub fn count_violations(records: &[StepRecord], bounds: &InputBounds) -> Violations {
    let outside = |v: f64, b: [f64; 2]| v < b[0] - VIOLATION_TOL || v > b[1] + VIOLATION_TOL;
    let mut v = Violations::default();
    for r in records {
        v.delta += outside(r.delta, bounds.delta) as usize;
        v.a += outside(r.a, bounds.a) as usize;
        v.d_delta += outside(r.d_delta, bounds.d_delta) as usize;
        v.d_a += outside(r.d_a, bounds.d_a) as usize;
    }
    v.total = v.delta + v.a + v.d_delta + v.d_a;
    v
}

pub fn compute_metrics(log: &RunLog, bounds: &InputBounds) -> Result<Metrics> {
    let rec = &log.records;
    if rec.is_empty() {
        return Err(Error::InsufficientData("run log has no records".into()));
    }
    let tracking_rmse = StateErrors {
        vx: rmse(rec.iter().map(|r| r.vx_ref - r.vx)),
        vy: rmse(rec.iter().map(|r| r.vy)),
        omega: rmse(rec.iter().map(|r| r.omega_ref - r.omega)),
    };
    let commanded_range = CommandedRange {
        vx: range(rec.iter().map(|r| r.vx_ref)),
        omega: range(rec.iter().map(|r| r.omega_ref)),
    };
    let fraction = |e: f64, span: f64| (span > 0.0).then(|| e / span);
    let mpc_times: Vec<f64> = rec.iter().map(|r| r.mpc_solve_ms).collect();
    let mhe_times: Vec<f64> = rec.iter().map(|r| r.mhe_solve_ms).collect();
    let dt = if rec.len() > 1 {
        rec[1].t - rec[0].t
    } else {
        0.0
    };
    Ok(Metrics {
        steps: rec.len(),
        duration: rec[rec.len() - 1].t - rec[0].t + dt,
        aborted: log.aborted.clone(),
        tracking_rmse,
        commanded_range,
        tracking_rmse_vx_fraction: fraction(tracking_rmse.vx, commanded_range.vx),
        tracking_rmse_omega_fraction: fraction(tracking_rmse.omega, commanded_range.omega),
        estimation_rmse: StateErrors {
            vx: rmse(rec.iter().map(|r| r.vx_hat - r.vx)),
            vy: rmse(rec.iter().map(|r| r.vy_hat - r.vy)),
            omega: rmse(rec.iter().map(|r| r.omega_hat - r.omega)),
        },
        violations: count_violations(rec, bounds),
        mpc_solve_ms: timing_stats(&mpc_times),
        mhe_solve_ms: timing_stats(&mhe_times),
        mpc_fallbacks: rec
            .iter()
            .filter(|r| r.mpc_status != MpcStatus::Optimal)
            .count(),
        mhe_fallbacks: rec
            .iter()
            .filter(|r| r.mhe_status != MheStatus::Optimal)
            .count(),
        mpc_scheduling_clipped: rec.iter().filter(|r| r.mpc_scheduling_clipped).count(),
        mhe_scheduling_clipped: rec.iter().filter(|r| r.mhe_scheduling_clipped).count(),
    })
}
