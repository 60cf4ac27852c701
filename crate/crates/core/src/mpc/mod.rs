//! Predictive controller over the learned TS model: condensed QP in the input
//! increments with per-step scheduled dynamics.

mod condensed;
mod controller;
mod terminal;

use serde::{Deserialize, Serialize};

pub use condensed::{
    build_qp, plan_scheduling, predict_scheduling, scheduling_change, MpcQp, Prediction,
    SchedulingTrajectory,
};
pub use controller::{
    fallback_input, solve_mpc, DisturbanceObserver, MpcController, MpcSolution, MpcStatus,
};
pub use terminal::{dare, terminal_ingredients, tracking_weight, TerminalIngredients};

use crate::error::{Error, Result};
use crate::qp::QpSettings;
use crate::vehicle::{ControlInput, DynamicState};
use crate::weights::{check_bound, Bound, StateBox, Weight};

/// Input polytope `Π` and rate polytope `ΔΠ` as boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputBounds {
    pub delta: Bound,
    pub a: Bound,
    pub d_delta: Bound,
    pub d_a: Bound,
}

impl Default for InputBounds {
    fn default() -> Self {
        Self {
            delta: [-0.249, 0.249],
            a: [-1.0, 4.0],
            d_delta: [-0.05, 0.05],
            d_a: [-0.5, 0.5],
        }
    }
}

impl InputBounds {
    pub fn validate(&self) -> Result<()> {
        check_bound(self.delta, "delta")?;
        check_bound(self.a, "a")?;
        check_bound(self.d_delta, "d_delta")?;
        check_bound(self.d_a, "d_a")
    }

    pub fn input_lower(&self) -> [f64; 2] {
        [self.delta[0], self.a[0]]
    }

    pub fn input_upper(&self) -> [f64; 2] {
        [self.delta[1], self.a[1]]
    }

    pub fn rate_lower(&self) -> [f64; 2] {
        [self.d_delta[0], self.d_a[0]]
    }

    pub fn rate_upper(&self) -> [f64; 2] {
        [self.d_delta[1], self.d_a[1]]
    }

    /// Nearest input to `u` that lies in `Π` and within one rate step of `prev`.
    /// Where the two boxes do not intersect, `Π` wins.
    pub fn clip(&self, u: &ControlInput, prev: &ControlInput) -> ControlInput {
        let (lo, hi) = (self.input_lower(), self.input_upper());
        let (rlo, rhi) = (self.rate_lower(), self.rate_upper());
        let p = [prev.delta, prev.a];
        let raw = [u.delta, u.a];
        let out: [f64; 2] = std::array::from_fn(|i| {
            let v = raw[i].clamp(p[i] + rlo[i], p[i] + rhi[i]);
            v.clamp(lo[i], hi[i])
        });
        ControlInput::new(out[0], out[1])
    }

    pub fn contains(&self, u: &ControlInput, tol: f64) -> bool {
        let (lo, hi) = (self.input_lower(), self.input_upper());
        u.delta >= lo[0] - tol && u.delta <= hi[0] + tol && u.a >= lo[1] - tol && u.a <= hi[1] + tol
    }

    pub fn rate_contains(&self, du: &ControlInput, tol: f64) -> bool {
        let (lo, hi) = (self.rate_lower(), self.rate_upper());
        du.delta >= lo[0] - tol
            && du.delta <= hi[0] + tol
            && du.a >= lo[1] - tol
            && du.a <= hi[1] + tol
    }
}

/// What the terminal weight penalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalCost {
    /// `(r − x)ᵀW(r − x)` at the end of the horizon, with `W` the terminal
    /// weight with its vy coupling removed (see [`tracking_weight`]).
    #[default]
    Tracking,
    /// `xᵀPx` at the end of the horizon.
    Absolute,
}

/// How the prediction model is taken from the TS system at each scheduling point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linearization {
    /// Blended rule matrices `(A(ζ), B(ζ), C(ζ))`.
    Instantiate,
    /// Tangent of the blended map, membership slopes included.
    #[default]
    Jacobian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub hp: usize,
    pub q: Weight,
    pub r: Weight,
    /// Terminal weight; computed from a Riccati recursion when absent.
    pub p: Option<Weight>,
    pub terminal_cost: TerminalCost,
    pub bounds: InputBounds,
    /// `None` disables the terminal constraint.
    pub terminal_box: Option<StateBox>,
    /// Use `ζ_k` for the whole horizon instead of the predicted trajectory.
    pub freeze_scheduling: bool,
    /// Solves per step. Each pass after the first re-instantiates the model
    /// along the plan just found and solves again.
    pub scheduling_passes: usize,
    pub linearization: Linearization,
    /// Filter gain of the model-error observer in `[0, 1]`; 0 disables it.
    pub disturbance_gain: f64,
    pub solver: QpSettings,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            hp: 6,
            q: Weight::scaled_diag(0.65, &[0.4, 1e-6, 0.6]),
            r: Weight::scaled_diag(0.35, &[0.7, 0.3]),
            p: None,
            terminal_cost: TerminalCost::Tracking,
            bounds: InputBounds::default(),
            terminal_box: Some(StateBox::default()),
            freeze_scheduling: false,
            scheduling_passes: 1,
            linearization: Linearization::Jacobian,
            disturbance_gain: 0.1,
            solver: QpSettings::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hp == 0 {
            return Err(Error::InvalidParameter("mpc.hp must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.disturbance_gain) {
            return Err(Error::InvalidParameter(
                "mpc.disturbance_gain must lie in [0, 1]".into(),
            ));
        }
        if self.scheduling_passes == 0 {
            return Err(Error::InvalidParameter(
                "mpc.scheduling_passes must be at least 1".into(),
            ));
        }
        self.q.to_matrix(3, "mpc.q", false)?;
        self.r.to_matrix(2, "mpc.r", true)?;
        if let Some(p) = &self.p {
            p.to_matrix(3, "mpc.p", false)?;
        }
        self.bounds.validate()?;
        if let Some(b) = &self.terminal_box {
            b.validate()?;
        }
        Ok(())
    }
}

/// Tracking target for one step: `(vx_ref, 0, ω_ref)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub vx: f64,
    pub omega: f64,
}

impl Reference {
    pub const fn new(vx: f64, omega: f64) -> Self {
        Self { vx, omega }
    }

    pub fn as_state(&self) -> DynamicState {
        DynamicState::new(self.vx, 0.0, self.omega)
    }
}

/// References `r_k … r_{k+Hp}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWindow(pub Vec<Reference>);

impl ReferenceWindow {
    pub fn constant(r: Reference, hp: usize) -> Self {
        Self(vec![r; hp + 1])
    }

    pub fn horizon(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn check(&self, hp: usize) -> Result<()> {
        if self.0.len() != hp + 1 {
            return Err(Error::Dimension(format!(
                "reference window has {} entries, horizon {hp} needs {}",
                self.0.len(),
                hp + 1
            )));
        }
        Ok(())
    }
}
