//! Moving-horizon estimation of the full state from measured vx and ω.
//!
//! The window holds the `Hp + 1` most recent measurements `y_{k−Hp} … y_k`
//! and the `Hp` inputs between them, so `Hp` model transitions link `Hp + 1`
//! state estimates; the newest one is the current estimate. The decision
//! vector is `[x̂_0 … x̂_N, w_0 … w_{N−1}]` with the dynamics as equality
//! constraints and the measurement residuals `s_i = y_i − C x̂_i` substituted
//! into the cost `Σ wᵀQw + Σ sᵀRs`.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2x3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::{QpProblem, QpSettings, QpSolver, QpStatus, WarmStart};
use crate::ts::{AffineModel, SchedulingVector, TsModel};
use crate::vehicle::{ControlInput, DynamicState, Measurement};
use crate::weights::{StateBox, Weight};

/// Weight of the pull of the oldest window state toward the previous
/// estimate; only there to make short startup windows well posed.
pub const PRIOR_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MheConfig {
    pub hp: usize,
    pub q: Weight,
    pub r: Weight,
    pub state_box: StateBox,
    pub solver: QpSettings,
}

impl Default for MheConfig {
    fn default() -> Self {
        Self {
            hp: 10,
            q: Weight::scaled_diag(0.5, &[0.25, 0.5, 0.25]),
            r: Weight::scaled_diag(0.5, &[0.5, 0.5]),
            state_box: StateBox::default(),
            solver: QpSettings::default(),
        }
    }
}

impl MheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hp == 0 {
            return Err(Error::InvalidParameter("mhe.hp must be at least 1".into()));
        }
        self.q.to_matrix(3, "mhe.q", true)?;
        self.r.to_matrix(2, "mhe.r", true)?;
        self.state_box.validate()
    }
}

/// Output matrix: vx and ω are measured, vy is not.
pub fn output_matrix() -> Matrix2x3<f64> {
    Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferEntry {
    pub y: Measurement,
    /// Input applied over the step that ended at this measurement.
    pub u_before: ControlInput,
    /// Latest lateral-velocity estimate at this time, used for scheduling.
    pub vy_hint: f64,
}

/// Fixed-capacity FIFO of past measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBuffer {
    entries: VecDeque<BufferEntry>,
    capacity: usize,
}

impl MeasurementBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    /// Buffer for a horizon of `hp` transitions.
    pub fn for_horizon(hp: usize) -> Self {
        Self::new(hp + 1)
    }

    pub fn push(&mut self, y: Measurement, u_before: ControlInput, vy_hint: f64) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(BufferEntry {
            y,
            u_before,
            vy_hint,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &BufferEntry> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> Option<&BufferEntry> {
        self.entries.get(i)
    }

    fn set_vy_hints(&mut self, vy: &[f64]) {
        for (e, &v) in self.entries.iter_mut().zip(vy) {
            e.vy_hint = v;
        }
    }
}

#[derive(Debug, Clone)]
pub struct MheQp {
    pub qp: QpProblem,
    pub models: Vec<AffineModel>,
    /// Number of window states.
    pub n_states: usize,
    pub scheduling_clipped: bool,
}

impl MheQp {
    pub fn n_transitions(&self) -> usize {
        self.n_states - 1
    }
}

/// Window QP. `prior` is the state the oldest estimate is weakly pulled to.
pub fn build_qp(
    model: &TsModel,
    buffer: &MeasurementBuffer,
    cfg: &MheConfig,
    prior: &DynamicState,
) -> Result<MheQp> {
    if buffer.is_empty() {
        return Err(Error::InsufficientData("estimator buffer is empty".into()));
    }
    let q = cfg.q.to_matrix(3, "mhe.q", true)?;
    let r = cfg.r.to_matrix(2, "mhe.r", true)?;
    let c = output_matrix();
    let c = DMatrix::from_row_slice(
        2,
        3,
        &[
            c[(0, 0)],
            c[(0, 1)],
            c[(0, 2)],
            c[(1, 0)],
            c[(1, 1)],
            c[(1, 2)],
        ],
    );
    let ns = buffer.len();
    let nt = ns - 1;
    let n = 3 * ns + 3 * nt;
    let xi = |i: usize| 3 * i;
    let wi = |i: usize| 3 * ns + 3 * i;

    let mut clipped = false;
    let mut models = Vec::with_capacity(nt);
    for i in 0..nt {
        let e = &buffer.entries[i];
        let u = buffer.entries[i + 1].u_before;
        let raw = SchedulingVector::new(&DynamicState::new(e.y.vx, e.vy_hint, e.y.omega), &u);
        let cl = model.clamp_to_domain(&raw.0);
        clipped |= cl.clipped;
        models.push(model.instantiate(&cl.zeta)?);
    }

    let mut h = DMatrix::zeros(n, n);
    let mut f = DVector::zeros(n);
    let ctrc = c.transpose() * &r * &c * 2.0;
    for (i, e) in buffer.entries.iter().enumerate() {
        let y = DVector::from_column_slice(&[e.y.vx, e.y.omega]);
        let k = xi(i);
        let mut blk = h.view_mut((k, k), (3, 3));
        blk += &ctrc;
        let lin = -(c.transpose() * &r * &y) * 2.0;
        let mut seg = f.rows_mut(k, 3);
        seg += &lin;
    }
    for i in 0..nt {
        let k = wi(i);
        let mut blk = h.view_mut((k, k), (3, 3));
        blk += &q * 2.0;
    }
    let p = prior.to_array();
    for j in 0..3 {
        h[(j, j)] += 2.0 * PRIOR_WEIGHT;
        f[j] -= 2.0 * PRIOR_WEIGHT * p[j];
    }

    let mut a_eq = DMatrix::zeros(3 * nt, n);
    let mut b_eq = DVector::zeros(3 * nt);
    for (i, m) in models.iter().enumerate() {
        let u = buffer.entries[i + 1].u_before.to_vector();
        let rhs = m.b * u + m.c;
        for row in 0..3 {
            let eq = 3 * i + row;
            a_eq[(eq, xi(i + 1) + row)] = 1.0;
            for col in 0..3 {
                a_eq[(eq, xi(i) + col)] = -m.a[(row, col)];
            }
            a_eq[(eq, wi(i) + row)] = -1.0;
            b_eq[eq] = rhs[row];
        }
    }

    let (lo, hi) = (cfg.state_box.lower(), cfg.state_box.upper());
    let lb = DVector::from_fn(n, |k, _| {
        if k < 3 * ns {
            lo[k % 3]
        } else {
            f64::NEG_INFINITY
        }
    });
    let ub = DVector::from_fn(n, |k, _| if k < 3 * ns { hi[k % 3] } else { f64::INFINITY });

    let qp = QpProblem::new(h, f)
        .with_equalities(a_eq, b_eq)
        .with_bounds(lb, ub);
    Ok(MheQp {
        qp,
        models,
        n_states: ns,
        scheduling_clipped: clipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MheStatus {
    Optimal,
    /// The QP failed; the measurement-based fallback was used.
    Fallback,
}

impl MheStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MheStatus::Optimal => "optimal",
            MheStatus::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MheSolution {
    /// Window estimates, oldest first; the last entry is the current estimate.
    pub x_hat: Vec<DynamicState>,
    pub w: Vec<[f64; 3]>,
    /// Measurement residuals `y_i − C x̂_i`.
    pub s: Vec<[f64; 2]>,
    pub objective: f64,
    pub solve_time: f64,
    pub status: MheStatus,
    pub iterations: usize,
    /// Some window estimate sits on the vy bound.
    pub vy_at_bound: bool,
    pub scheduling_clipped: bool,
    decision: DVector<f64>,
}

impl MheSolution {
    pub fn current(&self) -> DynamicState {
        *self.x_hat.last().expect("window is never empty")
    }

    pub fn max_abs_w(&self) -> f64 {
        self.w.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_s(&self) -> f64 {
        self.s.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn residuals(buffer: &MeasurementBuffer, x_hat: &[DynamicState]) -> Vec<[f64; 2]> {
    buffer
        .entries
        .iter()
        .zip(x_hat)
        .map(|(e, x)| [e.y.vx - x.vx, e.y.omega - x.omega])
        .collect()
}

/// Solves the window problem. `previous` is the last current estimate (used
/// for the weak prior, the fallback and the startup vy); `warm` is the last
/// window solution.
pub fn solve_mhe(
    model: &TsModel,
    buffer: &MeasurementBuffer,
    cfg: &MheConfig,
    previous: Option<&DynamicState>,
    warm: Option<&MheSolution>,
    solver: &mut QpSolver,
) -> Result<MheSolution> {
    let start = Instant::now();
    let newest = buffer
        .entries
        .back()
        .ok_or_else(|| Error::InsufficientData("estimator buffer is empty".into()))?;
    let oldest = buffer.entries.front().expect("non-empty");
    let prior_vy = previous.map_or(0.0, |p| p.vy);
    let prior = DynamicState::new(oldest.y.vx, oldest.vy_hint, oldest.y.omega);
    let mqp = build_qp(model, buffer, cfg, &prior)?;
    let ns = mqp.n_states;
    let n = mqp.qp.n();

    let warm_start = warm.and_then(|w| shifted_warm_start(w, &mqp, buffer));
    let sol = solver.solve(&mqp.qp, warm_start.as_ref())?;
    let tol = 1e-6;
    if sol.status != QpStatus::Optimal {
        let x = DynamicState::new(newest.y.vx, prior_vy, newest.y.omega);
        log::warn!("estimator QP {:?}; using measurement fallback", sol.status);
        let x_hat = vec![x; ns];
        return Ok(MheSolution {
            s: residuals(buffer, &x_hat),
            x_hat,
            w: vec![[0.0; 3]; ns - 1],
            objective: f64::NAN,
            solve_time: start.elapsed().as_secs_f64(),
            status: MheStatus::Fallback,
            iterations: sol.iterations,
            vy_at_bound: false,
            scheduling_clipped: mqp.scheduling_clipped,
            decision: DVector::zeros(n),
        });
    }
    let x_hat: Vec<DynamicState> = (0..ns)
        .map(|i| DynamicState::new(sol.x[3 * i], sol.x[3 * i + 1], sol.x[3 * i + 2]))
        .collect();
    let w = (0..ns - 1)
        .map(|i| {
            let k = 3 * ns + 3 * i;
            [sol.x[k], sol.x[k + 1], sol.x[k + 2]]
        })
        .collect();
    let vy_box = cfg.state_box.vy;
    let vy_at_bound = x_hat
        .iter()
        .any(|x| x.vy <= vy_box[0] + tol || x.vy >= vy_box[1] - tol);
    Ok(MheSolution {
        s: residuals(buffer, &x_hat),
        x_hat,
        w,
        objective: sol.objective,
        solve_time: start.elapsed().as_secs_f64(),
        status: MheStatus::Optimal,
        iterations: sol.iterations,
        vy_at_bound,
        scheduling_clipped: mqp.scheduling_clipped,
        decision: sol.x,
    })
}

/// Previous window moved one step: states and disturbances shifted, the
/// new last state propagated with zero disturbance.
fn shifted_warm_start(
    prev: &MheSolution,
    mqp: &MheQp,
    buffer: &MeasurementBuffer,
) -> Option<WarmStart> {
    let ns = mqp.n_states;
    let old_ns = prev.x_hat.len();
    if prev.status != MheStatus::Optimal || old_ns == 0 {
        return None;
    }
    let n = mqp.qp.n();
    let mut x = DVector::zeros(n);
    // when the window is full it slides by one; while filling it only grows
    let shift = usize::from(old_ns == ns);
    for i in 0..ns {
        let src = i + shift;
        let s = if src < old_ns {
            prev.x_hat[src]
        } else {
            let last = x.rows(3 * (i - 1), 3).clone_owned();
            let m = &mqp.models[i - 1];
            let u = buffer.entries[i].u_before.to_vector();
            let next = m.a * nalgebra::Vector3::new(last[0], last[1], last[2]) + m.b * u + m.c;
            DynamicState::new(next[0], next[1], next[2])
        };
        x.rows_mut(3 * i, 3).copy_from_slice(&s.to_array());
    }
    for i in 0..ns - 1 {
        let src = i + shift;
        if src < prev.w.len() {
            x.rows_mut(3 * ns + 3 * i, 3).copy_from_slice(&prev.w[src]);
        }
    }
    Some(WarmStart { x, duals: None })
}

/// Estimator state carried across control ticks.
pub struct MovingHorizonEstimator {
    pub config: MheConfig,
    buffer: MeasurementBuffer,
    solver: QpSolver,
    last: Option<MheSolution>,
    estimate: Option<DynamicState>,
}

impl MovingHorizonEstimator {
    pub fn new(config: MheConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            buffer: MeasurementBuffer::for_horizon(config.hp),
            solver: QpSolver::new(config.solver),
            config,
            last: None,
            estimate: None,
        })
    }

    pub fn buffer(&self) -> &MeasurementBuffer {
        &self.buffer
    }

    pub fn last_solution(&self) -> Option<&MheSolution> {
        self.last.as_ref()
    }

    /// Adds the measurement taken at this tick (with the input applied since
    /// the previous one) and returns the updated estimate.
    pub fn update(
        &mut self,
        model: &TsModel,
        y: Measurement,
        u_before: ControlInput,
    ) -> Result<&MheSolution> {
        let vy_hint = self.estimate.map_or(0.0, |x| x.vy);
        self.buffer.push(y, u_before, vy_hint);
        let sol = solve_mhe(
            model,
            &self.buffer,
            &self.config,
            self.estimate.as_ref(),
            self.last.as_ref(),
            &mut self.solver,
        )?;
        if sol.status == MheStatus::Optimal {
            let vy: Vec<f64> = sol.x_hat.iter().map(|x| x.vy).collect();
            self.buffer.set_vy_hints(&vy);
        }
        self.estimate = Some(sol.current());
        Ok(self.last.insert(sol))
    }
}
