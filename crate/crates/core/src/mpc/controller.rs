use std::time::Instant;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::condensed::{build_qp, plan_scheduling, predict_scheduling, scheduling_change, MpcQp};
use super::terminal::{terminal_ingredients, TerminalIngredients};
use super::{InputBounds, MpcConfig, ReferenceWindow};
use crate::error::Result;
use crate::qp::{QpSolver, QpStatus, WarmStart};
use crate::ts::TsModel;
use crate::vehicle::{ControlInput, DynamicState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MpcStatus {
    Optimal,
    /// The QP hit its iteration limit; the fallback input was applied.
    MaxIter,
    /// The QP was infeasible; the fallback input was applied.
    Infeasible,
}

impl MpcStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MpcStatus::Optimal => "optimal",
            MpcStatus::MaxIter => "max_iter",
            MpcStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub du: Vec<ControlInput>,
    pub u: Vec<ControlInput>,
    /// `x_k … x_{k+Hp}`.
    pub x_pred: Vec<DynamicState>,
    pub objective: f64,
    /// Wall-clock seconds spent building and solving the QP.
    pub solve_time: f64,
    pub status: MpcStatus,
    pub iterations: usize,
    pub scheduling_clipped: bool,
    /// Raw decision vector, kept for warm starting.
    pub du_vector: DVector<f64>,
}

impl MpcSolution {
    pub fn first_input(&self) -> ControlInput {
        self.u[0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == MpcStatus::Optimal
    }
}

/// Refinement stops once the scheduling trajectory moves less than this.
const SCHEDULING_TOL: f64 = 1e-6;

/// Safety input when the QP fails: the previous plan's input for this step,
/// or the held input without a plan, clipped into `Π` and one rate step of
/// `u_prev`.
pub fn fallback_input(
    prev: Option<&MpcSolution>,
    u_prev: &ControlInput,
    bounds: &InputBounds,
) -> ControlInput {
    let wanted = prev.and_then(|p| p.u.get(1).copied()).unwrap_or(*u_prev);
    bounds.clip(&wanted, u_prev)
}

fn unpack(du: &DVector<f64>, u_prev: &ControlInput) -> (Vec<ControlInput>, Vec<ControlInput>) {
    let mut u = *u_prev;
    let mut dus = Vec::with_capacity(du.len() / 2);
    let mut us = Vec::with_capacity(du.len() / 2);
    for c in du.as_slice().chunks(2) {
        let d = ControlInput::new(c[0], c[1]);
        u = ControlInput::new(u.delta + d.delta, u.a + d.a);
        dus.push(d);
        us.push(u);
    }
    (dus, us)
}

/// One solve of the predictive control problem, optionally warm started.
#[allow(clippy::too_many_arguments)]
pub fn solve_mpc(
    model: &TsModel,
    x_hat: &DynamicState,
    u_prev: &ControlInput,
    refs: &ReferenceWindow,
    prev: Option<&MpcSolution>,
    disturbance: &Vector3<f64>,
    cfg: &MpcConfig,
    terminal: &TerminalIngredients,
    solver: &mut QpSolver,
) -> Result<MpcSolution> {
    let start = Instant::now();
    let hp = cfg.hp;
    refs.check(hp)?;
    let mut sched = predict_scheduling(model, prev, refs, x_hat, u_prev, hp);
    let mut warm = prev.filter(|p| p.du_vector.len() == 2 * hp).map(|p| {
        let mut x = DVector::zeros(2 * hp);
        x.rows_mut(0, 2 * hp - 2)
            .copy_from(&p.du_vector.rows(2, 2 * hp - 2));
        WarmStart { x, duals: None }
    });
    let mut iterations = 0;
    let mut accepted: Option<(MpcQp, DVector<f64>, bool)> = None;
    let mut status = MpcStatus::Optimal;
    for pass in 0..cfg.scheduling_passes {
        let mqp = build_qp(
            model,
            x_hat,
            u_prev,
            refs,
            &sched,
            disturbance,
            cfg,
            terminal,
        )?;
        let sol = solver.solve(&mqp.qp, warm.as_ref())?;
        iterations += sol.iterations;
        if sol.status != QpStatus::Optimal {
            // A failed refinement keeps the plan from the previous pass.
            if accepted.is_none() {
                status = match sol.status {
                    QpStatus::MaxIter => MpcStatus::MaxIter,
                    _ => MpcStatus::Infeasible,
                };
            }
            break;
        }
        let clipped = sched.any_clipped();
        if pass + 1 < cfg.scheduling_passes {
            let (_, us) = unpack(&sol.x, u_prev);
            let next = plan_scheduling(model, &mqp.prediction.states(&sol.x), &us);
            let settled = scheduling_change(&sched, &next) < SCHEDULING_TOL;
            sched = next;
            warm = Some(WarmStart {
                x: sol.x.clone(),
                duals: None,
            });
            accepted = Some((mqp, sol.x, clipped));
            if settled {
                break;
            }
        } else {
            accepted = Some((mqp, sol.x, clipped));
        }
    }
    let (du, x_pred, objective, scheduling_clipped) = match accepted {
        Some((mqp, du, clipped)) => (
            du.clone(),
            mqp.prediction.states(&du),
            mqp.cost(&du),
            clipped,
        ),
        None => {
            let u = fallback_input(prev, u_prev, &cfg.bounds);
            log::warn!(
                "predictive control QP {}; applying fallback input ({:.4}, {:.4})",
                status.as_str(),
                u.delta,
                u.a
            );
            let mut d = DVector::zeros(2 * hp);
            d[0] = u.delta - u_prev.delta;
            d[1] = u.a - u_prev.a;
            let mqp = build_qp(
                model,
                x_hat,
                u_prev,
                refs,
                &sched,
                disturbance,
                cfg,
                terminal,
            )?;
            (
                d.clone(),
                mqp.prediction.states(&d),
                mqp.cost(&d),
                sched.any_clipped(),
            )
        }
    };
    let (dus, us) = unpack(&du, u_prev);
    Ok(MpcSolution {
        x_pred,
        objective,
        du: dus,
        u: us,
        solve_time: start.elapsed().as_secs_f64(),
        status,
        iterations,
        scheduling_clipped,
        du_vector: du,
    })
}

/// Additive model-error estimate: the one-step residual
/// `x̂_k − f(x̂_{k−1}, u_{k−1})` of the TS model, low-pass filtered.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceObserver {
    gain: f64,
    last: Option<DynamicState>,
    estimate: Vector3<f64>,
}

impl DisturbanceObserver {
    pub fn new(gain: f64) -> Self {
        Self {
            gain,
            last: None,
            estimate: Vector3::zeros(),
        }
    }

    pub fn estimate(&self) -> Vector3<f64> {
        self.estimate
    }

    pub fn reset(&mut self) {
        self.last = None;
        self.estimate = Vector3::zeros();
    }

    /// `u_before` is the input applied between the previous estimate and `x_hat`.
    pub fn update(
        &mut self,
        model: &TsModel,
        x_hat: &DynamicState,
        u_before: &ControlInput,
    ) -> Result<Vector3<f64>> {
        if let Some(prev) = self.last.filter(|_| self.gain > 0.0) {
            let zeta = model
                .clamp_to_domain(&[prev.vx, prev.vy, prev.omega, u_before.delta, u_before.a])
                .zeta;
            let residual =
                x_hat.to_vector() - model.predict_one_step(&prev, u_before, &zeta)?.to_vector();
            if residual.iter().all(|v| v.is_finite()) {
                self.estimate += (residual - self.estimate) * self.gain;
            }
        }
        self.last = Some(*x_hat);
        Ok(self.estimate)
    }
}

/// Receding-horizon controller: keeps the terminal ingredients, the solver
/// workspace and the previous plan between steps.
pub struct MpcController {
    pub config: MpcConfig,
    terminal: TerminalIngredients,
    solver: QpSolver,
    prev: Option<MpcSolution>,
    observer: DisturbanceObserver,
}

impl MpcController {
    pub fn new(model: &TsModel, config: MpcConfig) -> Result<Self> {
        config.validate()?;
        let terminal = terminal_ingredients(model, &config)?;
        Ok(Self {
            solver: QpSolver::new(config.solver),
            observer: DisturbanceObserver::new(config.disturbance_gain),
            config,
            terminal,
            prev: None,
        })
    }

    pub fn terminal(&self) -> &TerminalIngredients {
        &self.terminal
    }

    pub fn previous(&self) -> Option<&MpcSolution> {
        self.prev.as_ref()
    }

    pub fn disturbance(&self) -> Vector3<f64> {
        self.observer.estimate()
    }

    pub fn reset(&mut self) {
        self.prev = None;
        self.observer.reset();
    }

    /// Feeds the latest estimate to the disturbance observer; `u_before` is
    /// the input applied since the previous call.
    pub fn observe(
        &mut self,
        model: &TsModel,
        x_hat: &DynamicState,
        u_before: &ControlInput,
    ) -> Result<()> {
        self.observer.update(model, x_hat, u_before).map(|_| ())
    }

    pub fn step(
        &mut self,
        model: &TsModel,
        x_hat: &DynamicState,
        u_prev: &ControlInput,
        refs: &ReferenceWindow,
    ) -> Result<&MpcSolution> {
        let sol = solve_mpc(
            model,
            x_hat,
            u_prev,
            refs,
            self.prev.as_ref(),
            &self.observer.estimate(),
            &self.config,
            &self.terminal,
            &mut self.solver,
        )?;
        Ok(self.prev.insert(sol))
    }
}
