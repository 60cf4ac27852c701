use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use super::terminal::tracking_weight;
use super::{Linearization, MpcConfig, ReferenceWindow, TerminalCost, TerminalIngredients};
use crate::error::Result;
use crate::qp::QpProblem;
use crate::ts::{AffineModel, SchedulingVector, TsModel};
use crate::vehicle::{ControlInput, DynamicState};

use super::controller::MpcSolution;

/// `ζ̂_k … ζ̂_{k+Hp−1}` after clamping to the model domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingTrajectory {
    pub zeta: Vec<SchedulingVector>,
    /// Whether entry `i` had to be clamped.
    pub clipped: Vec<bool>,
}

impl SchedulingTrajectory {
    pub fn any_clipped(&self) -> bool {
        self.clipped.iter().any(|&c| c)
    }
}

/// Scheduling over the horizon. With a previous solution its predicted
/// states and inputs are shifted one step and padded by repetition; on the
/// first call the planner references (with `vy = 0`) and the held input are
/// used. Entry 0 is always `(x̂_k, u_{k−1})`.
pub fn predict_scheduling(
    model: &TsModel,
    prev: Option<&MpcSolution>,
    refs: &ReferenceWindow,
    x_hat: &DynamicState,
    u_prev: &ControlInput,
    hp: usize,
) -> SchedulingTrajectory {
    let mut raw: Vec<(DynamicState, ControlInput)> = match prev {
        Some(p) if !p.x_pred.is_empty() && !p.u.is_empty() => (0..hp)
            .map(|i| {
                let x = p.x_pred[(i + 1).min(p.x_pred.len() - 1)];
                let u = p.u[(i + 1).min(p.u.len() - 1)];
                (x, u)
            })
            .collect(),
        _ => (0..hp)
            .map(|i| (refs.0[i.min(refs.0.len() - 1)].as_state(), *u_prev))
            .collect(),
    };
    raw[0] = (*x_hat, *u_prev);
    let mut zeta = Vec::with_capacity(hp);
    let mut clipped = Vec::with_capacity(hp);
    for (x, u) in raw {
        let c = model.clamp_to_domain(&SchedulingVector::new(&x, &u).0);
        zeta.push(c.zeta);
        clipped.push(c.clipped);
    }
    SchedulingTrajectory { zeta, clipped }
}

/// Scheduling read off a plan made at this same step: `ζ̂_{k+i} = (x_{k+i}, u_{k+i})`.
pub fn plan_scheduling(
    model: &TsModel,
    x_pred: &[DynamicState],
    u: &[ControlInput],
) -> SchedulingTrajectory {
    let mut zeta = Vec::with_capacity(u.len());
    let mut clipped = Vec::with_capacity(u.len());
    for (x, u) in x_pred.iter().zip(u) {
        let c = model.clamp_to_domain(&SchedulingVector::new(x, u).0);
        zeta.push(c.zeta);
        clipped.push(c.clipped);
    }
    SchedulingTrajectory { zeta, clipped }
}

/// Largest entrywise change between two scheduling trajectories.
pub fn scheduling_change(a: &SchedulingTrajectory, b: &SchedulingTrajectory) -> f64 {
    a.zeta
        .iter()
        .zip(&b.zeta)
        .flat_map(|(p, q)| p.0.iter().zip(&q.0).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// Predicted states as affine functions of `ΔU`: `x_i = Φ_i + Γ_i ΔU`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub phi: Vec<Vector3<f64>>,
    pub gamma: Vec<DMatrix<f64>>,
}

impl Prediction {
    pub fn states(&self, du: &DVector<f64>) -> Vec<DynamicState> {
        self.phi
            .iter()
            .zip(&self.gamma)
            .map(|(p, g)| {
                let x = p + g * du;
                DynamicState::new(x[0], x[1], x[2])
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MpcQp {
    pub qp: QpProblem,
    pub prediction: Prediction,
    /// Cost terms independent of `ΔU`, so that `J = ½ΔUᵀHΔU + fᵀΔU + constant`.
    pub constant: f64,
    pub models: Vec<AffineModel>,
}

impl MpcQp {
    pub fn cost(&self, du: &DVector<f64>) -> f64 {
        self.qp.objective(du) + self.constant
    }
}

/// `S_i` maps `ΔU` to `u_{k+i} − u_{k−1}`.
fn cumsum_row(i: usize, channel: usize, n: usize) -> DVector<f64> {
    let mut row = DVector::zeros(n);
    for j in 0..=i {
        row[2 * j + channel] = 1.0;
    }
    row
}

/// Condensed QP in `ΔU = [Δu_k; …; Δu_{k+Hp−1}]`.
///
/// `disturbance` is added to every predicted step.
///
/// Cost: `Σ_{i=0}^{Hp−1} ‖r_i − x_i‖²_Q + ‖Δu_i‖²_R` plus the terminal term on
/// `x_Hp`; the `i = 0` state term is constant since `x_0 = x̂_k`.
pub fn build_qp(
    model: &TsModel,
    x_hat: &DynamicState,
    u_prev: &ControlInput,
    refs: &ReferenceWindow,
    sched: &SchedulingTrajectory,
    disturbance: &Vector3<f64>,
    cfg: &MpcConfig,
    terminal: &TerminalIngredients,
) -> Result<MpcQp> {
    let hp = cfg.hp;
    refs.check(hp)?;
    let n = 2 * hp;
    let q = to_m3(&cfg.q.to_matrix(3, "mpc.q", false)?);
    let r = cfg.r.to_matrix(2, "mpc.r", true)?;
    let p = terminal.p;

    let local = |z| match cfg.linearization {
        Linearization::Instantiate => model.instantiate(z),
        Linearization::Jacobian => model.linearize(z),
    };
    let models: Vec<AffineModel> = if cfg.freeze_scheduling {
        vec![local(&sched.zeta[0])?; hp]
    } else {
        sched.zeta.iter().map(local).collect::<Result<_>>()?
    };

    let u0 = Vector2::new(u_prev.delta, u_prev.a);
    let mut phi = vec![x_hat.to_vector()];
    let mut gamma = vec![DMatrix::zeros(3, n)];
    for (i, m) in models.iter().enumerate() {
        let mut s = DMatrix::zeros(2, n);
        for j in 0..=i {
            s[(0, 2 * j)] = 1.0;
            s[(1, 2 * j + 1)] = 1.0;
        }
        let a = DMatrix::from_column_slice(3, 3, m.a.as_slice());
        let b = DMatrix::from_column_slice(3, 2, m.b.as_slice());
        phi.push(m.a * phi[i] + m.b * u0 + m.c + disturbance);
        gamma.push(&a * &gamma[i] + &b * s);
    }

    let mut h = DMatrix::zeros(n, n);
    let mut f = DVector::zeros(n);
    let r0 = refs.0[0].as_state().to_vector();
    let e0 = r0 - phi[0];
    let mut constant = e0.dot(&(q * e0));
    for i in 1..=hp {
        let (w, target) = if i < hp {
            (q, refs.0[i].as_state().to_vector())
        } else {
            match cfg.terminal_cost {
                TerminalCost::Tracking => {
                    (tracking_weight(&p, &q), refs.0[hp].as_state().to_vector())
                }
                TerminalCost::Absolute => (p, Vector3::zeros()),
            }
        };
        let w = DMatrix::from_column_slice(3, 3, w.as_slice());
        let d = DVector::from_column_slice((phi[i] - target).as_slice());
        let wg = &w * &gamma[i];
        h += gamma[i].transpose() * &wg * 2.0;
        f += wg.transpose() * &d * 2.0;
        constant += d.dot(&(&w * &d));
    }
    for i in 0..hp {
        for a in 0..2 {
            for b in 0..2 {
                h[(2 * i + a, 2 * i + b)] += 2.0 * r[(a, b)];
            }
        }
    }
    h = (&h + h.transpose()) * 0.5;

    let (ilo, ihi) = (cfg.bounds.input_lower(), cfg.bounds.input_upper());
    let (rlo, rhi) = (cfg.bounds.rate_lower(), cfg.bounds.rate_upper());
    let lb = DVector::from_fn(n, |k, _| rlo[k % 2]);
    let ub = DVector::from_fn(n, |k, _| rhi[k % 2]);

    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for i in 0..hp {
        for c in 0..2 {
            let s = cumsum_row(i, c, n);
            let base = u0[c];
            if ihi[c].is_finite() {
                rows.push(s.clone());
                rhs.push(ihi[c] - base);
            }
            if ilo[c].is_finite() {
                rows.push(-s);
                rhs.push(base - ilo[c]);
            }
        }
    }
    if let Some(tb) = &terminal.state_box {
        let (xlo, xhi) = (tb.lower(), tb.upper());
        for c in 0..3 {
            let g = gamma[hp].row(c).transpose();
            if xhi[c].is_finite() {
                rows.push(g.clone());
                rhs.push(xhi[c] - phi[hp][c]);
            }
            if xlo[c].is_finite() {
                rows.push(-g);
                rhs.push(phi[hp][c] - xlo[c]);
            }
        }
    }
    let a_in = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let b_in = DVector::from_vec(rhs);

    let qp = QpProblem::new(h, f)
        .with_inequalities(a_in, b_in)
        .with_bounds(lb, ub);
    Ok(MpcQp {
        qp,
        prediction: Prediction { phi, gamma },
        constant,
        models,
    })
}

fn to_m3(m: &DMatrix<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[(i, j)])
}
