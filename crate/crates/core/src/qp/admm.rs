//! Operator-splitting (ADMM) solver for dense convex QPs, with active-set
//! polishing of the final iterate.
//!
//! All constraints are stacked as `l ≤ Cx ≤ u` with `C = [A_in; A_eq; I_box]`,
//! where only variables with at least one finite bound get a box row. The
//! iteration is the usual relaxed ADMM on `(x, z, y)`:
//!
//! ```text
//! (H + σI + Cᵀ diag(ρ) C) x̃ = σx − f + Cᵀ(ρ∘z − y)
//! x⁺ = αx̃ + (1 − α)x,  ẑ = αCx̃ + (1 − α)z
//! z⁺ = Π_[l,u](ẑ + y/ρ),  y⁺ = y + ρ∘(ẑ − z⁺)
//! ```

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::problem::{kkt_check, Duals, KktResiduals, QpProblem};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    /// Initial step size.
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    pub adaptive_rho: bool,
    pub adaptive_rho_interval: usize,
    pub eps_prim_inf: f64,
    pub polish: bool,
    /// Record the combined residual of every iteration in the solution.
    pub record_history: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            adaptive_rho_interval: 50,
            eps_prim_inf: 1e-7,
            polish: true,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    PrimalInfeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub duals: Duals,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub polished: bool,
    pub kkt: KktResiduals,
    /// Primal infeasibility certificate `‖Cᵀδy‖∞ / ‖δy‖∞` when infeasible.
    pub infeasibility_certificate: Option<f64>,
    /// `r_prim + r_dual` per iteration, when requested.
    pub residual_history: Vec<f64>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Primal/dual starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub duals: Option<Duals>,
}

impl From<&QpSolution> for WarmStart {
    fn from(s: &QpSolution) -> Self {
        Self {
            x: s.x.clone(),
            duals: Some(s.duals.clone()),
        }
    }
}

/// Stacked constraint data `l ≤ Cx ≤ u`.
struct Stacked {
    c: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    m_in: usize,
    m_eq: usize,
    /// Variable index of each box row.
    box_vars: Vec<usize>,
}

impl Stacked {
    fn new(qp: &QpProblem) -> Self {
        let n = qp.n();
        let m_in = qp.b_in.len();
        let m_eq = qp.b_eq.len();
        let box_vars: Vec<usize> = (0..n)
            .filter(|&i| qp.lb[i].is_finite() || qp.ub[i].is_finite())
            .collect();
        let m = m_in + m_eq + box_vars.len();
        let mut c = DMatrix::zeros(m, n);
        let mut l = DVector::zeros(m);
        let mut u = DVector::zeros(m);
        c.rows_mut(0, m_in).copy_from(&qp.a_in);
        for i in 0..m_in {
            l[i] = f64::NEG_INFINITY;
            u[i] = qp.b_in[i];
        }
        c.rows_mut(m_in, m_eq).copy_from(&qp.a_eq);
        for i in 0..m_eq {
            l[m_in + i] = qp.b_eq[i];
            u[m_in + i] = qp.b_eq[i];
        }
        for (k, &v) in box_vars.iter().enumerate() {
            let r = m_in + m_eq + k;
            c[(r, v)] = 1.0;
            l[r] = qp.lb[v];
            u[r] = qp.ub[v];
        }
        Self {
            c,
            l,
            u,
            m_in,
            m_eq,
            box_vars,
        }
    }

    fn m(&self) -> usize {
        self.l.len()
    }

    fn is_eq(&self, i: usize) -> bool {
        self.l[i] == self.u[i]
    }

    fn duals(&self, y: &DVector<f64>, n: usize) -> Duals {
        let mut bounds = DVector::zeros(n);
        for (k, &v) in self.box_vars.iter().enumerate() {
            bounds[v] += y[self.m_in + self.m_eq + k];
        }
        Duals {
            ineq: y.rows(0, self.m_in).into_owned(),
            eq: y.rows(self.m_in, self.m_eq).into_owned(),
            bounds,
        }
    }

    fn stacked_duals(&self, d: &Duals) -> DVector<f64> {
        let mut y = DVector::zeros(self.m());
        if d.ineq.len() == self.m_in && d.eq.len() == self.m_eq {
            y.rows_mut(0, self.m_in).copy_from(&d.ineq);
            y.rows_mut(self.m_in, self.m_eq).copy_from(&d.eq);
            for (k, &v) in self.box_vars.iter().enumerate() {
                if v < d.bounds.len() {
                    y[self.m_in + self.m_eq + k] = d.bounds[v];
                }
            }
        }
        y
    }

    fn project(&self, v: &mut DVector<f64>) {
        for i in 0..v.len() {
            v[i] = v[i].clamp(self.l[i], self.u[i]);
        }
    }
}

struct Factorization {
    h: DMatrix<f64>,
    c: DMatrix<f64>,
    rho: DVector<f64>,
    sigma: f64,
    chol: Cholesky<f64, Dyn>,
}

/// Reusable solver workspace; keeps the last factorization so a sequence of
/// problems sharing `H` and the constraint matrix skips refactoring.
#[derive(Default)]
pub struct QpSolver {
    pub settings: QpSettings,
    cache: Option<Factorization>,
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self {
            settings,
            cache: None,
        }
    }

    fn factor(
        &mut self,
        h: &DMatrix<f64>,
        c: &DMatrix<f64>,
        rho: &DVector<f64>,
    ) -> &Cholesky<f64, Dyn> {
        let sigma = self.settings.sigma;
        let hit = self
            .cache
            .as_ref()
            .is_some_and(|f| f.sigma == sigma && f.rho == *rho && f.h == *h && f.c == *c);
        if !hit {
            let mut k = h.clone();
            for i in 0..k.nrows() {
                k[(i, i)] += sigma;
            }
            let mut scaled = c.clone();
            for (i, mut row) in scaled.row_iter_mut().enumerate() {
                row *= rho[i];
            }
            k += c.transpose() * scaled;
            let chol = Cholesky::new(k).expect("H + σI + CᵀρC is positive definite for σ > 0");
            self.cache = Some(Factorization {
                h: h.clone(),
                c: c.clone(),
                rho: rho.clone(),
                sigma,
                chol,
            });
        }
        &self.cache.as_ref().expect("cache populated above").chol
    }

    pub fn solve(&mut self, problem: &QpProblem, warm: Option<&WarmStart>) -> Result<QpSolution> {
        problem.validate()?;
        let mut qp = problem.clone();
        qp.repair_psd();
        let s = self.settings;
        let n = qp.n();
        let st = Stacked::new(&qp);
        let m = st.m();

        let row_rho = |rho: f64| -> DVector<f64> {
            DVector::from_iterator(m, (0..m).map(|i| if st.is_eq(i) { 1e3 * rho } else { rho }))
        };
        let mut rho = s.rho;
        let mut rho_vec = row_rho(rho);

        let mut x = warm.map_or_else(|| DVector::zeros(n), |w| w.x.clone());
        if x.len() != n {
            x = DVector::zeros(n);
        }
        let mut z = &st.c * &x;
        st.project(&mut z);
        let mut y = warm
            .and_then(|w| w.duals.as_ref())
            .map_or_else(|| DVector::zeros(m), |d| st.stacked_duals(d));

        let mut history = Vec::new();
        let mut iterations = 0;
        let mut status = QpStatus::MaxIter;
        let mut certificate = None;
        let q = &qp.f;

        let polish_enabled = s.polish;
        for iter in 1..=s.max_iter {
            iterations = iter;
            let chol = self.factor(&qp.h, &st.c, &rho_vec);
            let rhs = s.sigma * &x - q + st.c.transpose() * (rho_vec.component_mul(&z) - &y);
            let x_tilde = chol.solve(&rhs);
            let z_tilde = &st.c * &x_tilde;
            let x_new = s.alpha * &x_tilde + (1.0 - s.alpha) * &x;
            let z_relax = s.alpha * z_tilde + (1.0 - s.alpha) * &z;
            let mut z_new = &z_relax + y.component_div(&rho_vec);
            st.project(&mut z_new);
            let y_new = &y + rho_vec.component_mul(&(&z_relax - &z_new));
            let dy = &y_new - &y;
            x = x_new;
            z = z_new;
            y = y_new;

            let cx = &st.c * &x;
            let hx = &qp.h * &x;
            let cty = st.c.transpose() * &y;
            let r_prim = if m > 0 { (&cx - &z).amax() } else { 0.0 };
            let r_dual = (&hx + q + &cty).amax();
            if s.record_history {
                history.push(r_prim + r_dual);
            }
            let prim_scale = cx.amax().max(z.amax());
            let dual_scale = hx.amax().max(cty.amax()).max(q.amax());
            let eps_prim = s.eps_abs + s.eps_rel * prim_scale;
            let eps_dual = s.eps_abs + s.eps_rel * dual_scale;

            if m > 0 {
                if let Some(cert) = primal_infeasibility(&st, &dy, s.eps_prim_inf) {
                    status = QpStatus::PrimalInfeasible;
                    certificate = Some(cert);
                    break;
                }
            }

            let converged = r_prim <= eps_prim && r_dual <= eps_dual;
            let near = r_prim <= 1e-3 * (1.0 + prim_scale) && r_dual <= 1e-3 * (1.0 + dual_scale);
            if polish_enabled && (converged || (near && iter % 10 == 0)) {
                if let Some((xp, yp)) = polish(&qp, &st, &z, &y) {
                    let duals = st.duals(&yp, n);
                    let kkt = kkt_check(&qp, &xp, &duals);
                    let tol = s.eps_abs + s.eps_rel * dual_scale.max(prim_scale);
                    if kkt.max() <= tol {
                        return Ok(self.finish(
                            problem,
                            xp,
                            duals,
                            QpStatus::Optimal,
                            iter,
                            true,
                            None,
                            history,
                        ));
                    }
                }
            }
            if converged {
                status = QpStatus::Optimal;
                break;
            }

            if s.adaptive_rho && m > 0 && iter % s.adaptive_rho_interval.max(1) == 0 {
                let num = r_prim / prim_scale.max(1e-30);
                let den = r_dual / dual_scale.max(1e-30);
                let ratio = (num / den.max(1e-30)).sqrt();
                let proposed = (rho * ratio).clamp(1e-6, 1e6);
                if proposed > 5.0 * rho || proposed < 0.2 * rho {
                    rho = proposed;
                    rho_vec = row_rho(rho);
                }
            }
        }

        let duals = st.duals(&y, n);
        Ok(self.finish(
            problem,
            x,
            duals,
            status,
            iterations,
            false,
            certificate,
            history,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        qp: &QpProblem,
        x: DVector<f64>,
        duals: Duals,
        status: QpStatus,
        iterations: usize,
        polished: bool,
        infeasibility_certificate: Option<f64>,
        residual_history: Vec<f64>,
    ) -> QpSolution {
        let kkt = kkt_check(qp, &x, &duals);
        QpSolution {
            objective: qp.objective(&x),
            x,
            duals,
            status,
            iterations,
            polished,
            kkt,
            infeasibility_certificate,
            residual_history,
        }
    }
}

/// One-shot solve with a fresh workspace.
pub fn solve(qp: &QpProblem, settings: QpSettings, warm: Option<&WarmStart>) -> Result<QpSolution> {
    QpSolver::new(settings).solve(qp, warm)
}

fn primal_infeasibility(st: &Stacked, dy: &DVector<f64>, eps: f64) -> Option<f64> {
    let norm = dy.amax();
    if norm < 1e-12 {
        return None;
    }
    let ctdy = (st.c.transpose() * dy).amax();
    if ctdy > eps * norm {
        return None;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        let d = dy[i];
        if d > 0.0 {
            if !st.u[i].is_finite() {
                return None;
            }
            support += st.u[i] * d;
        } else if d < 0.0 {
            if !st.l[i].is_finite() {
                return None;
            }
            support += st.l[i] * d;
        }
    }
    (support < -eps * norm).then_some(ctdy / norm)
}

/// Solves the equality-constrained KKT system on the active set guessed from
/// the ADMM iterate. Returns `None` when the guess is inconsistent.
fn polish(
    qp: &QpProblem,
    st: &Stacked,
    z: &DVector<f64>,
    y: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = qp.n();
    // (row, bound value, sign the multiplier must have: 0 for equalities)
    let mut active: Vec<(usize, f64, f64)> = Vec::new();
    for i in 0..st.m() {
        if st.is_eq(i) {
            active.push((i, st.u[i], 0.0));
        } else if st.l[i].is_finite() && z[i] - st.l[i] < -y[i] {
            active.push((i, st.l[i], -1.0));
        } else if st.u[i].is_finite() && st.u[i] - z[i] < y[i] {
            active.push((i, st.u[i], 1.0));
        }
    }
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&qp.f));
    for (r, &(i, b, _)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = st.c[(i, j)];
            kkt[(j, n + r)] = st.c[(i, j)];
        }
        rhs[n + r] = b;
    }
    let delta = 1e-9;
    let mut reg = kkt.clone();
    for i in 0..n {
        reg[(i, i)] += delta;
    }
    for i in n..dim {
        reg[(i, i)] -= delta;
    }
    let lu = reg.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..25 {
        let res = &rhs - &kkt * &sol;
        if res.amax() < 1e-14 * (1.0 + rhs.amax()) {
            break;
        }
        sol += lu.solve(&res)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let xp = sol.rows(0, n).into_owned();
    let mut yp = DVector::zeros(st.m());
    for (r, &(i, _, sign)) in active.iter().enumerate() {
        let v = sol[n + r];
        // Multipliers must push away from the bound they sit on.
        if sign * v < -1e-9 {
            return None;
        }
        yp[i] = v;
    }
    Some((xp, yp))
}
