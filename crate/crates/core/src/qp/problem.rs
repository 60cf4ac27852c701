use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues of `H` below this (relative to `max(1, ‖H‖)`) count as indefinite.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Dense convex QP:
///
/// ```text
/// minimize   ½ xᵀ H x + fᵀ x
/// subject to A_in x ≤ b_in,  A_eq x = b_eq,  lb ≤ x ≤ ub
/// ```
///
/// Infinite box bounds are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem of dimension `f.len()`.
    pub fn new(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let n = f.len();
        Self {
            h,
            f,
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn with_inequalities(mut self, a_in: DMatrix<f64>, b_in: DVector<f64>) -> Self {
        self.a_in = a_in;
        self.b_in = b_in;
        self
    }

    pub fn with_equalities(mut self, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Self {
        self.a_eq = a_eq;
        self.b_eq = b_eq;
        self
    }

    pub fn with_bounds(mut self, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        self.lb = lb;
        self.ub = ub;
        self
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let dim = |what: &str| {
            Err(Error::Dimension(format!(
                "QP {what} has inconsistent dimensions"
            )))
        };
        if self.h.shape() != (n, n) {
            return dim("Hessian");
        }
        if self.a_in.ncols() != n || self.a_in.nrows() != self.b_in.len() {
            return dim("inequality block");
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return dim("equality block");
        }
        if self.lb.len() != n || self.ub.len() != n {
            return dim("box");
        }
        if self.lb.iter().zip(self.ub.iter()).any(|(l, u)| l > u) {
            return Err(Error::InvalidParameter("QP box has lb > ub".into()));
        }
        let scale = self.h.amax().max(1.0);
        if (&self.h - self.h.transpose()).amax() > 1e-9 * scale {
            return Err(Error::InvalidParameter(
                "QP Hessian is not symmetric".into(),
            ));
        }
        let finite = self
            .h
            .iter()
            .chain(self.f.iter())
            .chain(self.a_in.iter())
            .chain(self.a_eq.iter())
            .chain(self.b_eq.iter())
            .all(|v| v.is_finite());
        if !finite || self.b_in.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter(
                "QP data contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Floors eigenvalues of an (almost) PSD Hessian at zero.
    ///
    /// Returns `true` when a repair was needed.
    pub fn repair_psd(&mut self) -> bool {
        if self.n() == 0 {
            return false;
        }
        let sym = (&self.h + self.h.transpose()) * 0.5;
        let scale = sym.amax().max(1.0);
        let eig = SymmetricEigen::new(sym.clone());
        let min = eig.eigenvalues.min();
        if min >= -PSD_TOLERANCE * scale {
            self.h = sym;
            return false;
        }
        log::warn!("QP Hessian is indefinite (min eigenvalue {min:.3e}); flooring eigenvalues");
        let floored = eig.eigenvalues.map(|l| l.max(0.0));
        self.h =
            &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
        self.h = (&self.h + self.h.transpose()) * 0.5;
        true
    }

    /// Writes a human-readable dump: a header line per block followed by
    /// row-major values, one matrix row per line.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.dump_string()).map_err(|e| Error::io(path, e))
    }

    pub fn dump_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# qp n={} m_in={} m_eq={} objective=0.5*x'Hx+f'x",
            self.n(),
            self.b_in.len(),
            self.b_eq.len()
        );
        let mut block = |name: &str, m: &DMatrix<f64>| {
            let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        };
        block("H", &self.h);
        block(
            "f",
            &DMatrix::from_row_slice(1, self.n(), self.f.as_slice()),
        );
        block("A_in", &self.a_in);
        block(
            "b_in",
            &DMatrix::from_row_slice(1, self.b_in.len(), self.b_in.as_slice()),
        );
        block("A_eq", &self.a_eq);
        block(
            "b_eq",
            &DMatrix::from_row_slice(1, self.b_eq.len(), self.b_eq.as_slice()),
        );
        block(
            "lb",
            &DMatrix::from_row_slice(1, self.n(), self.lb.as_slice()),
        );
        block(
            "ub",
            &DMatrix::from_row_slice(1, self.n(), self.ub.as_slice()),
        );
        out
    }
}

/// Lagrange multipliers in the sign convention of [`kkt_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct Duals {
    /// One per inequality row, `≥ 0` at optimality.
    pub ineq: DVector<f64>,
    /// One per equality row, free sign.
    pub eq: DVector<f64>,
    /// One per variable: positive when the upper bound is active, negative for the lower bound.
    pub bounds: DVector<f64>,
}

impl Duals {
    pub fn zeros(qp: &QpProblem) -> Self {
        Self {
            ineq: DVector::zeros(qp.b_in.len()),
            eq: DVector::zeros(qp.b_eq.len()),
            bounds: DVector::zeros(qp.n()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// `‖Hx + f + A_inᵀλ + A_eqᵀν + κ‖∞`.
    pub stationarity: f64,
    /// Largest constraint violation.
    pub primal: f64,
    /// Largest wrong-sign multiplier.
    pub dual: f64,
    /// `max |λ_i (A_in x − b_in)_i|` over inequality rows and active bounds.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

pub fn kkt_check(qp: &QpProblem, x: &DVector<f64>, duals: &Duals) -> KktResiduals {
    let mut grad = &qp.h * x + &qp.f;
    if !qp.b_in.is_empty() {
        grad += qp.a_in.transpose() * &duals.ineq;
    }
    if !qp.b_eq.is_empty() {
        grad += qp.a_eq.transpose() * &duals.eq;
    }
    grad += &duals.bounds;
    let stationarity = grad.amax();

    let slack_in = &qp.a_in * x - &qp.b_in;
    let eq_res = &qp.a_eq * x - &qp.b_eq;
    let mut primal = slack_in.iter().fold(0.0f64, |m, &s| m.max(s));
    primal = eq_res.iter().fold(primal, |m, &r| m.max(r.abs()));
    for i in 0..qp.n() {
        primal = primal.max(qp.lb[i] - x[i]).max(x[i] - qp.ub[i]);
    }

    let mut dual = duals.ineq.iter().fold(0.0f64, |m, &l| m.max(-l));
    let mut complementarity = duals
        .ineq
        .iter()
        .zip(slack_in.iter())
        .fold(0.0f64, |m, (l, s)| m.max((l * s).abs()));
    for i in 0..qp.n() {
        let k = duals.bounds[i];
        if k > 0.0 {
            if qp.ub[i].is_finite() {
                complementarity = complementarity.max((k * (x[i] - qp.ub[i])).abs());
            } else {
                dual = dual.max(k);
            }
        } else if k < 0.0 {
            if qp.lb[i].is_finite() {
                complementarity = complementarity.max((k * (x[i] - qp.lb[i])).abs());
            } else {
                dual = dual.max(-k);
            }
        }
    }
    KktResiduals {
        stationarity,
        primal,
        dual,
        complementarity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clamped_scalar() -> QpProblem {
        // (x − 1)² = ½·2x² − 2x + 1
        QpProblem::new(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, -2.0),
        )
        .with_inequalities(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.5),
        )
    }

    #[test]
    fn analytic_optimum_has_zero_residuals() {
        let qp = clamped_scalar();
        let x = DVector::from_element(1, 0.5);
        let duals = Duals {
            ineq: DVector::from_element(1, 1.0),
            ..Duals::zeros(&qp)
        };
        let r = kkt_check(&qp, &x, &duals);
        assert!(r.max() < 1e-12, "{r:?}");
    }

    #[test]
    fn non_optimal_point_reports_stationarity() {
        let qp = clamped_scalar();
        let r = kkt_check(&qp, &DVector::from_element(1, 0.0), &Duals::zeros(&qp));
        assert!((r.stationarity - 2.0).abs() < 1e-15);
        assert_eq!(r.primal, 0.0);
    }

    #[test]
    fn infeasible_point_reports_violation() {
        let qp = clamped_scalar().with_bounds(
            DVector::from_element(1, -1.0),
            DVector::from_element(1, 0.75),
        );
        let r = kkt_check(&qp, &DVector::from_element(1, 0.9), &Duals::zeros(&qp));
        assert!((r.primal - 0.4).abs() < 1e-15);
        let r = kkt_check(&qp, &DVector::from_element(1, -1.25), &Duals::zeros(&qp));
        assert!((r.primal - 0.25).abs() < 1e-15);
    }

    #[test]
    fn validation_catches_shape_errors() {
        let qp = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(3));
        assert!(qp.validate().is_err());
        let qp = QpProblem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DVector::zeros(2),
        );
        assert!(qp.validate().is_err());
        let qp = QpProblem::new(DMatrix::identity(1, 1), DVector::zeros(1))
            .with_bounds(DVector::from_element(1, 1.0), DVector::from_element(1, 0.0));
        assert!(qp.validate().is_err());
    }

    #[test]
    fn slightly_indefinite_hessian_is_floored() {
        let mut qp = QpProblem::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1e-6])),
            DVector::zeros(2),
        );
        assert!(qp.repair_psd());
        let eig = SymmetricEigen::new(qp.h.clone());
        assert!(eig.eigenvalues.min() > -1e-14);
        let mut ok = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2));
        assert!(!ok.repair_psd());
    }

    #[test]
    fn dump_has_header_and_blocks() {
        let text = clamped_scalar().dump_string();
        assert!(text.starts_with("# qp n=1 m_in=1 m_eq=0"));
        assert!(text.contains("\nA_in 1 1\n1e0\n"));
    }
}
