use nalgebra::{Matrix2, Matrix3, Matrix3x2};

use super::MpcConfig;
use crate::error::Result;
use crate::ts::TsModel;
use crate::weights::StateBox;

const RICCATI_TOL: f64 = 1e-10;
const RICCATI_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalIngredients {
    pub p: Matrix3<f64>,
    pub state_box: Option<StateBox>,
    /// False when the Riccati recursion failed and `P = 10·Q` was used.
    pub riccati_converged: bool,
}

/// Fixed point of `P = Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA`, iterated from `P = Q`
/// until successive iterates differ by less than `1e-10` (relative).
pub fn dare(
    a: &Matrix3<f64>,
    b: &Matrix3x2<f64>,
    q: &Matrix3<f64>,
    r: &Matrix2<f64>,
) -> Option<Matrix3<f64>> {
    let mut p = *q;
    for _ in 0..RICCATI_MAX_ITER {
        let bp = b.transpose() * p;
        let s = r + bp * b;
        let k = s.try_inverse()? * bp * a;
        let next = q + a.transpose() * p * a - a.transpose() * p * b * k;
        let next = (next + next.transpose()) * 0.5;
        if !next.iter().all(|v| v.is_finite()) {
            return None;
        }
        let diff = (next - p).amax();
        p = next;
        if diff <= RICCATI_TOL * p.amax().max(1.0) {
            return Some(p);
        }
    }
    None
}

/// Terminal weight for tracking. The zero vy reference is not a steady-state
/// target (a car holding a yaw rate also holds some side slip), so vy keeps
/// only its stage weight and no coupling to vx or ω. Otherwise the terminal
/// term trades vx and ω accuracy for a vy it cannot reach.
pub fn tracking_weight(p: &Matrix3<f64>, q: &Matrix3<f64>) -> Matrix3<f64> {
    let mut w = *p;
    for j in 0..3 {
        w[(1, j)] = 0.0;
        w[(j, 1)] = 0.0;
    }
    w[(1, 1)] = q[(1, 1)];
    w
}

/// Terminal weight from the Riccati recursion of the model blended at the
/// domain center, and the terminal box. An explicit `cfg.p` takes precedence.
pub fn terminal_ingredients(model: &TsModel, cfg: &MpcConfig) -> Result<TerminalIngredients> {
    let q = cfg.q.to_matrix(3, "mpc.q", false)?;
    let q = Matrix3::from_fn(|i, j| q[(i, j)]);
    if let Some(p) = &cfg.p {
        let p = p.to_matrix(3, "mpc.p", false)?;
        return Ok(TerminalIngredients {
            p: Matrix3::from_fn(|i, j| p[(i, j)]),
            state_box: cfg.terminal_box,
            riccati_converged: true,
        });
    }
    let r = cfg.r.to_matrix(2, "mpc.r", true)?;
    let r = Matrix2::from_fn(|i, j| r[(i, j)]);
    let center = model.instantiate(&model.domain_center())?;
    let (p, ok) = match dare(&center.a, &center.b, &q, &r) {
        Some(p) if p.symmetric_eigen().eigenvalues.min() > 0.0 => (p, true),
        _ => {
            log::warn!("terminal Riccati recursion did not converge; using P = 10 Q");
            (q * 10.0, false)
        }
    };
    Ok(TerminalIngredients {
        p,
        state_box: cfg.terminal_box,
        riccati_converged: ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracking_weight_decouples_vy() {
        let p = Matrix3::new(4.0, 0.3, 0.1, 0.3, 0.05, -0.02, 0.1, -0.02, 0.4);
        let q = Matrix3::from_diagonal(&nalgebra::Vector3::new(0.2, 1e-6, 0.3));
        let w = tracking_weight(&p, &q);
        assert_eq!(
            w,
            Matrix3::new(4.0, 0.0, 0.1, 0.0, 1e-6, 0.0, 0.1, 0.0, 0.4)
        );
    }

    #[test]
    fn zero_dynamics_give_q() {
        let q = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 2.0, 3.0));
        let p = dare(
            &Matrix3::zeros(),
            &Matrix3x2::zeros(),
            &q,
            &Matrix2::identity(),
        )
        .unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn scalar_case_matches_closed_form() {
        // decoupled channels: the first behaves as a = 0.5, b = 1, q = r = 1
        let a = Matrix3::from_diagonal(&nalgebra::Vector3::new(0.5, 0.0, 0.0));
        let mut b = Matrix3x2::zeros();
        b[(0, 0)] = 1.0;
        let p = dare(&a, &b, &Matrix3::identity(), &Matrix2::identity()).unwrap();
        // p = 1 + 0.25p − 0.25p²/(1 + p), i.e. p² − 0.25p − 1 = 0
        let exact = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        assert!((p[(0, 0)] - exact).abs() < 1e-9, "{}", p[(0, 0)]);
        assert!((p[(0, 0)] - 1.132782).abs() < 1e-6);
        assert_eq!(p[(1, 1)], 1.0);
    }

    #[test]
    fn unstabilizable_pair_fails() {
        let a = Matrix3::identity() * 2.0;
        assert!(dare(
            &a,
            &Matrix3x2::zeros(),
            &Matrix3::identity(),
            &Matrix2::identity()
        )
        .is_none());
    }
}
