//! Weight matrices and boxes as they appear in configuration files.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A symmetric weight given either by its diagonal or in full (row-major rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl Weight {
    pub fn diag(v: &[f64]) -> Self {
        Weight::Diagonal(v.to_vec())
    }

    pub fn scaled_diag(scale: f64, v: &[f64]) -> Self {
        Weight::Diagonal(v.iter().map(|x| scale * x).collect())
    }

    /// Dense `n × n` matrix; checks shape, symmetry and (semi)definiteness.
    pub fn to_matrix(&self, n: usize, name: &str, strictly_positive: bool) -> Result<DMatrix<f64>> {
        let m = match self {
            Weight::Diagonal(d) => {
                if d.len() != n {
                    return Err(Error::Dimension(format!(
                        "{name} needs {n} diagonal entries, got {}",
                        d.len()
                    )));
                }
                DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))
            }
            Weight::Full(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension(format!("{name} must be {n}x{n}")));
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
        };
        if m.iter().any(|v| !v.is_finite())
            || (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0)
        {
            return Err(Error::InvalidParameter(format!(
                "{name} must be finite and symmetric"
            )));
        }
        let min_eig = m.clone().symmetric_eigen().eigenvalues.min();
        let floor = -1e-12 * m.amax().max(1.0);
        if min_eig < floor || (strictly_positive && min_eig <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive {}definite (smallest eigenvalue {min_eig})",
                if strictly_positive { "" } else { "semi-" }
            )));
        }
        Ok(m)
    }
}

/// Closed interval `[lo, hi]` as a two-element array in config files.
pub type Bound = [f64; 2];

pub fn check_bound(b: Bound, name: &str) -> Result<()> {
    if b[0].is_nan() || b[1].is_nan() || b[0] > b[1] {
        return Err(Error::InvalidParameter(format!(
            "{name} bound [{}, {}] is empty",
            b[0], b[1]
        )));
    }
    Ok(())
}

/// Box on the state `(vx, vy, ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateBox {
    pub vx: Bound,
    pub vy: Bound,
    pub omega: Bound,
}

impl Default for StateBox {
    fn default() -> Self {
        Self {
            vx: [0.1, 2.7],
            vy: [-0.12, 0.12],
            omega: [-1.96, 1.96],
        }
    }
}

impl StateBox {
    pub fn lower(&self) -> [f64; 3] {
        [self.vx[0], self.vy[0], self.omega[0]]
    }

    pub fn upper(&self) -> [f64; 3] {
        [self.vx[1], self.vy[1], self.omega[1]]
    }

    pub fn validate(&self) -> Result<()> {
        check_bound(self.vx, "vx")?;
        check_bound(self.vy, "vy")?;
        check_bound(self.omega, "omega")
    }

    pub fn contains(&self, x: &[f64; 3], tol: f64) -> bool {
        let (lo, hi) = (self.lower(), self.upper());
        (0..3).all(|i| x[i] >= lo[i] - tol && x[i] <= hi[i] + tol)
    }
}
