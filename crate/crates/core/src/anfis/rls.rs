//! Recursive least squares in square-root form.
//!
//! Instead of propagating the covariance `P = (ΦᵀΦ)⁻¹`, the upper-triangular
//! factor `R` of `ΦᵀΦ = RᵀR` and the rotated right-hand side `z = Qᵀy` are
//! updated one sample at a time with Givens rotations. This is algebraically
//! the classic RLS recursion but does not lose precision through the
//! `P − PφφᵀP/(1 + φᵀPφ)` cancellation.

/// Ridge weight of the prior `R₀ = √ridge · I`.
pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SqrtRls {
    n: usize,
    /// Row-major upper triangle, `r[i * n + j]` for `j ≥ i`.
    r: Vec<f64>,
    z: Vec<f64>,
    forgetting: f64,
    prior: f64,
    samples: usize,
}

impl SqrtRls {
    pub fn new(n: usize, ridge: f64, forgetting: f64) -> Self {
        let prior = ridge.sqrt();
        let mut r = vec![0.0; n * n];
        for i in 0..n {
            r[i * n + i] = prior;
        }
        Self {
            n,
            r,
            z: vec![0.0; n],
            forgetting,
            prior,
            samples: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Folds in one observation `y ≈ φᵀθ`. `phi` is used as scratch space.
    pub fn update(&mut self, phi: &mut [f64], y: f64) {
        debug_assert_eq!(phi.len(), self.n);
        let n = self.n;
        if self.forgetting != 1.0 {
            let s = self.forgetting.sqrt();
            self.r.iter_mut().for_each(|v| *v *= s);
            self.z.iter_mut().for_each(|v| *v *= s);
        }
        let mut t = y;
        for i in 0..n {
            let w = phi[i];
            if w == 0.0 {
                continue;
            }
            let rii = self.r[i * n + i];
            let rho = rii.hypot(w);
            let (c, s) = (rii / rho, w / rho);
            self.r[i * n + i] = rho;
            let row = &mut self.r[i * n + i + 1..(i + 1) * n];
            for (rij, wj) in row.iter_mut().zip(&mut phi[i + 1..]) {
                let (a, b) = (*rij, *wj);
                *rij = c * a + s * b;
                *wj = c * b - s * a;
            }
            let zi = self.z[i];
            self.z[i] = c * zi + s * t;
            t = c * t - s * zi;
        }
        self.samples += 1;
    }

    /// Back-substitutes `Rθ = z`.
    pub fn solve(&self) -> Vec<f64> {
        let n = self.n;
        let mut theta = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = self.z[i];
            for j in i + 1..n {
                acc -= self.r[i * n + j] * theta[j];
            }
            theta[i] = acc / self.r[i * n + i];
        }
        theta
    }

    /// True when some direction carried essentially no excitation, i.e. the
    /// solution there is set by the ridge prior rather than by data.
    pub fn is_rank_deficient(&self) -> bool {
        let n = self.n;
        let excitation = (0..n).map(|i| self.r[i * n + i].powi(2) - self.prior.powi(2));
        let max = excitation.clone().fold(0.0f64, f64::max);
        let min = excitation.fold(f64::INFINITY, f64::min);
        min <= 99.0 * DEFAULT_RIDGE || min < 1e-18 * max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_ridge_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, m) = (12, 500);
        let phi = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let mut rls = SqrtRls::new(n, DEFAULT_RIDGE, 1.0);
        for k in 0..m {
            let mut row: Vec<f64> = phi.row(k).iter().copied().collect();
            rls.update(&mut row, y[k]);
        }
        let theta = rls.solve();
        let normal = phi.transpose() * &phi + DMatrix::identity(n, n) * DEFAULT_RIDGE;
        let batch = normal.cholesky().unwrap().solve(&(phi.transpose() * &y));
        for i in 0..n {
            assert!((theta[i] - batch[i]).abs() < 1e-10);
        }
        assert!(!rls.is_rank_deficient());
    }

    #[test]
    fn zero_targets_give_zero_parameters() {
        let mut rls = SqrtRls::new(3, DEFAULT_RIDGE, 1.0);
        rls.update(&mut [1.0, 0.0, 0.0], 0.0);
        assert_eq!(rls.solve(), vec![0.0; 3]);
        assert!(rls.is_rank_deficient());
    }

    #[test]
    fn forgetting_tracks_a_parameter_change() {
        let mut rls = SqrtRls::new(1, DEFAULT_RIDGE, 0.9);
        for _ in 0..100 {
            rls.update(&mut [1.0], 1.0);
        }
        for _ in 0..100 {
            rls.update(&mut [1.0], 2.0);
        }
        assert!((rls.solve()[0] - 2.0).abs() < 1e-4);
    }
}
