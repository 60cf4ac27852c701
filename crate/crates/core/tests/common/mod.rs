//! Test-only oracles that do not share code paths with the library algorithms.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

use tsdrive::anfis::{generate_excitation, identify, ExcitationConfig, LearnConfig};
use tsdrive::qp::QpProblem;
use tsdrive::{TsModel, VehicleParams};

/// Exhaustive active-set enumeration for small strictly convex QPs.
///
/// Every subset of at most `n` constraints is treated as active, its KKT
/// system solved, and the feasible candidate with the lowest objective kept.
/// Exponential in the constraint count; only meant for `n ≤ 6`.
pub fn enumerate_active_sets(qp: &QpProblem) -> Option<(DVector<f64>, f64)> {
    let n = qp.n();
    // All constraints as rows g·x ≤ h (equalities always active).
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..qp.b_in.len() {
        rows.push((qp.a_in.row(i).transpose(), qp.b_in[i]));
    }
    for i in 0..n {
        if qp.ub[i].is_finite() {
            let mut g = DVector::zeros(n);
            g[i] = 1.0;
            rows.push((g, qp.ub[i]));
        }
        if qp.lb[i].is_finite() {
            let mut g = DVector::zeros(n);
            g[i] = -1.0;
            rows.push((g, -qp.lb[i]));
        }
    }
    let eq: Vec<(DVector<f64>, f64)> = (0..qp.b_eq.len())
        .map(|i| (qp.a_eq.row(i).transpose(), qp.b_eq[i]))
        .collect();
    let m = rows.len();
    let feasible = |x: &DVector<f64>| {
        rows.iter().all(|(g, h)| g.dot(x) <= h + 1e-9)
            && eq.iter().all(|(g, h)| (g.dot(x) - h).abs() < 1e-9)
    };
    let mut best: Option<(DVector<f64>, f64)> = None;
    let max_active = n.saturating_sub(eq.len());
    let mut subset = Vec::new();
    fn recurse(
        start: usize,
        m: usize,
        max_active: usize,
        subset: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        visit(subset);
        if subset.len() == max_active {
            return;
        }
        for i in start..m {
            subset.push(i);
            recurse(i + 1, m, max_active, subset, visit);
            subset.pop();
        }
    }
    let mut visit = |active: &[usize]| {
        let k = active.len() + eq.len();
        let dim = n + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, n).copy_from(&(-&qp.f));
        let all = active.iter().map(|&i| &rows[i]).chain(eq.iter());
        for (r, (g, h)) in all.enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = g[j];
                kkt[(j, n + r)] = g[j];
            }
            rhs[n + r] = *h;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            return;
        };
        let x = sol.rows(0, n).into_owned();
        if x.iter().any(|v| !v.is_finite()) || !feasible(&x) {
            return;
        }
        let obj = qp.objective(&x);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((x, obj));
        }
    };
    recurse(0, m, max_active, &mut subset, &mut visit);
    best
}

/// Random strictly convex QP with a box and a few general inequalities that
/// keep the origin strictly feasible.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, m_in: usize) -> QpProblem {
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let a_in = DMatrix::from_fn(m_in, n, |_, _| rng.random_range(-1.0..1.0));
    let b_in = DVector::from_fn(m_in, |_, _| rng.random_range(0.1..1.0));
    let lb = DVector::from_fn(n, |_, _| rng.random_range(-1.5..-0.2));
    let ub = DVector::from_fn(n, |_, _| rng.random_range(0.2..1.5));
    QpProblem::new(h, f)
        .with_inequalities(a_in, b_in)
        .with_bounds(lb, ub)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A model trained on a short excitation run, shared within one test binary.
pub fn quick_model() -> &'static TsModel {
    static MODEL: OnceLock<TsModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = ExcitationConfig {
            duration: 180.0,
            ..Default::default()
        };
        let data = generate_excitation(&VehicleParams::default(), &cfg, 21).expect("excitation");
        identify(
            &data,
            &LearnConfig {
                epochs: 3,
                ..Default::default()
            },
        )
        .expect("training")
        .0
    })
}
