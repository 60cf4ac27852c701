use super::data::RegressionSet;
use super::rls::{SqrtRls, DEFAULT_RIDGE};
use crate::error::{Error, Result};
use crate::ts::{
    lexicographic_rules, normalize, rule_firing, GBellParams, Rule, StateComponent, TsSubModel,
};

/// Least-squares consequents for fixed premises.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsequentFit {
    pub submodel: TsSubModel,
    /// Sum of squared one-step errors of the fitted sub-model.
    pub sse: f64,
    pub rank_deficient: bool,
}

/// Regression row `[μ̄_1·[z, 1], …, μ̄_Nv·[z, 1]]` written into `out`.
pub fn regressor(z: &[f64], weights: &[f64], out: &mut [f64]) {
    let stride = z.len() + 1;
    for (i, &w) in weights.iter().enumerate() {
        let block = &mut out[i * stride..(i + 1) * stride];
        for (b, &v) in block.iter_mut().zip(z) {
            *b = w * v;
        }
        block[stride - 1] = w;
    }
}

fn placeholder_rules(n_inputs: usize, n_mf: usize) -> Vec<Rule> {
    lexicographic_rules(n_inputs, n_mf)
        .into_iter()
        .map(|mf_index| Rule {
            mf_index,
            consequent: vec![0.0; n_inputs + 1],
        })
        .collect()
}

/// Single affine model `y ≈ θ·[z, 1]` over the whole set.
fn global_affine(set: &RegressionSet) -> Vec<f64> {
    let n = set.inputs.first().map_or(0, Vec::len) + 1;
    let mut rls = SqrtRls::new(n, DEFAULT_RIDGE, 1.0);
    let mut phi = vec![0.0; n];
    for (z, &y) in set.inputs.iter().zip(&set.outputs) {
        phi[..n - 1].copy_from_slice(z);
        phi[n - 1] = 1.0;
        rls.update(&mut phi, y);
    }
    rls.solve()
}

/// Fits every rule's affine consequent by sequential (square-root) RLS with
/// unit forgetting, which reproduces the batch regularized solution.
///
/// The regularization pulls each rule toward one global affine fit with
/// weight `spread_penalty` per sample. Without it, rules are free to take
/// large values of opposite sign that only cancel in the blend, and the
/// instantiated local matrices then say little about the local dynamics.
pub fn fit_consequents(
    set: &RegressionSet,
    target: StateComponent,
    mfs: &[Vec<GBellParams>],
    spread_penalty: f64,
) -> Result<ConsequentFit> {
    let n_inputs = mfs.len();
    let n_mf = mfs.first().map_or(0, Vec::len);
    let rules = placeholder_rules(n_inputs, n_mf);
    let dim = rules.len() * (n_inputs + 1);
    if set.len() < dim {
        return Err(Error::InsufficientData(format!(
            "{} samples for {dim} consequent parameters",
            set.len()
        )));
    }
    let prior = if spread_penalty > 0.0 {
        global_affine(set)
    } else {
        vec![0.0; n_inputs + 1]
    };
    let ridge = DEFAULT_RIDGE + spread_penalty * set.len() as f64;
    let mut rls = SqrtRls::new(dim, ridge, 1.0);
    let mut phi = vec![0.0; dim];
    let mut weights_cache = Vec::with_capacity(set.len());
    for (z, &y) in set.inputs.iter().zip(&set.outputs) {
        let degrees: Vec<Vec<f64>> = mfs
            .iter()
            .zip(z)
            .map(|(row, &v)| row.iter().map(|p| p.degree(v)).collect())
            .collect();
        let w = normalize(&rule_firing(&degrees, &rules))?;
        regressor(z, &w, &mut phi);
        let offset: f64 = z.iter().chain([&1.0]).zip(&prior).map(|(a, b)| a * b).sum();
        rls.update(&mut phi, y - offset);
        weights_cache.push(w);
    }
    let theta: Vec<f64> = rls
        .solve()
        .iter()
        .enumerate()
        .map(|(i, d)| d + prior[i % (n_inputs + 1)])
        .collect();
    let rank_deficient = rls.is_rank_deficient();
    if rank_deficient {
        log::warn!("{target:?} consequent fit is rank deficient (insufficient excitation); ridge prior active");
    }
    let consequents: Vec<Vec<f64>> = theta.chunks(n_inputs + 1).map(<[f64]>::to_vec).collect();
    let submodel = TsSubModel::grid(target, mfs.to_vec(), consequents)?;
    let mut sse = 0.0;
    for ((z, &y), w) in set.inputs.iter().zip(&set.outputs).zip(&weights_cache) {
        regressor(z, w, &mut phi);
        let pred: f64 = phi.iter().zip(&theta).map(|(a, b)| a * b).sum();
        sse += (y - pred).powi(2);
    }
    Ok(ConsequentFit {
        submodel,
        sse,
        rank_deficient,
    })
}
