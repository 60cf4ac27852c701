use super::data::RegressionSet;
use crate::error::Result;
use crate::ts::{gbell_jet, GBellJet, TsSubModel};

/// `∂SSE/∂(a, b, c)` for every membership function, indexed `[input][mf]`.
pub type PremiseGradient = Vec<Vec<[f64; 3]>>;

/// Sum of squared one-step errors of a sub-model on a regression set.
pub fn sse(set: &RegressionSet, model: &TsSubModel) -> Result<f64> {
    let mut acc = 0.0;
    for (z, &y) in set.inputs.iter().zip(&set.outputs) {
        acc += (y - model.eval(z)?).powi(2);
    }
    Ok(acc)
}

/// Analytic gradient of `Σ_k (y_k − ŷ_k)²` with consequents held fixed.
///
/// With `ŷ = Σ_r w_r f_r / S`, `∂ŷ/∂w_r = (f_r − ŷ)/S`, and a rule strength
/// `w_r` depends on membership `(j, m)` only if the rule selects `m` on input `j`.
pub fn premise_gradient(set: &RegressionSet, model: &TsSubModel) -> Result<PremiseGradient> {
    let n_in = model.n_inputs();
    let n_mf = model.n_mf();
    let mut grad = vec![vec![[0.0; 3]; n_mf]; n_in];
    let mut jets = vec![
        vec![
            GBellJet {
                value: 0.0,
                da: 0.0,
                db: 0.0,
                dc: 0.0
            };
            n_mf
        ];
        n_in
    ];
    let mut f = vec![0.0; model.rules.len()];
    let mut w = vec![0.0; model.rules.len()];
    // ∂ŷ/∂μ_{j,m} accumulated per sample
    let mut dmu = vec![vec![0.0; n_mf]; n_in];

    for (z, &y) in set.inputs.iter().zip(&set.outputs) {
        for j in 0..n_in {
            for m in 0..n_mf {
                jets[j][m] = gbell_jet(z[j], &model.mfs[j][m]);
            }
        }
        let mut s = 0.0;
        let mut num = 0.0;
        for (r, rule) in model.rules.iter().enumerate() {
            w[r] = rule
                .mf_index
                .iter()
                .enumerate()
                .map(|(j, &m)| jets[j][m].value)
                .product();
            let p = &rule.consequent;
            f[r] = z.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() + p[n_in];
            s += w[r];
            num += w[r] * f[r];
        }
        if s <= 0.0 {
            return Err(crate::Error::DegenerateFiring);
        }
        let yhat = num / s;
        let e = y - yhat;
        dmu.iter_mut().for_each(|row| row.fill(0.0));
        for (r, rule) in model.rules.iter().enumerate() {
            let dy_dw = (f[r] - yhat) / s;
            for (j, &m) in rule.mf_index.iter().enumerate() {
                let others: f64 = rule
                    .mf_index
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j)
                    .map(|(k, &mk)| jets[k][mk].value)
                    .product();
                dmu[j][m] += dy_dw * others;
            }
        }
        for j in 0..n_in {
            for m in 0..n_mf {
                let jet = &jets[j][m];
                let g = -2.0 * e * dmu[j][m];
                grad[j][m][0] += g * jet.da;
                grad[j][m][1] += g * jet.db;
                grad[j][m][2] += g * jet.dc;
            }
        }
    }
    Ok(grad)
}
