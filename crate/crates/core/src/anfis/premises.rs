use crate::error::{Error, Result};
use crate::ts::{Domain, GBellParams};

/// Initial shape exponent of every membership function.
pub const INITIAL_SHAPE: f64 = 2.0;

/// Grid partition of each input interval: `n_mf` bells with equally spaced
/// centers (the endpoints for two bells) and half-width `span / (2(n_mf − 1))`,
/// so neighbouring bells cross at degree 0.5.
pub fn init_premises(domain: &Domain, n_mf: usize) -> Result<Vec<Vec<GBellParams>>> {
    if n_mf < 2 {
        return Err(Error::InvalidParameter(format!(
            "at least two membership functions per input are needed, got {n_mf}"
        )));
    }
    domain
        .intervals
        .iter()
        .enumerate()
        .map(|(i, iv)| {
            let span = iv.span();
            if !(span > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "scheduling variable {i} has a degenerate interval [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
            let gap = span / (n_mf - 1) as f64;
            (0..n_mf)
                .map(|k| GBellParams::new(0.5 * gap, INITIAL_SHAPE, iv.lo + k as f64 * gap))
                .collect()
        })
        .collect()
}
