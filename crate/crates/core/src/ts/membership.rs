use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generalized bell membership function `1 / (1 + |(z − c)/a|^(2b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GBellParams {
    /// Half-width: the degree is 0.5 at `c ± a`.
    pub a: f64,
    /// Shape exponent.
    pub b: f64,
    /// Center.
    pub c: f64,
}

impl GBellParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let p = Self { a, b, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a > 0.0
            && self.b > 0.0
            && self.a.is_finite()
            && self.b.is_finite()
            && self.c.is_finite()
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "bell membership needs a > 0 and b > 0, got a = {}, b = {}",
                self.a, self.b
            )))
        }
    }

    pub fn degree(&self, z: f64) -> f64 {
        gbell(z, self)
    }
}

pub fn gbell(z: f64, p: &GBellParams) -> f64 {
    let u = ((z - p.c) / p.a).abs();
    1.0 / (1.0 + u.powf(2.0 * p.b))
}

/// Membership degree and its partial derivatives with respect to `(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GBellJet {
    pub value: f64,
    pub da: f64,
    pub db: f64,
    pub dc: f64,
}

pub fn gbell_jet(z: f64, p: &GBellParams) -> GBellJet {
    let dz = z - p.c;
    let u = (dz / p.a).abs();
    if u == 0.0 {
        return GBellJet {
            value: 1.0,
            da: 0.0,
            db: 0.0,
            dc: 0.0,
        };
    }
    let t = u.powf(2.0 * p.b);
    let value = 1.0 / (1.0 + t);
    let v2 = value * value;
    GBellJet {
        value,
        da: v2 * 2.0 * p.b * t / p.a,
        db: -v2 * 2.0 * t * u.ln(),
        dc: v2 * 2.0 * p.b * t / dz,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_examples() {
        let p = GBellParams::new(0.7, 1.3, 0.2).unwrap();
        assert_eq!(gbell(0.2, &p), 1.0);
        assert!((gbell(0.9, &p) - 0.5).abs() < 1e-15);
        assert!((gbell(-0.5, &p) - 0.5).abs() < 1e-15);
        let q = GBellParams::new(1.0, 2.0, 0.0).unwrap();
        assert!((gbell(2.0, &q) - 1.0 / 17.0).abs() < 1e-15);
        assert!((gbell(2.0, &q) - 0.058824).abs() < 1e-6);
    }

    #[test]
    fn non_integer_exponent_is_symmetric() {
        let p = GBellParams::new(0.5, 0.75, 1.0).unwrap();
        for d in [0.1, 0.4, 2.0] {
            assert!((gbell(1.0 + d, &p) - gbell(1.0 - d, &p)).abs() < 1e-14);
            assert!(gbell(1.0 - d, &p).is_finite());
        }
    }

    #[test]
    fn rejects_non_positive_width_or_shape() {
        assert!(GBellParams::new(0.0, 2.0, 0.0).is_err());
        assert!(GBellParams::new(1.0, -2.0, 0.0).is_err());
    }

    #[test]
    fn jet_matches_central_differences() {
        let p = GBellParams {
            a: 0.8,
            b: 1.7,
            c: 0.3,
        };
        for z in [-1.0, 0.0, 0.25, 0.9, 2.5] {
            let jet = gbell_jet(z, &p);
            let h = 1e-6;
            let fd = |q: GBellParams, r: GBellParams| (gbell(z, &q) - gbell(z, &r)) / (2.0 * h);
            let da = fd(
                GBellParams { a: p.a + h, ..p },
                GBellParams { a: p.a - h, ..p },
            );
            let db = fd(
                GBellParams { b: p.b + h, ..p },
                GBellParams { b: p.b - h, ..p },
            );
            let dc = fd(
                GBellParams { c: p.c + h, ..p },
                GBellParams { c: p.c - h, ..p },
            );
            assert!((jet.value - gbell(z, &p)).abs() < 1e-15);
            assert!((jet.da - da).abs() < 1e-8, "z={z}");
            assert!((jet.db - db).abs() < 1e-8, "z={z}");
            assert!((jet.dc - dc).abs() < 1e-8, "z={z}");
        }
    }
}
