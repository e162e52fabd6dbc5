//! Diffusion coefficients `σ(x, r)` together with the growth constants they
//! are claimed to satisfy:
//!
//! * growth: `|σ(x, r)| ≤ K + δ |r|^{(m+1)/2}`
//! * power-Lipschitz: `|σ(x, r) - σ(x, r̄)| ≤ δ̄ |r^[(m+1)/2] - r̄^[(m+1)/2]|`
//!
//! The claims are checked by [`crate::inequality::validate_sigma`].

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::spectral::signed_power;

#[derive(Debug, Clone, PartialEq)]
pub enum SigmaKind {
    /// `σ ≡ value`.
    Constant { value: f64 },
    /// `σ(r) = lambda · r^[exponent]`.
    Power { lambda: f64, exponent: f64 },
    /// `σ(r) = scale · √(r⁺)`.
    SqrtPositivePart { scale: f64 },
    /// Piecewise-linear in `r` through `(r_i, σ_i)`, constant beyond the ends.
    Table { r: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSpec {
    kind: SigmaKind,
    k: f64,
    delta: f64,
    delta_bar: Option<f64>,
}

impl SigmaSpec {
    pub fn new(kind: SigmaKind, k: f64, delta: f64, delta_bar: Option<f64>) -> Result<Self> {
        let nonneg = |name, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(name, "must be a finite nonnegative number"))
            }
        };
        nonneg("K", k)?;
        nonneg("delta", delta)?;
        if let Some(db) = delta_bar {
            nonneg("delta_bar", db)?;
        }
        match &kind {
            SigmaKind::Constant { value } if !value.is_finite() => {
                return Err(invalid("value", "must be finite"))
            }
            SigmaKind::Power { lambda, exponent }
                if !lambda.is_finite() || !exponent.is_finite() || *exponent <= 0.0 =>
            {
                return Err(invalid("exponent", "need finite lambda and positive exponent"))
            }
            SigmaKind::SqrtPositivePart { scale } if !scale.is_finite() => {
                return Err(invalid("scale", "must be finite"))
            }
            SigmaKind::Table { r, values } => {
                if r.is_empty() || r.len() != values.len() {
                    return Err(Error::LengthMismatch {
                        expected: r.len(),
                        actual: values.len(),
                    });
                }
                if let Some(i) = r.iter().chain(values).position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(i));
                }
                if r.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("r", "table abscissae must be strictly increasing"));
                }
            }
            _ => {}
        }
        Ok(Self {
            kind,
            k,
            delta,
            delta_bar,
        })
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(value: f64) -> Self {
        Self::new(SigmaKind::Constant { value }, value.abs(), 0.0, Some(0.0)).expect("finite constant")
    }

    /// `λ r^[(m+1)/2]`: growth holds with `K = 0`, `δ = δ̄ = |λ|`.
    pub fn critical_power(lambda: f64, m: f64) -> Self {
        Self::new(
            SigmaKind::Power {
                lambda,
                exponent: 0.5 * (m + 1.0),
            },
            0.0,
            lambda.abs(),
            Some(lambda.abs()),
        )
        .expect("finite power coefficient")
    }

    /// `c √(r⁺)`, declared with `K = δ = |c|` and no power-Lipschitz constant.
    pub fn sqrt_positive_part(scale: f64) -> Self {
        Self::new(
            SigmaKind::SqrtPositivePart { scale },
            scale.abs(),
            scale.abs(),
            None,
        )
        .expect("finite scale")
    }

    pub fn kind(&self) -> &SigmaKind {
        &self.kind
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn delta_bar(&self) -> Option<f64> {
        self.delta_bar
    }

    pub fn with_constants(mut self, k: f64, delta: f64, delta_bar: Option<f64>) -> Result<Self> {
        let kind = core::mem::replace(&mut self.kind, SigmaKind::Constant { value: 0.0 });
        Self::new(kind, k, delta, delta_bar)
    }

    /// True when `σ(x, 0) = 0`, i.e. zero is a fixed point of the noise.
    pub fn vanishes_at_zero(&self) -> bool {
        self.eval(0.5, 0.0) == 0.0
    }

    pub fn is_identically_zero(&self) -> bool {
        match &self.kind {
            SigmaKind::Constant { value } => *value == 0.0,
            SigmaKind::Power { lambda, .. } => *lambda == 0.0,
            SigmaKind::SqrtPositivePart { scale } => *scale == 0.0,
            SigmaKind::Table { values, .. } => values.iter().all(|&v| v == 0.0),
        }
    }

    /// `σ(x, r)`. None of the built-in kinds depend on `x`.
    #[inline]
    pub fn eval(&self, _x: f64, r: f64) -> f64 {
        match &self.kind {
            SigmaKind::Constant { value } => *value,
            SigmaKind::Power { lambda, exponent } => lambda * signed_power(r, *exponent),
            SigmaKind::SqrtPositivePart { scale } => {
                if r > 0.0 {
                    scale * libm::sqrt(r)
                } else {
                    0.0
                }
            }
            SigmaKind::Table { r: rs, values } => table_lookup(rs, values, r),
        }
    }
}

fn table_lookup(rs: &[f64], values: &[f64], r: f64) -> f64 {
    if r <= rs[0] {
        return values[0];
    }
    let last = rs.len() - 1;
    if r >= rs[last] {
        return values[last];
    }
    let i = rs.partition_point(|&x| x <= r) - 1;
    let t = (r - rs[i]) / (rs[i + 1] - rs[i]);
    values[i] + t * (values[i + 1] - values[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn evaluations() {
        assert_eq!(SigmaSpec::constant(2.0).eval(0.3, -7.0), 2.0);
        let p = SigmaSpec::critical_power(0.5, 2.0);
        assert!((p.eval(0.1, -4.0) + 0.5 * 8.0).abs() < 1e-12);
        let s = SigmaSpec::sqrt_positive_part(2.0);
        assert_eq!(s.eval(0.0, -1.0), 0.0);
        assert_eq!(s.eval(0.0, 4.0), 4.0);
        assert!(s.vanishes_at_zero());
        assert!(!SigmaSpec::constant(1.0).vanishes_at_zero());
    }

    #[test]
    fn table_interpolates_and_clamps() {
        let t = SigmaSpec::new(
            SigmaKind::Table {
                r: vec![-1.0, 0.0, 2.0],
                values: vec![1.0, 0.0, 4.0],
            },
            4.0,
            0.0,
            None,
        )
        .unwrap();
        assert_eq!(t.eval(0.0, -5.0), 1.0);
        assert_eq!(t.eval(0.0, -0.5), 0.5);
        assert_eq!(t.eval(0.0, 1.0), 2.0);
        assert_eq!(t.eval(0.0, 9.0), 4.0);
    }

    #[test]
    fn rejects_malformed_specs() {
        let bad = SigmaKind::Table {
            r: vec![0.0, 1.0],
            values: vec![0.0, f64::NAN],
        };
        assert!(SigmaSpec::new(bad, 0.0, 0.0, None).is_err());
        let unsorted = SigmaKind::Table {
            r: vec![1.0, 0.0],
            values: vec![0.0, 0.0],
        };
        assert!(SigmaSpec::new(unsorted, 0.0, 0.0, None).is_err());
        assert!(SigmaSpec::new(SigmaKind::Constant { value: 1.0 }, -1.0, 0.0, None).is_err());
    }
}
