//! Reference values for `m` balls in `n` bins: the fully random occupancy
//! `p0`/`mu0`, the simple-tabulation deviation bound on the hit probability,
//! and the concentration tail curves.
//!
//! The tail curves are constant-free: every hidden `O(.)` and `Omega(.)`
//! constant is set to 1. They describe shape, not a certified bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational `num / den` in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExactRatio {
    pub num: u128,
    pub den: u128,
}

impl ExactRatio {
    pub fn new(num: u128, den: u128) -> Self {
        assert!(den > 0, "zero denominator");
        let g = gcd(num, den);
        Self {
            num: num / g,
            den: den / g,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `|self - other|` as an exact ratio.
    pub fn abs_diff(self, other: Self) -> Self {
        let a = self.num * other.den;
        let b = other.num * self.den;
        Self::new(a.abs_diff(b), self.den * other.den)
    }

    /// `self <= other`, exactly.
    pub fn le(self, other: Self) -> bool {
        self.num * other.den <= other.num * self.den
    }
}

impl std::fmt::Display for ExactRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Probability that a fixed bin is non-empty after `m` fully random balls:
/// `1 - (1 - 1/n)^m`, evaluated as `-expm1(m ln1p(-1/n))`.
pub fn p0(n: u64, m: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if n == 1 {
        return Ok(if m == 0 { 0.0 } else { 1.0 });
    }
    Ok(-((m as f64) * (-1.0 / n as f64).ln_1p()).exp_m1())
}

/// Expected number of non-empty bins, `n * p0(n, m)`.
pub fn mu0(n: u64, m: u64) -> Result<f64> {
    Ok(n as f64 * p0(n, m)?)
}

/// `p0` as an exact fraction `(n^m - (n-1)^m) / n^m`; errors if `n^m` overflows 128 bits.
pub fn p0_exact(n: u64, m: u64) -> Result<ExactRatio> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let exp = u32::try_from(m).map_err(|_| Error::InvalidParameter("m too large".into()))?;
    let den = u128::from(n)
        .checked_pow(exp)
        .ok_or_else(|| Error::InvalidParameter(format!("{n}^{m} overflows")))?;
    let miss = u128::from(n - 1).pow(exp);
    Ok(ExactRatio::new(den - miss, den))
}

/// `m^(2 - 1/c) / n^2`, doubled when the bin depends on a query ball.
pub fn hit_probability_bound(n: u64, m: u64, c: u32, query: bool) -> f64 {
    let b = (m as f64).powf(2.0 - 1.0 / f64::from(c)) / (n as f64).powi(2);
    if query {
        2.0 * b
    } else {
        b
    }
}

/// `m^(2 - 1/c) / n`, the matching deviation of the expected occupancy.
pub fn occupancy_mean_bound(n: u64, m: u64, c: u32) -> f64 {
    (m as f64).powf(2.0 - 1.0 / f64::from(c)) / n as f64
}

/// Exact check of `diff <= m^(2-1/c) / n^2` (doubled for a query ball), done by
/// raising both sides to the power `c` in 128-bit integers. `None` on overflow.
pub fn within_hit_probability_bound(
    diff: ExactRatio,
    n: u64,
    m: u64,
    c: u32,
    query: bool,
) -> Option<bool> {
    // diff^c * n^(2c) <= (1 or 2^c) * m^(2c-1)
    let lhs = diff
        .num
        .checked_pow(c)?
        .checked_mul(u128::from(n).checked_pow(2 * c)?)?;
    let scale = if query { 1u128 << c } else { 1 };
    let rhs = diff
        .den
        .checked_pow(c)?
        .checked_mul(u128::from(m).checked_pow(2 * c - 1)?)?
        .checked_mul(scale)?;
    Some(lhs <= rhs)
}

/// The four tail shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailBound {
    /// `Pr[|h(X)| >= mu0 + 2t] ~ exp(-t^2 / (2 m^(2-1/c)))`.
    QuadUpper,
    /// `Pr[|h(X)| <= mu0 - 2t] ~ exp(-t^2 / (2 m^(2-1/c))) + m^2 / (n t^2)`.
    QuadLower,
    /// `Pr[|h(X)| >= mu0 + t] ~ exp(-min(t^2 n / m^(3-1/c), t / m^(1-1/c)))`, `m <= n`.
    SparseUpper,
    /// The previous shape plus `m^2 / (n t^2)`, `m <= n`.
    SparseLower,
}

impl std::str::FromStr for TailBound {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quad-upper" => Ok(Self::QuadUpper),
            "quad-lower" => Ok(Self::QuadLower),
            "sparse-upper" => Ok(Self::SparseUpper),
            "sparse-lower" => Ok(Self::SparseLower),
            _ => Err(Error::InvalidParameter(format!("unknown bound '{s}'"))),
        }
    }
}

/// Evaluates a constant-free tail curve. The value may exceed 1, and the
/// lower-tail curves are infinite at `t = 0`.
pub fn tail_bound(which: TailBound, n: u64, m: u64, c: u32, t: f64) -> Result<f64> {
    if n == 0 || m == 0 || c == 0 || t.is_nan() || t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tail bound needs n, m, c >= 1 and t >= 0 (n={n}, m={m}, c={c}, t={t})"
        )));
    }
    let (nf, mf, cf) = (n as f64, m as f64, f64::from(c));
    let collision_term = || mf * mf / (nf * t * t);
    match which {
        TailBound::QuadUpper => Ok(quad_core(mf, cf, t)),
        TailBound::QuadLower => Ok(quad_core(mf, cf, t) + collision_term()),
        TailBound::SparseUpper | TailBound::SparseLower => {
            if m > n {
                return Err(Error::InvalidParameter(format!(
                    "this tail shape needs m <= n (m={m}, n={n})"
                )));
            }
            let quad = t * t / (mf.powf(3.0 - 1.0 / cf) / nf);
            let lin = t / mf.powf(1.0 - 1.0 / cf);
            let core = (-quad.min(lin)).exp();
            Ok(if which == TailBound::SparseUpper {
                core
            } else {
                core + collision_term()
            })
        }
    }
}

fn quad_core(m: f64, c: f64, t: f64) -> f64 {
    (-t * t / (2.0 * m.powf(2.0 - 1.0 / c))).exp()
}

/// Exponent of the quadratic tail at `t`: `-t^2 / (2 m^(2-1/c))`.
pub fn quad_exponent(m: u64, c: u32, t: f64) -> f64 {
    -t * t / (2.0 * (m as f64).powf(2.0 - 1.0 / f64::from(c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn p0_values() {
        assert_eq!(p0(10, 0).unwrap(), 0.0);
        assert_eq!(mu0(10, 0).unwrap(), 0.0);
        assert_eq!(p0(1, 5).unwrap(), 1.0);
        assert!((p0(4, 4).unwrap() - 175.0 / 256.0).abs() < 1e-15);
        assert_eq!(p0_exact(4, 4).unwrap(), ExactRatio::new(175, 256));
        assert_eq!(p0_exact(1, 3).unwrap(), ExactRatio::new(1, 1));
        assert_eq!(p0_exact(5, 0).unwrap(), ExactRatio::new(0, 1));
        assert!(p0(0, 1).is_err());
        assert!(p0_exact(1 << 40, 4).is_err());
        let (n, m) = (1477, 1024);
        assert_eq!(mu0(n, m).unwrap(), n as f64 * p0(n, m).unwrap());
    }

    #[test]
    fn p0_matches_naive_power() {
        for &(n, m) in &[(2u64, 3u64), (1024, 1024), (1477, 1024), (1 << 20, 1000)] {
            let naive = 1.0 - (1.0 - 1.0 / n as f64).powf(m as f64);
            assert!((p0(n, m).unwrap() - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn ratio_arithmetic() {
        let p = ExactRatio::new(172, 256);
        assert_eq!(p.to_string(), "43/64");
        let d = p.abs_diff(ExactRatio::new(175, 256));
        assert_eq!(d, ExactRatio::new(3, 256));
        assert!(d.le(ExactRatio::new(1, 2)));
        assert!(!ExactRatio::new(2, 3).le(ExactRatio::new(1, 2)));
    }

    #[test]
    fn exact_bound_comparison() {
        // m = n = 4, c = 2: m^(3/2)/n^2 = 8/16 = 1/2
        assert_eq!(
            within_hit_probability_bound(ExactRatio::new(1, 2), 4, 4, 2, false),
            Some(true)
        );
        assert_eq!(
            within_hit_probability_bound(ExactRatio::new(513, 1024), 4, 4, 2, false),
            Some(false)
        );
        assert_eq!(
            within_hit_probability_bound(ExactRatio::new(1, 1), 4, 4, 2, true),
            Some(true)
        );
    }

    #[test]
    fn tail_bound_values() {
        assert_eq!(
            tail_bound(TailBound::QuadUpper, 1024, 1024, 2, 0.0).unwrap(),
            1.0
        );
        assert!((quad_exponent(1024, 2, 512.0) + 4.0).abs() < 1e-12);
        let v = tail_bound(TailBound::QuadUpper, 1024, 1024, 2, 512.0).unwrap();
        assert!((v - (-4.0f64).exp()).abs() < 1e-15);
        assert!(tail_bound(TailBound::QuadLower, 1024, 1024, 2, 0.0)
            .unwrap()
            .is_infinite());
        assert!(tail_bound(TailBound::SparseUpper, 100, 200, 2, 1.0).is_err());
        assert!(tail_bound(TailBound::QuadUpper, 100, 200, 2, -1.0).is_err());
        assert!(tail_bound(TailBound::QuadUpper, 0, 200, 2, 1.0).is_err());
        assert_eq!(
            "sparse-lower".parse::<TailBound>().unwrap(),
            TailBound::SparseLower
        );
    }

    proptest! {
        #[test]
        fn tail_bounds_non_increasing(
            n in 1u64..5000, m in 1u64..5000, c in 1u32..5, t in 0.0f64..1e4, dt in 0.0f64..1e3
        ) {
            for which in [TailBound::QuadUpper, TailBound::QuadLower, TailBound::SparseUpper, TailBound::SparseLower] {
                let (Ok(a), Ok(b)) = (
                    tail_bound(which, n, m, c, t),
                    tail_bound(which, n, m, c, t + dt),
                ) else { continue };
                prop_assert!(b <= a, "{which:?} increased: {a} -> {b}");
            }
        }
    }
}
