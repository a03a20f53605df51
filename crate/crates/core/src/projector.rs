//! Most-uniform projection of `r`-bit hash values onto `n` bins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The map `y -> floor(y * n / 2^r)`, one widened multiply and a shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeProjector {
    out_bits: u32,
    n: u64,
}

impl RangeProjector {
    pub fn new(out_bits: u32, n: u64) -> Result<Self> {
        if !(1..=64).contains(&out_bits) || n == 0 || u128::from(n) > (1u128 << out_bits) {
            return Err(Error::InvalidProjector { out_bits, n });
        }
        Ok(Self { out_bits, n })
    }

    pub fn out_bits(&self) -> u32 {
        self.out_bits
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// True when `n = 2^r` and the map is the identity.
    pub fn is_identity(&self) -> bool {
        u128::from(self.n) == 1u128 << self.out_bits
    }

    #[inline]
    pub fn project(&self, y: u64) -> u64 {
        debug_assert!(u128::from(y) < 1u128 << self.out_bits);
        ((u128::from(y) * u128::from(self.n)) >> self.out_bits) as u64
    }

    /// `|s^{-1}(z)| = ceil((z+1) 2^r / n) - ceil(z 2^r / n)`.
    pub fn preimage_size(&self, z: u64) -> Result<u64> {
        if z >= self.n {
            return Err(Error::BinOutOfRange { bin: z, n: self.n });
        }
        let span = 1u128 << self.out_bits;
        let n = u128::from(self.n);
        let first = |bin: u128| (bin * span).div_ceil(n);
        Ok((first(u128::from(z) + 1) - first(u128::from(z))) as u64)
    }

    /// Fraction of the `2^r` values that land in bin `z`.
    pub fn preimage_fraction(&self, z: u64) -> Result<f64> {
        Ok(self.preimage_size(z)? as f64 / (self.out_bits as f64).exp2())
    }

    /// Largest preimage, `ceil(2^r / n)`.
    pub fn max_preimage(&self) -> u64 {
        (1u128 << self.out_bits).div_ceil(u128::from(self.n)) as u64
    }
}
