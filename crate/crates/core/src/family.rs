//! Hash families used as experimental variables: simple tabulation and the
//! two baselines (fully random, k-independent polynomial).

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tabulation::{mask, KeySchema, SimpleTabulation};

/// Mersenne primes `2^e - 1` usable as polynomial moduli, by exponent.
const MERSENNE_EXPONENTS: [u32; 9] = [2, 3, 5, 7, 13, 17, 19, 31, 61];

/// A family together with its parameters; [`FamilySpec::instantiate`] draws a member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilySpec {
    SimpleTabulation,
    FullyRandom,
    /// Degree `k-1` polynomial over `Z_prime`; the prime defaults to the
    /// smallest Mersenne prime `>= 2^key_bits`.
    PolyK {
        k: u32,
        prime: Option<u64>,
    },
}

impl FamilySpec {
    pub fn instantiate(&self, schema: KeySchema, out_bits: u32, seed: u64) -> Result<HashFamily> {
        Ok(match *self {
            FamilySpec::SimpleTabulation => {
                HashFamily::Tabulation(SimpleTabulation::new(schema, out_bits, seed)?)
            }
            FamilySpec::FullyRandom => {
                HashFamily::FullyRandom(FullyRandom::new(schema, out_bits, seed)?)
            }
            FamilySpec::PolyK { k, prime } => {
                let prime = match prime {
                    Some(p) => p,
                    None => mersenne_prime_at_least(schema.key_bits())?,
                };
                HashFamily::Poly(PolyHash::random(schema, out_bits, k, prime, seed)?)
            }
        })
    }

    pub fn name(&self) -> String {
        match self {
            FamilySpec::SimpleTabulation => "simple-tabulation".into(),
            FamilySpec::FullyRandom => "fully-random".into(),
            FamilySpec::PolyK { k, .. } => format!("poly-{k}"),
        }
    }
}

/// One concrete hash function drawn from a family. Immutable and `Sync`.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum HashFamily {
    Tabulation(SimpleTabulation),
    FullyRandom(FullyRandom),
    Poly(PolyHash),
}

impl HashFamily {
    pub fn schema(&self) -> KeySchema {
        match self {
            HashFamily::Tabulation(h) => h.schema(),
            HashFamily::FullyRandom(h) => h.schema,
            HashFamily::Poly(h) => h.schema,
        }
    }

    pub fn out_bits(&self) -> u32 {
        match self {
            HashFamily::Tabulation(h) => h.out_bits(),
            HashFamily::FullyRandom(h) => h.out_bits,
            HashFamily::Poly(h) => h.out_bits,
        }
    }

    pub fn eval(&self, key: u64) -> Result<u64> {
        self.schema().check_key(key)?;
        Ok(self.eval_unchecked(key))
    }

    #[inline]
    pub fn eval_unchecked(&self, key: u64) -> u64 {
        match self {
            HashFamily::Tabulation(h) => h.hash_unchecked(key),
            HashFamily::FullyRandom(h) => h.eval_unchecked(key),
            HashFamily::Poly(h) => h.eval_unchecked(key),
        }
    }

    pub fn as_tabulation(&self) -> Option<&SimpleTabulation> {
        match self {
            HashFamily::Tabulation(h) => Some(h),
            _ => None,
        }
    }
}

/// A uniformly random function `[2^key_bits] -> [2^r]`.
///
/// The value of key `x` is word `x` of a keystream fixed by the seed, i.e. a
/// random table materialized lazily. Repeat and concurrent evaluations see
/// the same value without any shared mutable state.
#[derive(Debug, Clone)]
pub struct FullyRandom {
    schema: KeySchema,
    out_bits: u32,
    seed: u64,
    proto: rand_chacha::ChaCha8Rng,
}

impl FullyRandom {
    pub fn new(schema: KeySchema, out_bits: u32, seed: u64) -> Result<Self> {
        if !(1..=64).contains(&out_bits) {
            return Err(Error::InvalidOutBits(out_bits));
        }
        Ok(Self {
            schema,
            out_bits,
            seed,
            proto: rng::stream(seed, 0),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn eval(&self, key: u64) -> Result<u64> {
        self.schema.check_key(key)?;
        Ok(self.eval_unchecked(key))
    }

    #[inline]
    pub fn eval_unchecked(&self, key: u64) -> u64 {
        let mut stream = self.proto.clone();
        stream.set_word_pos(u128::from(key) * 2);
        stream.next_u64() & mask(self.out_bits)
    }
}

/// `((a_{k-1} x^{k-1} + ... + a_0) mod p)` reduced to `r` bits by `floor(v 2^r / p)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyHash {
    schema: KeySchema,
    out_bits: u32,
    prime: u64,
    // highest degree first
    coeffs: Vec<u64>,
}

impl PolyHash {
    /// Explicit coefficients, highest degree first.
    pub fn new(schema: KeySchema, out_bits: u32, coeffs: Vec<u64>, prime: u64) -> Result<Self> {
        if !(1..=64).contains(&out_bits) {
            return Err(Error::InvalidOutBits(out_bits));
        }
        let key_bits = schema.key_bits();
        if key_bits >= 64 || prime < (1u64 << key_bits) || !is_prime(prime) {
            return Err(Error::InvalidPrime { prime, key_bits });
        }
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("poly-k needs k >= 1".into()));
        }
        if let Some(&c) = coeffs.iter().find(|&&c| c >= prime) {
            return Err(Error::InvalidParameter(format!(
                "coefficient {c} not reduced mod {prime}"
            )));
        }
        Ok(Self {
            schema,
            out_bits,
            prime,
            coeffs,
        })
    }

    /// `k` coefficients uniform in `[0, prime)`.
    pub fn random(schema: KeySchema, out_bits: u32, k: u32, prime: u64, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("poly-k needs k >= 1".into()));
        }
        let mut stream = rng::stream(seed, 0);
        let coeffs = (0..k)
            .map(|_| stream.random_range(0..prime.max(1)))
            .collect();
        Self::new(schema, out_bits, coeffs, prime)
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    /// The polynomial value in `[0, prime)` before range reduction.
    pub fn eval_mod_prime(&self, key: u64) -> u64 {
        let p = u128::from(self.prime);
        let x = u128::from(key) % p;
        self.coeffs
            .iter()
            .fold(0u128, |acc, &a| (acc * x + u128::from(a)) % p) as u64
    }

    pub fn eval(&self, key: u64) -> Result<u64> {
        self.schema.check_key(key)?;
        Ok(self.eval_unchecked(key))
    }

    #[inline]
    pub fn eval_unchecked(&self, key: u64) -> u64 {
        let v = u128::from(self.eval_mod_prime(key));
        ((v << self.out_bits) / u128::from(self.prime)) as u64
    }
}

/// Smallest Mersenne prime `2^e - 1 >= 2^key_bits`.
pub fn mersenne_prime_at_least(key_bits: u32) -> Result<u64> {
    MERSENNE_EXPONENTS
        .iter()
        .find(|&&e| e > key_bits)
        .map(|&e| (1u64 << e) - 1)
        .ok_or(Error::InvalidPrime { prime: 0, key_bits })
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mulmod = |a: u64, b: u64| ((u128::from(a) * u128::from(b)) % u128::from(n)) as u64;
    let powmod = |mut base: u64, mut exp: u64| {
        let mut acc = 1u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mulmod(acc, base);
            }
            base = mulmod(base, base);
            exp >>= 1;
        }
        acc
    };
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &WITNESSES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
