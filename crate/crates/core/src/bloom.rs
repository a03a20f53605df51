//! Bloom filter in the k-array model: `k` bit arrays of `n` bits, array `j`
//! indexed by the `j`-th `r`-bit view of a wide simple tabulation projected
//! onto `[n]`.

use std::collections::HashSet;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::projector::RangeProjector;
use crate::rng;
use crate::stats::Proportion;
use crate::tabulation::{bit_slice, KeySchema, SimpleTabulation};

const MAGIC: &[u8; 4] = b"TBLM";
const FORMAT_VERSION: u32 = 1;

/// How the per-array size `n` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BloomSizing {
    /// `n = round(m / ln 2)`, which puts the fill ratio near 1/2.
    MinimalFpr,
    /// Caller-supplied `n`.
    Bits(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BloomParams {
    /// Expected number of keys.
    pub m: u64,
    /// Number of arrays / hash functions.
    pub k: u32,
    /// Bits per array.
    pub n: u64,
    /// Output bits per hash function before projection.
    pub r: u32,
    /// Whether the `k` views may be spread over several tabulation instances.
    pub multi_instance: bool,
}

impl BloomParams {
    /// Sizes a filter. `r` defaults to the least value with `2^r >= n^2`; an
    /// explicit `r` only has to satisfy `2^r >= n`.
    pub fn plan(
        m: u64,
        k: u32,
        sizing: BloomSizing,
        r: Option<u32>,
        multi_instance: bool,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("bloom filter needs m >= 1".into()));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("bloom filter needs k >= 1".into()));
        }
        let n = match sizing {
            BloomSizing::MinimalFpr => ((m as f64) / std::f64::consts::LN_2).round() as u64,
            BloomSizing::Bits(n) => n,
        };
        if n == 0 {
            return Err(Error::InvalidParameter("bloom filter needs n >= 1".into()));
        }
        let r = match r {
            Some(r) => r,
            None => min_bits_for_square(n)?,
        };
        RangeProjector::new(r, n)?;
        let params = Self {
            m,
            k,
            n,
            r,
            multi_instance,
        };
        if !multi_instance && u64::from(k) * u64::from(r) > 64 {
            return Err(Error::InvalidParameter(format!(
                "k*r = {} exceeds 64 bits and multi-instance tabulation is disabled",
                u64::from(k) * u64::from(r)
            )));
        }
        Ok(params)
    }

    /// Views packed into one tabulation instance.
    pub fn views_per_instance(&self) -> u32 {
        if self.multi_instance {
            (64 / self.r).clamp(1, self.k)
        } else {
            self.k
        }
    }

    pub fn instances(&self) -> u32 {
        self.k.div_ceil(self.views_per_instance())
    }

    /// `p0(n, m)^k`.
    pub fn theoretical_fpr(&self) -> f64 {
        theoretical_fpr(self.k, self.n, self.m)
    }

    /// Upper bound on the false-positive probability for a query key outside
    /// the set, with the largest bin fraction `rho = ceil(2^r/n) / 2^r`:
    /// `(1 - (1 - rho)^m + 2 m^(2-1/c) rho^2)^k`, capped at 1.
    pub fn fpr_upper_bound(&self, c: u32) -> f64 {
        let projector = RangeProjector::new(self.r, self.n).expect("validated in plan");
        let rho = projector.max_preimage() as f64 / (self.r as f64).exp2();
        let mf = self.m as f64;
        let p0_rho = -(mf * (-rho).ln_1p()).exp_m1();
        let per_array = p0_rho + 2.0 * mf.powf(2.0 - 1.0 / f64::from(c)) * rho * rho;
        per_array.min(1.0).powi(self.k as i32)
    }
}

/// Least `r` with `2^r >= n^2`.
pub fn min_bits_for_square(n: u64) -> Result<u32> {
    let sq = u128::from(n) * u128::from(n);
    if sq <= 1 {
        return Ok(1);
    }
    let r = 128 - (sq - 1).leading_zeros();
    if r > 64 {
        return Err(Error::InvalidParameter(format!(
            "n = {n} needs more than 64 hash bits for 2^r >= n^2"
        )));
    }
    Ok(r)
}

/// `p0(n, m)^k`, the fully random false-positive probability.
pub fn theoretical_fpr(k: u32, n: u64, m: u64) -> f64 {
    bounds::p0(n.max(1), m).unwrap_or(0.0).powi(k as i32)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    params: BloomParams,
    schema: KeySchema,
    seed: u64,
    tabulations: Vec<SimpleTabulation>,
    projector: RangeProjector,
    arrays: Vec<Vec<u64>>,
    inserted: u64,
}

impl BloomFilter {
    pub fn new(params: BloomParams, schema: KeySchema, seed: u64) -> Result<Self> {
        let projector = RangeProjector::new(params.r, params.n)?;
        let per = params.views_per_instance();
        if u64::from(per) * u64::from(params.r) > 64 {
            return Err(Error::InvalidParameter(format!(
                "{per} views of {} bits do not fit one tabulation",
                params.r
            )));
        }
        let tabulations = (0..params.instances())
            .map(|i| {
                let views = per.min(params.k - i * per);
                let s = rng::derive_seed(seed, rng::domain::BLOOM, u64::from(i));
                SimpleTabulation::new(schema, views * params.r, s)
            })
            .collect::<Result<Vec<_>>>()?;
        let words = params.n.div_ceil(64) as usize;
        Ok(Self {
            params,
            schema,
            seed,
            tabulations,
            projector,
            arrays: vec![vec![0u64; words]; params.k as usize],
            inserted: 0,
        })
    }

    pub fn params(&self) -> BloomParams {
        self.params
    }

    pub fn schema(&self) -> KeySchema {
        self.schema
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of `insert` calls so far.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn tabulations(&self) -> &[SimpleTabulation] {
        &self.tabulations
    }

    /// Bit index of `key` in each array; one tabulation pass per instance.
    pub fn positions(&self, key: u64) -> Result<Vec<u64>> {
        self.schema.check_key(key)?;
        let mut out = Vec::with_capacity(self.params.k as usize);
        self.for_each_position(key, |_, b| {
            out.push(b);
            true
        });
        Ok(out)
    }

    /// Calls `f(array, bit)` for each array until it returns false.
    #[inline]
    fn for_each_position(&self, key: u64, mut f: impl FnMut(usize, u64) -> bool) -> bool {
        let per = self.params.views_per_instance();
        let mut j = 0usize;
        for tab in &self.tabulations {
            let h = tab.hash_unchecked(key);
            for v in 0..per {
                if j == self.params.k as usize {
                    break;
                }
                let bit = self.projector.project(bit_slice(h, v, self.params.r));
                if !f(j, bit) {
                    return false;
                }
                j += 1;
            }
        }
        true
    }

    pub fn insert(&mut self, key: u64) -> Result<()> {
        self.schema.check_key(key)?;
        let mut bits = Vec::with_capacity(self.params.k as usize);
        self.for_each_position(key, |j, b| {
            bits.push((j, b));
            true
        });
        for (j, b) in bits {
            self.arrays[j][(b / 64) as usize] |= 1 << (b % 64);
        }
        self.inserted += 1;
        Ok(())
    }

    pub fn query(&self, key: u64) -> Result<bool> {
        self.schema.check_key(key)?;
        Ok(self.query_unchecked(key))
    }

    #[inline]
    fn query_unchecked(&self, key: u64) -> bool {
        self.for_each_position(key, |j, b| {
            self.arrays[j][(b / 64) as usize] >> (b % 64) & 1 == 1
        })
    }

    pub fn is_set(&self, array: usize, bit: u64) -> bool {
        self.arrays[array][(bit / 64) as usize] >> (bit % 64) & 1 == 1
    }

    /// Fraction of set bits in each array.
    pub fn fill_ratios(&self) -> Vec<f64> {
        self.arrays
            .iter()
            .map(|a| {
                a.iter().map(|w| u64::from(w.count_ones())).sum::<u64>() as f64
                    / self.params.n as f64
            })
            .collect()
    }

    /// Length-prefixed little-endian layout:
    ///
    /// ```text
    /// "TBLM" | version u32 | m u64 | k u32 | n u64 | r u32 | multi u8
    ///        | chars u32 | char_bits u32 | seed u64 | inserted u64
    ///        | k x (byte_len u64 | bytes)
    /// ```
    ///
    /// Bit `b` of an array is bit `b % 8` of byte `b / 8`. Tables are not stored.
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = self.params;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&p.m.to_le_bytes());
        out.extend_from_slice(&p.k.to_le_bytes());
        out.extend_from_slice(&p.n.to_le_bytes());
        out.extend_from_slice(&p.r.to_le_bytes());
        out.push(u8::from(p.multi_instance));
        out.extend_from_slice(&self.schema.chars().to_le_bytes());
        out.extend_from_slice(&self.schema.char_bits().to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.inserted.to_le_bytes());
        let byte_len = p.n.div_ceil(8);
        for array in &self.arrays {
            out.extend_from_slice(&byte_len.to_le_bytes());
            let bytes: Vec<u8> = array.iter().flat_map(|w| w.to_le_bytes()).collect();
            out.extend_from_slice(&bytes[..byte_len as usize]);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(4)? != MAGIC {
            return Err(Error::Io("not a bloom filter image".into()));
        }
        let version = rd.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Io(format!(
                "unsupported bloom format version {version}"
            )));
        }
        let m = rd.u64()?;
        let k = rd.u32()?;
        let n = rd.u64()?;
        let r = rd.u32()?;
        let multi_instance = match rd.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::Io(format!("bad multi-instance flag {b}"))),
        };
        let schema = KeySchema::new(rd.u32()?, rd.u32()?)?;
        let seed = rd.u64()?;
        let inserted = rd.u64()?;
        let params = BloomParams::plan(m, k, BloomSizing::Bits(n), Some(r), multi_instance)?;
        let mut filter = Self::new(params, schema, seed)?;
        filter.inserted = inserted;
        let byte_len = n.div_ceil(8);
        for array in &mut filter.arrays {
            if rd.u64()? != byte_len {
                return Err(Error::Io("bit array length mismatch".into()));
            }
            let data = rd.take(byte_len as usize)?;
            for (i, chunk) in data.chunks(8).enumerate() {
                let mut word = [0u8; 8];
                word[..chunk.len()].copy_from_slice(chunk);
                array[i] = u64::from_le_bytes(word);
            }
            if n % 64 != 0 && array[array.len() - 1] >> (n % 64) != 0 {
                return Err(Error::Io("bits set beyond the array length".into()));
            }
        }
        if rd.pos != bytes.len() {
            return Err(Error::Io("trailing bytes after bloom filter image".into()));
        }
        Ok(filter)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Io("truncated bloom filter image".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Empirical false-positive rate against reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FprReport {
    pub schema_version: u32,
    pub params: BloomParams,
    pub seed: u64,
    pub query_seed: u64,
    pub estimate: Proportion,
    pub p0: f64,
    /// `p0^k`.
    pub theoretical_fpr: f64,
    /// `estimate / theoretical_fpr`.
    pub ratio: f64,
    pub upper_bound: f64,
    pub fill_ratios: Vec<f64>,
}

/// Queries `queries` uniform keys outside `members` and counts false positives.
///
/// Queries are drawn in blocks of `2^16`, block `b` from its own stream, so
/// the result does not depend on the execution mode.
pub fn measure_fpr(
    filter: &BloomFilter,
    members: &HashSet<u64>,
    queries: u64,
    query_seed: u64,
    exec: Execution,
) -> Result<FprReport> {
    let schema = filter.schema();
    if u128::from(schema.max_key()) < members.len() as u128 {
        return Err(Error::InvalidParameter(
            "no keys outside the member set".into(),
        ));
    }
    let block = |range: Range<u64>| -> u64 {
        let mut stream = rng::stream(query_seed, range.start >> 16);
        let mut positives = 0u64;
        for _ in range {
            let q = loop {
                let q = stream.random_range(0..=schema.max_key());
                if !members.contains(&q) {
                    break q;
                }
            };
            positives += u64::from(filter.query_unchecked(q));
        }
        positives
    };
    let positives: u64 = par::map_chunks(queries, 1 << 16, exec, block).iter().sum();
    let params = filter.params();
    let estimate = Proportion::new(positives, queries);
    let theoretical = params.theoretical_fpr();
    Ok(FprReport {
        schema_version: crate::occupancy::REPORT_SCHEMA_VERSION,
        params,
        seed: filter.seed(),
        query_seed,
        estimate,
        p0: bounds::p0(params.n, params.m)?,
        theoretical_fpr: theoretical,
        ratio: if theoretical > 0.0 {
            estimate.estimate / theoretical
        } else {
            f64::NAN
        },
        upper_bound: params.fpr_upper_bound(schema.chars()),
        fill_ratios: filter.fill_ratios(),
    })
}
