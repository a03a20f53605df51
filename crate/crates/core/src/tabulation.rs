//! Simple tabulation hashing.
//!
//! A key of `c` characters is hashed by XOR-ing one table lookup per
//! character. Character 0 is the least-significant `char_bits` bits of the key.

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng;

/// Largest character width for which tables are materialized (16M entries per table).
pub const MAX_TABLE_CHAR_BITS: u32 = 24;

/// Shape of the key universe: `c` characters of `char_bits` bits each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeySchema {
    chars: u32,
    char_bits: u32,
}

impl KeySchema {
    pub fn new(chars: u32, char_bits: u32) -> Result<Self> {
        if chars == 0 || char_bits == 0 || u64::from(chars) * u64::from(char_bits) > 64 {
            return Err(Error::InvalidSchema { chars, char_bits });
        }
        Ok(Self { chars, char_bits })
    }

    /// Number of characters `c`.
    pub fn chars(&self) -> u32 {
        self.chars
    }

    pub fn char_bits(&self) -> u32 {
        self.char_bits
    }

    pub fn key_bits(&self) -> u32 {
        self.chars * self.char_bits
    }

    /// Alphabet size `2^char_bits`.
    pub fn alphabet_size(&self) -> u64 {
        1u64 << self.char_bits.min(63)
    }

    pub fn char_mask(&self) -> u64 {
        mask(self.char_bits)
    }

    /// Largest valid key.
    pub fn max_key(&self) -> u64 {
        mask(self.key_bits())
    }

    pub fn check_key(&self, key: u64) -> Result<()> {
        if key > self.max_key() {
            Err(Error::KeyOutOfRange {
                key,
                key_bits: self.key_bits(),
            })
        } else {
            Ok(())
        }
    }

    #[inline]
    pub fn character(&self, key: u64, position: u32) -> u64 {
        (key >> (position * self.char_bits)) & self.char_mask()
    }

    /// Assembles a key from its characters, character 0 first.
    pub fn compose(&self, chars: &[u64]) -> Result<u64> {
        if chars.len() != self.chars as usize {
            return Err(Error::InvalidParameter(format!(
                "expected {} characters, got {}",
                self.chars,
                chars.len()
            )));
        }
        let mut key = 0u64;
        for (i, &ch) in chars.iter().enumerate() {
            if ch > self.char_mask() {
                return Err(Error::PositionCharOutOfRange {
                    position: i as u32,
                    character: ch,
                });
            }
            key |= ch << (i as u32 * self.char_bits);
        }
        Ok(key)
    }

    /// The key viewed as its `c` position characters.
    pub fn position_chars(&self, key: u64) -> Vec<PositionCharacter> {
        (0..self.chars)
            .map(|position| PositionCharacter {
                position,
                character: self.character(key, position),
            })
            .collect()
    }
}

/// Low `bits` bits set.
#[inline]
pub(crate) fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// A pair `(position, character)`; a key is the set of its `c` position characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PositionCharacter {
    pub position: u32,
    pub character: u64,
}

impl PositionCharacter {
    pub fn new(position: u32, character: u64) -> Self {
        Self {
            position,
            character,
        }
    }
}

/// A simple tabulation hash function `h(x) = h_0(x[0]) ^ ... ^ h_{c-1}(x[c-1])`
/// with `out_bits`-bit table entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleTabulation {
    schema: KeySchema,
    out_bits: u32,
    seed: Option<u64>,
    // c tables laid out back to back, 2^char_bits entries each
    tables: Vec<u64>,
}

impl SimpleTabulation {
    /// Fills the tables from the counter-based keystream: table `i`, entry `j`
    /// is word `j` of stream `i` under `seed`, masked to `out_bits`.
    pub fn new(schema: KeySchema, out_bits: u32, seed: u64) -> Result<Self> {
        check_out_bits(out_bits)?;
        check_table_size(schema)?;
        let size = schema.alphabet_size() as usize;
        let m = mask(out_bits);
        let mut tables = Vec::with_capacity(size * schema.chars as usize);
        for t in 0..schema.chars {
            let mut stream = rng::stream(seed, u64::from(t));
            tables.extend((0..size).map(|_| stream.next_u64() & m));
        }
        Ok(Self {
            schema,
            out_bits,
            seed: Some(seed),
            tables,
        })
    }

    /// Builds a function from explicit tables, `tables[i][a] = h_i(a)`.
    pub fn from_tables(schema: KeySchema, out_bits: u32, tables: &[Vec<u64>]) -> Result<Self> {
        check_out_bits(out_bits)?;
        check_table_size(schema)?;
        let size = schema.alphabet_size() as usize;
        if tables.len() != schema.chars as usize || tables.iter().any(|t| t.len() != size) {
            return Err(Error::InvalidParameter(format!(
                "expected {} tables of {} entries",
                schema.chars, size
            )));
        }
        let m = mask(out_bits);
        if let Some(&bad) = tables.iter().flatten().find(|&&v| v & !m != 0) {
            return Err(Error::InvalidParameter(format!(
                "table entry {bad} wider than {out_bits} bits"
            )));
        }
        Ok(Self {
            schema,
            out_bits,
            seed: None,
            tables: tables.concat(),
        })
    }

    pub fn schema(&self) -> KeySchema {
        self.schema
    }

    pub fn out_bits(&self) -> u32 {
        self.out_bits
    }

    /// Seed the tables were generated from; `None` for explicit tables.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Table `i` as a slice indexed by character.
    pub fn table(&self, position: u32) -> &[u64] {
        let size = self.schema.alphabet_size() as usize;
        let start = position as usize * size;
        &self.tables[start..start + size]
    }

    #[inline]
    pub fn entry(&self, position: u32, character: u64) -> u64 {
        let size = self.schema.alphabet_size() as usize;
        self.tables[position as usize * size + character as usize]
    }

    pub fn hash(&self, key: u64) -> Result<u64> {
        self.schema.check_key(key)?;
        Ok(self.hash_unchecked(key))
    }

    /// Hash of a key already known to be in range.
    #[inline]
    pub fn hash_unchecked(&self, key: u64) -> u64 {
        debug_assert!(key <= self.schema.max_key());
        let bits = self.schema.char_bits;
        let cmask = self.schema.char_mask();
        let size = self.schema.alphabet_size() as usize;
        let mut h = 0u64;
        let mut rest = key;
        for table in self.tables.chunks_exact(size) {
            h ^= table[(rest & cmask) as usize];
            rest = if bits >= 64 { 0 } else { rest >> bits };
        }
        h
    }

    /// XOR of the table entries of a set of position characters; the empty set hashes to 0.
    pub fn hash_position_set(&self, chars: &[PositionCharacter]) -> Result<u64> {
        let mut seen = std::collections::HashSet::with_capacity(chars.len());
        let mut h = 0u64;
        for pc in chars {
            if pc.position >= self.schema.chars || pc.character > self.schema.char_mask() {
                return Err(Error::PositionCharOutOfRange {
                    position: pc.position,
                    character: pc.character,
                });
            }
            if !seen.insert(*pc) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate position character ({}, {})",
                    pc.position, pc.character
                )));
            }
            h ^= self.entry(pc.position, pc.character);
        }
        Ok(h)
    }

    /// Views the `k*r` output bits as `k` independent `r`-bit hash functions.
    pub fn split_k(&self, k: u32, r: u32) -> Result<SplitHash<'_>> {
        if k == 0 || r == 0 || u64::from(k) * u64::from(r) != u64::from(self.out_bits) {
            return Err(Error::InvalidSplit {
                out_bits: self.out_bits,
                k,
                r,
            });
        }
        Ok(SplitHash { inner: self, k, r })
    }
}

fn check_out_bits(out_bits: u32) -> Result<()> {
    if (1..=64).contains(&out_bits) {
        Ok(())
    } else {
        Err(Error::InvalidOutBits(out_bits))
    }
}

fn check_table_size(schema: KeySchema) -> Result<()> {
    if schema.char_bits > MAX_TABLE_CHAR_BITS {
        return Err(Error::InvalidParameter(format!(
            "char_bits {} exceeds the table limit of {MAX_TABLE_CHAR_BITS}",
            schema.char_bits
        )));
    }
    Ok(())
}

/// Bits `[j*r, (j+1)*r)` of `value`.
#[inline]
pub fn bit_slice(value: u64, j: u32, r: u32) -> u64 {
    let shift = j * r;
    if shift >= 64 {
        0
    } else {
        (value >> shift) & mask(r)
    }
}

/// `k` hash functions read off one wide tabulation; see [`SimpleTabulation::split_k`].
#[derive(Debug, Clone, Copy)]
pub struct SplitHash<'a> {
    inner: &'a SimpleTabulation,
    k: u32,
    r: u32,
}

impl SplitHash<'_> {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn view(&self, j: u32, key: u64) -> Result<u64> {
        if j >= self.k {
            return Err(Error::InvalidParameter(format!("view {j} of {}", self.k)));
        }
        Ok(bit_slice(self.inner.hash(key)?, j, self.r))
    }

    /// All `k` views from a single pass over the tables.
    pub fn views(&self, key: u64) -> Result<Vec<u64>> {
        let h = self.inner.hash(key)?;
        Ok((0..self.k).map(|j| bit_slice(h, j, self.r)).collect())
    }
}

#[derive(Serialize, Deserialize)]
struct TabulationSpec {
    schema: KeySchema,
    out_bits: u32,
    seed: u64,
}

/// Serialized as `(schema, out_bits, seed)`; tables are regenerated on load.
impl Serialize for SimpleTabulation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let seed = self.seed.ok_or_else(|| {
            serde::ser::Error::custom("tabulation built from explicit tables has no seed")
        })?;
        TabulationSpec {
            schema: self.schema,
            out_bits: self.out_bits,
            seed,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SimpleTabulation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let spec = TabulationSpec::deserialize(deserializer)?;
        let schema = KeySchema::new(spec.schema.chars, spec.schema.char_bits)
            .map_err(serde::de::Error::custom)?;
        SimpleTabulation::new(schema, spec.out_bits, spec.seed).map_err(serde::de::Error::custom)
    }
}
