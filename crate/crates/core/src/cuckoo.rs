//! Two-table cuckoo hashing with simple tabulation, used as the overflow
//! backstop of the filter cascade.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tabulation::{bit_slice, KeySchema, SimpleTabulation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuckooConfig {
    /// Table size is the least power of two above `(1 + slack) m'`.
    pub slack: f64,
    /// Displacements allowed per insertion; `None` means `32 log2 n'`.
    pub max_chain: Option<u32>,
    /// Fresh hash functions drawn after a failed attempt before giving up.
    pub max_retries: u32,
}

impl Default for CuckooConfig {
    fn default() -> Self {
        Self {
            slack: 0.1,
            max_chain: None,
            max_retries: 10,
        }
    }
}

impl CuckooConfig {
    /// Least power of two strictly greater than `(1 + slack) m`.
    pub fn table_size(&self, m: u64) -> Result<u64> {
        if self.slack.is_nan() || self.slack <= 0.0 {
            return Err(Error::InvalidParameter(
                "cuckoo slack must be positive".into(),
            ));
        }
        let target = (1.0 + self.slack) * m as f64;
        let mut size = 1u64;
        while (size as f64) <= target {
            size = size
                .checked_mul(2)
                .ok_or_else(|| Error::InvalidParameter("cuckoo table too large".into()))?;
        }
        Ok(size)
    }

    fn chain_limit(&self, log2_size: u32) -> u32 {
        self.max_chain.unwrap_or(32 * log2_size.max(1))
    }
}

/// Build that ran out of retries; `keys` is the set that could not be placed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CuckooFailure {
    pub retries: u32,
    pub keys: Vec<u64>,
}

/// Two tables `T'_0, T'_1` of `n'` slots with `h'_0, h'_1` the two halves of
/// one tabulation of `2 log2 n'` bits.
#[derive(Debug, Clone)]
pub struct CuckooTable {
    schema: KeySchema,
    config: CuckooConfig,
    seed: u64,
    log2_size: u32,
    tables: [Vec<Option<u64>>; 2],
    hash: SimpleTabulation,
    /// Hash functions drawn so far beyond the first.
    retries: u32,
    len: usize,
}

impl CuckooTable {
    /// Empty tables of `n' = config.table_size(capacity)` slots each.
    pub fn with_capacity(
        schema: KeySchema,
        capacity: u64,
        config: CuckooConfig,
        seed: u64,
    ) -> Result<Self> {
        let size = config.table_size(capacity)?;
        let log2_size = size.trailing_zeros();
        Ok(Self {
            schema,
            config,
            seed,
            log2_size,
            tables: [vec![None; size as usize], vec![None; size as usize]],
            hash: Self::draw(schema, log2_size, seed, 0)?,
            retries: 0,
            len: 0,
        })
    }

    /// Places all `keys`, drawing fresh functions after each failed attempt.
    pub fn build(
        schema: KeySchema,
        keys: &[u64],
        config: CuckooConfig,
        seed: u64,
    ) -> Result<std::result::Result<Self, CuckooFailure>> {
        for &k in keys {
            schema.check_key(k)?;
        }
        let mut table = Self::with_capacity(schema, keys.len() as u64, config, seed)?;
        if table.place_all(keys, 0)? {
            return Ok(Ok(table));
        }
        Ok(table.rehash(keys)?.map(|()| table))
    }

    fn draw(
        schema: KeySchema,
        log2_size: u32,
        seed: u64,
        attempt: u32,
    ) -> Result<SimpleTabulation> {
        let s = rng::derive_seed(seed, rng::domain::CUCKOO, u64::from(attempt));
        SimpleTabulation::new(schema, (2 * log2_size).max(1), s)
    }

    /// Clears the tables, uses hash function number `attempt`, and inserts `keys`.
    fn place_all(&mut self, keys: &[u64], attempt: u32) -> Result<bool> {
        self.hash = Self::draw(self.schema, self.log2_size, self.seed, attempt)?;
        for t in &mut self.tables {
            t.iter_mut().for_each(|s| *s = None);
        }
        self.len = 0;
        for &k in keys {
            if self.try_insert(k).is_err() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Retries with new functions until `keys` all fit or the budget is spent.
    fn rehash(&mut self, keys: &[u64]) -> Result<std::result::Result<(), CuckooFailure>> {
        while self.retries < self.config.max_retries {
            self.retries += 1;
            if self.place_all(keys, self.retries)? {
                return Ok(Ok(()));
            }
        }
        Ok(Err(CuckooFailure {
            retries: self.retries,
            keys: keys.to_vec(),
        }))
    }

    pub fn capacity(&self) -> u64 {
        1 << self.log2_size
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn retries(&self) -> u32 {
        self.retries
    }

    /// Slot of `key` in table `side` (0 or 1).
    #[inline]
    pub fn slot(&self, side: usize, key: u64) -> usize {
        bit_slice(self.hash.hash_unchecked(key), side as u32, self.log2_size) as usize
    }

    pub fn table(&self, side: usize) -> &[Option<u64>] {
        &self.tables[side]
    }

    /// `Some((side, slot))` if `key` is stored.
    pub fn lookup(&self, key: u64) -> Option<(usize, usize)> {
        if self.schema.check_key(key).is_err() {
            return None;
        }
        (0..2).find_map(|side| {
            let slot = self.slot(side, key);
            (self.tables[side][slot] == Some(key)).then_some((side, slot))
        })
    }

    /// Inserts one more key, rehashing on a cycle. On final failure the tables
    /// are left exactly as before the call.
    pub fn insert(&mut self, key: u64) -> Result<std::result::Result<usize, CuckooFailure>> {
        self.schema.check_key(key)?;
        if let Some((side, _)) = self.lookup(key) {
            return Ok(Ok(side));
        }
        if let Ok(side) = self.try_insert(key) {
            return Ok(Ok(side));
        }
        let mut keys = self.keys();
        keys.push(key);
        let saved = (self.tables.clone(), self.hash.clone(), self.len);
        match self.rehash(&keys)? {
            Ok(()) => Ok(Ok(self.lookup(key).expect("placed by rehash").0)),
            Err(failure) => {
                (self.tables, self.hash, self.len) = saved;
                Ok(Err(failure))
            }
        }
    }

    /// Stored keys, table 0 first, in slot order.
    pub fn keys(&self) -> Vec<u64> {
        self.tables.iter().flatten().flatten().copied().collect()
    }

    /// One insertion with at most `chain_limit` displacements. Failed chains
    /// are undone, so the tables are unchanged on `Err`.
    fn try_insert(&mut self, key: u64) -> std::result::Result<usize, ()> {
        for side in 0..2 {
            let slot = self.slot(side, key);
            if self.tables[side][slot].is_none() {
                self.tables[side][slot] = Some(key);
                self.len += 1;
                return Ok(side);
            }
        }
        let limit = self.config.chain_limit(self.log2_size);
        let mut undo: Vec<(usize, usize, Option<u64>)> = Vec::new();
        let mut cur = key;
        let mut side = 0usize;
        for _ in 0..limit {
            let slot = self.slot(side, cur);
            let evicted = self.tables[side][slot].replace(cur);
            undo.push((side, slot, evicted));
            match evicted {
                None => {
                    self.len += 1;
                    return Ok(self.lookup(key).expect("key placed").0);
                }
                Some(e) => {
                    cur = e;
                    side ^= 1;
                }
            }
        }
        for (side, slot, old) in undo.into_iter().rev() {
            self.tables[side][slot] = old;
        }
        Err(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> KeySchema {
        KeySchema::new(4, 8).unwrap()
    }

    #[test]
    fn table_sizes() {
        let cfg = CuckooConfig::default();
        assert_eq!(cfg.table_size(0).unwrap(), 1);
        assert_eq!(cfg.table_size(1).unwrap(), 2);
        assert_eq!(cfg.table_size(1024).unwrap(), 2048);
        assert_eq!(cfg.table_size(900).unwrap(), 1024);
        assert_eq!(cfg.table_size(931).unwrap(), 2048);
        let bad = CuckooConfig { slack: 0.0, ..cfg };
        assert!(bad.table_size(10).is_err());
    }

    #[test]
    fn empty_build() {
        let t = CuckooTable::build(schema(), &[], CuckooConfig::default(), 1)
            .unwrap()
            .unwrap();
        assert!(t.is_empty());
        assert_eq!(t.retries(), 0);
    }

    #[test]
    fn single_key_goes_to_first_table() {
        let t = CuckooTable::build(schema(), &[42], CuckooConfig::default(), 1)
            .unwrap()
            .unwrap();
        assert_eq!(t.lookup(42), Some((0, t.slot(0, 42))));
        assert_eq!(t.lookup(43), None);
    }

    #[test]
    fn build_places_every_key() {
        let keys: Vec<u64> = (0..1000).map(|i| i * 104_729 % (1 << 32)).collect();
        let t = CuckooTable::build(schema(), &keys, CuckooConfig::default(), 3)
            .unwrap()
            .unwrap();
        assert_eq!(t.len(), keys.len());
        for &k in &keys {
            let (side, slot) = t.lookup(k).unwrap();
            assert_eq!(t.table(side)[slot], Some(k));
        }
        let mut stored = t.keys();
        stored.sort_unstable();
        let mut expected = keys.clone();
        expected.sort_unstable();
        assert_eq!(stored, expected);
    }

    #[test]
    fn overfull_build_fails_after_retries() {
        // 5 keys cannot fit 2 x 4 slots... they can, but 9 cannot
        let cfg = CuckooConfig {
            slack: 0.1,
            max_chain: Some(8),
            max_retries: 3,
        };
        let mut t = CuckooTable::with_capacity(schema(), 3, cfg, 1).unwrap();
        assert_eq!(t.capacity(), 4);
        let mut placed = Vec::new();
        let mut failures = 0;
        for k in 0..9u64 {
            match t.insert(k).unwrap() {
                Ok(_) => placed.push(k),
                Err(f) => {
                    failures += 1;
                    assert_eq!(f.retries, 3);
                }
            }
        }
        assert!(failures >= 1);
        assert!(t.len() <= 8);
        assert_eq!(t.len(), placed.len());
        for &k in &placed {
            assert!(t.lookup(k).is_some(), "lost key {k}");
        }
    }
}
