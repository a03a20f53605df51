//! Exact occupancy laws for tiny tabulation instances, by enumerating every
//! possible filling of the character tables.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::bounds::ExactRatio;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::projector::RangeProjector;
use crate::tabulation::{mask, KeySchema};

/// Largest number of table fillings (as a power of two) that will be enumerated.
pub const MAX_ENUMERATION_LOG2: u32 = 24;

/// Tallies over all `fillings` equally likely table fillings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactOccupancy {
    pub fillings: u64,
    /// `bin_hits[z]` = number of fillings with `z` in `h(X)`.
    pub bin_hits: Vec<u64>,
    /// `occupancy_counts[k]` = number of fillings with `|h(X)| = k`.
    pub occupancy_counts: Vec<u64>,
    /// Number of fillings with `h(q)` in `h(X)`, when a query key was given.
    pub query_hits: Option<u64>,
}

impl ExactOccupancy {
    pub fn hit_probability(&self, bin: u64) -> Result<ExactRatio> {
        let hits = self
            .bin_hits
            .get(bin as usize)
            .ok_or(Error::BinOutOfRange {
                bin,
                n: self.bin_hits.len() as u64,
            })?;
        Ok(ExactRatio::new(
            u128::from(*hits),
            u128::from(self.fillings),
        ))
    }

    pub fn distribution(&self) -> Vec<ExactRatio> {
        self.occupancy_counts
            .iter()
            .map(|&c| ExactRatio::new(u128::from(c), u128::from(self.fillings)))
            .collect()
    }

    /// `E|h(X)|` as an exact ratio.
    pub fn mean(&self) -> ExactRatio {
        let total: u128 = self
            .occupancy_counts
            .iter()
            .enumerate()
            .map(|(k, &c)| k as u128 * u128::from(c))
            .sum();
        ExactRatio::new(total, u128::from(self.fillings))
    }

    fn merge(mut self, other: &Self) -> Self {
        self.fillings += other.fillings;
        for (a, b) in self.bin_hits.iter_mut().zip(&other.bin_hits) {
            *a += b;
        }
        for (a, b) in self
            .occupancy_counts
            .iter_mut()
            .zip(&other.occupancy_counts)
        {
            *a += b;
        }
        self.query_hits = match (self.query_hits, other.query_hits) {
            (Some(a), Some(b)) => Some(a + b),
            (a, _) => a,
        };
        self
    }
}

/// Enumerates every filling of `c` tables of `2^char_bits` entries of `r` bits.
///
/// Bins are `[2^r]`, or `[n]` through the most-uniform projector when `n` is given.
pub fn enumerate_fillings(
    schema: KeySchema,
    r: u32,
    keys: &[u64],
    n: Option<u64>,
    query: Option<u64>,
) -> Result<ExactOccupancy> {
    let entries = u64::from(schema.chars())
        .checked_mul(schema.alphabet_size())
        .filter(|&e| e <= 64)
        .ok_or(Error::EnumerationTooLarge {
            log2_size: u32::MAX,
            limit_log2: MAX_ENUMERATION_LOG2,
        })? as u32;
    let log2_size = entries.saturating_mul(r);
    if r == 0 || log2_size > MAX_ENUMERATION_LOG2 {
        return Err(Error::EnumerationTooLarge {
            log2_size,
            limit_log2: MAX_ENUMERATION_LOG2,
        });
    }
    let projector = RangeProjector::new(r, n.unwrap_or(1u64 << r))?;
    let mut seen = HashSet::new();
    for &k in keys {
        schema.check_key(k)?;
        if !seen.insert(k) {
            return Err(Error::InvalidParameter(format!("duplicate key {k}")));
        }
    }
    if let Some(q) = query {
        schema.check_key(q)?;
        if seen.contains(&q) {
            return Err(Error::InvalidParameter(format!(
                "query key {q} is in the set"
            )));
        }
    }

    // table entry index of each character of each key
    let alphabet = schema.alphabet_size();
    let entry_ids = |key: u64| -> Vec<u32> {
        (0..schema.chars())
            .map(|i| (u64::from(i) * alphabet + schema.character(key, i)) as u32)
            .collect()
    };
    let key_entries: Vec<Vec<u32>> = keys.iter().map(|&k| entry_ids(k)).collect();
    let query_entries = query.map(entry_ids);
    let bins = projector.n() as usize;
    let max_occ = keys.len().min(bins);
    let rmask = mask(r);
    let hash = |filling: u64, ids: &[u32]| {
        let h = ids
            .iter()
            .fold(0u64, |h, &e| h ^ ((filling >> (e * r)) & rmask));
        projector.project(h)
    };

    let empty = ExactOccupancy {
        fillings: 0,
        bin_hits: vec![0; bins],
        occupancy_counts: vec![0; max_occ + 1],
        query_hits: query.map(|_| 0),
    };
    let total = 1u64 << log2_size;
    let partials = par::map_chunks(total, 1 << 14, Execution::Parallel, |range| {
        let mut acc = empty.clone();
        let mut hit = vec![false; bins];
        let mut touched = Vec::with_capacity(keys.len());
        for filling in range {
            for ids in &key_entries {
                let z = hash(filling, ids) as usize;
                if !hit[z] {
                    hit[z] = true;
                    touched.push(z);
                }
            }
            acc.fillings += 1;
            acc.occupancy_counts[touched.len()] += 1;
            if let (Some(ids), Some(qh)) = (&query_entries, acc.query_hits.as_mut()) {
                if hit[hash(filling, ids) as usize] {
                    *qh += 1;
                }
            }
            for z in touched.drain(..) {
                acc.bin_hits[z] += 1;
                hit[z] = false;
            }
        }
        acc
    });
    Ok(partials.iter().fold(empty.clone(), ExactOccupancy::merge))
}

/// Exact probability that `target` is hit by `X`.
pub fn exact_hit_probability(
    schema: KeySchema,
    r: u32,
    keys: &[u64],
    target: u64,
    n: Option<u64>,
) -> Result<ExactRatio> {
    enumerate_fillings(schema, r, keys, n, None)?.hit_probability(target)
}

/// Exact law of `|h(X)|`, indexed by occupancy `0..=min(m, bins)`.
pub fn exact_occupancy_distribution(
    schema: KeySchema,
    r: u32,
    keys: &[u64],
    n: Option<u64>,
) -> Result<Vec<ExactRatio>> {
    Ok(enumerate_fillings(schema, r, keys, n, None)?.distribution())
}

/// Exact probability that `h(q)` lands in `h(X)` for a query key `q` outside `X`.
pub fn exact_query_hit_probability(
    schema: KeySchema,
    r: u32,
    keys: &[u64],
    query: u64,
    n: Option<u64>,
) -> Result<ExactRatio> {
    let occ = enumerate_fillings(schema, r, keys, n, Some(query))?;
    Ok(ExactRatio::new(
        u128::from(occ.query_hits.unwrap_or(0)),
        u128::from(occ.fillings),
    ))
}
