//! Declarative generators for structured and random key sets.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tabulation::KeySchema;

/// A key set description. Structured kinds place one coordinate per character,
/// coordinate 0 in character 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KeySetSpec {
    /// Product `[d_0] x [d_1] x ...`.
    Grid { dims: Vec<u64> },
    /// `[2]^l x [m / 2^l]`.
    Hypercube { l: u32, m: u64 },
    /// `[m / t] x [t]`.
    PairProduct { t: u64, m: u64 },
    /// Keys `0..m`.
    Interval { m: u64 },
    /// `m` distinct keys drawn uniformly from the universe.
    UniformRandom { m: u64, seed: u64 },
    /// Every key of the schema.
    All,
}

impl KeySetSpec {
    /// Declared cardinality, or `None` for [`KeySetSpec::All`] on a 64-bit universe.
    pub fn cardinality(&self, schema: KeySchema) -> Option<u64> {
        match self {
            KeySetSpec::Grid { dims } => dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d)),
            KeySetSpec::Hypercube { m, .. }
            | KeySetSpec::PairProduct { m, .. }
            | KeySetSpec::Interval { m }
            | KeySetSpec::UniformRandom { m, .. } => Some(*m),
            KeySetSpec::All => schema.max_key().checked_add(1),
        }
    }

    pub fn generate(&self, schema: KeySchema) -> Result<Vec<u64>> {
        let universe_log2 = schema.key_bits();
        let too_large = |requested: u64| Error::KeySetTooLarge {
            requested,
            universe_log2,
        };
        match self {
            KeySetSpec::Grid { dims } => {
                let total = self.cardinality(schema).ok_or(too_large(u64::MAX))?;
                grid_keys(schema, dims).ok_or(too_large(total))
            }
            KeySetSpec::Hypercube { l, m } => {
                let cube = 1u64.checked_shl(*l).filter(|&c| *l < 64 && c <= *m);
                let cube = cube.ok_or_else(|| {
                    Error::InvalidParameter(format!("hypercube needs 2^{l} <= m={m}"))
                })?;
                if m % cube != 0 {
                    return Err(Error::InvalidParameter(format!(
                        "hypercube needs 2^{l} to divide m={m}"
                    )));
                }
                let mut dims = vec![2u64; *l as usize];
                dims.push(m / cube);
                grid_keys(schema, &dims).ok_or(too_large(*m))
            }
            KeySetSpec::PairProduct { t, m } => {
                if *t == 0 || m % t != 0 {
                    return Err(Error::InvalidParameter(format!(
                        "pair product needs t={t} to divide m={m}"
                    )));
                }
                grid_keys(schema, &[m / t, *t]).ok_or(too_large(*m))
            }
            KeySetSpec::Interval { m } => {
                if *m > 0 && m - 1 > schema.max_key() {
                    return Err(too_large(*m));
                }
                Ok((0..*m).collect())
            }
            KeySetSpec::UniformRandom { m, seed } => {
                if *m > 0 && m - 1 > schema.max_key() {
                    return Err(too_large(*m));
                }
                Ok(random_keys(schema, *m, *seed))
            }
            KeySetSpec::All => {
                if schema.key_bits() > 32 {
                    return Err(too_large(u64::MAX));
                }
                Ok((0..=schema.max_key()).collect())
            }
        }
    }
}

/// Row-major product with coordinate `i` in character `i`; `None` if a
/// coordinate does not fit its character or there are more dims than characters.
fn grid_keys(schema: KeySchema, dims: &[u64]) -> Option<Vec<u64>> {
    if dims.len() > schema.chars() as usize
        || dims.iter().any(|&d| d == 0 || d - 1 > schema.char_mask())
    {
        // an empty dimension gives the empty set, which always fits
        if dims.contains(&0) && dims.len() <= schema.chars() as usize {
            return Some(Vec::new());
        }
        return None;
    }
    let total: u64 = dims.iter().product();
    let mut keys = Vec::with_capacity(total as usize);
    let mut coords = vec![0u64; dims.len()];
    for _ in 0..total {
        let key = coords.iter().enumerate().fold(0u64, |k, (i, &x)| {
            k | (x << (i as u32 * schema.char_bits()))
        });
        keys.push(key);
        // odometer, last coordinate fastest
        for i in (0..dims.len()).rev() {
            coords[i] += 1;
            if coords[i] < dims[i] {
                break;
            }
            coords[i] = 0;
        }
    }
    Some(keys)
}

fn random_keys(schema: KeySchema, m: u64, seed: u64) -> Vec<u64> {
    let mut stream = rng::stream(seed, rng::domain::KEYSET);
    let max = schema.max_key();
    let universe = u128::from(max) + 1;
    // dense requests: partial shuffle of the whole universe
    if u128::from(m) * 2 > universe {
        let mut all: Vec<u64> = (0..=max).collect();
        for i in 0..m as usize {
            let j = stream.random_range(i..all.len());
            all.swap(i, j);
        }
        all.truncate(m as usize);
        return all;
    }
    let mut seen = HashSet::with_capacity(m as usize);
    let mut keys = Vec::with_capacity(m as usize);
    while (keys.len() as u64) < m {
        let key = stream.random_range(0..=max);
        if seen.insert(key) {
            keys.push(key);
        }
    }
    keys
}

/// Smallest key of the universe not in `keys`.
pub fn smallest_absent_key(schema: KeySchema, keys: &[u64]) -> Option<u64> {
    let present: HashSet<u64> = keys.iter().copied().collect();
    (0..=schema.max_key()).find(|k| !present.contains(k))
}

impl fmt::Display for KeySetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeySetSpec::Grid { dims } => {
                let dims: Vec<String> = dims.iter().map(u64::to_string).collect();
                write!(f, "grid:{}", dims.join("x"))
            }
            KeySetSpec::Hypercube { l, m } => write!(f, "hcube:{l},{m}"),
            KeySetSpec::PairProduct { t, m } => write!(f, "pairs:{t},{m}"),
            KeySetSpec::Interval { m } => write!(f, "interval:{m}"),
            KeySetSpec::UniformRandom { m, seed } => write!(f, "rand:{m},{seed}"),
            KeySetSpec::All => write!(f, "all"),
        }
    }
}

/// Parses `grid:AxB`, `hcube:L,M`, `pairs:T,M`, `interval:M`, `rand:M[,SEED]`
/// and `all`. A missing random seed is left as 0 for the caller to fill.
impl FromStr for KeySetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse key set '{s}'"));
        let num = |v: &str| v.trim().parse::<u64>().map_err(|_| bad());
        if s == "all" {
            return Ok(KeySetSpec::All);
        }
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let parts: Vec<&str> = args.split(',').collect();
        match (kind, parts.as_slice()) {
            ("grid", [dims]) => Ok(KeySetSpec::Grid {
                dims: dims.split('x').map(num).collect::<Result<_>>()?,
            }),
            ("hcube", [l, m]) => Ok(KeySetSpec::Hypercube {
                l: u32::try_from(num(l)?).map_err(|_| bad())?,
                m: num(m)?,
            }),
            ("pairs", [t, m]) => Ok(KeySetSpec::PairProduct {
                t: num(t)?,
                m: num(m)?,
            }),
            ("interval", [m]) => Ok(KeySetSpec::Interval { m: num(m)? }),
            ("rand", [m]) => Ok(KeySetSpec::UniformRandom {
                m: num(m)?,
                seed: 0,
            }),
            ("rand", [m, seed]) => Ok(KeySetSpec::UniformRandom {
                m: num(m)?,
                seed: num(seed)?,
            }),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema(c: u32, b: u32) -> KeySchema {
        KeySchema::new(c, b).unwrap()
    }

    fn distinct(keys: &[u64]) -> bool {
        keys.iter().collect::<HashSet<_>>().len() == keys.len()
    }

    #[test]
    fn grid_cardinality() {
        let keys = KeySetSpec::Grid { dims: vec![32, 32] }
            .generate(schema(2, 8))
            .unwrap();
        assert_eq!(keys.len(), 1024);
        assert!(distinct(&keys));
        assert!(keys.iter().all(|&k| k & 0xff < 32 && k >> 8 < 32));
    }

    #[test]
    fn hypercube_l1() {
        let s = schema(2, 8);
        let keys = KeySetSpec::Hypercube { l: 1, m: 8 }.generate(s).unwrap();
        let mut expected = Vec::new();
        for a in 0..2u64 {
            for b in 0..4u64 {
                expected.push(s.compose(&[a, b]).unwrap());
            }
        }
        assert_eq!(keys, expected);
    }

    #[test]
    fn pair_product_layout() {
        let s = schema(2, 8);
        let keys = KeySetSpec::PairProduct { t: 4, m: 12 }.generate(s).unwrap();
        assert_eq!(keys.len(), 12);
        assert!(keys
            .iter()
            .all(|&k| s.character(k, 0) < 3 && s.character(k, 1) < 4));
    }

    #[test]
    fn rejects_oversized_sets() {
        let s = schema(2, 4);
        assert!(KeySetSpec::Grid { dims: vec![17, 2] }.generate(s).is_err());
        assert!(KeySetSpec::Grid {
            dims: vec![2, 2, 2]
        }
        .generate(s)
        .is_err());
        assert!(KeySetSpec::Interval { m: 257 }.generate(s).is_err());
        assert!(KeySetSpec::UniformRandom { m: 257, seed: 1 }
            .generate(s)
            .is_err());
        assert!(KeySetSpec::Hypercube { l: 1, m: 7 }.generate(s).is_err());
        assert!(KeySetSpec::PairProduct { t: 3, m: 8 }.generate(s).is_err());
    }

    #[test]
    fn random_is_deterministic_and_distinct() {
        let s = schema(2, 8);
        let spec = KeySetSpec::UniformRandom { m: 5000, seed: 3 };
        let a = spec.generate(s).unwrap();
        assert_eq!(a, spec.generate(s).unwrap());
        assert!(distinct(&a));
        let dense = KeySetSpec::UniformRandom { m: 250, seed: 3 }
            .generate(schema(1, 8))
            .unwrap();
        assert_eq!(dense.len(), 250);
        assert!(distinct(&dense));
        let full = KeySetSpec::UniformRandom { m: 256, seed: 3 }
            .generate(schema(1, 8))
            .unwrap();
        assert_eq!(full.len(), 256);
    }

    #[test]
    fn query_key_is_smallest_absent() {
        let s = schema(1, 4);
        assert_eq!(smallest_absent_key(s, &[0, 1, 3]), Some(2));
        assert_eq!(smallest_absent_key(s, &[]), Some(0));
        let all: Vec<u64> = (0..16).collect();
        assert_eq!(smallest_absent_key(s, &all), None);
    }

    #[test]
    fn parse_grammar() {
        assert_eq!(
            "grid:32x32".parse::<KeySetSpec>().unwrap(),
            KeySetSpec::Grid { dims: vec![32, 32] }
        );
        assert_eq!(
            "hcube:1,1024".parse::<KeySetSpec>().unwrap(),
            KeySetSpec::Hypercube { l: 1, m: 1024 }
        );
        assert_eq!(
            "pairs:64,1024".parse::<KeySetSpec>().unwrap(),
            KeySetSpec::PairProduct { t: 64, m: 1024 }
        );
        assert_eq!(
            "rand:100".parse::<KeySetSpec>().unwrap(),
            KeySetSpec::UniformRandom { m: 100, seed: 0 }
        );
        assert_eq!("all".parse::<KeySetSpec>().unwrap(), KeySetSpec::All);
        for bad in ["grid", "grid:3y4", "hcube:1", "pairs:a,b", "nope:1"] {
            assert!(bad.parse::<KeySetSpec>().is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn display_parse_roundtrip(d0 in 1u64..50, d1 in 1u64..50, seed in any::<u64>()) {
            for spec in [
                KeySetSpec::Grid { dims: vec![d0, d1] },
                KeySetSpec::PairProduct { t: d1, m: d0 * d1 },
                KeySetSpec::UniformRandom { m: d0, seed },
            ] {
                prop_assert_eq!(spec.to_string().parse::<KeySetSpec>().unwrap(), spec);
            }
        }
    }
}
