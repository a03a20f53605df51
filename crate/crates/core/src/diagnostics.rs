//! Checkable versions of the combinatorial tools behind the occupancy
//! guarantees: position-character orderings and their groups, internal
//! collisions, d-boundedness, and dependent key tuples.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::projector::RangeProjector;
use crate::rng;
use crate::stats::{Proportion, Summary};
use crate::tabulation::{KeySchema, PositionCharacter, SimpleTabulation};

/// Group-size cap `m^(1 - 1/c)`.
pub fn group_cap(m: u64, c: u32) -> f64 {
    (m as f64).powf(1.0 - 1.0 / f64::from(c))
}

/// An ordering of position characters, earliest first, and the group of each:
/// the keys whose latest position character is that one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupOrdering {
    pub schema: KeySchema,
    pub keys: Vec<u64>,
    pub query: Option<u64>,
    pub order: Vec<PositionCharacter>,
    /// `groups[i]` holds indices into `keys`.
    pub groups: Vec<Vec<usize>>,
}

impl GroupOrdering {
    /// Groups induced by an explicit `order`, which must cover every
    /// position character of `keys` exactly once.
    pub fn from_order(
        schema: KeySchema,
        keys: &[u64],
        query: Option<u64>,
        order: Vec<PositionCharacter>,
    ) -> Result<Self> {
        let mut rank = HashMap::with_capacity(order.len());
        for (i, pc) in order.iter().enumerate() {
            if rank.insert(*pc, i).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "position character ({}, {}) repeated in ordering",
                    pc.position, pc.character
                )));
            }
        }
        let mut groups = vec![Vec::new(); order.len()];
        for (idx, &k) in keys.iter().enumerate() {
            let mut latest = None;
            for pc in schema.position_chars(k) {
                let r = *rank.get(&pc).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "position character ({}, {}) of key {k} missing from ordering",
                        pc.position, pc.character
                    ))
                })?;
                latest = latest.max(Some(r));
            }
            groups[latest.expect("c >= 1")].push(idx);
        }
        Ok(Self {
            schema,
            keys: keys.to_vec(),
            query,
            order,
            groups,
        })
    }

    pub fn group_sizes(&self) -> Vec<u64> {
        self.groups.iter().map(|g| g.len() as u64).collect()
    }

    pub fn max_group(&self) -> u64 {
        self.group_sizes().into_iter().max().unwrap_or(0)
    }

    pub fn m(&self) -> u64 {
        self.keys.len() as u64
    }

    /// The cap on group sizes: `m^(1-1/c)`, doubled with a query key.
    pub fn cap(&self) -> f64 {
        let base = group_cap(self.m(), self.schema.chars());
        if self.query.is_some() {
            2.0 * base
        } else {
            base
        }
    }

    /// `g <= m^(1-1/c)` (or `2 m^(1-1/c)`), i.e. `g^c <= (2^c) m^(c-1)`,
    /// checked in integers where they fit.
    pub fn within_cap(&self, g: u64) -> bool {
        let c = self.schema.chars();
        let scale: u32 = if self.query.is_some() { c } else { 0 };
        let exact = u128::from(g).checked_pow(c).and_then(|lhs| {
            let rhs = u128::from(self.m())
                .checked_pow(c - 1)?
                .checked_mul(1u128.checked_shl(scale)?)?;
            Some(lhs <= rhs)
        });
        exact.unwrap_or_else(|| (g as f64) <= self.cap() * (1.0 + 1e-12))
    }

    /// Fails with a witness if some group exceeds the cap, if the groups do
    /// not partition the keys, or if query characters are not first.
    pub fn verify(&self) -> Result<()> {
        let total: usize = self.groups.iter().map(Vec::len).sum();
        if total != self.keys.len() {
            return Err(Error::CheckFailed(format!(
                "groups hold {total} keys, expected {}",
                self.keys.len()
            )));
        }
        if let Some(q) = self.query {
            let c = self.schema.chars() as usize;
            let front: HashSet<_> = self.order.iter().take(c).copied().collect();
            if front != self.schema.position_chars(q).into_iter().collect() {
                return Err(Error::CheckFailed(
                    "query characters are not first in the ordering".into(),
                ));
            }
        }
        for (i, g) in self.groups.iter().enumerate() {
            if !self.within_cap(g.len() as u64) {
                let pc = self.order[i];
                return Err(Error::CheckFailed(format!(
                    "group of ({}, {}) has {} keys, above the cap {:.3} (m = {})",
                    pc.position,
                    pc.character,
                    g.len(),
                    self.cap(),
                    self.m()
                )));
            }
        }
        Ok(())
    }

    /// `sum |G_i|^2`, bounded by `cap * m`.
    pub fn sum_of_squares(&self) -> u64 {
        self.groups.iter().map(|g| (g.len() as u64).pow(2)).sum()
    }

    /// CSV with header `character,position,group_size`, in ordering order.
    pub fn write_groups_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["character", "position", "group_size"])?;
        for (pc, g) in self.order.iter().zip(&self.groups) {
            w.write_record([
                pc.character.to_string(),
                pc.position.to_string(),
                g.len().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds an ordering with small groups: repeatedly take the position with the
/// most distinct characters among the remaining keys, emit its least frequent
/// character as the latest remaining one, and drop the keys containing it.
/// Characters of `query` are never picked and go first.
pub fn compute_group_ordering(
    schema: KeySchema,
    keys: &[u64],
    query: Option<u64>,
) -> Result<GroupOrdering> {
    if keys.is_empty() {
        return Err(Error::InvalidParameter("key set is empty".into()));
    }
    let mut seen = HashSet::with_capacity(keys.len());
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
    let c = schema.chars();
    let query_chars: Vec<Option<u64>> = (0..c)
        .map(|i| query.map(|q| schema.character(q, i)))
        .collect();

    let mut count: Vec<HashMap<u64, u32>> = vec![HashMap::new(); c as usize];
    let mut by_count: Vec<BTreeSet<(u32, u64)>> = vec![BTreeSet::new(); c as usize];
    let mut holders: HashMap<PositionCharacter, Vec<usize>> = HashMap::new();
    for (idx, &k) in keys.iter().enumerate() {
        for i in 0..c {
            let a = schema.character(k, i);
            *count[i as usize].entry(a).or_default() += 1;
            holders
                .entry(PositionCharacter::new(i, a))
                .or_default()
                .push(idx);
        }
    }
    for i in 0..c as usize {
        by_count[i] = count[i].iter().map(|(&a, &n)| (n, a)).collect();
    }

    let mut alive = vec![true; keys.len()];
    let mut remaining = keys.len();
    let mut emitted = Vec::new();
    while remaining > 0 {
        let selectable = |i: usize| {
            let q_present = query_chars[i].is_some_and(|a| count[i].contains_key(&a));
            count[i].len() - usize::from(q_present)
        };
        let pos = (0..c as usize)
            .max_by_key(|&i| (selectable(i), std::cmp::Reverse(i)))
            .expect("c >= 1");
        let &(_, a) = by_count[pos]
            .iter()
            .find(|(_, a)| Some(*a) != query_chars[pos])
            .ok_or_else(|| Error::CheckFailed("no selectable position character".into()))?;
        let pc = PositionCharacter::new(pos as u32, a);
        emitted.push(pc);
        for &idx in &holders[&pc] {
            if !alive[idx] {
                continue;
            }
            alive[idx] = false;
            remaining -= 1;
            for i in 0..c {
                let ch = schema.character(keys[idx], i);
                let iu = i as usize;
                let n = count[iu].get_mut(&ch).expect("counted");
                by_count[iu].remove(&(*n, ch));
                *n -= 1;
                if *n == 0 {
                    count[iu].remove(&ch);
                } else {
                    by_count[iu].insert((*n, ch));
                }
            }
        }
    }

    let emitted_set: HashSet<_> = emitted.iter().copied().collect();
    let mut order: Vec<PositionCharacter> =
        query.map(|q| schema.position_chars(q)).unwrap_or_default();
    let front: HashSet<_> = order.iter().copied().collect();
    let mut leftovers: Vec<PositionCharacter> = holders
        .keys()
        .filter(|pc| !emitted_set.contains(pc) && !front.contains(pc))
        .copied()
        .collect();
    leftovers.sort_unstable();
    order.extend(leftovers);
    order.extend(emitted.into_iter().rev());

    let ordering = GroupOrdering::from_order(schema, keys, query, order)?;
    ordering.verify()?;
    Ok(ordering)
}

/// Colliding pairs inside each group under one hash function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionCount {
    pub per_group: Vec<u64>,
    pub total: u64,
}

/// `C_i` = pairs of distinct keys in group `i` that share a bin.
pub fn count_internal_collisions(
    ordering: &GroupOrdering,
    h: &SimpleTabulation,
    projector: &RangeProjector,
) -> CollisionCount {
    let per_group: Vec<u64> = ordering
        .groups
        .iter()
        .map(|g| {
            let mut bins: Vec<u64> = g
                .iter()
                .map(|&i| projector.project(h.hash_unchecked(ordering.keys[i])))
                .collect();
            bins.sort_unstable();
            bins.chunk_by(|a, b| a == b)
                .map(|run| {
                    let k = run.len() as u64;
                    k * (k - 1) / 2
                })
                .sum()
        })
        .collect();
    CollisionCount {
        total: per_group.iter().sum(),
        per_group,
    }
}

/// Mean bound `m m0 / (2n)`.
pub fn collision_mean_bound(m: u64, n: u64, c: u32) -> f64 {
    m as f64 * group_cap(m, c) / (2.0 * n as f64)
}

/// Variance bound `(3^c + 1) m^2 / n + m m0^2 / n^2`.
pub fn collision_variance_bound(m: u64, n: u64, c: u32) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    let m0 = group_cap(m, c);
    (3f64.powi(c as i32) + 1.0) * mf * mf / nf + mf * m0 * m0 / (nf * nf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub m: u64,
    pub n: u64,
    pub c: u32,
    pub out_bits: u32,
    pub group_cap: f64,
    pub max_group: u64,
    pub collisions: Summary,
    pub mean_bound: f64,
    pub variance_bound: f64,
    pub per_trial: Vec<u64>,
}

/// Internal collisions of a fixed ordering over `trials` random tabulations.
pub fn collision_experiment(
    ordering: &GroupOrdering,
    out_bits: u32,
    n: u64,
    trials: u64,
    seed: u64,
    exec: Execution,
) -> Result<CollisionReport> {
    let projector = RangeProjector::new(out_bits, n)?;
    let schema = ordering.schema;
    let per_trial: Vec<u64> = par::map_indexed(trials, exec, |t| {
        let s = rng::derive_seed(seed, rng::domain::FAMILY, t);
        let h = SimpleTabulation::new(schema, out_bits, s).expect("validated schema");
        count_internal_collisions(ordering, &h, &projector).total
    });
    let m = ordering.m();
    let c = schema.chars();
    Ok(CollisionReport {
        m,
        n,
        c,
        out_bits,
        group_cap: group_cap(m, c),
        max_group: ordering.max_group(),
        collisions: Summary::of(per_trial.iter().map(|&v| v as f64)),
        mean_bound: collision_mean_bound(m, n, c),
        variance_bound: collision_variance_bound(m, n, c),
        per_trial,
    })
}

/// A group that puts more than `d` keys in one bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundednessViolation {
    pub group: usize,
    pub bin: u64,
    pub load: u64,
}

/// `None` if every group puts at most `d` keys in every bin.
pub fn check_d_bounded(
    ordering: &GroupOrdering,
    h: &SimpleTabulation,
    projector: &RangeProjector,
    d: u64,
) -> Option<BoundednessViolation> {
    for (gi, g) in ordering.groups.iter().enumerate() {
        if (g.len() as u64) <= d {
            continue;
        }
        let mut load: HashMap<u64, u64> = HashMap::new();
        for &i in g {
            let bin = projector.project(h.hash_unchecked(ordering.keys[i]));
            let l = load.entry(bin).or_default();
            *l += 1;
            if *l > d {
                return Some(BoundednessViolation {
                    group: gi,
                    bin,
                    load: *l,
                });
            }
        }
    }
    None
}

/// `min{2c(3+gamma)^c, 2^(2c(3+gamma))}`, floored and saturated to `u64`.
pub fn default_load_bound(c: u32, gamma: f64) -> u64 {
    let cf = f64::from(c);
    let a = 2.0 * cf * (3.0 + gamma).powf(cf);
    let b = 2f64.powf(2.0 * cf * (3.0 + gamma));
    let d = a.min(b).floor();
    if d >= u64::MAX as f64 {
        u64::MAX
    } else {
        d as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub d: u64,
    pub gamma: f64,
    pub n: u64,
    pub pass: Proportion,
    /// `1 - n^(-gamma)`.
    pub target: f64,
    pub first_violation: Option<(u64, BoundednessViolation)>,
}

/// Fraction of `trials` tabulations under which every group is d-bounded.
pub fn boundedness_experiment(
    ordering: &GroupOrdering,
    out_bits: u32,
    n: u64,
    gamma: f64,
    trials: u64,
    seed: u64,
    exec: Execution,
) -> Result<BoundednessReport> {
    let projector = RangeProjector::new(out_bits, n)?;
    let d = default_load_bound(ordering.schema.chars(), gamma);
    let schema = ordering.schema;
    let outcomes = par::map_indexed(trials, exec, |t| {
        let s = rng::derive_seed(seed, rng::domain::FAMILY, t);
        let h = SimpleTabulation::new(schema, out_bits, s).expect("validated schema");
        check_d_bounded(ordering, &h, &projector, d)
    });
    let passes = outcomes.iter().filter(|v| v.is_none()).count() as u64;
    Ok(BoundednessReport {
        d,
        gamma,
        n,
        pass: Proportion::new(passes, trials),
        target: 1.0 - (n as f64).powf(-gamma),
        first_violation: outcomes
            .iter()
            .enumerate()
            .find_map(|(t, v)| v.map(|v| (t as u64, v))),
    })
}

/// Largest tuple search space (as a power of two) that will be enumerated.
pub const MAX_TUPLE_SEARCH_LOG2: u32 = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependentTuples {
    /// Ordered tuples `(x_1, ..., x_k)`, `x_i` in `A_i`, in which every position
    /// character appears an even number of times.
    pub ordered_count: u64,
    /// Of those, tuples whose keys themselves pair up.
    pub trivial_count: u64,
    /// Distinct sorted multisets of the remaining tuples.
    pub nontrivial: Vec<Vec<u64>>,
    /// `((2t-1)!!)^c * prod sqrt(|A_i|)` for `k = 2t` sets; `None` for odd `k`.
    pub bound: Option<f64>,
}

fn double_factorial_odd(t: u64) -> f64 {
    (1..=t).map(|i| (2 * i - 1) as f64).product()
}

fn even_multiset<T: Ord + Copy>(items: &mut [T]) -> bool {
    items.sort_unstable();
    items.chunks(2).all(|p| p.len() == 2 && p[0] == p[1])
}

/// Exhaustive search for tuples with empty symmetric difference of position
/// characters. Every ordered tuple is counted; witnesses are deduplicated as
/// sorted multisets, so one unordered witness can stand for many orderings.
pub fn find_dependent_tuples(schema: KeySchema, sets: &[Vec<u64>]) -> Result<DependentTuples> {
    if sets.is_empty() {
        return Err(Error::InvalidParameter("need at least one key set".into()));
    }
    let mut log2 = 0.0f64;
    for (i, s) in sets.iter().enumerate() {
        for &k in s {
            schema.check_key(k)?;
        }
        // the last set is looked up by signature, not enumerated
        if i + 1 < sets.len() {
            log2 += (s.len().max(1) as f64).log2();
        }
    }
    if log2 > f64::from(MAX_TUPLE_SEARCH_LOG2) + 1e-9 {
        return Err(Error::EnumerationTooLarge {
            log2_size: log2.ceil() as u32,
            limit_log2: MAX_TUPLE_SEARCH_LOG2,
        });
    }
    let k = sets.len();
    let bound = k.is_multiple_of(2).then(|| {
        let t = (k / 2) as u64;
        double_factorial_odd(t).powi(schema.chars() as i32)
            * sets
                .iter()
                .map(|s| (s.len() as f64).sqrt())
                .product::<f64>()
    });
    let mut result = DependentTuples {
        ordered_count: 0,
        trivial_count: 0,
        nontrivial: Vec::new(),
        bound,
    };
    if k % 2 == 1 || sets.iter().any(Vec::is_empty) {
        return Ok(result);
    }

    // random signature per position character; XOR zero flags candidates,
    // which are then confirmed exactly
    let mut sig_rng = rng::stream(0x5eed, 0);
    let mut z: HashMap<PositionCharacter, u64> = HashMap::new();
    let mut sig = |key: u64| {
        schema
            .position_chars(key)
            .into_iter()
            .fold(0u64, |acc, pc| {
                acc ^ *z.entry(pc).or_insert_with(|| sig_rng.next_u64())
            })
    };
    let sigs: Vec<Vec<u64>> = sets
        .iter()
        .map(|s| s.iter().map(|&k| sig(k)).collect())
        .collect();
    // bucket the last set by signature
    let mut last: HashMap<u64, Vec<usize>> = HashMap::new();
    for (j, &s) in sigs[k - 1].iter().enumerate() {
        last.entry(s).or_default().push(j);
    }

    let mut nontrivial = BTreeSet::new();
    let mut idx = vec![0usize; k];
    let mut tuple = vec![0u64; k];
    let mut pcs = Vec::with_capacity(k * schema.chars() as usize);
    loop {
        let acc = (0..k - 1).fold(0u64, |a, i| a ^ sigs[i][idx[i]]);
        if let Some(cands) = last.get(&acc) {
            for &j in cands {
                for i in 0..k - 1 {
                    tuple[i] = sets[i][idx[i]];
                }
                tuple[k - 1] = sets[k - 1][j];
                pcs.clear();
                pcs.extend(tuple.iter().flat_map(|&x| schema.position_chars(x)));
                if !even_multiset(&mut pcs) {
                    continue;
                }
                result.ordered_count += 1;
                let mut sorted = tuple.clone();
                if even_multiset(&mut sorted) {
                    result.trivial_count += 1;
                } else {
                    nontrivial.insert(sorted);
                }
            }
        }
        // odometer over the first k - 1 sets
        let mut i = k - 1;
        loop {
            if i == 0 {
                result.nontrivial = nontrivial.into_iter().collect();
                return Ok(result);
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < sets[i].len() {
                break;
            }
            idx[i] = 0;
        }
    }
}
