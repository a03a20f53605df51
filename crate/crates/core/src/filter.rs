//! Filter hashing: a cascade of shrinking power-of-two tables filled greedily,
//! with a cuckoo backstop for the keys that overflow every filter.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cuckoo::{CuckooConfig, CuckooTable};
use crate::error::{Error, Result};
use crate::keyset::KeySetSpec;
use crate::par::{self, Execution};
use crate::rng;
use crate::tabulation::{bit_slice, KeySchema, SimpleTabulation};

/// How "largest power of two below x" treats an `x` that is itself a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BelowRule {
    #[default]
    Strict,
    Inclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadePlan {
    pub n: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub rule: BelowRule,
    /// `n_0, ..., n_{d-1}`.
    pub sizes: Vec<u64>,
    /// `m_0 = n, ..., m_d`.
    pub residuals: Vec<u64>,
}

impl CascadePlan {
    pub fn d(&self) -> usize {
        self.sizes.len()
    }

    pub fn total_slots(&self) -> u64 {
        self.sizes.iter().sum()
    }

    /// `ceil(2 log2(1/eps)^2 / delta)`.
    pub fn depth_bound(&self) -> u64 {
        depth_bound(self.epsilon, self.delta)
    }

    /// Per-step shrink factor `1 - delta / (2 log2(1/eps))`.
    pub fn shrink_factor(&self) -> f64 {
        1.0 - self.delta / (2.0 * (1.0 / self.epsilon).log2())
    }
}

fn depth_bound(epsilon: f64, delta: f64) -> u64 {
    let l = (1.0 / epsilon).log2();
    (2.0 * l * l / delta).ceil() as u64
}

fn power_of_two_below(x: f64, rule: BelowRule) -> Option<u64> {
    if x.is_nan() || x < 1.0 {
        return None;
    }
    let fl = x.floor() as u64;
    let p = 1u64 << (63 - fl.leading_zeros());
    match rule {
        BelowRule::Strict if p as f64 == x => (p > 1).then_some(p / 2),
        _ => Some(p),
    }
}

/// Table sizes `n_i` = largest power of two below `delta m_i / log2(1/eps)`,
/// stopping once `m_d <= eps n`.
pub fn plan_cascade(n: u64, epsilon: f64, delta: f64) -> Result<CascadePlan> {
    plan_cascade_with(n, epsilon, delta, BelowRule::Strict)
}

pub fn plan_cascade_with(n: u64, epsilon: f64, delta: f64, rule: BelowRule) -> Result<CascadePlan> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be in (0, 1), got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be in (0, 1], got {delta}"
        )));
    }
    if n < 16 || !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "n must be a power of two >= 16, got {n}"
        )));
    }
    let log_inv = (1.0 / epsilon).log2();
    let limit = epsilon * n as f64;
    let mut sizes = Vec::new();
    let mut residuals = vec![n];
    let mut m = n;
    while m as f64 > limit {
        let x = delta * m as f64 / log_inv;
        let size = power_of_two_below(x, rule).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "filter {} would have fewer than one slot (delta m / log2(1/eps) = {x})",
                sizes.len()
            ))
        })?;
        if size > m {
            return Err(Error::InvalidParameter(format!(
                "filter {} of size {size} exceeds the {m} remaining keys; epsilon too large for delta",
                sizes.len()
            )));
        }
        sizes.push(size);
        m -= size;
        residuals.push(m);
    }
    let plan = CascadePlan {
        n,
        epsilon,
        delta,
        rule,
        sizes,
        residuals,
    };
    if plan.d() as u64 > plan.depth_bound() {
        return Err(Error::CheckFailed(format!(
            "cascade depth {} exceeds {}",
            plan.d(),
            plan.depth_bound()
        )));
    }
    Ok(plan)
}

/// Where a key ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "index")]
pub enum Placement {
    Filter(usize),
    /// Cuckoo table 0 or 1, i.e. overall table `d` or `d + 1`.
    Cuckoo(usize),
    Failed,
}

/// One row of a placement dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub key: u64,
    /// `0..d` for filters, `d` and `d + 1` for the cuckoo tables; `None` if failed.
    pub table: Option<usize>,
    pub slot: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct View {
    instance: usize,
    index: u32,
    width: u32,
}

/// Filter-table hash functions as views of a few wide tabulations.
#[derive(Debug, Clone)]
struct FilterHashes {
    tabulations: Vec<SimpleTabulation>,
    views: Vec<View>,
}

impl FilterHashes {
    fn new(schema: KeySchema, widths: &[u32], seed: u64) -> Result<Self> {
        // greedy packing into tabulations of at most 64 bits
        let mut groups: Vec<Vec<u32>> = Vec::new();
        let mut used = 64u32;
        for &w in widths {
            if used + w > 64 || groups.is_empty() {
                groups.push(Vec::new());
                used = 0;
            }
            groups.last_mut().expect("group").push(w);
            used += w;
        }
        let mut tabulations = Vec::new();
        let mut views = Vec::new();
        for (g, ws) in groups.iter().enumerate() {
            let bits: u32 = ws.iter().sum();
            let s = rng::derive_seed(seed, rng::domain::FILTER, g as u64);
            tabulations.push(SimpleTabulation::new(schema, bits.max(1), s)?);
            let mut offset = 0;
            for &w in ws {
                views.push(View {
                    instance: g,
                    index: offset,
                    width: w,
                });
                offset += w;
            }
        }
        Ok(Self { tabulations, views })
    }

    #[inline]
    fn slot(&self, table: usize, key: u64) -> usize {
        let v = self.views[table];
        if v.width == 0 {
            return 0;
        }
        let h = self.tabulations[v.instance].hash_unchecked(key) >> v.index;
        bit_slice(h, 0, v.width) as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeCounts {
    pub filter: Vec<u64>,
    pub overflow: u64,
    pub cuckoo: u64,
    pub failed: u64,
}

#[derive(Debug, Clone)]
pub struct FilterCascade {
    plan: CascadePlan,
    schema: KeySchema,
    seed: u64,
    hashes: FilterHashes,
    tables: Vec<Vec<Option<u64>>>,
    cuckoo: CuckooTable,
    cuckoo_config: CuckooConfig,
    failed: Vec<u64>,
    overflow: u64,
}

impl FilterCascade {
    /// Empty cascade; the cuckoo tables are sized for `2 eps n` overflow keys.
    pub fn new(
        plan: CascadePlan,
        schema: KeySchema,
        cuckoo: CuckooConfig,
        seed: u64,
    ) -> Result<Self> {
        let capacity = (2.0 * plan.epsilon * plan.n as f64).ceil() as u64;
        Self::with_cuckoo_capacity(plan, schema, cuckoo, seed, capacity)
    }

    fn with_cuckoo_capacity(
        plan: CascadePlan,
        schema: KeySchema,
        cuckoo_config: CuckooConfig,
        seed: u64,
        capacity: u64,
    ) -> Result<Self> {
        let widths: Vec<u32> = plan.sizes.iter().map(|s| s.trailing_zeros()).collect();
        let hashes = FilterHashes::new(schema, &widths, seed)?;
        let tables = plan.sizes.iter().map(|&s| vec![None; s as usize]).collect();
        let cuckoo = CuckooTable::with_capacity(schema, capacity, cuckoo_config, seed)?;
        Ok(Self {
            plan,
            schema,
            seed,
            hashes,
            tables,
            cuckoo,
            cuckoo_config,
            failed: Vec::new(),
            overflow: 0,
        })
    }

    /// Batch build: fill the filters in key order, then build the cuckoo
    /// tables for exactly the overflow.
    pub fn build(
        plan: CascadePlan,
        schema: KeySchema,
        keys: &[u64],
        cuckoo_config: CuckooConfig,
        seed: u64,
    ) -> Result<Self> {
        check_distinct(schema, keys)?;
        let mut cascade = Self::with_cuckoo_capacity(plan, schema, cuckoo_config, seed, 0)?;
        let overflow: Vec<u64> = keys
            .iter()
            .copied()
            .filter(|&k| cascade.place_in_filters(k).is_none())
            .collect();
        cascade.overflow = overflow.len() as u64;
        match CuckooTable::build(schema, &overflow, cuckoo_config, seed)? {
            Ok(table) => cascade.cuckoo = table,
            Err(failure) => {
                cascade.cuckoo =
                    CuckooTable::with_capacity(schema, overflow.len() as u64, cuckoo_config, seed)?;
                cascade.failed = failure.keys;
            }
        }
        Ok(cascade)
    }

    pub fn plan(&self) -> &CascadePlan {
        &self.plan
    }

    pub fn schema(&self) -> KeySchema {
        self.schema
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cuckoo(&self) -> &CuckooTable {
        &self.cuckoo
    }

    pub fn cuckoo_config(&self) -> CuckooConfig {
        self.cuckoo_config
    }

    pub fn failed(&self) -> &[u64] {
        &self.failed
    }

    pub fn filter_table(&self, i: usize) -> &[Option<u64>] {
        &self.tables[i]
    }

    /// `h_i(key)` for filter `i`.
    pub fn filter_slot(&self, i: usize, key: u64) -> usize {
        self.hashes.slot(i, key)
    }

    fn place_in_filters(&mut self, key: u64) -> Option<usize> {
        for i in 0..self.tables.len() {
            let slot = self.hashes.slot(i, key);
            let cell = &mut self.tables[i][slot];
            if cell.is_none() {
                *cell = Some(key);
                return Some(i);
            }
        }
        None
    }

    /// Stores `key` in the first vacant filter slot, else in the cuckoo tables.
    pub fn insert(&mut self, key: u64) -> Result<Placement> {
        self.schema.check_key(key)?;
        if self.lookup(key).is_some() {
            return Err(Error::InvalidParameter(format!(
                "key {key} is already stored"
            )));
        }
        if let Some(i) = self.place_in_filters(key) {
            return Ok(Placement::Filter(i));
        }
        self.overflow += 1;
        match self.cuckoo.insert(key)? {
            Ok(side) => Ok(Placement::Cuckoo(side)),
            Err(_) => {
                self.failed.push(key);
                Ok(Placement::Failed)
            }
        }
    }

    /// Probes all `d + 2` tables.
    pub fn lookup(&self, key: u64) -> Option<Placement> {
        if self.schema.check_key(key).is_err() {
            return None;
        }
        (0..self.tables.len())
            .find(|&i| self.tables[i][self.hashes.slot(i, key)] == Some(key))
            .map(Placement::Filter)
            .or_else(|| {
                self.cuckoo
                    .lookup(key)
                    .map(|(side, _)| Placement::Cuckoo(side))
            })
    }

    pub fn counts(&self) -> CascadeCounts {
        CascadeCounts {
            filter: self
                .tables
                .iter()
                .map(|t| t.iter().filter(|s| s.is_some()).count() as u64)
                .collect(),
            overflow: self.overflow,
            cuckoo: self.cuckoo.len() as u64,
            failed: self.failed.len() as u64,
        }
    }

    pub fn stored(&self) -> u64 {
        let c = self.counts();
        c.filter.iter().sum::<u64>() + c.cuckoo
    }

    /// Every stored key and every failed key, by table then slot.
    pub fn placements(&self) -> Vec<PlacementRecord> {
        let d = self.tables.len();
        let filters = self.tables.iter().enumerate().flat_map(|(i, t)| {
            t.iter().enumerate().filter_map(move |(slot, k)| {
                k.map(|key| PlacementRecord {
                    key,
                    table: Some(i),
                    slot: Some(slot),
                })
            })
        });
        let cuckoo = (0..2).flat_map(|side| {
            self.cuckoo
                .table(side)
                .iter()
                .enumerate()
                .filter_map(move |(slot, k)| {
                    k.map(|key| PlacementRecord {
                        key,
                        table: Some(d + side),
                        slot: Some(slot),
                    })
                })
        });
        let failed = self.failed.iter().map(|&key| PlacementRecord {
            key,
            table: None,
            slot: None,
        });
        filters.chain(cuckoo).chain(failed).collect()
    }

    /// CSV with header `key,table,slot`; failed keys have empty table and slot.
    pub fn write_placement_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["key", "table", "slot"])?;
        for r in self.placements() {
            let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([r.key.to_string(), opt(r.table), opt(r.slot)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_distinct(schema: KeySchema, keys: &[u64]) -> Result<()> {
    let mut seen = HashSet::with_capacity(keys.len());
    for &k in keys {
        schema.check_key(k)?;
        if !seen.insert(k) {
            return Err(Error::InvalidParameter(format!("duplicate key {k}")));
        }
    }
    Ok(())
}

pub const CASCADE_REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub schema: KeySchema,
    pub n: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub rule: BelowRule,
    pub cuckoo: CuckooConfig,
    pub trials: u64,
    pub master_seed: u64,
}

impl CascadeConfig {
    pub fn new(
        schema: KeySchema,
        n: u64,
        epsilon: f64,
        delta: f64,
        trials: u64,
        seed: u64,
    ) -> Self {
        Self {
            schema,
            n,
            epsilon,
            delta,
            rule: BelowRule::Strict,
            cuckoo: CuckooConfig::default(),
            trials,
            master_seed: seed,
        }
    }

    fn keys_for_trial(&self, trial: u64) -> Result<Vec<u64>> {
        let seed = rng::derive_seed(self.master_seed, rng::domain::KEYSET, trial);
        KeySetSpec::UniformRandom { m: self.n, seed }.generate(self.schema)
    }

    /// The cascade built in trial `trial` from `n` fresh uniform keys.
    pub fn build_trial(&self, plan: &CascadePlan, trial: u64) -> Result<(Vec<u64>, FilterCascade)> {
        let keys = self.keys_for_trial(trial)?;
        let seed = rng::derive_seed(self.master_seed, rng::domain::FILTER, trial);
        let cascade = FilterCascade::build(plan.clone(), self.schema, &keys, self.cuckoo, seed)?;
        Ok((keys, cascade))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrial {
    pub trial: u64,
    pub overflow: u64,
    pub cuckoo_retries: u32,
    pub failed: u64,
    pub lookups_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub schema_version: u32,
    pub config: CascadeConfig,
    pub plan: CascadePlan,
    pub d: usize,
    pub depth_bound: u64,
    pub overflow_limit: f64,
    pub overflow_fraction_mean: f64,
    /// Fraction of trials with overflow at most `2 eps n`.
    pub overflow_within_limit: f64,
    /// Fraction of trials whose cuckoo build stored all overflow.
    pub cuckoo_success: f64,
    pub max_cuckoo_retries: u32,
    pub all_lookups_correct: bool,
    pub trials: Vec<CascadeTrial>,
}

impl CascadeReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Builds one cascade per trial and checks lookups for every key.
pub fn simulate_cascade(config: &CascadeConfig, exec: Execution) -> Result<CascadeReport> {
    if config.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let plan = plan_cascade_with(config.n, config.epsilon, config.delta, config.rule)?;
    let outcomes = par::map_indexed(config.trials, exec, |t| -> Result<CascadeTrial> {
        let (keys, cascade) = config.build_trial(&plan, t)?;
        let failed: HashSet<u64> = cascade.failed().iter().copied().collect();
        let lookups_correct = keys
            .iter()
            .all(|&k| cascade.lookup(k).is_some() != failed.contains(&k))
            && cascade.stored() + failed.len() as u64 == keys.len() as u64;
        Ok(CascadeTrial {
            trial: t,
            overflow: cascade.counts().overflow,
            cuckoo_retries: cascade.cuckoo().retries(),
            failed: failed.len() as u64,
            lookups_correct,
        })
    });
    let trials = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let count = trials.len() as f64;
    let limit = 2.0 * config.epsilon * config.n as f64;
    let frac = |pred: &dyn Fn(&CascadeTrial) -> bool| {
        trials.iter().filter(|t| pred(t)).count() as f64 / count
    };
    Ok(CascadeReport {
        schema_version: CASCADE_REPORT_SCHEMA_VERSION,
        config: config.clone(),
        d: plan.d(),
        depth_bound: plan.depth_bound(),
        overflow_limit: limit,
        overflow_fraction_mean: trials.iter().map(|t| t.overflow as f64).sum::<f64>()
            / count
            / config.n as f64,
        overflow_within_limit: frac(&|t| t.overflow as f64 <= limit),
        cuckoo_success: frac(&|t| t.failed == 0),
        max_cuckoo_retries: trials.iter().map(|t| t.cuckoo_retries).max().unwrap_or(0),
        all_lookups_correct: trials.iter().all(|t| t.lookups_correct),
        plan,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> KeySchema {
        KeySchema::new(4, 8).unwrap()
    }

    #[test]
    fn plan_first_size() {
        let p = plan_cascade(1024, 0.25, 0.5).unwrap();
        assert_eq!(p.sizes[0], 128);
        let p = plan_cascade_with(1024, 0.25, 0.5, BelowRule::Inclusive).unwrap();
        assert_eq!(p.sizes[0], 256);
        let p = plan_cascade(1 << 16, 0.125, 0.5).unwrap();
        assert_eq!(p.sizes[0], 8192);
    }

    #[test]
    fn plan_invariants() {
        for &(n, eps, delta) in &[
            (1024u64, 0.25, 0.5),
            (1 << 16, 0.125, 0.5),
            (1 << 20, 0.01, 1.0),
        ] {
            let p = plan_cascade(n, eps, delta).unwrap();
            assert_eq!(p.residuals.len(), p.d() + 1);
            assert_eq!(p.residuals[0], n);
            assert!(*p.residuals.last().unwrap() as f64 <= eps * n as f64);
            for m in &p.residuals[..p.d()] {
                assert!(*m as f64 > eps * n as f64);
            }
            for w in p.residuals.windows(2) {
                assert!(w[1] as f64 <= w[0] as f64 * p.shrink_factor());
            }
            assert!(p.total_slots() <= n);
            assert!(p.sizes.iter().all(|s| s.is_power_of_two()));
        }
    }

    #[test]
    fn plan_errors() {
        assert!(plan_cascade(1000, 0.25, 0.5).is_err());
        assert!(plan_cascade(8, 0.25, 0.5).is_err());
        assert!(plan_cascade(1024, 0.0, 0.5).is_err());
        assert!(plan_cascade(1024, 0.25, 1.5).is_err());
        // tiny delta drives n_0 below one slot
        assert!(plan_cascade(16, 0.001, 0.01).is_err());
    }

    #[test]
    fn empty_cascade_places_in_filter_zero() {
        let plan = plan_cascade(1024, 0.25, 0.5).unwrap();
        let mut c = FilterCascade::new(plan, schema(), CuckooConfig::default(), 1).unwrap();
        assert_eq!(c.insert(77).unwrap(), Placement::Filter(0));
        assert_eq!(c.lookup(77), Some(Placement::Filter(0)));
        assert_eq!(c.lookup(78), None);
        assert!(c.insert(77).is_err());
    }

    #[test]
    fn blocked_key_goes_to_cuckoo() {
        let plan = plan_cascade(1024, 0.25, 0.5).unwrap();
        let mut c = FilterCascade::new(plan, schema(), CuckooConfig::default(), 5).unwrap();
        let target = 123_456u64;
        // occupy target's slot in every filter with other keys
        let mut k = 0u64;
        for i in 0..c.plan().d() {
            let want = c.filter_slot(i, target);
            while c.tables[i][want].is_none() {
                if k != target && c.filter_slot(i, k) == want && c.lookup(k).is_none() {
                    c.tables[i][want] = Some(k);
                }
                k += 1;
            }
        }
        assert!(matches!(c.insert(target).unwrap(), Placement::Cuckoo(_)));
        assert!(matches!(c.lookup(target), Some(Placement::Cuckoo(_))));
    }

    #[test]
    fn sequential_and_batch_agree() {
        let plan = plan_cascade(256, 0.125, 0.5).unwrap();
        let keys = KeySetSpec::UniformRandom { m: 256, seed: 9 }
            .generate(schema())
            .unwrap();
        let batch = FilterCascade::build(plan.clone(), schema(), &keys, CuckooConfig::default(), 3)
            .unwrap();
        let mut seq = FilterCascade::new(plan, schema(), CuckooConfig::default(), 3).unwrap();
        for &k in &keys {
            seq.insert(k).unwrap();
        }
        assert_eq!(batch.tables, seq.tables);
        assert_eq!(batch.counts().overflow, seq.counts().overflow);
        for &k in &keys {
            assert_eq!(
                matches!(batch.lookup(k), Some(Placement::Filter(_))),
                matches!(seq.lookup(k), Some(Placement::Filter(_)))
            );
        }
    }

    #[test]
    fn conservation_and_csv() {
        let plan = plan_cascade(1024, 0.25, 0.5).unwrap();
        let keys = KeySetSpec::UniformRandom { m: 1024, seed: 2 }
            .generate(schema())
            .unwrap();
        let c = FilterCascade::build(plan, schema(), &keys, CuckooConfig::default(), 8).unwrap();
        assert_eq!(c.stored() + c.failed().len() as u64, 1024);
        let recs = c.placements();
        assert_eq!(recs.len(), 1024);
        let mut seen: Vec<u64> = recs.iter().map(|r| r.key).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 1024);
        let mut buf = Vec::new();
        c.write_placement_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("key,table,slot\n"));
        assert_eq!(text.lines().count(), 1025);
    }

    #[test]
    fn small_simulation() {
        let cfg = CascadeConfig::new(schema(), 1024, 0.25, 0.5, 4, 11);
        let r = simulate_cascade(&cfg, Execution::Parallel).unwrap();
        assert!(r.all_lookups_correct);
        assert_eq!(r.trials.len(), 4);
        let s = simulate_cascade(&cfg, Execution::Sequential).unwrap();
        assert_eq!(r, s);
    }
}
