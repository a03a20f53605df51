//! Balls-into-bins experiments: how many bins does a key set hit under a
//! randomly drawn hash function, and how often does it hit a given bin?

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::{self, TailBound};
use crate::error::{Error, Result};
use crate::family::{FamilySpec, HashFamily};
use crate::keyset::{smallest_absent_key, KeySetSpec};
use crate::par::{self, Execution};
use crate::projector::RangeProjector;
use crate::rng;
use crate::stats::{Proportion, Summary};
use crate::tabulation::KeySchema;

/// Version of the JSON layout of [`OccupancyReport`].
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// What the hit indicator of a trial measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum QueryMode {
    /// Is the fixed bin `bin` in `h(X)`?
    FixedBin { bin: u64 },
    /// Is `h(q)` in `h(X)`, with `q` the smallest key outside `X`?
    QueryBall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyConfig {
    pub schema: KeySchema,
    pub keyset: KeySetSpec,
    pub family: FamilySpec,
    /// Output bits `r` of the hash function before projection.
    pub out_bits: u32,
    /// Number of bins; values are projected from `[2^r]` when `n < 2^r`.
    pub n: u64,
    pub trials: u64,
    pub master_seed: u64,
    pub query: QueryMode,
    /// Failure exponent for high-probability claims, reported as `1 - n^-gamma`.
    pub gamma: f64,
    /// Deviations `t` for the tail table; defaults to multiples of `sqrt(m^(2-1/c)) / 2`.
    pub tail_grid: Option<Vec<f64>>,
}

impl OccupancyConfig {
    /// Defaults: simple tabulation, bin 0, `gamma = 1`, default tail grid.
    pub fn new(
        schema: KeySchema,
        keyset: KeySetSpec,
        out_bits: u32,
        n: u64,
        trials: u64,
        master_seed: u64,
    ) -> Self {
        Self {
            schema,
            keyset,
            family: FamilySpec::SimpleTabulation,
            out_bits,
            n,
            trials,
            master_seed,
            query: QueryMode::FixedBin { bin: 0 },
            gamma: 1.0,
            tail_grid: None,
        }
    }

    pub fn with_family(mut self, family: FamilySpec) -> Self {
        self.family = family;
        self
    }

    pub fn with_query(mut self, query: QueryMode) -> Self {
        self.query = query;
        self
    }

    pub fn with_tail_grid(mut self, grid: Vec<f64>) -> Self {
        self.tail_grid = Some(grid);
        self
    }
}

/// A validated configuration with its key set materialized.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: OccupancyConfig,
    keys: Vec<u64>,
    projector: RangeProjector,
    query_key: Option<u64>,
}

impl Experiment {
    pub fn prepare(config: OccupancyConfig) -> Result<Self> {
        if config.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        let projector = RangeProjector::new(config.out_bits, config.n)?;
        if config.gamma.is_nan() || config.gamma <= 0.0 {
            return Err(Error::InvalidParameter("gamma must be positive".into()));
        }
        let keys = config.keyset.generate(config.schema)?;
        let query_key = match config.query {
            QueryMode::FixedBin { bin } => {
                if bin >= config.n {
                    return Err(Error::BinOutOfRange { bin, n: config.n });
                }
                None
            }
            QueryMode::QueryBall => {
                Some(smallest_absent_key(config.schema, &keys).ok_or_else(|| {
                    Error::InvalidParameter("key set covers the universe; no query key".into())
                })?)
            }
        };
        // instantiating once validates the family parameters
        config
            .family
            .instantiate(config.schema, config.out_bits, config.master_seed)?;
        Ok(Self {
            config,
            keys,
            projector,
            query_key,
        })
    }

    pub fn config(&self) -> &OccupancyConfig {
        &self.config
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn projector(&self) -> RangeProjector {
        self.projector
    }

    pub fn query_key(&self) -> Option<u64> {
        self.query_key
    }

    /// The hash function used in trial `index`.
    pub fn family_for_trial(&self, index: u64) -> HashFamily {
        let seed = rng::derive_seed(self.config.master_seed, rng::domain::FAMILY, index);
        self.config
            .family
            .instantiate(self.config.schema, self.config.out_bits, seed)
            .expect("family parameters validated in prepare")
    }

    /// Runs `probe` once per trial and returns the results in trial order.
    pub fn map_trials<T, F>(&self, exec: Execution, probe: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&Trial<'_>) -> T + Sync + Send,
    {
        par::map_indexed(self.config.trials, exec, |index| {
            let family = self.family_for_trial(index);
            probe(&Trial {
                index,
                family: &family,
                projector: self.projector,
                keys: &self.keys,
            })
        })
    }

    pub fn run(&self, exec: Execution) -> Result<OccupancyReport> {
        let outcomes = self.map_trials(exec, |trial| {
            let (occupancy, hit) = match self.config.query {
                QueryMode::FixedBin { bin } => trial.occupancy_and_hit(bin),
                QueryMode::QueryBall => {
                    let q = self.query_key.expect("query key resolved in prepare");
                    trial.occupancy_and_hit(trial.bin(q))
                }
            };
            TrialOutcome { occupancy, hit }
        });
        OccupancyReport::from_outcomes(self, &outcomes)
    }
}

/// One trial: a freshly drawn hash function applied to the key set.
pub struct Trial<'a> {
    pub index: u64,
    pub family: &'a HashFamily,
    pub projector: RangeProjector,
    pub keys: &'a [u64],
}

impl Trial<'_> {
    #[inline]
    pub fn bin(&self, key: u64) -> u64 {
        self.projector.project(self.family.eval_unchecked(key))
    }

    /// `|h(X)|`.
    pub fn occupancy(&self) -> u64 {
        count_distinct(
            self.keys.iter().map(|&k| self.bin(k)),
            self.projector.n(),
            None,
        )
        .0
    }

    /// `|h(X)|` and whether `target` is among the hit bins.
    pub fn occupancy_and_hit(&self, target: u64) -> (u64, bool) {
        count_distinct(
            self.keys.iter().map(|&k| self.bin(k)),
            self.projector.n(),
            Some(target),
        )
    }
}

/// Number of distinct values among `bins` (all `< n`), plus membership of `probe`.
pub fn count_distinct(
    bins: impl ExactSizeIterator<Item = u64>,
    n: u64,
    probe: Option<u64>,
) -> (u64, bool) {
    let len = bins.len() as u64;
    if n <= 64 * len.max(1) + 64 {
        let mut bitmap = vec![0u64; n.div_ceil(64) as usize];
        let mut distinct = 0u64;
        for z in bins {
            let (w, b) = ((z / 64) as usize, z % 64);
            distinct += u64::from(bitmap[w] >> b & 1 == 0);
            bitmap[w] |= 1 << b;
        }
        let hit = probe.is_some_and(|z| z < n && bitmap[(z / 64) as usize] >> (z % 64) & 1 == 1);
        (distinct, hit)
    } else {
        let mut v: Vec<u64> = bins.collect();
        v.sort_unstable();
        v.dedup();
        let hit = probe.is_some_and(|z| v.binary_search(&z).is_ok());
        (v.len() as u64, hit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub occupancy: u64,
    pub hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub occupancy: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitReport {
    /// `bin:<z>` or `query:<q>`.
    pub target: String,
    pub estimate: Proportion,
    /// `|p_hat - p0|`.
    pub abs_deviation: f64,
    /// `m^(2-1/c) / n^2`, doubled in query-ball mode.
    pub deviation_bound: f64,
}

/// Empirical and constant-free reference tail frequencies at one deviation `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    /// `Pr_hat[|h(X)| >= mu0 + 2t]`.
    pub upper_2t_freq: f64,
    pub quad_upper: f64,
    /// `Pr_hat[|h(X)| <= mu0 - 2t]`.
    pub lower_2t_freq: f64,
    /// `None` where the curve is infinite (`t = 0`).
    pub quad_lower: Option<f64>,
    /// `Pr_hat[|h(X)| >= mu0 + t]`.
    pub upper_t_freq: f64,
    /// `None` when `m > n`.
    pub sparse_upper: Option<f64>,
    /// `Pr_hat[|h(X)| <= mu0 - t]`.
    pub lower_t_freq: f64,
    pub sparse_lower: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyReport {
    pub schema_version: u32,
    pub config: OccupancyConfig,
    pub m: u64,
    pub c: u32,
    pub histogram: Vec<HistogramBin>,
    pub occupancy: Summary,
    pub p0: f64,
    pub mu0: f64,
    /// `m^(2-1/c) / n`.
    pub mean_deviation_bound: f64,
    pub hit: HitReport,
    /// `1 - n^-gamma`.
    pub whp_level: f64,
    pub bound_convention: String,
    pub tails: Vec<TailRow>,
}

impl OccupancyReport {
    pub fn from_outcomes(exp: &Experiment, outcomes: &[TrialOutcome]) -> Result<Self> {
        let cfg = exp.config();
        let m = exp.keys().len() as u64;
        let n = cfg.n;
        let c = cfg.schema.chars();
        let p0 = bounds::p0(n, m)?;
        let mu0 = bounds::mu0(n, m)?;
        let mut hist = BTreeMap::new();
        for o in outcomes {
            *hist.entry(o.occupancy).or_insert(0u64) += 1;
        }
        let occupancy = Summary::of(outcomes.iter().map(|o| o.occupancy as f64));
        let hits = outcomes.iter().filter(|o| o.hit).count() as u64;
        let estimate = Proportion::new(hits, outcomes.len() as u64);
        let query = matches!(cfg.query, QueryMode::QueryBall);
        let target = match (cfg.query, exp.query_key()) {
            (QueryMode::FixedBin { bin }, _) => format!("bin:{bin}"),
            (QueryMode::QueryBall, Some(q)) => format!("query:{q}"),
            (QueryMode::QueryBall, None) => "query:none".into(),
        };
        let hit = HitReport {
            target,
            abs_deviation: (estimate.estimate - p0).abs(),
            deviation_bound: bounds::hit_probability_bound(n, m.max(1), c, query),
            estimate,
        };
        let grid = match &cfg.tail_grid {
            Some(g) => g.clone(),
            None => default_tail_grid(m, c),
        };
        let tails = grid
            .iter()
            .map(|&t| tail_row(outcomes, n, m, c, mu0, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            config: cfg.clone(),
            m,
            c,
            histogram: hist
                .into_iter()
                .map(|(occupancy, count)| HistogramBin { occupancy, count })
                .collect(),
            occupancy,
            p0,
            mu0,
            mean_deviation_bound: bounds::occupancy_mean_bound(n, m, c),
            hit,
            whp_level: 1.0 - (n as f64).powf(-cfg.gamma),
            bound_convention: "constant-free".into(),
            tails,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The tail table as CSV, one row per `t`.
    pub fn write_tail_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.tails {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `t = k sqrt(m^(2-1/c)) / 2` for `k = 0..=8`.
pub fn default_tail_grid(m: u64, c: u32) -> Vec<f64> {
    let scale = (m as f64).powf(2.0 - 1.0 / f64::from(c)).sqrt() / 2.0;
    (0..=8).map(|k| f64::from(k) * scale).collect()
}

fn tail_row(
    outcomes: &[TrialOutcome],
    n: u64,
    m: u64,
    c: u32,
    mu0: f64,
    t: f64,
) -> Result<TailRow> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidParameter(format!("tail deviation {t} < 0")));
    }
    let freq = |pred: &dyn Fn(f64) -> bool| {
        let k = outcomes.iter().filter(|o| pred(o.occupancy as f64)).count();
        if outcomes.is_empty() {
            0.0
        } else {
            k as f64 / outcomes.len() as f64
        }
    };
    let finite = |v: Result<f64>| v.ok().filter(|x| x.is_finite());
    let mm = m.max(1);
    Ok(TailRow {
        t,
        upper_2t_freq: freq(&|x| x >= mu0 + 2.0 * t),
        quad_upper: bounds::tail_bound(TailBound::QuadUpper, n, mm, c, t)?,
        lower_2t_freq: freq(&|x| x <= mu0 - 2.0 * t),
        quad_lower: finite(bounds::tail_bound(TailBound::QuadLower, n, mm, c, t)),
        upper_t_freq: freq(&|x| x >= mu0 + t),
        sparse_upper: finite(bounds::tail_bound(TailBound::SparseUpper, n, mm, c, t)),
        lower_t_freq: freq(&|x| x <= mu0 - t),
        sparse_lower: finite(bounds::tail_bound(TailBound::SparseLower, n, mm, c, t)),
    })
}

/// Prepares and runs an occupancy experiment.
pub fn run_occupancy(config: OccupancyConfig) -> Result<OccupancyReport> {
    Experiment::prepare(config)?.run(Execution::Parallel)
}
