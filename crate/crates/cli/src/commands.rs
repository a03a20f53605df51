use std::collections::HashSet;
use std::time::Instant;

use serde::Serialize;
use tabhash::bloom::{measure_fpr, FprReport};
use tabhash::bounds::{
    hit_probability_bound, occupancy_mean_bound, p0_exact, within_hit_probability_bound,
};
use tabhash::cuckoo::CuckooConfig;
use tabhash::diagnostics::{
    boundedness_experiment, collision_experiment, BoundednessReport, CollisionReport,
    DependentTuples,
};
use tabhash::exact::enumerate_fillings;
use tabhash::filter::{simulate_cascade, BelowRule, CascadeConfig};
use tabhash::par::with_threads;
use tabhash::{
    compute_group_ordering, find_dependent_tuples, mu0, p0, tail_bound, BloomFilter, BloomParams,
    BloomSizing, Error, ExactRatio, Execution, Experiment, FamilySpec, KeySchema, KeySetSpec,
    OccupancyConfig, QueryMode, Result, TailBound,
};

use crate::manifest::{create_file, write_file, Output};
use crate::{BinsArgs, BloomArgs, BoundsArgs, Cli, Command, DiagnoseArgs, ExactArgs, FilterArgs};

pub fn run(cli: &Cli) -> Result<()> {
    let mut output = Output {
        out: cli.out.clone(),
        csv: cli.csv.clone(),
        extra: Vec::new(),
        timing: cli.timing,
        started: Instant::now(),
    };
    with_threads(cli.threads, || match &cli.command {
        Command::Bins(a) => bins(a, cli.seed, &output),
        Command::Exact(a) => exact(a, cli.seed, &output),
        Command::Bloom(a) => {
            output.extra.extend(a.save.clone());
            bloom(a, cli.seed, &output)
        }
        Command::Filter(a) => {
            output.extra.extend(a.dump_placement.clone());
            filter(a, cli.seed, &output)
        }
        Command::Diagnose(a) => {
            output.extra.extend(a.dump_groups.clone());
            diagnose(a, cli.seed, &output)
        }
        Command::Bounds(a) => bounds(a, cli.seed, &output),
    })
}

fn schema(chars: u32, char_bits: u32) -> Result<KeySchema> {
    KeySchema::new(chars, char_bits)
}

/// Parses a key set; `rand:M` without a seed takes the master seed.
fn keyset(spec: &str, seed: u64) -> Result<KeySetSpec> {
    let parsed: KeySetSpec = spec.parse()?;
    Ok(match parsed {
        KeySetSpec::UniformRandom { m, .. } if !spec.contains(',') => {
            KeySetSpec::UniformRandom { m, seed }
        }
        other => other,
    })
}

fn family(spec: &str) -> Result<FamilySpec> {
    match spec {
        "simple-tabulation" | "tabulation" => Ok(FamilySpec::SimpleTabulation),
        "fully-random" => Ok(FamilySpec::FullyRandom),
        _ => {
            let k = spec
                .strip_prefix("poly-")
                .and_then(|k| k.parse::<u32>().ok())
                .ok_or_else(|| Error::InvalidParameter(format!("unknown family '{spec}'")))?;
            Ok(FamilySpec::PolyK { k, prime: None })
        }
    }
}

fn bins_count(r: u32, n: Option<u64>) -> Result<u64> {
    if r == 0 || r > 64 {
        return Err(Error::InvalidOutBits(r));
    }
    let full = if r == 64 { u64::MAX } else { 1u64 << r };
    match n {
        Some(n) if n == 0 || (r < 64 && n > full) => {
            Err(Error::InvalidProjector { out_bits: r, n })
        }
        Some(n) => Ok(n),
        None if r == 64 => Err(Error::InvalidParameter("give --n when r = 64".into())),
        None => Ok(full),
    }
}

fn bins(a: &BinsArgs, seed: u64, output: &Output) -> Result<()> {
    let s = schema(a.schema.chars, a.schema.char_bits)?;
    let n = bins_count(a.r, a.n)?;
    let query = match a.target.as_str() {
        "query" => QueryMode::QueryBall,
        z => QueryMode::FixedBin {
            bin: z
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad target '{z}'")))?,
        },
    };
    let mut config = OccupancyConfig::new(s, keyset(&a.keyset, seed)?, a.r, n, a.trials, seed)
        .with_family(family(&a.family)?)
        .with_query(query);
    config.gamma = a.gamma;
    if let Some(grid) = &a.tail_grid {
        config = config.with_tail_grid(grid.clone());
    }
    let report = Experiment::prepare(config)?.run(Execution::Parallel)?;
    if let Some(path) = &output.csv {
        report.write_tail_csv(create_file(path)?)?;
    }
    let manifest = output.manifest("bins", a, seed)?;
    let summary = format!(
        "m={} n={} trials={} p_hat={:.6} p0={:.6} |p_hat-p0|={:.6} bound={:.6} mean|h(X)|={:.3} mu0={:.3}",
        report.m,
        n,
        a.trials,
        report.hit.estimate.estimate,
        report.p0,
        report.hit.abs_deviation,
        report.hit.deviation_bound,
        report.occupancy.mean,
        report.mu0
    );
    output.emit(&manifest, &report, &summary)
}

#[derive(Serialize)]
struct ExactReport {
    m: u64,
    n: u64,
    fillings: u64,
    bin: u64,
    p: ExactRatio,
    p_decimal: f64,
    p0: Option<ExactRatio>,
    p0_decimal: f64,
    deviation: Option<ExactRatio>,
    deviation_bound: f64,
    within_bound: Option<bool>,
    query_key: Option<u64>,
    query_p: Option<ExactRatio>,
    query_within_bound: Option<bool>,
    mean_occupancy: ExactRatio,
    mean_deviation_bound: f64,
    distribution: Vec<ExactRatio>,
}

fn exact(a: &ExactArgs, seed: u64, output: &Output) -> Result<()> {
    let s = schema(a.schema.chars, a.schema.char_bits)?;
    let n = bins_count(a.r, a.n)?;
    let keys = keyset(&a.keyset, seed)?.generate(s)?;
    let occ = enumerate_fillings(s, a.r, &keys, Some(n), a.query_key)?;
    let m = keys.len() as u64;
    let c = s.chars();
    let p = occ.hit_probability(a.bin)?;
    let p0x = p0_exact(n, m).ok();
    let deviation = p0x.map(|q| p.abs_diff(q));
    let query_p = occ
        .query_hits
        .map(|h| ExactRatio::new(u128::from(h), u128::from(occ.fillings)));
    let report = ExactReport {
        m,
        n,
        fillings: occ.fillings,
        bin: a.bin,
        p,
        p_decimal: p.to_f64(),
        p0: p0x,
        p0_decimal: p0(n, m)?,
        deviation,
        deviation_bound: hit_probability_bound(n, m, c, false),
        within_bound: deviation.and_then(|d| within_hit_probability_bound(d, n, m, c, false)),
        query_key: a.query_key,
        query_p,
        query_within_bound: query_p
            .zip(p0x)
            .and_then(|(qp, q0)| within_hit_probability_bound(qp.abs_diff(q0), n, m, c, true)),
        mean_occupancy: occ.mean(),
        mean_deviation_bound: occupancy_mean_bound(n, m, c),
        distribution: occ.distribution(),
    };
    if let Some(path) = &output.csv {
        let mut w = csv_writer(path)?;
        w.write_record(["occupancy", "probability", "decimal"])?;
        for (k, r) in report.distribution.iter().enumerate() {
            w.write_record([k.to_string(), r.to_string(), r.to_f64().to_string()])?;
        }
        w.flush()?;
    }
    let manifest = output.manifest("exact", a, seed)?;
    let mut summary = format!("p = {} = {}", report.p, report.p_decimal);
    if let (Some(q0), Some(d)) = (report.p0, report.deviation) {
        summary += &format!(
            "  p0 = {q0} = {}  |p-p0| = {d}  bound = {}",
            q0.to_f64(),
            report.deviation_bound
        );
    }
    output.emit(&manifest, &report, &summary)
}

#[derive(Serialize)]
struct BloomReport {
    keys: u64,
    false_negatives: u64,
    fpr: FprReport,
}

fn bloom(a: &BloomArgs, seed: u64, output: &Output) -> Result<()> {
    let s = schema(a.chars, a.char_bits)?;
    let sizing = a.bits.map_or(BloomSizing::MinimalFpr, BloomSizing::Bits);
    let params = BloomParams::plan(a.m, a.k, sizing, a.r, !a.single_instance)?;
    let spec = match &a.keyset {
        Some(k) => keyset(k, seed)?,
        None => KeySetSpec::UniformRandom {
            m: a.m,
            seed: tabhash::rng::derive_seed(seed, tabhash::rng::domain::KEYSET, 0),
        },
    };
    let keys = spec.generate(s)?;
    let mut filter = BloomFilter::new(params, s, seed)?;
    for &k in &keys {
        filter.insert(k)?;
    }
    let false_negatives = keys
        .iter()
        .map(|&k| filter.query(k))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|hit| !hit)
        .count() as u64;
    if false_negatives > 0 {
        return Err(Error::CheckFailed(format!(
            "{false_negatives} inserted keys not reported present"
        )));
    }
    let members: HashSet<u64> = keys.iter().copied().collect();
    let query_seed = tabhash::rng::derive_seed(seed, tabhash::rng::domain::QUERY, 0);
    let fpr = measure_fpr(
        &filter,
        &members,
        a.queries,
        query_seed,
        Execution::Parallel,
    )?;
    if let Some(path) = &a.save {
        write_file(path, &filter.to_bytes())?;
    }
    if let Some(path) = &output.csv {
        let mut w = csv_writer(path)?;
        w.write_record(["array", "fill_ratio"])?;
        for (i, f) in fpr.fill_ratios.iter().enumerate() {
            w.write_record([i.to_string(), f.to_string()])?;
        }
        w.flush()?;
    }
    let report = BloomReport {
        keys: keys.len() as u64,
        false_negatives,
        fpr,
    };
    let manifest = output.manifest("bloom", a, seed)?;
    let summary = format!(
        "m={} k={} n={} r={} queries={} fpr={:.6e} p0^k={:.6e} ratio={:.4}",
        report.keys,
        params.k,
        params.n,
        params.r,
        a.queries,
        report.fpr.estimate.estimate,
        report.fpr.theoretical_fpr,
        report.fpr.ratio
    );
    output.emit(&manifest, &report, &summary)
}

fn filter(a: &FilterArgs, seed: u64, output: &Output) -> Result<()> {
    let s = schema(a.chars, a.char_bits)?;
    let mut config = CascadeConfig::new(s, a.n, a.epsilon, a.delta, a.trials, seed);
    if a.inclusive {
        config.rule = BelowRule::Inclusive;
    }
    config.cuckoo = CuckooConfig {
        slack: a.slack,
        max_chain: a.max_chain,
        max_retries: a.max_retries,
    };
    let report = simulate_cascade(&config, Execution::Parallel)?;
    if !report.all_lookups_correct {
        return Err(Error::CheckFailed(
            "a stored key was not found by lookup".into(),
        ));
    }
    if let Some(path) = &a.dump_placement {
        let (_, cascade) = config.build_trial(&report.plan, 0)?;
        cascade.write_placement_csv(create_file(path)?)?;
    }
    if let Some(path) = &output.csv {
        let mut w = csv_writer(path)?;
        for t in &report.trials {
            w.serialize(t)?;
        }
        w.flush()?;
    }
    let manifest = output.manifest("filter", a, seed)?;
    let summary = format!(
        "n={} d={} (bound {}) sizes={:?} overflow<=2en in {:.1}% of trials, cuckoo ok in {:.1}%, max retries {}",
        a.n,
        report.d,
        report.depth_bound,
        report.plan.sizes,
        100.0 * report.overflow_within_limit,
        100.0 * report.cuckoo_success,
        report.max_cuckoo_retries
    );
    output.emit(&manifest, &report, &summary)
}

#[derive(Serialize)]
struct OrderingSummary {
    m: u64,
    query_key: Option<u64>,
    position_characters: usize,
    nonempty_groups: usize,
    max_group: u64,
    group_cap: f64,
    sum_of_squares: u64,
}

#[derive(Serialize)]
struct DiagnoseReport {
    ordering: OrderingSummary,
    collisions: CollisionReport,
    boundedness: BoundednessReport,
    tuples: Option<DependentTuples>,
}

fn diagnose(a: &DiagnoseArgs, seed: u64, output: &Output) -> Result<()> {
    let s = schema(a.schema.chars, a.schema.char_bits)?;
    let n = bins_count(a.r, a.n)?;
    let keys = keyset(&a.keyset, seed)?.generate(s)?;
    let ordering = compute_group_ordering(s, &keys, a.query_key)?;
    let collisions = collision_experiment(&ordering, a.r, n, a.trials, seed, Execution::Parallel)?;
    let boundedness = boundedness_experiment(
        &ordering,
        a.r,
        n,
        a.gamma,
        a.trials,
        seed,
        Execution::Parallel,
    )?;
    let tuples = match a.tuples {
        Some(t) => Some(find_dependent_tuples(
            s,
            &vec![keys.clone(); 2 * t as usize],
        )?),
        None => None,
    };
    if let Some(path) = &a.dump_groups {
        ordering.write_groups_csv(create_file(path)?)?;
    }
    if let Some(path) = &output.csv {
        let mut w = csv_writer(path)?;
        w.write_record(["trial", "collisions"])?;
        for (t, c) in collisions.per_trial.iter().enumerate() {
            w.write_record([t.to_string(), c.to_string()])?;
        }
        w.flush()?;
    }
    let report = DiagnoseReport {
        ordering: OrderingSummary {
            m: ordering.m(),
            query_key: a.query_key,
            position_characters: ordering.order.len(),
            nonempty_groups: ordering.groups.iter().filter(|g| !g.is_empty()).count(),
            max_group: ordering.max_group(),
            group_cap: ordering.cap(),
            sum_of_squares: ordering.sum_of_squares(),
        },
        collisions,
        boundedness,
        tuples,
    };
    let manifest = output.manifest("diagnose", a, seed)?;
    let mut summary = format!(
        "m={} max group={} cap={:.3} mean C={:.4} (bound {:.4}) var C={:.4} (bound {:.4}) d={} pass={:.4}",
        report.ordering.m,
        report.ordering.max_group,
        report.ordering.group_cap,
        report.collisions.collisions.mean,
        report.collisions.mean_bound,
        report.collisions.collisions.variance,
        report.collisions.variance_bound,
        report.boundedness.d,
        report.boundedness.pass.estimate
    );
    if let Some(t) = &report.tuples {
        summary += &format!(" dependent tuples={} bound={:?}", t.ordered_count, t.bound);
    }
    output.emit(&manifest, &report, &summary)
}

#[derive(Serialize)]
struct BoundsRow {
    bound: TailBound,
    t: f64,
    value: Option<f64>,
}

#[derive(Serialize)]
struct BoundsReport {
    p0: f64,
    mu0: f64,
    hit_probability_bound: f64,
    query_hit_probability_bound: f64,
    occupancy_mean_bound: f64,
    rows: Vec<BoundsRow>,
}

fn bounds(a: &BoundsArgs, seed: u64, output: &Output) -> Result<()> {
    if a.chars == 0 {
        return Err(Error::InvalidParameter("c must be at least 1".into()));
    }
    let which: Vec<TailBound> = match &a.which {
        Some(w) => vec![w.parse()?],
        None => vec![
            TailBound::QuadUpper,
            TailBound::QuadLower,
            TailBound::SparseUpper,
            TailBound::SparseLower,
        ],
    };
    let mut rows = Vec::new();
    for &b in &which {
        for &t in &a.t {
            let value = match tail_bound(b, a.n, a.m, a.chars, t) {
                Ok(v) if v.is_finite() => Some(v),
                Ok(_) => None,
                // shapes that need m <= n are simply absent otherwise
                Err(_) if a.m > a.n && t >= 0.0 && a.m > 0 => None,
                Err(e) => return Err(e),
            };
            rows.push(BoundsRow { bound: b, t, value });
        }
    }
    let report = BoundsReport {
        p0: p0(a.n, a.m)?,
        mu0: mu0(a.n, a.m)?,
        hit_probability_bound: hit_probability_bound(a.n, a.m, a.chars, false),
        query_hit_probability_bound: hit_probability_bound(a.n, a.m, a.chars, true),
        occupancy_mean_bound: occupancy_mean_bound(a.n, a.m, a.chars),
        rows,
    };
    if let Some(path) = &output.csv {
        let mut w = csv_writer(path)?;
        w.write_record(["bound", "t", "value"])?;
        for r in &report.rows {
            let name = serde_json::to_value(r.bound)?;
            w.write_record([
                name.as_str().unwrap_or_default().to_string(),
                r.t.to_string(),
                r.value.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    let manifest = output.manifest("bounds", a, seed)?;
    let summary = format!(
        "p0={:.6} mu0={:.3} hit bound={:.6} ({} tail rows)",
        report.p0,
        report.mu0,
        report.hit_probability_bound,
        report.rows.len()
    );
    output.emit(&manifest, &report, &summary)
}

fn csv_writer(path: &std::path::Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_writer(create_file(path)?))
}
