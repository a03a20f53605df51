//! Acceptance suite: runs every criterion at its stated scale and tolerance,
//! prints one PASS/FAIL line each, and exits non-zero if any fails.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabhash::bloom::measure_fpr;
use tabhash::bounds::{p0_exact, tail_bound, within_hit_probability_bound};
use tabhash::diagnostics::{collision_experiment, compute_group_ordering};
use tabhash::exact::enumerate_fillings;
use tabhash::filter::{simulate_cascade, CascadeConfig};
use tabhash::par::with_threads;
use tabhash::stats::Summary;
use tabhash::{
    BloomFilter, BloomParams, BloomSizing, ExactRatio, Execution, Experiment, FamilySpec,
    KeySchema, KeySetSpec, OccupancyConfig, RangeProjector, Result, TailBound,
};

type Outcome = Result<(bool, String)>;

fn ac1() -> Outcome {
    let start = Instant::now();
    let schema = KeySchema::new(2, 1)?;
    let occ = enumerate_fillings(schema, 2, &[0, 1, 2, 3], None, None)?;
    let p = occ.hit_probability(0)?;
    let p0 = p0_exact(4, 4)?;
    let diff = p.abs_diff(p0);
    let within = within_hit_probability_bound(diff, 4, 4, 2, false) == Some(true);
    let secs = start.elapsed().as_secs_f64();
    let ok = occ.fillings == 256
        && p == ExactRatio::new(43, 64)
        && p0 == ExactRatio::new(175, 256)
        && diff == ExactRatio::new(3, 256)
        && within
        && secs < 1.0;
    Ok((
        ok,
        format!("p={p} p0={p0} |p-p0|={diff} <= 1/2: {within}, {secs:.3}s"),
    ))
}

fn grid_config(family: FamilySpec) -> Result<OccupancyConfig> {
    Ok(OccupancyConfig::new(
        KeySchema::new(2, 8)?,
        KeySetSpec::Grid { dims: vec![32, 32] },
        10,
        1024,
        100_000,
        42,
    )
    .with_family(family))
}

fn ac2() -> Outcome {
    let r = Experiment::prepare(grid_config(FamilySpec::SimpleTabulation)?)?
        .run(Execution::Parallel)?;
    let se = r.hit.estimate.se;
    let limit = r.hit.deviation_bound + 3.0 * se;
    Ok((
        r.hit.abs_deviation <= limit,
        format!(
            "p_hat={:.5} p0={:.5} |dev|={:.5} <= {:.5} + 3*{:.5}",
            r.hit.estimate.estimate, r.p0, r.hit.abs_deviation, r.hit.deviation_bound, se
        ),
    ))
}

fn ac3() -> Outcome {
    let r = Experiment::prepare(grid_config(FamilySpec::FullyRandom)?)?.run(Execution::Parallel)?;
    let dev = (r.occupancy.mean - r.mu0).abs();
    Ok((
        dev <= 4.0 * r.occupancy.mean_se,
        format!(
            "mean={:.3} mu0={:.3} |dev|={dev:.3} <= 4*{:.3}",
            r.occupancy.mean, r.mu0, r.occupancy.mean_se
        ),
    ))
}

fn ac4() -> Outcome {
    let r = 12u32;
    let size = 1u64 << r;
    let mut bad = Vec::new();
    for n in 1..=size {
        let p = RangeProjector::new(r, n)?;
        let mut count = vec![0u64; n as usize];
        for y in 0..size {
            count[p.project(y) as usize] += 1;
        }
        let (lo, hi) = (size / n, size.div_ceil(n));
        for (z, &k) in count.iter().enumerate() {
            if (k != lo && k != hi) || k != p.preimage_size(z as u64)? {
                bad.push((n, z, k));
            }
        }
    }
    Ok((
        bad.is_empty(),
        format!("{} violations over n in [1, 4096]", bad.len()),
    ))
}

fn ac5() -> Outcome {
    let schema = KeySchema::new(4, 8)?;
    let params = BloomParams::plan(1024, 10, BloomSizing::MinimalFpr, None, true)?;
    let keys = KeySetSpec::UniformRandom { m: 1024, seed: 5 }.generate(schema)?;
    let mut filter = BloomFilter::new(params, schema, 11)?;
    for &k in &keys {
        filter.insert(k)?;
    }
    let members: HashSet<u64> = keys.into_iter().collect();
    let rep = measure_fpr(&filter, &members, 10_000_000, 13, Execution::Parallel)?;
    let ok = (0.75..=1.33).contains(&rep.ratio) && params.n == 1477 && params.r == 22;
    Ok((
        ok,
        format!(
            "n={} r={} fpr={:.4e} p0^k={:.4e} ratio={:.4}",
            params.n, params.r, rep.estimate.estimate, rep.theoretical_fpr, rep.ratio
        ),
    ))
}

fn ac6() -> Outcome {
    let schema = KeySchema::new(4, 8)?;
    let params = BloomParams::plan(1024, 10, BloomSizing::MinimalFpr, None, true)?;
    let mut misses = 0u64;
    let mut checked = 0u64;
    for build in 0..100u64 {
        let keys = KeySetSpec::UniformRandom {
            m: 1024,
            seed: 1000 + build,
        }
        .generate(schema)?;
        let mut filter = BloomFilter::new(params, schema, build)?;
        for &k in &keys {
            filter.insert(k)?;
        }
        for &k in &keys {
            checked += 1;
            misses += u64::from(!filter.query(k)?);
        }
    }
    Ok((
        misses == 0,
        format!("{misses} false negatives over {checked} lookups in 100 builds"),
    ))
}

fn ac7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for i in 0..1000u64 {
        let c = rng.random_range(2..=4u32);
        let b = rng.random_range(2..=8u32);
        let universe = 1u64 << (c * b);
        let m = rng.random_range(1..=4096u64.min(universe - 1));
        let schema = KeySchema::new(c, b)?;
        let keys = KeySetSpec::UniformRandom { m, seed: i }.generate(schema)?;
        let present: HashSet<u64> = keys.iter().copied().collect();
        let q = loop {
            let q = rng.random_range(0..universe);
            if !present.contains(&q) {
                break q;
            }
        };
        for query in [None, Some(q)] {
            // errors (including a failed cap check) abort the criterion
            let o = compute_group_ordering(schema, &keys, query)?;
            worst = worst.max(o.max_group() as f64 / o.cap());
        }
    }
    Ok((
        worst <= 1.0,
        format!("largest group / cap = {worst:.3} over 2000 orderings"),
    ))
}

fn ac8() -> Outcome {
    let schema = KeySchema::new(2, 8)?;
    let keys = KeySetSpec::Grid { dims: vec![32, 32] }.generate(schema)?;
    let o = compute_group_ordering(schema, &keys, None)?;
    let r = collision_experiment(&o, 10, 1024, 10_000, 8, Execution::Parallel)?;
    let s = r.collisions;
    let mean_ok = s.mean <= r.mean_bound + 3.0 * s.mean_se;
    let var_ok = s.variance <= r.variance_bound + 4.0 * s.variance_se;
    Ok((
        mean_ok && var_ok,
        format!(
            "mean C={:.3} <= {:.3} + 3*{:.3}; var C={:.3} <= {:.3} + 4*{:.3}",
            s.mean, r.mean_bound, s.mean_se, s.variance, r.variance_bound, s.variance_se
        ),
    ))
}

fn ac9() -> Outcome {
    let schema = KeySchema::new(2, 10)?;
    let trials = 100_000u64;
    let n = 1024u64;

    let cube = |family| {
        OccupancyConfig::new(
            schema,
            KeySetSpec::Hypercube { l: 1, m: 1024 },
            10,
            n,
            trials,
            9,
        )
        .with_family(family)
    };
    let tab = Experiment::prepare(cube(FamilySpec::SimpleTabulation))?;
    let outcomes = tab.map_trials(Execution::Parallel, |t| {
        let h = t.family.as_tabulation().expect("tabulation");
        (t.occupancy(), h.entry(0, 0) == h.entry(0, 1))
    });
    let freq = outcomes.iter().filter(|o| o.1).count() as f64 / trials as f64;
    let p = 1.0 / n as f64;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    let freq_ok = (freq - p).abs() <= 4.0 * sigma;
    let tab_occ = Summary::of(outcomes.iter().map(|o| o.0 as f64));
    let fr = Experiment::prepare(cube(FamilySpec::FullyRandom))?;
    let fr_occ = Summary::of(fr.map_trials(Execution::Parallel, |t| t.occupancy() as f64));
    let var_sigma = tab_occ.variance_se.hypot(fr_occ.variance_se);
    let var_ok = tab_occ.variance - fr_occ.variance >= 5.0 * var_sigma;

    let pairs = Experiment::prepare(OccupancyConfig::new(
        schema,
        KeySetSpec::PairProduct { t: 64, m: 1024 },
        10,
        n,
        trials,
        10,
    ))?;
    let rows = 1024 / 64;
    let outcomes = pairs.map_trials(Execution::Parallel, |t| {
        let h = t.family.as_tabulation().expect("tabulation");
        let mut seen = HashSet::new();
        let collided = (0..rows).any(|a| !seen.insert(h.entry(0, a)));
        (t.occupancy() as f64, collided)
    });
    let all = Summary::of(outcomes.iter().map(|o| o.0));
    let cond = Summary::of(outcomes.iter().filter(|o| o.1).map(|o| o.0));
    let drop_sigma = cond.mean_se.hypot(all.mean_se);
    let drop_ok = all.mean - cond.mean >= 5.0 * drop_sigma;

    Ok((
        freq_ok && var_ok && drop_ok,
        format!(
            "Pr[h0(0)=h0(1)]={freq:.5} vs {p:.5} (4s={:.5}); var tab={:.1} vs random={:.1} (5s={:.1}); \
             pairs: mean={:.2}, given collision={:.2} over {} trials (5s={:.2})",
            4.0 * sigma,
            tab_occ.variance,
            fr_occ.variance,
            5.0 * var_sigma,
            all.mean,
            cond.mean,
            cond.count,
            5.0 * drop_sigma
        ),
    ))
}

fn ac10() -> Outcome {
    let cfg = CascadeConfig::new(KeySchema::new(4, 8)?, 1 << 16, 0.125, 0.5, 100, 10);
    let r = simulate_cascade(&cfg, Execution::Parallel)?;
    let plan_ok = r.plan.total_slots() <= cfg.n && (r.d as u64) <= r.depth_bound;
    let retries_ok = r
        .trials
        .iter()
        .all(|t| t.cuckoo_retries <= cfg.cuckoo.max_retries);
    let ok = plan_ok
        && r.overflow_within_limit >= 0.99
        && r.cuckoo_success >= 0.95
        && retries_ok
        && r.all_lookups_correct;
    Ok((
        ok,
        format!(
            "d={} <= {}, sum n_i={} <= {}; overflow <= 2en in {:.0}%; cuckoo ok in {:.0}% (max retries {}); lookups correct: {}",
            r.d,
            r.depth_bound,
            r.plan.total_slots(),
            cfg.n,
            100.0 * r.overflow_within_limit,
            100.0 * r.cuckoo_success,
            r.max_cuckoo_retries,
            r.all_lookups_correct
        ),
    ))
}

fn ac11() -> Outcome {
    let (n, m, c) = (1024u64, 1024u64, 2u32);
    let t = (2.0 * (m as f64).powf(2.0 - 1.0 / f64::from(c)) * 100f64.ln()).sqrt();
    let schema = KeySchema::new(2, 8)?;
    let mut upper_2t = 0.0;
    let mut upper_t = 0.0;
    let sets = 10u64;
    for s in 0..sets {
        let cfg = OccupancyConfig::new(
            schema,
            KeySetSpec::UniformRandom { m, seed: s },
            10,
            n,
            1000,
            100 + s,
        )
        .with_tail_grid(vec![t]);
        let r = Experiment::prepare(cfg)?.run(Execution::Parallel)?;
        upper_2t += r.tails[0].upper_2t_freq / sets as f64;
        upper_t += r.tails[0].upper_t_freq / sets as f64;
    }
    let mut monotone = true;
    for which in [
        TailBound::QuadUpper,
        TailBound::QuadLower,
        TailBound::SparseUpper,
        TailBound::SparseLower,
    ] {
        let mut prev = f64::INFINITY;
        for k in 0..=200 {
            let v = tail_bound(which, n, m, c, k as f64 * 10.0)?;
            monotone &= v <= prev;
            prev = v;
        }
    }
    Ok((
        upper_2t <= 0.05 && monotone,
        format!(
            "t={t:.1}: Pr[|h(X)| >= mu0+2t]={upper_2t:.4} <= 0.05 (and >= mu0+t: {upper_t:.4}); curves monotone: {monotone}"
        ),
    ))
}

fn ac12() -> Outcome {
    let run_all = |exec: Execution| -> Result<Vec<String>> {
        let occ = OccupancyConfig::new(
            KeySchema::new(2, 8)?,
            KeySetSpec::Grid { dims: vec![16, 16] },
            10,
            700,
            3000,
            12,
        );
        let occ = Experiment::prepare(occ)?.run(exec)?.to_json()?;
        let cascade = CascadeConfig::new(KeySchema::new(4, 8)?, 4096, 0.125, 0.5, 8, 12);
        let cascade = simulate_cascade(&cascade, exec)?.to_json()?;
        let schema = KeySchema::new(4, 8)?;
        let params = BloomParams::plan(256, 4, BloomSizing::MinimalFpr, None, true)?;
        let keys = KeySetSpec::UniformRandom { m: 256, seed: 1 }.generate(schema)?;
        let mut filter = BloomFilter::new(params, schema, 12)?;
        for &k in &keys {
            filter.insert(k)?;
        }
        let members: HashSet<u64> = keys.into_iter().collect();
        let fpr = serde_json::to_string(&measure_fpr(&filter, &members, 300_000, 12, exec)?)?;
        Ok(vec![occ, cascade, fpr])
    };
    let one = with_threads(1, || run_all(Execution::Parallel))?;
    let four = with_threads(4, || run_all(Execution::Parallel))?;
    let seq = run_all(Execution::Sequential)?;
    let ok = one == four && one == seq;
    Ok((
        ok,
        "occupancy, cascade and Bloom reports identical for 1 and 4 workers and sequential".into(),
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("exact four-key oracle", ac1),
        ("Monte Carlo hit probability", ac2),
        ("fully random baseline", ac3),
        ("most-uniform projector", ac4),
        ("Bloom false-positive rate", ac5),
        ("Bloom has no false negatives", ac6),
        ("group ordering caps", ac7),
        ("internal collision moments", ac8),
        ("adversarial key sets", ac9),
        ("filter cascade", ac10),
        ("tail sanity", ac11),
        ("determinism across workers", ac12),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match check() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!(
            "AC{:<2} {} {name} ({:.1}s): {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
