use std::collections::HashMap;

use tabhash::diagnostics::{
    check_d_bounded, collision_experiment, compute_group_ordering, count_internal_collisions,
    find_dependent_tuples, GroupOrdering,
};
use tabhash::{
    Execution, KeySchema, KeySetSpec, PositionCharacter, RangeProjector, SimpleTabulation,
};

fn grid(schema: KeySchema, a: u64, b: u64) -> Vec<u64> {
    KeySetSpec::Grid { dims: vec![a, b] }
        .generate(schema)
        .unwrap()
}

/// Ordered 4-tuples over `keys` with every position character an even number of times.
fn brute_force_dependent(schema: KeySchema, keys: &[u64]) -> u64 {
    let mut count = 0;
    for &a in keys {
        for &b in keys {
            for &c in keys {
                for &d in keys {
                    let mut seen: HashMap<(u32, u64), u32> = HashMap::new();
                    for x in [a, b, c, d] {
                        for i in 0..schema.chars() {
                            *seen.entry((i, schema.character(x, i))).or_default() += 1;
                        }
                    }
                    count += u64::from(seen.values().all(|v| v % 2 == 0));
                }
            }
        }
    }
    count
}

#[test]
fn dependent_tuple_counts_match_brute_force() {
    let s = KeySchema::new(2, 4).unwrap();
    for (a, b) in [(2, 2), (3, 3), (2, 5), (4, 4)] {
        let keys = grid(s, a, b);
        let r = find_dependent_tuples(s, &vec![keys.clone(); 4]).unwrap();
        assert_eq!(r.ordered_count, brute_force_dependent(s, &keys), "{a}x{b}");
        assert!(r.ordered_count as f64 <= r.bound.unwrap());
    }
    let s3 = KeySchema::new(3, 2).unwrap();
    let keys = KeySetSpec::Grid {
        dims: vec![2, 2, 3],
    }
    .generate(s3)
    .unwrap();
    let r = find_dependent_tuples(s3, &vec![keys.clone(); 4]).unwrap();
    assert_eq!(r.ordered_count, brute_force_dependent(s3, &keys));
}

#[test]
fn dependent_tuples_hash_to_zero() {
    let s = KeySchema::new(2, 4).unwrap();
    let keys = grid(s, 3, 4);
    let r = find_dependent_tuples(s, &vec![keys; 4]).unwrap();
    assert!(!r.nontrivial.is_empty());
    for seed in 0..50 {
        let h = SimpleTabulation::new(s, 16, seed).unwrap();
        for t in &r.nontrivial {
            let x = t.iter().fold(0, |acc, &k| acc ^ h.hash(k).unwrap());
            assert_eq!(x, 0);
        }
    }
}

#[test]
fn distinct_sets_per_slot() {
    let s = KeySchema::new(2, 4).unwrap();
    let sets = vec![
        vec![s.compose(&[0, 0]).unwrap()],
        vec![s.compose(&[0, 1]).unwrap()],
        vec![s.compose(&[1, 0]).unwrap()],
        vec![s.compose(&[1, 1]).unwrap(), s.compose(&[2, 2]).unwrap()],
    ];
    let r = find_dependent_tuples(s, &sets).unwrap();
    assert_eq!(r.ordered_count, 1);
    assert_eq!(r.nontrivial.len(), 1);
}

#[test]
fn ordering_partitions_keys() {
    let s = KeySchema::new(3, 4).unwrap();
    let keys = KeySetSpec::UniformRandom { m: 500, seed: 3 }
        .generate(s)
        .unwrap();
    let o = compute_group_ordering(s, &keys, None).unwrap();
    let mut all: Vec<usize> = o.groups.iter().flatten().copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..500).collect::<Vec<_>>());
    // every position character of X appears exactly once
    let mut pcs: Vec<PositionCharacter> = keys.iter().flat_map(|&k| s.position_chars(k)).collect();
    pcs.sort_unstable();
    pcs.dedup();
    let mut order = o.order.clone();
    order.sort_unstable();
    assert_eq!(order, pcs);
    assert!(o.sum_of_squares() as f64 <= o.cap() * 500.0);
    // the definition recomputed from the order gives the same groups
    let again = GroupOrdering::from_order(s, &keys, None, o.order.clone()).unwrap();
    assert_eq!(again.groups, o.groups);
}

#[test]
fn collisions_against_direct_count() {
    let s = KeySchema::new(2, 8).unwrap();
    let keys = grid(s, 16, 16);
    let o = compute_group_ordering(s, &keys, None).unwrap();
    let h = SimpleTabulation::new(s, 8, 99).unwrap();
    let p = RangeProjector::new(8, 200).unwrap();
    let got = count_internal_collisions(&o, &h, &p);
    let mut direct = 0;
    for g in &o.groups {
        for (i, &a) in g.iter().enumerate() {
            for &b in &g[i + 1..] {
                let (x, y) = (keys[a], keys[b]);
                direct += u64::from(p.project(h.hash(x).unwrap()) == p.project(h.hash(y).unwrap()));
            }
        }
    }
    assert_eq!(got.total, direct);
    for (ci, g) in got.per_group.iter().zip(&o.groups) {
        let size = g.len() as u64;
        assert!(*ci <= size * size.saturating_sub(1) / 2);
    }
    let max = o.max_group();
    assert!(check_d_bounded(&o, &h, &p, max).is_none());
}

#[test]
fn collision_experiment_is_deterministic() {
    let s = KeySchema::new(2, 8).unwrap();
    let o = compute_group_ordering(s, &grid(s, 8, 8), None).unwrap();
    let a = collision_experiment(&o, 6, 64, 200, 5, Execution::Parallel).unwrap();
    let b = collision_experiment(&o, 6, 64, 200, 5, Execution::Sequential).unwrap();
    assert_eq!(a, b);
}
