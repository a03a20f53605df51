use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tabhash::filter::{simulate_cascade, CascadeConfig};
use tabhash::{Execution, Experiment, FamilySpec, KeySchema, KeySetSpec, OccupancyConfig};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn occupancy(c: &mut Criterion) {
    let mut group = c.benchmark_group("occupancy");
    group.sample_size(10);
    for family in [FamilySpec::SimpleTabulation, FamilySpec::FullyRandom] {
        let config = OccupancyConfig::new(
            KeySchema::new(2, 8).unwrap(),
            KeySetSpec::Grid { dims: vec![32, 32] },
            10,
            1024,
            2000,
            1,
        )
        .with_family(family);
        let exp = Experiment::prepare(config).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(family.name(), name), &exec, |b, &exec| {
                b.iter(|| exp.run(exec).unwrap())
            });
        }
    }
    group.finish();
}

fn cascade(c: &mut Criterion) {
    let mut group = c.benchmark_group("filter-cascade");
    group.sample_size(10);
    let config = CascadeConfig::new(KeySchema::new(4, 8).unwrap(), 1 << 14, 0.125, 0.5, 16, 1);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| simulate_cascade(&config, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, occupancy, cascade);
criterion_main!(benches);
