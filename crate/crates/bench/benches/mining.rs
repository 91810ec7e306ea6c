use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use modrule_bench::synthetic_log;
use modrule_core::scorer::PreparedLog;
use modrule_core::search::{generate_conditions, moody, SearchConfig};
use modrule_core::{CodecConfig, Model};

fn mine(c: &mut Criterion) {
    let mut group = c.benchmark_group("mine");
    group.sample_size(10);
    for events in [250, 500, 1000, 1500] {
        let log = synthetic_log(events);
        group.throughput(Throughput::Elements(log.event_count() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(events), &log, |b, log| {
            b.iter(|| moody(log, &SearchConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn score(c: &mut Criterion) {
    let log = synthetic_log(2000);
    let model = moody(&log, &SearchConfig::default()).unwrap().model;
    let prepared = PreparedLog::new(&log, &CodecConfig::default());
    c.bench_function("score/prepared", |b| b.iter(|| prepared.score(&model).unwrap()));
    c.bench_function("score/empty", |b| b.iter(|| prepared.score(&Model::default()).unwrap()));
}

fn conditions(c: &mut Criterion) {
    let log = synthetic_log(2000);
    c.bench_function("generate_conditions/50", |b| {
        b.iter(|| generate_conditions(&log, 50, &CodecConfig::default()))
    });
}

criterion_group!(benches, mine, score, conditions);
criterion_main!(benches);
