use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use pc_bench::{filter_input, row_at_a_time_filter, vectorized_filter};

fn filter(c: &mut Criterion) {
    let values = filter_input(1 << 20, 1);
    let mut g = c.benchmark_group("filter");
    g.throughput(Throughput::Elements(values.len() as u64));
    for chunk in [64, 1024, 16384] {
        g.bench_with_input(
            BenchmarkId::new("vectorized", chunk),
            &chunk,
            |b, &chunk| b.iter(|| vectorized_filter(black_box(&values), 500, chunk).unwrap()),
        );
    }
    g.bench_function("row_at_a_time", |b| {
        b.iter(|| row_at_a_time_filter(black_box(&values), 500))
    });
    g.finish();
}

criterion_group!(benches, filter);
criterion_main!(benches);
