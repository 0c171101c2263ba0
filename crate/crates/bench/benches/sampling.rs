use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};

use martin_bench::walk;
use martin_core::sampler::{harmonic_measure_estimate, sample_path};

fn paths(c: &mut Criterion) {
    let f2 = walk("srw-free:2");
    let e = f2.group.identity();
    c.bench_function("sample_path/free_1000_steps", |b| b.iter(|| sample_path(&f2, &e, 1000, black_box(7))));

    let mut group = c.benchmark_group("harmonic_estimate");
    group.sample_size(10);
    for name in ["srw-free:2", "wreath-walk:2,0.7,0.3"] {
        let w = walk(name);
        group.throughput(Throughput::Elements(20_000));
        group.bench_function(name, |b| b.iter(|| harmonic_measure_estimate(&w, 3, 20_000, black_box(1)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, paths);
criterion_main!(benches);
