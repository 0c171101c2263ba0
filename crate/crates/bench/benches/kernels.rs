use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use martin_bench::{free_pair, walk, WALKS};
use martin_core::boundary::{extend_kernel, spine_candidates, spine_scan};
use martin_core::kernel::KernelOptions;
use martin_core::KernelTable;

fn table_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("table_build");
    group.sample_size(10);
    for name in WALKS {
        let w = walk(name);
        let (radius, opts) = KernelOptions::for_group(&w.group.kind);
        group.bench_with_input(BenchmarkId::from_parameter(name), &w, |b, w| {
            b.iter(|| KernelTable::build(black_box(w), radius, &opts).unwrap())
        });
    }
    group.finish();
}

fn kernel_limits(c: &mut Criterion) {
    let f2 = KernelTable::build_default(&walk("srw-free:2")).unwrap();
    let (g, xi) = free_pair("abAB", "abababababab");
    c.bench_function("extend_kernel/tree", |b| b.iter(|| extend_kernel(&f2, black_box(&g), &xi).unwrap()));

    let lamp = KernelTable::build_default(&walk("wreath-walk:2,0.7,0.3")).unwrap();
    let kind = &lamp.walk.group.kind;
    let ray = spine_candidates(kind, 2).into_iter().next().unwrap();
    let g = kind.default_generators().into_iter().last().unwrap();
    c.bench_function("extend_kernel/lamplighter_ray", |b| {
        b.iter(|| extend_kernel(&lamp, black_box(&g), &ray).unwrap())
    });

    let z = KernelTable::build_default(&walk("drift-z:0.7")).unwrap();
    let up = spine_candidates(&z.walk.group.kind, 6).into_iter().next().unwrap();
    c.bench_function("spine_scan/drift_z_r6", |b| b.iter(|| spine_scan(&z, black_box(&up), 6, 1e-3).unwrap()));
}

criterion_group!(benches, table_build, kernel_limits);
criterion_main!(benches);
