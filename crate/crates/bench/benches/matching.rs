use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use psearch_bench::{containers, full_table, probes, rng};
use psearch_core::matcher::{dot, match_to_containers, Association, Probe};
use psearch_core::scheduler::{derive_thresholds, select_backbone};
use psearch_core::types::ProfileSet;

const DIM: usize = 512;

fn dot_product(c: &mut Criterion) {
    let mut r = rng(1);
    let a = psearch_bench::unit(&mut r, DIM);
    let b = psearch_bench::unit(&mut r, DIM);
    c.bench_function("dot_512", |bench| bench.iter(|| dot(black_box(&a), black_box(&b))));
}

fn association(c: &mut Criterion) {
    let mut group = c.benchmark_group("association");
    for n in [10usize, 30, 60] {
        let mut r = rng(2);
        let cons = containers(&mut r, n, DIM);
        let recs = probes(&mut r, &cons, 0.05);
        let ps: Vec<Probe<'_>> =
            recs.iter().enumerate().map(|(i, p)| Probe { det_index: i as u32, feature: p.feature() }).collect();
        for method in [Association::Greedy, Association::Optimal] {
            group.bench_with_input(BenchmarkId::new(format!("{method:?}"), n), &n, |bench, _| {
                bench.iter(|| match_to_containers(black_box(&ps), black_box(&cons), 0.7, method))
            });
        }
    }
    group.finish();
}

fn gallery_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("gallery_30_probes");
    for ids in [0usize, 250, 500, 1000] {
        let mut r = rng(3);
        let table = full_table(&mut r, ids, DIM);
        let cons = containers(&mut r, 30, DIM);
        let recs = probes(&mut r, &cons, 0.05);
        group.bench_with_input(BenchmarkId::from_parameter(ids), &ids, |bench, _| {
            bench.iter(|| {
                for p in &recs {
                    black_box(table.match_feature(p.feature(), p.orientation(), 0.6).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn scheduler(c: &mut Criterion) {
    let profiles = ProfileSet::reference();
    let table = derive_thresholds(&profiles, 25.0).unwrap();
    c.bench_function("select_backbone", |bench| {
        bench.iter(|| (0..64u32).map(|n| select_backbone(black_box(n), &table) as u8 as u32).sum::<u32>())
    });
}

criterion_group!(benches, dot_product, association, gallery_scan, scheduler);
criterion_main!(benches);
