use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use retro_bench::fixture;
use retro_core::fixtures::Domain;
use retro_core::{render_grid, step, tokenize_frame};

fn interpreter(c: &mut Criterion) {
    for domain in [Domain::Chase, Domain::Scroll] {
        let f = fixture(domain);
        let frames: Vec<_> = f.trace.episodes().iter().flatten().cloned().collect();
        c.bench_function(&format!("step/{}/{}-frames", domain.name(), frames.len()), |b| {
            b.iter(|| {
                for g in &frames {
                    black_box(step(black_box(g), &f.reference).unwrap());
                }
            })
        });
    }

    let f = fixture(Domain::Chase);
    let atlas = f.atlas(8).unwrap();
    let grid = &f.trace.episodes()[0][0];
    let img = render_grid(grid, &atlas).unwrap();
    c.bench_function("render/chase-8x8", |b| b.iter(|| render_grid(black_box(grid), &atlas).unwrap()));
    c.bench_function("tokenize/chase-8x8", |b| b.iter(|| tokenize_frame(black_box(&img), &atlas).unwrap()));
}

criterion_group!(benches, interpreter);
criterion_main!(benches);
