use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cpla_bench::{detection_run, link_scores, random_boxes};
use cpla_core::geometry::nms;
use cpla_core::linking::viterbi_link;
use cpla_core::synthdata::cascade_trial;
use cpla_core::trimming::trim_tube;
use cpla_core::{LinkingParams, PenaltyMode};

fn bench_nms(c: &mut Criterion) {
    let mut g = c.benchmark_group("nms");
    for n in [300, 1000, 3000] {
        let dets = random_boxes(n, 600.0, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &dets, |b, d| b.iter(|| nms(black_box(d), 0.7)));
    }
    g.finish();
}

fn bench_viterbi(c: &mut Criterion) {
    let mut g = c.benchmark_group("viterbi");
    let params = LinkingParams::default();
    for (frames, per_frame) in [(100, 10), (300, 10), (100, 40)] {
        let run = detection_run(frames, per_frame, 2);
        g.bench_with_input(BenchmarkId::new(format!("{per_frame}_per_frame"), frames), &run, |b, r| {
            b.iter(|| viterbi_link(black_box(r), &params).unwrap())
        });
    }
    g.finish();
}

fn bench_trim(c: &mut Criterion) {
    let mut g = c.benchmark_group("trim");
    for n in [50, 200, 800] {
        let links = link_scores(n, 3);
        g.bench_with_input(BenchmarkId::from_parameter(n), &links, |b, l| {
            b.iter(|| trim_tube(black_box(l), n as f64 / 3.0, PenaltyMode::Absolute).unwrap())
        });
    }
    g.finish();
}

fn bench_cascade(c: &mut Criterion) {
    c.bench_function("cascade_trial_1_image", |b| b.iter(|| cascade_trial(1, black_box(10), 4).unwrap()));
}

criterion_group!(benches, bench_nms, bench_viterbi, bench_trim, bench_cascade);
criterion_main!(benches);
