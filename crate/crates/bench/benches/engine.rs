use chartblender_bench::{active_chart, line_spec, sliding_desk, yearly_table};
use chartblender_core::camera_tracker::{estimate_relative_pose, OdometryConfig};
use chartblender_core::chart::build_chart;
use chartblender_core::compositor::composite_frame;
use chartblender_core::geometry::Intrinsics;
use chartblender_core::object_tracker::smooth_points;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use image::RgbImage;
use nalgebra::Point3;
use std::hint::black_box;

fn smoothing(c: &mut Criterion) {
    let mut group = c.benchmark_group("smooth_points");
    for n in [50usize, 200, 1000] {
        let points: Vec<Point3<f64>> = (0..n)
            .map(|i| {
                let t = i as f64;
                Point3::new(0.01 * t, (0.3 * t).sin() * 0.02, 2.0 + ((i * 7919) % 13) as f64 * 1e-3)
            })
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, p| b.iter(|| smooth_points(black_box(p), 10.0, 10.0)));
    }
    group.finish();
}

fn relative_pose(c: &mut Criterion) {
    let scene = sliding_desk(2);
    let frames = scene.rgbd_frames().expect("frames");
    let cfg = OdometryConfig::default();
    c.bench_function("estimate_relative_pose_320x240", |b| {
        b.iter(|| estimate_relative_pose(&frames[0], &frames[1], &scene.intrinsics, &cfg))
    });
}

fn composite(c: &mut Criterion) {
    let k = Intrinsics::default_for_size(640, 480).expect("intrinsics");
    let frame = RgbImage::from_pixel(640, 480, image::Rgb([90, 110, 130]));
    let charts = [active_chart()];
    c.bench_function("composite_frame_640x480", |b| b.iter(|| composite_frame(black_box(&frame), 0, &charts, &k)));
}

fn chart(c: &mut Criterion) {
    let spec = line_spec();
    let table = yearly_table(200);
    c.bench_function("build_chart_line_200", |b| b.iter(|| build_chart(&spec, black_box(&table), 2100.0)));
}

criterion_group!(benches, smoothing, relative_pose, composite, chart);
criterion_main!(benches);
