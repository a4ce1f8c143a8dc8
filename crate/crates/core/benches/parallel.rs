use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use lasercover_core::coverage::{rasterize_with, stamp_hits};
use lasercover_core::geometry::Polygon;
use lasercover_core::operator_sim::{simulate_pass, OperatorModel, RngSeed};
use lasercover_core::planner::LaserSpec;
use lasercover_core::surface::{define_region, make_flat_patch, ExclusionZone, LandmarkLabel};
use lasercover_core::trial::{prepare_trial, TrialConfig};
use lasercover_core::Execution;

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn raster(c: &mut Criterion) {
    let region = define_region(
        Arc::new(make_flat_patch(76.0, 76.0).unwrap()),
        vec![Polygon::rect(0.0, 0.0, 76.0, 76.0)],
        vec![ExclusionZone::new(Polygon::rect(18.0, 60.0, 40.0, 12.0), LandmarkLabel::Eyes)],
        5.0,
    )
    .unwrap();
    let mut g = c.benchmark_group("rasterize_76mm_0.05");
    for exec in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| rasterize_with(black_box(&region), 0.05, exec).unwrap())
        });
    }
    g.finish();

    let mask = rasterize_with(&region, 0.05, Execution::Sequential).unwrap();
    let plan =
        simulate_pass(&region, &LaserSpec::default(), &OperatorModel::default(), 30.0, RngSeed::new(1, 0)).unwrap();
    let centers: Vec<_> = plan.shots.iter().map(|s| s.uv).collect();
    let mut g = c.benchmark_group("stamp_hits_76mm_0.05");
    for exec in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| stamp_hits(black_box(&mask), black_box(&centers), 3.0, exec))
        });
    }
    g.finish();
}

fn trial(c: &mut Criterion) {
    let mut g = c.benchmark_group("trial_17_subjects_0.2");
    g.sample_size(10);
    for exec in MODES {
        let prepared =
            prepare_trial(&TrialConfig { pixel_size: 0.2, execution: exec, ..TrialConfig::default() }).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &prepared, |b, p| {
            b.iter(|| p.run().unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, raster, trial);
criterion_main!(benches);
