use std::sync::Arc;

use lasercover_core::coverage::{dose_map_with_mask, rasterize, score_plan};
use lasercover_core::geometry::Polygon;
use lasercover_core::operator_sim::{simulate_pass, OperatorModel, RngSeed};
use lasercover_core::planner::{
    plan_lattice, plan_trajectory, BoundaryPolicy, KinematicModel, LaserSpec, LatticePattern,
};
use lasercover_core::surface::{define_region, make_flat_patch, Region};
use lasercover_core::trial::stats::Summary;
use lasercover_core::trial::{prepare_trial, Arm, ArmModel, Side, TrialConfig};
use lasercover_core::Execution;

fn cheek() -> Region {
    define_region(
        Arc::new(make_flat_patch(76.0, 76.0).unwrap()),
        vec![Polygon::rect(0.0, 0.0, 76.0, 76.0)],
        vec![],
        0.0,
    )
    .unwrap()
}

#[test]
fn zero_noise_equals_lattice_then_trajectory() {
    let region = cheek();
    let laser = LaserSpec::default();
    for pattern in [LatticePattern::Hex, LatticePattern::Square] {
        let lattice = plan_lattice(&region, &laser, pattern, BoundaryPolicy::Inside).unwrap();
        let robot = plan_trajectory(&lattice.centers, &region, &laser, &KinematicModel::default(), 30.0).unwrap();
        let model = OperatorModel { rate_cv: 0.0, intent_pattern: pattern, ..OperatorModel::noiseless() };
        let human = simulate_pass(&region, &laser, &model, 30.0, RngSeed::new(11, 2)).unwrap();
        let a: Vec<_> = robot.shots.iter().map(|s| s.uv).collect();
        let b: Vec<_> = human.shots.iter().map(|s| s.uv).collect();
        assert_eq!(a, b, "{pattern:?}");
        assert!(human.shots.windows(2).all(|w| w[1].emit_time > w[0].emit_time));
    }
}

#[test]
fn skipping_never_raises_mean_coverage() {
    let region = cheek();
    let mask = rasterize(&region, 0.25).unwrap();
    let laser = LaserSpec::default();
    let coverage = |skip: f64| -> Vec<f64> {
        (0..120)
            .map(|s| {
                let m = OperatorModel { skip_prob: skip, ..OperatorModel::default() };
                let plan = simulate_pass(&region, &laser, &m, 30.0, RngSeed::new(3, s)).unwrap();
                score_plan(&mask, &plan, Execution::Sequential).unwrap().coverage_pct
            })
            .collect()
    };
    let mut prev = coverage(0.0);
    for skip in [0.1, 0.3, 0.6] {
        let next = coverage(skip);
        let d: Vec<f64> = next.iter().zip(&prev).map(|(n, p)| n - p).collect();
        let s = Summary::of(&d);
        // One-sided 95 %: reject "no increase" only if the mean rise is significant.
        assert!(s.mean - 1.645 * s.sem <= 0.0, "skip {skip}: mean change {:.3}", s.mean);
        prev = next;
    }
}

#[test]
fn calibrated_mean_is_seed_independent() {
    let cfg = TrialConfig {
        subjects: 1000,
        pixel_size: 0.4,
        right_arm: Arm::Human,
        left_arm: Arm::Human,
        ..TrialConfig::default()
    };
    let trial = prepare_trial(&cfg).unwrap();
    let model = ArmModel::Human(OperatorModel::default());
    let mean = |seed| {
        let v: Vec<f64> =
            trial.simulate_arm(&model, Side::Left, seed).unwrap().iter().map(|s| s.coverage_pct).collect();
        Summary::of(&v).mean
    };
    let (a, b) = (mean(1001), mean(2002));
    assert!((a - b).abs() < 1.0, "{a} vs {b}");
}

#[test]
fn human_passes_show_both_failure_modes() {
    let region = cheek();
    let mask = rasterize(&region, 0.25).unwrap();
    for s in 0..50 {
        let plan =
            simulate_pass(&region, &LaserSpec::default(), &OperatorModel::default(), 30.0, RngSeed::new(8, s)).unwrap();
        let dose = dose_map_with_mask(mask.clone(), &plan, Execution::Sequential).unwrap();
        let rep = score_plan(&mask, &plan, Execution::Sequential).unwrap();
        assert!(dose.overdose_area > 0.0, "seed {s}");
        assert!(rep.uncovered > 0.0, "seed {s}");
    }
}

#[test]
fn human_duration_matches_rate() {
    let cfg = TrialConfig {
        subjects: 100,
        pixel_size: 0.5,
        right_arm: Arm::Human,
        left_arm: Arm::Human,
        ..TrialConfig::default()
    };
    let r = prepare_trial(&cfg).unwrap().run().unwrap();
    let d = r.left.duration.mean;
    assert!((d - 78.6).abs() <= 0.10 * 78.6, "mean human duration {d}");
}
