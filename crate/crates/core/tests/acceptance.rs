//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if
//! any criterion fails.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lasercover_core::coverage::{rasterize, score_plan};
use lasercover_core::geometry::{Polygon, Vec2, Vec3};
use lasercover_core::operator_sim::{apply_execution_noise, simulate_pass, OperatorModel, RngSeed, RobotExecution};
use lasercover_core::planner::{
    plan_lattice, plan_trajectory, validate_plan, BoundaryPolicy, KinematicModel, LaserSpec, LatticePattern,
    PlanSource, Shot, TreatmentPlan,
};
use lasercover_core::surface::{
    define_region, make_cheek_phantom, make_flat_patch, ExclusionZone, LandmarkLabel, Region,
};
use lasercover_core::trial::stats::paired_t_test;
use lasercover_core::trial::{prepare_trial, run_trial, Arm, TrialConfig};
use lasercover_core::Execution;

/// Union coverage (%) of the default hex plan on a 76 × 76 flat patch at 0.05 mm,
/// from a brute-force pixel count (1 900 608 of 1520² pixels).
const GOLDEN_HEX_76_COVERAGE: f64 = 82.263_157_894_736_85;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn flat_region(w: f64, h: f64, exclusions: Vec<ExclusionZone>, margin: f64) -> Region {
    define_region(Arc::new(make_flat_patch(w, h).unwrap()), vec![Polygon::rect(0.0, 0.0, w, h)], exclusions, margin)
        .unwrap()
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn single_shot_plan(c: Vec2) -> TreatmentPlan {
    TreatmentPlan {
        shots: vec![Shot { center: Vec3::new(c.x, c.y, 0.0), normal: Vec3::new(0.0, 0.0, 1.0), uv: c, emit_time: 0.0 }],
        standoff: 30.0,
        source: PlanSource::Robot,
        duration: 0.0,
        laser: LaserSpec::default(),
        suppressed: 0,
    }
}

fn raster_single_shot() -> Outcome {
    let t0 = Instant::now();
    let region = flat_region(40.0, 50.0, vec![], 0.0);
    let mask = rasterize(&region, 0.05).unwrap();
    let rep = score_plan(&mask, &single_shot_plan(Vec2::new(20.0, 25.0)), Execution::default()).unwrap();
    let elapsed = t0.elapsed();
    let exact = PI * 9.0;
    let err = (rep.phi_union - exact).abs() / exact;
    Outcome {
        name: "raster oracle accuracy",
        pass: err <= 0.005 && elapsed < Duration::from_secs(1),
        detail: format!(
            "phi_union {:.4} mm² vs π·9 = {exact:.4} (err {:.3}%), {}",
            rep.phi_union,
            err * 100.0,
            secs(elapsed)
        ),
    }
}

/// Fraction of in-patch pixel centers within `r` of any center, checked pairwise.
fn brute_force_coverage(w: f64, h: f64, px: f64, centers: &[Vec2], r: f64) -> f64 {
    let (nx, ny) = ((w / px).round() as usize, (h / px).round() as usize);
    let mut hit = 0usize;
    for j in 0..ny {
        let y = (j as f64 + 0.5) * px;
        for i in 0..nx {
            let x = (i as f64 + 0.5) * px;
            if centers.iter().any(|c| (c.x - x).powi(2) + (c.y - y).powi(2) <= r * r) {
                hit += 1;
            }
        }
    }
    hit as f64 / (nx * ny) as f64 * 100.0
}

fn packing_bound() -> Outcome {
    let t0 = Instant::now();
    let region = flat_region(76.0, 76.0, vec![], 0.0);
    let laser = LaserSpec::default();
    let lattice = plan_lattice(&region, &laser, LatticePattern::Hex, BoundaryPolicy::Inside).unwrap();
    let plan = plan_trajectory(&lattice.centers, &region, &laser, &KinematicModel::default(), 30.0).unwrap();
    let report = validate_plan(&plan, &region);
    let mask = rasterize(&region, 0.05).unwrap();
    let cov = score_plan(&mask, &plan, Execution::default()).unwrap().coverage_pct;
    let elapsed = t0.elapsed();
    let oracle = brute_force_coverage(76.0, 76.0, 0.05, &lattice.centers, laser.radius());
    let bound = PI / (2.0 * 3f64.sqrt()) * 100.0 + 0.5;
    let pass = report.is_conformant()
        && (75.0..=bound).contains(&cov)
        && (cov - GOLDEN_HEX_76_COVERAGE).abs() < 1e-9
        && (oracle - GOLDEN_HEX_76_COVERAGE).abs() < 1e-9
        && elapsed < Duration::from_secs(5);
    Outcome {
        name: "packing bound",
        pass,
        detail: format!(
            "{} spots, {} violations, coverage {cov:.4}% (golden {GOLDEN_HEX_76_COVERAGE:.4}%, oracle {oracle:?}%, bound {bound:.2}%), {}",
            plan.shots.len(),
            report.violations.len(),
            secs(elapsed)
        ),
    }
}

/// Area of the disc of radius `r` at `c` inside [0, w] × [0, h], by Simpson's rule in
/// the angle substitution x = cx + r·sin θ.
fn clipped_disc_area(c: Vec2, r: f64, w: f64, h: f64) -> f64 {
    let n = 20_000;
    let f = |theta: f64| {
        let x = c.x + r * theta.sin();
        if !(0.0..=w).contains(&x) {
            return 0.0;
        }
        let half = r * theta.cos();
        let span = ((c.y + half).min(h) - (c.y - half).max(0.0)).max(0.0);
        span * r * theta.cos()
    };
    let (a, b) = (-PI / 2.0, PI / 2.0);
    let step = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for k in 1..n {
        sum += f(a + k as f64 * step) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * step / 3.0
}

fn additivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let laser = LaserSpec::default();
    let r = laser.radius();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for k in 0..100 {
        let (w, h) = (rng.random_range(20.0..80.0), rng.random_range(20.0..80.0));
        let conformant = k % 2 == 0;
        let inset = if conformant { r } else { 0.0 };
        let want = rng.random_range(1..60);
        let mut centers: Vec<Vec2> = Vec::new();
        for _ in 0..4000 {
            if centers.len() == want {
                break;
            }
            let p = Vec2::new(rng.random_range(inset..w - inset), rng.random_range(inset..h - inset));
            if centers.iter().all(|q| q.distance(p) >= laser.spot_diameter) {
                centers.push(p);
            }
        }
        let region = flat_region(w, h, vec![], 0.0);
        let plan = plan_trajectory(&centers, &region, &laser, &KinematicModel::default(), 30.0).unwrap();
        if conformant && !validate_plan(&plan, &region).is_conformant() {
            failures += 1;
            continue;
        }
        let mask = rasterize(&region, 0.05).unwrap();
        let phi = score_plan(&mask, &plan, Execution::default()).unwrap().phi_union;
        let analytic: f64 = centers.iter().map(|&c| clipped_disc_area(c, r, w, h)).sum();
        let err = (phi - analytic).abs() / analytic;
        worst = worst.max(err);
        if err > 0.005 {
            failures += 1;
        }
    }
    Outcome {
        name: "non-overlap additivity",
        pass: failures == 0,
        detail: format!("100 plans, {failures} outside 0.5%, worst error {:.3}%", worst * 100.0),
    }
}

fn t_test_golden() -> Outcome {
    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [2.0, 2.0, 4.0, 5.0];
    let r = paired_t_test(&a, &b).unwrap();
    let shift = |xs: &[f64], s: f64| xs.iter().map(|x| x + s).collect::<Vec<_>>();
    let shifted = paired_t_test(&shift(&a, 17.0), &shift(&b, 17.0)).unwrap();
    let swapped = paired_t_test(&b, &a).unwrap();
    let pass = r.t == -3.0
        && (r.p_value - 0.0577).abs() <= 0.0005
        && shifted.t == r.t
        && shifted.p_value == r.p_value
        && swapped.t == -r.t
        && swapped.p_value == r.p_value;
    Outcome {
        name: "paired t-test golden values",
        pass,
        detail: format!(
            "t = {}, p = {:.6}; shifted t = {}, swapped t = {}, swapped p = {:.6}",
            r.t, r.p_value, shifted.t, swapped.t, swapped.p_value
        ),
    }
}

fn reproduction() -> Vec<Outcome> {
    let t0 = Instant::now();
    let cfg = TrialConfig::default();
    let single = run_trial(&cfg).unwrap();
    let single_time = t0.elapsed();
    let (rm, hm) = (single.right.coverage_pct.mean, single.left.coverage_pct.mean);
    let means = Outcome {
        name: "reproduction: coverage means",
        pass: (rm - 60.2).abs() <= 5.0 && (hm - 43.6).abs() <= 5.0,
        detail: format!(
            "seed {}: robot {rm:.2} ± {:.2}% (target 60.2 ± 5), human {hm:.2} ± {:.2}% (target 43.6 ± 5)",
            cfg.seed, single.right.coverage_pct.sd, single.left.coverage_pct.sd
        ),
    };

    let t1 = Instant::now();
    let prepared = prepare_trial(&cfg).unwrap();
    let (mut cov, mut dur, mut shots, mut joint) = (0, 0, 0, 0);
    for seed in 1..=100u64 {
        let r = prepared.run_with_seed(seed).unwrap();
        let c = r.tests.coverage_pct.p_value < 0.01;
        let d = r.tests.duration.p_value < 0.05;
        let s = r.tests.shots.p_value > 0.05;
        cov += c as usize;
        dur += d as usize;
        shots += s as usize;
        joint += (c && d && s) as usize;
    }
    let sweep_time = t1.elapsed();
    let pattern = Outcome {
        name: "reproduction: significance pattern",
        pass: cov >= 90 && dur >= 90 && shots >= 90,
        detail: format!(
            "of 100 seeds: coverage p<0.01 in {cov}, duration p<0.05 in {dur}, shots p>0.05 in {shots}; all three jointly in {joint}"
        ),
    };
    let runtime = Outcome {
        name: "reproduction: runtime at 0.1 mm",
        pass: single_time < Duration::from_secs(120) && sweep_time < Duration::from_secs(120),
        detail: format!("single trial {}, 100-seed sweep {}", secs(single_time), secs(sweep_time)),
    };
    vec![means, pattern, runtime]
}

fn durations() -> Outcome {
    let cfg = TrialConfig { subjects: 100, pixel_size: 0.5, ..TrialConfig::default() };
    let r = run_trial(&cfg).unwrap();
    let (rd, hd) = (r.right.duration.mean, r.left.duration.mean);
    Outcome {
        name: "duration model",
        pass: (rd - 107.4).abs() <= 0.10 * 107.4 && (hd - 78.6).abs() <= 0.15 * 78.6,
        detail: format!("100 subjects: robot {rd:.2} s (107.4 ± 10%), human {hd:.2} s (78.6 ± 15%)"),
    }
}

fn determinism() -> Outcome {
    let cfg = TrialConfig { subjects: 17, pixel_size: 0.2, seed: 99, ..TrialConfig::default() };
    let a = run_trial(&cfg).unwrap();
    let b = run_trial(&cfg).unwrap();
    let seq = run_trial(&TrialConfig { execution: Execution::Sequential, ..cfg.clone() }).unwrap();
    let pass = a.to_json() == b.to_json() && a.to_csv() == b.to_csv() && a.to_json() == seq.to_json();
    Outcome {
        name: "determinism",
        pass,
        detail: format!(
            "JSON {} bytes, CSV {} bytes; repeat and sequential runs byte-identical: {pass}",
            a.to_json().len(),
            a.to_csv().len()
        ),
    }
}

fn type_one() -> Outcome {
    let t0 = Instant::now();
    let cfg = TrialConfig { pixel_size: 0.2, right_arm: Arm::Human, left_arm: Arm::Human, ..TrialConfig::default() };
    let prepared = prepare_trial(&cfg).unwrap();
    let reps = 1000;
    let rejections = (1..=reps as u64)
        .filter(|&seed| prepared.run_with_seed(seed).unwrap().tests.coverage_pct.p_value < 0.05)
        .count();
    let elapsed = t0.elapsed();
    let rate = rejections as f64 / reps as f64 * 100.0;
    Outcome {
        name: "type-I calibration",
        pass: (rate - 5.0).abs() <= 2.0 && elapsed < Duration::from_secs(600),
        detail: format!("{rejections}/{reps} rejections = {rate:.1}% (5 ± 2%), {}", secs(elapsed)),
    }
}

/// Euclidean distance from `p` to the axis-aligned rectangle.
fn rect_distance(p: Vec2, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let dx = (x0 - p.x).max(0.0).max(p.x - x1);
    let dy = (y0 - p.y).max(0.0).max(p.y - y1);
    dx.hypot(dy)
}

fn landmark_safety() -> Outcome {
    let rects = [(18.0, 48.0, 58.0, 60.0), (28.0, 8.0, 48.0, 16.0)];
    let exclusions = vec![
        ExclusionZone::new(Polygon::rect(18.0, 48.0, 40.0, 12.0), LandmarkLabel::Eyes),
        ExclusionZone::new(Polygon::rect(28.0, 8.0, 20.0, 8.0), LandmarkLabel::Lips),
    ];
    let laser = LaserSpec::default();
    let margin = laser.radius() + 2.0;
    let surface = Arc::new(make_cheek_phantom(76.0, 76.0, 60.0).unwrap());
    let region = define_region(surface, vec![Polygon::rect(0.0, 0.0, 76.0, 76.0)], exclusions, margin).unwrap();
    let lattice = plan_lattice(&region, &laser, LatticePattern::Hex, BoundaryPolicy::Inside).unwrap();
    let base = plan_trajectory(&lattice.centers, &region, &laser, &KinematicModel::default(), 30.0).unwrap();
    let touches =
        |c: Vec2| rects.iter().any(|&(x0, y0, x1, y1)| rect_distance(c, x0, y0, x1, y1) < margin + laser.radius());

    let (mut robot_hits, mut robot_suppressed) = (0usize, 0usize);
    let (mut human_hits, mut human_reported, mut human_shots_ok) = (0usize, 0usize, true);
    for seed in 0..1000u64 {
        let robot = apply_execution_noise(&base, &region, &RobotExecution::default(), RngSeed::new(seed, 0)).unwrap();
        robot_hits += robot.shots.iter().filter(|s| touches(s.uv)).count();
        robot_suppressed += robot.suppressed;
        let human = simulate_pass(&region, &laser, &OperatorModel::default(), 30.0, RngSeed::new(seed, 1)).unwrap();
        let hits = human.shots.iter().filter(|s| touches(s.uv)).count();
        let report = validate_plan(&human, &region);
        human_hits += hits;
        human_reported += report.counts.exclusion_clearance;
        human_shots_ok &= report.counts.exclusion_clearance == hits;
    }
    Outcome {
        name: "landmark safety",
        pass: robot_hits == 0 && human_shots_ok && human_hits > 0,
        detail: format!(
            "1000 robot plans: {robot_hits} footprints in dilated exclusions ({robot_suppressed} interlocked); \
             1000 human plans: {human_hits} intersecting shots, {human_reported} reported"
        ),
    }
}

fn main() {
    let mut outcomes = vec![raster_single_shot(), packing_bound(), additivity(), t_test_golden()];
    outcomes.extend(reproduction());
    outcomes.push(durations());
    outcomes.push(determinism());
    outcomes.push(type_one());
    outcomes.push(landmark_safety());

    let mut failed = 0;
    for o in &outcomes {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += !o.pass as usize;
    }
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
