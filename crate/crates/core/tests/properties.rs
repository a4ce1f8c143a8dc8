use std::sync::Arc;

use proptest::prelude::*;

use lasercover_core::coverage::{rasterize, score_plan};
use lasercover_core::geometry::{Polygon, Vec2, Vec3};
use lasercover_core::planner::{LaserSpec, PlanSource, Shot, TreatmentPlan};
use lasercover_core::surface::{define_region, make_flat_patch, Region, SurfaceModel};
use lasercover_core::trial::stats::paired_t_test;
use lasercover_core::Execution;

fn big_patch() -> Arc<SurfaceModel> {
    Arc::new(make_flat_patch(200.0, 200.0).unwrap())
}

fn rect_region(surface: &Arc<SurfaceModel>, x0: f64, y0: f64, w: f64, h: f64) -> Region {
    define_region(surface.clone(), vec![Polygon::rect(x0, y0, w, h)], vec![], 0.0).unwrap()
}

fn plan(centers: &[Vec2]) -> TreatmentPlan {
    TreatmentPlan {
        shots: centers
            .iter()
            .enumerate()
            .map(|(i, &c)| Shot {
                center: Vec3::new(c.x, c.y, 0.0),
                normal: Vec3::new(0.0, 0.0, 1.0),
                uv: c,
                emit_time: i as f64,
            })
            .collect(),
        standoff: 30.0,
        source: PlanSource::Human,
        duration: centers.len() as f64,
        laser: LaserSpec::default(),
        suppressed: 0,
    }
}

/// Centers on a 1/8 mm grid inside a 40 × 40 window.
fn dyadic_centers() -> impl Strategy<Value = Vec<Vec2>> {
    prop::collection::vec((0u32..320, 0u32..320), 1..25)
        .prop_map(|v| v.into_iter().map(|(i, j)| Vec2::new(i as f64 / 8.0, j as f64 / 8.0)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn t_test_is_shift_and_swap_invariant(
        pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..30),
        shift in -64i32..64,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = paired_t_test(&a, &b).unwrap();
        let s = shift as f64;
        let sa: Vec<f64> = a.iter().map(|x| x + s).collect();
        let sb: Vec<f64> = b.iter().map(|x| x + s).collect();
        let shifted = paired_t_test(&sa, &sb).unwrap();
        let swapped = paired_t_test(&b, &a).unwrap();
        prop_assert!((shifted.t - r.t).abs() <= 1e-9 * r.t.abs().max(1.0));
        prop_assert!((shifted.p_value - r.p_value).abs() <= 1e-9);
        prop_assert_eq!(swapped.t, -r.t);
        prop_assert_eq!(swapped.p_value, r.p_value);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn coverage_is_translation_equivariant(
        centers in dyadic_centers(),
        dx in 0u32..200,
        dy in 0u32..200,
    ) {
        let surface = big_patch();
        let base = rect_region(&surface, 20.0, 20.0, 40.0, 40.0);
        let (tx, ty) = (dx as f64 / 4.0, dy as f64 / 4.0);
        let moved = rect_region(&surface, 20.0 + tx, 20.0 + ty, 40.0, 40.0);
        let at = |off: Vec2| -> Vec<Vec2> {
            centers.iter().map(|c| Vec2::new(c.x + 20.0 + off.x, c.y + 20.0 + off.y)).collect()
        };
        let a = score_plan(&rasterize(&base, 0.25).unwrap(), &plan(&at(Vec2::new(0.0, 0.0))), Execution::Sequential).unwrap();
        let b = score_plan(&rasterize(&moved, 0.25).unwrap(), &plan(&at(Vec2::new(tx, ty))), Execution::Sequential).unwrap();
        prop_assert_eq!(a.pixels, b.pixels);
    }

    #[test]
    fn shot_order_does_not_change_areas(centers in dyadic_centers(), rot in 0usize..25) {
        let surface = big_patch();
        let region = rect_region(&surface, 0.0, 0.0, 40.0, 40.0);
        let mask = rasterize(&region, 0.25).unwrap();
        let mut permuted = centers.clone();
        permuted.reverse();
        let k = rot % permuted.len();
        permuted.rotate_left(k);
        let a = score_plan(&mask, &plan(&centers), Execution::Sequential).unwrap();
        let b = score_plan(&mask, &plan(&permuted), Execution::Parallel).unwrap();
        prop_assert_eq!(a.pixels, b.pixels);
    }

    #[test]
    fn adding_a_shot_never_reduces_union(centers in dyadic_centers(), extra in (0u32..320, 0u32..320)) {
        let surface = big_patch();
        let region = rect_region(&surface, 0.0, 0.0, 40.0, 40.0);
        let mask = rasterize(&region, 0.25).unwrap();
        let before = score_plan(&mask, &plan(&centers), Execution::Sequential).unwrap();
        let mut more = centers.clone();
        more.push(Vec2::new(extra.0 as f64 / 8.0, extra.1 as f64 / 8.0));
        let after = score_plan(&mask, &plan(&more), Execution::Sequential).unwrap();
        prop_assert!(after.pixels.union >= before.pixels.union);
        prop_assert!(after.pixels.hits >= before.pixels.hits);
        prop_assert_eq!(after.pixels.union, after.pixels.once + after.pixels.multi);
    }
}
