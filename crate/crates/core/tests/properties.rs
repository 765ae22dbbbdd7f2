use std::sync::Arc;

use proptest::prelude::*;
use retractor_core::geometry::{ConvexBody, Norm, NormedSpace, Point, Shape};
use retractor_core::km::{asymptotic_regularity_check, km_iterate, KmParams};
use retractor_core::linalg::Matrix;
use retractor_core::maps::{CertifiedMap, MapKind, ScalarMap};
use retractor_core::resolvent::{banach_solve, resolve, single_retraction, AffinePicardTable};

fn norm_strategy() -> impl Strategy<Value = Norm> {
    prop_oneof![Just(Norm::L1), Just(Norm::L2), Just(Norm::LInf)]
}

fn ball(dim: usize, norm: Norm) -> Arc<ConvexBody> {
    Arc::new(ConvexBody::unit_ball(NormedSpace::new(dim, norm).unwrap()))
}

/// A per-coordinate scale/clamp map: 1-Lipschitz in every l_p norm and a self-map of any centered unit ball.
fn coordwise(body: &Arc<ConvexBody>, factors: &[f64]) -> CertifiedMap {
    let coords = factors
        .iter()
        .map(|&f| if f > 0.9 { ScalarMap::Clamp { lo: -0.5, hi: 0.5 } } else { ScalarMap::Scale { factor: f } })
        .collect();
    CertifiedMap::new("coordwise", body.clone(), MapKind::CoordWise { coords }).unwrap().certified(200, 3).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norm_axioms(norm in norm_strategy(), v in prop::collection::vec(-10.0f64..10.0, 4), w in prop::collection::vec(-10.0f64..10.0, 4), t in -5.0f64..5.0) {
        let space = NormedSpace::new(4, norm).unwrap();
        let (nv, nw) = (space.norm(&v), space.norm(&w));
        prop_assert!(nv >= 0.0);
        let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        prop_assert!(space.norm(&sum) <= (nv + nw) * (1.0 + 1e-12));
        let scaled: Vec<f64> = v.iter().map(|a| t * a).collect();
        prop_assert!((space.norm(&scaled) - t.abs() * nv).abs() <= 1e-12 * (1.0 + t.abs() * nv));
        prop_assert_eq!(space.norm(&[0.0; 4]), 0.0);
    }

    #[test]
    fn convex_combinations_stay_inside(norm in norm_strategy(), dim in 2usize..6, seed in any::<u64>(), lambda in 0.0f64..=1.0) {
        let space = NormedSpace::new(dim, norm).unwrap();
        let shapes = [
            Shape::NormBall { center: Point::zeros(dim), radius: 1.5 },
            Shape::Box { lower: Point(vec![-1.0; dim]), upper: Point(vec![2.0; dim]) },
            Shape::Simplex { scale: 1.0 },
        ];
        for shape in shapes {
            let body = ConvexBody::new(space.clone(), shape).unwrap();
            let pts = body.sample_points(6, seed);
            for pair in pts.windows(2) {
                let m = pair[0].lerp(&pair[1], lambda);
                prop_assert!(body.contains(&m, 1e-9));
            }
        }
    }

    #[test]
    fn resolvent_residual_and_nonexpansiveness(norm in prop_oneof![Just(Norm::L1), Just(Norm::L2)], dim in 2usize..6, factors in prop::collection::vec(-1.0f64..1.0, 6), n in prop_oneof![Just(10u64), Just(100)], seed in any::<u64>()) {
        let body = ball(dim, norm);
        let map = coordwise(&body, &factors[..dim]);
        let space = body.space();
        let inner_tol = 1e-9;
        let pts = body.sample_points(4, seed);
        let out: Vec<_> = pts.iter().map(|x| resolve(&map, x, n, inner_tol).unwrap()).collect();
        for r in &out {
            prop_assert!(r.residual_t <= body.diameter() / n as f64 + 2.0 * inner_tol);
        }
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let lhs = space.dist(&out[i].point, &out[j].point);
                prop_assert!(lhs <= space.dist(&pts[i], &pts[j]) + 4.0 * inner_tol);
            }
        }
    }

    #[test]
    fn doubling_matches_picard(q in 0.1f64..0.99, angle in 0.0f64..std::f64::consts::TAU, c in prop::collection::vec(-0.1f64..0.1, 2), z0 in prop::collection::vec(-1.0f64..1.0, 2)) {
        let space = NormedSpace::new(2, Norm::L2).unwrap();
        let m = Matrix::from_rows(&[[q * angle.cos(), -q * angle.sin()], [q * angle.sin(), q * angle.cos()]]).unwrap();
        let table = AffinePicardTable::new(m.clone());
        let (fast, fast_solve) = table.solve(&space, &c, q, &z0, 1e-10, 1_000_000, None).unwrap();
        let (slow, slow_solve) = banach_solve(&space, |z, out| {
            m.mul_vec_into(z, out);
            for (o, ci) in out.iter_mut().zip(&c) {
                *o += ci;
            }
            Ok(())
        }, q, &z0, 1e-10, 1_000_000, None).unwrap();
        prop_assert!(space.dist(&fast, &slow) <= 1e-12);
        prop_assert!(fast_solve.iterations_used.abs_diff(slow_solve.iterations_used) <= 1);
    }

    #[test]
    fn km_rotation_steps_are_monotone(degrees in 5.0f64..355.0, x in -0.6f64..0.6, y in -0.6f64..0.6) {
        let body = ball(2, Norm::L2);
        let map = CertifiedMap::new("rot", body.clone(), MapKind::Rotation2D { center: [0.0, 0.0], degrees }).unwrap().certified(50, 1).unwrap();
        let params = KmParams { max_iter: 200_000, ..KmParams::new(1e-9) };
        let out = km_iterate(body.space(), |z| map.eval(z), &[x, y], &params).unwrap();
        let report = asymptotic_regularity_check(&out.trace);
        prop_assert!(report.passed, "{:?}", report);
        prop_assert!(body.space().norm(&out.point) <= 1e-8 / (1.0 - (degrees.to_radians() / 2.0).cos().abs()).max(1e-3));
    }

    #[test]
    fn single_retraction_meets_eps(dim in 2usize..5, factors in prop::collection::vec(-1.0f64..1.0, 5), eps in prop_oneof![Just(1e-2), Just(1e-3), Just(1e-4)], seed in any::<u64>()) {
        let body = ball(dim, Norm::L1);
        let map = coordwise(&body, &factors[..dim]);
        let r = single_retraction(&map, eps).unwrap();
        for x in body.sample_points(3, seed) {
            let out = r.apply(&x, None).unwrap();
            prop_assert!(out.residual_t <= r.residual_bound());
        }
    }
}
