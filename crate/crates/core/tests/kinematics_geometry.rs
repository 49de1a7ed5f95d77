mod common;

use common::{finite_difference, rng};
use contact_aware::geometry::{signed_distance, Shape};
use contact_aware::kinematics::{point_jacobian, point_position, BasePose, BodyPoint, RobotModel};
use nalgebra::{DVector, Point2, Vector2};
use proptest::prelude::*;

fn model_from(links: &[f64], base: (f64, f64, f64)) -> RobotModel {
    let n = links.len();
    RobotModel::new(links.to_vec(), vec![100.0; n], vec![0.01; n])
        .unwrap()
        .with_base_pose(BasePose {
            x: base.0,
            y: base.1,
            theta: base.2,
        })
}

fn arm_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, (f64, f64, f64))> {
    (1usize..7).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1f64..1.5, n),
            prop::collection::vec(-std::f64::consts::PI..std::f64::consts::PI, n),
            (-1.0f64..1.0, -1.0f64..1.0, -3.0f64..3.0),
        )
    })
}

fn shape_strategy() -> impl Strategy<Value = Shape> {
    prop_oneof![
        (-3.0f64..3.0, -1.0f64..1.0).prop_map(|(a, offset)| Shape::HalfPlane {
            normal: Vector2::new(a.cos(), a.sin()),
            offset
        }),
        (-1.0f64..1.0, -1.0f64..1.0, 0.05f64..1.0).prop_map(|(x, y, radius)| Shape::Circle {
            center: Point2::new(x, y),
            radius
        }),
        (
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
            0.05f64..0.5
        )
            .prop_map(|(ax, ay, bx, by, radius)| {
                Shape::Capsule {
                    a: Point2::new(ax, ay),
                    b: Point2::new(bx, by),
                    radius,
                }
            }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn jacobian_matches_finite_differences((links, q, base) in arm_strategy(), frac in 0.0f64..1.0, lateral in -0.2f64..0.2, pick in 0usize..6) {
        let model = model_from(&links, base);
        let q = DVector::from_vec(q);
        let link = pick % links.len();
        let point = BodyPoint::new(link, Vector2::new(links[link] * frac, lateral));
        let analytic = point_jacobian(&model, &q, &point).unwrap();
        let numeric = finite_difference(|q| point_position(&model, q, &point).unwrap().coords, &q, 1e-6);
        for r in 0..2 {
            for c in 0..links.len() {
                prop_assert!((analytic[(r, c)] - numeric[(r, c)]).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn link_lengths_are_preserved((links, q, base) in arm_strategy()) {
        let model = model_from(&links, base);
        let q = DVector::from_vec(q);
        let mut prev = Point2::new(base.0, base.1);
        for (j, len) in links.iter().enumerate() {
            let tip = point_position(&model, &q, &BodyPoint::new(j, Vector2::new(*len, 0.0))).unwrap();
            prop_assert!(((tip - prev).norm() - len).abs() < 1e-12);
            prev = tip;
        }
    }

    #[test]
    fn sdf_gradient_is_unit_and_consistent(shape in shape_strategy(), x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let p = Point2::new(x, y);
        let s = signed_distance(&shape, &p);
        prop_assert!((s.normal.norm() - 1.0).abs() < 1e-12);
        // the witness lies on the boundary, |d| away along the normal
        prop_assert!(signed_distance(&shape, &s.witness).distance.abs() < 1e-9);
        prop_assert!((p - (s.witness + s.normal * s.distance)).norm() < 1e-9);
        // the distance field is 1-Lipschitz
        let h = 1e-3;
        let moved = signed_distance(&shape, &Point2::new(x + h, y - h)).distance;
        prop_assert!((moved - s.distance).abs() <= h * 2f64.sqrt() + 1e-12);
    }

    #[test]
    fn sdf_gradient_matches_finite_differences(shape in shape_strategy(), x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let p = Point2::new(x, y);
        let s = signed_distance(&shape, &p);
        let h = 1e-6;
        let d = |dx: f64, dy: f64| signed_distance(&shape, &Point2::new(x + dx, y + dy)).distance;
        let grad = Vector2::new((d(h, 0.0) - d(-h, 0.0)) / (2.0 * h), (d(0.0, h) - d(0.0, -h)) / (2.0 * h));
        // skip the measure-zero ridges (capsule core, circle center) where the gradient jumps
        let smooth = match &shape {
            Shape::HalfPlane { .. } => true,
            Shape::Circle { radius, .. } | Shape::Capsule { radius, .. } => s.distance + radius > 1e-3,
        };
        if smooth {
            prop_assert!((grad - s.normal).norm() < 1e-5);
        }
    }
}

#[test]
fn random_jacobians_stay_within_tolerance_for_long_chains() {
    let mut r = rng(3);
    for _ in 0..200 {
        let model = common::random_model(&mut r, 8);
        let q = common::random_q(&mut r, 8);
        let tip = model.end_effector();
        let analytic = point_jacobian(&model, &q, &tip).unwrap();
        let numeric = finite_difference(
            |q| point_position(&model, q, &tip).unwrap().coords,
            &q,
            1e-6,
        );
        let err = (DVector::from_column_slice(analytic.as_slice())
            - DVector::from_column_slice(numeric.as_slice()))
        .amax();
        assert!(err <= 1e-5, "{err:e}");
    }
}
