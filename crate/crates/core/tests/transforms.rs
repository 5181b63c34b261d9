mod common;

use common::{matrix_of, max_abs};
use nalgebra::{Matrix4, UnitQuaternion, Vector3};
use proptest::prelude::*;
use thirdview::frames::{
    compose, invert, relative_between_ugvs, relative_in_body, relative_in_world, reset_mav_world, Pose,
};

fn pose_strategy() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform3(-10.0f64..10.0),
        prop::array::uniform4(-1.0f64..1.0),
    )
        .prop_filter("non-degenerate quaternion", |(_, q)| {
            q.iter().map(|v| v * v).sum::<f64>() > 1e-3
        })
        .prop_map(|(t, q)| Pose::from_parts_wxyz(t, q))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn composition_is_associative(a in pose_strategy(), b in pose_strategy(), c in pose_strategy()) {
        let lhs = compose(&compose(&a, &b), &c);
        let rhs = compose(&a, &compose(&b, &c));
        prop_assert!(max_abs(&(matrix_of(&lhs) - matrix_of(&rhs))) < 1e-9);
    }

    #[test]
    fn inverse_composes_to_identity(a in pose_strategy()) {
        let id = compose(&a, &invert(&a));
        prop_assert!(max_abs(&(matrix_of(&id) - Matrix4::identity())) < 1e-9);
        let id = compose(&invert(&a), &a);
        prop_assert!(max_abs(&(matrix_of(&id) - Matrix4::identity())) < 1e-9);
    }

    #[test]
    fn chain_matches_matrix_product(w in pose_strategy(), c in pose_strategy(), u in pose_strategy()) {
        let chain = relative_in_world(&w, &c, &u);
        let oracle = matrix_of(&w) * matrix_of(&c) * matrix_of(&u);
        prop_assert!(max_abs(&(matrix_of(&chain) - oracle)) < 1e-9);
    }

    #[test]
    fn reset_closes_the_chain(ugv in pose_strategy(), rel in pose_strategy()) {
        let mav = reset_mav_world(&ugv, &rel);
        let back = compose(&mav, &rel);
        prop_assert!(max_abs(&(matrix_of(&back) - matrix_of(&ugv))) < 1e-9);
    }

    #[test]
    fn reset_is_idempotent(ugv in pose_strategy(), rel in pose_strategy()) {
        let once = reset_mav_world(&ugv, &rel);
        let twice = reset_mav_world(&ugv, &rel);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn body_relative_uses_camera_mount(c in pose_strategy(), u in pose_strategy()) {
        let rel = relative_in_body(&c, &u);
        prop_assert!(max_abs(&(matrix_of(&rel) - matrix_of(&c) * matrix_of(&u))) < 1e-9);
    }

    #[test]
    fn ugv_to_ugv_relative(a in pose_strategy(), b in pose_strategy()) {
        let rel = relative_between_ugvs(&a, &b);
        let oracle = matrix_of(&a).try_inverse().unwrap() * matrix_of(&b);
        prop_assert!(max_abs(&(matrix_of(&rel) - oracle)) < 1e-9);
    }

    #[test]
    fn pose_wire_roundtrip_is_exact(a in pose_strategy()) {
        let json = serde_json::to_string(&a).unwrap();
        let back: Pose = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(a, back);
    }
}

#[test]
fn downward_camera_looks_down() {
    let cam = Pose::downward_camera(Vector3::zeros());
    let optical_axis = cam.rotation * Vector3::z();
    assert!((optical_axis - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
}

#[test]
fn reset_example_from_hover_above_vehicle() {
    let ugv = Pose::new(Vector3::new(3.0, 1.0, 0.0), UnitQuaternion::identity());
    let rel = Pose::from_translation(0.0, 0.0, -2.0);
    let mav = reset_mav_world(&ugv, &rel);
    assert!((mav.translation - Vector3::new(3.0, 1.0, 2.0)).norm() < 1e-12);
}
