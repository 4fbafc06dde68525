mod common;

use imufuse::orientation::*;
use nalgebra::{Vector3, Vector4};
use proptest::prelude::*;

fn rotvec(max: f64) -> impl Strategy<Value = Vector3<f64>> {
    (prop::array::uniform3(-1.0..1.0f64), 0.0..max).prop_filter_map("nonzero axis", |(a, r)| {
        let v = Vector3::from(a);
        (v.norm() > 1e-3).then(|| v.normalize() * r)
    })
}

fn unit_quat() -> impl Strategy<Value = UnitQuaternion> {
    prop::array::uniform4(-1.0..1.0f64).prop_filter_map("nonzero", |a| {
        (Vector4::from(a).norm() > 1e-3).then(|| UnitQuaternion::normalize(Quaternion::from_vector(Vector4::from(a))))
    })
}

fn close(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    (a.coords() - b.coords()).amax().min((a.coords() + b.coords()).amax())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn exp_log_quaternion_round_trip(eta in rotvec(1.5), q in unit_quat()) {
        prop_assert!((log_q(&exp_q(&eta)) - eta).amax() <= 1e-10);
        prop_assert!(close(&exp_q(&log_q(&q)), &q) <= 1e-10);
    }

    #[test]
    fn exp_log_matrix_round_trip(eta in rotvec(3.0)) {
        prop_assert!((log_r(&exp_r(&eta)) - eta).amax() <= 1e-10);
    }

    #[test]
    fn quaternion_matrix_round_trip(q in unit_quat()) {
        let r = quat_to_rotmat(&q);
        prop_assert!(close(&rotmat_to_quat(&r), &q) <= 1e-10);
        prop_assert!((r.matrix() * r.matrix().transpose() - nalgebra::Matrix3::identity()).amax() <= 1e-12);
    }

    #[test]
    fn euler_round_trip_away_from_gimbal_lock(yaw in -3.1..3.1f64, pitch in -1.5..1.5f64, roll in -3.1..3.1f64) {
        let e = rotmat_to_euler(&euler_to_rotmat(&EulerAngles::new(yaw, pitch, roll)));
        prop_assert!((e.yaw - yaw).abs() <= 1e-10 && (e.pitch - pitch).abs() <= 1e-10 && (e.roll - roll).abs() <= 1e-10);
    }

    #[test]
    fn rotations_preserve_norm(q in unit_quat(), v in prop::array::uniform3(-1e3..1e3f64)) {
        let v = Vector3::from(v);
        prop_assume!(v.norm() > 1e-6);
        let n = v.norm();
        prop_assert!((q.rotate_vector(&v).norm() - n).abs() <= 1e-12 * n);
        prop_assert!((quat_to_rotmat(&q).apply(&v).norm() - n).abs() <= 1e-12 * n);
    }

    #[test]
    fn products_stay_unit(a in unit_quat(), b in unit_quat()) {
        prop_assert!(((a * b).quaternion().norm() - 1.0).abs() <= 1e-12);
        prop_assert!(close(&(a * a.conjugate()), &UnitQuaternion::identity()) <= 1e-12);
    }

    #[test]
    fn matrix_and_quaternion_compose_alike(a in unit_quat(), b in unit_quat()) {
        let lhs = quat_to_rotmat(&(a * b));
        let rhs = quat_to_rotmat(&a) * quat_to_rotmat(&b);
        prop_assert!((lhs.matrix() - rhs.matrix()).amax() <= 1e-12);
    }

    #[test]
    fn angle_to_matches_log(a in unit_quat(), eta in rotvec(3.0)) {
        let b = exp_q(&(0.5 * eta)) * a;
        prop_assert!((a.angle_to(&b) - eta.norm()).abs() <= 1e-10);
    }
}

#[test]
fn random_algebra_sweep_is_tight() {
    let e = common::algebra::run(20_000, 3);
    assert!(e.round_trip <= 1e-10, "{}", e.round_trip);
    assert!(e.norm <= 1e-12, "{}", e.norm);
}
