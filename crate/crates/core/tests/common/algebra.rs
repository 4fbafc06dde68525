//! Round-trip and norm-preservation errors of the rotation algebra over
//! random draws.

use imufuse::orientation::*;
use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

pub struct AlgebraErrors {
    pub round_trip: f64,
    pub norm: f64,
}

fn quat_gap(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    (a.coords() - b.coords()).amax().min((a.coords() + b.coords()).amax())
}

pub fn run(draws: usize, seed: u64) -> AlgebraErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rt: f64 = 0.0;
    let mut nm: f64 = 0.0;
    for _ in 0..draws {
        let axis = Vector3::from(UnitSphere.sample(&mut rng));
        let small = axis * rng.random_range(0.0..1.5);
        rt = rt.max((log_q(&exp_q(&small)) - small).amax());
        let big = axis * rng.random_range(0.0..3.0);
        rt = rt.max((log_r(&exp_r(&big)) - big).amax());
        let q = UnitQuaternion::normalize(Quaternion::from_vector(Vector4::from_fn(|_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng))));
        rt = rt.max(quat_gap(&exp_q(&log_q(&q)), &q));
        rt = rt.max(quat_gap(&rotmat_to_quat(&quat_to_rotmat(&q)), &q));
        rt = rt.max(quat_gap(&(q * q.conjugate()), &UnitQuaternion::identity()));
        let e = EulerAngles::new(rng.random_range(-3.1..3.1), rng.random_range(-1.4..1.4), rng.random_range(-3.1..3.1));
        let back = rotmat_to_euler(&euler_to_rotmat(&e));
        rt = rt.max((back.yaw - e.yaw).abs().max((back.pitch - e.pitch).abs()).max((back.roll - e.roll).abs()));
        let r = quat_to_rotmat(&q);
        rt = rt.max((rotmat_to_euler(&euler_to_rotmat(&rotmat_to_euler(&r))).yaw - rotmat_to_euler(&r).yaw).abs());
        let v = Vector3::from_fn(|_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng)) * 10f64.powf(rng.random_range(-3.0..3.0));
        let scale = v.norm();
        nm = nm.max((q.rotate_vector(&v).norm() - scale).abs() / scale);
        nm = nm.max((r.apply(&v).norm() - scale).abs() / scale);
        nm = nm.max((exp_r(&big).apply(&v).norm() - scale).abs() / scale);
    }
    AlgebraErrors { round_trip: rt, norm: nm }
}
