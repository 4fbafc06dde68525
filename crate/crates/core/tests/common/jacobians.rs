//! Central-difference checks of every analytic Jacobian, shared by the
//! Jacobian test target and the acceptance runner.

use std::collections::BTreeMap;

use imufuse::estimators::ekf_dev::{gyro_input_matrix, pose_transition, propagate_pv};
use imufuse::estimators::ekf_quat::{quat_time_update, quat_to_deviation_jacobian, Renormalization};
use imufuse::estimators::EstimatorConfig;
use imufuse::orientation::{d_rotate_dq, d_rotate_transpose_dq, dexp_q, dlog_q, exp_q, log_q, rotmat_polynomial, Quaternion};
use imufuse::sensor_models::*;
use imufuse::{Residual, UnitQuaternion};
use nalgebra::{DMatrix, DVector, SVector, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const STEP: f64 = 1e-6;

/// Worst relative error per Jacobian name.
pub type Report = BTreeMap<&'static str, f64>;

fn fd<const N: usize>(x0: &SVector<f64, N>, f: impl Fn(&SVector<f64, N>) -> DVector<f64>) -> DMatrix<f64> {
    let m = f(x0).len();
    let mut j = DMatrix::zeros(m, N);
    for k in 0..N {
        let mut hi = *x0;
        let mut lo = *x0;
        hi[k] += STEP;
        lo[k] -= STEP;
        j.set_column(k, &((f(&hi) - f(&lo)) / (2.0 * STEP)));
    }
    j
}

fn dv<const M: usize>(v: SVector<f64, M>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn dm<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::RawStorage<f64, R, C>>(m: &nalgebra::Matrix<f64, R, C, S>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn rel(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).norm() / analytic.norm().max(1.0)
}

struct Case {
    rng: ChaCha8Rng,
}

impl Case {
    fn normal(&mut self) -> f64 {
        Distribution::<f64>::sample(&StandardNormal, &mut self.rng)
    }
    fn vec3(&mut self, scale: f64) -> Vector3<f64> {
        Vector3::new(self.normal(), self.normal(), self.normal()) * scale
    }
    fn quat(&mut self) -> UnitQuaternion {
        UnitQuaternion::normalize(Quaternion::new(self.normal(), self.normal(), self.normal(), self.normal()))
    }
    fn raw4(&mut self) -> Vector4<f64> {
        Vector4::new(self.normal(), self.normal(), self.normal(), self.normal())
    }
    fn period(&mut self) -> f64 {
        10f64.powf(self.rng.random_range(-2.0..0.0))
    }
}

fn block(r: &Residual, b: StateBlock) -> DMatrix<f64> {
    dm(r.jacobian(b).expect("block present"))
}

fn record(report: &mut Report, name: &'static str, err: f64) {
    let e = report.entry(name).or_insert(0.0);
    *e = e.max(err);
}

/// Runs every check over `configs` random configurations.
pub fn run(configs: usize, seed: u64) -> Report {
    let mut report = Report::new();
    let mut c = Case { rng: ChaCha8Rng::seed_from_u64(seed) };
    let z3 = Vector3::zeros();
    for _ in 0..configs {
        let dt = c.period();
        let mut env = Environment::with_dip(c.rng.random_range(0.0..1.5), dt);
        env.gravity_n = Vector3::new(0.0, 0.0, -9.82);
        let q = c.quat();
        let rate = c.vec3(0.5);
        let q_next = q * exp_q(&(0.5 * dt * rate));
        let y = c.vec3(5.0);
        let bias = c.vec3(0.05);

        // Orientation residuals, all linearized at η = 0.
        let q_init = perturb(&c.vec3(0.3), &q);
        let f = |e: &Vector3<f64>| dv(residual_prior_orientation(e, &q, &q_init, 1.0).value);
        record(
            &mut report,
            "prior orientation",
            rel(&block(&residual_prior_orientation(&z3, &q, &q_init, 1.0), StateBlock::Orientation(0)), &fd(&z3, f)),
        );

        let w = rate + c.vec3(0.01);
        let r0 = residual_gyr_dynamics(2, &z3, &z3, &q, &q_next, &w, dt, None, 1.0);
        let ft = |e: &Vector3<f64>| dv(residual_gyr_dynamics(2, e, &z3, &q, &q_next, &w, dt, None, 1.0).value);
        let fnext = |e: &Vector3<f64>| dv(residual_gyr_dynamics(2, &z3, e, &q, &q_next, &w, dt, None, 1.0).value);
        record(&mut report, "gyroscope dynamics d/eta_t", rel(&block(&r0, StateBlock::Orientation(2)), &fd(&z3, ft)));
        record(&mut report, "gyroscope dynamics d/eta_t+1", rel(&block(&r0, StateBlock::Orientation(3)), &fd(&z3, fnext)));
        let rb = residual_gyr_dynamics(2, &z3, &z3, &q, &q_next, &w, dt, Some(&bias), 1.0);
        let fb = |b: &Vector3<f64>| dv(residual_gyr_dynamics(2, &z3, &z3, &q, &q_next, &w, dt, Some(b), 1.0).value);
        record(&mut report, "gyroscope dynamics d/bias", rel(&block(&rb, StateBlock::Bias), &fd(&bias, fb)));
        let fbt = |e: &Vector3<f64>| dv(residual_gyr_dynamics(2, e, &z3, &q, &q_next, &w, dt, Some(&bias), 1.0).value);
        record(&mut report, "gyroscope dynamics with bias d/eta_t", rel(&block(&rb, StateBlock::Orientation(2)), &fd(&z3, fbt)));

        let fa = |e: &Vector3<f64>| dv(residual_acc(0, e, &q, &y, &env, 1.0).value);
        record(&mut report, "accelerometer", rel(&block(&residual_acc(0, &z3, &q, &y, &env, 1.0), StateBlock::Orientation(0)), &fd(&z3, fa)));
        let fm = |e: &Vector3<f64>| dv(residual_mag(0, e, &q, &y, &env, 1.0).value);
        record(&mut report, "magnetometer", rel(&block(&residual_mag(0, &z3, &q, &y, &env, 1.0), StateBlock::Orientation(0)), &fd(&z3, fm)));

        // Pose residuals.
        // Keep the states near a consistent motion so the 2/T² scaling does
        // not swamp the differences in roundoff.
        let (p0, v0) = (c.vec3(3.0), c.vec3(1.0));
        let (p1, v1) = (p0 + dt * v0 + c.vec3(dt * dt), v0 + c.vec3(dt));
        let pose = |p0: &Vector3<f64>, p1: &Vector3<f64>, v0: &Vector3<f64>, v1: &Vector3<f64>, e: &Vector3<f64>| {
            let (a, b) = residual_pose_dynamics(0, p0, p1, v0, v1, e, &q, &y, &env, 1.0);
            DVector::from_iterator(6, a.value.iter().chain(b.value.iter()).copied())
        };
        let (rp, rv) = residual_pose_dynamics(0, &p0, &p1, &v0, &v1, &z3, &q, &y, &env, 1.0);
        let stack = |b: StateBlock| {
            let mut j = DMatrix::zeros(6, 3);
            if let Some(m) = rp.jacobian(b) {
                j.view_mut((0, 0), (3, 3)).copy_from(m);
            }
            if let Some(m) = rv.jacobian(b) {
                j.view_mut((3, 0), (3, 3)).copy_from(m);
            }
            j
        };
        record(&mut report, "pose dynamics d/p_t", rel(&stack(StateBlock::Position(0)), &fd(&p0, |x| pose(x, &p1, &v0, &v1, &z3))));
        record(&mut report, "pose dynamics d/p_t+1", rel(&stack(StateBlock::Position(1)), &fd(&p1, |x| pose(&p0, x, &v0, &v1, &z3))));
        record(&mut report, "pose dynamics d/v_t", rel(&stack(StateBlock::Velocity(0)), &fd(&v0, |x| pose(&p0, &p1, x, &v1, &z3))));
        record(&mut report, "pose dynamics d/v_t+1", rel(&stack(StateBlock::Velocity(1)), &fd(&v1, |x| pose(&p0, &p1, &v0, x, &z3))));
        record(&mut report, "pose dynamics d/eta_t", rel(&stack(StateBlock::Orientation(0)), &fd(&z3, |x| pose(&p0, &p1, &v0, &v1, x))));

        let yp = c.vec3(3.0);
        record(
            &mut report,
            "position",
            rel(&block(&residual_pos(0, &p0, &yp, 1.0), StateBlock::Position(0)), &fd(&p0, |x| dv(residual_pos(0, x, &yp, 1.0).value))),
        );
        record(
            &mut report,
            "prior position",
            rel(
                &block(&residual_prior_position(&p0, &yp, 1.0), StateBlock::Position(0)),
                &fd(&p0, |x| dv(residual_prior_position(x, &yp, 1.0).value)),
            ),
        );
        record(
            &mut report,
            "prior velocity",
            rel(&block(&residual_prior_velocity(&v0, 1.0), StateBlock::Velocity(0)), &fd(&v0, |x| dv(residual_prior_velocity(x, 1.0).value))),
        );
        record(
            &mut report,
            "prior bias",
            rel(&block(&residual_prior_bias(&bias, 1.0), StateBlock::Bias), &fd(&bias, |x| dv(residual_prior_bias(x, 1.0).value))),
        );

        // Deviation EKF: noise input of the orientation deviation.
        let g = gyro_input_matrix(&q, &q_next, &rate, dt);
        let dev_of_noise = |e: &Vector3<f64>| dv(2.0 * log_q(&(q * exp_q(&(0.5 * dt * (rate + e))) * q_next.conjugate())));
        record(&mut report, "deviation filter G", rel(&dm(&g), &fd(&z3, dev_of_noise)));

        // Pose transition over [p, v, η].
        let cfg = EstimatorConfig::new(NoiseModel::default(), env);
        let f9 = pose_transition(&q, &y, dt);
        let x9 = SVector::<f64, 9>::from_iterator(p0.iter().chain(v0.iter()).chain(z3.iter()).copied());
        let step = |x: &SVector<f64, 9>| {
            let eta = Vector3::new(x[6], x[7], x[8]);
            let qe = perturb(&eta, &q);
            let (p, v) = propagate_pv(&x.fixed_rows::<3>(0).into_owned(), &x.fixed_rows::<3>(3).into_owned(), &qe, &y, &cfg);
            let e = 2.0 * log_q(&(qe * exp_q(&(0.5 * dt * rate)) * q_next.conjugate()));
            DVector::from_iterator(9, p.iter().chain(v.iter()).chain(e.iter()).copied())
        };
        record(&mut report, "pose transition F", rel(&dm(&f9), &fd(&x9, step)));

        // Quaternion EKF time and measurement models, on raw coordinates.
        let (fq, gq) = quat_time_update(&q, &rate, dt);
        let qv: Vector4<f64> = *q.coords();
        let prop = |x: &Vector4<f64>| dv(Quaternion::from_vector(*x).multiply(exp_q(&(0.5 * dt * rate)).quaternion()).coords);
        record(&mut report, "quaternion filter F", rel(&dm(&fq), &fd(&qv, prop)));
        let noisy = |e: &Vector3<f64>| dv(*(q * exp_q(&(0.5 * dt * (rate - e)))).coords());
        record(&mut report, "quaternion filter G", rel(&dm(&gq), &fd(&z3, noisy)));
        let raw = c.raw4();
        let rot = |x: &Vector4<f64>| dv(rotmat_polynomial(x) * y);
        record(&mut report, "d(R(q) v)/dq", rel(&dm(&d_rotate_dq(&raw, &y)), &fd(&raw, rot)));
        let rot_t = |x: &Vector4<f64>| dv(rotmat_polynomial(x).transpose() * y);
        record(&mut report, "d(R(q)^T v)/dq", rel(&dm(&d_rotate_transpose_dq(&raw, &y)), &fd(&raw, rot_t)));
        let to_dev = |x: &Vector4<f64>| dv(2.0 * log_q(&(UnitQuaternion::new_unchecked(Quaternion::from_vector(qv + x)) * q.conjugate())));
        record(&mut report, "quaternion to deviation", rel(&dm(&quat_to_deviation_jacobian(&q)), &fd(&Vector4::zeros(), to_dev)));
        let unit = |x: &Vector4<f64>| dv(x / x.norm());
        record(&mut report, "renormalization", rel(&dm(&Renormalization::Projection.jacobian(&raw)), &fd(&raw, unit)));

        // Exponential and logarithm maps.
        let v = c.vec3(0.8);
        record(&mut report, "d exp_q", rel(&dm(&dexp_q(&v)), &fd(&v, |x| dv(*exp_q(x).coords()))));
        let lq = c.quat().canonical();
        let lv: Vector4<f64> = *lq.coords() * c.rng.random_range(0.5..2.0);
        let log_raw = |x: &Vector4<f64>| dv(log_q(&UnitQuaternion::new_unchecked(Quaternion::from_vector(*x))));
        record(&mut report, "d log_q", rel(&dm(&dlog_q(&lv)), &fd(&lv, log_raw)));
    }
    report
}
