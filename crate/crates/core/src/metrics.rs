//! Orientation and position error metrics.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimateTrace;
use crate::orientation::{quat_to_rotmat, rotmat_to_euler, EulerAngles, UnitQuaternion};
use crate::simulator::GroundTruth;

/// Euler angles, in degrees, of the difference rotation
/// `Δq = q̂ ⊙ q_ref^c` with its scalar part made nonnegative.
///
/// `Δq` acts in the navigation frame, so the angles are read off its inverse
/// rotation matrix: a navigation-frame heading offset of `d` reports as a
/// heading error of `+d`.
pub fn orientation_error(est: &UnitQuaternion, reference: &UnitQuaternion) -> EulerAngles {
    let dq = (*est * reference.conjugate()).canonical();
    let e = rotmat_to_euler(&quat_to_rotmat(&dq).transpose());
    EulerAngles::new(e.yaw.to_degrees(), e.pitch.to_degrees(), e.roll.to_degrees())
}

/// Per-sample errors of one estimate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrace {
    pub roll: Vec<f64>,
    pub pitch: Vec<f64>,
    pub heading: Vec<f64>,
    /// Euclidean position error, m.
    pub position: Option<Vec<f64>>,
}

impl ErrorTrace {
    pub fn len(&self) -> usize {
        self.roll.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roll.is_empty()
    }

    pub fn from_quaternions(est: &[UnitQuaternion], reference: &[UnitQuaternion]) -> Result<Self> {
        if est.len() != reference.len() {
            return Err(Error::LengthMismatch(reference.len(), est.len()));
        }
        let mut out = Self::default();
        for (e, r) in est.iter().zip(reference) {
            let a = orientation_error(e, r);
            out.roll.push(a.roll);
            out.pitch.push(a.pitch);
            out.heading.push(a.yaw);
        }
        Ok(out)
    }
}

/// Errors of an estimate against ground truth, including position when both
/// carry it.
pub fn trace_error(est: &EstimateTrace, truth: &GroundTruth) -> Result<ErrorTrace> {
    let mut out = ErrorTrace::from_quaternions(&est.q, &truth.q)?;
    if let Some(p) = &est.p {
        out.position = Some(p.iter().zip(&truth.p).map(|(a, b): (&Vector3<f64>, _)| (a - b).norm()).collect());
    }
    Ok(out)
}

/// Errors of an estimate against a reference trajectory; position is
/// compared when both carry it.
pub fn reference_error(est: &EstimateTrace, reference: &EstimateTrace) -> Result<ErrorTrace> {
    let mut out = ErrorTrace::from_quaternions(&est.q, &reference.q)?;
    if let (Some(p), Some(r)) = (&est.p, &reference.p) {
        out.position = Some(p.iter().zip(r).map(|(a, b)| (a - b).norm()).collect());
    }
    Ok(out)
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Root-mean-square errors, degrees and metres. Position RMSE is taken over
/// samples and axes, so isotropic measurement noise `σ` gives about `σ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseSummary {
    pub roll: f64,
    pub pitch: f64,
    pub heading: f64,
    pub position: Option<f64>,
    /// Number of runs averaged.
    pub runs: usize,
}

impl RmseSummary {
    /// RMSE of a single run over its samples.
    pub fn of(err: &ErrorTrace) -> Result<Self> {
        if err.is_empty() {
            return Err(Error::InvalidInput("empty error trace".into()));
        }
        Ok(Self {
            roll: rms(&err.roll),
            pitch: rms(&err.pitch),
            heading: rms(&err.heading),
            position: err.position.as_deref().map(|p| rms(p) / 3f64.sqrt()),
            runs: 1,
        })
    }

    /// Mean of per-run RMSE values, in run order.
    pub fn mean(runs: &[RmseSummary]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::InvalidInput("no runs to average".into()));
        }
        let k = runs.len() as f64;
        let avg = |f: fn(&RmseSummary) -> f64| runs.iter().map(f).sum::<f64>() / k;
        let position = runs.iter().map(|r| r.position).collect::<Option<Vec<_>>>().map(|v| v.iter().sum::<f64>() / k);
        Ok(Self { roll: avg(|r| r.roll), pitch: avg(|r| r.pitch), heading: avg(|r| r.heading), position, runs: runs.len() })
    }
}

/// RMSE of each run followed by their mean.
pub fn rmse(errors: &[ErrorTrace]) -> Result<RmseSummary> {
    let per_run = errors.iter().map(RmseSummary::of).collect::<Result<Vec<_>>>()?;
    RmseSummary::mean(&per_run)
}
