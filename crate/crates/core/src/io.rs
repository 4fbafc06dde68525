//! CSV files for measurements and trajectories, and long-format plot data.
//!
//! Measurement files have the header
//! `t,gyr_x,gyr_y,gyr_z,acc_x,acc_y,acc_z[,mag_x,mag_y,mag_z][,pos_x,pos_y,pos_z]`.
//! Trajectory files (ground truth and estimates) have
//! `t,q0,q1,q2,q3[,p_x,p_y,p_z,v_x,v_y,v_z]`, optionally followed by
//! `bias_x,bias_y,bias_z` and the covariance diagonals `var_ori_x..z`,
//! `var_bias_x..z`. Units are SI; time is in seconds, strictly increasing
//! and uniformly spaced. Values are written in shortest round-trip form, so
//! a save and load reproduces every `f64` exactly.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, Vector3, Vector4};

use crate::allan::AllanResult;
use crate::error::{Error, Result};
use crate::estimators::{EstimateTrace, StateLayout};
use crate::metrics::ErrorTrace;
use crate::orientation::{Quaternion, UnitQuaternion};
use crate::simulator::{GroundTruth, MeasurementSeries};

const AXES: [&str; 3] = ["x", "y", "z"];

fn group(prefix: &str) -> Vec<String> {
    AXES.iter().map(|a| format!("{prefix}_{a}")).collect()
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

/// Rows of a CSV document with 1-based line numbers, header first.
struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<f64>)>,
}

fn read_table(input: impl Read) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(input);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r?.iter().map(str::to_owned).collect::<Vec<_>>(),
        None => return Err(parse_err(1, 1, "empty file")),
    };
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(parse_err(line, rec.len().min(header.len()) + 1, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(c, s)| {
                s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| parse_err(line, c + 1, format!("`{s}` is not a finite number")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, vals));
    }
    if rows.len() < 2 {
        return Err(parse_err(1, 1, "need at least two data rows"));
    }
    Ok(Table { header, rows })
}

/// Checks that the time column is strictly increasing and uniform within
/// `1e-9·T`; returns `(t0, T)`.
fn check_time(table: &Table) -> Result<(f64, f64)> {
    let t: Vec<f64> = table.rows.iter().map(|r| r.1[0]).collect();
    for (k, w) in t.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(parse_err(table.rows[k + 1].0, 1, format!("time {} does not increase (previous {})", w[1], w[0])));
        }
    }
    let period = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    for (k, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - period).abs() > 1e-9 * period.max(f64::MIN_POSITIVE) + 4.0 * f64::EPSILON * w[1].abs() {
            return Err(parse_err(table.rows[k + 1].0, 1, format!("sample spacing {} differs from {period}", w[1] - w[0])));
        }
    }
    Ok((t[0], period))
}

/// Locates an optional 3-column group; it must be complete and contiguous.
fn find_group(header: &[String], prefix: &str) -> Result<Option<usize>> {
    let names = group(prefix);
    let Some(start) = header.iter().position(|h| *h == names[0]) else {
        if let Some(c) = header.iter().position(|h| names.contains(h)) {
            return Err(parse_err(1, c + 1, format!("incomplete column group {prefix}")));
        }
        return Ok(None);
    };
    if header.len() < start + 3 || header[start..start + 3] != names[..] {
        return Err(parse_err(1, start + 1, format!("columns {} must be contiguous", names.join(","))));
    }
    Ok(Some(start))
}

fn vec3(row: &[f64], c: usize) -> Vector3<f64> {
    Vector3::new(row[c], row[c + 1], row[c + 2])
}

fn check_header(header: &[String], allowed: &[&[String]]) -> Result<()> {
    if allowed.contains(&header) {
        return Ok(());
    }
    let longest = allowed.iter().max_by_key(|a| a.len()).unwrap();
    let col = header.iter().zip(longest.iter()).position(|(a, b)| a != b).unwrap_or(header.len().min(longest.len()));
    Err(parse_err(1, col + 1, format!("unexpected header `{}`", header.join(","))))
}

fn measurement_header(mag: bool, pos: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(group("gyr"));
    h.extend(group("acc"));
    if mag {
        h.extend(group("mag"));
    }
    if pos {
        h.extend(group("pos"));
    }
    h
}

pub fn write_measurements(out: impl Write, meas: &MeasurementSeries) -> Result<()> {
    meas.validate()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(measurement_header(meas.mag.is_some(), meas.pos.is_some()))?;
    for k in 0..meas.len() {
        let mut row = vec![meas.time(k).to_string()];
        let mut push = |v: &Vector3<f64>| row.extend(v.iter().map(f64::to_string));
        push(&meas.gyr[k]);
        push(&meas.acc[k]);
        if let Some(m) = &meas.mag {
            push(&m[k]);
        }
        if let Some(p) = &meas.pos {
            push(&p[k]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_measurements(input: impl Read) -> Result<MeasurementSeries> {
    let table = read_table(input)?;
    let forms: Vec<Vec<String>> =
        [(false, false), (true, false), (false, true), (true, true)].iter().map(|&(m, p)| measurement_header(m, p)).collect();
    let refs: Vec<&[String]> = forms.iter().map(Vec::as_slice).collect();
    check_header(&table.header, &refs)?;
    let (t0, sample_period) = check_time(&table)?;
    let mag_col = find_group(&table.header, "mag")?;
    let pos_col = find_group(&table.header, "pos")?;
    let rows = &table.rows;
    let col = |c: usize| rows.iter().map(|r| vec3(&r.1, c)).collect::<Vec<_>>();
    Ok(MeasurementSeries { sample_period, t0, gyr: col(1), acc: col(4), mag: mag_col.map(col), pos: pos_col.map(col) })
}

pub fn save_measurements(path: impl AsRef<Path>, meas: &MeasurementSeries) -> Result<()> {
    write_measurements(File::create(path)?, meas)
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<MeasurementSeries> {
    read_measurements(File::open(path)?)
}

/// A trajectory read back from a file, with the time axis it was stored on.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub sample_period: f64,
    pub trace: EstimateTrace,
}

fn trajectory_header(pose: bool, bias: bool, var: bool) -> Vec<String> {
    let mut h: Vec<String> = ["t", "q0", "q1", "q2", "q3"].iter().map(|s| s.to_string()).collect();
    if pose {
        h.extend(group("p"));
        h.extend(group("v"));
    }
    if bias {
        h.extend(group("bias"));
    }
    if var {
        h.extend(group("var_ori"));
        if bias {
            h.extend(group("var_bias"));
        }
    }
    h
}

/// Writes a trajectory on the time axis `t0 + k·T`. Covariance diagonals
/// are included when every sample has a covariance.
pub fn write_trace(out: impl Write, trace: &EstimateTrace, t0: f64, sample_period: f64) -> Result<()> {
    let n = trace.len();
    let pose = trace.p.is_some() && trace.v.is_some();
    let bias = trace.bias.is_some();
    let var = trace.cov.len() == n && n > 0;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(pose, bias, var))?;
    for k in 0..n {
        let mut row = vec![(t0 + k as f64 * sample_period).to_string()];
        row.extend(trace.q[k].coords().iter().map(f64::to_string));
        let mut push = |v: &Vector3<f64>| row.extend(v.iter().map(f64::to_string));
        if pose {
            push(&trace.p.as_ref().unwrap()[k]);
            push(&trace.v.as_ref().unwrap()[k]);
        }
        if let Some(b) = &trace.bias {
            push(&b[k]);
        }
        if var {
            let c = &trace.cov[k];
            let o = trace.layout.orientation;
            push(&Vector3::new(c[(o, o)], c[(o + 1, o + 1)], c[(o + 2, o + 2)]));
            if let Some(b) = trace.layout.bias {
                push(&Vector3::new(c[(b, b)], c[(b + 1, b + 1)], c[(b + 2, b + 2)]));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory. Quaternions must have unit norm within `1e-6`; they
/// are renormalized to full precision. Covariance columns, when present,
/// come back as diagonal matrices.
pub fn read_trace(input: impl Read) -> Result<Trajectory> {
    let table = read_table(input)?;
    let forms: Vec<Vec<String>> = [false, true]
        .iter()
        .flat_map(|&p| [false, true].into_iter().flat_map(move |b| [false, true].into_iter().map(move |v| trajectory_header(p, b, v))))
        .collect();
    let refs: Vec<&[String]> = forms.iter().map(Vec::as_slice).collect();
    check_header(&table.header, &refs)?;
    let (t0, sample_period) = check_time(&table)?;
    let h = &table.header;
    let (p_col, v_col, b_col) = (find_group(h, "p")?, find_group(h, "v")?, find_group(h, "bias")?);
    let (vo_col, vb_col) = (find_group(h, "var_ori")?, find_group(h, "var_bias")?);
    let mut q = Vec::with_capacity(table.rows.len());
    for (line, r) in &table.rows {
        let raw = Vector4::new(r[1], r[2], r[3], r[4]);
        if (raw.norm() - 1.0).abs() > 1e-6 {
            return Err(parse_err(*line, 2, format!("quaternion norm {} is not unit", raw.norm())));
        }
        q.push(UnitQuaternion::normalize(Quaternion::from_vector(raw)));
    }
    let col = |c: usize| table.rows.iter().map(|r| vec3(&r.1, c)).collect::<Vec<_>>();
    let layout = if b_col.is_some() { StateLayout::ORIENTATION_BIAS } else { StateLayout::ORIENTATION };
    let cov = match vo_col {
        Some(c) => table
            .rows
            .iter()
            .map(|r| {
                let mut m = DMatrix::zeros(layout.dim(), layout.dim());
                for i in 0..3 {
                    m[(i, i)] = r.1[c + i];
                    if let Some(b) = vb_col {
                        m[(3 + i, 3 + i)] = r.1[b + i];
                    }
                }
                m
            })
            .collect(),
        None => Vec::new(),
    };
    let trace = EstimateTrace { q, p: p_col.map(col), v: v_col.map(col), bias: b_col.map(col), cov, layout, converged: true, ..Default::default() };
    Ok(Trajectory { t0, sample_period, trace })
}

/// Ground truth in the trajectory schema; position and velocity are written
/// when `pose` is set.
pub fn save_truth(path: impl AsRef<Path>, truth: &GroundTruth, t0: f64, pose: bool) -> Result<()> {
    let trace = EstimateTrace {
        q: truth.q.clone(),
        p: pose.then(|| truth.p.clone()),
        v: pose.then(|| truth.v.clone()),
        ..EstimateTrace::from_orientations(vec![])
    };
    write_trace(File::create(path)?, &trace, t0, truth.sample_period)
}

/// Reads ground truth. Angular rate and acceleration are not stored; they
/// come back zero.
pub fn load_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let tr = read_trace(File::open(path)?)?;
    let n = tr.trace.len();
    Ok(GroundTruth {
        q: tr.trace.q,
        omega: vec![Vector3::zeros(); n],
        p: tr.trace.p.unwrap_or_else(|| vec![Vector3::zeros(); n]),
        v: tr.trace.v.unwrap_or_else(|| vec![Vector3::zeros(); n]),
        a: vec![Vector3::zeros(); n],
        sample_period: tr.sample_period,
        gyro_bias: Vector3::zeros(),
    })
}

pub fn save_trace(path: impl AsRef<Path>, trace: &EstimateTrace, t0: f64, sample_period: f64) -> Result<()> {
    write_trace(File::create(path)?, trace, t0, sample_period)
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trajectory> {
    read_trace(File::open(path)?)
}

/// Plot data flavours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Errors,
    Sigma,
    BiasConvergence,
    Allan,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "errors" => Self::Errors,
            "sigma" => Self::Sigma,
            "bias-convergence" => Self::BiasConvergence,
            "allan" => Self::Allan,
            _ => return Err(Error::InvalidConfig(format!("unknown plot kind {s}; expected errors, sigma, bias-convergence or allan"))),
        })
    }
}

fn long_format(rows: impl IntoIterator<Item = (f64, String, f64)>) -> String {
    let mut s = String::from("time,series,value\n");
    for (t, name, v) in rows {
        let _ = writeln!(s, "{t},{name},{v}");
    }
    s
}

/// Roll, pitch and heading errors in degrees, plus position error in metres
/// when present.
pub fn plot_errors(err: &ErrorTrace, t0: f64, sample_period: f64) -> String {
    let time = |k: usize| t0 + k as f64 * sample_period;
    let mut rows = Vec::with_capacity(4 * err.len());
    for (name, v) in [("roll", &err.roll), ("pitch", &err.pitch), ("heading", &err.heading)] {
        rows.extend(v.iter().enumerate().map(|(k, x)| (time(k), name.to_string(), *x)));
    }
    if let Some(p) = &err.position {
        rows.extend(p.iter().enumerate().map(|(k, x)| (time(k), "position".to_string(), *x)));
    }
    long_format(rows)
}

/// Orientation standard deviations in degrees from the covariance diagonal.
pub fn plot_sigma(trace: &EstimateTrace, t0: f64, sample_period: f64) -> Result<String> {
    if trace.cov.len() != trace.len() {
        return Err(Error::InvalidInput("trace carries no covariance".into()));
    }
    let mut rows = Vec::with_capacity(3 * trace.len());
    for (i, name) in ["sigma_x", "sigma_y", "sigma_z"].iter().enumerate() {
        for k in 0..trace.len() {
            let s = trace.orientation_sigma(k).expect("covariance present")[i].to_degrees();
            rows.push((t0 + k as f64 * sample_period, name.to_string(), s));
        }
    }
    Ok(long_format(rows))
}

/// Bias estimates with `±3σ` bands.
pub fn plot_bias_convergence(trace: &EstimateTrace, t0: f64, sample_period: f64) -> Result<String> {
    let bias = trace.bias.as_ref().ok_or_else(|| Error::InvalidInput("trace carries no bias estimate".into()))?;
    let mut rows = Vec::with_capacity(9 * trace.len());
    for (i, a) in AXES.iter().enumerate() {
        for (k, b) in bias.iter().enumerate() {
            let t = t0 + k as f64 * sample_period;
            rows.push((t, format!("bias_{a}"), b[i]));
            if let Some(c) = trace.bias_cov(k) {
                let s = 3.0 * c[(i, i)].max(0.0).sqrt();
                rows.push((t, format!("bias_{a}_lo"), b[i] - s));
                rows.push((t, format!("bias_{a}_hi"), b[i] + s));
            }
        }
    }
    Ok(long_format(rows))
}

/// Allan deviation per axis against cluster time.
pub fn plot_allan(r: &AllanResult) -> String {
    let mut rows = Vec::with_capacity(3 * r.cluster_times.len());
    for (i, a) in AXES.iter().enumerate() {
        rows.extend(r.cluster_times.iter().zip(&r.deviation).map(|(t, d)| (*t, format!("allan_{a}"), d[i])));
    }
    long_format(rows)
}
