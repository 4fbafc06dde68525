//! Non-overlapping Allan deviation and its log-log slope.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllanResult {
    /// Cluster times, s, strictly increasing.
    pub cluster_times: Vec<f64>,
    /// Allan deviation per cluster time and axis.
    pub deviation: Vec<Vector3<f64>>,
    /// Least-squares slope of `log σ_A` against `log T_c` per axis.
    pub slope: Vector3<f64>,
}

/// Allan deviation of a single-axis series for clusters of `m` samples.
pub fn allan_deviation_axis(x: &[f64], m: usize) -> Result<f64> {
    let k = x.len() / m.max(1);
    if m == 0 || k < 2 {
        return Err(Error::InvalidInput(format!("{} samples cannot form two clusters of {m}", x.len())));
    }
    let means: Vec<f64> = x.chunks_exact(m).take(k).map(|c| c.iter().sum::<f64>() / m as f64).collect();
    let avar = means.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / (2.0 * (k - 1) as f64);
    Ok(avar.sqrt())
}

/// Logarithmically spaced cluster sizes between `t_min` and `t_max`
/// seconds, deduplicated after rounding to whole samples.
pub fn log_spaced_clusters(sample_period: f64, t_min: f64, t_max: f64, count: usize) -> Vec<usize> {
    let (a, b) = ((t_min / sample_period).ln(), (t_max / sample_period).ln());
    let mut out: Vec<usize> =
        (0..count.max(2)).map(|i| (a + (b - a) * i as f64 / (count.max(2) - 1) as f64).exp().round().max(1.0) as usize).collect();
    out.dedup();
    out
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Allan deviation of a 3-axis series at the given cluster sizes, with the
/// slope fitted over all of them. The slope of an axis is NaN when its
/// deviation vanishes somewhere.
pub fn allan_deviation(series: &[Vector3<f64>], sample_period: f64, clusters: &[usize]) -> Result<AllanResult> {
    if clusters.is_empty() {
        return Err(Error::InvalidInput("no cluster sizes given".into()));
    }
    if clusters.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("cluster sizes must be strictly increasing".into()));
    }
    let axes: Vec<Vec<f64>> = (0..3).map(|i| series.iter().map(|v| v[i]).collect()).collect();
    let mut deviation = Vec::with_capacity(clusters.len());
    for &m in clusters {
        deviation.push(Vector3::new(allan_deviation_axis(&axes[0], m)?, allan_deviation_axis(&axes[1], m)?, allan_deviation_axis(&axes[2], m)?));
    }
    let cluster_times: Vec<f64> = clusters.iter().map(|&m| m as f64 * sample_period).collect();
    let lt: Vec<f64> = cluster_times.iter().map(|t| t.ln()).collect();
    let s = Vector3::from_fn(|i, _| {
        let ly: Vec<f64> = deviation.iter().map(|d| d[i].ln()).collect();
        if ly.iter().all(|v| v.is_finite()) && lt.len() > 1 {
            slope(&lt, &ly)
        } else {
            f64::NAN
        }
    });
    Ok(AllanResult { cluster_times, deviation, slope: s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Vector3::from_fn(|_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng))).collect()
    }

    #[test]
    fn white_noise_deviation_is_sigma_over_root_n() {
        let x = white(200_000, 1);
        let r = allan_deviation(&x, 0.01, &[100]).unwrap();
        for i in 0..3 {
            assert!((r.deviation[0][i] / 0.1 - 1.0).abs() < 0.05, "{}", r.deviation[0][i]);
        }
    }

    #[test]
    fn constant_signal_has_zero_deviation() {
        let x = vec![Vector3::new(1.0, -2.0, 3.0); 1000];
        let r = allan_deviation(&x, 0.01, &[1, 10, 100]).unwrap();
        assert!(r.deviation.iter().all(|d| d.norm() == 0.0));
    }

    #[test]
    fn too_short_series_is_rejected() {
        let x = white(100, 2);
        assert!(allan_deviation(&x, 0.01, &[60]).is_err());
        assert!(allan_deviation(&x, 0.01, &[10, 5]).is_err());
    }

    #[test]
    fn clusters_are_log_spaced_and_increasing() {
        let c = log_spaced_clusters(0.01, 0.1, 10.0, 9);
        assert_eq!(c.first(), Some(&10));
        assert_eq!(c.last(), Some(&1000));
        assert!(c.windows(2).all(|w| w[1] > w[0]));
    }
}
