//! Trial metrics: principal-axis uncertainty, hold-phase variance, large-step
//! counts and distance–time series.

use serde::{Deserialize, Serialize};

use super::trial::TrialRecord;
use crate::error::{Error, Result};
use crate::pipeline::PipelineOutput;
use crate::vae::LatentCoord;

pub const DEFAULT_LAST_K: usize = 10;

/// Population covariance `[[sxx, sxy], [sxy, syy]]` of a point cloud.
pub fn covariance(points: &[LatentCoord]) -> [[f64; 2]; 2] {
    if points.is_empty() {
        return [[0.0; 2]; 2];
    }
    let n = points.len() as f64;
    // centered on the first point so constant coordinates give exact zeros
    let o = points[0];
    let mx = points.iter().map(|p| p.x - o.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y - o.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - o.x - mx, p.y - o.y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    [[sxx / n, sxy / n], [sxy / n, syy / n]]
}

/// Eigenvalues `(λ₁, λ₂)`, `λ₁ ≥ λ₂ ≥ 0`, of the population covariance.
pub fn principal_variances(points: &[LatentCoord]) -> (f64, f64) {
    let [[a, b], [_, c]] = covariance(points);
    let half_trace = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let l1 = half_trace + radius;
    // the smaller root is recovered from the determinant to avoid cancellation
    let det = a * c - b * b;
    let l2 = if l1 > 0.0 { (det / l1).max(0.0) } else { 0.0 };
    (l1.max(0.0), l2.min(l1.max(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uncertainty {
    pub upa: f64,
    pub usa: f64,
    /// Records that contributed.
    pub records: usize,
}

/// Mean principal and secondary variance of the last `last_k` smooth points per record.
pub fn compute_upa_usa(records: &[TrialRecord], last_k: usize) -> Result<Uncertainty> {
    let mut sum = (0.0, 0.0);
    let mut used = 0;
    for (i, r) in records.iter().enumerate() {
        if r.frames.len() < last_k || last_k == 0 {
            log::warn!("record {i} has {} frames (< {last_k}); skipped", r.frames.len());
            continue;
        }
        let tail: Vec<LatentCoord> = r.frames[r.frames.len() - last_k..].iter().map(|o| o.smooth).collect();
        let (l1, l2) = principal_variances(&tail);
        sum.0 += l1;
        sum.1 += l2;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Input("no record has enough frames".into()));
    }
    Ok(Uncertainty {
        upa: sum.0 / used as f64,
        usa: sum.1 / used as f64,
        records: used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Raw,
    Stable,
    Smooth,
}

impl Stream {
    pub fn pick(&self, o: &PipelineOutput) -> LatentCoord {
        match self {
            Stream::Raw => o.raw,
            Stream::Stable => o.stable,
            Stream::Smooth => o.smooth,
        }
    }
}

/// Total variance (covariance trace) of one stream over the hold phase.
pub fn hold_variance(record: &TrialRecord, stream: Stream) -> f64 {
    let pts: Vec<LatentCoord> = record.hold_frames().iter().map(|o| stream.pick(o)).collect();
    let [[a, _], [_, c]] = covariance(&pts);
    a + c
}

/// Number of consecutive-frame steps longer than `threshold` in one stream.
pub fn count_large_steps(record: &TrialRecord, stream: Stream, threshold: f64) -> usize {
    record
        .frames
        .windows(2)
        .filter(|w| stream.pick(&w[0]).distance(&stream.pick(&w[1])) > threshold)
        .count()
}

/// Smooth-pointer distance to the target sampled every 0.1 s, starting at 0.
pub fn distance_series(record: &TrialRecord) -> Vec<f64> {
    let n = record.frames.len();
    if n == 0 {
        return Vec::new();
    }
    let duration_ds = ((n - 1) as f64 / record.frame_rate_hz * 10.0).floor() as usize;
    (0..=duration_ds)
        .map(|k| {
            let idx = ((k as f64 / 10.0) * record.frame_rate_hz).round() as usize;
            record.frames[idx.min(n - 1)].smooth.distance(&record.target)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix2, SymmetricEigen};
    use proptest::prelude::*;

    fn oracle(points: &[LatentCoord]) -> (f64, f64) {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
        let my = points.iter().map(|p| p.y).sum::<f64>() / n;
        let mut m = Matrix2::zeros();
        for p in points {
            let d = nalgebra::Vector2::new(p.x - mx, p.y - my);
            m += d * d.transpose() / n;
        }
        let e = SymmetricEigen::new(m).eigenvalues;
        (e.max(), e.min().max(0.0))
    }

    #[test]
    fn identical_points_have_no_uncertainty() {
        let pts = vec![LatentCoord::new(0.3, 0.7); 10];
        assert_eq!(principal_variances(&pts), (0.0, 0.0));
    }

    #[test]
    fn horizontal_segment_is_rank_one() {
        let pts: Vec<_> = (0..10).map(|i| LatentCoord::new(0.1 * i as f64, 0.4)).collect();
        let mean = 0.45;
        let v = pts.iter().map(|p| (p.x - mean).powi(2)).sum::<f64>() / 10.0;
        let (l1, l2) = principal_variances(&pts);
        assert!((l1 - v).abs() < 1e-12);
        assert_eq!(l2, 0.0);
    }

    proptest! {
        #[test]
        fn matches_eigen_oracle(raw in proptest::collection::vec((-1.0f64..2.0, -1.0f64..2.0), 2..40)) {
            let pts: Vec<_> = raw.iter().map(|&(x, y)| LatentCoord::new(x, y)).collect();
            let (l1, l2) = principal_variances(&pts);
            let (o1, o2) = oracle(&pts);
            prop_assert!((l1 - o1).abs() < 1e-9 && (l2 - o2).abs() < 1e-9);
            prop_assert!(l1 >= l2 && l2 >= 0.0);
        }
    }
}
