//! Trajectory error statistics and tracker performance summaries.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::sim::TrajectoryLog;
use crate::tracker::{Mode, TrackerCommand, Waypoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trajectory is empty")]
    Empty,
    #[error("timestamps must be strictly increasing (sample {index})")]
    NonMonotonicTime { index: usize },
    #[error("no estimate sample lies within {max_dt} s of a reference sample")]
    NoAssociation { max_dt: f64 },
    #[error("alignment needs at least three associated samples")]
    AlignmentUnderdetermined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedTrajectory {
    samples: Vec<TrajectorySample>,
}

impl TimedTrajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self, MetricsError> {
        if samples.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some(i) = samples.windows(2).position(|w| !(w[1].t > w[0].t)) {
            return Err(MetricsError::NonMonotonicTime { index: i + 1 });
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Applies `p ↦ R p + t` and adds the rotation's yaw to every heading.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        let yaw = rotation[(1, 0)].atan2(rotation[(0, 0)]);
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| TrajectorySample {
                    t: s.t,
                    position: rotation * s.position + translation,
                    yaw: crate::tracker::wrap(s.yaw + yaw),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    /// `(estimate index, reference index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    /// Estimate samples with no reference within `max_dt`.
    pub unpaired: usize,
}

pub const DEFAULT_MAX_DT: f64 = 0.02;

/// Pairs each estimate sample with the nearest-in-time reference sample.
pub fn associate(
    est: &TimedTrajectory,
    reference: &TimedTrajectory,
    max_dt: f64,
) -> Result<Association, MetricsError> {
    let refs = reference.samples();
    let mut pairs = Vec::with_capacity(est.len());
    let mut unpaired = 0;
    for (i, s) in est.samples().iter().enumerate() {
        let j = refs.partition_point(|r| r.t < s.t);
        let candidates = [j.checked_sub(1), (j < refs.len()).then_some(j)];
        let best = candidates
            .into_iter()
            .flatten()
            .min_by(|&a, &b| {
                (refs[a].t - s.t)
                    .abs()
                    .total_cmp(&(refs[b].t - s.t).abs())
            });
        match best {
            Some(j) if (refs[j].t - s.t).abs() <= max_dt => pairs.push((i, j)),
            _ => unpaired += 1,
        }
    }
    if pairs.is_empty() {
        return Err(MetricsError::NoAssociation { max_dt });
    }
    Ok(Association { pairs, unpaired })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub max_abs: f64,
    pub mean: f64,
    pub rmse: f64,
    /// `(t, ex, ey, ez)` with `e = estimate − reference`.
    pub per_axis: Vec<(f64, f64, f64, f64)>,
}

/// Max, mean and RMSE of the position error norms over associated pairs.
pub fn error_stats(
    pairs: &[(usize, usize)],
    est: &TimedTrajectory,
    reference: &TimedTrajectory,
) -> ErrorReport {
    let mut per_axis = Vec::with_capacity(pairs.len());
    let mut norms = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let e = est.samples()[i].position - reference.samples()[j].position;
        per_axis.push((est.samples()[i].t, e.x, e.y, e.z));
        norms.push(e.norm());
    }
    let mut report = stats_from_norms(&norms);
    report.per_axis = per_axis;
    report
}

/// Summary statistics of a set of non-negative error magnitudes.
pub fn stats_from_norms(norms: &[f64]) -> ErrorReport {
    let n = norms.len().max(1) as f64;
    let max_abs = norms.iter().copied().fold(0.0, f64::max);
    let mean = norms.iter().sum::<f64>() / n;
    let rmse = (norms.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    ErrorReport {
        max_abs,
        mean,
        rmse,
        per_axis: Vec::new(),
    }
}

/// Rigid transform `(R, t)` minimizing `Σ‖R·est + t − ref‖²` over the pairs.
pub fn rigid_alignment(
    pairs: &[(usize, usize)],
    est: &TimedTrajectory,
    reference: &TimedTrajectory,
) -> Result<(Matrix3<f64>, Vector3<f64>), MetricsError> {
    if pairs.len() < 3 {
        return Err(MetricsError::AlignmentUnderdetermined);
    }
    let n = pairs.len() as f64;
    let (mut mu_e, mut mu_r) = (Vector3::zeros(), Vector3::zeros());
    for &(i, j) in pairs {
        mu_e += est.samples()[i].position;
        mu_r += reference.samples()[j].position;
    }
    mu_e /= n;
    mu_r /= n;
    let mut cov = Matrix3::zeros();
    for &(i, j) in pairs {
        cov += (reference.samples()[j].position - mu_r)
            * (est.samples()[i].position - mu_e).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rotation = u * s * v_t;
    Ok((rotation, mu_r - rotation * mu_e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointSummary {
    /// 1-based waypoint index.
    pub index: usize,
    pub reached: bool,
    /// Time from the end of the previous leg until this waypoint was reached
    /// (or until the log ended), s.
    pub time_to_reach: f64,
    pub final_distance: f64,
    pub final_abs_yaw_error: f64,
    pub mode_switches: usize,
}

/// Per-waypoint convergence summary extracted from the slow-loop records.
pub fn tracking_summary(log: &TrajectoryLog, waypoints: &[Waypoint]) -> Vec<WaypointSummary> {
    let mut rows = Vec::with_capacity(waypoints.len());
    let mut leg_start = log.status.first().map_or(0.0, |s| s.t);
    let mut prev_mode: Option<Mode> = None;
    let mut switches = 0;
    let mut idx = 1;
    for rec in &log.status {
        if let Some(m) = prev_mode {
            if m != rec.mode {
                switches += 1;
            }
        }
        prev_mode = Some(rec.mode);
        if rec.command == TrackerCommand::WaypointReached && idx <= waypoints.len() {
            rows.push(WaypointSummary {
                index: idx,
                reached: true,
                time_to_reach: rec.t - leg_start,
                final_distance: rec.errors.distance,
                final_abs_yaw_error: rec.errors.yaw_abs.abs(),
                mode_switches: switches,
            });
            idx += 1;
            leg_start = rec.t;
            switches = 0;
        }
    }
    let end_t = log.samples.last().map_or(leg_start, |s| s.t);
    let last_errors = log.status.last().map(|s| s.errors).unwrap_or_default();
    let mut first_unreached = true;
    while idx <= waypoints.len() {
        let (d, yaw) = if first_unreached {
            (last_errors.distance, last_errors.yaw_abs.abs())
        } else {
            (f64::NAN, f64::NAN)
        };
        rows.push(WaypointSummary {
            index: idx,
            reached: false,
            time_to_reach: end_t - leg_start,
            final_distance: d,
            final_abs_yaw_error: yaw,
            mode_switches: if first_unreached { switches } else { 0 },
        });
        first_unreached = false;
        idx += 1;
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn traj(ts: &[f64], offset: Vector3<f64>) -> TimedTrajectory {
        TimedTrajectory::new(
            ts.iter()
                .map(|&t| TrajectorySample {
                    t,
                    position: Vector3::new(t, 2.0 * t, 0.0) + offset,
                    yaw: 0.0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_grids_pair_identically() {
        let ts: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let a = traj(&ts, Vector3::zeros());
        let assoc = associate(&a, &a, DEFAULT_MAX_DT).unwrap();
        assert_eq!(assoc.unpaired, 0);
        assert!(assoc.pairs.iter().all(|&(i, j)| i == j));
    }

    #[test]
    fn nested_grids_pair_exact_times() {
        let est: Vec<f64> = (0..50).map(|i| i as f64 * 0.02).collect();
        let reference: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let e = traj(&est, Vector3::zeros());
        let r = traj(&reference, Vector3::zeros());
        let assoc = associate(&e, &r, DEFAULT_MAX_DT).unwrap();
        for &(i, j) in &assoc.pairs {
            assert_eq!(j, 2 * i);
        }
    }

    #[test]
    fn offset_beyond_max_dt_fails() {
        let e = traj(&[0.0, 1.0, 2.0], Vector3::zeros());
        let r = traj(&[0.0 + 0.0201, 1.0201, 2.0201], Vector3::zeros());
        assert_eq!(
            associate(&e, &r, 0.02),
            Err(MetricsError::NoAssociation { max_dt: 0.02 })
        );
    }

    #[test]
    fn non_monotonic_rejected() {
        let s = TrajectorySample {
            t: 1.0,
            position: Vector3::zeros(),
            yaw: 0.0,
        };
        assert!(matches!(
            TimedTrajectory::new(vec![s, s]),
            Err(MetricsError::NonMonotonicTime { index: 1 })
        ));
    }

    #[test]
    fn constant_offset_stats() {
        let ts: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let e = traj(&ts, Vector3::new(0.0, 0.05, 0.0));
        let r = traj(&ts, Vector3::zeros());
        let assoc = associate(&e, &r, DEFAULT_MAX_DT).unwrap();
        let rep = error_stats(&assoc.pairs, &e, &r);
        assert_relative_eq!(rep.max_abs, 0.05, epsilon = 1e-12);
        assert_relative_eq!(rep.mean, 0.05, epsilon = 1e-12);
        assert_relative_eq!(rep.rmse, 0.05, epsilon = 1e-12);
    }

    #[test]
    fn hand_computed_pair() {
        let rep = stats_from_norms(&[0.03, 0.04]);
        assert_relative_eq!(rep.mean, 0.035, epsilon = 1e-15);
        // (0.03² + 0.04²) / 2 = 0.00125
        assert_relative_eq!(rep.rmse, 0.00125f64.sqrt(), epsilon = 1e-12);
        assert_eq!(rep.max_abs, 0.04);
    }

    #[test]
    fn alignment_recovers_rigid_motion() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let r = TimedTrajectory::new(
            ts.iter()
                .map(|&t| TrajectorySample {
                    t,
                    position: Vector3::new(t.cos(), (2.0 * t).sin(), 0.1 * t),
                    yaw: 0.0,
                })
                .collect(),
        )
        .unwrap();
        let rot = *nalgebra::Rotation3::from_euler_angles(0.1, -0.2, 0.7).matrix();
        let e = r.transformed(&rot, &Vector3::new(0.5, -1.0, 2.0));
        let assoc = associate(&e, &r, DEFAULT_MAX_DT).unwrap();
        let (ra, ta) = rigid_alignment(&assoc.pairs, &e, &r).unwrap();
        let aligned = e.transformed(&ra, &ta);
        let rep = error_stats(&assoc.pairs, &aligned, &r);
        assert!(rep.max_abs < 1e-9);
    }
}
