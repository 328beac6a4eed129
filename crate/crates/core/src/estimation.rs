//! Pose feedback conditioning: a 10-sample yaw moving average that survives
//! the ±π seam, and a staleness monitor for the base pose stream.

use std::collections::VecDeque;

use thiserror::Error;

use crate::tracker::wrap;

pub const YAW_WINDOW: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("clock went backwards: {now} s after {last} s")]
    TimeRegression { now: f64, last: f64 },
}

/// Moving average over unwrapped yaw samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct YawFilter {
    window: VecDeque<f64>,
    last_unwrapped: Option<f64>,
}

impl YawFilter {
    pub fn new() -> Self {
        Self {
            window: VecDeque::with_capacity(YAW_WINDOW),
            last_unwrapped: None,
        }
    }

    /// Adds a sample and returns the filtered yaw in `(−π, π]`. Until the
    /// window fills, the available samples are averaged.
    pub fn push(&mut self, yaw: f64) -> f64 {
        let unwrapped = match self.last_unwrapped {
            None => yaw,
            Some(prev) => prev + wrap(yaw - prev),
        };
        self.last_unwrapped = Some(unwrapped);
        if self.window.len() == YAW_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back(unwrapped);
        self.output()
    }

    pub fn output(&self) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        wrap(self.window.iter().sum::<f64>() / self.window.len() as f64)
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn clear(&mut self) {
        self.window.clear();
        self.last_unwrapped = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freshness {
    Fresh,
    Warning,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosePolicy {
    UseLatest,
    WarnUseLatest,
    UseIdentity,
}

/// Warns once the last pose is `timeout` old and falls back to the identity
/// pose at twice that age.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StalenessMonitor {
    pub timeout: f64,
    last_update_time: f64,
    last_check_time: f64,
    state: Freshness,
}

impl StalenessMonitor {
    pub const DEFAULT_TIMEOUT: f64 = 0.5;

    pub fn new(timeout: f64, start_time: f64) -> Self {
        Self {
            timeout,
            last_update_time: start_time,
            last_check_time: start_time,
            state: Freshness::Fresh,
        }
    }

    pub fn state(&self) -> Freshness {
        self.state
    }

    pub fn last_update_time(&self) -> f64 {
        self.last_update_time
    }

    pub fn check(&mut self, now: f64, has_new_pose: bool) -> Result<PosePolicy, EstimationError> {
        if now < self.last_check_time {
            return Err(EstimationError::TimeRegression {
                now,
                last: self.last_check_time,
            });
        }
        self.last_check_time = now;
        if has_new_pose {
            self.last_update_time = now;
        }
        let age = now - self.last_update_time;
        let (state, policy) = if age < self.timeout {
            (Freshness::Fresh, PosePolicy::UseLatest)
        } else if age < 2.0 * self.timeout {
            (Freshness::Warning, PosePolicy::WarnUseLatest)
        } else {
            (Freshness::Fallback, PosePolicy::UseIdentity)
        };
        self.state = state;
        Ok(policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn constant_input() {
        let mut f = YawFilter::new();
        let mut out = 0.0;
        for _ in 0..10 {
            out = f.push(0.7);
        }
        assert_relative_eq!(out, 0.7, epsilon = 1e-15);
    }

    #[test]
    fn alternating_input_averages_out() {
        let mut f = YawFilter::new();
        let mut out = 1.0;
        for i in 0..20 {
            out = f.push(if i % 2 == 0 { 0.1 } else { -0.1 });
        }
        assert!(out.abs() < 1e-15);
    }

    #[test]
    fn crossing_pi_stays_near_pi() {
        let mut f = YawFilter::new();
        f.push(PI - 0.05);
        f.push(PI - 0.02);
        let out = f.push(-PI + 0.01);
        // unwrap-then-mean of the raw sequence
        let expected = ((PI - 0.05) + (PI - 0.02) + (PI + 0.01)) / 3.0;
        assert_relative_eq!(out, expected, epsilon = 1e-12);
        assert!(out > 3.0);
    }

    #[test]
    fn partial_window_uses_available_samples() {
        let mut f = YawFilter::new();
        assert_eq!(f.push(0.2), 0.2);
        assert_relative_eq!(f.push(0.4), 0.3, epsilon = 1e-15);
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn staleness_thresholds() {
        let mut m = StalenessMonitor::new(0.5, 0.0);
        assert_eq!(m.check(0.1, true).unwrap(), PosePolicy::UseLatest);
        assert_eq!(m.check(0.1 + 0.75, false).unwrap(), PosePolicy::WarnUseLatest);
        assert_eq!(m.state(), Freshness::Warning);
        assert_eq!(m.check(0.1 + 1.5, false).unwrap(), PosePolicy::UseIdentity);
        assert_eq!(m.state(), Freshness::Fallback);
        assert_eq!(m.check(1.7, true).unwrap(), PosePolicy::UseLatest);
    }

    #[test]
    fn fresh_every_tick() {
        let mut m = StalenessMonitor::new(0.5, 0.0);
        for i in 0..100 {
            assert_eq!(m.check(i as f64 * 0.01, true).unwrap(), PosePolicy::UseLatest);
        }
    }

    #[test]
    fn time_regression_is_an_error() {
        let mut m = StalenessMonitor::new(0.5, 0.0);
        m.check(1.0, true).unwrap();
        assert!(matches!(
            m.check(0.9, true),
            Err(EstimationError::TimeRegression { .. })
        ));
    }
}
