//! Amplitude-modulation steering: an anterior-to-posterior gradient on the
//! horizontal (yawing) joint amplitudes turns the sidewinding gait.

use thiserror::Error;

use crate::cpg::{JointVector, YAW_JOINTS};

const DEG: f64 = std::f64::consts::PI / 180.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteeringError {
    #[error("postural length must be positive (got {0})")]
    NonPositivePosturalLength(f64),
}

/// How corrected amplitudes are saturated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplitudeClamp {
    /// `clamp(a, −limit, +limit)`, as used by the closed-loop tracker.
    Symmetric(f64),
    /// Actuator range `[min, max]`.
    Range { min: f64, max: f64 },
}

impl AmplitudeClamp {
    pub fn apply(&self, a: f64) -> f64 {
        match *self {
            AmplitudeClamp::Symmetric(limit) => a.clamp(-limit, limit),
            AmplitudeClamp::Range { min, max } => a.clamp(min, max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringConfig {
    /// Weights for J2, J4, J6, J8, J10 (anterior to posterior).
    pub alpha: [f64; 5],
    /// Per-joint additive drift compensation, rad.
    pub delta_offset: f64,
    /// Bound on the raw steering correction, rad.
    pub delta_limit: f64,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    /// Magnitude bound used by the symmetric clamp, rad.
    pub symmetric_clamp: f64,
    pub clamp: AmplitudeClamp,
    /// Turning gain, rad/s per rad of correction times meters.
    pub k_turn: f64,
    /// Characteristic lateral extent of the gait, m.
    pub postural_length: f64,
    /// Drift calibration gain, s.
    pub k_bias: f64,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        Self {
            alpha: [2.0, 1.0, 0.0, -1.0, -2.0],
            delta_offset: 0.0,
            delta_limit: 7.0 * DEG,
            amplitude_min: 5.0 * DEG,
            amplitude_max: 50.0 * DEG,
            symmetric_clamp: 70.0 * DEG,
            clamp: AmplitudeClamp::Symmetric(70.0 * DEG),
            k_turn: 0.3,
            postural_length: 0.5,
            k_bias: 2.0,
        }
    }
}

impl SteeringConfig {
    /// The actuator-range variant: `[5°, 50°]` amplitude bounds and a 15°
    /// correction limit.
    pub fn actuator_limits() -> Self {
        let base = Self::default();
        Self {
            delta_limit: 15.0 * DEG,
            clamp: AmplitudeClamp::Range {
                min: base.amplitude_min,
                max: base.amplitude_max,
            },
            ..base
        }
    }
}

/// Applies `a_i + α_i·δ + δ_offset` to the yawing joints and saturates them.
/// Pitching joints pass through untouched.
pub fn modify_amplitudes(a_nominal: &JointVector, delta: f64, cfg: &SteeringConfig) -> JointVector {
    let mut out = *a_nominal;
    for (&joint, &weight) in YAW_JOINTS.iter().zip(&cfg.alpha) {
        out[joint] = cfg
            .clamp
            .apply(a_nominal[joint] + weight * delta + cfg.delta_offset);
    }
    out
}

pub fn clamp_steering(delta_raw: f64, cfg: &SteeringConfig) -> f64 {
    delta_raw.clamp(-cfg.delta_limit, cfg.delta_limit)
}

/// Small-correction yaw rate `k_turn·δ / L_postural`.
pub fn turning_rate(delta: f64, cfg: &SteeringConfig) -> Result<f64, SteeringError> {
    if !(cfg.postural_length > 0.0) {
        return Err(SteeringError::NonPositivePosturalLength(cfg.postural_length));
    }
    Ok(cfg.k_turn * delta / cfg.postural_length)
}

/// Feedforward offset cancelling a measured mean drift rate.
pub fn bias_from_drift(mean_drift_rate: f64, cfg: &SteeringConfig) -> f64 {
    -cfg.k_bias * mean_drift_rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn nominal(yaw_deg: f64) -> JointVector {
        JointVector::from_fn(|i, _| if i % 2 == 1 { yaw_deg * DEG } else { 15.0 * DEG })
    }

    #[test]
    fn zero_correction_is_identity() {
        let a = nominal(45.0);
        assert_eq!(modify_amplitudes(&a, 0.0, &SteeringConfig::default()), a);
    }

    #[test]
    fn five_degree_gradient() {
        let out = modify_amplitudes(&nominal(45.0), 5.0 * DEG, &SteeringConfig::default());
        let expected = [55.0, 50.0, 45.0, 40.0, 35.0];
        for (&j, &e) in YAW_JOINTS.iter().zip(&expected) {
            assert_relative_eq!(out[j] / DEG, e, epsilon = 1e-12);
        }
        for j in [0, 2, 4, 6, 8, 10] {
            assert_eq!(out[j], 15.0 * DEG);
        }
    }

    #[test]
    fn front_joint_saturates_at_seventy() {
        let mut a = nominal(45.0);
        a[1] = 65.0 * DEG;
        let out = modify_amplitudes(&a, 5.0 * DEG, &SteeringConfig::default());
        assert_relative_eq!(out[1], 70.0 * DEG, epsilon = 1e-15);
    }

    #[test]
    fn actuator_range_clamp() {
        let cfg = SteeringConfig::actuator_limits();
        let out = modify_amplitudes(&nominal(45.0), 10.0 * DEG, &cfg);
        assert_relative_eq!(out[1], 50.0 * DEG);
        assert_relative_eq!(out[9], 25.0 * DEG);
        let out = modify_amplitudes(&nominal(10.0), 10.0 * DEG, &cfg);
        assert_relative_eq!(out[9], 5.0 * DEG);
    }

    #[test]
    fn delta_offset_added_to_horizontal_joints_only() {
        let cfg = SteeringConfig {
            delta_offset: 0.02,
            ..SteeringConfig::default()
        };
        let a = nominal(30.0);
        let out = modify_amplitudes(&a, 0.0, &cfg);
        for i in 0..11 {
            let expected = if i % 2 == 1 { a[i] + 0.02 } else { a[i] };
            assert_relative_eq!(out[i], expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn steering_clamp() {
        let cfg = SteeringConfig::default();
        assert_eq!(clamp_steering(0.0, &cfg), 0.0);
        assert_relative_eq!(clamp_steering(30.0 * DEG, &cfg), 7.0 * DEG);
        assert_relative_eq!(clamp_steering(-30.0 * DEG, &cfg), -7.0 * DEG);
        assert_eq!(clamp_steering(-0.05, &cfg), -0.05);
    }

    #[test]
    fn turning_rate_formula() {
        let cfg = SteeringConfig::default();
        assert_eq!(turning_rate(0.0, &cfg).unwrap(), 0.0);
        assert_relative_eq!(turning_rate(0.1, &cfg).unwrap(), 0.06, epsilon = 1e-15);
        assert_relative_eq!(
            turning_rate(0.2, &cfg).unwrap(),
            2.0 * turning_rate(0.1, &cfg).unwrap(),
            epsilon = 1e-15
        );
        let bad = SteeringConfig {
            postural_length: 0.0,
            ..cfg
        };
        assert!(turning_rate(0.1, &bad).is_err());
    }

    #[test]
    fn drift_bias() {
        let cfg = SteeringConfig::default();
        assert_eq!(bias_from_drift(0.0, &cfg), -0.0);
        assert_relative_eq!(bias_from_drift(0.01, &cfg), -0.02, epsilon = 1e-15);
        assert_eq!(bias_from_drift(-0.013, &cfg), -bias_from_drift(0.013, &cfg));
    }
}
