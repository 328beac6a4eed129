//! Scenario files: TOML key-value sections with human-entered angles in
//! degrees (`*_deg` keys). Unknown and duplicate keys are rejected and every
//! error carries the offending line when one can be located.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cpg::{GaitParams, GaitPresetConfig, JointVector};
use crate::kinematics::NUM_JOINTS;
use crate::sim::{DisturbanceEvent, DisturbanceKind, GaitSet, Scenario};
use crate::steering::AmplitudeClamp;
use crate::tracker::{Pose2, Waypoint};

const DEG: f64 = std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    duration: Option<f64>,
    seed: Option<u64>,
    output_dir: Option<String>,
    waypoints: Vec<[f64; 3]>,
    start: Option<RawStart>,
    tracker: Option<RawTracker>,
    plant: Option<RawPlant>,
    steering: Option<RawSteering>,
    cpg: Option<RawCpg>,
    gaits: Option<RawGaits>,
    #[serde(default)]
    disturbances: Vec<RawDisturbance>,
    batch: Option<RawBatch>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStart {
    x: Option<f64>,
    y: Option<f64>,
    yaw_deg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTracker {
    d_th: Option<f64>,
    psi_th_wp_deg: Option<f64>,
    psi_th_turn_deg: Option<f64>,
    delta0_deg: Option<f64>,
    delta_lim_deg: Option<f64>,
    k_p: Option<f64>,
    turn_exit_delta_deg: Option<f64>,
    stop_radius: Option<f64>,
    positive_error_turns_left: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    v_sidewind: Option<f64>,
    crab_angle_deg: Option<f64>,
    turn_rate_deg: Option<f64>,
    k_turn: Option<f64>,
    postural_length: Option<f64>,
    drift_rate_deg: Option<f64>,
    position_noise_std: Option<f64>,
    yaw_noise_std_deg: Option<f64>,
    drift_compensation: Option<bool>,
    staleness_timeout: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSteering {
    alpha: Option<[f64; 5]>,
    delta_offset_deg: Option<f64>,
    clamp: Option<String>,
    clamp_deg: Option<f64>,
    amplitude_min_deg: Option<f64>,
    amplitude_max_deg: Option<f64>,
    k_bias: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCpg {
    coupling: Option<f64>,
    amplitude_rate: Option<f64>,
    dt: Option<f64>,
    bias_slew_time: Option<f64>,
    slow_period_ticks: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGaits {
    frequency_hz: Option<f64>,
    pitch_amplitude_deg: Option<f64>,
    yaw_amplitude_deg: Option<f64>,
    turn_pitch_amplitude_deg: Option<f64>,
    turn_yaw_amplitude_deg: Option<f64>,
    phase_gradient_deg: Option<f64>,
    plane_offset_deg: Option<f64>,
    sidewind: Option<RawGait>,
    turn_left: Option<RawGait>,
    turn_right: Option<RawGait>,
}

/// Explicit per-joint gait vectors.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGait {
    frequency_hz: [f64; NUM_JOINTS],
    phase_deg: [f64; NUM_JOINTS],
    amplitude_deg: [f64; NUM_JOINTS],
    bias_deg: Option<[f64; NUM_JOINTS]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisturbance {
    time: f64,
    jump: Option<[f64; 2]>,
    twist_deg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBatch {
    inner_radius: Option<f64>,
    outer_radius: Option<f64>,
    arc_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchConfig {
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Width of the arc of start bearings behind the first waypoint, rad.
    pub arc: f64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            inner_radius: 1.5,
            outer_radius: 2.4,
            arc: 40.0 * DEG,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub batch: BatchConfig,
}

pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse(&src)
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// First line that assigns `key` inside `section` (or at top level).
fn line_of_key(src: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            current = Some(name);
            continue;
        }
        let in_section = match (section, &current) {
            (None, None) => true,
            (Some(s), Some(c)) => s == c,
            _ => false,
        };
        if in_section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Validator<'a> {
    src: &'a str,
}

impl Validator<'_> {
    fn err(&self, section: Option<&str>, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: line_of_key(self.src, section, key),
            message: message.into(),
        }
    }

    fn positive(&self, section: Option<&str>, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(section, key, format!("`{key}` must be positive, got {v}")))
        }
    }

    fn non_negative(&self, section: Option<&str>, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(section, key, format!("`{key}` must be non-negative, got {v}")))
        }
    }
}

pub fn parse(src: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of_offset(src, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let v = Validator { src };

    if raw.waypoints.is_empty() {
        return Err(v.err(None, "waypoints", "at least one waypoint is required"));
    }
    let waypoints: Vec<Waypoint> = raw
        .waypoints
        .iter()
        .map(|w| Waypoint::new(w[0], w[1], w[2] * DEG))
        .collect();

    let start = raw.start.unwrap_or_default();
    let start = Pose2::new(
        start.x.unwrap_or(0.0),
        start.y.unwrap_or(0.0),
        crate::tracker::wrap(start.yaw_deg.unwrap_or(0.0) * DEG),
    );

    let mut scenario = Scenario::new(waypoints, start);
    let seed = raw.seed.unwrap_or(0);
    scenario.plant.seed = seed;
    if let Some(d) = raw.duration {
        scenario.duration = v.positive(None, "duration", d)?;
    }

    let sec = Some("tracker");
    if let Some(t) = raw.tracker {
        let c = &mut scenario.tracker;
        if let Some(x) = t.d_th {
            c.distance_threshold = v.positive(sec, "d_th", x)?;
        }
        if let Some(x) = t.psi_th_wp_deg {
            c.waypoint_yaw_threshold = v.positive(sec, "psi_th_wp_deg", x)? * DEG;
        }
        if let Some(x) = t.psi_th_turn_deg {
            c.turn_yaw_threshold = v.positive(sec, "psi_th_turn_deg", x)? * DEG;
        }
        if let Some(x) = t.delta0_deg {
            c.steering_offset = x * DEG;
        }
        if let Some(x) = t.delta_lim_deg {
            c.steering_limit = v.non_negative(sec, "delta_lim_deg", x)? * DEG;
        }
        if let Some(x) = t.k_p {
            c.gain = v.non_negative(sec, "k_p", x)?;
        }
        if let Some(x) = t.turn_exit_delta_deg {
            c.turn_exit_delta = x * DEG;
        }
        if let Some(x) = t.stop_radius {
            c.stop_radius = v.positive(sec, "stop_radius", x)?;
        }
        if let Some(x) = t.positive_error_turns_left {
            c.positive_error_turns_left = x;
        }
        if c.waypoint_yaw_threshold > c.turn_yaw_threshold {
            return Err(v.err(
                sec,
                "psi_th_wp_deg",
                "waypoint yaw threshold must not exceed the turn threshold",
            ));
        }
    }
    scenario.plant.steering_offset = scenario.tracker.steering_offset;

    let sec = Some("plant");
    if let Some(p) = raw.plant {
        let c = &mut scenario.plant;
        if let Some(x) = p.v_sidewind {
            c.v_sidewind = v.non_negative(sec, "v_sidewind", x)?;
        }
        if let Some(x) = p.crab_angle_deg {
            c.crab_angle = x * DEG;
        }
        if let Some(x) = p.turn_rate_deg {
            c.turn_rate = v.non_negative(sec, "turn_rate_deg", x)? * DEG;
        }
        if let Some(x) = p.k_turn {
            c.k_turn = x;
        }
        if let Some(x) = p.postural_length {
            c.postural_length = v.positive(sec, "postural_length", x)?;
        }
        if let Some(x) = p.drift_rate_deg {
            c.drift_rate = x * DEG;
        }
        if let Some(x) = p.position_noise_std {
            c.position_noise_std = v.non_negative(sec, "position_noise_std", x)?;
        }
        if let Some(x) = p.yaw_noise_std_deg {
            c.yaw_noise_std = v.non_negative(sec, "yaw_noise_std_deg", x)? * DEG;
        }
        if let Some(x) = p.drift_compensation {
            scenario.drift_compensation = x;
        }
        if let Some(x) = p.staleness_timeout {
            scenario.staleness_timeout = v.positive(sec, "staleness_timeout", x)?;
        }
    }
    scenario.steering.k_turn = scenario.plant.k_turn;
    scenario.steering.postural_length = scenario.plant.postural_length;
    scenario.steering.delta_limit = scenario.tracker.steering_limit;

    let sec = Some("steering");
    if let Some(s) = raw.steering {
        let c = &mut scenario.steering;
        if let Some(a) = s.alpha {
            c.alpha = a;
        }
        if let Some(x) = s.delta_offset_deg {
            c.delta_offset = x * DEG;
        }
        if let Some(x) = s.amplitude_min_deg {
            c.amplitude_min = x * DEG;
        }
        if let Some(x) = s.amplitude_max_deg {
            c.amplitude_max = x * DEG;
        }
        if let Some(x) = s.clamp_deg {
            c.symmetric_clamp = v.positive(sec, "clamp_deg", x)? * DEG;
        }
        if let Some(x) = s.k_bias {
            c.k_bias = x;
        }
        c.clamp = match s.clamp.as_deref() {
            None | Some("symmetric") => AmplitudeClamp::Symmetric(c.symmetric_clamp),
            Some("range") => {
                if c.amplitude_min > c.amplitude_max {
                    return Err(v.err(sec, "amplitude_min_deg", "amplitude_min exceeds amplitude_max"));
                }
                AmplitudeClamp::Range {
                    min: c.amplitude_min,
                    max: c.amplitude_max,
                }
            }
            Some(other) => {
                return Err(v.err(
                    sec,
                    "clamp",
                    format!("unknown clamp `{other}` (expected `symmetric` or `range`)"),
                ))
            }
        };
    }

    let sec = Some("cpg");
    if let Some(c) = raw.cpg {
        let cfg = &mut scenario.cpg;
        if let Some(x) = c.coupling {
            cfg.coupling = v.positive(sec, "coupling", x)?;
        }
        if let Some(x) = c.amplitude_rate {
            cfg.amplitude_rate = v.positive(sec, "amplitude_rate", x)?;
        }
        if let Some(x) = c.dt {
            if !(x > 0.0 && x <= 0.01) {
                return Err(v.err(sec, "dt", format!("`dt` must lie in (0, 0.01], got {x}")));
            }
            cfg.dt = x;
        }
        if let Some(x) = c.bias_slew_time {
            cfg.bias_slew_time = v.non_negative(sec, "bias_slew_time", x)?;
        }
        if let Some(x) = c.slow_period_ticks {
            if x == 0 {
                return Err(v.err(sec, "slow_period_ticks", "`slow_period_ticks` must be at least 1"));
            }
            scenario.slow_period_ticks = x;
        }
    }

    if let Some(g) = raw.gaits {
        scenario.gaits = build_gaits(&v, g)?;
    }

    for (i, d) in raw.disturbances.iter().enumerate() {
        let kind = match (d.jump, d.twist_deg) {
            (Some([dx, dy]), None) => DisturbanceKind::PositionJump { dx, dy },
            (None, Some(a)) => DisturbanceKind::YawTwist(a * DEG),
            _ => {
                return Err(ConfigError {
                    line: nth_table_line(src, "disturbances", i),
                    message: "each disturbance needs exactly one of `jump` or `twist_deg`".into(),
                })
            }
        };
        if !(d.time >= 0.0) {
            return Err(ConfigError {
                line: nth_table_line(src, "disturbances", i),
                message: format!("disturbance time must be non-negative, got {}", d.time),
            });
        }
        scenario.disturbances.push(DisturbanceEvent { time: d.time, kind });
    }

    let mut batch = BatchConfig::default();
    if let Some(b) = raw.batch {
        if let Some(x) = b.inner_radius {
            batch.inner_radius = v.positive(Some("batch"), "inner_radius", x)?;
        }
        if let Some(x) = b.outer_radius {
            batch.outer_radius = v.positive(Some("batch"), "outer_radius", x)?;
        }
        if let Some(x) = b.arc_deg {
            if !(x > 0.0 && x <= 360.0) {
                return Err(v.err(Some("batch"), "arc_deg", format!("must lie in (0, 360], got {x}")));
            }
            batch.arc = x * DEG;
        }
    }

    Ok(ScenarioConfig {
        scenario,
        seed,
        output_dir: PathBuf::from(raw.output_dir.unwrap_or_else(|| "out".to_string())),
        batch,
    })
}

fn nth_table_line(src: &str, name: &str, n: usize) -> Option<usize> {
    let header = format!("[[{name}]]");
    src.lines()
        .enumerate()
        .filter(|(_, l)| l.trim() == header)
        .nth(n)
        .map(|(i, _)| i + 1)
}

fn build_gaits(v: &Validator<'_>, g: RawGaits) -> Result<GaitSet, ConfigError> {
    let sec = Some("gaits");
    let mut p = GaitPresetConfig::default();
    if let Some(x) = g.frequency_hz {
        p.frequency = v.positive(sec, "frequency_hz", x)? * 2.0 * std::f64::consts::PI;
    }
    for (value, key, slot) in [
        (g.pitch_amplitude_deg, "pitch_amplitude_deg", &mut p.pitch_amplitude),
        (g.yaw_amplitude_deg, "yaw_amplitude_deg", &mut p.yaw_amplitude),
        (g.turn_pitch_amplitude_deg, "turn_pitch_amplitude_deg", &mut p.turn_pitch_amplitude),
        (g.turn_yaw_amplitude_deg, "turn_yaw_amplitude_deg", &mut p.turn_yaw_amplitude),
    ] {
        if let Some(x) = value {
            *slot = v.non_negative(sec, key, x)? * DEG;
        }
    }
    if let Some(x) = g.phase_gradient_deg {
        p.phase_gradient = x * DEG;
    }
    if let Some(x) = g.plane_offset_deg {
        p.plane_offset = x * DEG;
    }
    let preset_err = |e: crate::cpg::CpgError| v.err(sec, "yaw_amplitude_deg", e.to_string());
    let mut set = GaitSet::from_presets(&p).map_err(preset_err)?;
    for (name, raw, slot) in [
        ("sidewind", g.sidewind, &mut set.sidewind),
        ("turn_left", g.turn_left, &mut set.turn_left),
        ("turn_right", g.turn_right, &mut set.turn_right),
    ] {
        if let Some(r) = raw {
            let section = format!("gaits.{name}");
            let to_vec = |a: [f64; NUM_JOINTS], scale: f64| JointVector::from_fn(|i, _| a[i] * scale);
            *slot = GaitParams::new(
                name,
                to_vec(r.frequency_hz, 2.0 * std::f64::consts::PI),
                to_vec(r.phase_deg, DEG),
                to_vec(r.amplitude_deg, DEG),
                to_vec(r.bias_deg.unwrap_or([0.0; NUM_JOINTS]), DEG),
            )
            .map_err(|e| v.err(Some(&section), "amplitude_deg", e.to_string()))?;
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse("waypoints = [[2.0, 0.0, 90.0]]\n").unwrap();
        assert_eq!(cfg.scenario.waypoints.len(), 1);
        assert_relative_eq!(cfg.scenario.waypoints[0].yaw, std::f64::consts::FRAC_PI_2);
        assert_eq!(cfg.scenario.tracker, crate::tracker::TrackerConfig::default());
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn degrees_converted() {
        let cfg = parse(
            "waypoints = [[0, 0, 0]]\n[tracker]\npsi_th_wp_deg = 20.0\ndelta0_deg = 10\n[plant]\nturn_rate_deg = 18\n",
        )
        .unwrap();
        assert_relative_eq!(cfg.scenario.tracker.waypoint_yaw_threshold, 20.0 * DEG);
        assert_relative_eq!(cfg.scenario.plant.steering_offset, 10.0 * DEG);
        assert_relative_eq!(cfg.scenario.plant.turn_rate, 18.0 * DEG);
    }

    #[test]
    fn duplicate_key_is_line_anchored() {
        let err = parse("waypoints = [[0, 0, 0]]\n[tracker]\nd_th = 0.3\nd_th = 0.4\n").unwrap_err();
        assert_eq!(err.line, Some(4));
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse("waypoints = [[0, 0, 0]]\n\n[plant]\nspeed = 1.0\n").unwrap_err();
        assert!(err.message.contains("speed"), "{}", err.message);
        assert_eq!(err.line, Some(4));
    }

    #[test]
    fn semantic_error_points_at_key() {
        let err = parse("waypoints = [[0, 0, 0]]\n[cpg]\ndt = 0.05\n").unwrap_err();
        assert_eq!(err.line, Some(3));
    }

    #[test]
    fn disturbance_needs_one_kind() {
        let err = parse("waypoints = [[0, 0, 0]]\n[[disturbances]]\ntime = 3.0\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        let ok = parse(
            "waypoints = [[0, 0, 0]]\n[[disturbances]]\ntime = 3.0\ntwist_deg = 90\n[[disturbances]]\ntime = 4.0\njump = [1.0, 0.0]\n",
        )
        .unwrap();
        assert_eq!(ok.scenario.disturbances.len(), 2);
    }

    #[test]
    fn explicit_gait_vectors() {
        let src = "waypoints = [[0, 0, 0]]\n[gaits.turn_left]\nfrequency_hz = [0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5]\nphase_deg = [0,10,20,30,40,50,60,70,80,90,100]\namplitude_deg = [10,20,10,20,10,20,10,20,10,20,10]\n";
        let cfg = parse(src).unwrap();
        assert_relative_eq!(cfg.scenario.gaits.turn_left.amplitude[1], 20.0 * DEG);
        assert_relative_eq!(cfg.scenario.gaits.turn_left.phase_offsets()[0], 10.0 * DEG);
    }
}
