//! Waypoint tracking state machine.
//!
//! Each slow-loop tick computes the distance and the blended yaw error to the
//! active waypoint, then picks an action from the FAR (`d_e > d_th`) or NEAR
//! branch depending on the locomotion mode:
//!
//! | distance | mode     | yaw error      | action                          |
//! |----------|----------|----------------|---------------------------------|
//! | FAR      | sidewind | `≤ ψ_turn`     | sidewind with steering          |
//! | FAR      | sidewind | `> ψ_turn`     | switch to turn-in-place         |
//! | FAR      | turning  | `≤ ψ_wp`       | back to sidewind                |
//! | NEAR     | sidewind | `≤ ψ_wp`       | waypoint reached                |
//! | NEAR     | sidewind | `> ψ_wp`       | turn to align heading           |
//! | NEAR     | turning  | `≤ ψ_wp`       | back to sidewind                |

use std::f64::consts::PI;
use std::fmt;

const DEG: f64 = PI / 180.0;

/// Wraps an angle to `(−π, π]`.
pub fn wrap(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let w = angle.sin().atan2(angle.cos());
    if w <= -PI {
        PI
    } else {
        w
    }
}

/// `3t² − 2t³` on `t` clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Weight of the absolute heading error as a function of distance: 1 at the
/// waypoint, a 0.5 plateau on `(0.5, 1.0]`, 0 beyond 1.5 m, smoothstep ramps
/// in between.
pub fn blend_weight(d: f64) -> f64 {
    let d = d.max(0.0);
    if d <= 0.0 {
        1.0
    } else if d <= 0.5 {
        1.0 - 0.5 * smoothstep(d / 0.5)
    } else if d <= 1.0 {
        0.5
    } else if d <= 1.5 {
        0.5 - 0.5 * smoothstep((d - 1.0) / 0.5)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw: wrap(yaw) }
    }
}

/// Planar CoM pose.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackingErrors {
    pub distance: f64,
    pub yaw_rel: f64,
    pub yaw_abs: f64,
    pub yaw: f64,
}

/// Distance below which the bearing to the waypoint is treated as zero.
pub const BEARING_DEADZONE: f64 = 0.01;

pub fn compute_errors(pose: &Pose2, wp: &Waypoint) -> TrackingErrors {
    let dx = wp.x - pose.x;
    let dy = wp.y - pose.y;
    let distance = dx.hypot(dy);
    let yaw_rel = if distance < BEARING_DEADZONE {
        0.0
    } else {
        wrap(dy.atan2(dx) - pose.yaw)
    };
    let yaw_abs = wrap(wp.yaw - pose.yaw);
    let w = blend_weight(distance);
    TrackingErrors {
        distance,
        yaw_rel,
        yaw_abs,
        yaw: wrap(w * yaw_abs + (1.0 - w) * yaw_rel),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// NEAR/FAR boundary, m.
    pub distance_threshold: f64,
    /// Yaw tolerance for completion and for leaving a turn, rad.
    pub waypoint_yaw_threshold: f64,
    /// Yaw error that triggers turn-in-place while far, rad.
    pub turn_yaw_threshold: f64,
    /// Nominal steering offset, rad.
    pub steering_offset: f64,
    pub steering_limit: f64,
    pub gain: f64,
    /// Proportional steering command that also triggers a turn, rad.
    pub turn_exit_delta: f64,
    /// Position tolerance required to declare a waypoint reached, m.
    /// Setting it to `distance_threshold` gives the bare NEAR-branch test.
    pub stop_radius: f64,
    /// Positive yaw error turns left (counter-clockwise) when set.
    pub positive_error_turns_left: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            distance_threshold: 0.35,
            waypoint_yaw_threshold: 30.0 * DEG,
            turn_yaw_threshold: 40.0 * DEG,
            steering_offset: 14.0 * DEG,
            steering_limit: 7.0 * DEG,
            gain: 1.0,
            turn_exit_delta: 20.0 * DEG,
            stop_radius: 0.2,
            positive_error_turns_left: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Sidewind,
    TurnFar,
    TurnNear,
}

impl Mode {
    pub fn is_turning(self) -> bool {
        !matches!(self, Mode::Sidewind)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sidewind => "sidewind",
            Mode::TurnFar => "turn_far",
            Mode::TurnNear => "turn_near",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sidewind" => Some(Mode::Sidewind),
            "turn_far" => Some(Mode::TurnFar),
            "turn_near" => Some(Mode::TurnNear),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackerCommand {
    SidewindWithSteering { delta: f64 },
    TurnLeft,
    TurnRight,
    WaypointReached,
    Stop,
}

impl TrackerCommand {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackerCommand::SidewindWithSteering { .. } => "sidewind",
            TrackerCommand::TurnLeft => "turn_left",
            TrackerCommand::TurnRight => "turn_right",
            TrackerCommand::WaypointReached => "waypoint_reached",
            TrackerCommand::Stop => "stop",
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            TrackerCommand::SidewindWithSteering { delta } => Some(*delta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerState {
    /// 1-based index of the active waypoint; `> N` once finished.
    pub waypoint_index: usize,
    pub mode: Mode,
    pub last_delta: f64,
    pub last_errors: TrackingErrors,
    pub last_command: TrackerCommand,
    pub finished: bool,
    pub stale: bool,
}

impl TrackerState {
    pub fn new(steering_offset: f64) -> Self {
        Self {
            waypoint_index: 1,
            mode: Mode::Sidewind,
            last_delta: steering_offset,
            last_errors: TrackingErrors::default(),
            last_command: TrackerCommand::SidewindWithSteering {
                delta: steering_offset,
            },
            finished: false,
            stale: false,
        }
    }

    pub fn at_waypoint(mut self, index: usize, mode: Mode) -> Self {
        self.waypoint_index = index;
        self.mode = mode;
        self
    }
}

/// Inputs sampled by one slow-loop tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerInput {
    pub pose: Pose2,
    /// Set when the pose source has gone stale.
    pub stale: bool,
}

impl TrackerInput {
    pub fn fresh(pose: Pose2) -> Self {
        Self { pose, stale: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

fn turn_command(side: Side, cfg: &TrackerConfig) -> TrackerCommand {
    let left = (side == Side::Left) == cfg.positive_error_turns_left;
    if left {
        TrackerCommand::TurnLeft
    } else {
        TrackerCommand::TurnRight
    }
}

fn steering_delta(yaw_error: f64, cfg: &TrackerConfig) -> f64 {
    cfg.steering_offset
        + (cfg.gain * yaw_error).clamp(-cfg.steering_limit, cfg.steering_limit)
}

/// One slow-loop decision.
pub fn tick(
    state: &TrackerState,
    input: &TrackerInput,
    waypoints: &[Waypoint],
    cfg: &TrackerConfig,
) -> (TrackerState, TrackerCommand) {
    let mut next = *state;
    next.stale = input.stale;

    if state.finished || state.waypoint_index > waypoints.len() {
        next.finished = true;
        next.last_command = TrackerCommand::Stop;
        return (next, TrackerCommand::Stop);
    }
    if input.stale {
        return (next, state.last_command);
    }

    let wp = &waypoints[state.waypoint_index - 1];
    let errors = compute_errors(&input.pose, wp);
    next.last_errors = errors;
    let psi = errors.yaw;
    let sidewind = |next: &mut TrackerState| {
        let delta = steering_delta(psi, cfg);
        next.last_delta = delta;
        TrackerCommand::SidewindWithSteering { delta }
    };
    // A turn keeps the direction it started with.
    let keep_turning = match state.last_command {
        c @ (TrackerCommand::TurnLeft | TrackerCommand::TurnRight) => c,
        _ if psi >= 0.0 => turn_command(Side::Left, cfg),
        _ => turn_command(Side::Right, cfg),
    };

    let command = if errors.distance > cfg.distance_threshold {
        match state.mode {
            Mode::Sidewind => {
                let proportional = cfg.steering_offset + cfg.gain * psi;
                if psi.abs() <= cfg.turn_yaw_threshold {
                    sidewind(&mut next)
                } else if psi > cfg.turn_yaw_threshold || proportional > cfg.turn_exit_delta {
                    next.mode = Mode::TurnFar;
                    turn_command(Side::Left, cfg)
                } else {
                    next.mode = Mode::TurnFar;
                    turn_command(Side::Right, cfg)
                }
            }
            Mode::TurnFar | Mode::TurnNear => {
                if psi.abs() <= cfg.waypoint_yaw_threshold {
                    next.mode = Mode::Sidewind;
                    sidewind(&mut next)
                } else {
                    keep_turning
                }
            }
        }
    } else {
        match state.mode {
            Mode::Sidewind => {
                if psi.abs() <= cfg.waypoint_yaw_threshold {
                    if errors.distance <= cfg.stop_radius {
                        next.waypoint_index += 1;
                        next.finished = next.waypoint_index > waypoints.len();
                        TrackerCommand::WaypointReached
                    } else {
                        sidewind(&mut next)
                    }
                } else if psi > cfg.waypoint_yaw_threshold {
                    next.mode = Mode::TurnNear;
                    turn_command(Side::Left, cfg)
                } else {
                    next.mode = Mode::TurnNear;
                    turn_command(Side::Right, cfg)
                }
            }
            Mode::TurnFar | Mode::TurnNear => {
                if psi.abs() <= cfg.waypoint_yaw_threshold {
                    next.mode = Mode::Sidewind;
                    sidewind(&mut next)
                } else {
                    keep_turning
                }
            }
        }
    };
    next.last_command = command;
    (next, command)
}
