//! Surrogate planar plant and the dual-rate closed-loop runner.
//!
//! The plant is a kinematic unicycle standing in for the robot's CoM: while
//! sidewinding it travels at `v_sidewind` along `ψ + crab_angle` and yaws at
//! `k_turn·(δ − δ₀)/L_postural + drift`; turn-in-place gaits rotate at
//! `±turn_rate` without translating.
//!
//! The fast loop (CPG, yaw filter, plant) runs every `dt`; the slow loop
//! (tracker) runs after every `slow_period_ticks`-th fast tick.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

use crate::cpg::{Cpg, CpgConfig, CpgError, GaitParams, GaitPresetConfig, JointVector};
use crate::estimation::{EstimationError, PosePolicy, StalenessMonitor, YawFilter};
use crate::steering::{bias_from_drift, modify_amplitudes, SteeringConfig};
use crate::tracker::{
    self, wrap, Mode, Pose2, TrackerCommand, TrackerConfig, TrackerInput, TrackerState,
    TrackingErrors, Waypoint,
};

const DEG: f64 = PI / 180.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Cpg(#[from] CpgError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    /// CoM speed while sidewinding, m/s.
    pub v_sidewind: f64,
    /// Angle between heading and direction of travel, rad.
    pub crab_angle: f64,
    /// Turn-in-place yaw rate, rad/s.
    pub turn_rate: f64,
    pub k_turn: f64,
    pub postural_length: f64,
    /// Correction that produces straight travel, rad.
    pub steering_offset: f64,
    /// Systematic yaw drift while sidewinding, rad/s.
    pub drift_rate: f64,
    pub position_noise_std: f64,
    pub yaw_noise_std: f64,
    pub seed: u64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            v_sidewind: 0.1,
            crab_angle: 0.0,
            turn_rate: 0.25,
            k_turn: 0.3,
            postural_length: 0.5,
            steering_offset: 14.0 * DEG,
            drift_rate: 0.0,
            position_noise_std: 0.0,
            yaw_noise_std: 0.0,
            seed: 0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidScenario(m.to_string()));
        if !(self.v_sidewind >= 0.0) {
            return bad("v_sidewind must be non-negative");
        }
        if !(self.postural_length > 0.0) {
            return bad("postural_length must be positive");
        }
        if !(self.turn_rate >= 0.0) {
            return bad("turn_rate must be non-negative");
        }
        if !(self.position_noise_std >= 0.0 && self.yaw_noise_std >= 0.0) {
            return bad("noise standard deviations must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub pose: Pose2,
    pub time: f64,
}

/// Yaw rate and speed commanded by a tracker command.
fn plant_rates(cmd: &TrackerCommand, params: &PlantParams) -> (f64, f64) {
    match *cmd {
        TrackerCommand::SidewindWithSteering { delta } => (
            params.k_turn * (delta - params.steering_offset) / params.postural_length
                + params.drift_rate,
            params.v_sidewind,
        ),
        TrackerCommand::TurnLeft => (params.turn_rate, 0.0),
        TrackerCommand::TurnRight => (-params.turn_rate, 0.0),
        TrackerCommand::WaypointReached | TrackerCommand::Stop => (0.0, 0.0),
    }
}

/// Integrates the unicycle exactly over `dt` for a constant command.
pub fn plant_step(
    state: &PlantState,
    cmd: &TrackerCommand,
    params: &PlantParams,
    dt: f64,
) -> PlantState {
    let (omega, v) = plant_rates(cmd, params);
    let Pose2 { x, y, yaw } = state.pose;
    let travel = yaw + params.crab_angle;
    let (dx, dy) = if v == 0.0 {
        (0.0, 0.0)
    } else if omega.abs() < 1e-12 {
        (v * dt * travel.cos(), v * dt * travel.sin())
    } else {
        let r = v / omega;
        let end = travel + omega * dt;
        (r * (end.sin() - travel.sin()), r * (travel.cos() - end.cos()))
    };
    PlantState {
        pose: Pose2::new(x + dx, y + dy, wrap(yaw + omega * dt)),
        time: state.time + dt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DisturbanceKind {
    PositionJump { dx: f64, dy: f64 },
    YawTwist(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceEvent {
    pub time: f64,
    pub kind: DisturbanceKind,
}

impl DisturbanceEvent {
    pub fn apply(&self, pose: &Pose2) -> Pose2 {
        match self.kind {
            DisturbanceKind::PositionJump { dx, dy } => Pose2::new(pose.x + dx, pose.y + dy, pose.yaw),
            DisturbanceKind::YawTwist(angle) => Pose2::new(pose.x, pose.y, wrap(pose.yaw + angle)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaitSet {
    pub sidewind: GaitParams,
    pub turn_left: GaitParams,
    pub turn_right: GaitParams,
}

impl GaitSet {
    pub fn from_presets(presets: &GaitPresetConfig) -> Result<Self, CpgError> {
        Ok(Self {
            sidewind: presets.sidewinding()?,
            turn_left: presets.turn_left()?,
            turn_right: presets.turn_right()?,
        })
    }
}

impl Default for GaitSet {
    fn default() -> Self {
        Self::from_presets(&GaitPresetConfig::default()).expect("default presets are valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub waypoints: Vec<Waypoint>,
    pub start: Pose2,
    pub tracker: TrackerConfig,
    pub plant: PlantParams,
    pub steering: SteeringConfig,
    pub cpg: CpgConfig,
    pub gaits: GaitSet,
    pub disturbances: Vec<DisturbanceEvent>,
    pub duration: f64,
    pub slow_period_ticks: u64,
    pub staleness_timeout: f64,
    /// Run a straight-line drift calibration first and add the resulting
    /// offset to every steering command.
    pub drift_compensation: bool,
}

impl Scenario {
    pub fn new(waypoints: Vec<Waypoint>, start: Pose2) -> Self {
        Self {
            waypoints,
            start,
            tracker: TrackerConfig::default(),
            plant: PlantParams::default(),
            steering: SteeringConfig::default(),
            cpg: CpgConfig::default(),
            gaits: GaitSet::default(),
            disturbances: Vec::new(),
            duration: 300.0,
            slow_period_ticks: 100,
            staleness_timeout: StalenessMonitor::DEFAULT_TIMEOUT,
            drift_compensation: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.waypoints.is_empty() {
            return Err(SimError::InvalidScenario("no waypoints".into()));
        }
        if !(self.duration > 0.0) {
            return Err(SimError::InvalidScenario("duration must be positive".into()));
        }
        if self.slow_period_ticks == 0 {
            return Err(SimError::InvalidScenario("slow period must be at least one tick".into()));
        }
        self.plant.validate()?;
        self.cpg.validate()?;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.cpg.dt
    }

    pub fn total_ticks(&self) -> u64 {
        (self.duration / self.dt() - 1e-9).ceil() as u64
    }
}

/// Where a run starts: plant pose, absolute fast-tick index, tracker memory
/// and the command the plant is executing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimStart {
    pub pose: Pose2,
    pub tick: u64,
    pub tracker: TrackerState,
    pub active_command: TrackerCommand,
}

impl SimStart {
    pub fn fresh(scenario: &Scenario) -> Self {
        Self {
            pose: scenario.start,
            tick: 0,
            tracker: TrackerState::new(scenario.tracker.steering_offset),
            active_command: TrackerCommand::Stop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSample {
    pub tick: u64,
    pub t: f64,
    pub pose: Pose2,
    pub joints: JointVector,
    pub mode: Mode,
    pub waypoint_index: usize,
    pub delta: f64,
    pub errors: TrackingErrors,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatusRecord {
    pub tick: u64,
    pub t: f64,
    pub waypoint_index: usize,
    pub mode: Mode,
    pub command: TrackerCommand,
    pub delta: f64,
    pub errors: TrackingErrors,
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub samples: Vec<LogSample>,
    pub status: Vec<StatusRecord>,
    pub finished: bool,
    pub timed_out: bool,
    pub final_tracker: TrackerState,
    pub final_pose: Pose2,
    /// Command the plant was executing when the run ended.
    pub final_command: TrackerCommand,
    /// Steering offset added by drift calibration, rad.
    pub drift_offset: f64,
}

impl TrajectoryLog {
    /// First fast-loop sample at or after `tick`.
    pub fn sample_at_tick(&self, tick: u64) -> Option<&LogSample> {
        let i = self.samples.partition_point(|s| s.tick < tick);
        self.samples.get(i)
    }
}

/// Mean yaw rate of the plant under a straight sidewinding command.
pub fn measure_drift_rate(params: &PlantParams, duration: f64, dt: f64) -> f64 {
    let cmd = TrackerCommand::SidewindWithSteering {
        delta: params.steering_offset,
    };
    let mut state = PlantState {
        pose: Pose2::default(),
        time: 0.0,
    };
    let steps = (duration / dt).round().max(1.0) as usize;
    let mut unwrapped = 0.0;
    for _ in 0..steps {
        let next = plant_step(&state, &cmd, params, dt);
        unwrapped += wrap(next.pose.yaw - state.pose.yaw);
        state = next;
    }
    unwrapped / (steps as f64 * dt)
}

/// Default length of the straight-line drift calibration run, s.
pub const DRIFT_CALIBRATION_TIME: f64 = 20.0;

pub fn run_scenario(scenario: &Scenario) -> Result<TrajectoryLog, SimError> {
    run_scenario_from(scenario, &SimStart::fresh(scenario))
}

pub fn run_scenario_from(scenario: &Scenario, start: &SimStart) -> Result<TrajectoryLog, SimError> {
    scenario.validate()?;
    let dt = scenario.dt();
    let end_tick = scenario.total_ticks();
    let slow = scenario.slow_period_ticks;

    let drift_offset = if scenario.drift_compensation {
        let rate = measure_drift_rate(&scenario.plant, DRIFT_CALIBRATION_TIME, dt);
        bias_from_drift(rate, &scenario.steering)
    } else {
        0.0
    };

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.plant.seed);
    let position_noise = Normal::new(0.0, scenario.plant.position_noise_std)
        .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    let yaw_noise = Normal::new(0.0, scenario.plant.yaw_noise_std)
        .map_err(|e| SimError::InvalidScenario(e.to_string()))?;

    let mut disturbances: Vec<(u64, DisturbanceEvent)> = scenario
        .disturbances
        .iter()
        .map(|d| ((d.time / dt - 1e-9).ceil().max(0.0) as u64, *d))
        .filter(|(tick, _)| *tick >= start.tick)
        .collect();
    disturbances.sort_by_key(|(tick, _)| *tick);
    let mut next_disturbance = 0;

    let mut tracker_state = start.tracker;
    let mut active = start.active_command;
    let mut cpg = Cpg::new(gait_for(&active, scenario, drift_offset)?, scenario.cpg)?;
    let mut filter = YawFilter::new();
    let mut monitor = StalenessMonitor::new(scenario.staleness_timeout, start.tick as f64 * dt);
    let mut plant = PlantState {
        pose: start.pose,
        time: start.tick as f64 * dt,
    };

    let mut samples = Vec::with_capacity((end_tick.saturating_sub(start.tick)) as usize + 1);
    let mut status = Vec::new();
    let mut tick = start.tick;
    let mut finished = tracker_state.finished;

    while tick < end_tick && !finished {
        let t = tick as f64 * dt;
        while next_disturbance < disturbances.len() && disturbances[next_disturbance].0 <= tick {
            plant.pose = disturbances[next_disturbance].1.apply(&plant.pose);
            next_disturbance += 1;
        }

        // fast loop
        let mut measured = plant.pose;
        if scenario.plant.position_noise_std > 0.0 {
            measured.x += position_noise.sample(&mut rng);
            measured.y += position_noise.sample(&mut rng);
        }
        if scenario.plant.yaw_noise_std > 0.0 {
            measured.yaw = wrap(measured.yaw + yaw_noise.sample(&mut rng));
        }
        let filtered_yaw = filter.push(measured.yaw);
        let policy = monitor.check(t, true)?;
        let joints = cpg.tick()?;

        // slow loop
        if tick.is_multiple_of(slow) {
            let pose = match policy {
                PosePolicy::UseIdentity => Pose2::default(),
                _ => Pose2::new(measured.x, measured.y, filtered_yaw),
            };
            let input = TrackerInput {
                pose,
                stale: policy == PosePolicy::UseIdentity,
            };
            let (next_state, command) =
                tracker::tick(&tracker_state, &input, &scenario.waypoints, &scenario.tracker);
            tracker_state = next_state;
            if command != TrackerCommand::WaypointReached && command != active {
                active = command;
                cpg.retarget(gait_for(&active, scenario, drift_offset)?)?;
            }
            status.push(StatusRecord {
                tick,
                t,
                waypoint_index: tracker_state.waypoint_index,
                mode: tracker_state.mode,
                command,
                delta: tracker_state.last_delta,
                errors: tracker_state.last_errors,
                stale: tracker_state.stale,
            });
            finished = tracker_state.finished;
        }

        samples.push(LogSample {
            tick,
            t,
            pose: plant.pose,
            joints,
            mode: tracker_state.mode,
            waypoint_index: tracker_state.waypoint_index,
            delta: tracker_state.last_delta,
            errors: tracker_state.last_errors,
        });

        if !finished {
            let cmd = with_offset(&active, drift_offset);
            plant = plant_step(&plant, &cmd, &scenario.plant, dt);
            plant.time = (tick + 1) as f64 * dt;
        }
        tick += 1;
    }

    Ok(TrajectoryLog {
        samples,
        status,
        finished,
        timed_out: !finished,
        final_tracker: tracker_state,
        final_pose: plant.pose,
        final_command: active,
        drift_offset,
    })
}

fn with_offset(cmd: &TrackerCommand, offset: f64) -> TrackerCommand {
    match *cmd {
        TrackerCommand::SidewindWithSteering { delta } => {
            TrackerCommand::SidewindWithSteering { delta: delta + offset }
        }
        other => other,
    }
}

fn gait_for(cmd: &TrackerCommand, scenario: &Scenario, offset: f64) -> Result<GaitParams, CpgError> {
    let gaits = &scenario.gaits;
    match *cmd {
        TrackerCommand::SidewindWithSteering { delta } => {
            let amplitude =
                modify_amplitudes(&gaits.sidewind.amplitude, delta + offset, &scenario.steering);
            gaits.sidewind.with_amplitude(amplitude)
        }
        TrackerCommand::TurnLeft => Ok(gaits.turn_left.clone()),
        TrackerCommand::TurnRight => Ok(gaits.turn_right.clone()),
        TrackerCommand::WaypointReached | TrackerCommand::Stop => {
            gaits.sidewind.with_amplitude(JointVector::zeros())
        }
    }
}

/// `n` seeded start poses on two rings around `target`, alternating between
/// the outer and inner radius. Start bearings are spread over an arc of width
/// `arc` centred behind the waypoint (opposite its yaw); headings are uniform.
pub fn ring_starts(
    n: usize,
    seed: u64,
    target: &Waypoint,
    inner: f64,
    outer: f64,
    arc: f64,
) -> Vec<Pose2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Uniform::new(-0.25, 0.25);
    let heading = Uniform::new(-PI, PI);
    let full_circle = arc >= 2.0 * PI - 1e-12;
    (0..n)
        .map(|i| {
            let radius = if i % 2 == 0 { outer } else { inner };
            let u = (i as f64 + 0.5 + jitter.sample(&mut rng)) / n as f64;
            let offset = if full_circle {
                2.0 * PI * u
            } else {
                arc * (u - 0.5)
            };
            let angle = target.yaw + PI + offset;
            Pose2::new(
                target.x + radius * angle.cos(),
                target.y + radius * angle.sin(),
                wrap(heading.sample(&mut rng)),
            )
        })
        .collect()
}
