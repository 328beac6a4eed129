//! Coupled phase/amplitude oscillator network producing the eleven joint
//! targets.
//!
//! Phases follow `θ̇ = μAθ − μBΔφ + ω` with nearest-neighbour coupling, and
//! amplitudes follow a critically damped second-order response towards
//! `a_des`. Outputs are `q = r ⊙ sin θ + b`. Integration is classical RK4.

use std::f64::consts::PI;

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

use crate::kinematics::{JOINT_LIMIT, NUM_JOINTS};

pub const NUM_LINKS_COUPLED: usize = NUM_JOINTS - 1;

pub type JointVector = SVector<f64, NUM_JOINTS>;
pub type PhaseOffsets = SVector<f64, NUM_LINKS_COUPLED>;
pub type CouplingMatrix = SMatrix<f64, NUM_JOINTS, NUM_JOINTS>;
pub type OffsetMatrix = SMatrix<f64, NUM_JOINTS, NUM_LINKS_COUPLED>;

/// Indices of the pitching joints J1, J3, …, J11.
pub const PITCH_JOINTS: [usize; 6] = [0, 2, 4, 6, 8, 10];
/// Indices of the yawing joints J2, J4, …, J10.
pub const YAW_JOINTS: [usize; 5] = [1, 3, 5, 7, 9];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CpgError {
    #[error("non-finite {component}[{index}] = {value}")]
    NonFinite {
        component: &'static str,
        index: usize,
        value: f64,
    },
    #[error("amplitude {index} = {value} rad outside [0, 70°]")]
    AmplitudeOutOfRange { index: usize, value: f64 },
    #[error("gait parameter {field}[{index}] is not finite")]
    NonFiniteParam { field: &'static str, index: usize },
    #[error("invalid CPG config: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaitParams {
    pub name: String,
    pub frequency: JointVector,
    pub phase: JointVector,
    pub amplitude: JointVector,
    pub bias: JointVector,
}

impl GaitParams {
    pub fn new(
        name: impl Into<String>,
        frequency: JointVector,
        phase: JointVector,
        amplitude: JointVector,
        bias: JointVector,
    ) -> Result<Self, CpgError> {
        let gait = Self {
            name: name.into(),
            frequency,
            phase,
            amplitude,
            bias,
        };
        gait.validate()?;
        Ok(gait)
    }

    pub fn validate(&self) -> Result<(), CpgError> {
        for (field, v) in [
            ("frequency", &self.frequency),
            ("phase", &self.phase),
            ("amplitude", &self.amplitude),
            ("bias", &self.bias),
        ] {
            if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                return Err(CpgError::NonFiniteParam { field, index });
            }
        }
        for (index, &value) in self.amplitude.iter().enumerate() {
            if !(0.0..=JOINT_LIMIT + 1e-12).contains(&value) {
                return Err(CpgError::AmplitudeOutOfRange { index, value });
            }
        }
        Ok(())
    }

    /// Consecutive differences `φ[i+1] − φ[i]`.
    pub fn phase_offsets(&self) -> PhaseOffsets {
        PhaseOffsets::from_fn(|i, _| self.phase[i + 1] - self.phase[i])
    }

    pub fn with_amplitude(&self, amplitude: JointVector) -> Result<Self, CpgError> {
        let gait = Self {
            amplitude,
            ..self.clone()
        };
        gait.validate()?;
        Ok(gait)
    }
}

/// Shape parameters used to build the sidewinding and turn-in-place gaits.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitPresetConfig {
    /// Common angular frequency of every oscillator, rad/s.
    pub frequency: f64,
    pub pitch_amplitude: f64,
    pub yaw_amplitude: f64,
    pub turn_pitch_amplitude: f64,
    pub turn_yaw_amplitude: f64,
    /// Phase advance per joint along the body, rad.
    pub phase_gradient: f64,
    /// Offset between the horizontal and vertical waves, rad.
    pub plane_offset: f64,
}

impl Default for GaitPresetConfig {
    fn default() -> Self {
        let deg = PI / 180.0;
        Self {
            frequency: PI,
            pitch_amplitude: 15.0 * deg,
            yaw_amplitude: 45.0 * deg,
            turn_pitch_amplitude: 15.0 * deg,
            turn_yaw_amplitude: 30.0 * deg,
            phase_gradient: 60.0 * deg,
            plane_offset: 90.0 * deg,
        }
    }
}

fn is_yaw_joint(i: usize) -> bool {
    i % 2 == 1
}

impl GaitPresetConfig {
    fn wave(&self, name: &str, gradient: f64, pitch: f64, yaw: f64) -> Result<GaitParams, CpgError> {
        let phase = JointVector::from_fn(|i, _| {
            let offset = if is_yaw_joint(i) { self.plane_offset } else { 0.0 };
            i as f64 * gradient + offset
        });
        let amplitude = JointVector::from_fn(|i, _| if is_yaw_joint(i) { yaw } else { pitch });
        GaitParams::new(
            name,
            JointVector::repeat(self.frequency),
            phase,
            amplitude,
            JointVector::zeros(),
        )
    }

    pub fn sidewinding(&self) -> Result<GaitParams, CpgError> {
        self.wave(
            "sidewind",
            self.phase_gradient,
            self.pitch_amplitude,
            self.yaw_amplitude,
        )
    }

    pub fn turn_left(&self) -> Result<GaitParams, CpgError> {
        self.wave(
            "turn_left",
            self.phase_gradient,
            self.turn_pitch_amplitude,
            self.turn_yaw_amplitude,
        )
    }

    /// Mirror of [`turn_left`](Self::turn_left): the wave travels the other way.
    pub fn turn_right(&self) -> Result<GaitParams, CpgError> {
        self.wave(
            "turn_right",
            -self.phase_gradient,
            self.turn_pitch_amplitude,
            self.turn_yaw_amplitude,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpgConfig {
    /// Phase coupling strength μ, 1/s.
    pub coupling: f64,
    /// Amplitude natural frequency γ, 1/s.
    pub amplitude_rate: f64,
    pub dt: f64,
    /// Duration over which bias changes are ramped on retarget, s.
    pub bias_slew_time: f64,
}

impl Default for CpgConfig {
    fn default() -> Self {
        Self {
            coupling: 10.0,
            amplitude_rate: 20.0,
            dt: 0.01,
            bias_slew_time: 0.5,
        }
    }
}

impl CpgConfig {
    pub fn validate(&self) -> Result<(), CpgError> {
        if !(self.coupling > 0.0) {
            return Err(CpgError::Config("coupling must be positive"));
        }
        if !(self.amplitude_rate > 0.0) {
            return Err(CpgError::Config("amplitude rate must be positive"));
        }
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(CpgError::Config("dt must lie in (0, 0.01]"));
        }
        if !(self.bias_slew_time >= 0.0) {
            return Err(CpgError::Config("bias slew time must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpgState {
    pub theta: JointVector,
    pub r: JointVector,
    pub r_dot: JointVector,
}

impl CpgState {
    /// Phases start at the gait's absolute phase vector, amplitudes at rest.
    pub fn initial(gait: &GaitParams) -> Self {
        Self {
            theta: gait.phase,
            r: JointVector::zeros(),
            r_dot: JointVector::zeros(),
        }
    }

    fn check_finite(&self) -> Result<(), CpgError> {
        for (component, v) in [("theta", &self.theta), ("r", &self.r), ("r_dot", &self.r_dot)] {
            if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                return Err(CpgError::NonFinite {
                    component,
                    index,
                    value: v[index],
                });
            }
        }
        Ok(())
    }
}

/// Nearest-neighbour coupling `A` (path Laplacian) and offset map `B`.
pub fn coupling_matrices() -> (CouplingMatrix, OffsetMatrix) {
    let mut a = CouplingMatrix::zeros();
    for i in 0..NUM_JOINTS {
        if i > 0 {
            a[(i, i - 1)] = 1.0;
        }
        if i + 1 < NUM_JOINTS {
            a[(i, i + 1)] = 1.0;
        }
        a[(i, i)] = if i == 0 || i == NUM_JOINTS - 1 { -1.0 } else { -2.0 };
    }
    let mut b = OffsetMatrix::zeros();
    for i in 0..NUM_LINKS_COUPLED {
        b[(i, i)] = 1.0;
        b[(i + 1, i)] = -1.0;
    }
    (a, b)
}

struct Derivative {
    theta: JointVector,
    r: JointVector,
    r_dot: JointVector,
}

struct Dynamics {
    coupling: CouplingMatrix,
    phase_drive: JointVector,
    amplitude: JointVector,
    gamma: f64,
}

impl Dynamics {
    fn new(gait: &GaitParams, cfg: &CpgConfig) -> Self {
        let (a, b) = coupling_matrices();
        let mu = cfg.coupling;
        Self {
            coupling: a * mu,
            phase_drive: gait.frequency - b * gait.phase_offsets() * mu,
            amplitude: gait.amplitude,
            gamma: cfg.amplitude_rate,
        }
    }

    fn eval(&self, theta: &JointVector, r: &JointVector, r_dot: &JointVector) -> Derivative {
        let g = self.gamma;
        Derivative {
            theta: self.coupling * theta + self.phase_drive,
            r: *r_dot,
            r_dot: (self.amplitude - r) * (g * g) - r_dot * (2.0 * g),
        }
    }
}

/// Advances the oscillator network by one `cfg.dt` with RK4.
pub fn step(state: &CpgState, gait: &GaitParams, cfg: &CpgConfig) -> Result<CpgState, CpgError> {
    state.check_finite()?;
    let f = Dynamics::new(gait, cfg);
    let h = cfg.dt;

    let k1 = f.eval(&state.theta, &state.r, &state.r_dot);
    let k2 = f.eval(
        &(state.theta + k1.theta * (h / 2.0)),
        &(state.r + k1.r * (h / 2.0)),
        &(state.r_dot + k1.r_dot * (h / 2.0)),
    );
    let k3 = f.eval(
        &(state.theta + k2.theta * (h / 2.0)),
        &(state.r + k2.r * (h / 2.0)),
        &(state.r_dot + k2.r_dot * (h / 2.0)),
    );
    let k4 = f.eval(
        &(state.theta + k3.theta * h),
        &(state.r + k3.r * h),
        &(state.r_dot + k3.r_dot * h),
    );
    let next = CpgState {
        theta: state.theta + (k1.theta + (k2.theta + k3.theta) * 2.0 + k4.theta) * (h / 6.0),
        r: state.r + (k1.r + (k2.r + k3.r) * 2.0 + k4.r) * (h / 6.0),
        r_dot: state.r_dot + (k1.r_dot + (k2.r_dot + k3.r_dot) * 2.0 + k4.r_dot) * (h / 6.0),
    };
    next.check_finite()?;
    Ok(next)
}

pub fn joint_commands(state: &CpgState, bias: &JointVector) -> JointVector {
    state.r.component_mul(&state.theta.map(f64::sin)) + bias
}

/// Largest phase-offset error `‖diff(θ) − Δφ‖∞`.
pub fn phase_lock_residual(state: &CpgState, gait: &GaitParams) -> f64 {
    let target = gait.phase_offsets();
    (0..NUM_LINKS_COUPLED)
        .map(|i| (state.theta[i + 1] - state.theta[i] - target[i]).abs())
        .fold(0.0, f64::max)
}

/// Oscillator network that owns its state and active gait and supports
/// swapping gaits mid-run.
#[derive(Debug, Clone)]
pub struct Cpg {
    state: CpgState,
    gait: GaitParams,
    cfg: CpgConfig,
    bias_from: JointVector,
    slew_elapsed: f64,
}

impl Cpg {
    pub fn new(gait: GaitParams, cfg: CpgConfig) -> Result<Self, CpgError> {
        cfg.validate()?;
        gait.validate()?;
        Ok(Self::with_state(CpgState::initial(&gait), gait, cfg))
    }

    pub fn with_state(state: CpgState, gait: GaitParams, cfg: CpgConfig) -> Self {
        let bias_from = gait.bias;
        Self {
            state,
            gait,
            cfg,
            bias_from,
            slew_elapsed: f64::INFINITY,
        }
    }

    pub fn state(&self) -> &CpgState {
        &self.state
    }

    pub fn gait(&self) -> &GaitParams {
        &self.gait
    }

    pub fn config(&self) -> &CpgConfig {
        &self.cfg
    }

    /// Bias currently applied to the output, including any ramp in progress.
    pub fn effective_bias(&self) -> JointVector {
        let t = self.cfg.bias_slew_time;
        if t <= 0.0 || self.slew_elapsed >= t {
            return self.gait.bias;
        }
        let frac = self.slew_elapsed / t;
        self.bias_from + (self.gait.bias - self.bias_from) * frac
    }

    /// Swaps the gait parameters; the oscillator state carries over.
    pub fn retarget(&mut self, gait: GaitParams) -> Result<(), CpgError> {
        gait.validate()?;
        if gait.bias != self.gait.bias {
            self.bias_from = self.effective_bias();
            self.slew_elapsed = 0.0;
        }
        self.gait = gait;
        Ok(())
    }

    /// Integrates one step and returns the new joint targets.
    pub fn tick(&mut self) -> Result<JointVector, CpgError> {
        self.state = step(&self.state, &self.gait, &self.cfg)?;
        if self.slew_elapsed.is_finite() {
            self.slew_elapsed += self.cfg.dt;
        }
        Ok(self.commands())
    }

    pub fn commands(&self) -> JointVector {
        joint_commands(&self.state, &self.effective_bias())
    }
}
