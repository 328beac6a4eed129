//! Reduced-order snake robot autonomy stack: forward kinematics and
//! virtual-chassis reduction, a coupled-oscillator gait generator,
//! amplitude-modulation steering, a waypoint tracking state machine, pose
//! feedback conditioning, a surrogate plant that closes the loop, and
//! trajectory error metrics.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cpg;
pub mod csv_io;
pub mod estimation;
pub mod kinematics;
pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod steering;
pub mod tracker;

pub use cpg::{Cpg, CpgConfig, CpgState, GaitParams, JointVector};
pub use kinematics::{forward_kinematics, KinematicConstants, LinkPoses, RigidTransform, RobotState};
pub use sim::{run_scenario, Scenario, TrajectoryLog};
pub use tracker::{Mode, Pose2, TrackerCommand, TrackerConfig, TrackerState, Waypoint};
