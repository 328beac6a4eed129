//! Forward kinematics of the pitch-yaw snake chain and its reduction to a
//! virtual-chassis frame, center of mass and padded bounding box.
//!
//! The chain is a tracked base frame, a head frame and eleven actuated
//! joints. Each joint contributes `Rz(-q) * Trans(-L, 0, 0) * Rx(±90°)`,
//! with the roll sign alternating down the body so consecutive joints act in
//! orthogonal planes.

use std::f64::consts::FRAC_PI_2;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix3xX, Quaternion, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

/// Number of actuated joints.
pub const NUM_JOINTS: usize = 11;
/// Number of frames produced by the chain (base, head, 11 links).
pub const NUM_FRAMES: usize = NUM_JOINTS + 2;
/// Hardware joint limit (70°).
pub const JOINT_LIMIT: f64 = 70.0 * std::f64::consts::PI / 180.0;
/// Padding added to every bounding-box dimension, in meters.
pub const BBOX_PADDING: f64 = 0.1;

const QUAT_NORMALIZE_TOL: f64 = 1e-3;
const DEGENERATE_HEADING_EPS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("base quaternion norm {norm} is not within {tol} of 1")]
    NonUnitQuaternion { norm: f64, tol: f64 },
    #[error("joint {index} angle {value} is not finite")]
    NonFiniteJoint { index: usize, value: f64 },
    #[error("joint {index} angle {value} rad exceeds the ±70° limit")]
    JointOutOfRange { index: usize, value: f64 },
    #[error("base position is not finite")]
    NonFinitePosition,
    #[error("expected {expected} link masses, got {got}")]
    MassCountMismatch { expected: usize, got: usize },
    #[error("link mass {index} must be strictly positive (got {value})")]
    NonPositiveMass { index: usize, value: f64 },
    #[error("degenerate heading: horizontal projection of the mean forward axis vanishes")]
    DegenerateHeading { last_valid_yaw: Option<f64> },
}

/// A rigid-body transform (element of SE(3)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Matrix3::identity(), Vector3::new(x, y, z))
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_rotation(*Rotation3::from_axis_angle(&Vector3::x_axis(), angle).matrix())
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_rotation(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `‖RᵀR − I‖` (Frobenius).
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

/// Base pose plus the eleven joint angles.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    base_position: Vector3<f64>,
    base_orientation: UnitQuaternion<f64>,
    joint_angles: [f64; NUM_JOINTS],
}

impl RobotState {
    /// Builds a state from a base position, an `[x, y, z, w]` quaternion and
    /// joint angles. Quaternions within 1e-3 of unit norm are renormalized,
    /// anything further off is rejected.
    pub fn new(
        base_position: [f64; 3],
        quat_xyzw: [f64; 4],
        joint_angles: [f64; NUM_JOINTS],
    ) -> Result<Self, KinematicsError> {
        let q = Quaternion::new(quat_xyzw[3], quat_xyzw[0], quat_xyzw[1], quat_xyzw[2]);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUAT_NORMALIZE_TOL {
            return Err(KinematicsError::NonUnitQuaternion {
                norm,
                tol: QUAT_NORMALIZE_TOL,
            });
        }
        Self::from_parts(
            Vector3::from(base_position),
            UnitQuaternion::from_quaternion(q),
            joint_angles,
        )
    }

    /// Builds a state from XYZ Euler angles (roll about x, pitch about y,
    /// yaw about z, applied in that order about the fixed axes).
    pub fn from_euler(
        base_position: [f64; 3],
        euler_xyz: [f64; 3],
        joint_angles: [f64; NUM_JOINTS],
    ) -> Result<Self, KinematicsError> {
        let q = UnitQuaternion::from_euler_angles(euler_xyz[0], euler_xyz[1], euler_xyz[2]);
        Self::from_parts(Vector3::from(base_position), q, joint_angles)
    }

    fn from_parts(
        base_position: Vector3<f64>,
        base_orientation: UnitQuaternion<f64>,
        joint_angles: [f64; NUM_JOINTS],
    ) -> Result<Self, KinematicsError> {
        if !base_position.iter().all(|v| v.is_finite()) {
            return Err(KinematicsError::NonFinitePosition);
        }
        for (index, &value) in joint_angles.iter().enumerate() {
            if !value.is_finite() {
                return Err(KinematicsError::NonFiniteJoint { index, value });
            }
            if value.abs() > JOINT_LIMIT {
                return Err(KinematicsError::JointOutOfRange { index, value });
            }
        }
        Ok(Self {
            base_position,
            base_orientation,
            joint_angles,
        })
    }

    pub fn base_position(&self) -> &Vector3<f64> {
        &self.base_position
    }

    pub fn base_orientation(&self) -> &UnitQuaternion<f64> {
        &self.base_orientation
    }

    pub fn joint_angles(&self) -> &[f64; NUM_JOINTS] {
        &self.joint_angles
    }

    pub fn base_transform(&self) -> RigidTransform {
        RigidTransform::new(
            *self.base_orientation.to_rotation_matrix().matrix(),
            self.base_position,
        )
    }

    /// Same joints, base replaced by `g ∘ base`.
    pub fn with_base_transform(&self, g: &RigidTransform) -> Self {
        let base = g.compose(&self.base_transform());
        let rot = Rotation3::from_matrix_unchecked(base.rotation);
        Self {
            base_position: base.translation,
            base_orientation: UnitQuaternion::from_rotation_matrix(&rot),
            joint_angles: self.joint_angles,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicConstants {
    pub head_length: f64,
    pub link_length: f64,
    /// One mass per frame: base, head, ten body links, tail.
    pub link_masses: Vec<f64>,
    /// When set, joint 1 rolls by +90° instead of −90° (the head keeps +90°).
    pub flip_roll_parity: bool,
}

impl Default for KinematicConstants {
    fn default() -> Self {
        let mut link_masses = vec![0.50; NUM_FRAMES];
        link_masses[0] = 0.25;
        link_masses[1] = 0.25;
        Self {
            head_length: 0.1565,
            link_length: 0.1230,
            link_masses,
            flip_roll_parity: false,
        }
    }
}

impl KinematicConstants {
    pub fn validate_masses(&self, frames: usize) -> Result<(), KinematicsError> {
        if self.link_masses.len() != frames {
            return Err(KinematicsError::MassCountMismatch {
                expected: frames,
                got: self.link_masses.len(),
            });
        }
        for (index, &value) in self.link_masses.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(KinematicsError::NonPositiveMass { index, value });
            }
        }
        Ok(())
    }

    /// Roll applied after joint `joint` (1-based).
    pub fn joint_roll(&self, joint: usize) -> f64 {
        let negative = joint % 2 == 1;
        if negative != self.flip_roll_parity {
            -FRAC_PI_2
        } else {
            FRAC_PI_2
        }
    }
}

/// World-frame transforms of every frame in the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPoses {
    world_transforms: Vec<RigidTransform>,
    positions: Matrix3xX<f64>,
}

impl LinkPoses {
    pub fn from_transforms(world_transforms: Vec<RigidTransform>) -> Self {
        let positions = Matrix3xX::from_iterator(
            world_transforms.len(),
            world_transforms
                .iter()
                .flat_map(|t| t.translation.iter().copied().collect::<Vec<_>>()),
        );
        Self {
            world_transforms,
            positions,
        }
    }

    pub fn world_transforms(&self) -> &[RigidTransform] {
        &self.world_transforms
    }

    /// 3×N matrix whose columns are the frame origins.
    pub fn positions(&self) -> &Matrix3xX<f64> {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.world_transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.world_transforms.is_empty()
    }
}

pub fn forward_kinematics(state: &RobotState, k: &KinematicConstants) -> LinkPoses {
    let trans_head = RigidTransform::from_translation(-k.head_length, 0.0, 0.0);
    let trans_link = RigidTransform::from_translation(-k.link_length, 0.0, 0.0);
    let roll_pos = RigidTransform::rot_x(FRAC_PI_2);
    let roll_neg = RigidTransform::rot_x(-FRAC_PI_2);

    let mut frames = Vec::with_capacity(NUM_FRAMES);
    let base = state.base_transform();
    let head = base * trans_head * roll_pos;
    frames.push(base);
    frames.push(head);

    let mut current = head;
    for (i, &q) in state.joint_angles.iter().enumerate() {
        let roll = if k.joint_roll(i + 1) > 0.0 {
            &roll_pos
        } else {
            &roll_neg
        };
        current = current * RigidTransform::rot_z(-q) * trans_link * *roll;
        frames.push(current);
    }
    LinkPoses::from_transforms(frames)
}

/// Parent-relative transform of each frame (the base is relative to world).
pub fn relative_transforms(poses: &LinkPoses) -> Vec<RigidTransform> {
    let frames = poses.world_transforms();
    let mut out = Vec::with_capacity(frames.len());
    for (i, t) in frames.iter().enumerate() {
        if i == 0 {
            out.push(*t);
        } else {
            out.push(frames[i - 1].inverse() * *t);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualChassis {
    pub x_axis: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl VirtualChassis {
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    pub fn from_yaw(yaw: f64) -> Self {
        let rotation = RigidTransform::rot_z(yaw).rotation;
        Self {
            x_axis: rotation.column(0).into(),
            rotation,
        }
    }
}

/// Horizontal frame aligned with the mean forward (x) axis of all frames.
///
/// `last_valid_yaw` is only carried into the error when the heading is
/// degenerate.
pub fn virtual_chassis(
    poses: &LinkPoses,
    last_valid_yaw: Option<f64>,
) -> Result<VirtualChassis, KinematicsError> {
    let n = poses.len().max(1) as f64;
    let mean_forward = poses
        .world_transforms()
        .iter()
        .fold(Vector3::zeros(), |acc, t| acc + t.rotation.column(0))
        / n;
    chassis_from_mean_forward(&mean_forward, last_valid_yaw)
}

pub fn chassis_from_mean_forward(
    mean_forward: &Vector3<f64>,
    last_valid_yaw: Option<f64>,
) -> Result<VirtualChassis, KinematicsError> {
    let z = Vector3::z();
    let horizontal = mean_forward - z * mean_forward.dot(&z);
    let norm = horizontal.norm();
    if !(norm > DEGENERATE_HEADING_EPS) {
        return Err(KinematicsError::DegenerateHeading { last_valid_yaw });
    }
    let mut x_axis = horizontal / norm;
    x_axis.z = 0.0;
    let y_axis = z.cross(&x_axis);
    Ok(VirtualChassis {
        x_axis,
        rotation: Matrix3::from_columns(&[x_axis, y_axis, z]),
    })
}

pub fn center_of_mass(
    poses: &LinkPoses,
    k: &KinematicConstants,
) -> Result<Vector3<f64>, KinematicsError> {
    k.validate_masses(poses.len())?;
    let inv_total = 1.0 / k.link_masses.iter().sum::<f64>();
    let weighted = poses
        .positions()
        .column_iter()
        .zip(&k.link_masses)
        .fold(Vector3::zeros(), |acc, (p, &m)| acc + p * m);
    Ok(weighted * inv_total)
}

/// Padded extent of the chain expressed in the virtual-chassis frame.
pub fn bounding_box(poses: &LinkPoses, com: &Vector3<f64>, r_com: &Matrix3<f64>) -> Vector3<f64> {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in poses.positions().column_iter() {
        let local = r_com.transpose() * (p - com);
        lo = lo.inf(&local);
        hi = hi.sup(&local);
    }
    if poses.is_empty() {
        return Vector3::repeat(BBOX_PADDING);
    }
    let half_extent = (hi - lo) * 0.5;
    half_extent.map(|d| 2.0 * d + BBOX_PADDING)
}

/// Controller-facing summary of a chain configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedState {
    pub com_position: Vector3<f64>,
    pub vc_rotation: Matrix3<f64>,
    pub yaw: f64,
    pub bbox_span: Vector3<f64>,
}

/// Runs the full reduction. A degenerate heading falls back to
/// `fallback_yaw` when one is available.
pub fn reduce(
    poses: &LinkPoses,
    k: &KinematicConstants,
    fallback_yaw: Option<f64>,
) -> Result<ReducedState, KinematicsError> {
    let chassis = match virtual_chassis(poses, fallback_yaw) {
        Ok(vc) => vc,
        Err(KinematicsError::DegenerateHeading {
            last_valid_yaw: Some(yaw),
        }) => VirtualChassis::from_yaw(yaw),
        Err(e) => return Err(e),
    };
    let com = center_of_mass(poses, k)?;
    let bbox_span = bounding_box(poses, &com, &chassis.rotation);
    Ok(ReducedState {
        com_position: com,
        vc_rotation: chassis.rotation,
        yaw: chassis.yaw(),
        bbox_span,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn zero_state() -> RobotState {
        RobotState::new([0.0; 3], [0.0, 0.0, 0.0, 1.0], [0.0; NUM_JOINTS]).unwrap()
    }

    #[test]
    fn zero_angle_chain_is_collinear_with_expected_spacing() {
        let k = KinematicConstants::default();
        let poses = forward_kinematics(&zero_state(), &k);
        assert_eq!(poses.len(), NUM_FRAMES);
        let p = poses.positions();
        assert_relative_eq!(p.column(1).x, -k.head_length, epsilon = 1e-12);
        for i in 2..NUM_FRAMES {
            let expected = -k.head_length - (i as f64 - 1.0) * k.link_length;
            assert_relative_eq!(p.column(i).x, expected, epsilon = 1e-12);
            assert!(p.column(i).y.abs() < 1e-12 && p.column(i).z.abs() < 1e-12);
        }
    }

    #[test]
    fn base_translation_shifts_every_link() {
        let k = KinematicConstants::default();
        let a = forward_kinematics(&zero_state(), &k);
        let shifted =
            RobotState::new([1.0, -2.0, 0.5], [0.0, 0.0, 0.0, 1.0], [0.0; NUM_JOINTS]).unwrap();
        let b = forward_kinematics(&shifted, &k);
        let t = Vector3::new(1.0, -2.0, 0.5);
        for i in 0..NUM_FRAMES {
            let d = b.positions().column(i) - a.positions().column(i) - t;
            assert!(d.norm() < 1e-12);
        }
    }

    #[test]
    fn quaternion_ingest_policy() {
        let ok = RobotState::new([0.0; 3], [0.0, 0.0, 0.0, 1.0005], [0.0; NUM_JOINTS]).unwrap();
        assert_relative_eq!(ok.base_orientation().quaternion().norm(), 1.0, epsilon = 1e-12);
        let err = RobotState::new([0.0; 3], [0.0, 0.0, 0.0, 1.01], [0.0; NUM_JOINTS]);
        assert!(matches!(err, Err(KinematicsError::NonUnitQuaternion { .. })));
    }

    #[test]
    fn nan_joint_rejected() {
        let mut q = [0.0; NUM_JOINTS];
        q[4] = f64::NAN;
        let err = RobotState::new([0.0; 3], [0.0, 0.0, 0.0, 1.0], q).unwrap_err();
        assert!(matches!(err, KinematicsError::NonFiniteJoint { index: 4, .. }));
    }

    #[test]
    fn roll_sign_sequence_alternates_from_joint_one() {
        let k = KinematicConstants::default();
        assert_eq!(k.joint_roll(1), -FRAC_PI_2);
        assert_eq!(k.joint_roll(2), FRAC_PI_2);
        assert_eq!(k.joint_roll(11), -FRAC_PI_2);
        let flipped = KinematicConstants {
            flip_roll_parity: true,
            ..KinematicConstants::default()
        };
        assert_eq!(flipped.joint_roll(1), FRAC_PI_2);
        assert_eq!(flipped.joint_roll(2), -FRAC_PI_2);
    }

    #[test]
    fn identity_frames_give_identity_chassis() {
        let poses = LinkPoses::from_transforms(vec![RigidTransform::identity(); NUM_FRAMES]);
        let vc = virtual_chassis(&poses, None).unwrap();
        assert_eq!(vc.x_axis, Vector3::x());
        assert_eq!(vc.rotation, Matrix3::identity());
    }

    #[test]
    fn common_yaw_passes_through() {
        let psi = 0.83;
        let poses = LinkPoses::from_transforms(vec![RigidTransform::rot_z(psi); NUM_FRAMES]);
        let vc = virtual_chassis(&poses, None).unwrap();
        assert_relative_eq!(vc.yaw(), psi, epsilon = 1e-12);
        assert_eq!(vc.rotation.column(2), Vector3::z());
    }

    #[test]
    fn vertical_links_are_degenerate() {
        let up = RigidTransform::from_rotation(
            *Rotation3::from_axis_angle(&Vector3::y_axis(), -FRAC_PI_2).matrix(),
        );
        let poses = LinkPoses::from_transforms(vec![up; 4]);
        let err = virtual_chassis(&poses, Some(0.4)).unwrap_err();
        assert_eq!(
            err,
            KinematicsError::DegenerateHeading {
                last_valid_yaw: Some(0.4)
            }
        );
        let k = KinematicConstants {
            link_masses: vec![1.0; 4],
            ..KinematicConstants::default()
        };
        let reduced = reduce(&poses, &k, Some(0.4)).unwrap();
        assert_relative_eq!(reduced.yaw, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn vertical_component_of_mean_forward_is_ignored() {
        let base = Vector3::new(0.3, -0.7, 0.2);
        let a = chassis_from_mean_forward(&base, None).unwrap();
        let b = chassis_from_mean_forward(&(base + Vector3::new(0.0, 0.0, 5.0)), None).unwrap();
        assert_eq!(a.x_axis, b.x_axis);
    }

    #[test]
    fn com_of_coincident_links() {
        let p = Vector3::new(0.4, 1.2, -0.3);
        let poses = LinkPoses::from_transforms(vec![
            RigidTransform::new(Matrix3::identity(), p);
            NUM_FRAMES
        ]);
        let com = center_of_mass(&poses, &KinematicConstants::default()).unwrap();
        assert_relative_eq!(com, p, epsilon = 1e-12);
    }

    #[test]
    fn com_two_point_reduction() {
        let poses = LinkPoses::from_transforms(vec![
            RigidTransform::from_translation(0.0, 0.0, 0.0),
            RigidTransform::from_translation(4.0, 0.0, 0.0),
        ]);
        let k = KinematicConstants {
            link_masses: vec![1.0, 3.0],
            ..KinematicConstants::default()
        };
        assert_eq!(center_of_mass(&poses, &k).unwrap().x, 3.0);
    }

    #[test]
    fn com_rejects_mass_mismatch() {
        let poses = LinkPoses::from_transforms(vec![RigidTransform::identity(); 3]);
        let err = center_of_mass(&poses, &KinematicConstants::default()).unwrap_err();
        assert!(matches!(err, KinematicsError::MassCountMismatch { .. }));
    }

    #[test]
    fn bbox_of_coincident_links_is_padding() {
        let poses = LinkPoses::from_transforms(vec![
            RigidTransform::from_translation(1.0, 2.0, 3.0);
            5
        ]);
        let span = bounding_box(&poses, &Vector3::new(1.0, 2.0, 3.0), &Matrix3::identity());
        assert_relative_eq!(span, Vector3::repeat(0.1), epsilon = 1e-15);
    }

    #[test]
    fn bbox_of_straight_segment() {
        let d = 1.4;
        let poses = LinkPoses::from_transforms(
            (0..8)
                .map(|i| RigidTransform::from_translation(d * i as f64 / 7.0, 0.0, 0.0))
                .collect(),
        );
        let span = bounding_box(&poses, &Vector3::new(0.3, 0.0, 0.0), &Matrix3::identity());
        assert_relative_eq!(span, Vector3::new(d + 0.1, 0.1, 0.1), epsilon = 1e-12);
    }

    #[test]
    fn transform_inverse_round_trip() {
        let t = RigidTransform::rot_z(0.3) * RigidTransform::from_translation(1.0, 2.0, 3.0)
            * RigidTransform::rot_x(-1.1);
        let id = t * t.inverse();
        assert!((id.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
    }
}
