//! Surrogate quadruped model.
//!
//! Forward kinematics is the identity surrogate: each leg's three joint
//! coordinates are the foot offset from a fixed hip anchor, in the base frame.

use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ContactState, Environment};

/// Tolerance on quaternion norm for inputs that must be unit.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RobotError {
    #[error("quaternion norm {0} is not unit")]
    NonUnitQuaternion(f64),
    #[error("expected points in the {expected:?} frame, got {got:?}")]
    FrameMismatch { expected: Frame, got: Frame },
    #[error("effector count mismatch: {0} vs {1}")]
    EffectorCount(usize, usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed robot config: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    World,
    Base,
}

/// `N_e x 3` effector positions tagged with their frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectorPositions {
    pub frame: Frame,
    pub points: Vec<Vector3<f64>>,
}

impl EffectorPositions {
    pub fn new(frame: Frame, points: Vec<Vector3<f64>>) -> Self {
        EffectorPositions { frame, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn row(&self, j: usize) -> Vector3<f64> {
        self.points[j]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }

    pub fn from_flat(frame: Frame, flat: &[f64]) -> Self {
        let points = flat
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .collect();
        EffectorPositions { frame, points }
    }

    pub fn centroid(&self) -> Vector3<f64> {
        let sum: Vector3<f64> = self.points.iter().sum();
        sum / self.points.len().max(1) as f64
    }

    fn expect(&self, frame: Frame) -> Result<(), RobotError> {
        if self.frame == frame {
            Ok(())
        } else {
            Err(RobotError::FrameMismatch {
                expected: frame,
                got: self.frame,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotConfig {
    /// Hip anchors in the base frame, FL, FR, RL, RR.
    pub hip_anchors: Vec<Vector3<f64>>,
    /// Maximum foot distance from its hip.
    pub l_max: f64,
    /// Maximum per-effector displacement of one transition.
    pub d_max_kin: f64,
    pub n_effectors: usize,
    /// Nominal base height above the mean foot height.
    #[serde(default = "default_height")]
    pub nominal_height: f64,
    /// Margin of the leg-crossing predicate.
    #[serde(default = "default_margin")]
    pub crossing_margin: f64,
}

fn default_height() -> f64 {
    0.30
}

fn default_margin() -> f64 {
    0.01
}

impl Default for RobotConfig {
    fn default() -> Self {
        RobotConfig {
            hip_anchors: vec![
                Vector3::new(0.19, 0.12, 0.0),
                Vector3::new(0.19, -0.12, 0.0),
                Vector3::new(-0.19, 0.12, 0.0),
                Vector3::new(-0.19, -0.12, 0.0),
            ],
            l_max: 0.35,
            d_max_kin: 0.24,
            n_effectors: 4,
            nominal_height: default_height(),
            crossing_margin: default_margin(),
        }
    }
}

impl RobotConfig {
    pub fn load(path: &Path) -> Result<RobotConfig, RobotError> {
        let cfg: RobotConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if cfg.hip_anchors.len() != cfg.n_effectors {
            return Err(RobotError::EffectorCount(cfg.hip_anchors.len(), cfg.n_effectors));
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), RobotError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Foot offset from the hip when standing at nominal height.
    pub fn nominal_joint(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.nominal_height)
    }
}

/// Base orientation, joint coordinates and base twist; no absolute position.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedRobotState {
    pub base_quat: UnitQuaternion<f64>,
    pub joints: Vec<f64>,
    pub base_linvel: Vector3<f64>,
    pub base_angvel: Vector3<f64>,
}

impl ReducedRobotState {
    /// Length of the flat encoding for `n_effectors` legs.
    pub fn encoded_len(n_effectors: usize) -> usize {
        4 + 3 * n_effectors + 6
    }

    /// `[qw, qx, qy, qz, joints.., vx, vy, vz, wx, wy, wz]`
    pub fn encode(&self) -> Vec<f64> {
        let q = self.base_quat.quaternion();
        let mut out = Vec::with_capacity(4 + self.joints.len() + 6);
        out.extend_from_slice(&[q.w, q.i, q.j, q.k]);
        out.extend_from_slice(&self.joints);
        out.extend(self.base_linvel.iter());
        out.extend(self.base_angvel.iter());
        out
    }

    /// Inverse of [`encode`](Self::encode). The quaternion block is renormalized;
    /// an exactly unit block is kept bit-for-bit.
    pub fn decode(v: &[f64], n_effectors: usize) -> Result<ReducedRobotState, RobotError> {
        let nj = 3 * n_effectors;
        if v.len() != Self::encoded_len(n_effectors) {
            return Err(RobotError::EffectorCount(v.len(), Self::encoded_len(n_effectors)));
        }
        let q = Quaternion::new(v[0], v[1], v[2], v[3]);
        let norm = q.norm();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(RobotError::NonUnitQuaternion(norm));
        }
        let base_quat = if norm == 1.0 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        let tail = &v[4 + nj..];
        Ok(ReducedRobotState {
            base_quat,
            joints: v[4..4 + nj].to_vec(),
            base_linvel: Vector3::new(tail[0], tail[1], tail[2]),
            base_angvel: Vector3::new(tail[3], tail[4], tail[5]),
        })
    }

    pub fn with_position(&self, base_pos: Vector3<f64>) -> RobotState {
        RobotState {
            base_pos,
            base_quat: self.base_quat,
            joints: self.joints.clone(),
            base_linvel: self.base_linvel,
            base_angvel: self.base_angvel,
        }
    }

    pub fn yaw(&self) -> f64 {
        self.base_quat.euler_angles().2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub base_pos: Vector3<f64>,
    pub base_quat: UnitQuaternion<f64>,
    pub joints: Vec<f64>,
    pub base_linvel: Vector3<f64>,
    pub base_angvel: Vector3<f64>,
}

impl RobotState {
    pub fn reduced(&self) -> ReducedRobotState {
        ReducedRobotState {
            base_quat: self.base_quat,
            joints: self.joints.clone(),
            base_linvel: self.base_linvel,
            base_angvel: self.base_angvel,
        }
    }

    pub fn yaw(&self) -> f64 {
        self.base_quat.euler_angles().2
    }

    /// Standing state over `contacts` (world frame): base above the stance
    /// centroid, heading from the stance, zero twist.
    pub fn standing(contacts: &EffectorPositions, cfg: &RobotConfig) -> RobotState {
        let (base_pos, yaw) = base_pose_over(contacts, cfg);
        let base_quat = UnitQuaternion::from_euler_angles(0.0, 0.0, yaw);
        let joints = joints_from_world(contacts, &base_pos, &base_quat, cfg);
        RobotState {
            base_pos,
            base_quat,
            joints,
            base_linvel: Vector3::zeros(),
            base_angvel: Vector3::zeros(),
        }
    }

    /// World-frame foot positions implied by the pose and joints.
    pub fn feet_world(&self, cfg: &RobotConfig) -> EffectorPositions {
        let base = forward_kinematics(&self.reduced(), cfg);
        base_to_world_unit(&base.points, &self.base_pos, &self.base_quat)
    }
}

/// Base pose the surrogate adopts over a stance: xy at the stance centroid,
/// height above the mean foot height, yaw from the stance.
pub fn base_pose_over(contacts: &EffectorPositions, cfg: &RobotConfig) -> (Vector3<f64>, f64) {
    let c = contacts.centroid();
    let pos = Vector3::new(c.x, c.y, c.z + cfg.nominal_height);
    (pos, stance_yaw(contacts))
}

pub fn joints_from_world(
    contacts: &EffectorPositions,
    base_pos: &Vector3<f64>,
    base_quat: &UnitQuaternion<f64>,
    cfg: &RobotConfig,
) -> Vec<f64> {
    let mut joints = Vec::with_capacity(3 * contacts.len());
    for (p, hip) in contacts.points.iter().zip(&cfg.hip_anchors) {
        let local = base_quat.inverse_transform_vector(&(p - base_pos)) - hip;
        joints.extend_from_slice(&[local.x, local.y, local.z]);
    }
    joints
}

/// Feet in the base frame: `hip_j + joints[3j..3j+3]`.
pub fn forward_kinematics(state: &ReducedRobotState, cfg: &RobotConfig) -> EffectorPositions {
    let points = cfg
        .hip_anchors
        .iter()
        .zip(state.joints.chunks_exact(3))
        .map(|(hip, q)| hip + Vector3::new(q[0], q[1], q[2]))
        .collect();
    EffectorPositions::new(Frame::Base, points)
}

/// Joint coordinates that place the feet at `feet` (base frame).
pub fn inverse_kinematics(feet: &EffectorPositions, cfg: &RobotConfig) -> Vec<f64> {
    feet.points
        .iter()
        .zip(&cfg.hip_anchors)
        .flat_map(|(p, hip)| {
            let q = p - hip;
            [q.x, q.y, q.z]
        })
        .collect()
}

fn unit(q: &Quaternion<f64>) -> Result<UnitQuaternion<f64>, RobotError> {
    let n = q.norm();
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(RobotError::NonUnitQuaternion(n));
    }
    Ok(UnitQuaternion::new_unchecked(*q))
}

/// `p_B = R(q)^T (p_W - base_pos)`
pub fn world_to_base(
    points: &EffectorPositions,
    base_pos: &Vector3<f64>,
    base_quat: &Quaternion<f64>,
) -> Result<EffectorPositions, RobotError> {
    points.expect(Frame::World)?;
    let q = unit(base_quat)?;
    Ok(world_to_base_unit(&points.points, base_pos, &q))
}

/// `p_W = base_pos + R(q) p_B`
pub fn base_to_world(
    points: &EffectorPositions,
    base_pos: &Vector3<f64>,
    base_quat: &Quaternion<f64>,
) -> Result<EffectorPositions, RobotError> {
    points.expect(Frame::Base)?;
    let q = unit(base_quat)?;
    Ok(base_to_world_unit(&points.points, base_pos, &q))
}

pub(crate) fn world_to_base_unit(
    points: &[Vector3<f64>],
    base_pos: &Vector3<f64>,
    q: &UnitQuaternion<f64>,
) -> EffectorPositions {
    let pts = points
        .iter()
        .map(|p| q.inverse_transform_vector(&(p - base_pos)))
        .collect();
    EffectorPositions::new(Frame::Base, pts)
}

pub(crate) fn base_to_world_unit(
    points: &[Vector3<f64>],
    base_pos: &Vector3<f64>,
    q: &UnitQuaternion<f64>,
) -> EffectorPositions {
    let pts = points.iter().map(|p| base_pos + q.transform_vector(p)).collect();
    EffectorPositions::new(Frame::World, pts)
}

/// Translation minimizing the mean squared distance between `fk_feet + t`
/// and `targets`: the mean of the per-effector differences.
pub fn estimate_translation(
    targets: &EffectorPositions,
    fk_feet: &EffectorPositions,
) -> Result<Vector3<f64>, RobotError> {
    if targets.len() != fk_feet.len() || targets.is_empty() {
        return Err(RobotError::EffectorCount(targets.len(), fk_feet.len()));
    }
    let sum: Vector3<f64> = targets
        .points
        .iter()
        .zip(&fk_feet.points)
        .map(|(t, f)| t - f)
        .sum();
    Ok(sum / targets.len() as f64)
}

/// Next base position: `prev_pos + R(prev_quat) t_local`.
pub fn chain_base_position(
    prev_pos: &Vector3<f64>,
    prev_quat: &Quaternion<f64>,
    t_local: &Vector3<f64>,
) -> Result<Vector3<f64>, RobotError> {
    let q = unit(prev_quat)?;
    Ok(prev_pos + q.transform_vector(t_local))
}

/// Heading of a quadruped stance: direction from the rear-pair midpoint to
/// the front-pair midpoint. Zero for other effector counts.
pub fn stance_yaw(contacts: &EffectorPositions) -> f64 {
    if contacts.len() != 4 {
        return 0.0;
    }
    let p = &contacts.points;
    let front = (p[0] + p[1]) / 2.0;
    let rear = (p[2] + p[3]) / 2.0;
    let d = front - rear;
    d.y.atan2(d.x)
}

/// Leg-crossing predicate on a world-frame stance. In the stance frame the
/// left feet must be left of the right feet and the front feet ahead of the
/// rear feet, each by `margin`.
pub fn legs_crossed(contacts: &EffectorPositions, margin: f64) -> bool {
    if contacts.len() != 4 {
        return false;
    }
    let yaw = stance_yaw(contacts);
    let (s, c) = yaw.sin_cos();
    let centroid = contacts.centroid();
    let local: Vec<(f64, f64)> = contacts
        .points
        .iter()
        .map(|p| {
            let d = p - centroid;
            (c * d.x + s * d.y, -s * d.x + c * d.y)
        })
        .collect();
    let (fl, fr, rl, rr) = (local[0], local[1], local[2], local[3]);
    !(fl.1 > fr.1 + margin
        && rl.1 > rr.1 + margin
        && fl.0 > rl.0 + margin
        && fr.0 > rr.0 + margin)
}

/// Largest per-effector displacement between two world-frame stances.
pub fn transition_length(a: &EffectorPositions, b: &EffectorPositions) -> f64 {
    a.points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max)
}

/// Kinematic pruning test for `s -> next`: no effector moves farther than
/// `d_max_kin` and the legs of `next` are not crossed.
pub fn kinematic_feasible(
    s: &ContactState,
    next: &ContactState,
    env: &Environment,
    cfg: &RobotConfig,
) -> bool {
    let (Ok(a), Ok(b)) = (env.contact_locations(s), env.contact_locations(next)) else {
        return false;
    };
    if a.len() != b.len() {
        return false;
    }
    transition_length(&a, &b) <= cfg.d_max_kin && !legs_crossed(&b, cfg.crossing_margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn world(points: &[[f64; 3]]) -> EffectorPositions {
        EffectorPositions::new(
            Frame::World,
            points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect(),
        )
    }

    #[test]
    fn zero_joints_put_feet_on_hips() {
        let cfg = RobotConfig::default();
        let s = ReducedRobotState {
            base_quat: UnitQuaternion::identity(),
            joints: vec![0.0; 12],
            base_linvel: Vector3::zeros(),
            base_angvel: Vector3::zeros(),
        };
        assert_eq!(forward_kinematics(&s, &cfg).points, cfg.hip_anchors);
        let mut moved = s.clone();
        moved.joints[..3].copy_from_slice(&[0.02, 0.0, -0.30]);
        let fk = forward_kinematics(&moved, &cfg);
        assert_eq!(fk.row(0), cfg.hip_anchors[0] + Vector3::new(0.02, 0.0, -0.30));
        // (hip + q) - hip recovers q up to one rounding step
        for (a, b) in inverse_kinematics(&fk, &cfg).iter().zip(&moved.joints) {
            assert!((a - b).abs() <= 1e-16);
        }
    }

    #[test]
    fn yaw_rotation_into_base_frame() {
        let pts = world(&[[1.0, 0.0, 0.0]]);
        let q = UnitQuaternion::from_euler_angles(0.0, 0.0, FRAC_PI_2);
        let b = world_to_base(&pts, &Vector3::zeros(), q.quaternion()).unwrap();
        assert!((b.row(0) - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);

        let shifted = world_to_base(
            &pts,
            &Vector3::new(1.0, 2.0, 3.0),
            UnitQuaternion::identity().quaternion(),
        )
        .unwrap();
        assert_eq!(shifted.row(0), Vector3::new(0.0, -2.0, -3.0));
    }

    #[test]
    fn non_unit_quaternion_is_rejected() {
        let q = Quaternion::new(2.0, 0.0, 0.0, 0.0);
        let pts = world(&[[1.0, 0.0, 0.0]]);
        assert!(matches!(
            world_to_base(&pts, &Vector3::zeros(), &q),
            Err(RobotError::NonUnitQuaternion(_))
        ));
        assert!(chain_base_position(&Vector3::zeros(), &q, &Vector3::zeros()).is_err());
    }

    #[test]
    fn frame_tags_are_checked() {
        let base = EffectorPositions::new(Frame::Base, vec![Vector3::zeros()]);
        assert!(matches!(
            world_to_base(&base, &Vector3::zeros(), UnitQuaternion::identity().quaternion()),
            Err(RobotError::FrameMismatch { .. })
        ));
    }

    #[test]
    fn translation_is_mean_difference() {
        let fk = EffectorPositions::new(Frame::Base, vec![Vector3::zeros(), Vector3::zeros()]);
        let targets = EffectorPositions::new(
            Frame::Base,
            vec![Vector3::new(0.2, 0.0, 0.0), Vector3::new(0.0, 0.2, 0.0)],
        );
        let t = estimate_translation(&targets, &fk).unwrap();
        assert!((t - Vector3::new(0.1, 0.1, 0.0)).norm() < 1e-15);
        assert_eq!(estimate_translation(&fk, &fk).unwrap(), Vector3::zeros());
    }

    #[test]
    fn chaining_rotates_the_local_translation() {
        let p = Vector3::new(1.0, 1.0, 0.3);
        let t = Vector3::new(0.3, 0.0, 0.0);
        let id = UnitQuaternion::identity();
        assert_eq!(chain_base_position(&p, id.quaternion(), &Vector3::zeros()).unwrap(), p);
        assert_eq!(
            chain_base_position(&p, id.quaternion(), &t).unwrap(),
            p + Vector3::new(0.3, 0.0, 0.0)
        );
        let half_turn = UnitQuaternion::from_euler_angles(0.0, 0.0, std::f64::consts::PI);
        let r = chain_base_position(&p, half_turn.quaternion(), &t).unwrap();
        assert!((r - (p + Vector3::new(-0.3, 0.0, 0.0))).norm() < 1e-15);
    }

    #[test]
    fn crossing_predicate() {
        let nominal = world(&[
            [0.19, 0.12, 0.0],
            [0.19, -0.12, 0.0],
            [-0.19, 0.12, 0.0],
            [-0.19, -0.12, 0.0],
        ]);
        assert!(!legs_crossed(&nominal, 0.01));
        let swapped = world(&[
            [0.19, -0.12, 0.0],
            [0.19, 0.12, 0.0],
            [-0.19, 0.12, 0.0],
            [-0.19, -0.12, 0.0],
        ]);
        assert!(legs_crossed(&swapped, 0.01));
        let rear_ahead = world(&[
            [0.19, 0.12, 0.0],
            [0.19, -0.12, 0.0],
            [0.25, 0.12, 0.0],
            [-0.19, -0.12, 0.0],
        ]);
        assert!(legs_crossed(&rear_ahead, 0.01));
    }

    #[test]
    fn standing_state_reproduces_contacts() {
        let cfg = RobotConfig::default();
        let c = world(&[
            [0.40, 0.14, 0.01],
            [0.38, -0.10, -0.01],
            [0.01, 0.13, 0.0],
            [0.0, -0.11, 0.02],
        ]);
        let x = RobotState::standing(&c, &cfg);
        let back = x.feet_world(&cfg);
        for (a, b) in back.points.iter().zip(&c.points) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn state_codec_round_trip_and_normalization() {
        let s = ReducedRobotState {
            base_quat: UnitQuaternion::from_euler_angles(0.0, 0.0, 0.3),
            joints: (0..12).map(|i| i as f64 * 0.01).collect(),
            base_linvel: Vector3::new(0.1, 0.2, 0.3),
            base_angvel: Vector3::new(0.0, 0.0, 0.5),
        };
        let v = s.encode();
        assert_eq!(v.len(), ReducedRobotState::encoded_len(4));
        let back = ReducedRobotState::decode(&v, 4).unwrap();
        assert_eq!(back.joints, s.joints);
        assert_eq!(back.base_linvel, s.base_linvel);
        assert!((back.base_quat.angle_to(&s.base_quat)).abs() < 1e-12);

        let mut raw = v.clone();
        raw[..4].copy_from_slice(&[2.0, 0.0, 0.0, 0.0]);
        let d = ReducedRobotState::decode(&raw, 4).unwrap();
        assert_eq!(d.base_quat.quaternion().coords, Quaternion::new(1.0, 0.0, 0.0, 0.0).coords);
        raw[..4].copy_from_slice(&[0.0; 4]);
        assert!(ReducedRobotState::decode(&raw, 4).is_err());
    }
}
