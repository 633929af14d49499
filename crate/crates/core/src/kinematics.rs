//! Joint inventory, poses, rate-limited joint interpolation and a frontal-plane
//! forward kinematics chain used to draw the robot as a stick figure.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Torso height the robot is raised to at startup (meters). It stays there.
pub const STANDING_TORSO_LIFT: f64 = 0.35;

/// A joint counts as arrived when it is this close to its target (radians).
pub const ARRIVAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("invalid parameter `{name}`: {value} (must be > 0)")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Which arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Role of a joint within one arm, ordered from the shoulder outwards
/// (device indices 1..=6).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmJoint {
    Shoulder,
    HalfArm,
    MidArm,
    Arm,
    HalfHand,
    Hand,
}

impl ArmJoint {
    pub const ALL: [ArmJoint; 6] = [
        ArmJoint::Shoulder,
        ArmJoint::HalfArm,
        ArmJoint::MidArm,
        ArmJoint::Arm,
        ArmJoint::HalfHand,
        ArmJoint::Hand,
    ];

    /// 1-based device index on the arm.
    pub fn device_index(self) -> usize {
        self as usize + 1
    }
}

/// The fourteen actuated joints driven by the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointId {
    LeftShoulder,
    LeftHalfArm,
    LeftMidArm,
    LeftArm,
    LeftHalfHand,
    LeftHand,
    RightShoulder,
    RightHalfArm,
    RightMidArm,
    RightArm,
    RightHalfHand,
    RightHand,
    TorsoLift,
    HeadYaw,
}

pub const JOINT_COUNT: usize = 14;

impl JointId {
    pub const ALL: [JointId; JOINT_COUNT] = [
        JointId::LeftShoulder,
        JointId::LeftHalfArm,
        JointId::LeftMidArm,
        JointId::LeftArm,
        JointId::LeftHalfHand,
        JointId::LeftHand,
        JointId::RightShoulder,
        JointId::RightHalfArm,
        JointId::RightMidArm,
        JointId::RightArm,
        JointId::RightHalfHand,
        JointId::RightHand,
        JointId::TorsoLift,
        JointId::HeadYaw,
    ];

    pub fn arm(side: Side, joint: ArmJoint) -> JointId {
        let base = match side {
            Side::Left => 0,
            Side::Right => 6,
        };
        JointId::ALL[base + joint as usize]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Side and role for arm joints, `None` for torso and head.
    pub fn arm_parts(self) -> Option<(Side, ArmJoint)> {
        let i = self.index();
        match i {
            0..=5 => Some((Side::Left, ArmJoint::ALL[i])),
            6..=11 => Some((Side::Right, ArmJoint::ALL[i - 6])),
            _ => None,
        }
    }

    /// Rotary joints are measured in radians; the torso lift is prismatic.
    pub fn is_rotary(self) -> bool {
        self != JointId::TorsoLift
    }

    /// Device name on the robot (`arm_left_1_joint`, `torso_lift_joint`, ...).
    pub fn device_name(self) -> String {
        match self.arm_parts() {
            Some((side, joint)) => {
                let side = match side {
                    Side::Left => "left",
                    Side::Right => "right",
                };
                format!("arm_{side}_{}_joint", joint.device_index())
            }
            None if self == JointId::TorsoLift => "torso_lift_joint".to_string(),
            None => "head_1_joint".to_string(),
        }
    }

    /// The same joint on the other arm; torso and head map to themselves.
    pub fn mirrored(self) -> JointId {
        match self.arm_parts() {
            Some((side, joint)) => JointId::arm(side.opposite(), joint),
            None => self,
        }
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.device_name())
    }
}

/// Full articulation state: radians for rotary joints, meters for the torso lift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotPose {
    q: [f64; JOINT_COUNT],
}

impl RobotPose {
    /// Every joint at zero, torso fully lowered.
    pub fn zero() -> Self {
        RobotPose {
            q: [0.0; JOINT_COUNT],
        }
    }

    /// Every rotary joint at zero with the torso raised to its operating height.
    pub fn standing() -> Self {
        let mut p = Self::zero();
        p[JointId::TorsoLift] = STANDING_TORSO_LIFT;
        p
    }

    pub fn from_array(q: [f64; JOINT_COUNT]) -> Self {
        RobotPose { q }
    }

    pub fn as_array(&self) -> &[f64; JOINT_COUNT] {
        &self.q
    }

    pub fn iter(&self) -> impl Iterator<Item = (JointId, f64)> + '_ {
        JointId::ALL.iter().map(move |&j| (j, self.q[j.index()]))
    }

    /// Swap the arms. Shoulder angles and head yaw change sign so the
    /// resulting frame is the mirror image about the trunk axis.
    pub fn mirrored(&self) -> RobotPose {
        let mut out = RobotPose::zero();
        for j in JointId::ALL {
            let mut v = self[j];
            if matches!(
                j,
                JointId::LeftShoulder | JointId::RightShoulder | JointId::HeadYaw
            ) {
                v = -v;
            }
            out[j.mirrored()] = v;
        }
        out
    }

    /// Largest absolute difference over the rotary joints.
    pub fn max_rotary_gap(&self, other: &RobotPose) -> f64 {
        JointId::ALL
            .iter()
            .filter(|j| j.is_rotary())
            .map(|&j| (self[j] - other[j]).abs())
            .fold(0.0, f64::max)
    }
}

impl Default for RobotPose {
    fn default() -> Self {
        Self::standing()
    }
}

impl Index<JointId> for RobotPose {
    type Output = f64;
    fn index(&self, j: JointId) -> &f64 {
        &self.q[j.index()]
    }
}

impl IndexMut<JointId> for RobotPose {
    fn index_mut(&mut self, j: JointId) -> &mut f64 {
        &mut self.q[j.index()]
    }
}

/// A pose that assigns only some joints. Used for single-arm primitives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PartialPose {
    q: [Option<f64>; JOINT_COUNT],
}

impl PartialPose {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with(mut self, j: JointId, value: f64) -> Self {
        self.q[j.index()] = Some(value);
        self
    }

    pub fn set(&mut self, j: JointId, value: f64) {
        self.q[j.index()] = Some(value);
    }

    pub fn get(&self, j: JointId) -> Option<f64> {
        self.q[j.index()]
    }

    pub fn assigned(&self) -> impl Iterator<Item = (JointId, f64)> + '_ {
        JointId::ALL
            .iter()
            .filter_map(move |&j| self.q[j.index()].map(|v| (j, v)))
    }

    pub fn len(&self) -> usize {
        self.q.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-joint position bounds plus the angular speed cap used for motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub min: [f64; JOINT_COUNT],
    pub max: [f64; JOINT_COUNT],
    /// rad/s
    pub max_speed: f64,
}

impl JointLimits {
    pub fn range(&self, j: JointId) -> (f64, f64) {
        (self.min[j.index()], self.max[j.index()])
    }

    pub fn contains(&self, j: JointId, value: f64) -> bool {
        let (lo, hi) = self.range(j);
        (lo..=hi).contains(&value)
    }

    pub fn contains_pose(&self, p: &RobotPose) -> bool {
        p.iter().all(|(j, v)| self.contains(j, v))
    }
}

impl Default for JointLimits {
    fn default() -> Self {
        default_limits()
    }
}

/// Arm joints ±2.5 rad, head yaw ±1.3 rad, torso lift 0..0.35 m, 1 rad/s.
pub fn default_limits() -> JointLimits {
    let mut min = [-2.5; JOINT_COUNT];
    let mut max = [2.5; JOINT_COUNT];
    min[JointId::HeadYaw.index()] = -1.3;
    max[JointId::HeadYaw.index()] = 1.3;
    min[JointId::TorsoLift.index()] = 0.0;
    max[JointId::TorsoLift.index()] = STANDING_TORSO_LIFT;
    JointLimits {
        min,
        max,
        max_speed: 1.0,
    }
}

pub fn clamp_pose(p: &RobotPose, lim: &JointLimits) -> RobotPose {
    let mut out = *p;
    for j in JointId::ALL {
        let (lo, hi) = lim.range(j);
        out[j] = p[j].clamp(lo, hi);
    }
    out
}

/// `base` with every joint assigned by `partial` overwritten.
pub fn merge_partial(base: &RobotPose, partial: &PartialPose) -> RobotPose {
    let mut out = *base;
    for (j, v) in partial.assigned() {
        out[j] = v;
    }
    out
}

fn check_positive(name: &'static str, value: f64) -> Result<(), KinematicsError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(KinematicsError::InvalidParameter { name, value })
    }
}

/// Time for a simultaneous constant-rate move; the slowest joint decides.
/// The torso is excluded since it only moves at startup.
pub fn motion_duration(
    from: &RobotPose,
    to: &RobotPose,
    omega: f64,
) -> Result<f64, KinematicsError> {
    check_positive("omega", omega)?;
    Ok(from.max_rotary_gap(to) / omega)
}

/// Advance every joint toward `target` by at most `omega * dt` without
/// overshooting. Returns the new pose and whether every joint has arrived.
///
/// The torso lift is set directly rather than rate limited.
pub fn interpolate(
    current: &RobotPose,
    target: &RobotPose,
    omega: f64,
    dt: f64,
) -> Result<(RobotPose, bool), KinematicsError> {
    check_positive("omega", omega)?;
    check_positive("dt", dt)?;
    let max_step = omega * dt;
    let mut next = *current;
    let mut done = true;
    for j in JointId::ALL {
        if !j.is_rotary() {
            next[j] = target[j];
            continue;
        }
        let gap = target[j] - current[j];
        if gap.abs() <= max_step + ARRIVAL_TOLERANCE {
            next[j] = target[j];
        } else {
            next[j] = current[j] + max_step.copysign(gap);
            done = false;
        }
    }
    Ok((next, done))
}

/// Segment lengths of the stick figure, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub shoulder_width: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub hand: f64,
    /// Shoulder height with the torso fully lowered.
    pub trunk_base: f64,
    pub trunk_lift_range: f64,
    pub head_radius: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            shoulder_width: 0.40,
            upper_arm: 0.30,
            forearm: 0.30,
            hand: 0.15,
            trunk_base: 0.80,
            trunk_lift_range: STANDING_TORSO_LIFT,
            head_radius: 0.10,
        }
    }
}

impl LinkModel {
    /// Top of the head with the torso at `lift`.
    pub fn standing_height(&self, lift: f64) -> f64 {
        self.trunk_base + lift + 2.0 * self.head_radius
    }

    pub fn is_valid(&self) -> bool {
        [
            self.shoulder_width,
            self.upper_arm,
            self.forearm,
            self.hand,
            self.trunk_base,
            self.trunk_lift_range,
            self.head_radius,
        ]
        .iter()
        .all(|&v| v > 0.0)
    }
}

/// A point in the robot's frontal plane: x toward the robot's right, y up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn offset(self, length: f64, outward: f64, angle: f64) -> Point2 {
        Point2::new(
            self.x + outward * length * angle.cos(),
            self.y + length * angle.sin(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmFrame {
    pub shoulder: Point2,
    pub elbow: Point2,
    pub wrist: Point2,
    pub fingertip: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    pub left: ArmFrame,
    pub right: ArmFrame,
    pub head_yaw: f64,
    pub head_center: Point2,
    pub torso_top: f64,
}

impl PoseFrame {
    pub fn arm(&self, side: Side) -> &ArmFrame {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// Elevation of the upper arm above horizontal, measured outward from the body.
///
/// The shoulder joint abducts with opposite signs on the two arms (positive
/// raises the left arm, negative raises the right); a negative half-arm angle
/// raises either arm.
fn upper_arm_elevation(p: &RobotPose, side: Side) -> f64 {
    let shoulder = p[JointId::arm(side, ArmJoint::Shoulder)];
    let half_arm = p[JointId::arm(side, ArmJoint::HalfArm)];
    let abduction = match side {
        Side::Left => shoulder,
        Side::Right => -shoulder,
    };
    abduction - half_arm
}

fn arm_frame(p: &RobotPose, links: &LinkModel, side: Side, torso_top: f64) -> ArmFrame {
    let outward = match side {
        Side::Left => -1.0,
        Side::Right => 1.0,
    };
    let shoulder = Point2::new(outward * links.shoulder_width / 2.0, torso_top);
    let upper = upper_arm_elevation(p, side);
    let fore = upper + p[JointId::arm(side, ArmJoint::Arm)];
    let hand = fore + p[JointId::arm(side, ArmJoint::HalfHand)];
    let elbow = shoulder.offset(links.upper_arm, outward, upper);
    let wrist = elbow.offset(links.forearm, outward, fore);
    let fingertip = wrist.offset(links.hand, outward, hand);
    ArmFrame {
        shoulder,
        elbow,
        wrist,
        fingertip,
    }
}

/// Frontal-plane projection of the pose. Mid-arm and hand joints are axial
/// rolls and do not move any projected point.
pub fn forward_kinematics(p: &RobotPose, links: &LinkModel) -> PoseFrame {
    let torso_top = links.trunk_base + p[JointId::TorsoLift];
    PoseFrame {
        left: arm_frame(p, links, Side::Left, torso_top),
        right: arm_frame(p, links, Side::Right, torso_top),
        head_yaw: p[JointId::HeadYaw],
        head_center: Point2::new(0.0, torso_top + links.head_radius),
        torso_top,
    }
}
