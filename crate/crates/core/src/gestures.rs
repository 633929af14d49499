//! Arm primitives, the eight traffic signals built from them, and the
//! per-approach permission changes each signal carries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kinematics::{merge_partial, ArmJoint, JointId, PartialPose, RobotPose, Side};

/// Incoming road, named relative to the robot's facing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Front,
    Behind,
    Left,
    Right,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::Front,
        Approach::Behind,
        Approach::Left,
        Approach::Right,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn pair(self) -> Pair {
        match self {
            Approach::Front | Approach::Behind => Pair::FrontBehind,
            Approach::Left | Approach::Right => Pair::LeftRight,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Approach::Front => "front",
            Approach::Behind => "behind",
            Approach::Left => "left",
            Approach::Right => "right",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the two non-conflicting streams through the intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pair {
    FrontBehind,
    LeftRight,
}

impl Pair {
    pub fn approaches(self) -> [Approach; 2] {
        match self {
            Pair::FrontBehind => [Approach::Front, Approach::Behind],
            Pair::LeftRight => [Approach::Left, Approach::Right],
        }
    }

    pub fn other(self) -> Pair {
        match self {
            Pair::FrontBehind => Pair::LeftRight,
            Pair::LeftRight => Pair::FrontBehind,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pair::FrontBehind => "front_behind",
            Pair::LeftRight => "left_right",
        }
    }
}

impl FromStr for Pair {
    type Err = UnknownName;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "front_behind" => Ok(Pair::FrontBehind),
            "left_right" => Ok(Pair::LeftRight),
            _ => Err(UnknownName(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Permission {
    Go,
    Stop,
}

/// Commanded Go/Stop for each approach, indexed by [`Approach`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PermissionState(pub [Permission; 4]);

impl PermissionState {
    pub fn all_stop() -> Self {
        PermissionState([Permission::Stop; 4])
    }

    pub fn get(&self, a: Approach) -> Permission {
        self.0[a.index()]
    }

    pub fn set(&mut self, a: Approach, p: Permission) {
        self.0[a.index()] = p;
    }

    pub fn is_go(&self, a: Approach) -> bool {
        self.get(a) == Permission::Go
    }

    /// Go for both approaches of `pair`.
    pub fn with_grant(mut self, pair: Pair) -> Self {
        for a in pair.approaches() {
            self.set(a, Permission::Go);
        }
        self
    }

    /// Every reachable combination (16 states).
    pub fn enumerate() -> Vec<PermissionState> {
        (0u8..16)
            .map(|bits| {
                let mut s = PermissionState::all_stop();
                for a in Approach::ALL {
                    if bits & (1 << a.index()) != 0 {
                        s.set(a, Permission::Go);
                    }
                }
                s
            })
            .collect()
    }
}

impl Default for PermissionState {
    fn default() -> Self {
        Self::all_stop()
    }
}

/// Reassignments carried by a signal; `None` leaves the approach unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PermissionDelta(pub [Option<Permission>; 4]);

impl PermissionDelta {
    fn assign(mut self, approaches: &[Approach], p: Permission) -> Self {
        for a in approaches {
            self.0[a.index()] = Some(p);
        }
        self
    }

    pub fn get(&self, a: Approach) -> Option<Permission> {
        self.0[a.index()]
    }
}

pub fn apply_delta(state: &PermissionState, d: &PermissionDelta) -> PermissionState {
    let mut out = *state;
    for a in Approach::ALL {
        if let Some(p) = d.get(a) {
            out.set(a, p);
        }
    }
    out
}

/// Crossing streams: some front/behind approach and some left/right approach
/// both have Go.
pub fn is_conflicting(state: &PermissionState) -> bool {
    let fb = state.is_go(Approach::Front) || state.is_go(Approach::Behind);
    let lr = state.is_go(Approach::Left) || state.is_go(Approach::Right);
    fb && lr
}

/// Single-arm named poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmPrimitive {
    Up,
    Down,
    Straight,
    Half,
    HalfUp,
    HalfFold,
    Rest,
}

impl ArmPrimitive {
    pub const ALL: [ArmPrimitive; 7] = [
        ArmPrimitive::Up,
        ArmPrimitive::Down,
        ArmPrimitive::Straight,
        ArmPrimitive::Half,
        ArmPrimitive::HalfUp,
        ArmPrimitive::HalfFold,
        ArmPrimitive::Rest,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadOrientation {
    Center,
    LookLeft,
    LookRight,
}

impl HeadOrientation {
    pub fn yaw(self) -> f64 {
        match self {
            HeadOrientation::Center => 0.0,
            HeadOrientation::LookLeft => 1.1,
            HeadOrientation::LookRight => -1.1,
        }
    }
}

/// Joint targets of one arm primitive, in device order 1..=6.
fn primitive_angles(p: ArmPrimitive, side: Side) -> [f64; 6] {
    // Shoulder abduction flips sign between arms for the mirrored primitives.
    let s = match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    };
    //                          shoulder  half_arm  mid_arm  arm   half_hand  hand
    match p {
        ArmPrimitive::Up => [0.0, -1.11, 0.0, 0.7, 0.0, 0.0],
        ArmPrimitive::Down => [0.0, 1.5, 0.0, 0.0, 0.0, 0.0],
        ArmPrimitive::Straight => [-0.5 * s, 0.0, 0.0, 0.0, 0.0, 0.0],
        ArmPrimitive::Half => [0.5, 0.0, 1.5, 2.29, 0.0, 0.0],
        ArmPrimitive::HalfUp => [0.5 * s, -1.0, 0.0, 0.0, -1.5, 0.0],
        ArmPrimitive::HalfFold => [0.5 * s, -0.7, 0.0, 1.8, -1.5, 0.0],
        ArmPrimitive::Rest => [0.0; 6],
    }
}

/// The six joint assignments of `p` on one arm; the other arm is untouched.
pub fn primitive_partial(p: ArmPrimitive, side: Side) -> PartialPose {
    let angles = primitive_angles(p, side);
    ArmJoint::ALL
        .iter()
        .zip(angles)
        .fold(PartialPose::empty(), |acc, (&joint, v)| {
            acc.with(JointId::arm(side, joint), v)
        })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownName(pub String);

impl fmt::Display for UnknownName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown name `{}`", self.0)
    }
}

impl std::error::Error for UnknownName {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficSignal {
    FrontStop,
    BehindStop,
    FrontBehindStop,
    LeftRightStop,
    AllStop,
    StartLeft,
    StartRight,
    ChangeSign,
}

impl TrafficSignal {
    pub const ALL: [TrafficSignal; 8] = [
        TrafficSignal::FrontStop,
        TrafficSignal::BehindStop,
        TrafficSignal::FrontBehindStop,
        TrafficSignal::LeftRightStop,
        TrafficSignal::AllStop,
        TrafficSignal::StartLeft,
        TrafficSignal::StartRight,
        TrafficSignal::ChangeSign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrafficSignal::FrontStop => "front_stop",
            TrafficSignal::BehindStop => "behind_stop",
            TrafficSignal::FrontBehindStop => "front_behind_stop",
            TrafficSignal::LeftRightStop => "left_right_stop",
            TrafficSignal::AllStop => "all_stop",
            TrafficSignal::StartLeft => "start_left",
            TrafficSignal::StartRight => "start_right",
            TrafficSignal::ChangeSign => "change_sign",
        }
    }

    /// Operator console key for this signal.
    pub fn key(self) -> char {
        match self {
            TrafficSignal::FrontStop => 'F',
            TrafficSignal::BehindStop => 'B',
            TrafficSignal::FrontBehindStop => 'Z',
            TrafficSignal::LeftRightStop => 'X',
            TrafficSignal::AllStop => 'A',
            TrafficSignal::StartLeft => 'L',
            TrafficSignal::StartRight => 'R',
            TrafficSignal::ChangeSign => 'C',
        }
    }

    pub fn from_key(key: char) -> Option<TrafficSignal> {
        let key = key.to_ascii_uppercase();
        TrafficSignal::ALL.into_iter().find(|s| s.key() == key)
    }

    pub fn role(self) -> SignalRole {
        signal_definition(self).role
    }
}

impl fmt::Display for TrafficSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrafficSignal {
    type Err = UnknownName;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TrafficSignal::ALL
            .into_iter()
            .find(|sig| sig.name() == s)
            .ok_or_else(|| UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalRole {
    StopClass,
    GoClass,
    Interim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalDefinition {
    pub left: ArmPrimitive,
    pub right: ArmPrimitive,
    pub head: HeadOrientation,
    pub delta: PermissionDelta,
    pub role: SignalRole,
}

pub fn permission_delta(s: TrafficSignal) -> PermissionDelta {
    use Approach::*;
    use Permission::*;
    let d = PermissionDelta::default();
    match s {
        TrafficSignal::FrontStop => d.assign(&[Front], Stop),
        TrafficSignal::BehindStop => d.assign(&[Behind], Stop),
        TrafficSignal::FrontBehindStop => d.assign(&[Front, Behind], Stop),
        TrafficSignal::LeftRightStop => d.assign(&[Left, Right], Stop),
        TrafficSignal::AllStop | TrafficSignal::ChangeSign => d.assign(&Approach::ALL, Stop),
        TrafficSignal::StartLeft => d.assign(&[Left], Go).assign(&[Front], Stop),
        TrafficSignal::StartRight => d.assign(&[Right], Go),
    }
}

pub fn signal_definition(s: TrafficSignal) -> SignalDefinition {
    use ArmPrimitive::*;
    use HeadOrientation::*;
    let (left, right, head, role) = match s {
        TrafficSignal::FrontStop => (Down, Up, Center, SignalRole::StopClass),
        TrafficSignal::BehindStop => (Straight, Down, Center, SignalRole::StopClass),
        TrafficSignal::FrontBehindStop => (Straight, Up, Center, SignalRole::StopClass),
        TrafficSignal::LeftRightStop => (HalfUp, HalfUp, Center, SignalRole::StopClass),
        TrafficSignal::AllStop => (Up, Up, Center, SignalRole::StopClass),
        TrafficSignal::StartLeft => (Half, Up, LookLeft, SignalRole::GoClass),
        TrafficSignal::StartRight => (Straight, Half, LookRight, SignalRole::GoClass),
        TrafficSignal::ChangeSign => (HalfFold, HalfFold, Center, SignalRole::Interim),
    };
    SignalDefinition {
        left,
        right,
        head,
        delta: permission_delta(s),
        role,
    }
}

/// Both arm primitives and the head merged onto the standing pose.
pub fn signal_target_pose(s: TrafficSignal) -> RobotPose {
    let def = signal_definition(s);
    let base = RobotPose::standing();
    let with_left = merge_partial(&base, &primitive_partial(def.left, Side::Left));
    let mut pose = merge_partial(&with_left, &primitive_partial(def.right, Side::Right));
    pose[JointId::HeadYaw] = def.head.yaw();
    pose
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{clamp_pose, default_limits, forward_kinematics, LinkModel};

    #[test]
    fn right_up_partial() {
        let p = primitive_partial(ArmPrimitive::Up, Side::Right);
        assert_eq!(p.len(), 6);
        assert_eq!(p.get(JointId::RightHalfArm), Some(-1.11));
        assert_eq!(p.get(JointId::RightArm), Some(0.7));
        assert_eq!(p.get(JointId::RightShoulder), Some(0.0));
        assert_eq!(p.get(JointId::LeftHalfArm), None);
    }

    #[test]
    fn left_down_and_half_fold_partials() {
        let p = primitive_partial(ArmPrimitive::Down, Side::Left);
        assert_eq!(p.get(JointId::LeftHalfArm), Some(1.5));
        assert_eq!(p.assigned().filter(|&(_, v)| v != 0.0).count(), 1);
        let p = primitive_partial(ArmPrimitive::HalfFold, Side::Left);
        assert_eq!(p.get(JointId::LeftShoulder), Some(0.5));
        assert_eq!(p.get(JointId::LeftHalfArm), Some(-0.7));
        assert_eq!(p.get(JointId::LeftArm), Some(1.8));
        assert_eq!(p.get(JointId::LeftHalfHand), Some(-1.5));
        let r = primitive_partial(ArmPrimitive::HalfFold, Side::Right);
        assert_eq!(r.get(JointId::RightShoulder), Some(-0.5));
    }

    #[test]
    fn definitions_match_compositions() {
        let d = signal_definition(TrafficSignal::FrontStop);
        assert_eq!((d.left, d.right), (ArmPrimitive::Down, ArmPrimitive::Up));
        assert_eq!(
            signal_definition(TrafficSignal::StartLeft).head,
            HeadOrientation::LookLeft
        );
        let c = signal_definition(TrafficSignal::ChangeSign);
        assert_eq!(
            (c.left, c.right),
            (ArmPrimitive::HalfFold, ArmPrimitive::HalfFold)
        );
        assert_eq!(c.role, SignalRole::Interim);
        assert_eq!(TrafficSignal::StartRight.role(), SignalRole::GoClass);
        assert_eq!(TrafficSignal::AllStop.role(), SignalRole::StopClass);
    }

    #[test]
    fn all_stop_target() {
        let p = signal_target_pose(TrafficSignal::AllStop);
        for side in Side::BOTH {
            assert_eq!(p[JointId::arm(side, ArmJoint::HalfArm)], -1.11);
            assert_eq!(p[JointId::arm(side, ArmJoint::Arm)], 0.7);
        }
        assert_eq!(p[JointId::HeadYaw], 0.0);
        assert_eq!(p[JointId::TorsoLift], 0.35);
    }

    #[test]
    fn target_poses_are_in_limits_and_distinct() {
        let lim = default_limits();
        let poses: Vec<_> = TrafficSignal::ALL
            .iter()
            .map(|&s| signal_target_pose(s))
            .collect();
        for p in &poses {
            assert_eq!(&clamp_pose(p, &lim), p);
        }
        for i in 0..poses.len() {
            for j in i + 1..poses.len() {
                assert!(poses[i].max_rotary_gap(&poses[j]) >= 0.3, "{i} vs {j}");
            }
        }
    }

    #[test]
    fn change_sign_fingertips_meet_above_head() {
        let links = LinkModel::default();
        let f = forward_kinematics(&signal_target_pose(TrafficSignal::ChangeSign), &links);
        let gap = f.left.fingertip.distance(f.right.fingertip);
        assert!(gap < links.shoulder_width, "{gap}");
        assert!(f.left.fingertip.y > f.head_center.y + links.head_radius);
    }

    #[test]
    fn delta_examples() {
        use Permission::*;
        let d = permission_delta(TrafficSignal::FrontBehindStop);
        assert_eq!(d.0, [Some(Stop), Some(Stop), None, None]);
        assert_eq!(
            permission_delta(TrafficSignal::ChangeSign).0,
            [Some(Stop); 4]
        );
        assert_eq!(
            permission_delta(TrafficSignal::StartLeft).get(Approach::Left),
            Some(Go)
        );
        let s = apply_delta(
            &PermissionState::all_stop(),
            &permission_delta(TrafficSignal::StartLeft),
        );
        assert_eq!(s.0, [Stop, Stop, Go, Stop]);
    }

    #[test]
    fn conflicts() {
        use Permission::*;
        assert!(!is_conflicting(&PermissionState([Go, Go, Stop, Stop])));
        assert!(is_conflicting(&PermissionState([Go, Stop, Go, Stop])));
        assert!(!is_conflicting(&PermissionState::all_stop()));
    }

    #[test]
    fn names_and_keys_round_trip() {
        for s in TrafficSignal::ALL {
            assert_eq!(s.name().parse::<TrafficSignal>().unwrap(), s);
            assert_eq!(TrafficSignal::from_key(s.key()), Some(s));
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
        assert!("stop_everything".parse::<TrafficSignal>().is_err());
    }
}
