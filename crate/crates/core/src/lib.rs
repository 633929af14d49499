//! Four-way intersection simulator directed by a gesturing traffic-police
//! robot.
//!
//! The robot's arms are driven through named poses ([`gestures`]) with
//! rate-limited joint motion ([`kinematics`]). Drivers in the [`sim`] obey a
//! gesture's permission change only once the robot has finished it and they
//! have reacted. Commands come from a human operator or from a policy in
//! [`controller`]; [`session`] steps all of it together and records a
//! replayable [`trace`].

pub mod controller;
pub mod gestures;
pub mod kinematics;
pub mod rng;
pub mod scenario;
pub mod session;
pub mod sim;
pub mod trace;
pub mod wire;

pub use controller::{ControlMode, SignalCommand, Validation};
pub use gestures::{Approach, Pair, Permission, PermissionState, TrafficSignal};
pub use kinematics::{JointId, RobotPose};
pub use scenario::{load_scenario, ConfigError, ScenarioConfig};
pub use session::{run_headless, Inbound, Session};
pub use sim::{MetricsReport, Simulation};
