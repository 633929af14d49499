//! Signal command generation: the fixed round-robin baseline, the
//! queue-priority policy and the safety interlock that screens every command.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gestures::{
    apply_delta, is_conflicting, permission_delta, Approach, Pair, PermissionState, SignalRole,
    TrafficSignal, UnknownName,
};
use crate::scenario::ScenarioConfig;

const TIME_EPS: f64 = 1e-9;

/// Extra slack after the interim during which a Go may still follow a change sign.
pub const GO_WINDOW_SLACK: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    WizardOfOz,
    RoundRobin,
    QueuePriority,
}

impl ControlMode {
    pub fn is_autonomous(self) -> bool {
        self != ControlMode::WizardOfOz
    }

    pub fn name(self) -> &'static str {
        match self {
            ControlMode::WizardOfOz => "wizard_of_oz",
            ControlMode::RoundRobin => "round_robin",
            ControlMode::QueuePriority => "queue_priority",
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControlMode {
    type Err = UnknownName;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            ControlMode::WizardOfOz,
            ControlMode::RoundRobin,
            ControlMode::QueuePriority,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSource {
    Operator,
    Policy,
}

impl CommandSource {
    pub fn name(self) -> &'static str {
        match self {
            CommandSource::Operator => "operator",
            CommandSource::Policy => "policy",
        }
    }
}

impl FromStr for CommandSource {
    type Err = UnknownName;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "operator" => Ok(CommandSource::Operator),
            "policy" => Ok(CommandSource::Policy),
            _ => Err(UnknownName(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalCommand {
    pub signal: TrafficSignal,
    pub issued_at: f64,
    pub source: CommandSource,
    /// Go granted to a whole pair alongside the gesture. There is no
    /// two-sided Go gesture, so serving a pair is shown by stopping the
    /// opposite pair and granting this.
    pub grant: Option<Pair>,
}

impl SignalCommand {
    pub fn policy(signal: TrafficSignal, issued_at: f64) -> Self {
        SignalCommand {
            signal,
            issued_at,
            source: CommandSource::Policy,
            grant: None,
        }
    }

    pub fn operator(signal: TrafficSignal, issued_at: f64) -> Self {
        SignalCommand {
            source: CommandSource::Operator,
            ..Self::policy(signal, issued_at)
        }
    }

    pub fn with_grant(mut self, pair: Pair) -> Self {
        self.grant = Some(pair);
        self
    }

    pub fn is_go_class(&self) -> bool {
        self.signal.role() == SignalRole::GoClass || self.grant.is_some()
    }

    /// Commanded permissions after this command.
    pub fn resulting_state(&self, state: &PermissionState) -> PermissionState {
        let next = apply_delta(state, &permission_delta(self.signal));
        match self.grant {
            Some(pair) => next.with_grant(pair),
            None => next,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub mode: ControlMode,
    pub min_green: f64,
    pub max_green: f64,
    pub interim: f64,
    pub sensor_noise: f64,
}

impl PolicyConfig {
    pub fn from_scenario(cfg: &ScenarioConfig, mode: ControlMode) -> Self {
        PolicyConfig {
            mode,
            min_green: cfg.min_green,
            max_green: cfg.max_green,
            interim: cfg.interim,
            sensor_noise: cfg.sensor_noise,
        }
    }

    /// Seconds between policy decisions.
    pub fn poll_interval(&self) -> f64 {
        self.interim / 10.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    /// Stopped vehicles before each stop line, indexed by [`Approach`].
    pub queues: [u32; 4],
    /// No vehicle is inside the box or committed to entering it.
    pub box_clear: bool,
    pub timestamp: f64,
}

impl SensorReading {
    pub fn queue(&self, a: Approach) -> u32 {
        self.queues[a.index()]
    }
}

/// A stable set of approaches holding Go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    FrontBehindGo,
    LeftRightGo,
    LeftGo,
    RightGo,
    AllStop,
}

impl Phase {
    pub fn served(self) -> &'static [Approach] {
        match self {
            Phase::FrontBehindGo => &[Approach::Front, Approach::Behind],
            Phase::LeftRightGo => &[Approach::Left, Approach::Right],
            Phase::LeftGo => &[Approach::Left],
            Phase::RightGo => &[Approach::Right],
            Phase::AllStop => &[],
        }
    }

    fn demand(self, q: &SensorReading) -> u32 {
        self.served().iter().map(|&a| q.queue(a)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "phase")]
pub enum ControllerPhase {
    Serving(Phase),
    /// Change sign shown; `Phase` is entered once the interval ends.
    Interim(Phase),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub phase: ControllerPhase,
    pub since: f64,
}

impl Default for ControllerState {
    fn default() -> Self {
        ControllerState {
            phase: ControllerPhase::Serving(Phase::AllStop),
            since: 0.0,
        }
    }
}

/// Commands that put `phase` into effect.
pub fn phase_entry_commands(phase: Phase, now: f64) -> Vec<SignalCommand> {
    let cmd =
        match phase {
            Phase::FrontBehindGo => SignalCommand::policy(TrafficSignal::LeftRightStop, now)
                .with_grant(Pair::FrontBehind),
            Phase::LeftRightGo => SignalCommand::policy(TrafficSignal::FrontBehindStop, now)
                .with_grant(Pair::LeftRight),
            Phase::LeftGo => SignalCommand::policy(TrafficSignal::StartLeft, now),
            Phase::RightGo => SignalCommand::policy(TrafficSignal::StartRight, now),
            Phase::AllStop => SignalCommand::policy(TrafficSignal::AllStop, now),
        };
    vec![cmd]
}

/// Highest-demand phase other than `exclude`; ties go to the earlier entry,
/// so a lone left or right queue gets its single-approach phase.
fn best_phase(q: &SensorReading, exclude: Phase) -> Phase {
    let mut best: Option<(Phase, u32)> = None;
    for p in [
        Phase::FrontBehindGo,
        Phase::LeftGo,
        Phase::RightGo,
        Phase::LeftRightGo,
    ] {
        if p == exclude {
            continue;
        }
        let d = p.demand(q);
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((p, d));
        }
    }
    best.map(|(p, _)| p).unwrap_or(Phase::FrontBehindGo)
}

#[derive(Debug, Clone)]
pub struct Controller {
    cfg: PolicyConfig,
    state: ControllerState,
}

impl Controller {
    pub fn new(cfg: PolicyConfig) -> Self {
        Controller {
            cfg,
            state: ControllerState::default(),
        }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    fn enter(&mut self, phase: ControllerPhase, now: f64) {
        self.state = ControllerState { phase, since: now };
    }

    fn age(&self, now: f64) -> f64 {
        now - self.state.since
    }

    fn begin_interim(&mut self, next: Phase, now: f64) -> SignalCommand {
        self.enter(ControllerPhase::Interim(next), now);
        SignalCommand::policy(TrafficSignal::ChangeSign, now)
    }

    fn finish_interim(
        &mut self,
        next: Phase,
        now: f64,
        sensors: &SensorReading,
    ) -> Option<SignalCommand> {
        if self.age(now) + TIME_EPS >= self.cfg.interim && sensors.box_clear {
            self.enter(ControllerPhase::Serving(next), now);
            phase_entry_commands(next, now).into_iter().next()
        } else {
            None
        }
    }

    /// Take over a running intersection: show the change sign now and enter
    /// the phase the active policy would pick once the interval ends.
    pub fn take_over(&mut self, now: f64, sensors: &SensorReading) -> SignalCommand {
        let next = match self.cfg.mode {
            ControlMode::QueuePriority => best_phase(sensors, Phase::AllStop),
            _ => Phase::FrontBehindGo,
        };
        self.begin_interim(next, now)
    }

    /// Fixed alternation between the two pairs, `max_green` each, ignoring
    /// demand.
    pub fn round_robin(&mut self, now: f64, sensors: &SensorReading) -> Option<SignalCommand> {
        match self.state.phase {
            ControllerPhase::Serving(Phase::AllStop) => {
                self.enter(ControllerPhase::Serving(Phase::FrontBehindGo), now);
                phase_entry_commands(Phase::FrontBehindGo, now)
                    .into_iter()
                    .next()
            }
            ControllerPhase::Serving(p) => {
                if self.age(now) + TIME_EPS >= self.cfg.max_green {
                    let next = if p == Phase::FrontBehindGo {
                        Phase::LeftRightGo
                    } else {
                        Phase::FrontBehindGo
                    };
                    Some(self.begin_interim(next, now))
                } else {
                    None
                }
            }
            ControllerPhase::Interim(next) => self.finish_interim(next, now, sensors),
        }
    }

    /// Serve the heavier queue. A switch is considered once the phase is
    /// `min_green` old and happens when the waiting queues outnumber the
    /// served ones; at `max_green` any waiting vehicle forces it. Ties keep
    /// the current phase.
    pub fn queue_priority(&mut self, now: f64, sensors: &SensorReading) -> Option<SignalCommand> {
        match self.state.phase {
            ControllerPhase::Serving(Phase::AllStop) => {
                let total: u32 = sensors.queues.iter().sum();
                if total == 0 {
                    return None;
                }
                let next = best_phase(sensors, Phase::AllStop);
                self.enter(ControllerPhase::Serving(next), now);
                phase_entry_commands(next, now).into_iter().next()
            }
            ControllerPhase::Serving(p) => {
                let age = self.age(now);
                if age + TIME_EPS < self.cfg.min_green {
                    return None;
                }
                let served = p.demand(sensors);
                let waiting: u32 = sensors.queues.iter().sum::<u32>() - served;
                let forced = age + TIME_EPS >= self.cfg.max_green && waiting > 0;
                if waiting > served || forced {
                    Some(self.begin_interim(best_phase(sensors, p), now))
                } else {
                    None
                }
            }
            ControllerPhase::Interim(next) => self.finish_interim(next, now, sensors),
        }
    }

    pub fn poll(&mut self, now: f64, sensors: &SensorReading) -> Option<SignalCommand> {
        match self.cfg.mode {
            ControlMode::WizardOfOz => None,
            ControlMode::RoundRobin => self.round_robin(now, sensors),
            ControlMode::QueuePriority => self.queue_priority(now, sensors),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result", content = "reason")]
pub enum Validation {
    Accept,
    AcceptWithWarning(String),
    Reject(String),
}

impl Validation {
    pub fn is_applied(&self) -> bool {
        !matches!(self, Validation::Reject(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            Validation::Accept => "accept",
            Validation::AcceptWithWarning(_) => "warn",
            Validation::Reject(_) => "reject",
        }
    }
}

/// What the interlock remembers about earlier commands.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CommandHistory {
    pub last_change_sign: Option<f64>,
    pub go_issued: bool,
}

impl CommandHistory {
    pub fn record(&mut self, cmd: &SignalCommand) {
        if cmd.signal == TrafficSignal::ChangeSign {
            self.last_change_sign = Some(cmd.issued_at);
        }
        if cmd.is_go_class() {
            self.go_issued = true;
        }
    }
}

/// Screen a command against the commanded permissions.
///
/// Two problems are detected: the result would give crossing streams Go, or
/// a Go arrives without a change sign in the preceding `interim + 5` s (the
/// very first Go of a session is exempt). Autonomous modes reject either;
/// the operator is warned but stays in charge.
pub fn validate_command(
    state: &PermissionState,
    cmd: &SignalCommand,
    mode: ControlMode,
    history: &CommandHistory,
    interim: f64,
) -> Validation {
    let mut problems = Vec::new();
    if is_conflicting(&cmd.resulting_state(state)) {
        problems.push(format!("{} would give crossing streams Go", cmd.signal));
    }
    if cmd.is_go_class() && history.go_issued {
        let recent = history
            .last_change_sign
            .is_some_and(|t| cmd.issued_at - t <= interim + GO_WINDOW_SLACK + TIME_EPS);
        if !recent {
            problems.push(format!(
                "{} issued without a preceding change_sign",
                cmd.signal
            ));
        }
    }
    if problems.is_empty() {
        Validation::Accept
    } else if mode.is_autonomous() {
        Validation::Reject(problems.join("; "))
    } else {
        Validation::AcceptWithWarning(problems.join("; "))
    }
}
