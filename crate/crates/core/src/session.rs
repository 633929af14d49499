//! A running intersection: simulation, controller, interlock and trace
//! stepped together. Shared by headless runs, the live server and the
//! browser demo.

use std::collections::VecDeque;

use crate::controller::{
    validate_command, CommandHistory, CommandSource, ControlMode, Controller, PolicyConfig,
    SensorReading, SignalCommand, Validation,
};
use crate::gestures::{is_conflicting, Approach, Pair, TrafficSignal};
use crate::kinematics::{forward_kinematics, LinkModel};
use crate::rng::SplitMix64;
use crate::scenario::ScenarioConfig;
use crate::sim::{MetricsReport, Simulation};
use crate::trace::{CommandTrace, TraceRecord};
use crate::wire::{StateSnapshot, VehicleView};

/// Keeps the sensor-noise stream independent of arrivals.
const NOISE_STREAM: u64 = 0x6e6f_6973_655f_7371;

/// Inputs merged at the next step boundary, in arrival order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inbound {
    Command {
        signal: TrafficSignal,
        grant: Option<Pair>,
    },
    SetMode(ControlMode),
    /// The operator connection was lost.
    OperatorLost,
}

/// How an inbound command was handled.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub command: SignalCommand,
    pub validation: Validation,
}

pub struct Session {
    sim: Simulation,
    controller: Controller,
    mode: ControlMode,
    history: CommandHistory,
    inbox: VecDeque<Inbound>,
    trace: CommandTrace,
    pending_warnings: Vec<String>,
    seq: u64,
    noise: SplitMix64,
    poll_every: u64,
    links: LinkModel,
}

impl Session {
    /// `cfg` must already be validated.
    pub fn new(cfg: ScenarioConfig, mode: ControlMode) -> Self {
        let policy = PolicyConfig::from_scenario(&cfg, mode);
        let poll_every = ((policy.poll_interval() / cfg.dt).round() as u64).max(1);
        Session {
            noise: SplitMix64::new(cfg.seed ^ NOISE_STREAM),
            trace: CommandTrace::new(&cfg),
            controller: Controller::new(policy),
            sim: Simulation::new(cfg),
            mode,
            history: CommandHistory::default(),
            inbox: VecDeque::new(),
            pending_warnings: Vec::new(),
            seq: 0,
            poll_every,
            links: LinkModel::default(),
        }
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn trace(&self) -> &CommandTrace {
        &self.trace
    }

    pub fn is_finished(&self) -> bool {
        self.sim.is_finished()
    }

    pub fn enqueue(&mut self, msg: Inbound) {
        self.inbox.push_back(msg);
    }

    pub fn sensors(&mut self) -> SensorReading {
        let sigma = self.controller.config().sensor_noise;
        let mut queues = self.sim.queue_lengths();
        if sigma > 0.0 {
            for q in queues.iter_mut() {
                let noisy = (*q as f64 + sigma * self.noise.standard_normal()).round();
                *q = noisy.max(0.0) as u32;
            }
        }
        SensorReading {
            queues,
            box_clear: self.sim.clearing_vehicles() == 0,
            timestamp: self.sim.now(),
        }
    }

    fn submit(&mut self, cmd: SignalCommand, validation: Validation) -> CommandOutcome {
        if let Validation::AcceptWithWarning(w) | Validation::Reject(w) = &validation {
            self.pending_warnings
                .push(format!("{}: {w}", validation.label()));
        }
        if validation.is_applied() {
            self.sim.command(cmd.signal, cmd.grant);
            self.history.record(&cmd);
        }
        self.trace.records.push(TraceRecord {
            command: cmd,
            result: (&validation).into(),
        });
        CommandOutcome {
            command: cmd,
            validation,
        }
    }

    fn screen(&self, cmd: &SignalCommand) -> Validation {
        validate_command(
            self.sim.commanded(),
            cmd,
            self.mode,
            &self.history,
            self.sim.config().interim,
        )
    }

    fn switch_mode(&mut self, mode: ControlMode) -> Option<CommandOutcome> {
        if mode == self.mode {
            return None;
        }
        self.mode = mode;
        if !mode.is_autonomous() {
            return None;
        }
        let now = self.sim.now();
        self.controller = Controller::new(PolicyConfig::from_scenario(self.sim.config(), mode));
        let sensors = self.sensors();
        let cmd = self.controller.take_over(now, &sensors);
        let v = self.screen(&cmd);
        Some(self.submit(cmd, v))
    }

    /// Apply queued inputs, let the policy decide, then advance the
    /// simulation one step. Returns the outcome of every command handled.
    pub fn step(&mut self) -> Vec<CommandOutcome> {
        let now = self.sim.now();
        let mut outcomes = Vec::new();
        while let Some(msg) = self.inbox.pop_front() {
            match msg {
                Inbound::Command { signal, grant } => {
                    let cmd = SignalCommand {
                        signal,
                        issued_at: now,
                        source: CommandSource::Operator,
                        grant,
                    };
                    let v = if self.mode.is_autonomous() {
                        Validation::Reject(format!(
                            "operator gestures are disabled in {} mode",
                            self.mode
                        ))
                    } else {
                        self.screen(&cmd)
                    };
                    outcomes.push(self.submit(cmd, v));
                }
                Inbound::SetMode(mode) => outcomes.extend(self.switch_mode(mode)),
                Inbound::OperatorLost => {
                    if !self.mode.is_autonomous() {
                        let cmd = SignalCommand::policy(TrafficSignal::AllStop, now);
                        let v = self.screen(&cmd);
                        outcomes.push(self.submit(cmd, v));
                    }
                }
            }
        }
        if self.mode.is_autonomous() && self.sim.step_index().is_multiple_of(self.poll_every) {
            let sensors = self.sensors();
            if let Some(cmd) = self.controller.poll(now, &sensors) {
                let v = self.screen(&cmd);
                outcomes.push(self.submit(cmd, v));
            }
        }
        self.sim.step();
        outcomes
    }

    pub fn run_to_end(&mut self) {
        while !self.is_finished() {
            self.step();
        }
    }

    pub fn metrics(&self) -> MetricsReport {
        let mut report = self.sim.collect_metrics();
        report.commands = self.trace.records.len() as u64;
        report
    }

    /// Immutable view of the current state. Sequence numbers increase by one
    /// per snapshot; warnings raised since the previous snapshot are drained
    /// into this one.
    pub fn snapshot(&mut self) -> StateSnapshot {
        self.seq += 1;
        let sim = &self.sim;
        let mut warnings = std::mem::take(&mut self.pending_warnings);
        if is_conflicting(&sim.effective().state) {
            warnings.push("conflict: crossing streams both have effective go".to_string());
        }
        let per_approach =
            |f: &dyn Fn(Approach) -> _| Approach::ALL.iter().map(|&a| (a, f(a))).collect();
        let queues = sim.queue_lengths();
        StateSnapshot {
            seq: self.seq,
            clock: sim.now(),
            mode: self.mode,
            vehicles: sim
                .vehicles()
                .map(|v| VehicleView {
                    id: v.id,
                    approach: v.approach,
                    position: v.position,
                    speed: v.speed,
                })
                .collect(),
            permissions: per_approach(&|a| sim.commanded().get(a)),
            effective_permissions: per_approach(&|a| sim.effective().state.get(a)),
            robot_pose: sim.pose().iter().collect(),
            fk_points: forward_kinematics(sim.pose(), &self.links),
            queues: Approach::ALL
                .iter()
                .map(|&a| (a, queues[a.index()]))
                .collect(),
            current_signal: sim.current_signal(),
            warnings,
        }
    }
}

/// Output of a complete headless run.
#[derive(Debug, Clone)]
pub struct HeadlessRun {
    pub report: MetricsReport,
    pub csv: String,
    pub trace: String,
}

/// Run `cfg` for its full duration under `mode`, with `seed` replacing the
/// scenario's seed.
pub fn run_headless(cfg: &ScenarioConfig, mode: ControlMode, seed: u64) -> HeadlessRun {
    let cfg = ScenarioConfig {
        seed,
        ..cfg.clone()
    };
    let mut session = Session::new(cfg, mode);
    session.run_to_end();
    let report = session.metrics();
    HeadlessRun {
        csv: report.to_csv(),
        trace: session.trace().to_text(),
        report,
    }
}
