//! Command trace files.
//!
//! ```text
//! # trafwarden trace v1
//! # scenario <sha256 of canonical scenario text>
//! <time_s>,<source>,<signal>,<result>,<grant>
//! ```
//!
//! `time_s` has six decimals, `source` is `operator` or `policy`, `result` is
//! `accept`, `warn` or `reject`, and `grant` is `front_behind`, `left_right`
//! or `-`. Replaying applies every non-rejected record at the step matching
//! its time, in file order.

use std::fmt::Write as _;

use thiserror::Error;

use crate::controller::{CommandSource, SignalCommand, Validation};
use crate::gestures::{Pair, TrafficSignal};
use crate::scenario::ScenarioConfig;
use crate::sim::{MetricsReport, Simulation};

pub const TRACE_MAGIC: &str = "# trafwarden trace v1";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace was recorded for scenario {recorded}, but the given scenario is {actual}")]
    ScenarioMismatch { recorded: String, actual: String },
    #[error("trace line {line}: time {time} goes backwards")]
    NonMonotonic { line: usize, time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceResult {
    Accept,
    Warn,
    Reject,
}

impl TraceResult {
    pub fn name(self) -> &'static str {
        match self {
            TraceResult::Accept => "accept",
            TraceResult::Warn => "warn",
            TraceResult::Reject => "reject",
        }
    }
}

impl From<&Validation> for TraceResult {
    fn from(v: &Validation) -> Self {
        match v {
            Validation::Accept => TraceResult::Accept,
            Validation::AcceptWithWarning(_) => TraceResult::Warn,
            Validation::Reject(_) => TraceResult::Reject,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub command: SignalCommand,
    pub result: TraceResult,
}

impl TraceRecord {
    pub fn line(&self) -> String {
        let c = &self.command;
        format!(
            "{:.6},{},{},{},{}",
            c.issued_at,
            c.source.name(),
            c.signal.name(),
            self.result.name(),
            c.grant.map_or("-", Pair::name)
        )
    }

    pub fn parse_line(text: &str, line: usize) -> Result<Self, TraceError> {
        let err = |message: String| TraceError::Parse { line, message };
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let issued_at: f64 = fields[0].parse().map_err(|e| err(format!("time: {e}")))?;
        let source: CommandSource = fields[1].parse().map_err(|e| err(format!("source: {e}")))?;
        let signal: TrafficSignal = fields[2].parse().map_err(|e| err(format!("signal: {e}")))?;
        let result = match fields[3] {
            "accept" => TraceResult::Accept,
            "warn" => TraceResult::Warn,
            "reject" => TraceResult::Reject,
            other => return Err(err(format!("result: unknown `{other}`"))),
        };
        let grant = match fields[4] {
            "-" => None,
            g => Some(g.parse::<Pair>().map_err(|e| err(format!("grant: {e}")))?),
        };
        Ok(TraceRecord {
            command: SignalCommand {
                signal,
                issued_at,
                source,
                grant,
            },
            result,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandTrace {
    pub scenario_fingerprint: String,
    pub records: Vec<TraceRecord>,
}

impl CommandTrace {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        CommandTrace {
            scenario_fingerprint: cfg.fingerprint(),
            records: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{TRACE_MAGIC}");
        let _ = writeln!(out, "# scenario {}", self.scenario_fingerprint);
        for r in &self.records {
            let _ = writeln!(out, "{}", r.line());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut fingerprint = None;
        let mut records = Vec::new();
        let mut last_time = f64::NEG_INFINITY;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() || line == TRACE_MAGIC {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(fp) = rest.trim().strip_prefix("scenario ") {
                    fingerprint = Some(fp.trim().to_string());
                }
                continue;
            }
            let record = TraceRecord::parse_line(line, line_no)?;
            if record.command.issued_at < last_time {
                return Err(TraceError::NonMonotonic {
                    line: line_no,
                    time: record.command.issued_at,
                });
            }
            last_time = record.command.issued_at;
            records.push(record);
        }
        let scenario_fingerprint = fingerprint.ok_or(TraceError::Parse {
            line: 0,
            message: "missing `# scenario` header".to_string(),
        })?;
        Ok(CommandTrace {
            scenario_fingerprint,
            records,
        })
    }
}

/// Re-run `cfg` applying the recorded commands at their steps. Fails before
/// simulating anything when the trace belongs to another scenario or seed.
pub fn replay(cfg: &ScenarioConfig, trace: &CommandTrace) -> Result<MetricsReport, TraceError> {
    let actual = cfg.fingerprint();
    if actual != trace.scenario_fingerprint {
        return Err(TraceError::ScenarioMismatch {
            recorded: trace.scenario_fingerprint.clone(),
            actual,
        });
    }
    let mut sim = Simulation::new(cfg.clone());
    let mut pending = trace
        .records
        .iter()
        .filter(|r| r.result != TraceResult::Reject)
        .peekable();
    while !sim.is_finished() {
        let step = sim.step_index();
        while let Some(r) =
            pending.next_if(|r| (r.command.issued_at / cfg.dt).round() as u64 <= step)
        {
            sim.command(r.command.signal, r.command.grant);
        }
        sim.step();
    }
    let mut report = sim.collect_metrics();
    report.commands = trace.records.len() as u64;
    Ok(report)
}
