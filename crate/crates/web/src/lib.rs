//! Browser bindings for the intersection demo.
//!
//! The page drives a [`Demo`] session with keyboard gestures, can hand the
//! intersection to a policy, and compares both policies on chosen arrival
//! rates. Everything crossing into JavaScript is JSON text.

use serde_json::json;
use wasm_bindgen::prelude::*;

use trafwarden_core::gestures::{Pair, TrafficSignal};
use trafwarden_core::{run_headless, ControlMode, Inbound, ScenarioConfig, Session};

/// Simulated seconds a demo session lasts.
pub const DEMO_DURATION: f64 = 3600.0;

/// Signal by key letter (`F`, `B`, `Z`, `X`, `A`, `L`, `R`, `C`) or by name.
pub fn parse_signal(text: &str) -> Result<TrafficSignal, String> {
    let mut chars = text.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        return TrafficSignal::from_key(c.to_ascii_uppercase())
            .ok_or_else(|| format!("no gesture on key `{c}`"));
    }
    text.parse().map_err(|e| format!("{e}"))
}

fn parse_grant(text: &str) -> Result<Option<Pair>, String> {
    match text {
        "" | "-" => Ok(None),
        g => g.parse().map(Some).map_err(|e| format!("{e}")),
    }
}

fn parse_mode(text: &str) -> Result<ControlMode, String> {
    text.parse().map_err(|e| format!("{e}"))
}

/// A live session stepped by the page's animation loop.
pub struct DemoSession {
    session: Session,
    carry: f64,
}

impl DemoSession {
    pub fn new(mode: &str, seed: u64, rates: [f64; 4]) -> Result<Self, String> {
        let cfg = ScenarioConfig {
            arrival_rates: rates,
            seed,
            duration: DEMO_DURATION,
            ..Default::default()
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(DemoSession {
            session: Session::new(cfg, parse_mode(mode)?),
            carry: 0.0,
        })
    }

    /// Advance by `seconds` of simulated time; leftover fractions of a step
    /// carry over to the next call. Returns a note for every command that
    /// was warned about or refused.
    pub fn advance(&mut self, seconds: f64) -> Vec<String> {
        let dt = self.session.sim().config().dt;
        self.carry += seconds.max(0.0);
        let mut notes = Vec::new();
        while self.carry >= dt && !self.session.is_finished() {
            self.carry -= dt;
            for out in self.session.step() {
                if !matches!(out.validation, trafwarden_core::Validation::Accept) {
                    notes.push(format!("{} {}", out.command.signal, out.validation.label()));
                }
            }
        }
        notes
    }

    pub fn gesture(&mut self, signal: &str, grant: &str) -> Result<(), String> {
        let signal = parse_signal(signal)?;
        let grant = parse_grant(grant)?;
        self.session.enqueue(Inbound::Command { signal, grant });
        Ok(())
    }

    pub fn set_mode(&mut self, mode: &str) -> Result<(), String> {
        self.session.enqueue(Inbound::SetMode(parse_mode(mode)?));
        Ok(())
    }

    pub fn snapshot_json(&mut self) -> String {
        serde_json::to_string(&self.session.snapshot()).expect("snapshots serialize")
    }

    pub fn session(&self) -> &Session {
        &self.session
    }
}

/// Run both policies on the same arrivals and return their metrics as JSON.
pub fn compare(rates: [f64; 4], seed: u64, duration: f64) -> Result<String, String> {
    let cfg = ScenarioConfig {
        arrival_rates: rates,
        seed,
        duration,
        ..Default::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let rr = run_headless(&cfg, ControlMode::RoundRobin, seed).report;
    let qp = run_headless(&cfg, ControlMode::QueuePriority, seed).report;
    Ok(json!({ "round_robin": rr, "queue_priority": qp }).to_string())
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub struct Demo(DemoSession);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(
        mode: &str,
        seed: u64,
        front: f64,
        behind: f64,
        left: f64,
        right: f64,
    ) -> Result<Demo, JsError> {
        DemoSession::new(mode, seed, [front, behind, left, right])
            .map(Demo)
            .map_err(js)
    }

    pub fn advance(&mut self, seconds: f64) {
        self.0.advance(seconds);
    }

    pub fn gesture(&mut self, signal: &str, grant: &str) -> Result<(), JsError> {
        self.0.gesture(signal, grant).map_err(js)
    }

    #[wasm_bindgen(js_name = setMode)]
    pub fn set_mode(&mut self, mode: &str) -> Result<(), JsError> {
        self.0.set_mode(mode).map_err(js)
    }

    pub fn snapshot(&mut self) -> String {
        self.0.snapshot_json()
    }
}

#[wasm_bindgen(js_name = comparePolicies)]
pub fn compare_policies(
    front: f64,
    behind: f64,
    left: f64,
    right: f64,
    seed: u64,
    duration: f64,
) -> Result<String, JsError> {
    compare([front, behind, left, right], seed, duration).map_err(js)
}
