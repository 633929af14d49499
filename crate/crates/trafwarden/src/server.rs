//! Live operator session.
//!
//! A single stepping task owns the [`Session`]. Socket tasks forward parsed
//! client messages through an ordered channel and receive encoded snapshots
//! from a broadcast channel; a client that falls behind skips frames instead
//! of slowing the simulation.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use log::{info, warn};
use tokio::sync::{broadcast, mpsc};

use trafwarden_core::controller::CommandSource;
use trafwarden_core::wire::{WireMessage, PROTOCOL_VERSION};
use trafwarden_core::{ControlMode, Inbound, ScenarioConfig, Session, Validation};

pub struct ServeOptions {
    pub bind: SocketAddr,
    pub fps: f64,
    pub speed: f64,
    pub mode: ControlMode,
    pub out_dir: Option<PathBuf>,
}

type Reply = mpsc::UnboundedSender<String>;

enum ClientEvent {
    Message(Inbound, Reply),
    Disconnected,
}

#[derive(Clone)]
struct AppState {
    events: mpsc::UnboundedSender<ClientEvent>,
    frames: broadcast::Sender<Arc<str>>,
    hello: Arc<str>,
    next_client: Arc<AtomicU64>,
}

pub async fn serve(cfg: ScenarioConfig, opts: ServeOptions) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(opts.bind)
        .await
        .with_context(|| format!("binding {}", opts.bind))?;
    info!("listening on ws://{}/ws", listener.local_addr()?);

    let (events_tx, events_rx) = mpsc::unbounded_channel();
    let (frames_tx, _) = broadcast::channel(16);
    let hello = WireMessage::Hello {
        version: PROTOCOL_VERSION.to_string(),
        scenario: cfg.clone(),
    }
    .encode();
    let state = AppState {
        events: events_tx,
        frames: frames_tx.clone(),
        hello: hello.into(),
        next_client: Arc::new(AtomicU64::new(0)),
    };
    let stepper = tokio::spawn(step_loop(
        cfg,
        opts.mode,
        opts.fps,
        opts.speed,
        opts.out_dir,
        events_rx,
        frames_tx,
    ));

    let app = Router::new().route("/ws", get(upgrade)).with_state(state);
    tokio::select! {
        res = axum::serve(listener, app) => res.context("serving")?,
        res = stepper => res.context("stepping task")??,
        _ = tokio::signal::ctrl_c() => info!("shutting down"),
    }
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, state))
}

async fn client(socket: WebSocket, state: AppState) {
    let id = state.next_client.fetch_add(1, Ordering::Relaxed);
    info!("client {id} connected");
    let (mut sink, mut stream) = socket.split();
    let mut frames = state.frames.subscribe();
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<String>();
    if sink
        .send(Message::Text(state.hello.to_string().into()))
        .await
        .is_err()
    {
        return;
    }
    loop {
        tokio::select! {
            incoming = stream.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                match WireMessage::decode_frame(&text) {
                    Ok(msgs) => {
                        for msg in msgs {
                            let inbound = match msg {
                                WireMessage::Command { signal, grant } => Inbound::Command { signal, grant },
                                WireMessage::SetMode { mode } => Inbound::SetMode(mode),
                                other => {
                                    let _ = reply_tx.send(WireMessage::error("unexpected", format!("clients may not send {other:?}")).encode());
                                    continue;
                                }
                            };
                            let _ = state.events.send(ClientEvent::Message(inbound, reply_tx.clone()));
                        }
                    }
                    Err(e) => {
                        let _ = reply_tx.send(WireMessage::error("parse", e.to_string()).encode());
                    }
                }
            }
            frame = frames.recv() => match frame {
                Ok(f) => {
                    if sink.send(Message::Text(f.to_string().into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => warn!("client {id} dropped {n} frames"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
            Some(reply) = reply_rx.recv() => {
                if sink.send(Message::Text(reply.into())).await.is_err() {
                    break;
                }
            }
        }
    }
    info!("client {id} disconnected");
    let _ = state.events.send(ClientEvent::Disconnected);
}

async fn step_loop(
    cfg: ScenarioConfig,
    mode: ControlMode,
    fps: f64,
    speed: f64,
    out_dir: Option<PathBuf>,
    mut events: mpsc::UnboundedReceiver<ClientEvent>,
    frames: broadcast::Sender<Arc<str>>,
) -> anyhow::Result<()> {
    let dt = cfg.dt;
    let frame_every = ((1.0 / (fps * dt)).round() as u64).max(1);
    let mut session = Session::new(cfg, mode);
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(dt / speed));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    // Reply handles for queued operator commands, in submission order.
    let mut awaiting: VecDeque<Reply> = VecDeque::new();

    while !session.is_finished() {
        ticker.tick().await;
        while let Ok(ev) = events.try_recv() {
            match ev {
                ClientEvent::Message(inbound, reply) => {
                    if matches!(inbound, Inbound::Command { .. }) {
                        awaiting.push_back(reply);
                    }
                    session.enqueue(inbound);
                }
                ClientEvent::Disconnected => session.enqueue(Inbound::OperatorLost),
            }
        }
        for outcome in session.step() {
            if outcome.command.source != CommandSource::Operator {
                continue;
            }
            let Some(reply) = awaiting.pop_front() else {
                continue;
            };
            if let Validation::Reject(reason) = &outcome.validation {
                let _ = reply.send(WireMessage::error("rejected", reason.clone()).encode());
            }
        }
        if session.sim().step_index().is_multiple_of(frame_every) {
            let snap = WireMessage::State(Box::new(session.snapshot())).encode();
            let _ = frames.send(snap.into());
        }
    }

    let report = session.metrics();
    info!("scenario finished at t={:.1}s", report.clock);
    let _ = frames.send(
        WireMessage::Metrics {
            report: report.clone(),
        }
        .encode()
        .into(),
    );
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("trace.txt"), session.trace().to_text())
            .context("writing trace")?;
        std::fs::write(dir.join("metrics.csv"), report.to_csv()).context("writing metrics")?;
        info!("wrote trace and metrics to {}", dir.display());
    }
    // Keep answering clients with the final state until shut down.
    loop {
        match events.recv().await {
            Some(ClientEvent::Message(_, reply)) => {
                let _ = reply.send(WireMessage::error("finished", "scenario has ended").encode());
            }
            Some(ClientEvent::Disconnected) => {}
            None => return Ok(()),
        }
    }
}
