//! Streaming solver socket.
//!
//! Clients send JSON control messages. While there is work to do the server
//! runs one solver iteration at a time and after each sends a JSON `frame`
//! message immediately followed by a binary message holding the positions as
//! little-endian `f32` triplets. Drags received during an iteration are
//! coalesced: only the latest position per vertex is applied.

use std::collections::BTreeMap;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::response::Response;
use deformlab::energies::EnergyBreakdown;
use deformlab::mesh::Vec3;
use futures_util::FutureExt;
use serde::{Deserialize, Serialize};

use crate::api::{lookup, ApiError};
use crate::session::Advance;
use crate::{AppState, SessionHandle, SUBPROTOCOL};

/// Frames whose largest vertex displacement falls below this fraction of
/// the mesh diameter end a run with a `converged` message.
pub const CONVERGED_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ClientMessage {
    /// Move an existing constraint.
    Drag { vertex: usize, position: [f64; 3] },
    SetLambda { value: f64 },
    /// Iterate without changing anything.
    Run,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ServerMessage {
    #[serde(rename_all = "camelCase")]
    Hello { revision: u64, iteration: usize, vertex_count: usize, lambda: f64 },
    /// Followed by one binary message with the positions.
    #[serde(rename_all = "camelCase")]
    Frame { revision: u64, iteration: usize, energy: EnergyBreakdown, refactored: bool, vertex_count: usize },
    /// The system matrix will be refactored before the next frame.
    Refactor { reason: String, lambda: f64, revision: u64 },
    Converged { revision: u64, iteration: usize, delta: f64 },
    /// A run stopped without converging.
    Idle { reason: String, revision: u64 },
    Error { message: String },
}

pub async fn upgrade(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let handle = lookup(&state, &id).await?;
    Ok(ws.protocols([SUBPROTOCOL]).on_upgrade(move |socket| run(socket, handle)))
}

/// Little-endian `f32` triplets.
pub fn encode_positions(positions: &[Vec3]) -> Vec<u8> {
    let mut out = Vec::with_capacity(positions.len() * 12);
    for p in positions {
        for c in p.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_positions(bytes: &[u8]) -> Vec<[f32; 3]> {
    bytes
        .chunks_exact(12)
        .map(|c| {
            let f = |k: usize| f32::from_le_bytes([c[k], c[k + 1], c[k + 2], c[k + 3]]);
            [f(0), f(4), f(8)]
        })
        .collect()
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    let text = serde_json::to_string(msg).expect("server messages serialize");
    socket.send(Message::Text(text.into())).await.is_ok()
}

/// Control messages gathered between two iterations.
#[derive(Default)]
struct Pending {
    drags: BTreeMap<usize, Vec3>,
    lambda: Option<f64>,
    run: bool,
    stop: bool,
    errors: Vec<String>,
    closed: bool,
}

impl Pending {
    fn absorb(&mut self, msg: Option<Result<Message, axum::Error>>) {
        match msg {
            None | Some(Err(_)) | Some(Ok(Message::Close(_))) => self.closed = true,
            Some(Ok(Message::Text(text))) => match serde_json::from_str::<ClientMessage>(&text) {
                Ok(ClientMessage::Drag { vertex, position }) => {
                    self.drags.insert(vertex, Vec3::from(position));
                }
                Ok(ClientMessage::SetLambda { value }) => self.lambda = Some(value),
                Ok(ClientMessage::Run) => self.run = true,
                Ok(ClientMessage::Stop) => {
                    self.stop = true;
                    self.run = false;
                }
                Err(e) => self.errors.push(format!("bad message: {e}")),
            },
            Some(Ok(Message::Binary(_))) => self.errors.push("binary messages are not accepted".into()),
            Some(Ok(_)) => {}
        }
    }
}

enum Step {
    Frame { msg: ServerMessage, bytes: Vec<u8>, converged: Option<ServerMessage>, budget_spent: bool },
    Failed(String),
}

async fn run(mut socket: WebSocket, handle: SessionHandle) {
    let hello = {
        let s = handle.lock().await;
        ServerMessage::Hello {
            revision: s.revision(),
            iteration: s.iteration(),
            vertex_count: s.mesh().vertex_count(),
            lambda: s.config().lambda,
        }
    };
    if !send(&mut socket, &hello).await {
        return;
    }
    let mut running = false;
    let mut burst = 0usize;
    loop {
        let mut pending = Pending::default();
        if !running {
            pending.absorb(socket.recv().await);
        }
        while !pending.closed {
            match socket.recv().now_or_never() {
                Some(msg) => pending.absorb(msg),
                None => break,
            }
        }
        if pending.closed {
            return;
        }
        let mut replies = std::mem::take(&mut pending.errors)
            .into_iter()
            .map(|message| ServerMessage::Error { message })
            .collect::<Vec<_>>();
        let mut changed = false;
        {
            let mut s = handle.lock().await;
            for (vertex, target) in &pending.drags {
                match s.drag(*vertex, *target) {
                    Ok(()) => changed = true,
                    Err(e) => replies.push(ServerMessage::Error { message: e.to_string() }),
                }
            }
            if let Some(lambda) = pending.lambda {
                match s.update_config(crate::session::ConfigUpdate { lambda: Some(lambda), ..Default::default() }) {
                    Ok(invalidated) => {
                        changed = true;
                        if invalidated {
                            replies.push(ServerMessage::Refactor { reason: "lambda".into(), lambda, revision: s.revision() });
                        }
                    }
                    Err(e) => replies.push(ServerMessage::Error { message: e.to_string() }),
                }
            }
        }
        for r in &replies {
            if !send(&mut socket, r).await {
                return;
            }
        }
        if pending.stop {
            running = false;
            continue;
        }
        if changed || pending.run {
            running = true;
            burst = 0;
        }
        if !running {
            continue;
        }

        let step = {
            let mut guard = handle.clone().lock_owned().await;
            let burst_now = burst + 1;
            tokio::task::spawn_blocking(move || {
                let s = &mut *guard;
                match s.advance(1) {
                    Ok(Advance { energy, refactored, last_delta }) => {
                        let diameter = s.mesh().diameter();
                        let msg = ServerMessage::Frame {
                            revision: s.revision(),
                            iteration: s.iteration(),
                            energy,
                            refactored,
                            vertex_count: s.mesh().vertex_count(),
                        };
                        let converged = (last_delta < CONVERGED_DELTA * diameter).then(|| ServerMessage::Converged {
                            revision: s.revision(),
                            iteration: s.iteration(),
                            delta: last_delta,
                        });
                        let budget_spent = burst_now >= s.config().max_iterations;
                        Step::Frame { msg, bytes: encode_positions(s.positions()), converged, budget_spent }
                    }
                    Err(e) => Step::Failed(e.to_string()),
                }
            })
            .await
            .unwrap_or_else(|e| Step::Failed(e.to_string()))
        };
        burst += 1;
        match step {
            Step::Frame { msg, bytes, converged, budget_spent } => {
                if !send(&mut socket, &msg).await || socket.send(Message::Binary(bytes.into())).await.is_err() {
                    return;
                }
                if let Some(c) = converged {
                    running = false;
                    if !send(&mut socket, &c).await {
                        return;
                    }
                } else if budget_spent {
                    running = false;
                    let revision = handle.lock().await.revision();
                    let idle = ServerMessage::Idle { reason: "max-iterations".into(), revision };
                    if !send(&mut socket, &idle).await {
                        return;
                    }
                }
            }
            Step::Failed(message) => {
                running = false;
                if !send(&mut socket, &ServerMessage::Error { message }).await {
                    return;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_round_trip() {
        let p = [Vec3::new(1.0, -2.5, 0.125), Vec3::new(3.0, 0.0, -1.0)];
        let bytes = encode_positions(&p);
        assert_eq!(bytes.len(), 24);
        assert_eq!(decode_positions(&bytes), vec![[1.0, -2.5, 0.125], [3.0, 0.0, -1.0]]);
    }

    #[test]
    fn message_shapes() {
        let m: ClientMessage = serde_json::from_str(r#"{"type":"drag","vertex":3,"position":[1,2,3]}"#).unwrap();
        assert_eq!(m, ClientMessage::Drag { vertex: 3, position: [1.0, 2.0, 3.0] });
        let m: ClientMessage = serde_json::from_str(r#"{"type":"set-lambda","value":0.9}"#).unwrap();
        assert_eq!(m, ClientMessage::SetLambda { value: 0.9 });
        let hello = ServerMessage::Hello { revision: 1, iteration: 0, vertex_count: 4, lambda: 0.5 };
        let v: serde_json::Value = serde_json::to_value(hello).unwrap();
        assert_eq!(v["type"], "hello");
        assert_eq!(v["vertexCount"], 4);
    }
}
