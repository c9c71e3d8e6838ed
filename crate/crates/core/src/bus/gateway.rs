//! WebSocket gateway bridging JSON envelopes to the bus.
//!
//! Outgoing messages to a client have the shape
//! `{"topic": .., "type": .., "stamp_ns": .., "data": {..}}`.
//!
//! Incoming client messages:
//!
//! * `{"op": "sub", "topic": "rpbi/clock"}` / `{"op": "unsub", "topic": ..}`
//! * `{"op": "pub", "topic": .., "type": .., "stamp_ns": .., "data": ..}`; the
//!   `op` key may be omitted for publications.
//! * `{"op": "call", "service": .., "request": .., "id": ..}`, answered with
//!   `{"op": "response", "id": .., "service": .., "ok": true, "response": ..}`
//!   or `{"op": "response", .., "ok": false, "error": ".."}`.
//!
//! Malformed input yields `{"error": ".."}` to that client only.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};
use tungstenite::{Message, WebSocket};

use super::{Bus, Envelope, NodeHandle, Subscription, DEFAULT_QUEUE_DEPTH};

const POLL: Duration = Duration::from_millis(5);

pub struct Gateway {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    clients: Arc<AtomicUsize>,
    acceptor: Option<JoinHandle<()>>,
}

impl Gateway {
    /// Starts serving on `addr`; returns once the socket is bound.
    pub fn serve(bus: &Bus, addr: impl ToSocketAddrs) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let clients = Arc::new(AtomicUsize::new(0));
        let bus = bus.clone();
        let (stop2, clients2) = (stop.clone(), clients.clone());
        let acceptor = thread::spawn(move || {
            let mut workers = Vec::new();
            let mut n = 0usize;
            while !stop2.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        n += 1;
                        let node = bus.node(&format!("gateway/client{n}"));
                        let (stop3, clients3) = (stop2.clone(), clients2.clone());
                        workers.push(thread::spawn(move || {
                            clients3.fetch_add(1, Ordering::SeqCst);
                            if let Err(e) = serve_client(node, stream, &stop3) {
                                log::debug!("gateway client {peer} ended: {e}");
                            }
                            clients3.fetch_sub(1, Ordering::SeqCst);
                        }));
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL * 4),
                    Err(e) => {
                        log::warn!("gateway accept failed: {e}");
                        thread::sleep(POLL * 4);
                    }
                }
                workers.retain(|w: &JoinHandle<()>| !w.is_finished());
            }
            for w in workers {
                let _ = w.join();
            }
        });
        Ok(Self {
            local_addr,
            stop,
            clients,
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn client_count(&self) -> usize {
        self.clients.load(Ordering::SeqCst)
    }

    pub fn shutdown(mut self) {
        self.stop_all();
    }

    fn stop_all(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.stop_all();
    }
}

fn serve_client(node: NodeHandle, stream: TcpStream, stop: &AtomicBool) -> tungstenite::Result<()> {
    stream.set_nonblocking(false)?;
    let mut ws = tungstenite::accept(stream.try_clone()?).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    stream.set_read_timeout(Some(POLL))?;
    let mut subs: HashMap<String, Subscription> = HashMap::new();
    while !stop.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                if let Some(reply) = handle_client_message(&node, &mut subs, text.as_str()) {
                    ws.send(Message::text(reply.to_string()))?;
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(e),
        }
        forward_subscriptions(&mut ws, &subs)?;
    }
    // subscriptions drop with `subs`
    Ok(())
}

fn forward_subscriptions(
    ws: &mut WebSocket<TcpStream>,
    subs: &HashMap<String, Subscription>,
) -> tungstenite::Result<()> {
    let mut pending = false;
    for sub in subs.values() {
        for env in sub.drain() {
            match serde_json::to_string(&env) {
                Ok(s) => {
                    ws.write(Message::text(s))?;
                    pending = true;
                }
                Err(e) => log::warn!("gateway: cannot encode envelope on `{}`: {e}", env.topic),
            }
        }
    }
    if pending {
        ws.flush()?;
    }
    Ok(())
}

/// Applies one client message. Returns the reply to send, if any.
pub fn handle_client_message(node: &NodeHandle, subs: &mut HashMap<String, Subscription>, text: &str) -> Option<Value> {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return Some(json!({ "error": format!("malformed JSON: {e}") })),
    };
    let op = value.get("op").and_then(Value::as_str).unwrap_or("pub");
    match op {
        "sub" => {
            let Some(topic) = value.get("topic").and_then(Value::as_str) else {
                return Some(json!({ "error": "sub requires a string `topic`" }));
            };
            subs.entry(topic.to_string())
                .or_insert_with(|| node.subscribe_with_depth(topic, DEFAULT_QUEUE_DEPTH));
            None
        }
        "unsub" => {
            let Some(topic) = value.get("topic").and_then(Value::as_str) else {
                return Some(json!({ "error": "unsub requires a string `topic`" }));
            };
            subs.remove(topic);
            None
        }
        "pub" => {
            let mut value = value;
            if let Some(obj) = value.as_object_mut() {
                obj.remove("op");
            }
            match serde_json::from_value::<Envelope>(value) {
                Ok(env) => match node.send(&env.topic.clone(), env.stamp_ns, env.payload) {
                    Ok(()) => None,
                    Err(e) => Some(json!({ "error": e.to_string() })),
                },
                Err(e) => Some(json!({ "error": format!("bad envelope: {e}") })),
            }
        }
        "call" => {
            let id = value.get("id").cloned().unwrap_or(Value::Null);
            let Some(service) = value.get("service").and_then(Value::as_str) else {
                return Some(json!({ "error": "call requires a string `service`", "id": id }));
            };
            let request = value.get("request").cloned().unwrap_or(Value::Null);
            Some(match node.call(service, request) {
                Ok(resp) => json!({
                    "op": "response", "id": id, "service": service, "ok": true, "response": resp
                }),
                Err(e) => json!({
                    "op": "response", "id": id, "service": service, "ok": false, "error": e.to_string()
                }),
            })
        }
        other => Some(json!({ "error": format!("unknown op `{other}`") })),
    }
}
