//! TCP transport: mirrors selected topics between buses in different processes.
//!
//! Each connection carries length-prefixed frames (see [`super::wire`]) in both
//! directions. Envelopes published locally on an exported topic are written to
//! every peer; frames received from a peer are published on the local bus.
//! Envelopes that arrived through a bridge are never sent back out of it.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::wire::{decode_frame, encode_frame};
use super::{Bus, NodeHandle, DEFAULT_QUEUE_DEPTH};

const POLL: Duration = Duration::from_millis(20);
const MAX_FRAME: usize = 256 << 20;

pub struct TcpBridge {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
}

impl TcpBridge {
    /// Accepts peers on `addr` (use port 0 for an ephemeral port).
    pub fn listen(bus: &Bus, addr: impl ToSocketAddrs, export: &[&str]) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let streams = Arc::new(Mutex::new(Vec::new()));
        let node = Arc::new(bus.node(&format!("tcp_bridge@{local_addr}")));
        let export: Vec<String> = export.iter().map(|s| s.to_string()).collect();

        let accept_stop = stop.clone();
        let accept_streams = streams.clone();
        let acceptor = thread::spawn(move || {
            let mut workers = Vec::new();
            while !accept_stop.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        log::info!("tcp bridge: peer {peer} connected");
                        if let Ok(clone) = stream.try_clone() {
                            accept_streams.lock().unwrap().push(clone);
                        }
                        workers.extend(spawn_link(node.clone(), stream, &export, accept_stop.clone()));
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                    Err(e) => {
                        log::warn!("tcp bridge accept failed: {e}");
                        thread::sleep(POLL);
                    }
                }
            }
            for w in workers {
                let _ = w.join();
            }
        });
        Ok(Self {
            local_addr,
            stop,
            threads: vec![acceptor],
            streams,
        })
    }

    /// Connects to a listening bridge.
    pub fn connect(bus: &Bus, addr: impl ToSocketAddrs, export: &[&str]) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        let local_addr = stream.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let node = Arc::new(bus.node(&format!("tcp_bridge@{local_addr}")));
        let export: Vec<String> = export.iter().map(|s| s.to_string()).collect();
        let streams = Arc::new(Mutex::new(vec![stream.try_clone()?]));
        let threads = spawn_link(node, stream, &export, stop.clone());
        Ok(Self {
            local_addr,
            stop,
            threads,
            streams,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn shutdown(mut self) {
        self.stop_all();
    }

    fn stop_all(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for s in self.streams.lock().unwrap().drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for TcpBridge {
    fn drop(&mut self) {
        self.stop_all();
    }
}

fn spawn_link(
    node: Arc<NodeHandle>,
    stream: TcpStream,
    export: &[String],
    stop: Arc<AtomicBool>,
) -> Vec<JoinHandle<()>> {
    let _ = stream.set_nodelay(true);
    let Ok(mut write_half) = stream.try_clone() else {
        return Vec::new();
    };
    let topics: Vec<&str> = export.iter().map(String::as_str).collect();
    let sub = node.subscribe_foreign(&topics, DEFAULT_QUEUE_DEPTH);
    let writer_stop = stop.clone();
    let writer = thread::spawn(move || {
        while !writer_stop.load(Ordering::Relaxed) {
            let Some(env) = sub.recv_timeout(POLL) else {
                continue;
            };
            match encode_frame(&env) {
                Ok(frame) => {
                    if write_half.write_all(&frame).is_err() {
                        break;
                    }
                }
                Err(e) => log::warn!("tcp bridge: dropping unencodable envelope: {e}"),
            }
        }
    });
    let mut read_half = stream;
    let _ = read_half.set_read_timeout(Some(POLL));
    let reader = thread::spawn(move || {
        let mut buf: Vec<u8> = Vec::new();
        let mut chunk = [0u8; 64 * 1024];
        while !stop.load(Ordering::Relaxed) {
            match read_half.read(&mut chunk) {
                Ok(0) => break,
                Ok(n) => buf.extend_from_slice(&chunk[..n]),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
                Err(_) => break,
            }
            while buf.len() >= 4 {
                let total = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
                if !(4..=MAX_FRAME).contains(&total) {
                    log::warn!("tcp bridge: bad frame length {total}, closing link");
                    return;
                }
                if buf.len() < total {
                    break;
                }
                match decode_frame(&buf[..total]) {
                    Ok(env) => {
                        if let Err(e) = node.send(&env.topic.clone(), env.stamp_ns, env.payload) {
                            log::warn!("tcp bridge: republish failed: {e}");
                        }
                    }
                    Err(e) => log::warn!("tcp bridge: undecodable frame: {e}"),
                }
                buf.drain(..total);
            }
        }
    });
    vec![writer, reader]
}
