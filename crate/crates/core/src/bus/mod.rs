//! Typed publish/subscribe and request/response messaging.
//!
//! The [`Bus`] is an in-process broker. Nodes obtain a [`NodeHandle`], which
//! applies its remap table to every topic and service name it touches.
//! Subscriptions are bounded FIFO queues with drop-oldest overflow. The
//! [`tcp`] and [`gateway`] modules bridge the same bus to other processes.

pub mod gateway;
pub mod msg;
pub mod tcp;
pub mod wire;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Sender};
use serde_json::Value;
use thiserror::Error;

pub use msg::*;

pub const DEFAULT_QUEUE_DEPTH: usize = 64;
pub const DEFAULT_CALL_TIMEOUT: Duration = Duration::from_secs(2);
pub const DEFAULT_TCP_PORT: u16 = 9870;
pub const DEFAULT_WS_PORT: u16 = 9871;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BusError {
    #[error("invalid name `{0}`")]
    InvalidName(String),
    #[error("topic `{0}` was not advertised by this node")]
    NotAdvertised(String),
    #[error("stamp {stamp} on `{topic}` precedes previous stamp {last}")]
    NonMonotonicStamp { topic: String, stamp: u64, last: u64 },
    #[error("invalid {type_name} payload: {reason}")]
    InvalidPayload { type_name: &'static str, reason: String },
    #[error("service `{0}` not found")]
    ServiceNotFound(String),
    #[error("service `{0}` is already registered")]
    ServiceExists(String),
    #[error("service `{service}` failed: {message}")]
    ServiceFailed { service: String, message: String },
    #[error("call to `{0}` timed out")]
    Timeout(String),
}

/// Single-lookup name remapping: returns `table[name]` or `name` itself.
pub fn remap<'a>(table: &'a HashMap<String, String>, name: &'a str) -> &'a str {
    table.get(name).map(String::as_str).unwrap_or(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Publishes,
    Subscribes,
    Serves,
}

/// One edge of the live topic graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GraphEdge {
    pub node: String,
    pub kind: EdgeKind,
    pub name: String,
}

struct QueueState {
    buf: VecDeque<Envelope>,
    dropped: u64,
    closed: bool,
}

struct SubQueue {
    depth: usize,
    state: Mutex<QueueState>,
    ready: Condvar,
}

impl SubQueue {
    fn push(&self, env: Envelope) {
        let mut st = self.state.lock().unwrap();
        if st.buf.len() >= self.depth {
            st.buf.pop_front();
            st.dropped += 1;
            log::debug!("subscription queue full, dropped oldest on `{}`", env.topic);
        }
        st.buf.push_back(env);
        drop(st);
        self.ready.notify_one();
    }
}

struct SubscriberSlot {
    id: u64,
    queue: Arc<SubQueue>,
    exclude_origin: Option<u64>,
}

type ServiceRequest = (Value, Sender<Result<Value, String>>);

#[derive(Default)]
struct Registry {
    topics: HashMap<String, Vec<SubscriberSlot>>,
    services: HashMap<String, Sender<ServiceRequest>>,
    graph: BTreeSet<(u64, GraphEdge)>,
}

struct BusInner {
    registry: Mutex<Registry>,
    next_id: AtomicU64,
}

/// In-process message broker. Cheap to clone.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<BusInner>,
}

impl Default for Bus {
    fn default() -> Self {
        Self::new()
    }
}

impl Bus {
    pub fn new() -> Self {
        Self {
            inner: Arc::new(BusInner {
                registry: Mutex::new(Registry::default()),
                next_id: AtomicU64::new(1),
            }),
        }
    }

    fn next_id(&self) -> u64 {
        self.inner.next_id.fetch_add(1, Ordering::Relaxed)
    }

    pub fn node(&self, name: &str) -> NodeHandle {
        self.node_with_remap(name, HashMap::new())
    }

    pub fn node_with_remap(&self, name: &str, remaps: HashMap<String, String>) -> NodeHandle {
        NodeHandle {
            bus: self.clone(),
            id: self.next_id(),
            name: name.to_string(),
            remaps,
            advertised: Mutex::new(HashMap::new()),
        }
    }

    /// Snapshot of who publishes, subscribes and serves what.
    pub fn graph(&self) -> Vec<GraphEdge> {
        let reg = self.inner.registry.lock().unwrap();
        let set: BTreeSet<GraphEdge> = reg.graph.iter().map(|(_, e)| e.clone()).collect();
        set.into_iter().collect()
    }

    pub fn subscriber_count(&self, topic: &str) -> usize {
        let reg = self.inner.registry.lock().unwrap();
        reg.topics.get(topic).map_or(0, Vec::len)
    }

    pub fn has_service(&self, name: &str) -> bool {
        self.inner.registry.lock().unwrap().services.contains_key(name)
    }

    fn deliver(&self, env: &Envelope, origin: u64) {
        let reg = self.inner.registry.lock().unwrap();
        if let Some(slots) = reg.topics.get(&env.topic) {
            for slot in slots {
                if slot.exclude_origin == Some(origin) {
                    continue;
                }
                slot.queue.push(env.clone());
            }
        }
    }

    fn add_edge(&self, owner: u64, edge: GraphEdge) {
        self.inner.registry.lock().unwrap().graph.insert((owner, edge));
    }

    fn subscribe_raw(&self, topics: &[String], depth: usize, exclude_origin: Option<u64>) -> Subscription {
        let queue = Arc::new(SubQueue {
            depth: depth.max(1),
            state: Mutex::new(QueueState {
                buf: VecDeque::new(),
                dropped: 0,
                closed: false,
            }),
            ready: Condvar::new(),
        });
        let id = self.next_id();
        let mut reg = self.inner.registry.lock().unwrap();
        for t in topics {
            reg.topics.entry(t.clone()).or_default().push(SubscriberSlot {
                id,
                queue: queue.clone(),
                exclude_origin,
            });
        }
        drop(reg);
        Subscription {
            id,
            topics: topics.to_vec(),
            queue,
            bus: Arc::downgrade(&self.inner),
        }
    }

    /// Calls a service with the default 2 s timeout.
    pub fn call(&self, service: &str, request: Value) -> Result<Value, BusError> {
        self.call_timeout(service, request, DEFAULT_CALL_TIMEOUT)
    }

    pub fn call_timeout(&self, service: &str, request: Value, timeout: Duration) -> Result<Value, BusError> {
        let sender = {
            let reg = self.inner.registry.lock().unwrap();
            reg.services
                .get(service)
                .cloned()
                .ok_or_else(|| BusError::ServiceNotFound(service.to_string()))?
        };
        let (reply_tx, reply_rx) = bounded(1);
        sender
            .send((request, reply_tx))
            .map_err(|_| BusError::ServiceNotFound(service.to_string()))?;
        match reply_rx.recv_timeout(timeout) {
            Ok(Ok(v)) => Ok(v),
            Ok(Err(message)) => Err(BusError::ServiceFailed {
                service: service.to_string(),
                message,
            }),
            Err(crossbeam_channel::RecvTimeoutError::Timeout) => Err(BusError::Timeout(service.to_string())),
            Err(crossbeam_channel::RecvTimeoutError::Disconnected) => {
                Err(BusError::ServiceNotFound(service.to_string()))
            }
        }
    }
}

/// A participant on the bus. Owns a remap table applied to every name.
pub struct NodeHandle {
    bus: Bus,
    id: u64,
    name: String,
    remaps: HashMap<String, String>,
    // configured name -> (resolved topic, last stamp)
    advertised: Mutex<HashMap<String, (String, Option<u64>)>>,
}

impl NodeHandle {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn resolve(&self, name: &str) -> String {
        remap(&self.remaps, name).to_string()
    }

    /// Declares that this node publishes on `topic`. Returns the resolved name.
    pub fn advertise(&self, topic: &str) -> Result<String, BusError> {
        let resolved = self.resolve(topic);
        if !valid_name(&resolved) {
            return Err(BusError::InvalidName(resolved));
        }
        self.advertised
            .lock()
            .unwrap()
            .entry(topic.to_string())
            .or_insert_with(|| (resolved.clone(), None));
        self.bus.add_edge(
            self.id,
            GraphEdge {
                node: self.name.clone(),
                kind: EdgeKind::Publishes,
                name: resolved.clone(),
            },
        );
        Ok(resolved)
    }

    /// Publishes `env` on its (remapped) topic. Delivery is synchronous into
    /// every current subscriber queue.
    pub fn publish(&self, mut env: Envelope) -> Result<(), BusError> {
        env.payload.validate().map_err(|reason| BusError::InvalidPayload {
            type_name: env.payload.type_name(),
            reason,
        })?;
        {
            let mut adv = self.advertised.lock().unwrap();
            let (resolved, last) = adv
                .get_mut(&env.topic)
                .ok_or_else(|| BusError::NotAdvertised(env.topic.clone()))?;
            if let Some(last) = *last {
                if env.stamp_ns < last {
                    return Err(BusError::NonMonotonicStamp {
                        topic: resolved.clone(),
                        stamp: env.stamp_ns,
                        last,
                    });
                }
            }
            *last = Some(env.stamp_ns);
            env.topic = resolved.clone();
        }
        self.bus.deliver(&env, self.id);
        Ok(())
    }

    /// Advertises on first use, then publishes.
    pub fn send(&self, topic: &str, stamp_ns: u64, payload: Payload) -> Result<(), BusError> {
        if !self.advertised.lock().unwrap().contains_key(topic) {
            self.advertise(topic)?;
        }
        self.publish(Envelope::new(topic, stamp_ns, payload))
    }

    pub fn subscribe(&self, topic: &str) -> Subscription {
        self.subscribe_many_with_depth(&[topic], DEFAULT_QUEUE_DEPTH)
    }

    pub fn subscribe_with_depth(&self, topic: &str, depth: usize) -> Subscription {
        self.subscribe_many_with_depth(&[topic], depth)
    }

    /// One queue fed by several topics, preserving global publish order.
    pub fn subscribe_many(&self, topics: &[&str]) -> Subscription {
        self.subscribe_many_with_depth(topics, DEFAULT_QUEUE_DEPTH)
    }

    pub fn subscribe_many_with_depth(&self, topics: &[&str], depth: usize) -> Subscription {
        let resolved = self.resolve_all(topics);
        self.record_subs(&resolved);
        self.bus.subscribe_raw(&resolved, depth, None)
    }

    /// Like [`subscribe_many_with_depth`](Self::subscribe_many_with_depth), but
    /// skips envelopes this node published itself. Used by transport bridges.
    pub fn subscribe_foreign(&self, topics: &[&str], depth: usize) -> Subscription {
        let resolved = self.resolve_all(topics);
        self.record_subs(&resolved);
        self.bus.subscribe_raw(&resolved, depth, Some(self.id))
    }

    fn resolve_all(&self, topics: &[&str]) -> Vec<String> {
        topics.iter().map(|t| self.resolve(t)).collect()
    }

    fn record_subs(&self, resolved: &[String]) {
        for t in resolved {
            self.bus.add_edge(
                self.id,
                GraphEdge {
                    node: self.name.clone(),
                    kind: EdgeKind::Subscribes,
                    name: t.clone(),
                },
            );
        }
    }

    /// Registers a service. The handler runs on a dedicated thread and
    /// handles one request at a time.
    pub fn advertise_service<F>(&self, name: &str, mut handler: F) -> Result<ServiceServer, BusError>
    where
        F: FnMut(Value) -> Result<Value, String> + Send + 'static,
    {
        let resolved = self.resolve(name);
        if !valid_name(&resolved) {
            return Err(BusError::InvalidName(resolved));
        }
        let (tx, rx) = unbounded::<ServiceRequest>();
        {
            let mut reg = self.bus.inner.registry.lock().unwrap();
            if reg.services.contains_key(&resolved) {
                return Err(BusError::ServiceExists(resolved));
            }
            reg.services.insert(resolved.clone(), tx);
            reg.graph.insert((
                self.id,
                GraphEdge {
                    node: self.name.clone(),
                    kind: EdgeKind::Serves,
                    name: resolved.clone(),
                },
            ));
        }
        let thread_name = format!("svc:{resolved}");
        let worker = std::thread::Builder::new()
            .name(thread_name)
            .spawn(move || {
                for (req, reply) in rx {
                    let _ = reply.send(handler(req));
                }
            })
            .expect("spawn service thread");
        Ok(ServiceServer {
            name: resolved,
            owner: self.id,
            bus: Arc::downgrade(&self.bus.inner),
            worker: Some(worker),
        })
    }

    pub fn service_client(&self, name: &str) -> ServiceClient {
        ServiceClient {
            bus: self.bus.clone(),
            service: self.resolve(name),
            timeout: DEFAULT_CALL_TIMEOUT,
        }
    }

    /// One-shot call through the remap table.
    pub fn call(&self, name: &str, request: Value) -> Result<Value, BusError> {
        self.service_client(name).call(request)
    }
}

impl Drop for NodeHandle {
    fn drop(&mut self) {
        let mut reg = self.bus.inner.registry.lock().unwrap();
        reg.graph
            .retain(|(owner, e)| !(*owner == self.id && e.kind == EdgeKind::Publishes));
    }
}

/// Client side of a service. `call` takes `&mut self`, so each handle has at
/// most one outstanding request.
pub struct ServiceClient {
    bus: Bus,
    service: String,
    timeout: Duration,
}

impl ServiceClient {
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn service(&self) -> &str {
        &self.service
    }

    pub fn call(&mut self, request: Value) -> Result<Value, BusError> {
        self.bus.call_timeout(&self.service, request, self.timeout)
    }
}

/// Keeps a service registered; dropping it unregisters the service and
/// joins the worker after in-flight requests finish.
pub struct ServiceServer {
    name: String,
    owner: u64,
    bus: Weak<BusInner>,
    worker: Option<JoinHandle<()>>,
}

impl ServiceServer {
    pub fn name(&self) -> &str {
        &self.name
    }
}

impl Drop for ServiceServer {
    fn drop(&mut self) {
        if let Some(inner) = self.bus.upgrade() {
            let mut reg = inner.registry.lock().unwrap();
            reg.services.remove(&self.name);
            reg.graph
                .retain(|(owner, e)| !(*owner == self.owner && e.kind == EdgeKind::Serves && e.name == self.name));
        }
        if let Some(w) = self.worker.take() {
            // the channel sender is gone, so the loop ends once queued requests drain
            let _ = w.join();
        }
    }
}

/// Consumer end of a subscription. Unsubscribes on drop.
pub struct Subscription {
    id: u64,
    topics: Vec<String>,
    queue: Arc<SubQueue>,
    bus: Weak<BusInner>,
}

impl Subscription {
    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn try_recv(&self) -> Option<Envelope> {
        self.queue.state.lock().unwrap().buf.pop_front()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<Envelope> {
        let deadline = Instant::now() + timeout;
        let mut st = self.queue.state.lock().unwrap();
        loop {
            if let Some(env) = st.buf.pop_front() {
                return Some(env);
            }
            if st.closed {
                return None;
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            st = self.queue.ready.wait_timeout(st, deadline - now).unwrap().0;
        }
    }

    /// Everything currently queued, oldest first.
    pub fn drain(&self) -> Vec<Envelope> {
        self.queue.state.lock().unwrap().buf.drain(..).collect()
    }

    /// Most recent queued envelope, discarding older ones.
    pub fn latest(&self) -> Option<Envelope> {
        self.drain().pop()
    }

    pub fn len(&self) -> usize {
        self.queue.state.lock().unwrap().buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Count of envelopes discarded by the overflow policy.
    pub fn dropped(&self) -> u64 {
        self.queue.state.lock().unwrap().dropped
    }

    /// Wakes any blocked receiver; further receives return only queued data.
    pub fn close(&self) {
        self.queue.state.lock().unwrap().closed = true;
        self.queue.ready.notify_all();
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        if let Some(inner) = self.bus.upgrade() {
            let mut reg = inner.registry.lock().unwrap();
            for t in &self.topics {
                if let Some(slots) = reg.topics.get_mut(t) {
                    slots.retain(|s| s.id != self.id);
                    if slots.is_empty() {
                        reg.topics.remove(t);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn arr(v: f64) -> Payload {
        Payload::Float64Array(Float64ArrayMsg::new(vec![v]))
    }

    #[test]
    fn publish_without_subscribers_is_ok() {
        let bus = Bus::new();
        let n = bus.node("n");
        n.advertise("t").unwrap();
        n.publish(Envelope::new("t", 0, arr(1.0))).unwrap();
    }

    #[test]
    fn fifo_order_and_late_subscription() {
        let bus = Bus::new();
        let n = bus.node("n");
        n.advertise("t").unwrap();
        n.publish(Envelope::new("t", 0, arr(0.0))).unwrap();
        let sub = n.subscribe("t");
        assert!(sub.is_empty(), "no replay");
        for i in 1..=3 {
            n.publish(Envelope::new("t", i, arr(i as f64))).unwrap();
        }
        let got: Vec<u64> = sub.drain().iter().map(|e| e.stamp_ns).collect();
        assert_eq!(got, vec![1, 2, 3]);
    }

    #[test]
    fn two_subscribers_get_their_own_copy() {
        let bus = Bus::new();
        let n = bus.node("n");
        let a = n.subscribe("t");
        let b = n.subscribe("t");
        n.send("t", 5, arr(1.0)).unwrap();
        assert_eq!(a.drain().len(), 1);
        assert_eq!(b.drain().len(), 1);
    }

    #[test]
    fn overflow_drops_oldest() {
        let bus = Bus::new();
        let n = bus.node("n");
        let sub = n.subscribe_with_depth("t", 2);
        for i in 0..3 {
            n.send("t", i, arr(i as f64)).unwrap();
        }
        assert_eq!(sub.dropped(), 1);
        let got: Vec<u64> = sub.drain().iter().map(|e| e.stamp_ns).collect();
        assert_eq!(got, vec![1, 2]);
    }

    #[test]
    fn publish_requires_advertise() {
        let bus = Bus::new();
        let n = bus.node("n");
        assert_eq!(
            n.publish(Envelope::new("t", 0, arr(0.0))),
            Err(BusError::NotAdvertised("t".into()))
        );
    }

    #[test]
    fn stamps_must_not_go_backwards() {
        let bus = Bus::new();
        let n = bus.node("n");
        n.send("t", 10, arr(0.0)).unwrap();
        assert!(matches!(
            n.send("t", 9, arr(0.0)),
            Err(BusError::NonMonotonicStamp { .. })
        ));
        n.send("t", 10, arr(0.0)).unwrap();
    }

    #[test]
    fn remap_is_single_lookup() {
        let mut table = HashMap::new();
        assert_eq!(remap(&table, "a"), "a");
        table.insert("sim/joints".to_string(), "hw/joints".to_string());
        table.insert("hw/joints".to_string(), "other".to_string());
        assert_eq!(remap(&table, "sim/joints"), "hw/joints");
    }

    #[test]
    fn node_remap_routes_publications() {
        let bus = Bus::new();
        let mut table = HashMap::new();
        table.insert("sim/joints".to_string(), "hw/joints".to_string());
        let remapped = bus.node_with_remap("r", table);
        let listener = bus.node("l");
        let hw = listener.subscribe("hw/joints");
        let sim = listener.subscribe("sim/joints");
        remapped.send("sim/joints", 0, arr(1.0)).unwrap();
        assert_eq!(hw.drain().len(), 1);
        assert!(sim.is_empty());
        assert!(bus.graph().iter().any(|e| e.node == "r" && e.name == "hw/joints"));
    }

    #[test]
    fn echo_service_and_errors() {
        let bus = Bus::new();
        let n = bus.node("server");
        let _srv = n.advertise_service("echo", Ok).unwrap();
        let _bad = n.advertise_service("fail", |_| Err("boom".to_string())).unwrap();
        assert_eq!(bus.call("echo", json!({"a": 1})).unwrap(), json!({"a": 1}));
        assert_eq!(
            bus.call("nope", json!(null)),
            Err(BusError::ServiceNotFound("nope".into()))
        );
        assert!(matches!(
            bus.call("fail", json!(null)),
            Err(BusError::ServiceFailed { message, .. }) if message == "boom"
        ));
        assert!(matches!(
            n.advertise_service("echo", Ok),
            Err(BusError::ServiceExists(_))
        ));
    }

    #[test]
    fn slow_service_times_out() {
        let bus = Bus::new();
        let n = bus.node("server");
        let _srv = n
            .advertise_service("slow", |v| {
                std::thread::sleep(Duration::from_millis(300));
                Ok(v)
            })
            .unwrap();
        let mut client = n.service_client("slow").with_timeout(Duration::from_millis(100));
        assert_eq!(client.call(json!(1)), Err(BusError::Timeout("slow".into())));
    }

    #[test]
    fn dropping_server_unregisters() {
        let bus = Bus::new();
        let n = bus.node("server");
        let srv = n.advertise_service("s", Ok).unwrap();
        assert!(bus.has_service("s"));
        drop(srv);
        assert!(!bus.has_service("s"));
    }

    #[test]
    fn responses_only_reach_their_caller() {
        let bus = Bus::new();
        let n = bus.node("server");
        let _srv = n
            .advertise_service("double", |v| Ok(json!(v.as_i64().unwrap() * 2)))
            .unwrap();
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let bus = bus.clone();
                std::thread::spawn(move || {
                    for k in 0..50 {
                        let x = i * 1000 + k;
                        assert_eq!(bus.call("double", json!(x)).unwrap(), json!(2 * x));
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
    }
}
