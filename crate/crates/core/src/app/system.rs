//! Building and running a whole node graph from a launch profile.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::camera::CameraNode;
use super::http::StaticServer;
use super::profile::{LaunchProfile, NodeKind, NodeSpec, ProfileError};
use super::sim::{lock, target_topic, SharedWorld, SimNode};
use crate::bus::gateway::Gateway;
use crate::bus::tcp::TcpBridge;
use crate::bus::{Bus, Float64ArrayMsg, Payload};
use crate::dynamics::{SimWorld, StepReport};
use crate::recording::{BagWriter, Recorder};
use crate::safety::{SafeRobot, SafetyConfig};
use crate::scene::{SceneError, SceneFile};
use crate::teleop::{CartesianTeleop, CartesianTeleopConfig, OperatorConfig, OperatorNode};
use crate::utils::exec::{Clock, Node, NodeError};
use crate::utils::{MpcController, MpcNode, RemapConfig, RemapNode};

pub const MPC_ITERATION_TOPIC: &str = "rpbi/mpc/iteration";

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("node `{node}` failed to start: {message}")]
    Node { node: String, message: String },
    #[error("cannot listen on port {port} ({server}): {source}")]
    Port {
        port: u16,
        server: &'static str,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("node `{node}`: {source}")]
    Node {
        node: String,
        #[source]
        source: NodeError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcNodeConfig {
    #[serde(default = "default_mpc_rate")]
    pub rate_hz: f64,
}

fn default_mpc_rate() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecorderConfig {
    /// Output bag, relative to the profile.
    pub path: String,
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LaunchOptions {
    /// Skip the gateway, TCP bridge and HTTP servers.
    pub headless: bool,
    /// Overrides the profile's `real_robot` flag.
    pub real_robot: Option<bool>,
}

impl LaunchOptions {
    pub fn headless() -> Self {
        Self {
            headless: true,
            real_robot: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// Sleep so that sim time tracks wall time.
    RealTime,
    AsFastAsPossible,
}

/// Wall-clock cost of each executor cycle of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunStats {
    pub steps: u64,
    pub wall: Duration,
    pub cycle_times: Vec<Duration>,
}

impl RunStats {
    pub fn steps_per_second(&self) -> f64 {
        self.steps as f64 / self.wall.as_secs_f64()
    }

    pub fn mean(&self) -> Duration {
        if self.cycle_times.is_empty() {
            return Duration::ZERO;
        }
        self.cycle_times.iter().sum::<Duration>() / self.cycle_times.len() as u32
    }

    /// Nearest-rank percentile, `p` in `(0, 100]`.
    pub fn percentile(&self, p: f64) -> Duration {
        if self.cycle_times.is_empty() {
            return Duration::ZERO;
        }
        let mut v = self.cycle_times.clone();
        v.sort_unstable();
        let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
        v[rank.min(v.len()) - 1]
    }
}

struct Servers {
    gateway: Option<Gateway>,
    tcp: Option<TcpBridge>,
    http: Option<StaticServer>,
}

impl Servers {
    fn stop(&mut self) {
        if let Some(g) = self.gateway.take() {
            g.shutdown();
        }
        if let Some(t) = self.tcp.take() {
            t.shutdown();
        }
        if let Some(h) = self.http.take() {
            h.shutdown();
        }
    }
}

/// Every node of a profile, driven in lock step with the simulator: each
/// cycle polls the nodes at the current sim time, then steps the world once.
pub struct System {
    bus: Bus,
    clock: Clock,
    world: SharedWorld,
    sim: SimNode,
    nodes: Vec<Box<dyn Node>>,
    mpc: Option<MpcController>,
    servers: Servers,
    real_robot: bool,
    shut_down: bool,
}

fn parse_config<T: DeserializeOwned>(spec: &NodeSpec) -> Result<T, LaunchError> {
    let fail = |message: String| LaunchError::Node {
        node: spec.name().to_string(),
        message,
    };
    // absent config means "all defaults"
    let value = match &spec.config {
        serde_yaml::Value::Null => serde_yaml::Value::Mapping(Default::default()),
        v => v.clone(),
    };
    serde_path_to_error::deserialize(value).map_err(|e| fail(format!("config.{}: {}", e.path(), e.inner())))
}

impl System {
    pub fn launch(profile: &LaunchProfile, opts: LaunchOptions) -> Result<Self, LaunchError> {
        profile.validate()?;
        let real_robot = opts.real_robot.unwrap_or(profile.real_robot);
        let scene = SceneFile::load(profile.scene_path())?;
        let world = SimWorld::from_scene(&scene)?;
        let world: SharedWorld = Arc::new(Mutex::new(world));
        let clock = Clock::new(scene.config.use_sim_time);
        let bus = Bus::new();

        // robots guarded by a safe_robot node take commands from it; others directly from their target topic
        let mut guarded = BTreeSet::new();
        for spec in profile.nodes.iter().filter(|n| n.kind == NodeKind::SafeRobot) {
            let cfg: SafetyConfig = parse_config(spec)?;
            guarded.insert(cfg.robot);
        }
        let command_topics: BTreeMap<String, String> = lock(&world)
            .robots()
            .iter()
            .filter(|r| !guarded.contains(&r.name))
            .map(|r| (r.name.clone(), target_topic(&r.name)))
            .collect();
        let sim_fail = |e: NodeError| LaunchError::Node {
            node: "sim".into(),
            message: e.to_string(),
        };
        let mut sim = SimNode::new(bus.node("sim"), world.clone(), clock.clone(), &command_topics).map_err(sim_fail)?;
        for r in &scene.config.robots {
            for s in &r.ft_sensors {
                sim.add_ft_sensor(&r.name, &s.joint, s.rate).map_err(sim_fail)?;
            }
        }

        let mut system = Self {
            bus,
            clock,
            world,
            sim,
            nodes: Vec::new(),
            mpc: None,
            servers: Servers {
                gateway: None,
                tcp: None,
                http: None,
            },
            real_robot,
            shut_down: false,
        };
        for spec in &profile.nodes {
            let node = system.build_node(profile, spec)?;
            system.nodes.push(node);
        }
        if let Some(cam) = scene.config.camera.clone() {
            let node = CameraNode::new(system.bus.node("camera"), system.world.clone(), cam).map_err(|e| {
                LaunchError::Node {
                    node: "camera".into(),
                    message: e.to_string(),
                }
            })?;
            system.nodes.push(Box::new(node));
        }
        if !opts.headless {
            system.start_servers(profile)?;
        }
        log::info!(
            "launched {} nodes (real_robot = {}, headless = {})",
            system.nodes.len() + 1,
            real_robot,
            opts.headless
        );
        Ok(system)
    }

    fn build_node(&mut self, profile: &LaunchProfile, spec: &NodeSpec) -> Result<Box<dyn Node>, LaunchError> {
        let name = spec.name().to_string();
        let handle = self
            .bus
            .node_with_remap(&name, profile.node_remap(spec, self.real_robot));
        let fail = |message: String| LaunchError::Node {
            node: name.clone(),
            message,
        };
        let robot_state = |robot: &str| {
            let w = lock(&self.world);
            w.robot(robot)
                .map(|r| (r.model.clone(), r.base_pose, r.q.clone(), r.end_effector))
                .ok_or_else(|| fail(format!("scene has no robot `{robot}`")))
        };
        Ok(match spec.kind {
            NodeKind::Operator => {
                let cfg: OperatorConfig = parse_config(spec)?;
                Box::new(OperatorNode::new(handle, cfg).map_err(|e| fail(e.to_string()))?)
            }
            NodeKind::CartesianTeleop => {
                let cfg: CartesianTeleopConfig = parse_config(spec)?;
                let (model, base, q, ee) = robot_state(&cfg.robot)?;
                Box::new(CartesianTeleop::new(handle, cfg, model, base, q, ee).map_err(|e| fail(e.to_string()))?)
            }
            NodeKind::SafeRobot => {
                let cfg: SafetyConfig = parse_config(spec)?;
                let (model, base, q, _) = robot_state(&cfg.robot)?;
                Box::new(SafeRobot::new(handle, &cfg, model, base, q).map_err(|e| fail(e.to_string()))?)
            }
            NodeKind::Remap => {
                let cfg: RemapConfig = parse_config(spec)?;
                Box::new(RemapNode::new(handle, cfg).map_err(|e| fail(e.to_string()))?)
            }
            NodeKind::Mpc => {
                let cfg: MpcNodeConfig = parse_config(spec)?;
                if !(cfg.rate_hz > 0.0 && cfg.rate_hz.is_finite()) {
                    return Err(fail(format!("rate_hz must be positive, got {}", cfg.rate_hz)));
                }
                let publisher = self
                    .bus
                    .node_with_remap(&format!("{name}/controller"), profile.node_remap(spec, self.real_robot));
                publisher
                    .advertise(MPC_ITERATION_TOPIC)
                    .map_err(|e| fail(e.to_string()))?;
                let clock = self.clock.clone();
                // demo controller: reports the iteration it computed
                let tick = Box::new(move |k: u64| {
                    let msg = Payload::Float64Array(Float64ArrayMsg::new(vec![(k + 1) as f64]));
                    if let Err(e) = publisher.send(MPC_ITERATION_TOPIC, clock.now_ns(), msg) {
                        log::warn!("mpc: {e}");
                    }
                });
                let controller = MpcController::new(cfg.rate_hz, tick);
                self.mpc = Some(controller.clone());
                Box::new(MpcNode::new(&handle, controller).map_err(|e| fail(e.to_string()))?)
            }
            NodeKind::Recorder => {
                let cfg: RecorderConfig = parse_config(spec)?;
                let path = profile.resolve(&cfg.path);
                let file = File::create(&path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
                let writer = BagWriter::new(BufWriter::new(file)).map_err(|e| fail(e.to_string()))?;
                let topics: Vec<&str> = cfg.topics.iter().map(String::as_str).collect();
                let rec = Recorder::new(&handle, &topics, writer);
                Box::new(RecorderNode { _handle: handle, rec })
            }
        })
    }

    fn start_servers(&mut self, profile: &LaunchProfile) -> Result<(), LaunchError> {
        let bind =
            |port: u16, server: &'static str| move |source: std::io::Error| LaunchError::Port { port, server, source };
        if let Some(port) = profile.ports.ws {
            self.servers.gateway = Some(Gateway::serve(&self.bus, ("0.0.0.0", port)).map_err(bind(port, "gateway"))?);
        }
        if let Some(port) = profile.ports.tcp {
            let export: Vec<&str> = profile.tcp_export.iter().map(String::as_str).collect();
            self.servers.tcp =
                Some(TcpBridge::listen(&self.bus, ("0.0.0.0", port), &export).map_err(bind(port, "tcp"))?);
        }
        if let Some(port) = profile.ports.http {
            let dir = profile.console_dir.as_ref().map(|d| profile.resolve(d));
            let ws_port = self.servers.gateway.as_ref().map(|g| g.local_addr().port());
            self.servers.http = Some(StaticServer::serve(("0.0.0.0", port), dir, ws_port).map_err(bind(port, "http"))?);
        }
        Ok(())
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn world(&self) -> &SharedWorld {
        &self.world
    }

    pub fn sim(&self) -> &SimNode {
        &self.sim
    }

    pub fn real_robot(&self) -> bool {
        self.real_robot
    }

    pub fn mpc(&self) -> Option<&MpcController> {
        self.mpc.as_ref()
    }

    pub fn gateway_addr(&self) -> Option<std::net::SocketAddr> {
        self.servers.gateway.as_ref().map(Gateway::local_addr)
    }

    pub fn http_addr(&self) -> Option<std::net::SocketAddr> {
        self.servers.http.as_ref().map(StaticServer::local_addr)
    }

    pub fn tcp_addr(&self) -> Option<std::net::SocketAddr> {
        self.servers.tcp.as_ref().map(TcpBridge::local_addr)
    }

    pub fn node_names(&self) -> Vec<String> {
        std::iter::once(self.sim.name().to_string())
            .chain(self.nodes.iter().map(|n| n.name().to_string()))
            .collect()
    }

    /// Adds a node polled before every profile node.
    pub fn push_front(&mut self, node: Box<dyn Node>) {
        self.nodes.insert(0, node);
    }

    /// Adds a node polled after every profile node.
    pub fn push_back(&mut self, node: Box<dyn Node>) {
        self.nodes.push(node);
    }

    pub fn sim_time_ns(&self) -> u64 {
        lock(&self.world).sim_time_ns()
    }

    /// Polls every node at the current sim time, then steps the world.
    pub fn cycle(&mut self) -> Result<StepReport, RunError> {
        let now = self.sim_time_ns();
        for n in &mut self.nodes {
            n.poll(now).map_err(|source| RunError::Node {
                node: n.name().to_string(),
                source,
            })?;
        }
        self.sim.step().map_err(|source| RunError::Node {
            node: "sim".into(),
            source,
        })
    }

    /// Runs whole cycles until `seconds` of sim time have passed.
    pub fn run_for(&mut self, seconds: f64) -> Result<RunStats, RunError> {
        let stop = AtomicBool::new(false);
        self.run(seconds, Pacing::AsFastAsPossible, &stop)
    }

    /// Runs until `seconds` of sim time have passed (`f64::INFINITY` for no
    /// limit) or `stop` is raised.
    pub fn run(&mut self, seconds: f64, pacing: Pacing, stop: &AtomicBool) -> Result<RunStats, RunError> {
        let start_ns = self.sim_time_ns();
        let end_ns = if seconds.is_finite() {
            start_ns.saturating_add((seconds * 1e9).round() as u64)
        } else {
            u64::MAX
        };
        let mut stats = RunStats::default();
        let wall0 = Instant::now();
        while !stop.load(Ordering::Relaxed) && self.sim_time_ns() < end_ns {
            let t0 = Instant::now();
            let report = self.cycle()?;
            stats.cycle_times.push(t0.elapsed());
            stats.steps += 1;
            if pacing == Pacing::RealTime {
                let due = Duration::from_nanos(report.sim_time_ns - start_ns);
                if let Some(wait) = due.checked_sub(wall0.elapsed()) {
                    std::thread::sleep(wait);
                }
            }
        }
        stats.wall = wall0.elapsed();
        Ok(stats)
    }

    /// Lets every node finish (recorders flush) and stops the servers.
    /// Errors are logged and the first is returned; every node is still visited.
    pub fn shutdown(&mut self) -> Result<(), RunError> {
        if self.shut_down {
            return Ok(());
        }
        self.shut_down = true;
        let mut first = None;
        for n in &mut self.nodes {
            if let Err(source) = n.shutdown() {
                log::error!("{}: shutdown failed: {source}", n.name());
                first.get_or_insert(RunError::Node {
                    node: n.name().to_string(),
                    source,
                });
            }
        }
        self.servers.stop();
        first.map_or(Ok(()), Err)
    }
}

impl Drop for System {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

struct RecorderNode {
    _handle: crate::bus::NodeHandle,
    rec: Recorder<BufWriter<File>>,
}

impl Node for RecorderNode {
    fn name(&self) -> &str {
        self.rec.name()
    }

    fn poll(&mut self, now_ns: u64) -> Result<(), NodeError> {
        self.rec.poll(now_ns)
    }

    fn shutdown(&mut self) -> Result<(), NodeError> {
        self.rec.shutdown()
    }
}
