//! Bus nodes: `operator_node` (raw axes to commands) and a Cartesian
//! teleoperation node that turns velocity commands into joint targets.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{MappingConfig, RawAxes, SignalWindow, TeleopError};
use crate::bus::{Float64ArrayMsg, JointStateMsg, NodeHandle, Payload, Subscription};
use crate::kinematics::{link_poses, IkParams, IkProblem, IkRegistry};
use crate::math::{Pose, Vec3};
use crate::scene::RobotModel;
use crate::utils::exec::{Node, NodeError, RateTimer};

pub const AXES_TOPIC: &str = "rpbi/operator/axes";
pub const COMMAND_TOPIC: &str = "rpbi/operator/command";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    #[serde(default = "default_axes_topic")]
    pub input_topic: String,
    #[serde(default = "default_command_topic")]
    pub output_topic: String,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    pub mapping: MappingConfig,
    /// Input older than this counts as released (dead-man behaviour).
    #[serde(default = "default_stale")]
    pub stale_after_s: f64,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_axes_topic() -> String {
    AXES_TOPIC.into()
}
fn default_command_topic() -> String {
    COMMAND_TOPIC.into()
}
fn default_rate() -> f64 {
    50.0
}
fn default_stale() -> f64 {
    0.5
}
fn default_window() -> usize {
    100
}

impl OperatorConfig {
    pub fn new(mapping: MappingConfig) -> Self {
        Self {
            input_topic: default_axes_topic(),
            output_topic: default_command_topic(),
            rate_hz: default_rate(),
            mapping,
            stale_after_s: default_stale(),
            window: default_window(),
        }
    }

    pub fn validate(&self) -> Result<(), TeleopError> {
        self.mapping.validate()?;
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(TeleopError::BadConfig(format!(
                "rate_hz must be positive, got {}",
                self.rate_hz
            )));
        }
        if !(self.stale_after_s > 0.0) {
            return Err(TeleopError::BadConfig("stale_after_s must be positive".into()));
        }
        Ok(())
    }
}

/// Samples the newest raw axes at a fixed rate and publishes the mapped command.
pub struct OperatorNode {
    cfg: OperatorConfig,
    node: NodeHandle,
    input: Subscription,
    timer: RateTimer,
    latest: Option<(u64, RawAxes)>,
    window: Arc<Mutex<SignalWindow>>,
}

impl OperatorNode {
    pub fn new(node: NodeHandle, cfg: OperatorConfig) -> Result<Self, NodeError> {
        cfg.validate().map_err(|e| NodeError::Failed(e.to_string()))?;
        let input = node.subscribe(&cfg.input_topic);
        node.advertise(&cfg.output_topic)?;
        Ok(Self {
            timer: RateTimer::from_hz(cfg.rate_hz),
            window: Arc::new(Mutex::new(SignalWindow::new(cfg.window))),
            cfg,
            node,
            input,
            latest: None,
        })
    }

    /// Shared view of the recent commands.
    pub fn window(&self) -> Arc<Mutex<SignalWindow>> {
        self.window.clone()
    }
}

impl Node for OperatorNode {
    fn name(&self) -> &str {
        self.node.name()
    }

    fn poll(&mut self, now_ns: u64) -> Result<(), NodeError> {
        for env in self.input.drain() {
            match env.payload {
                Payload::Float64Array(a) if a.data.len() == self.cfg.mapping.axis_order.len() => {
                    self.latest = Some((now_ns, RawAxes::new(&a.data)));
                }
                other => log::warn!(
                    "{}: ignoring {} on `{}` (expected {} axes)",
                    self.node.name(),
                    other.type_name(),
                    env.topic,
                    self.cfg.mapping.axis_order.len()
                ),
            }
        }
        if !self.timer.due(now_ns) {
            return Ok(());
        }
        let n = self.cfg.mapping.axis_order.len();
        let stale_ns = (self.cfg.stale_after_s * 1e9) as u64;
        let cmd = match &self.latest {
            Some((t, u)) if now_ns.saturating_sub(*t) <= stale_ns => self
                .cfg
                .mapping
                .apply(u)
                .map_err(|e| NodeError::Failed(e.to_string()))?,
            _ => vec![0.0; n],
        };
        self.window.lock().unwrap().push(now_ns, cmd.clone());
        self.node.send(
            &self.cfg.output_topic,
            now_ns,
            Payload::Float64Array(Float64ArrayMsg::new(cmd)),
        )?;
        Ok(())
    }
}

/// One Cartesian velocity component driven by a command channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CartAxis {
    X,
    Y,
    Z,
    Rx,
    Ry,
    Rz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartesianTeleopConfig {
    pub robot: String,
    #[serde(default = "default_command_topic")]
    pub command_topic: String,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    /// Meaning of each command element (m/s or rad/s, world frame).
    pub axes: Vec<CartAxis>,
    #[serde(default = "default_solver")]
    pub solver: String,
    /// Controlled link; the robot's end effector when absent.
    #[serde(default)]
    pub link: Option<String>,
    /// Target positions are clamped into this box.
    #[serde(default)]
    pub workspace: Option<[Vec3; 2]>,
    #[serde(default)]
    pub ik: IkParams,
}

fn default_solver() -> String {
    "dls".into()
}

impl CartesianTeleopConfig {
    pub fn target_topic(&self) -> String {
        format!("rpbi/{}/target_joint_state", self.robot)
    }
}

/// Integrates velocity commands into an end-effector target and publishes the
/// IK solution as the robot's joint target.
pub struct CartesianTeleop {
    cfg: CartesianTeleopConfig,
    node: NodeHandle,
    input: Subscription,
    timer: RateTimer,
    model: Arc<RobotModel>,
    base: Pose,
    link: usize,
    registry: IkRegistry,
    q: Vec<f64>,
    target: Pose,
    command: Vec<f64>,
    topic: String,
}

impl CartesianTeleop {
    pub fn new(
        node: NodeHandle,
        cfg: CartesianTeleopConfig,
        model: Arc<RobotModel>,
        base: Pose,
        q0: Vec<f64>,
        default_link: usize,
    ) -> Result<Self, NodeError> {
        let link = match &cfg.link {
            Some(name) => model
                .link_index(name)
                .ok_or_else(|| NodeError::Failed(format!("robot `{}` has no link `{name}`", cfg.robot)))?,
            None => default_link,
        };
        let registry = IkRegistry::default();
        registry
            .get(&cfg.solver)
            .map_err(|e| NodeError::Failed(e.to_string()))?;
        cfg.ik.validate().map_err(|e| NodeError::Failed(e.to_string()))?;
        if q0.len() != model.ndof() {
            return Err(NodeError::Failed(format!(
                "initial configuration has {} values, robot has {} joints",
                q0.len(),
                model.ndof()
            )));
        }
        if !(cfg.rate_hz > 0.0 && cfg.rate_hz.is_finite()) {
            return Err(NodeError::Failed(format!(
                "rate_hz must be positive, got {}",
                cfg.rate_hz
            )));
        }
        let input = node.subscribe(&cfg.command_topic);
        let topic = cfg.target_topic();
        node.advertise(&topic)?;
        let target = link_poses(&model, &base, &q0)[link];
        Ok(Self {
            timer: RateTimer::from_hz(cfg.rate_hz),
            command: vec![0.0; cfg.axes.len()],
            cfg,
            node,
            input,
            model,
            base,
            link,
            registry,
            q: q0,
            target,
            topic,
        })
    }

    pub fn target(&self) -> Pose {
        self.target
    }
}

impl Node for CartesianTeleop {
    fn name(&self) -> &str {
        self.node.name()
    }

    fn poll(&mut self, now_ns: u64) -> Result<(), NodeError> {
        for env in self.input.drain() {
            match env.payload {
                Payload::Float64Array(a) if a.data.len() == self.cfg.axes.len() => self.command = a.data,
                _ => log::warn!("{}: ignoring malformed command on `{}`", self.node.name(), env.topic),
            }
        }
        if !self.timer.due(now_ns) {
            return Ok(());
        }
        if self.command.iter().any(|&c| c != 0.0) {
            let dt = self.timer.period_ns() as f64 * 1e-9;
            let (mut v, mut w) = (Vec3::ZERO, Vec3::ZERO);
            for (axis, &c) in self.cfg.axes.iter().zip(&self.command) {
                match axis {
                    CartAxis::X => v.x += c,
                    CartAxis::Y => v.y += c,
                    CartAxis::Z => v.z += c,
                    CartAxis::Rx => w.x += c,
                    CartAxis::Ry => w.y += c,
                    CartAxis::Rz => w.z += c,
                }
            }
            let mut p = self.target.translation + v * dt;
            if let Some([lo, hi]) = self.cfg.workspace {
                p = p.max(lo).min(hi);
            }
            self.target.translation = p;
            self.target.rotation = self.target.rotation.integrate(w, dt);

            let problem = IkProblem {
                model: &self.model,
                base: &self.base,
                link: self.link,
                local: Vec3::ZERO,
                target: self.target,
            };
            let r = self
                .registry
                .solve(&self.cfg.solver, &problem, &self.q, &self.cfg.ik)
                .map_err(|e| NodeError::Failed(e.to_string()))?;
            if !r.converged {
                // keep the target where the arm can actually be, so it does not wind up
                self.target = link_poses(&self.model, &self.base, &r.q)[self.link];
            }
            self.q = r.q;
        }
        let msg = JointStateMsg::from_positions(self.model.joint_names(), self.q.clone());
        self.node.send(&self.topic, now_ns, Payload::JointState(msg))?;
        Ok(())
    }
}
