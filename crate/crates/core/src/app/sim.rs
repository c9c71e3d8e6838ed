//! The simulator node: owns the world, applies incoming commands at step
//! boundaries and publishes the resulting state.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bus::{ClockMsg, JointStateMsg, NodeHandle, Payload, ServiceServer, Subscription, TransformMsg, WrenchMsg};
use crate::dynamics::{SimWorld, StepReport, WorldCommand, WorldError};
use crate::kinematics::{IkParams, IkProblem, IkRegistry};
use crate::math::{Pose, Vec3};
use crate::scene::config::de_pose;
use crate::scene::{ObjectKind, ObjectSpec, PoseSource, Shape, WORLD_FRAME};
use crate::sensors::ft_read;
use crate::utils::exec::{Clock, Node, NodeError, RateTimer};

pub const CLOCK_TOPIC: &str = "rpbi/clock";
pub const ADD_OBJECT_SERVICE: &str = "rpbi/add_object";
pub const REMOVE_OBJECT_SERVICE: &str = "rpbi/remove_object";
pub const LIST_OBJECTS_SERVICE: &str = "rpbi/list_objects";
pub const ROBOT_INFO_SERVICE: &str = "rpbi/robot_info";

pub type SharedWorld = Arc<Mutex<SimWorld>>;

pub fn lock(world: &SharedWorld) -> MutexGuard<'_, SimWorld> {
    world.lock().unwrap_or_else(|p| p.into_inner())
}

pub fn joint_states_topic(robot: &str) -> String {
    format!("rpbi/{robot}/joint_states")
}

pub fn target_topic(robot: &str) -> String {
    format!("rpbi/{robot}/target_joint_state")
}

pub fn commanded_topic(robot: &str) -> String {
    format!("rpbi/{robot}/commanded_joint_state")
}

/// Transform topic of a body, visual object, or `robot/link`.
pub fn tf_topic(frame: &str) -> String {
    format!("rpbi/tf/{frame}")
}

pub fn ft_topic(robot: &str, joint: &str) -> String {
    format!("rpbi/{robot}/ft/{joint}")
}

struct RobotIo {
    name: String,
    commands: Subscription,
    state_topic: String,
    link_topics: Vec<String>,
    joint_names: Vec<String>,
    ft: Vec<(String, String, RateTimer)>,
}

/// Publishes the world and consumes joint commands. Each [`poll`](Node::poll)
/// advances the world by one step.
pub struct SimNode {
    node: Arc<NodeHandle>,
    world: SharedWorld,
    clock: Clock,
    robots: Vec<RobotIo>,
    // visual object name -> (source topic, subscription)
    followers: HashMap<String, (String, Subscription)>,
    publish_every: u64,
    last: Option<StepReport>,
    _services: Vec<ServiceServer>,
}

impl SimNode {
    /// `command_topics` overrides the per-robot joint command input, which
    /// defaults to `rpbi/<robot>/commanded_joint_state`.
    pub fn new(
        node: NodeHandle,
        world: SharedWorld,
        clock: Clock,
        command_topics: &BTreeMap<String, String>,
    ) -> Result<Self, NodeError> {
        let node = Arc::new(node);
        let mut robots = Vec::new();
        {
            let w = lock(&world);
            for r in w.robots() {
                let input = command_topics
                    .get(&r.name)
                    .cloned()
                    .unwrap_or_else(|| commanded_topic(&r.name));
                let link_topics: Vec<String> = r
                    .model
                    .links
                    .iter()
                    .map(|l| tf_topic(&format!("{}/{}", r.name, l.name)))
                    .collect();
                robots.push(RobotIo {
                    name: r.name.clone(),
                    commands: node.subscribe(&input),
                    state_topic: joint_states_topic(&r.name),
                    link_topics,
                    joint_names: r.model.joint_names(),
                    ft: Vec::new(),
                });
            }
        }
        let publish_every = lock(&world).params.publish_every;
        let services = advertise_services(&node, &world, &clock)?;
        let mut sim = Self {
            node,
            world,
            clock,
            robots,
            followers: HashMap::new(),
            publish_every,
            last: None,
            _services: services,
        };
        sim.publish_state()?;
        Ok(sim)
    }

    /// Adds an F/T stream for `joint` of `robot` at `rate_hz` (sim time).
    pub fn add_ft_sensor(&mut self, robot: &str, joint: &str, rate_hz: f64) -> Result<(), NodeError> {
        {
            let w = lock(&self.world);
            let r = w
                .robot(robot)
                .ok_or_else(|| NodeError::Failed(format!("no robot `{robot}`")))?;
            if r.model.joint_index(joint).is_none() {
                return Err(NodeError::Failed(format!("robot `{robot}` has no joint `{joint}`")));
            }
        }
        let io = self
            .robots
            .iter_mut()
            .find(|r| r.name == robot)
            .expect("robot io exists");
        io.ft
            .push((joint.to_string(), ft_topic(robot, joint), RateTimer::from_hz(rate_hz)));
        Ok(())
    }

    pub fn world(&self) -> &SharedWorld {
        &self.world
    }

    /// Report of the most recent step.
    pub fn last_report(&self) -> Option<&StepReport> {
        self.last.as_ref()
    }

    fn ingest(&mut self, w: &mut SimWorld) {
        for io in &self.robots {
            for env in io.commands.drain() {
                let Payload::JointState(js) = env.payload else {
                    log::warn!("sim: ignoring {} on `{}`", env.payload.type_name(), env.topic);
                    continue;
                };
                let Some(r) = w.robot(&io.name) else { continue };
                // joints absent from the message keep their current target
                let mut q = r.target.clone();
                let mut matched = 0;
                for (i, name) in io.joint_names.iter().enumerate() {
                    if let Some(v) = js.position(name) {
                        q[i] = v;
                        matched += 1;
                    }
                }
                if matched == 0 {
                    log::warn!("sim: command on `{}` names none of {:?}", env.topic, io.joint_names);
                    continue;
                }
                let cmd = if r.is_visual {
                    WorldCommand::SetRobotState {
                        robot: io.name.clone(),
                        q,
                    }
                } else {
                    WorldCommand::SetRobotTarget {
                        robot: io.name.clone(),
                        q,
                    }
                };
                if let Err(e) = w.submit(cmd) {
                    log::warn!("sim: {e}");
                }
            }
        }
        // visual objects following topics, including ones added at run time
        for v in w.visuals() {
            if let PoseSource::Topic(t) = &v.pose_source {
                if self.followers.get(&v.name).is_none_or(|(topic, _)| topic != t) {
                    self.followers
                        .insert(v.name.clone(), (t.clone(), self.node.subscribe(t)));
                }
            }
        }
        self.followers.retain(|name, _| w.visual(name).is_some());
        let mut updates = Vec::new();
        for (name, (_, sub)) in &self.followers {
            if let Some(env) = sub.drain().pop() {
                match env.payload {
                    Payload::Transform(t) => updates.push((name.clone(), t.pose)),
                    other => log::warn!("sim: `{name}` follows `{}`, got {}", env.topic, other.type_name()),
                }
            }
        }
        updates.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, pose) in updates {
            if let Err(e) = w.submit(WorldCommand::SetVisualPose { name, pose }) {
                log::warn!("sim: {e}");
            }
        }
    }

    /// Applies queued commands, steps once and publishes.
    pub fn step(&mut self) -> Result<StepReport, NodeError> {
        let report = {
            let world = self.world.clone();
            let mut w = lock(&world);
            self.ingest(&mut w);
            w.step().map_err(|e| NodeError::Failed(e.to_string()))?
        };
        self.clock.set(report.sim_time_ns);
        self.last = Some(report.clone());
        self.publish_state()?;
        Ok(report)
    }

    fn publish_state(&mut self) -> Result<(), NodeError> {
        let w = lock(&self.world);
        let t = w.sim_time_ns();
        let n = &self.node;
        n.send(CLOCK_TOPIC, t, Payload::Clock(ClockMsg { sim_time_ns: t }))?;
        let full = w.step_count().is_multiple_of(self.publish_every);
        let tf = |child: &str, topic: &str, pose: Pose| {
            n.send(
                topic,
                t,
                Payload::Transform(TransformMsg {
                    parent: WORLD_FRAME.to_string(),
                    child: child.to_string(),
                    pose,
                }),
            )
        };
        for io in &mut self.robots {
            let Some(r) = w.robot(&io.name) else { continue };
            if full {
                let js = JointStateMsg {
                    names: io.joint_names.clone(),
                    positions: r.q.clone(),
                    velocities: r.qd.clone(),
                    efforts: vec![0.0; r.q.len()],
                };
                n.send(&io.state_topic, t, Payload::JointState(js))?;
                for (l, topic) in io.link_topics.iter().enumerate() {
                    tf(&format!("{}/{}", r.name, r.model.links[l].name), topic, r.link_poses[l])?;
                }
            }
            for (joint, topic, timer) in &mut io.ft {
                if timer.due(t) {
                    let wrench = ft_read(&w, &io.name, joint).map_err(|e| NodeError::Failed(e.to_string()))?;
                    let frame = format!("{}/{}", io.name, joint);
                    n.send(topic, t, Payload::Wrench(WrenchMsg { frame, wrench }))?;
                }
            }
        }
        if full {
            for b in w.bodies() {
                tf(&b.name, &tf_topic(&b.name), b.state.pose)?;
            }
            for v in w.visuals() {
                tf(&v.name, &tf_topic(&v.name), v.pose)?;
            }
        }
        Ok(())
    }
}

impl Node for SimNode {
    fn name(&self) -> &str {
        self.node.name()
    }

    fn poll(&mut self, _now_ns: u64) -> Result<(), NodeError> {
        self.step().map(|_| ())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NameRequest {
    name: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointRequest {
    #[serde(default)]
    names: Option<Vec<String>>,
    positions: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EefRequest {
    #[serde(deserialize_with = "de_pose")]
    pose: Pose,
    #[serde(default)]
    link: Option<String>,
    /// Point on the link to place at the pose, in link coordinates.
    #[serde(default)]
    offset: Option<Vec3>,
    #[serde(default = "default_solver")]
    solver: String,
    #[serde(default)]
    ik: Option<IkParams>,
}

fn default_solver() -> String {
    "dls".into()
}

#[derive(Serialize)]
struct ObjectEntry<'a> {
    name: &'a str,
    kind: ObjectKind,
    shape: &'a Shape,
    position: Vec3,
    orientation: [f64; 4],
}

fn parse<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T, String> {
    serde_json::from_value(v).map_err(|e| format!("bad request: {e}"))
}

fn object_list(w: &SimWorld) -> Value {
    let entry = |name, kind, shape, pose: &Pose| {
        let q = pose.rotation;
        serde_json::to_value(ObjectEntry {
            name,
            kind,
            shape,
            position: pose.translation,
            orientation: [q.w, q.x, q.y, q.z],
        })
        .expect("entries serialize")
    };
    let mut out: Vec<Value> = w
        .bodies()
        .iter()
        .map(|b| {
            let kind = if b.is_dynamic() {
                ObjectKind::Dynamic
            } else {
                ObjectKind::Collision
            };
            entry(b.name.as_str(), kind, &b.shape, &b.state.pose)
        })
        .collect();
    out.extend(
        w.visuals()
            .iter()
            .map(|v| entry(v.name.as_str(), ObjectKind::Visual, &v.shape, &v.pose)),
    );
    Value::Array(out)
}

fn robot_info(w: &SimWorld) -> Value {
    let robots: Vec<Value> = w
        .robots()
        .iter()
        .map(|r| {
            let limits = r.model.limits();
            json!({
                "name": r.name,
                "visual": r.is_visual,
                "joints": r.model.joint_names(),
                "lower": limits.iter().map(|l| l.lower).collect::<Vec<_>>(),
                "upper": limits.iter().map(|l| l.upper).collect::<Vec<_>>(),
                "velocity": r.max_velocity,
                "links": r.model.link_names(),
                "end_effector": r.model.links[r.end_effector].name,
                "q": r.q,
            })
        })
        .collect();
    json!({ "robots": robots })
}

fn advertise_services(
    node: &Arc<NodeHandle>,
    world: &SharedWorld,
    clock: &Clock,
) -> Result<Vec<ServiceServer>, NodeError> {
    let mut out = Vec::new();
    let wr = |e: WorldError| e.to_string();

    let w = world.clone();
    out.push(node.advertise_service(ADD_OBJECT_SERVICE, move |req| {
        let spec: ObjectSpec = parse(req)?;
        if spec.kind.is_none() {
            return Err("`kind` is required (visual, collision or dynamic)".into());
        }
        let name = spec.name.clone();
        lock(&w).submit(WorldCommand::AddObject(spec)).map_err(wr)?;
        Ok(json!({ "name": name }))
    })?);

    let w = world.clone();
    out.push(node.advertise_service(REMOVE_OBJECT_SERVICE, move |req| {
        let r: NameRequest = parse(req)?;
        lock(&w)
            .submit(WorldCommand::RemoveObject(r.name.clone()))
            .map_err(wr)?;
        Ok(json!({ "name": r.name }))
    })?);

    let w = world.clone();
    out.push(node.advertise_service(LIST_OBJECTS_SERVICE, move |_| Ok(object_list(&lock(&w))))?);

    let w = world.clone();
    out.push(node.advertise_service(ROBOT_INFO_SERVICE, move |_| Ok(robot_info(&lock(&w))))?);

    let names: Vec<String> = lock(world).robots().iter().map(|r| r.name.clone()).collect();
    let registry = IkRegistry::default();
    for robot in names {
        let (w, n, c, r) = (world.clone(), node.clone(), clock.clone(), robot.clone());
        out.push(
            node.advertise_service(&format!("rpbi/{robot}/move_to_joint_state"), move |req| {
                let jr: JointRequest = parse(req)?;
                let q = resolve_joints(&lock(&w), &r, &jr)?;
                command(&w, &n, &c, &r, q)?;
                Ok(json!({ "ok": true }))
            })?,
        );

        let (w, n, c, r, reg) = (
            world.clone(),
            node.clone(),
            clock.clone(),
            robot.clone(),
            registry.clone(),
        );
        out.push(
            node.advertise_service(&format!("rpbi/{robot}/move_to_eef_state"), move |req| {
                let er: EefRequest = parse(req)?;
                let res = solve_ik(&lock(&w), &reg, &r, &er)?;
                if !res.converged {
                    return Err(format!(
                        "IK did not converge (position error {:.3e} m, orientation error {:.3e} rad)",
                        res.pos_error, res.ori_error
                    ));
                }
                command(&w, &n, &c, &r, res.q.clone())?;
                Ok(serde_json::to_value(res).expect("ik results serialize"))
            })?,
        );

        let (w, r, reg) = (world.clone(), robot.clone(), registry.clone());
        out.push(node.advertise_service(&format!("rpbi/{robot}/ik"), move |req| {
            let er: EefRequest = parse(req)?;
            let res = solve_ik(&lock(&w), &reg, &r, &er)?;
            Ok(serde_json::to_value(res).expect("ik results serialize"))
        })?);
    }
    Ok(out)
}

fn resolve_joints(w: &SimWorld, robot: &str, req: &JointRequest) -> Result<Vec<f64>, String> {
    let r = w.robot(robot).ok_or_else(|| format!("no robot `{robot}`"))?;
    match &req.names {
        None => {
            if req.positions.len() != r.ndof() {
                return Err(format!(
                    "robot `{robot}` has {} joints, got {} values",
                    r.ndof(),
                    req.positions.len()
                ));
            }
            Ok(req.positions.clone())
        }
        Some(names) => {
            if names.len() != req.positions.len() {
                return Err("names and positions differ in length".into());
            }
            let mut q = r.target.clone();
            for (n, v) in names.iter().zip(&req.positions) {
                let j = r.model.joint_index(n).and_then(|j| r.model.dof_index(j));
                let j = j.ok_or_else(|| format!("robot `{robot}` has no actuated joint `{n}`"))?;
                q[j] = *v;
            }
            Ok(q)
        }
    }
}

fn solve_ik(
    w: &SimWorld,
    reg: &IkRegistry,
    robot: &str,
    req: &EefRequest,
) -> Result<crate::kinematics::IkResult, String> {
    let r = w.robot(robot).ok_or_else(|| format!("no robot `{robot}`"))?;
    let link = match &req.link {
        Some(l) => r
            .model
            .link_index(l)
            .ok_or_else(|| format!("robot `{robot}` has no link `{l}`"))?,
        None => r.end_effector,
    };
    let problem = IkProblem {
        model: &r.model,
        base: &r.base_pose,
        link,
        local: req.offset.unwrap_or(Vec3::ZERO),
        target: req.pose,
    };
    reg.solve(&req.solver, &problem, &r.q, &req.ik.unwrap_or_default())
        .map_err(|e| e.to_string())
}

/// Visual robots jump to `q`; physical robots receive it as a target through
/// the usual command path, so the safety guard still applies.
fn command(w: &SharedWorld, n: &NodeHandle, clock: &Clock, robot: &str, q: Vec<f64>) -> Result<(), String> {
    let (visual, names) = {
        let g = lock(w);
        let r = g.robot(robot).ok_or_else(|| format!("no robot `{robot}`"))?;
        (r.is_visual, r.model.joint_names())
    };
    if visual {
        return lock(w)
            .submit(WorldCommand::SetRobotState {
                robot: robot.to_string(),
                q,
            })
            .map_err(|e| e.to_string());
    }
    let js = JointStateMsg::from_positions(names, q);
    n.send(&target_topic(robot), clock.now_ns(), Payload::JointState(js))
        .map_err(|e| e.to_string())
}
