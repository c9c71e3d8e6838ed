use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::collide::{collide, pair_supported};
use super::solver::{self, SolverBody};
use super::{MaterialParams, RigidBodyState, Timebase};
use crate::kinematics::link_poses;
use crate::math::{mat3_mul, mat3_transpose, Mat3, Pose, Twist, Vec3};
use crate::scene::{
    ConfigError, ObjectKind, ObjectSpec, PhysicsParams, PoseSource, RobotModel, RobotSpec, SceneError, SceneFile, Shape,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("name `{0}` is already in use")]
    DuplicateName(String),
    #[error("no object named `{0}`")]
    UnknownObject(String),
    #[error("no robot named `{0}`")]
    UnknownRobot(String),
    #[error("`{0}` is not a visual object")]
    NotVisual(String),
    #[error("robot `{robot}` has {expected} joints, got {got} values")]
    DofMismatch { robot: String, expected: usize, got: usize },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
    #[error("no contact routine for {0} against {1}")]
    UnsupportedPair(&'static str, &'static str),
    #[error("non-finite state in body `{0}`; simulation halted")]
    NonFinite(String),
    #[error("simulation halted after non-finite state in `{0}`")]
    Halted(String),
}

/// Identifies one collision shape in the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ColliderId {
    Body(u64),
    Link { robot: u64, link: u32, geom: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContactPoint {
    pub body_a: String,
    pub body_b: String,
    pub a: ColliderId,
    pub b: ColliderId,
    pub point: Vec3,
    /// Unit normal from A to B.
    pub normal: Vec3,
    pub depth: f64,
    /// Normal impulse applied to B during the step (N·s).
    pub normal_impulse: f64,
    pub tangents: [Vec3; 2],
    pub friction_impulse: [f64; 2],
}

impl ContactPoint {
    /// Total impulse applied to B; A receives the opposite.
    pub fn impulse_on_b(&self) -> Vec3 {
        self.normal * self.normal_impulse
            + self.tangents[0] * self.friction_impulse[0]
            + self.tangents[1] * self.friction_impulse[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub id: u64,
    pub name: String,
    pub shape: Shape,
    pub state: RigidBodyState,
    pub color: [u8; 3],
}

impl Body {
    pub fn is_dynamic(&self) -> bool {
        !self.state.kinematic
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualObject {
    pub name: String,
    pub shape: Shape,
    pub pose: Pose,
    pub color: [u8; 3],
    pub pose_source: PoseSource,
}

#[derive(Debug, Clone)]
pub struct RobotInstance {
    pub id: u64,
    pub name: String,
    pub model: Arc<RobotModel>,
    pub base_pose: Pose,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub target: Vec<f64>,
    pub max_velocity: Vec<f64>,
    pub is_visual: bool,
    pub material: MaterialParams,
    pub end_effector: usize,
    pub link_poses: Vec<Pose>,
    /// Link-origin twists over the last step, in the world frame.
    pub link_twists: Vec<Twist>,
    /// Number of target entries clamped into the joint limits.
    pub clamp_count: u64,
    pub color: [u8; 3],
}

impl RobotInstance {
    pub fn new(id: u64, spec: &RobotSpec, model: Arc<RobotModel>, path: &str) -> Result<Self, ConfigError> {
        let n = model.ndof();
        let limits = model.limits();
        let q = match &spec.initial_q {
            Some(q) if q.len() != n => {
                return Err(ConfigError::new(
                    format!("{path}.initial_q"),
                    format!("expected {n} values, got {}", q.len()),
                ))
            }
            Some(q) => {
                for (i, (v, l)) in q.iter().zip(&limits).enumerate() {
                    if !(l.lower..=l.upper).contains(v) {
                        return Err(ConfigError::new(
                            format!("{path}.initial_q[{i}]"),
                            format!("{v} outside [{}, {}]", l.lower, l.upper),
                        ));
                    }
                }
                q.clone()
            }
            None => model.neutral_q(),
        };
        let max_velocity = match &spec.max_joint_velocity {
            Some(v) if v.len() != n => {
                return Err(ConfigError::new(
                    format!("{path}.max_joint_velocity"),
                    format!("expected {n} values, got {}", v.len()),
                ))
            }
            Some(v) => {
                if let Some(i) = v.iter().position(|x| !(*x > 0.0)) {
                    return Err(ConfigError::new(
                        format!("{path}.max_joint_velocity[{i}]"),
                        "velocity caps must be positive",
                    ));
                }
                v.iter().zip(&limits).map(|(a, l)| a.min(l.velocity)).collect()
            }
            None => limits.iter().map(|l| l.velocity).collect(),
        };
        let end_effector = match &spec.end_effector {
            Some(name) => model
                .link_index(name)
                .ok_or_else(|| ConfigError::new(format!("{path}.end_effector"), format!("no link `{name}`")))?,
            None => model.default_end_effector(),
        };
        for (k, s) in spec.ft_sensors.iter().enumerate() {
            if model.joint_index(&s.joint).is_none() {
                return Err(ConfigError::new(
                    format!("{path}.ft_sensors[{k}].joint"),
                    format!("no joint `{}`", s.joint),
                ));
            }
        }
        let material = spec.material.unwrap_or_default();
        material
            .validate()
            .map_err(|m| ConfigError::new(format!("{path}.material"), m))?;
        let poses = link_poses(&model, &spec.base_pose, &q);
        Ok(Self {
            id,
            name: spec.name.clone(),
            base_pose: spec.base_pose,
            qd: vec![0.0; n],
            target: q.clone(),
            q,
            max_velocity,
            is_visual: spec.is_visual_robot,
            material,
            end_effector,
            link_twists: vec![Twist::ZERO; poses.len()],
            link_poses: poses,
            clamp_count: 0,
            color: if spec.is_visual_robot {
                [120, 200, 255]
            } else {
                [230, 140, 40]
            },
            model,
        })
    }

    pub fn ndof(&self) -> usize {
        self.model.ndof()
    }

    /// Sets the position-control target, clamped into the joint limits.
    /// Returns the number of clamped entries.
    pub fn set_target(&mut self, q: &[f64]) -> Result<usize, WorldError> {
        if q.len() != self.ndof() {
            return Err(WorldError::DofMismatch {
                robot: self.name.clone(),
                expected: self.ndof(),
                got: q.len(),
            });
        }
        let mut t = q.to_vec();
        let clamped = self.model.clamp_to_limits(&mut t);
        if clamped > 0 {
            self.clamp_count += clamped as u64;
            log::warn!(
                "robot `{}`: {clamped} target value(s) clamped to joint limits",
                self.name
            );
        }
        self.target = t;
        Ok(clamped)
    }

    /// Places the robot at `q` immediately (used for visual robots).
    pub fn teleport(&mut self, q: &[f64]) -> Result<(), WorldError> {
        self.set_target(q)?;
        self.q = self.target.clone();
        self.qd = vec![0.0; self.ndof()];
        self.link_poses = link_poses(&self.model, &self.base_pose, &self.q);
        self.link_twists = vec![Twist::ZERO; self.link_poses.len()];
        Ok(())
    }

    /// Moves every joint towards its target by at most `vmax·dt`.
    pub fn advance_joints(&mut self, dt: f64) {
        for i in 0..self.q.len() {
            let max_step = self.max_velocity[i] * dt;
            let err = self.target[i] - self.q[i];
            let prev = self.q[i];
            if err.abs() <= max_step {
                self.q[i] = self.target[i];
            } else {
                self.q[i] += max_step.copysign(err);
            }
            self.qd[i] = (self.q[i] - prev) / dt;
        }
    }

    /// World pose of each collision geometry of `link`.
    pub fn geom_pose(&self, link: usize, geom: usize) -> Pose {
        self.link_poses[link].compose(&self.model.links[link].collisions[geom].origin)
    }
}

/// Mutation queued for the next step boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum WorldCommand {
    AddObject(ObjectSpec),
    RemoveObject(String),
    SetVisualPose { name: String, pose: Pose },
    SetRobotTarget { robot: String, q: Vec<f64> },
    SetRobotState { robot: String, q: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub step: u64,
    pub sim_time_ns: u64,
    pub contacts: Vec<ContactPoint>,
}

#[derive(Debug, Clone, Copy)]
struct WarmPoint {
    local: Vec3,
    jn: f64,
    jt: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct SimWorld {
    pub gravity: Vec3,
    pub params: PhysicsParams,
    timebase: Timebase,
    step_count: u64,
    bodies: Vec<Body>,
    robots: Vec<RobotInstance>,
    visuals: Vec<VisualObject>,
    pending: VecDeque<WorldCommand>,
    next_id: u64,
    contacts: Vec<ContactPoint>,
    warm: HashMap<(ColliderId, ColliderId), Vec<WarmPoint>>,
    halted: Option<String>,
}

fn default_color(kind: ObjectKind, index: usize) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 6] = [
        [200, 60, 60],
        [60, 160, 80],
        [70, 100, 210],
        [210, 180, 50],
        [160, 70, 190],
        [60, 180, 190],
    ];
    match kind {
        ObjectKind::Collision => [150, 150, 150],
        _ => PALETTE[index % PALETTE.len()],
    }
}

fn inverse_inertia_world(pose: &Pose, inertia: Vec3) -> Mat3 {
    let inv = |v: f64| if v > 0.0 { 1.0 / v } else { 0.0 };
    let r = pose.rotation.to_matrix();
    let d = [
        [inv(inertia.x), 0.0, 0.0],
        [0.0, inv(inertia.y), 0.0],
        [0.0, 0.0, inv(inertia.z)],
    ];
    mat3_mul(&mat3_mul(&r, &d), &mat3_transpose(&r))
}

impl SimWorld {
    pub fn new(gravity: Vec3, timestep_s: f64, params: PhysicsParams) -> Self {
        Self {
            gravity,
            params,
            timebase: Timebase::from_seconds(timestep_s),
            step_count: 0,
            bodies: Vec::new(),
            robots: Vec::new(),
            visuals: Vec::new(),
            pending: VecDeque::new(),
            next_id: 1,
            contacts: Vec::new(),
            warm: HashMap::new(),
            halted: None,
        }
    }

    /// Builds the world described by a scene file, loading every URDF.
    pub fn from_scene(scene: &SceneFile) -> Result<Self, SceneError> {
        let cfg = &scene.config;
        let mut world = Self::new(cfg.gravity, cfg.timestep_s, cfg.physics);
        for (i, spec) in cfg.robots.iter().enumerate() {
            let model = scene.load_urdf(&spec.urdf)?;
            world.add_robot(spec, model, &format!("robots[{i}]"))?;
        }
        for obj in cfg.objects() {
            world
                .add_object(obj.clone())
                .map_err(|e| ConfigError::new(format!("{}.{}", obj.kind().list_key(), obj.name), e.to_string()))?;
        }
        for (i, entry) in cfg.urdfs.iter().enumerate() {
            let model = scene.load_urdf(&entry.path)?;
            world
                .add_urdf_body(&entry.name, &model, &entry.pose)
                .map_err(|e| ConfigError::new(format!("urdfs[{i}]"), e.to_string()))?;
        }
        Ok(world)
    }

    fn alloc_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn name_in_use(&self, name: &str) -> bool {
        self.bodies.iter().any(|b| b.name == name)
            || self.visuals.iter().any(|v| v.name == name)
            || self.robots.iter().any(|r| r.name == name)
    }

    pub fn add_robot(&mut self, spec: &RobotSpec, model: Arc<RobotModel>, path: &str) -> Result<(), ConfigError> {
        if self.name_in_use(&spec.name) {
            return Err(ConfigError::new(
                format!("{path}.name"),
                format!("duplicate name `{}`", spec.name),
            ));
        }
        let id = self.alloc_id();
        let robot = RobotInstance::new(id, spec, model, path)?;
        self.robots.push(robot);
        Ok(())
    }

    /// Adds an object immediately. Prefer [`SimWorld::submit`] while stepping.
    pub fn add_object(&mut self, spec: ObjectSpec) -> Result<(), WorldError> {
        spec.validate("object")?;
        if self.name_in_use(&spec.name) {
            return Err(WorldError::DuplicateName(spec.name));
        }
        let kind = spec.kind();
        let color = spec
            .color
            .unwrap_or_else(|| default_color(kind, self.bodies.len() + self.visuals.len()));
        match kind {
            ObjectKind::Visual => self.visuals.push(VisualObject {
                name: spec.name,
                shape: spec.shape,
                pose: spec.pose,
                color,
                pose_source: spec.pose_source.unwrap_or_default(),
            }),
            ObjectKind::Collision | ObjectKind::Dynamic => {
                let dynamic = kind == ObjectKind::Dynamic;
                for other in &self.bodies {
                    if (dynamic || other.is_dynamic()) && !pair_supported(&spec.shape, &other.shape) {
                        return Err(WorldError::UnsupportedPair(
                            spec.shape.kind_name(),
                            other.shape.kind_name(),
                        ));
                    }
                }
                let mass = spec.mass.unwrap_or(0.0);
                let id = self.alloc_id();
                self.bodies.push(Body {
                    id,
                    name: spec.name,
                    shape: spec.shape,
                    state: RigidBodyState {
                        pose: spec.pose,
                        twist: if dynamic {
                            spec.twist.unwrap_or_default()
                        } else {
                            Twist::ZERO
                        },
                        mass,
                        inertia_diag: spec.shape.unit_inertia() * mass,
                        material: spec.material.unwrap_or_default(),
                        kinematic: !dynamic,
                    },
                    color,
                });
            }
        }
        Ok(())
    }

    /// Loads every collision geometry of a URDF, at its neutral configuration,
    /// as immovable bodies named `<name>/<link>[/<k>]`.
    pub fn add_urdf_body(&mut self, name: &str, model: &RobotModel, pose: &Pose) -> Result<(), WorldError> {
        if self.name_in_use(name) {
            return Err(WorldError::DuplicateName(name.to_string()));
        }
        let poses = link_poses(model, pose, &model.neutral_q());
        for (l, link) in model.links.iter().enumerate() {
            for (k, geom) in link.collisions.iter().enumerate() {
                let part = if link.collisions.len() == 1 {
                    format!("{name}/{}", link.name)
                } else {
                    format!("{name}/{}/{k}", link.name)
                };
                self.add_object(ObjectSpec {
                    name: part,
                    kind: Some(ObjectKind::Collision),
                    shape: geom.shape,
                    pose: poses[l].compose(&geom.origin),
                    mass: None,
                    material: None,
                    twist: None,
                    pose_source: None,
                    color: None,
                })?;
            }
        }
        Ok(())
    }

    pub fn remove_object(&mut self, name: &str) -> Result<(), WorldError> {
        if let Some(i) = self.bodies.iter().position(|b| b.name == name) {
            let id = self.bodies.remove(i).id;
            self.warm
                .retain(|(a, b), _| *a != ColliderId::Body(id) && *b != ColliderId::Body(id));
            Ok(())
        } else if let Some(i) = self.visuals.iter().position(|v| v.name == name) {
            self.visuals.remove(i);
            Ok(())
        } else {
            Err(WorldError::UnknownObject(name.to_string()))
        }
    }

    /// Validates `cmd` against the current world plus everything already
    /// queued, then queues it for the next step boundary.
    pub fn submit(&mut self, cmd: WorldCommand) -> Result<(), WorldError> {
        let mut names: HashSet<String> = self
            .bodies
            .iter()
            .map(|b| b.name.clone())
            .chain(self.robots.iter().map(|r| r.name.clone()))
            .collect();
        let mut visuals: HashSet<String> = self.visuals.iter().map(|v| v.name.clone()).collect();
        names.extend(visuals.iter().cloned());
        for queued in &self.pending {
            match queued {
                WorldCommand::AddObject(s) => {
                    names.insert(s.name.clone());
                    if s.kind() == ObjectKind::Visual {
                        visuals.insert(s.name.clone());
                    }
                }
                WorldCommand::RemoveObject(n) => {
                    names.remove(n);
                    visuals.remove(n);
                }
                _ => {}
            }
        }
        match &cmd {
            WorldCommand::AddObject(spec) => {
                spec.validate("object")?;
                if names.contains(&spec.name) {
                    return Err(WorldError::DuplicateName(spec.name.clone()));
                }
                if spec.kind() != ObjectKind::Visual {
                    for other in &self.bodies {
                        let either_dynamic = spec.kind() == ObjectKind::Dynamic || other.is_dynamic();
                        if either_dynamic && !pair_supported(&spec.shape, &other.shape) {
                            return Err(WorldError::UnsupportedPair(
                                spec.shape.kind_name(),
                                other.shape.kind_name(),
                            ));
                        }
                    }
                }
            }
            WorldCommand::RemoveObject(name) => {
                if !names.contains(name) || self.robots.iter().any(|r| &r.name == name) {
                    return Err(WorldError::UnknownObject(name.clone()));
                }
            }
            WorldCommand::SetVisualPose { name, pose } => {
                if !visuals.contains(name) {
                    return Err(if names.contains(name) {
                        WorldError::NotVisual(name.clone())
                    } else {
                        WorldError::UnknownObject(name.clone())
                    });
                }
                if !pose.is_finite() {
                    return Err(ConfigError::new("pose", "pose must be finite").into());
                }
            }
            WorldCommand::SetRobotTarget { robot, q } | WorldCommand::SetRobotState { robot, q } => {
                let r = self
                    .robot(robot)
                    .ok_or_else(|| WorldError::UnknownRobot(robot.clone()))?;
                if q.len() != r.ndof() {
                    return Err(WorldError::DofMismatch {
                        robot: robot.clone(),
                        expected: r.ndof(),
                        got: q.len(),
                    });
                }
            }
        }
        self.pending.push_back(cmd);
        Ok(())
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Applies every queued command in submission order.
    pub fn apply_pending(&mut self) {
        while let Some(cmd) = self.pending.pop_front() {
            let result = match cmd {
                WorldCommand::AddObject(spec) => self.add_object(spec),
                WorldCommand::RemoveObject(name) => self.remove_object(&name),
                WorldCommand::SetVisualPose { name, pose } => match self.visuals.iter_mut().find(|v| v.name == name) {
                    Some(v) => {
                        v.pose = pose;
                        Ok(())
                    }
                    None => Err(WorldError::UnknownObject(name)),
                },
                WorldCommand::SetRobotTarget { robot, q } => match self.robot_mut(&robot) {
                    Some(r) => r.set_target(&q).map(|_| ()),
                    None => Err(WorldError::UnknownRobot(robot)),
                },
                WorldCommand::SetRobotState { robot, q } => match self.robot_mut(&robot) {
                    Some(r) => r.teleport(&q),
                    None => Err(WorldError::UnknownRobot(robot)),
                },
            };
            if let Err(e) = result {
                log::warn!("queued world command failed: {e}");
            }
        }
    }

    pub fn dt(&self) -> f64 {
        self.timebase.dt()
    }

    pub fn timebase(&self) -> Timebase {
        self.timebase
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn sim_time_ns(&self) -> u64 {
        self.timebase.time_ns(self.step_count)
    }

    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    pub fn body(&self, name: &str) -> Option<&Body> {
        self.bodies.iter().find(|b| b.name == name)
    }

    pub fn body_mut(&mut self, name: &str) -> Option<&mut Body> {
        self.bodies.iter_mut().find(|b| b.name == name)
    }

    pub fn robots(&self) -> &[RobotInstance] {
        &self.robots
    }

    pub fn robot(&self, name: &str) -> Option<&RobotInstance> {
        self.robots.iter().find(|r| r.name == name)
    }

    pub fn robot_mut(&mut self, name: &str) -> Option<&mut RobotInstance> {
        self.robots.iter_mut().find(|r| r.name == name)
    }

    pub fn visuals(&self) -> &[VisualObject] {
        &self.visuals
    }

    pub fn visual(&self, name: &str) -> Option<&VisualObject> {
        self.visuals.iter().find(|v| v.name == name)
    }

    /// Contacts resolved during the last step.
    pub fn contacts(&self) -> &[ContactPoint] {
        &self.contacts
    }

    pub fn halted(&self) -> Option<&str> {
        self.halted.as_deref()
    }

    /// Sets a robot's joint target directly (between steps).
    pub fn drive_robot(&mut self, robot: &str, q_target: &[f64]) -> Result<usize, WorldError> {
        self.robot_mut(robot)
            .ok_or_else(|| WorldError::UnknownRobot(robot.to_string()))?
            .set_target(q_target)
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.bodies.iter().map(|b| b.state.kinetic_energy()).sum()
    }

    pub fn potential_energy(&self) -> f64 {
        self.bodies
            .iter()
            .filter(|b| b.is_dynamic())
            .map(|b| -b.state.mass * self.gravity.dot(b.state.pose.translation))
            .sum()
    }

    pub fn linear_momentum(&self) -> Vec3 {
        self.bodies
            .iter()
            .filter(|b| b.is_dynamic())
            .fold(Vec3::ZERO, |acc, b| acc + b.state.twist.linear * b.state.mass)
    }

    fn link_name(&self, robot: usize, link: usize) -> String {
        let r = &self.robots[robot];
        format!("{}/{}", r.name, r.model.links[link].name)
    }

    /// Touching or overlapping pairs at the current poses, without impulses.
    pub fn detect_contacts(&self) -> Vec<ContactPoint> {
        let mut out = Vec::new();
        self.for_each_pair(|_, _, a, b, name_a, name_b, raw, _| {
            for c in raw {
                out.push(ContactPoint {
                    body_a: name_a.to_string(),
                    body_b: name_b.to_string(),
                    a,
                    b,
                    point: c.point,
                    normal: c.normal,
                    depth: c.depth,
                    normal_impulse: 0.0,
                    tangents: [Vec3::ZERO; 2],
                    friction_impulse: [0.0; 2],
                });
            }
        });
        out
    }

    /// Visits every colliding pair. The callback receives solver indices
    /// (bodies first, then robot geometries in order), ids, names, raw
    /// contacts and the pose of collider A.
    #[allow(clippy::type_complexity)]
    fn for_each_pair(
        &self,
        mut f: impl FnMut(usize, usize, ColliderId, ColliderId, &str, &str, Vec<super::RawContact>, &Pose),
    ) {
        let aabbs: Vec<_> = self.bodies.iter().map(|b| b.shape.aabb(&b.state.pose)).collect();
        for i in 0..self.bodies.len() {
            for j in i + 1..self.bodies.len() {
                let (a, b) = (&self.bodies[i], &self.bodies[j]);
                if !a.is_dynamic() && !b.is_dynamic() {
                    continue;
                }
                if !aabbs[i].overlaps(&aabbs[j], 1e-6) {
                    continue;
                }
                let raw = collide(&a.shape, &a.state.pose, &b.shape, &b.state.pose)
                    .expect("unsupported pairs are rejected when objects are added");
                if !raw.is_empty() {
                    f(
                        i,
                        j,
                        ColliderId::Body(a.id),
                        ColliderId::Body(b.id),
                        &a.name,
                        &b.name,
                        raw,
                        &a.state.pose,
                    );
                }
            }
        }
        let mut slot = self.bodies.len();
        for (ri, robot) in self.robots.iter().enumerate() {
            if robot.is_visual {
                continue;
            }
            for (l, link) in robot.model.links.iter().enumerate() {
                for (g, geom) in link.collisions.iter().enumerate() {
                    let pose = robot.geom_pose(l, g);
                    let bb = geom.shape.aabb(&pose);
                    let id = ColliderId::Link {
                        robot: robot.id,
                        link: l as u32,
                        geom: g as u32,
                    };
                    let mut name: Option<String> = None;
                    for (bi, body) in self.bodies.iter().enumerate() {
                        if !bb.overlaps(&aabbs[bi], 1e-6) {
                            continue;
                        }
                        let Some(raw) = collide(&geom.shape, &pose, &body.shape, &body.state.pose) else {
                            continue;
                        };
                        if raw.is_empty() {
                            continue;
                        }
                        let name = name.get_or_insert_with(|| self.link_name(ri, l));
                        f(slot, bi, id, ColliderId::Body(body.id), name, &body.name, raw, &pose);
                    }
                    slot += 1;
                }
            }
        }
    }

    /// Advances the world by one timestep.
    pub fn step(&mut self) -> Result<StepReport, WorldError> {
        if let Some(name) = &self.halted {
            return Err(WorldError::Halted(name.clone()));
        }
        self.apply_pending();
        let dt = self.dt();

        // robots: contacts see the current link poses moving with this step's twist
        let mut next_link_poses = Vec::with_capacity(self.robots.len());
        for r in &mut self.robots {
            r.advance_joints(dt);
            let next = link_poses(&r.model, &r.base_pose, &r.q);
            for (l, (old, new)) in r.link_poses.iter().zip(&next).enumerate() {
                let lin = (new.translation - old.translation) / dt;
                let ang = (new.rotation * old.rotation.inverse()).log() / dt;
                r.link_twists[l] = Twist::new(lin, ang);
            }
            next_link_poses.push(next);
        }

        // gravity
        for b in self.bodies.iter_mut().filter(|b| b.is_dynamic()) {
            b.state.twist.linear += self.gravity * dt;
        }

        let mut sbodies: Vec<SolverBody> = self
            .bodies
            .iter()
            .map(|b| {
                let s = &b.state;
                if b.is_dynamic() {
                    SolverBody::moving(
                        1.0 / s.mass,
                        inverse_inertia_world(&s.pose, s.inertia_diag),
                        s.twist.linear,
                        s.twist.angular,
                        s.pose.translation,
                    )
                } else {
                    SolverBody::kinematic(s.twist.linear, s.twist.angular, s.pose.translation)
                }
            })
            .collect();
        for r in self.robots.iter().filter(|r| !r.is_visual) {
            for (l, link) in r.model.links.iter().enumerate() {
                let t = r.link_twists[l];
                for _ in &link.collisions {
                    sbodies.push(SolverBody::kinematic(t.linear, t.angular, r.link_poses[l].translation));
                }
            }
        }

        // collect contacts; robot-vs-immovable pairs become penalty reports
        let mut constraints = Vec::new();
        let mut meta = Vec::new();
        let mut penalty = Vec::new();
        let params = self.params;
        let gravity_dv = self.gravity * dt;
        let warm = std::mem::take(&mut self.warm);
        let materials: Vec<MaterialParams> = self
            .bodies
            .iter()
            .map(|b| b.state.material)
            .chain(self.robots.iter().filter(|r| !r.is_visual).flat_map(|r| {
                r.model
                    .links
                    .iter()
                    .flat_map(move |l| l.collisions.iter().map(move |_| r.material))
            }))
            .collect();
        self.for_each_pair(|ia, ib, a, b, name_a, name_b, raw, pose_a| {
            let immovable = sbodies[ia].inv_mass == 0.0 && sbodies[ib].inv_mass == 0.0;
            let (mu, e) = materials[ia].combine(&materials[ib]);
            let inv_a = pose_a.inverse();
            let cached = warm.get(&(a, b));
            for c in raw {
                let contact = ContactPoint {
                    body_a: name_a.to_string(),
                    body_b: name_b.to_string(),
                    a,
                    b,
                    point: c.point,
                    normal: c.normal,
                    depth: c.depth,
                    normal_impulse: 0.0,
                    tangents: [Vec3::ZERO; 2],
                    friction_impulse: [0.0; 2],
                };
                if immovable {
                    let mut contact = contact;
                    contact.normal_impulse = params.robot_contact_stiffness * c.depth * dt;
                    penalty.push(contact);
                    continue;
                }
                let local = inv_a.transform_point(c.point);
                let hint = if params.warm_start {
                    cached.and_then(|pts| {
                        pts.iter()
                            .find(|p| (p.local - local).norm() < 5e-3)
                            .map(|p| (p.jn, p.jt))
                    })
                } else {
                    None
                };
                constraints.push(solver::prepare(
                    &sbodies, ia, ib, c.point, c.normal, c.depth, mu, e, &params, dt, gravity_dv, hint,
                ));
                meta.push((contact, local));
            }
        });
        solver::warm_start(&mut sbodies, &constraints);
        solver::solve(&mut sbodies, &mut constraints, params.solver_iterations);

        let mut contacts = Vec::with_capacity(meta.len() + penalty.len());
        for (c, (mut contact, local)) in constraints.iter().zip(meta) {
            contact.normal_impulse = c.jn;
            contact.tangents = c.tangents;
            contact.friction_impulse = c.jt;
            self.warm.entry((contact.a, contact.b)).or_default().push(WarmPoint {
                local,
                jn: c.jn,
                jt: c.jt,
            });
            contacts.push(contact);
        }
        contacts.extend(penalty);

        // integrate positions
        for (b, sb) in self.bodies.iter_mut().zip(&sbodies) {
            if !b.is_dynamic() {
                continue;
            }
            let s = &mut b.state;
            s.twist = Twist::new(sb.v, sb.w);
            s.pose.translation += sb.v * dt;
            s.pose.rotation = s.pose.rotation.integrate(sb.w, dt);
        }
        for (r, next) in self.robots.iter_mut().zip(next_link_poses) {
            r.link_poses = next;
        }
        self.step_count += 1;
        self.contacts = contacts;

        if let Some(b) = self.bodies.iter().find(|b| {
            !(b.state.pose.is_finite() && b.state.twist.linear.is_finite() && b.state.twist.angular.is_finite())
        }) {
            log::error!(
                "body `{}` reached a non-finite state at step {}",
                b.name,
                self.step_count
            );
            self.halted = Some(b.name.clone());
            return Err(WorldError::NonFinite(b.name.clone()));
        }
        Ok(StepReport {
            step: self.step_count,
            sim_time_ns: self.sim_time_ns(),
            contacts: self.contacts.clone(),
        })
    }
}
