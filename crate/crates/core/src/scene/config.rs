//! YAML scene description.
//!
//! ```yaml
//! gravity: [0, 0, -9.81]
//! timestep_s: 0.004166666666666667
//! use_sim_time: true
//! robots:
//!   - name: arm
//!     urdf: six_dof_arm.urdf
//!     base_pose: {position: [0, 0, 0]}
//!     initial_q: [0, 0.5, 1.2, 0, 1.4, 0]
//!     ft_sensors: [{joint: tool_joint, rate: 240}]
//! collision_objects:
//!   - name: ground
//!     shape: {type: plane, normal: [0, 0, 1], offset: 0}
//! dynamic_objects:
//!   - name: box
//!     shape: {type: box, half_extents: [0.05, 0.05, 0.05]}
//!     pose: {position: [0.5, 0, 0.05]}
//!     mass: 0.5
//! ```
//!
//! Poses take `position` plus either `orientation` (`[w, x, y, z]`) or `rpy`.

use std::collections::HashSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::shape::Shape;
use crate::dynamics::MaterialParams;
use crate::math::{Pose, Quat, Twist, Vec3};
use crate::sensors::camera::CameraSpec;

/// Validation failure, qualified by the path of the offending key.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    #[serde(default)]
    position: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation: Option<[f64; 4]>,
    #[serde(default, skip_serializing)]
    rpy: Option<[f64; 3]>,
}

pub(crate) fn de_pose<'de, D: Deserializer<'de>>(d: D) -> Result<Pose, D::Error> {
    let repr = PoseRepr::deserialize(d)?;
    let rotation = match (repr.orientation, repr.rpy) {
        (Some(_), Some(_)) => return Err(serde::de::Error::custom("give either `orientation` or `rpy`, not both")),
        (Some([w, x, y, z]), None) => {
            let q = Quat::from_wxyz(w, x, y, z);
            if q.norm() < 1e-9 {
                return Err(serde::de::Error::custom("orientation quaternion is zero"));
            }
            q.normalized()
        }
        (None, Some([r, p, y])) => Quat::from_rpy(r, p, y),
        (None, None) => Quat::IDENTITY,
    };
    Ok(Pose::new(repr.position, rotation))
}

pub(crate) fn ser_pose<S: Serializer>(p: &Pose, s: S) -> Result<S::Ok, S::Error> {
    let q = p.rotation;
    PoseRepr {
        position: p.translation,
        orientation: Some([q.w, q.x, q.y, q.z]),
        rpy: None,
    }
    .serialize(s)
}

fn default_gravity() -> Vec3 {
    Vec3::new(0.0, 0.0, -9.81)
}

fn default_timestep() -> f64 {
    1.0 / 240.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FtSensorEntry {
    pub joint: String,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub name: String,
    /// Path to the URDF file, relative to the scene file.
    pub urdf: String,
    #[serde(default, deserialize_with = "de_pose", serialize_with = "ser_pose")]
    pub base_pose: Pose,
    #[serde(default)]
    pub initial_q: Option<Vec<f64>>,
    #[serde(default)]
    pub is_visual_robot: bool,
    #[serde(default)]
    pub ft_sensors: Vec<FtSensorEntry>,
    /// Position-control velocity caps; defaults to the URDF limits.
    #[serde(default)]
    pub max_joint_velocity: Option<Vec<f64>>,
    /// Link used for end-effector moves; defaults to the first leaf link.
    #[serde(default)]
    pub end_effector: Option<String>,
    #[serde(default)]
    pub material: Option<MaterialParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Visual,
    Collision,
    Dynamic,
}

impl ObjectKind {
    pub fn list_key(self) -> &'static str {
        match self {
            ObjectKind::Visual => "visual_objects",
            ObjectKind::Collision => "collision_objects",
            ObjectKind::Dynamic => "dynamic_objects",
        }
    }
}

/// Where a visual object's pose comes from: `fixed` or `{topic: NAME}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(try_from = "PoseSourceRepr", into = "PoseSourceRepr")]
pub enum PoseSource {
    #[default]
    Fixed,
    Topic(String),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PoseSourceRepr {
    Word(String),
    Topic { topic: String },
}

impl TryFrom<PoseSourceRepr> for PoseSource {
    type Error = String;

    fn try_from(r: PoseSourceRepr) -> Result<Self, String> {
        match r {
            PoseSourceRepr::Word(w) if w == "fixed" => Ok(PoseSource::Fixed),
            PoseSourceRepr::Word(w) => Err(format!("unknown pose source `{w}`")),
            PoseSourceRepr::Topic { topic } => Ok(PoseSource::Topic(topic)),
        }
    }
}

impl From<PoseSource> for PoseSourceRepr {
    fn from(p: PoseSource) -> Self {
        match p {
            PoseSource::Fixed => PoseSourceRepr::Word("fixed".into()),
            PoseSource::Topic(topic) => PoseSourceRepr::Topic { topic },
        }
    }
}

/// One entry of `visual_objects`, `collision_objects` or `dynamic_objects`,
/// or the request body of the add-object service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub name: String,
    /// Implied by the list an entry appears in; required by the add service.
    #[serde(default)]
    pub kind: Option<ObjectKind>,
    pub shape: Shape,
    #[serde(default, deserialize_with = "de_pose", serialize_with = "ser_pose")]
    pub pose: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twist: Option<Twist>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_source: Option<PoseSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[u8; 3]>,
}

impl ObjectSpec {
    pub fn kind(&self) -> ObjectKind {
        self.kind.unwrap_or(ObjectKind::Collision)
    }

    pub fn material_or_default(&self) -> MaterialParams {
        self.material.unwrap_or_default()
    }

    /// Checks the taxonomy rules; `path` prefixes error locations.
    pub fn validate(&self, path: &str) -> Result<(), ConfigError> {
        let kind = self.kind();
        let at = |field: &str| format!("{path}.{field}");
        if self.name.trim().is_empty() {
            return Err(ConfigError::new(at("name"), "name must not be empty"));
        }
        self.shape.validate().map_err(|m| ConfigError::new(at("shape"), m))?;
        if let Some(m) = self.material {
            m.validate().map_err(|msg| ConfigError::new(at("material"), msg))?;
        }
        match kind {
            ObjectKind::Dynamic => {
                match self.mass {
                    None => return Err(ConfigError::new(at("mass"), "dynamic objects need a mass")),
                    Some(m) if !(m > 0.0 && m.is_finite()) => {
                        return Err(ConfigError::new(at("mass"), format!("mass must be positive, got {m}")))
                    }
                    _ => {}
                }
                if matches!(self.shape, Shape::Plane { .. }) {
                    return Err(ConfigError::new(
                        at("shape"),
                        "planes cannot be dynamic (unsupported contact pair)",
                    ));
                }
                if self.pose_source.is_some() {
                    return Err(ConfigError::new(at("pose_source"), "only visual objects follow topics"));
                }
            }
            ObjectKind::Collision => {
                if self.mass.is_some() {
                    return Err(ConfigError::new(
                        at("mass"),
                        "collision objects are static and take no mass",
                    ));
                }
                if self.twist.is_some() {
                    return Err(ConfigError::new(at("twist"), "collision objects do not move"));
                }
                if self.pose_source.is_some() {
                    return Err(ConfigError::new(at("pose_source"), "only visual objects follow topics"));
                }
            }
            ObjectKind::Visual => {
                for (field, present) in [
                    ("mass", self.mass.is_some()),
                    ("material", self.material.is_some()),
                    ("twist", self.twist.is_some()),
                ] {
                    if present {
                        return Err(ConfigError::new(
                            at(field),
                            "visual objects carry no physical properties",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Extra articulated or single-body model loaded straight from a URDF file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UrdfEntry {
    pub name: String,
    pub path: String,
    #[serde(default, deserialize_with = "de_pose", serialize_with = "ser_pose")]
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsParams {
    pub solver_iterations: usize,
    pub baumgarte: f64,
    pub slop: f64,
    pub restitution_threshold: f64,
    /// Stiffness (N/m) of robot contacts against immovable bodies.
    pub robot_contact_stiffness: f64,
    /// Publish state every this many steps.
    pub publish_every: u64,
    pub warm_start: bool,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            solver_iterations: 10,
            baumgarte: 0.2,
            slop: 1e-3,
            restitution_threshold: 0.1,
            robot_contact_stiffness: 2.0e4,
            publish_every: 1,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub visual_objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub collision_objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub dynamic_objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub urdfs: Vec<UrdfEntry>,
    #[serde(default)]
    pub camera: Option<CameraSpec>,
    #[serde(default = "default_gravity")]
    pub gravity: Vec3,
    #[serde(default = "default_timestep")]
    pub timestep_s: f64,
    #[serde(default = "default_true")]
    pub use_sim_time: bool,
    #[serde(default)]
    pub physics: PhysicsParams,
    #[serde(default, skip_serializing)]
    soft_objects: Option<serde_yaml::Value>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            robots: Vec::new(),
            visual_objects: Vec::new(),
            collision_objects: Vec::new(),
            dynamic_objects: Vec::new(),
            urdfs: Vec::new(),
            camera: None,
            gravity: default_gravity(),
            timestep_s: default_timestep(),
            use_sim_time: true,
            physics: PhysicsParams::default(),
            soft_objects: None,
        }
    }
}

impl SceneConfig {
    /// Every object spec with its kind filled in, in list order.
    pub fn objects(&self) -> impl Iterator<Item = ObjectSpec> + '_ {
        let tag = |kind: ObjectKind| {
            move |o: &ObjectSpec| {
                let mut o = o.clone();
                o.kind = Some(kind);
                o
            }
        };
        self.visual_objects
            .iter()
            .map(tag(ObjectKind::Visual))
            .chain(self.collision_objects.iter().map(tag(ObjectKind::Collision)))
            .chain(self.dynamic_objects.iter().map(tag(ObjectKind::Dynamic)))
    }

    pub fn validate(&mut self) -> Result<(), ConfigError> {
        if self.soft_objects.is_some() {
            return Err(ConfigError::new(
                "soft_objects",
                "unsupported: soft objects are not simulated",
            ));
        }
        if !(self.timestep_s > 0.0 && self.timestep_s.is_finite()) {
            return Err(ConfigError::new("timestep_s", "timestep must be positive"));
        }
        if !self.gravity.is_finite() {
            return Err(ConfigError::new("gravity", "gravity must be finite"));
        }
        if self.physics.solver_iterations == 0 || self.physics.publish_every == 0 {
            return Err(ConfigError::new("physics", "iteration counts must be positive"));
        }
        let mut names = HashSet::new();
        let mut claim = |name: &str, path: String| -> Result<(), ConfigError> {
            if names.insert(name.to_string()) {
                Ok(())
            } else {
                Err(ConfigError::new(path, format!("duplicate name `{name}`")))
            }
        };
        for (i, r) in self.robots.iter().enumerate() {
            let path = format!("robots[{i}]");
            claim(&r.name, format!("{path}.name"))?;
            for (k, s) in r.ft_sensors.iter().enumerate() {
                if !(s.rate > 0.0) {
                    return Err(ConfigError::new(
                        format!("{path}.ft_sensors[{k}].rate"),
                        "rate must be positive",
                    ));
                }
            }
        }
        for kind in [ObjectKind::Visual, ObjectKind::Collision, ObjectKind::Dynamic] {
            let list = match kind {
                ObjectKind::Visual => &mut self.visual_objects,
                ObjectKind::Collision => &mut self.collision_objects,
                ObjectKind::Dynamic => &mut self.dynamic_objects,
            };
            for (i, o) in list.iter_mut().enumerate() {
                let path = format!("{}[{i}]", kind.list_key());
                if let Some(k) = o.kind {
                    if k != kind {
                        return Err(ConfigError::new(
                            format!("{path}.kind"),
                            format!("`{k:?}` entry listed under {}", kind.list_key()),
                        ));
                    }
                }
                o.kind = Some(kind);
                o.validate(&path)?;
                claim(&o.name, format!("{path}.name"))?;
            }
        }
        for (i, u) in self.urdfs.iter().enumerate() {
            claim(&u.name, format!("urdfs[{i}].name"))?;
        }
        if let Some(cam) = &self.camera {
            cam.validate().map_err(|m| ConfigError::new("camera", m))?;
        }
        Ok(())
    }
}

/// Parses and validates a scene document.
pub fn parse_scene_config(text: &str) -> Result<SceneConfig, ConfigError> {
    let de = serde_yaml::Deserializer::from_str(text);
    let mut cfg: SceneConfig = match serde_path_to_error::deserialize(de) {
        Ok(c) => c,
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            // an empty document means an empty world
            if text.trim().is_empty() || text.trim() == "---" {
                SceneConfig::default()
            } else {
                return Err(ConfigError::new(path, inner));
            }
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
