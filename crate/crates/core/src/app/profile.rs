//! Launch profiles: which scene to load, which nodes to run and how their
//! topics are routed.
//!
//! ```yaml
//! scene: pushing_scene.yaml
//! real_robot: false
//! ports: {ws: 9871, tcp: null, http: 8000}
//! real_robot_remap:
//!   rpbi/arm/commanded_joint_state: hw/arm/command
//! nodes:
//!   - kind: safe_robot
//!     config: {robot: arm}
//!   - kind: remap
//!     name: arm_driver
//!     remap: {hw/arm/command: hw/arm/command_raw}
//!     config: {kind: to_float_array, input: hw/arm/command, output: hw/arm/q, order: [j1, j2]}
//! ```

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("port {0} is assigned more than once")]
    PortConflict(u16),
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ProfileError {
    ProfileError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

/// Listening ports; `null` disables a server, `0` picks a free port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ports {
    pub ws: Option<u16>,
    pub tcp: Option<u16>,
    pub http: Option<u16>,
}

impl Default for Ports {
    fn default() -> Self {
        Self {
            ws: Some(crate::bus::DEFAULT_WS_PORT),
            tcp: None,
            http: Some(8000),
        }
    }
}

impl Ports {
    pub fn none() -> Self {
        Self {
            ws: None,
            tcp: None,
            http: None,
        }
    }

    /// Fixed ports must differ; `0` (ephemeral) may repeat.
    pub fn validate(&self) -> Result<(), ProfileError> {
        let mut seen = BTreeSet::new();
        for p in [self.ws, self.tcp, self.http].into_iter().flatten().filter(|&p| p != 0) {
            if !seen.insert(p) {
                return Err(ProfileError::PortConflict(p));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    /// [`OperatorNode`](crate::teleop::OperatorNode); config is an `OperatorConfig`.
    Operator,
    /// [`CartesianTeleop`](crate::teleop::CartesianTeleop); config is a `CartesianTeleopConfig`.
    CartesianTeleop,
    /// [`SafeRobot`](crate::safety::SafeRobot); config is a `SafetyConfig`.
    SafeRobot,
    /// [`RemapNode`](crate::utils::RemapNode); config is a `RemapConfig`.
    Remap,
    /// MPC stepping harness; config is an [`MpcNodeConfig`](super::system::MpcNodeConfig).
    Mpc,
    /// Bag recorder; config is a [`RecorderConfig`](super::system::RecorderConfig).
    Recorder,
}

impl NodeKind {
    pub fn default_name(self) -> &'static str {
        match self {
            NodeKind::Operator => "operator_node",
            NodeKind::CartesianTeleop => "cartesian_teleop",
            NodeKind::SafeRobot => "safe_robot",
            NodeKind::Remap => "remap",
            NodeKind::Mpc => "mpc",
            NodeKind::Recorder => "recorder",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub kind: NodeKind,
    #[serde(default)]
    pub name: Option<String>,
    /// Topic and service renames applied at this node's boundary.
    #[serde(default)]
    pub remap: HashMap<String, String>,
    #[serde(default)]
    pub config: serde_yaml::Value,
}

impl NodeSpec {
    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.default_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaunchProfile {
    /// Scene file, relative to the profile.
    pub scene: String,
    /// Route commands to hardware topics through `real_robot_remap`.
    #[serde(default)]
    pub real_robot: bool,
    /// Renames applied to every non-simulator node when `real_robot` is set.
    #[serde(default)]
    pub real_robot_remap: HashMap<String, String>,
    #[serde(default)]
    pub ports: Ports,
    /// Topics the TCP bridge exports to peers.
    #[serde(default)]
    pub tcp_export: Vec<String>,
    /// Directory of the built operator console, relative to the profile.
    #[serde(default)]
    pub console_dir: Option<String>,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl LaunchProfile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProfileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ProfileError> {
        let de = serde_yaml::Deserializer::from_str(text);
        let mut p: LaunchProfile = serde_path_to_error::deserialize(de)
            .map_err(|e| invalid(e.path().to_string(), e.into_inner().to_string()))?;
        p.base_dir = base_dir.into();
        p.validate()?;
        Ok(p)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn scene_path(&self) -> PathBuf {
        self.resolve(&self.scene)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        self.ports.validate()?;
        if !self.scene_path().is_file() {
            return Err(invalid(
                "scene",
                format!("no such file: {}", self.scene_path().display()),
            ));
        }
        if let Some(dir) = &self.console_dir {
            if !self.resolve(dir).is_dir() {
                return Err(invalid("console_dir", format!("no such directory: {dir}")));
            }
        }
        let mut names = BTreeSet::from(["sim".to_string()]);
        for (i, n) in self.nodes.iter().enumerate() {
            if !names.insert(n.name().to_string()) {
                return Err(invalid(
                    format!("nodes[{i}].name"),
                    format!("duplicate node name `{}`", n.name()),
                ));
            }
        }
        Ok(())
    }

    /// Remap table of a non-simulator node: its own entries win over the
    /// `real_robot` table.
    pub fn node_remap(&self, spec: &NodeSpec, real_robot: bool) -> HashMap<String, String> {
        let mut m = if real_robot {
            self.real_robot_remap.clone()
        } else {
            HashMap::new()
        };
        m.extend(spec.remap.iter().map(|(k, v)| (k.clone(), v.clone())));
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::assets_dir;

    #[test]
    fn minimal_profile() {
        let p = LaunchProfile::parse("scene: empty_scene.yaml", assets_dir()).unwrap();
        assert_eq!(p.ports, Ports::default());
        assert!(p.nodes.is_empty());
    }

    #[test]
    fn port_conflict_names_the_port() {
        let e =
            LaunchProfile::parse("{scene: empty_scene.yaml, ports: {ws: 9000, http: 9000}}", assets_dir()).unwrap_err();
        assert!(matches!(e, ProfileError::PortConflict(9000)));
        assert!(e.to_string().contains("9000"));
        LaunchProfile::parse(
            "{scene: empty_scene.yaml, ports: {ws: 0, tcp: 0, http: 0}}",
            assets_dir(),
        )
        .unwrap();
    }

    #[test]
    fn bad_references() {
        let e = LaunchProfile::parse("scene: nope.yaml", assets_dir()).unwrap_err();
        assert!(e.to_string().contains("nope.yaml"));
        let e = LaunchProfile::parse("{scene: empty_scene.yaml, nodes: [{kind: teleport}]}", assets_dir()).unwrap_err();
        assert!(e.to_string().starts_with("nodes[0].kind"), "{e}");
        let e = LaunchProfile::parse(
            "{scene: empty_scene.yaml, nodes: [{kind: mpc}, {kind: mpc}]}",
            assets_dir(),
        )
        .unwrap_err();
        assert!(e.to_string().contains("duplicate node name `mpc`"));
    }

    #[test]
    fn node_remap_precedence() {
        let p = LaunchProfile::parse(
            "{scene: empty_scene.yaml, real_robot_remap: {a: hw_a, b: hw_b}, nodes: [{kind: mpc, remap: {b: mine}}]}",
            assets_dir(),
        )
        .unwrap();
        let sim_side = p.node_remap(&p.nodes[0], false);
        assert_eq!(sim_side, HashMap::from([("b".to_string(), "mine".to_string())]));
        let real = p.node_remap(&p.nodes[0], true);
        assert_eq!(real["a"], "hw_a");
        assert_eq!(real["b"], "mine");
    }
}
