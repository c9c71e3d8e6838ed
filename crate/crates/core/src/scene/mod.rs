//! World description: YAML scene files, URDF-lite robot models and the
//! object taxonomy (visual, collision, dynamic).

pub mod config;
pub mod model;
pub mod shape;
pub mod urdf;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

pub use config::{
    parse_scene_config, ConfigError, FtSensorEntry, ObjectKind, ObjectSpec, PhysicsParams, PoseSource, RobotSpec,
    SceneConfig, UrdfEntry,
};
pub use model::{CollisionGeom, Joint, JointLimits, JointType, Link, LinkSphere, RobotModel};
pub use shape::{Aabb, Shape};
pub use urdf::{parse_urdf, to_urdf, UrdfError};

/// Name of the fixed world frame every pose is expressed in.
pub const WORLD_FRAME: &str = "rpbi/world";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Urdf { path: String, source: UrdfError },
}

/// A scene file together with the directory its relative paths resolve from.
#[derive(Debug, Clone)]
pub struct SceneFile {
    pub config: SceneConfig,
    pub base_dir: PathBuf,
}

impl SceneFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config = parse_scene_config(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    pub fn from_config(config: SceneConfig, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            config,
            base_dir: base_dir.into(),
        }
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_urdf(&self, rel: &str) -> Result<Arc<RobotModel>, SceneError> {
        let path = self.resolve(rel);
        let text = std::fs::read_to_string(&path).map_err(|source| SceneError::Io {
            path: path.clone(),
            source,
        })?;
        parse_urdf(&text).map(Arc::new).map_err(|source| SceneError::Urdf {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Directory holding the bundled URDF fixtures and scene files.
pub fn assets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;

    fn fixture(name: &str) -> RobotModel {
        parse_urdf(&std::fs::read_to_string(assets_dir().join(name)).unwrap()).unwrap()
    }

    #[test]
    fn two_link_fixture() {
        let m = fixture("two_link_arm.urdf");
        assert_eq!(m.ndof(), 2);
        assert_eq!(m.joint_names(), vec!["q1", "q2"]);
        for &j in &m.actuated {
            assert_eq!(m.joints[j].axis, Vec3::Z);
        }
        assert_eq!(m.links[m.default_end_effector()].name, "tool");
    }

    #[test]
    fn fixtures_round_trip() {
        for name in ["two_link_arm.urdf", "six_dof_arm.urdf"] {
            let m = fixture(name);
            let again = parse_urdf(&to_urdf(&m)).unwrap();
            assert_eq!(again.joint_names(), m.joint_names());
            assert_eq!(again.link_names(), m.link_names());
            for (a, b) in m.joints.iter().zip(&again.joints) {
                assert_eq!(a.kind, b.kind);
                assert_eq!(a.limits, b.limits);
                assert!((a.origin.translation - b.origin.translation).norm() < 1e-12);
                assert!(a.origin.rotation.angle_to(b.origin.rotation) < 1e-9);
                assert!((a.axis - b.axis).norm() < 1e-12);
            }
            for (a, b) in m.links.iter().zip(&again.links) {
                assert_eq!(a.spheres, b.spheres);
                assert_eq!(a.collisions.len(), b.collisions.len());
                assert_eq!(a.mass, b.mass);
            }
        }
    }
}
