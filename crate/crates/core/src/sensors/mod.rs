//! Simulated sensors: joint force-torque and RGB-D camera.

pub mod camera;
pub mod ft;

use thiserror::Error;

pub use camera::{back_project, camera_intrinsics, look_at, project, render_rgbd, CameraMount, CameraSpec};
pub use ft::ft_read;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("no robot named `{0}`")]
    UnknownRobot(String),
    #[error("no joint named `{0}`")]
    UnknownJoint(String),
    #[error("no link named `{0}`")]
    UnknownLink(String),
    #[error("invalid camera: {0}")]
    BadSpec(String),
    #[error("invalid image: {0}")]
    BadImage(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}
