//! The assembled application: simulator node, camera, launch profiles and
//! the servers that expose the bus.

pub mod camera;
pub mod demos;
pub mod http;
pub mod profile;
pub mod sim;
pub mod system;

pub use camera::CameraNode;
pub use http::StaticServer;
pub use profile::{LaunchProfile, NodeKind, NodeSpec, Ports, ProfileError};
pub use sim::{SharedWorld, SimNode};
pub use system::{LaunchError, LaunchOptions, MpcNodeConfig, Pacing, RecorderConfig, RunError, RunStats, System};
