//! RGB-D camera node.

use super::sim::{lock, SharedWorld};
use crate::bus::{NodeHandle, Payload};
use crate::sensors::{back_project, camera_intrinsics, render_rgbd, CameraSpec};
use crate::utils::exec::{Node, NodeError, RateTimer};

pub const RGB_TOPIC: &str = "rpbi/camera/rgb";
pub const DEPTH_TOPIC: &str = "rpbi/camera/depth";
pub const INFO_TOPIC: &str = "rpbi/camera/camera_info";
pub const POINTS_TOPIC: &str = "rpbi/camera/points";

/// Renders the world at `spec.rate` (sim time) and publishes colour, depth,
/// intrinsics and optionally a camera-frame point cloud.
pub struct CameraNode {
    node: NodeHandle,
    world: SharedWorld,
    spec: CameraSpec,
    timer: RateTimer,
    frames: u64,
}

impl CameraNode {
    pub fn new(node: NodeHandle, world: SharedWorld, spec: CameraSpec) -> Result<Self, NodeError> {
        spec.validate().map_err(NodeError::Failed)?;
        Ok(Self {
            timer: RateTimer::from_hz(spec.rate),
            node,
            world,
            spec,
            frames: 0,
        })
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }
}

impl Node for CameraNode {
    fn name(&self) -> &str {
        self.node.name()
    }

    fn poll(&mut self, now_ns: u64) -> Result<(), NodeError> {
        if !self.timer.due(now_ns) {
            return Ok(());
        }
        // render from a snapshot so the simulator is not blocked meanwhile
        let snapshot = lock(&self.world).clone();
        let t = snapshot.sim_time_ns();
        let (rgb, depth) = render_rgbd(&snapshot, &self.spec).map_err(|e| NodeError::Failed(e.to_string()))?;
        let info = camera_intrinsics(&self.spec);
        if self.spec.emit_pointcloud {
            let cloud = back_project(&depth, Some(&rgb), &info).map_err(|e| NodeError::Failed(e.to_string()))?;
            self.node.send(POINTS_TOPIC, t, Payload::PointCloud(cloud))?;
        }
        self.node.send(INFO_TOPIC, t, Payload::CameraInfo(info))?;
        self.node.send(RGB_TOPIC, t, Payload::Image(rgb))?;
        self.node.send(DEPTH_TOPIC, t, Payload::Image(depth))?;
        self.frames += 1;
        Ok(())
    }
}
