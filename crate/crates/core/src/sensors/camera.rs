//! Pinhole RGB-D camera: intrinsics, CPU ray casting and back-projection.
//!
//! Camera frame: +Z along the optical axis, +X right, +Y down.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SensorError;
use crate::bus::msg::{CameraInfoMsg, ImageMsg, PointCloudMsg};
use crate::dynamics::SimWorld;
use crate::math::{Pose, Quat, Vec3};
use crate::scene::config::{de_pose, ser_pose};
use crate::scene::Shape;

/// Link a camera rides on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraMount {
    pub robot: String,
    pub link: String,
}

fn default_rate() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub width: u32,
    pub height: u32,
    /// Vertical field of view in radians.
    pub fov: f64,
    pub near: f64,
    pub far: f64,
    /// Camera frame in the world, or in the mount link frame when attached.
    #[serde(deserialize_with = "de_pose", serialize_with = "ser_pose")]
    pub pose: Pose,
    #[serde(default)]
    pub attach: Option<CameraMount>,
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default)]
    pub emit_pointcloud: bool,
}

impl CameraSpec {
    pub fn new(width: u32, height: u32, fov: f64, pose: Pose) -> Self {
        Self {
            width,
            height,
            fov,
            near: 0.01,
            far: 10.0,
            pose,
            attach: None,
            rate: default_rate(),
            emit_pointcloud: false,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("image size must be positive".into());
        }
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(format!("fov {} must lie in (0, π)", self.fov));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(format!("need 0 < near < far, got near {} far {}", self.near, self.far));
        }
        if !(self.rate > 0.0) {
            return Err("rate must be positive".into());
        }
        Ok(())
    }

    /// World pose of the camera frame, following its mount link if attached.
    pub fn world_pose(&self, world: &SimWorld) -> Result<Pose, SensorError> {
        match &self.attach {
            None => Ok(self.pose),
            Some(m) => {
                let r = world
                    .robot(&m.robot)
                    .ok_or_else(|| SensorError::UnknownRobot(m.robot.clone()))?;
                let l = r
                    .model
                    .link_index(&m.link)
                    .ok_or_else(|| SensorError::UnknownLink(m.link.clone()))?;
                Ok(r.link_poses[l].compose(&self.pose))
            }
        }
    }
}

/// Camera pose at `eye` looking at `target`, with image-up towards `up`.
pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Pose {
    let z = (target - eye).normalize();
    let x = z.cross(up).try_normalize().unwrap_or_else(|| z.orthonormal_basis().0);
    let y = z.cross(x);
    let m = [[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]];
    Pose::new(eye, Quat::from_matrix(&m))
}

pub fn camera_intrinsics(spec: &CameraSpec) -> CameraInfoMsg {
    let fy = spec.height as f64 / (2.0 * (spec.fov / 2.0).tan());
    CameraInfoMsg {
        width: spec.width,
        height: spec.height,
        fx: fy,
        fy,
        cx: spec.width as f64 / 2.0,
        cy: spec.height as f64 / 2.0,
    }
}

/// Pixel coordinates and z-depth of a camera-frame point.
pub fn project(p: Vec3, info: &CameraInfoMsg) -> Option<(f64, f64, f64)> {
    (p.z > 0.0).then(|| (info.fx * p.x / p.z + info.cx, info.fy * p.y / p.z + info.cy, p.z))
}

#[derive(Debug, Clone, Copy)]
struct Item {
    shape: Shape,
    pose: Pose,
    color: [u8; 3],
    // bounding sphere for early rejection; infinite for planes
    center: Vec3,
    radius: f64,
}

/// Everything visible to a camera: physical bodies, robot links of real and
/// visual robots, and visual objects.
fn gather(world: &SimWorld) -> Vec<Item> {
    let mut items = Vec::new();
    let mut push = |shape: Shape, pose: Pose, color: [u8; 3]| {
        let (center, radius) = match shape {
            Shape::Plane { .. } => (Vec3::ZERO, f64::INFINITY),
            _ => {
                let bb = shape.aabb(&pose);
                ((bb.min + bb.max) * 0.5, (bb.max - bb.min).norm() * 0.5)
            }
        };
        items.push(Item {
            shape,
            pose,
            color,
            center,
            radius,
        });
    };
    for b in world.bodies() {
        push(b.shape, b.state.pose, b.color);
    }
    for r in world.robots() {
        for (l, link) in r.model.links.iter().enumerate() {
            for g in 0..link.collisions.len() {
                push(link.collisions[g].shape, r.geom_pose(l, g), r.color);
            }
        }
    }
    for v in world.visuals() {
        push(v.shape, v.pose, v.color);
    }
    items
}

fn cast(items: &[Item], origin: Vec3, dir: Vec3) -> Option<(f64, Vec3, [u8; 3])> {
    let mut best: Option<(f64, Vec3, [u8; 3])> = None;
    for it in items {
        if it.radius.is_finite() {
            let oc = it.center - origin;
            let along = oc.dot(dir);
            if oc.norm_squared() - along * along > it.radius * it.radius {
                continue;
            }
        }
        if let Some((t, n)) = it.shape.raycast(&it.pose, origin, dir) {
            if best.is_none_or(|(bt, _, _)| t < bt) {
                best = Some((t, n, it.color));
            }
        }
    }
    best
}

/// Renders colour and z-depth images. Depth beyond `far` (or nearer than
/// `near`) and empty pixels read 0.
pub fn render_rgbd(world: &SimWorld, spec: &CameraSpec) -> Result<(ImageMsg, ImageMsg), SensorError> {
    spec.validate().map_err(SensorError::BadSpec)?;
    let cam = spec.world_pose(world)?;
    let info = camera_intrinsics(spec);
    let items = gather(world);
    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut rgb = vec![0u8; w * h * 3];
    let mut depth = vec![0f32; w * h];
    rgb.par_chunks_mut(w * 3)
        .zip(depth.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (rgb_row, depth_row))| {
            for u in 0..w {
                let local = Vec3::new((u as f64 - info.cx) / info.fx, (v as f64 - info.cy) / info.fy, 1.0);
                let scale = local.norm();
                let dir = cam.rotation.rotate(local / scale);
                let Some((t, n, color)) = cast(&items, cam.translation, dir) else {
                    continue;
                };
                let z = t / scale;
                if z < spec.near || z > spec.far {
                    continue;
                }
                depth_row[u] = z as f32;
                // headlight Lambert shading
                let shade = 0.25 + 0.75 * n.dot(dir).abs();
                for k in 0..3 {
                    rgb_row[3 * u + k] = (color[k] as f64 * shade).round().min(255.0) as u8;
                }
            }
        });
    Ok((
        ImageMsg::rgb8(spec.width, spec.height, rgb),
        ImageMsg::depth(spec.width, spec.height, depth),
    ))
}

/// Camera-frame point cloud from a depth image, with colours when given.
pub fn back_project(
    depth: &ImageMsg,
    color: Option<&ImageMsg>,
    info: &CameraInfoMsg,
) -> Result<PointCloudMsg, SensorError> {
    let d = depth
        .depth_data()
        .ok_or_else(|| SensorError::BadImage("depth image must be depth32f".into()))?;
    if depth.width != info.width || depth.height != info.height {
        return Err(SensorError::DimensionMismatch(format!(
            "depth {}x{} vs camera {}x{}",
            depth.width, depth.height, info.width, info.height
        )));
    }
    depth.validate().map_err(SensorError::BadImage)?;
    let rgb = match color {
        Some(c) => {
            if c.width != depth.width || c.height != depth.height {
                return Err(SensorError::DimensionMismatch(format!(
                    "color {}x{} vs depth {}x{}",
                    c.width, c.height, depth.width, depth.height
                )));
            }
            c.validate().map_err(SensorError::BadImage)?;
            Some(
                c.rgb_data()
                    .ok_or_else(|| SensorError::BadImage("color image must be rgb8".into()))?,
            )
        }
        None => None,
    };
    let w = depth.width as usize;
    let mut points = Vec::new();
    let mut colors = rgb.map(|_| Vec::new());
    for (i, &z) in d.iter().enumerate() {
        if z <= 0.0 {
            continue;
        }
        let z = z as f64;
        let (u, v) = ((i % w) as f64, (i / w) as f64);
        points.push(Vec3::new((u - info.cx) * z / info.fx, (v - info.cy) * z / info.fy, z));
        if let (Some(cols), Some(rgb)) = (colors.as_mut(), rgb) {
            cols.push([rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]]);
        }
    }
    Ok(PointCloudMsg { points, colors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ObjectKind, ObjectSpec, PhysicsParams};
    use std::f64::consts::FRAC_PI_2;

    fn spec(w: u32, h: u32) -> CameraSpec {
        // at the origin looking down -z of the world
        CameraSpec::new(w, h, FRAC_PI_2, look_at(Vec3::ZERO, -Vec3::Z, Vec3::Y))
    }

    fn object(name: &str, shape: Shape, pose: Pose) -> ObjectSpec {
        ObjectSpec {
            name: name.into(),
            kind: Some(ObjectKind::Collision),
            shape,
            pose,
            mass: None,
            material: None,
            twist: None,
            pose_source: None,
            color: None,
        }
    }

    fn empty() -> SimWorld {
        SimWorld::new(Vec3::ZERO, 1.0 / 240.0, PhysicsParams::default())
    }

    #[test]
    fn intrinsics_formula() {
        let i = camera_intrinsics(&spec(640, 480));
        assert!((i.fy - 240.0).abs() < 1e-9);
        assert_eq!((i.fx, i.cx, i.cy), (i.fy, 320.0, 240.0));
        assert!((camera_intrinsics(&spec(2, 2)).fy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corner_pixel_lies_on_frustum_edge() {
        let s = spec(640, 480);
        let i = camera_intrinsics(&s);
        // top image edge at v = 0 subtends half the vertical fov
        let y = (0.0 - i.cy) / i.fy;
        assert!((y.abs() - (s.fov / 2.0).tan()).abs() < 1e-12);
    }

    #[test]
    fn empty_scene_is_all_sentinel() {
        let (_, d) = render_rgbd(&empty(), &spec(8, 6)).unwrap();
        assert!(d.depth_data().unwrap().iter().all(|&z| z == 0.0));
        let cloud = back_project(&d, None, &camera_intrinsics(&spec(8, 6))).unwrap();
        assert!(cloud.points.is_empty());
    }

    #[test]
    fn plane_at_one_metre() {
        let mut w = empty();
        w.add_object(object(
            "floor",
            Shape::Plane {
                normal: Vec3::Z,
                offset: -1.0,
            },
            Pose::IDENTITY,
        ))
        .unwrap();
        let s = spec(64, 48);
        let (rgb, d) = render_rgbd(&w, &s).unwrap();
        let depth = d.depth_data().unwrap();
        assert!((depth[24 * 64 + 32] as f64 - 1.0).abs() < 1e-6);
        let info = camera_intrinsics(&s);
        let cloud = back_project(&d, Some(&rgb), &info).unwrap();
        assert_eq!(cloud.points.len(), 64 * 48);
        for p in &cloud.points {
            assert!((p.z - 1.0).abs() < 1e-6);
        }
        // projecting the cloud lands back on the pixel grid
        for (i, p) in cloud.points.iter().enumerate() {
            let (u, v, z) = project(*p, &info).unwrap();
            assert!((u - (i % 64) as f64).abs() < 0.5 && (v - (i / 64) as f64).abs() < 0.5);
            assert!((z - depth[i] as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn sphere_silhouette() {
        let mut w = empty();
        w.add_object(object(
            "ball",
            Shape::Sphere { radius: 0.5 },
            Pose::from_translation(Vec3::new(0.0, 0.0, -2.0)),
        ))
        .unwrap();
        let s = spec(201, 201);
        let info = camera_intrinsics(&s);
        let (_, d) = render_rgbd(&w, &s).unwrap();
        let depth = d.depth_data().unwrap();
        let (cu, cv) = (100usize, 100usize);
        assert!((depth[cv * 201 + cu] as f64 - 1.5).abs() < 1e-3);
        // tangent-cone radius: fx · r / sqrt(d² − r²)
        let expected = info.fx * 0.5 / (4.0f64 - 0.25).sqrt();
        let mut edge = 0;
        while cu + edge + 1 < 201 && depth[cv * 201 + cu + edge + 1] > 0.0 {
            edge += 1;
        }
        let measured = (cu + edge) as f64 - info.cx;
        assert!((measured - expected).abs() <= 1.0, "{measured} vs {expected}");
    }

    #[test]
    fn back_projection_dimension_check() {
        let d = ImageMsg::depth(2, 2, vec![1.0; 4]);
        let info = camera_intrinsics(&spec(4, 4));
        assert!(matches!(
            back_project(&d, None, &info),
            Err(SensorError::DimensionMismatch(_))
        ));
        let center = ImageMsg::depth(2, 2, vec![0.0, 0.0, 0.0, 1.0]);
        let cloud = back_project(&center, None, &camera_intrinsics(&spec(2, 2))).unwrap();
        assert_eq!(cloud.points, vec![Vec3::new(0.0, 0.0, 1.0)]);
    }
}
