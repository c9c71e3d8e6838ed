use serde::{Deserialize, Serialize};

use crate::math::{Pose, Vec3};

/// Collision and render primitive, expressed in its owner's local frame.
///
/// Capsules are aligned with the local Z axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Half-space boundary `normal · x = offset`; solid below.
    Plane {
        normal: Vec3,
        offset: f64,
    },
    Sphere {
        radius: f64,
    },
    Box {
        half_extents: Vec3,
    },
    Capsule {
        radius: f64,
        half_length: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn overlaps(&self, o: &Aabb, margin: f64) -> bool {
        self.min.x <= o.max.x + margin
            && o.min.x <= self.max.x + margin
            && self.min.y <= o.max.y + margin
            && o.min.y <= self.max.y + margin
            && self.min.z <= o.max.z + margin
            && o.min.z <= self.max.z + margin
    }
}

impl Shape {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Shape::Plane { .. } => "plane",
            Shape::Sphere { .. } => "sphere",
            Shape::Box { .. } => "box",
            Shape::Capsule { .. } => "capsule",
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{what} must be positive, got {v}"))
            }
        };
        match *self {
            Shape::Plane { normal, offset } => {
                if normal.try_normalize().is_none() || !offset.is_finite() {
                    Err("plane normal must be nonzero and finite".into())
                } else {
                    Ok(())
                }
            }
            Shape::Sphere { radius } => positive(radius, "radius"),
            Shape::Box { half_extents: h } => {
                positive(h.x, "half_extents.x")?;
                positive(h.y, "half_extents.y")?;
                positive(h.z, "half_extents.z")
            }
            Shape::Capsule { radius, half_length } => {
                positive(radius, "radius")?;
                positive(half_length, "half_length")
            }
        }
    }

    /// Plane with unit normal in world coordinates: `(n, d)` with `n·x = d`.
    pub fn world_plane(&self, pose: &Pose) -> Option<(Vec3, f64)> {
        match *self {
            Shape::Plane { normal, offset } => {
                let n_local = normal.normalize();
                let n = pose.rotation.rotate(n_local);
                let d = offset / normal.norm() + n.dot(pose.translation);
                Some((n, d))
            }
            _ => None,
        }
    }

    /// World-space capsule segment endpoints.
    pub fn capsule_segment(&self, pose: &Pose) -> Option<(Vec3, Vec3, f64)> {
        match *self {
            Shape::Capsule { radius, half_length } => {
                let axis = pose.rotation.rotate(Vec3::Z) * half_length;
                Some((pose.translation - axis, pose.translation + axis, radius))
            }
            _ => None,
        }
    }

    /// World-space bounds; unbounded for planes.
    pub fn aabb(&self, pose: &Pose) -> Aabb {
        match *self {
            Shape::Plane { .. } => Aabb {
                min: Vec3::splat(f64::NEG_INFINITY),
                max: Vec3::splat(f64::INFINITY),
            },
            Shape::Sphere { radius } => Aabb {
                min: pose.translation - Vec3::splat(radius),
                max: pose.translation + Vec3::splat(radius),
            },
            Shape::Box { half_extents } => {
                let m = pose.rotation.to_matrix();
                let ext = Vec3::new(
                    m[0][0].abs() * half_extents.x + m[0][1].abs() * half_extents.y + m[0][2].abs() * half_extents.z,
                    m[1][0].abs() * half_extents.x + m[1][1].abs() * half_extents.y + m[1][2].abs() * half_extents.z,
                    m[2][0].abs() * half_extents.x + m[2][1].abs() * half_extents.y + m[2][2].abs() * half_extents.z,
                );
                Aabb {
                    min: pose.translation - ext,
                    max: pose.translation + ext,
                }
            }
            Shape::Capsule { .. } => {
                let (a, b, r) = self.capsule_segment(pose).unwrap();
                Aabb {
                    min: a.min(b) - Vec3::splat(r),
                    max: a.max(b) + Vec3::splat(r),
                }
            }
        }
    }

    /// Mass-normalized principal moments (multiply by mass for kg·m²).
    pub fn unit_inertia(&self) -> Vec3 {
        match *self {
            Shape::Plane { .. } => Vec3::ZERO,
            Shape::Sphere { radius } => Vec3::splat(0.4 * radius * radius),
            Shape::Box { half_extents: h } => {
                let (x2, y2, z2) = (4.0 * h.x * h.x, 4.0 * h.y * h.y, 4.0 * h.z * h.z);
                Vec3::new((y2 + z2) / 12.0, (x2 + z2) / 12.0, (x2 + y2) / 12.0)
            }
            Shape::Capsule {
                radius: r,
                half_length: h,
            } => {
                // solid cylinder of length 2(h + r/2); close enough for desk-scale use
                let len = 2.0 * h + r;
                let axial = 0.5 * r * r;
                let transverse = (3.0 * r * r + len * len) / 12.0;
                Vec3::new(transverse, transverse, axial)
            }
        }
    }

    /// First hit of the ray `origin + t·dir` (`dir` unit, `t ≥ 0`), with the
    /// outward world-space surface normal.
    pub fn raycast(&self, pose: &Pose, origin: Vec3, dir: Vec3) -> Option<(f64, Vec3)> {
        match *self {
            Shape::Plane { .. } => {
                let (n, d) = self.world_plane(pose)?;
                let denom = n.dot(dir);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (d - n.dot(origin)) / denom;
                (t >= 0.0).then_some((t, n))
            }
            Shape::Sphere { radius } => ray_sphere(origin, dir, pose.translation, radius).map(|t| {
                let n = (origin + dir * t - pose.translation).normalize();
                (t, n)
            }),
            Shape::Box { half_extents: h } => {
                let inv = pose.inverse();
                let o = inv.transform_point(origin);
                let d = inv.transform_vector(dir);
                let mut t_enter = f64::NEG_INFINITY;
                let mut t_exit = f64::INFINITY;
                let mut enter_axis = 0;
                let mut enter_sign = 1.0;
                for i in 0..3 {
                    let (oi, di, hi) = (o.get(i), d.get(i), h.get(i));
                    if di.abs() < 1e-15 {
                        if oi.abs() > hi {
                            return None;
                        }
                        continue;
                    }
                    let mut t0 = (-hi - oi) / di;
                    let mut t1 = (hi - oi) / di;
                    let mut sign = -1.0;
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                        sign = 1.0;
                    }
                    if t0 > t_enter {
                        t_enter = t0;
                        enter_axis = i;
                        enter_sign = sign;
                    }
                    t_exit = t_exit.min(t1);
                }
                if t_enter > t_exit || t_exit < 0.0 || t_enter < 0.0 {
                    return None;
                }
                let mut n = Vec3::ZERO;
                n.set(enter_axis, enter_sign);
                Some((t_enter, pose.rotation.rotate(n)))
            }
            Shape::Capsule { .. } => {
                let (a, b, r) = self.capsule_segment(pose)?;
                ray_capsule(origin, dir, a, b, r)
            }
        }
    }
}

fn ray_sphere(origin: Vec3, dir: Vec3, center: Vec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // rays starting inside the sphere see no surface
    let t0 = -b - s;
    (t0 >= 0.0).then_some(t0)
}

fn ray_capsule(origin: Vec3, dir: Vec3, a: Vec3, b: Vec3, r: f64) -> Option<(f64, Vec3)> {
    let ba = b - a;
    let oa = origin - a;
    let baba = ba.dot(ba);
    let bard = ba.dot(dir);
    let baoa = ba.dot(oa);
    let rdoa = dir.dot(oa);
    let oaoa = oa.dot(oa);
    let qa = baba - bard * bard;
    let qb = baba * rdoa - baoa * bard;
    let qc = baba * oaoa - baoa * baoa - r * r * baba;
    let mut best: Option<f64> = None;
    if qa.abs() > 1e-15 {
        let h = qb * qb - qa * qc;
        if h >= 0.0 {
            let t = (-qb - h.sqrt()) / qa;
            let y = baoa + t * bard;
            if t >= 0.0 && y > 0.0 && y < baba {
                best = Some(t);
            }
        }
    }
    for cap in [a, b] {
        if let Some(t) = ray_sphere(origin, dir, cap, r) {
            if best.is_none_or(|bt| t < bt) {
                best = Some(t);
            }
        }
    }
    let t = best?;
    let p = origin + dir * t;
    let s = ((p - a).dot(ba) / baba).clamp(0.0, 1.0);
    let n = (p - (a + ba * s)).normalize();
    Some((t, n))
}
