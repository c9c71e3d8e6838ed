//! Narrow-phase contact generation between primitive shapes.
//!
//! Every routine returns points with the normal pointing from the first shape
//! towards the second and a non-negative penetration depth. Touching shapes
//! (gap exactly zero) produce contacts of depth zero.

use crate::math::{Pose, Quat, Vec3};
use crate::scene::Shape;

/// Contacts are produced for gaps up to this value to absorb rounding in
/// exactly-touching configurations.
pub const TOUCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawContact {
    pub point: Vec3,
    /// Unit normal from shape A to shape B.
    pub normal: Vec3,
    pub depth: f64,
}

impl RawContact {
    fn flipped(self) -> Self {
        Self {
            normal: -self.normal,
            ..self
        }
    }
}

/// Whether the pair has a contact routine.
pub fn pair_supported(a: &Shape, b: &Shape) -> bool {
    !matches!((a, b), (Shape::Plane { .. }, Shape::Plane { .. }))
}

/// Contacts between two posed shapes; `None` for an unsupported pair.
pub fn collide(a: &Shape, pa: &Pose, b: &Shape, pb: &Pose) -> Option<Vec<RawContact>> {
    use Shape::*;
    let flip = |v: Vec<RawContact>| v.into_iter().map(RawContact::flipped).collect();
    let out = match (a, b) {
        (Plane { .. }, Plane { .. }) => return None,
        (Plane { .. }, _) => flip(collide_with_plane(b, pb, a, pa)),
        (_, Plane { .. }) => collide_with_plane(a, pa, b, pb),
        (Sphere { radius: ra }, Sphere { radius: rb }) => sphere_sphere(pa.translation, *ra, pb.translation, *rb)
            .into_iter()
            .collect(),
        (Sphere { radius }, Box { half_extents }) => flip(
            sphere_box(pa.translation, *radius, pb, *half_extents)
                .into_iter()
                .collect(),
        ),
        (Box { half_extents }, Sphere { radius }) => sphere_box(pb.translation, *radius, pa, *half_extents)
            .into_iter()
            .collect(),
        (Sphere { radius }, Capsule { .. }) => {
            let (s0, s1, rc) = b.capsule_segment(pb).unwrap();
            let q = closest_on_segment(s0, s1, pa.translation);
            sphere_sphere(pa.translation, *radius, q, rc).into_iter().collect()
        }
        (Capsule { .. }, Sphere { .. }) => flip(collide(b, pb, a, pa)?),
        (Capsule { .. }, Capsule { .. }) => {
            let (a0, a1, ra) = a.capsule_segment(pa).unwrap();
            let (b0, b1, rb) = b.capsule_segment(pb).unwrap();
            capsule_capsule(a0, a1, ra, b0, b1, rb)
        }
        (Capsule { .. }, Box { half_extents }) => {
            let (s0, s1, r) = a.capsule_segment(pa).unwrap();
            capsule_box(s0, s1, r, pb, *half_extents)
        }
        (Box { .. }, Capsule { .. }) => flip(collide(b, pb, a, pa)?),
        (Box { half_extents: ha }, Box { half_extents: hb }) => box_box(pa, *ha, pb, *hb),
    };
    Some(out)
}

/// `shape` against a plane; normals point from `shape` into the plane.
fn collide_with_plane(shape: &Shape, ps: &Pose, plane: &Shape, pp: &Pose) -> Vec<RawContact> {
    let (n, d) = plane.world_plane(pp).unwrap();
    let sphere_at = |c: Vec3, r: f64| {
        let gap = n.dot(c) - d - r;
        (gap <= TOUCH_TOLERANCE).then(|| RawContact {
            point: c - n * (r + 0.5 * gap),
            normal: -n,
            depth: (-gap).max(0.0),
        })
    };
    match *shape {
        Shape::Sphere { radius } => sphere_at(ps.translation, radius).into_iter().collect(),
        Shape::Capsule { .. } => {
            let (a, b, r) = shape.capsule_segment(ps).unwrap();
            [a, b].into_iter().filter_map(|c| sphere_at(c, r)).collect()
        }
        Shape::Box { half_extents: h } => box_corners(ps, h)
            .into_iter()
            .filter_map(|c| sphere_at(c, 0.0))
            .collect(),
        Shape::Plane { .. } => Vec::new(),
    }
}

pub fn box_corners(pose: &Pose, h: Vec3) -> [Vec3; 8] {
    let mut out = [Vec3::ZERO; 8];
    for (i, c) in out.iter_mut().enumerate() {
        let local = Vec3::new(
            if i & 1 == 0 { -h.x } else { h.x },
            if i & 2 == 0 { -h.y } else { h.y },
            if i & 4 == 0 { -h.z } else { h.z },
        );
        *c = pose.transform_point(local);
    }
    out
}

fn sphere_sphere(ca: Vec3, ra: f64, cb: Vec3, rb: f64) -> Option<RawContact> {
    let d = cb - ca;
    let dist = d.norm();
    let gap = dist - ra - rb;
    if gap > TOUCH_TOLERANCE {
        return None;
    }
    // coincident centres: any direction is valid, pick +z
    let normal = d.try_normalize().unwrap_or(Vec3::Z);
    Some(RawContact {
        point: ca + normal * (ra + 0.5 * gap),
        normal,
        depth: (-gap).max(0.0),
    })
}

pub fn closest_on_segment(a: Vec3, b: Vec3, p: Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < 1e-24 {
        return a;
    }
    let s = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    a + ab * s
}

/// Closest points between segments `p1q1` and `p2q2`.
pub fn closest_between_segments(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> (Vec3, Vec3) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(r);
    let (s, t);
    if a < 1e-24 && e < 1e-24 {
        return (p1, p2);
    }
    if a < 1e-24 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(r);
        if e < 1e-24 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(d2);
            let denom = a * e - b * b;
            let s0 = if denom > 1e-18 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            } else {
                t = t0;
                s = s0;
            }
        }
    }
    (p1 + d1 * s, p2 + d2 * t)
}

fn capsule_capsule(a0: Vec3, a1: Vec3, ra: f64, b0: Vec3, b1: Vec3, rb: f64) -> Vec<RawContact> {
    let (pa, pb) = closest_between_segments(a0, a1, b0, b1);
    let mut out: Vec<RawContact> = sphere_sphere(pa, ra, pb, rb).into_iter().collect();
    // endpoints give a second support point for near-parallel capsules
    for e in [a0, a1] {
        let q = closest_on_segment(b0, b1, e);
        if let Some(c) = sphere_sphere(e, ra, q, rb) {
            push_distinct(&mut out, c, 0.5 * ra.min(rb));
        }
    }
    out
}

fn push_distinct(out: &mut Vec<RawContact>, c: RawContact, min_sep: f64) {
    if out.iter().all(|o| (o.point - c.point).norm() > min_sep) {
        out.push(c);
    }
}

/// Sphere against box; normal from box to sphere.
fn sphere_box(center: Vec3, r: f64, bp: &Pose, h: Vec3) -> Option<RawContact> {
    let local = bp.inverse().transform_point(center);
    let clamped = Vec3::new(
        local.x.clamp(-h.x, h.x),
        local.y.clamp(-h.y, h.y),
        local.z.clamp(-h.z, h.z),
    );
    let delta = local - clamped;
    let dist = delta.norm();
    if dist > 1e-12 {
        let gap = dist - r;
        if gap > TOUCH_TOLERANCE {
            return None;
        }
        let n_local = delta / dist;
        return Some(RawContact {
            point: bp.transform_point(clamped + n_local * (0.5 * (dist - r))),
            normal: bp.rotation.rotate(n_local),
            depth: (-gap).max(0.0),
        });
    }
    // centre inside the box: push out through the nearest face
    let mut best = (f64::INFINITY, 0usize, 1.0);
    for i in 0..3 {
        let c = local.get(i);
        let pen = h.get(i) - c.abs();
        if pen < best.0 {
            best = (pen, i, if c >= 0.0 { 1.0 } else { -1.0 });
        }
    }
    let (pen, axis, sign) = best;
    let mut n_local = Vec3::ZERO;
    n_local.set(axis, sign);
    let mut surface = local;
    surface.set(axis, sign * h.get(axis));
    Some(RawContact {
        point: bp.transform_point(surface),
        normal: bp.rotation.rotate(n_local),
        depth: pen + r,
    })
}

/// Signed distance from a box-local point to the box surface.
fn box_sdf(p: Vec3, h: Vec3) -> f64 {
    let q = p.abs() - h;
    let outside = q.max(Vec3::ZERO).norm();
    let inside = q.x.max(q.y).max(q.z).min(0.0);
    outside + inside
}

/// Capsule segment against box; normal from capsule to box.
fn capsule_box(s0: Vec3, s1: Vec3, r: f64, bp: &Pose, h: Vec3) -> Vec<RawContact> {
    let inv = bp.inverse();
    let (l0, l1) = (inv.transform_point(s0), inv.transform_point(s1));
    // the box SDF is convex, so its restriction to the segment is unimodal
    let f = |s: f64| box_sdf(l0 + (l1 - l0) * s, h);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let s_min = 0.5 * (lo + hi);
    let mut out = Vec::new();
    for s in [s_min, 0.0, 1.0] {
        let c = s0 + (s1 - s0) * s;
        if let Some(contact) = sphere_box(c, r, bp, h) {
            push_distinct(&mut out, contact.flipped(), 0.5 * r);
        }
    }
    out
}

fn box_axes(q: Quat) -> [Vec3; 3] {
    [q.rotate(Vec3::X), q.rotate(Vec3::Y), q.rotate(Vec3::Z)]
}

fn project_extent(axes: &[Vec3; 3], h: Vec3, l: Vec3) -> f64 {
    h.x * axes[0].dot(l).abs() + h.y * axes[1].dot(l).abs() + h.z * axes[2].dot(l).abs()
}

/// Box against box via the separating-axis test, with a reference-face
/// clipped manifold of at most four points (one point for edge-edge).
fn box_box(pa: &Pose, ha: Vec3, pb: &Pose, hb: Vec3) -> Vec<RawContact> {
    let axes_a = box_axes(pa.rotation);
    let axes_b = box_axes(pb.rotation);
    let d = pb.translation - pa.translation;

    // (separation, axis, kind): kind 0..3 face of A, 3..6 face of B, 6.. edge pair
    let mut best_face: Option<(f64, Vec3, usize)> = None;
    let mut best_edge: Option<(f64, Vec3, usize)> = None;
    let mut consider = |axis: Vec3, kind: usize| -> bool {
        let Some(l) = axis.try_normalize() else {
            return true;
        };
        let sep = d.dot(l).abs() - project_extent(&axes_a, ha, l) - project_extent(&axes_b, hb, l);
        if sep > TOUCH_TOLERANCE {
            return false;
        }
        let l = if d.dot(l) < 0.0 { -l } else { l };
        let slot = if kind < 6 { &mut best_face } else { &mut best_edge };
        if slot.is_none_or(|(s, _, _)| sep > s) {
            *slot = Some((sep, l, kind));
        }
        true
    };
    for (i, ax) in axes_a.iter().enumerate() {
        if !consider(*ax, i) {
            return Vec::new();
        }
    }
    for (i, ax) in axes_b.iter().enumerate() {
        if !consider(*ax, 3 + i) {
            return Vec::new();
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let c = axes_a[i].cross(axes_b[j]);
            if c.norm() < 1e-6 {
                continue;
            }
            if !consider(c, 6 + 3 * i + j) {
                return Vec::new();
            }
        }
    }
    let (face_sep, face_n, face_kind) = best_face.expect("face axes always tested");
    // prefer faces unless an edge axis is clearly shallower
    if let Some((edge_sep, edge_n, kind)) = best_edge {
        if edge_sep > face_sep + 1e-5 {
            let (i, j) = ((kind - 6) / 3, (kind - 6) % 3);
            return edge_contact(pa, ha, &axes_a, i, pb, hb, &axes_b, j, edge_n, edge_sep);
        }
    }
    if face_kind < 3 {
        face_contact(pa, ha, &axes_a, face_kind, pb, hb, &axes_b, face_n, face_sep)
    } else {
        // reference face on B: solve with roles swapped, then flip back
        face_contact(pb, hb, &axes_b, face_kind - 3, pa, ha, &axes_a, -face_n, face_sep)
            .into_iter()
            .map(RawContact::flipped)
            .collect()
    }
}

/// `n` points from the reference box R towards the incident box I.
#[allow(clippy::too_many_arguments)]
fn face_contact(
    pr: &Pose,
    hr: Vec3,
    axes_r: &[Vec3; 3],
    ref_axis: usize,
    pi: &Pose,
    hi: Vec3,
    axes_i: &[Vec3; 3],
    n: Vec3,
    sep: f64,
) -> Vec<RawContact> {
    // incident face: the face of I most anti-parallel to n
    let mut inc_axis = 0;
    let mut best = f64::INFINITY;
    for (k, ax) in axes_i.iter().enumerate() {
        let dp = ax.dot(n);
        if -dp.abs() < best {
            best = -dp.abs();
            inc_axis = k;
        }
    }
    let inc_sign = if axes_i[inc_axis].dot(n) > 0.0 { -1.0 } else { 1.0 };
    let (u, v) = ((inc_axis + 1) % 3, (inc_axis + 2) % 3);
    let face_center = pi.translation + axes_i[inc_axis] * (inc_sign * hi.get(inc_axis));
    let eu = axes_i[u] * hi.get(u);
    let ev = axes_i[v] * hi.get(v);
    let mut poly = vec![
        face_center + eu + ev,
        face_center - eu + ev,
        face_center - eu - ev,
        face_center + eu - ev,
    ];

    // clip against the four side planes of the reference face
    let ref_center = pr.translation + n * hr.get(ref_axis);
    for k in 0..3 {
        if k == ref_axis {
            continue;
        }
        let side = axes_r[k];
        let off = side.dot(pr.translation);
        poly = clip(&poly, side, off + hr.get(k));
        poly = clip(&poly, -side, -off + hr.get(k));
        if poly.is_empty() {
            break;
        }
    }

    let plane_d = n.dot(ref_center);
    let mut pts: Vec<RawContact> = poly
        .into_iter()
        .filter_map(|p| {
            let depth = plane_d - n.dot(p);
            (depth >= -TOUCH_TOLERANCE).then(|| RawContact {
                point: p + n * (0.5 * depth),
                normal: n,
                depth: depth.max(0.0),
            })
        })
        .collect();
    if pts.is_empty() {
        // rounding in a grazing configuration; fall back to the support point
        let p = ref_center;
        pts.push(RawContact {
            point: p,
            normal: n,
            depth: (-sep).max(0.0),
        });
    }
    reduce_manifold(pts, n)
}

fn clip(poly: &[Vec3], n: Vec3, d: f64) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let da = n.dot(a) - d;
        let db = n.dot(b) - d;
        if da <= 0.0 {
            out.push(a);
        }
        if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
            out.push(a + (b - a) * (da / (da - db)));
        }
    }
    out
}

/// Keeps at most four points spanning the largest area.
fn reduce_manifold(mut pts: Vec<RawContact>, n: Vec3) -> Vec<RawContact> {
    if pts.len() <= 4 {
        return pts;
    }
    let mut chosen = Vec::with_capacity(4);
    // deepest first
    let first = (0..pts.len())
        .max_by(|&a, &b| pts[a].depth.total_cmp(&pts[b].depth))
        .unwrap();
    chosen.push(first);
    let far = (0..pts.len())
        .max_by(|&a, &b| {
            let da = (pts[a].point - pts[first].point).norm_squared();
            let db = (pts[b].point - pts[first].point).norm_squared();
            da.total_cmp(&db)
        })
        .unwrap();
    chosen.push(far);
    let area = |a: Vec3, b: Vec3, c: Vec3| (b - a).cross(c - a).dot(n);
    let (p0, p1) = (pts[first].point, pts[far].point);
    let third = (0..pts.len())
        .max_by(|&a, &b| {
            area(p0, p1, pts[a].point)
                .abs()
                .total_cmp(&area(p0, p1, pts[b].point).abs())
        })
        .unwrap();
    chosen.push(third);
    let side = area(p0, p1, pts[third].point).signum();
    // fourth point on the opposite side of the p0-p1 diagonal
    if let Some(fourth) = (0..pts.len())
        .filter(|i| !chosen.contains(i))
        .max_by(|&a, &b| (-side * area(p0, p1, pts[a].point)).total_cmp(&(-side * area(p0, p1, pts[b].point))))
    {
        chosen.push(fourth);
    }
    chosen.sort_unstable();
    chosen.dedup();
    let mut out = Vec::with_capacity(4);
    for (i, p) in pts.drain(..).enumerate() {
        if chosen.contains(&i) {
            out.push(p);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn edge_contact(
    pa: &Pose,
    ha: Vec3,
    axes_a: &[Vec3; 3],
    i: usize,
    pb: &Pose,
    hb: Vec3,
    axes_b: &[Vec3; 3],
    j: usize,
    n: Vec3,
    sep: f64,
) -> Vec<RawContact> {
    // support edge of A along +n, of B along -n
    let support_edge = |pose: &Pose, h: Vec3, axes: &[Vec3; 3], along: usize, dir: Vec3| {
        let mut c = pose.translation;
        for k in 0..3 {
            if k != along {
                let s = if axes[k].dot(dir) >= 0.0 { 1.0 } else { -1.0 };
                c += axes[k] * (s * h.get(k));
            }
        }
        let e = axes[along] * h.get(along);
        (c - e, c + e)
    };
    let (a0, a1) = support_edge(pa, ha, axes_a, i, n);
    let (b0, b1) = support_edge(pb, hb, axes_b, j, -n);
    let (qa, qb) = closest_between_segments(a0, a1, b0, b1);
    vec![RawContact {
        point: (qa + qb) * 0.5,
        normal: n,
        depth: (-sep).max(0.0),
    }]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane() -> Shape {
        Shape::Plane {
            normal: Vec3::Z,
            offset: 0.0,
        }
    }

    #[test]
    fn sphere_on_plane() {
        let s = Shape::Sphere { radius: 0.1 };
        let c = collide(
            &s,
            &Pose::from_translation(Vec3::new(0.0, 0.0, 0.05)),
            &plane(),
            &Pose::IDENTITY,
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].depth - 0.05).abs() < 1e-15);
        // normal from the sphere into the plane; from the plane's side it is +z
        assert_eq!(c[0].normal, -Vec3::Z);
        let c = collide(
            &plane(),
            &Pose::IDENTITY,
            &s,
            &Pose::from_translation(Vec3::new(0.0, 0.0, 0.05)),
        )
        .unwrap();
        assert_eq!(c[0].normal, Vec3::Z);
    }

    #[test]
    fn separated_spheres() {
        let s = Shape::Sphere { radius: 0.1 };
        let c = collide(
            &s,
            &Pose::IDENTITY,
            &s,
            &Pose::from_translation(Vec3::new(0.25, 0.0, 0.0)),
        )
        .unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn box_resting_on_plane_has_four_corners() {
        let b = Shape::Box {
            half_extents: Vec3::splat(0.5),
        };
        let c = collide(
            &b,
            &Pose::from_translation(Vec3::new(0.0, 0.0, 0.5)),
            &plane(),
            &Pose::IDENTITY,
        )
        .unwrap();
        assert_eq!(c.len(), 4);
        for p in &c {
            assert_eq!(p.depth, 0.0);
            assert!(p.point.z.abs() < 1e-15);
        }
    }

    #[test]
    fn stacked_boxes_face_manifold() {
        let b = Shape::Box {
            half_extents: Vec3::splat(0.5),
        };
        let top = Pose::new(Vec3::new(0.1, 0.0, 0.99), Quat::rz(0.3));
        let c = collide(&b, &Pose::IDENTITY, &b, &top).unwrap();
        assert_eq!(c.len(), 4);
        for p in &c {
            assert!((p.depth - 0.01).abs() < 1e-9, "{p:?}");
            assert!((p.normal - Vec3::Z).norm() < 1e-12);
        }
        // swapped roles flip the normal
        let c = collide(&b, &top, &b, &Pose::IDENTITY).unwrap();
        assert!(c.iter().all(|p| (p.normal + Vec3::Z).norm() < 1e-12));
    }

    #[test]
    fn edge_edge_single_point() {
        let b = Shape::Box {
            half_extents: Vec3::splat(0.5),
        };
        // A rotated 45° about x, B rotated 45° about y and raised: edges cross
        let pa = Pose::from_rotation(Quat::from_axis_angle(Vec3::X, std::f64::consts::FRAC_PI_4));
        let h = std::f64::consts::SQRT_2 * 0.5;
        let pb = Pose::new(
            Vec3::new(0.0, 0.0, 2.0 * h - 0.01),
            Quat::from_axis_angle(Vec3::Y, std::f64::consts::FRAC_PI_4),
        );
        let c = collide(&b, &pa, &b, &pb).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].depth - 0.01).abs() < 1e-9);
        assert!((c[0].normal - Vec3::Z).norm() < 1e-9);
    }

    #[test]
    fn capsule_lying_on_box() {
        let cap = Shape::Capsule {
            radius: 0.05,
            half_length: 0.2,
        };
        let b = Shape::Box {
            half_extents: Vec3::new(0.5, 0.5, 0.1),
        };
        let pose = Pose::new(
            Vec3::new(0.0, 0.0, 0.149),
            Quat::from_axis_angle(Vec3::Y, std::f64::consts::FRAC_PI_2),
        );
        let c = collide(&cap, &pose, &b, &Pose::IDENTITY).unwrap();
        assert!(c.len() >= 2, "{c:?}");
        for p in &c {
            assert!((p.depth - 0.001).abs() < 1e-9);
            assert!((p.normal + Vec3::Z).norm() < 1e-9, "{c:?}");
        }
    }

    #[test]
    fn sphere_inside_box() {
        let b = Shape::Box {
            half_extents: Vec3::splat(0.5),
        };
        let s = Shape::Sphere { radius: 0.1 };
        let c = collide(
            &b,
            &Pose::IDENTITY,
            &s,
            &Pose::from_translation(Vec3::new(0.0, 0.0, 0.45)),
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].depth - 0.15).abs() < 1e-12);
        assert_eq!(c[0].normal, Vec3::Z);
    }

    #[test]
    fn plane_pair_unsupported() {
        assert!(!pair_supported(&plane(), &plane()));
        assert!(collide(&plane(), &Pose::IDENTITY, &plane(), &Pose::IDENTITY).is_none());
    }
}
