//! Scenarios shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::sync::Arc;

use contact_bridge::dynamics::{MaterialParams, SimWorld};
use contact_bridge::math::{Pose, Quat, Twist, Vec3};
use contact_bridge::scene::{parse_urdf, ObjectKind, ObjectSpec, PhysicsParams, RobotSpec, Shape};

pub const G: f64 = 9.81;
pub const DT: f64 = 1.0 / 240.0;

pub fn world(gravity: f64) -> SimWorld {
    SimWorld::new(Vec3::new(0.0, 0.0, -gravity), DT, PhysicsParams::default())
}

pub fn ground() -> ObjectSpec {
    object(
        "ground",
        ObjectKind::Collision,
        Shape::Plane {
            normal: Vec3::Z,
            offset: 0.0,
        },
        Pose::IDENTITY,
    )
}

pub fn object(name: &str, kind: ObjectKind, shape: Shape, pose: Pose) -> ObjectSpec {
    ObjectSpec {
        name: name.into(),
        kind: Some(kind),
        shape,
        pose,
        mass: None,
        material: None,
        twist: None,
        pose_source: None,
        color: None,
    }
}

pub fn dynamic(name: &str, shape: Shape, pose: Pose, mass: f64) -> ObjectSpec {
    ObjectSpec {
        mass: Some(mass),
        ..object(name, ObjectKind::Dynamic, shape, pose)
    }
}

pub fn sphere(r: f64) -> Shape {
    Shape::Sphere { radius: r }
}

pub fn cube(h: f64) -> Shape {
    Shape::Box {
        half_extents: Vec3::splat(h),
    }
}

pub fn at(x: f64, y: f64, z: f64) -> Pose {
    Pose::from_translation(Vec3::new(x, y, z))
}

pub fn steps(w: &mut SimWorld, n: usize) {
    for _ in 0..n {
        w.step().unwrap();
    }
}

/// Relative error of the fall distance after 1 s against −g/2.
pub fn free_fall_error() -> f64 {
    let mut w = world(G);
    w.add_object(dynamic("ball", sphere(0.1), at(0.0, 0.0, 10.0), 1.0))
        .unwrap();
    steps(&mut w, 240);
    let dz = w.body("ball").unwrap().state.pose.translation.z - 10.0;
    let analytic = -G / 2.0;
    ((dz - analytic) / analytic).abs()
}

/// Largest deviation from a perfect velocity swap for an e=1, μ=0 head-on hit.
pub fn elastic_swap_error() -> f64 {
    let mut w = world(0.0);
    let slick = MaterialParams::new(0.0, 1.0);
    for (name, x, v) in [("a", -0.5, 1.0), ("b", 0.3, -0.5)] {
        let mut s = dynamic(name, sphere(0.1), at(x, 0.0, 0.0), 1.0);
        s.material = Some(slick);
        s.twist = Some(Twist::new(Vec3::new(v, 0.0, 0.0), Vec3::ZERO));
        w.add_object(s).unwrap();
    }
    let mut collided = false;
    for _ in 0..240 {
        w.step().unwrap();
        collided |= !w.contacts().is_empty();
        if collided && w.contacts().is_empty() {
            break;
        }
    }
    assert!(collided);
    let va = w.body("a").unwrap().state.twist.linear;
    let vb = w.body("b").unwrap().state.twist.linear;
    (va - Vec3::new(-0.5, 0.0, 0.0))
        .norm()
        .max((vb - Vec3::new(1.0, 0.0, 0.0)).norm())
}

/// Largest change of total linear momentum over an oblique frictionless
/// impact between unequal spheres and a tumbling box.
pub fn momentum_drift() -> f64 {
    let mut w = world(0.0);
    let slick = MaterialParams::new(0.0, 0.3);
    let bodies = [
        ("a", sphere(0.1), at(-0.4, 0.05, 0.0), 1.5, Vec3::new(1.2, 0.0, 0.0)),
        ("b", sphere(0.15), at(0.2, -0.02, 0.01), 0.7, Vec3::new(-0.4, 0.1, 0.0)),
        ("c", cube(0.08), at(0.0, 0.6, 0.0), 2.0, Vec3::new(0.0, -1.0, 0.05)),
    ];
    for (name, shape, pose, mass, v) in bodies {
        let mut s = dynamic(name, shape, pose, mass);
        s.material = Some(slick);
        s.twist = Some(Twist::new(v, Vec3::new(0.0, 0.0, 0.5)));
        w.add_object(s).unwrap();
    }
    let p0 = w.linear_momentum();
    let mut worst: f64 = 0.0;
    let mut touched = false;
    for _ in 0..480 {
        w.step().unwrap();
        touched |= !w.contacts().is_empty();
        worst = worst.max((w.linear_momentum() - p0).norm());
    }
    assert!(touched);
    worst
}

/// Displacement of a box resting for 2 s on a plane tilted by `theta`.
pub fn incline_drift(theta: f64, mu: f64) -> f64 {
    let mut w = world(G);
    let tilt = Quat::from_axis_angle(Vec3::Y, theta);
    let normal = tilt.rotate(Vec3::Z);
    let mut slope = ground();
    slope.shape = Shape::Plane { normal, offset: 0.0 };
    slope.material = Some(MaterialParams::new(mu, 0.0));
    w.add_object(slope).unwrap();
    let h = 0.05;
    let mut b = dynamic("box", cube(h), Pose::new(normal * h, tilt), 1.0);
    b.material = Some(MaterialParams::new(mu, 0.0));
    w.add_object(b).unwrap();
    let start = w.body("box").unwrap().state.pose.translation;
    steps(&mut w, 480);
    let end = w.body("box").unwrap().state.pose.translation;
    let d = end - start;
    // tangential part only; settling along the normal is not sliding
    (d - normal * d.dot(normal)).norm()
}

/// Deepest resting contact after 0.5 s of settling a drop and a small stack.
pub fn resting_penetration() -> f64 {
    let mut w = world(G);
    w.add_object(ground()).unwrap();
    w.add_object(dynamic("low", cube(0.05), at(0.0, 0.0, 0.06), 1.0))
        .unwrap();
    w.add_object(dynamic("high", cube(0.05), at(0.01, 0.0, 0.17), 0.5))
        .unwrap();
    w.add_object(dynamic("ball", sphere(0.04), at(0.4, 0.0, 0.2), 0.3))
        .unwrap();
    w.add_object(dynamic(
        "rod",
        Shape::Capsule {
            radius: 0.03,
            half_length: 0.1,
        },
        Pose::new(Vec3::new(-0.4, 0.0, 0.1), Quat::from_axis_angle(Vec3::X, 1.5)),
        0.4,
    ))
    .unwrap();
    steps(&mut w, 120);
    let mut worst: f64 = 0.0;
    for _ in 0..120 {
        w.step().unwrap();
        for c in w.contacts() {
            worst = worst.max(c.depth);
        }
    }
    worst
}

/// Largest energy gain (J) between consecutive steps for a bouncing ball.
pub fn energy_gain(restitution: f64) -> f64 {
    let mut w = world(G);
    w.add_object(ground()).unwrap();
    let mut b = dynamic("ball", sphere(0.05), at(0.0, 0.0, 0.5), 0.2);
    b.material = Some(MaterialParams::new(0.5, restitution));
    b.twist = Some(Twist::new(Vec3::new(0.3, 0.0, 0.0), Vec3::ZERO));
    w.add_object(b).unwrap();
    let energy = |w: &SimWorld| w.kinetic_energy() + w.potential_energy();
    let mut prev = energy(&w);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..720 {
        w.step().unwrap();
        let e = energy(&w);
        worst = worst.max(e - prev);
        prev = e;
    }
    worst
}

pub const SLAB_URDF: &str = r#"<robot name="pusher">
  <link name="base"/>
  <link name="slab">
    <inertial><mass value="1"/></inertial>
    <collision><geometry><box size="0.02 0.4 0.1"/></geometry></collision>
  </link>
  <joint name="slide" type="prismatic"><parent link="base"/><child link="slab"/>
    <axis xyz="1 0 0"/><limit lower="-1" upper="1" velocity="0.05" effort="100"/></joint>
</robot>"#;

/// Pushes a resting box with a kinematic slab at 0.05 m/s. Returns the time
/// from first contact until the box matches the slab velocity within `tol`,
/// and the final box speed.
pub fn slab_push(tol: f64) -> (Option<f64>, f64) {
    let mut w = world(G);
    w.add_object(ground()).unwrap();
    w.add_object(dynamic("box", cube(0.05), at(0.0, 0.0, 0.05), 1.0))
        .unwrap();
    let spec: RobotSpec =
        serde_yaml::from_str("{name: pusher, urdf: slab.urdf, base_pose: {position: [-0.07, 0, 0.06]}}").unwrap();
    w.add_robot(&spec, Arc::new(parse_urdf(SLAB_URDF).unwrap()), "robots[0]")
        .unwrap();
    steps(&mut w, 60);
    w.drive_robot("pusher", &[0.5]).unwrap();
    let mut first_contact = None;
    let mut stuck_at = None;
    for k in 0..240 {
        w.step().unwrap();
        let t = k as f64 * DT;
        let pushing = w
            .contacts()
            .iter()
            .any(|c| c.body_a == "pusher/slab" || c.body_b == "pusher/slab");
        if pushing && first_contact.is_none() {
            first_contact = Some(t);
        }
        let v = w.body("box").unwrap().state.twist.linear.x;
        if let (Some(t0), None) = (first_contact, stuck_at) {
            if (v - 0.05).abs() <= tol {
                stuck_at = Some(t - t0);
            }
        }
    }
    (stuck_at, w.body("box").unwrap().state.twist.linear.x)
}

/// In-memory bag sink that stays readable after the recorder is boxed away.
#[derive(Clone, Default)]
pub struct SharedBuf(pub Arc<std::sync::Mutex<Vec<u8>>>);

impl std::io::Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl SharedBuf {
    pub fn bytes(&self) -> Vec<u8> {
        self.0.lock().unwrap().clone()
    }
}

pub fn recorder(
    bus: &contact_bridge::bus::Bus,
    name: &str,
    topics: &[&str],
) -> (contact_bridge::recording::Recorder<SharedBuf>, SharedBuf) {
    let buf = SharedBuf::default();
    let writer = contact_bridge::recording::BagWriter::new(buf.clone()).unwrap();
    (
        contact_bridge::recording::Recorder::new(&bus.node(name), topics, writer),
        buf,
    )
}

fn rand_string(rng: &mut impl rand::Rng, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

fn rand_f64(rng: &mut impl rand::Rng) -> f64 {
    match rng.gen_range(0..8) {
        0 => 0.0,
        1 => -0.0,
        2 => f64::from_bits(rng.gen::<u64>() & !(0x7ff << 52)),
        3 => rng.gen_range(-1e12..1e12),
        _ => rng.gen_range(-10.0..10.0),
    }
}

fn rand_vec3(rng: &mut impl rand::Rng) -> Vec3 {
    Vec3::new(rand_f64(rng), rand_f64(rng), rand_f64(rng))
}

/// Envelope of a random message type with random contents.
pub fn random_envelope(rng: &mut impl rand::Rng) -> contact_bridge::bus::Envelope {
    use contact_bridge::bus::*;
    let topic = format!("rpbi/t{}/{}", rand_string(rng, 6), rng.gen_range(0..100));
    let stamp = rng.gen::<u64>();
    let payload = match rng.gen_range(0..9) {
        0 => {
            let n = rng.gen_range(0..8);
            let mut js = JointStateMsg::from_positions(
                (0..n).map(|i| format!("j{i}")).collect(),
                (0..n).map(|_| rand_f64(rng)).collect(),
            );
            js.velocities = (0..n).map(|_| rand_f64(rng)).collect();
            js.efforts = (0..n).map(|_| rand_f64(rng)).collect();
            Payload::JointState(js)
        }
        1 => Payload::Transform(TransformMsg {
            parent: format!("p{}", rand_string(rng, 12)),
            child: format!("c{}", rand_string(rng, 12)),
            pose: Pose::new(
                rand_vec3(rng),
                Quat::new_normalize(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    1.0,
                ),
            ),
        }),
        2 => Payload::Wrench(WrenchMsg {
            frame: format!("f{}", rand_string(rng, 12)),
            wrench: contact_bridge::math::Wrench::new(rand_vec3(rng), rand_vec3(rng)),
        }),
        3 => Payload::Float64Array(Float64ArrayMsg::new(
            (0..rng.gen_range(0..32)).map(|_| rand_f64(rng)).collect(),
        )),
        4 => {
            let (w, h) = (rng.gen_range(0..6), rng.gen_range(0..6));
            Payload::Image(ImageMsg::rgb8(w, h, (0..w * h * 3).map(|_| rng.gen()).collect()))
        }
        5 => {
            let (w, h) = (rng.gen_range(0..6), rng.gen_range(0..6));
            Payload::Image(ImageMsg::depth(
                w,
                h,
                (0..w * h).map(|_| rng.gen_range(-5.0f32..5.0)).collect(),
            ))
        }
        6 => Payload::CameraInfo(CameraInfoMsg {
            width: rng.gen(),
            height: rng.gen(),
            fx: rng.gen_range(1e-6..1e6),
            fy: rng.gen_range(1e-6..1e6),
            cx: rand_f64(rng),
            cy: rand_f64(rng),
        }),
        7 => {
            let n = rng.gen_range(0..16);
            Payload::PointCloud(PointCloudMsg {
                points: (0..n).map(|_| rand_vec3(rng)).collect(),
                colors: rng.gen_bool(0.5).then(|| (0..n).map(|_| rng.gen()).collect()),
            })
        }
        _ => {
            if rng.gen_bool(0.5) {
                Payload::Clock(ClockMsg { sim_time_ns: rng.gen() })
            } else {
                Payload::Text(TextMsg {
                    text: ["", "héllo wörld", "{\"a\": 1}", "🦀"][rng.gen_range(0..4)].to_string()
                        + &rand_string(rng, 40),
                })
            }
        }
    };
    Envelope::new(topic, stamp, payload)
}
