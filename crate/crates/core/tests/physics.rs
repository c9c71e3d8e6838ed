mod common;

use std::sync::Arc;

use common::*;
use contact_bridge::dynamics::{WorldCommand, WorldError};
use contact_bridge::math::{Pose, Twist, Vec3};
use contact_bridge::scene::{assets_dir, parse_urdf, ObjectKind, RobotSpec, Shape};

#[test]
fn free_fall_matches_projectile() {
    // semi-implicit Euler falls g·dt/2·t further than the analytic path
    let err = free_fall_error();
    assert!(err < 5e-3, "{err}");
    assert!((err - DT).abs() < 1e-9);
}

#[test]
fn elastic_equal_masses_swap_velocities() {
    assert!(elastic_swap_error() < 1e-6);
}

#[test]
fn frictionless_impacts_conserve_momentum() {
    assert!(momentum_drift() < 1e-9);
}

#[test]
fn incline_below_friction_angle_sticks() {
    let theta = 0.5f64.atan();
    assert!(incline_drift(theta - 0.05, 0.5) < 1e-4);
    assert!(incline_drift(theta + 0.1, 0.5) > 0.1);
}

#[test]
fn resting_contacts_stay_within_slop() {
    assert!(resting_penetration() <= 1e-3 + 1e-4);
}

#[test]
fn bouncing_never_gains_energy() {
    for e in [0.0, 0.5, 1.0] {
        assert!(energy_gain(e) <= 1e-6, "e = {e}");
    }
}

#[test]
fn slab_push_reaches_slab_speed() {
    let (t, v) = slab_push(1e-3);
    assert!(t.expect("box never matched the slab") <= 0.1);
    assert!((v - 0.05).abs() < 1e-3);
}

fn two_link_world() -> contact_bridge::dynamics::SimWorld {
    let mut w = world(G);
    let m = parse_urdf(&std::fs::read_to_string(assets_dir().join("two_link_arm.urdf")).unwrap()).unwrap();
    let spec: RobotSpec =
        serde_yaml::from_str("{name: arm, urdf: two_link_arm.urdf, max_joint_velocity: [1.0, 1.0]}").unwrap();
    w.add_robot(&spec, Arc::new(m), "robots[0]").unwrap();
    w
}

#[test]
fn drive_robot_respects_velocity_and_limits() {
    let mut w = two_link_world();
    let q0 = w.robot("arm").unwrap().q.clone();
    w.drive_robot("arm", &q0).unwrap();
    w.step().unwrap();
    assert_eq!(w.robot("arm").unwrap().q, q0);

    w.drive_robot("arm", &[q0[0] + 1.0, q0[1]]).unwrap();
    w.step().unwrap();
    let q = &w.robot("arm").unwrap().q;
    assert!((q[0] - q0[0] - DT).abs() < 1e-15);
    assert_eq!(q[1], q0[1]);

    let upper = w.robot("arm").unwrap().model.limits()[1].upper;
    let clamped = w.drive_robot("arm", &[q0[0], upper + 5.0]).unwrap();
    assert_eq!(clamped, 1);
    steps(&mut w, 240 * 8);
    assert_eq!(w.robot("arm").unwrap().q[1], upper);
    assert_eq!(w.robot("arm").unwrap().clamp_count, 1);
}

#[test]
fn visual_entities_do_not_change_physics() {
    let build = |with_visuals: bool| {
        let mut w = world(G);
        w.add_object(ground()).unwrap();
        w.add_object(dynamic("box", cube(0.05), at(0.0, 0.0, 0.3), 1.0))
            .unwrap();
        if with_visuals {
            let ghost = object("ghost", ObjectKind::Visual, cube(0.2), at(0.0, 0.0, 0.1));
            w.add_object(ghost).unwrap();
            let m = parse_urdf(&std::fs::read_to_string(assets_dir().join("two_link_arm.urdf")).unwrap()).unwrap();
            let spec: RobotSpec = serde_yaml::from_str("{name: shadow, urdf: x, is_visual_robot: true}").unwrap();
            w.add_robot(&spec, Arc::new(m), "robots[0]").unwrap();
            w.drive_robot("shadow", &[1.0, -1.0]).unwrap();
        }
        let mut trace = Vec::new();
        for _ in 0..240 {
            w.step().unwrap();
            let s = w.body("box").unwrap().state;
            trace.push((s.pose, s.twist));
        }
        (
            trace,
            w.contacts()
                .iter()
                .filter(|c| c.body_a == "ghost" || c.body_b == "ghost")
                .count(),
        )
    };
    let (plain, _) = build(false);
    let (ghosted, ghost_contacts) = build(true);
    assert_eq!(ghost_contacts, 0);
    assert!(plain == ghosted);
}

#[test]
fn queued_add_and_remove() {
    let mut w = world(G);
    w.submit(WorldCommand::AddObject(ground())).unwrap();
    assert!(matches!(
        w.submit(WorldCommand::AddObject(ground())),
        Err(WorldError::DuplicateName(_))
    ));
    w.submit(WorldCommand::AddObject(dynamic(
        "b",
        sphere(0.1),
        at(0.0, 0.0, 0.1),
        1.0,
    )))
    .unwrap();
    assert!(w.body("b").is_none());
    w.step().unwrap();
    assert!(w.body("b").is_some());
    w.submit(WorldCommand::RemoveObject("b".into())).unwrap();
    assert!(matches!(
        w.submit(WorldCommand::RemoveObject("b".into())),
        Err(WorldError::UnknownObject(_))
    ));
    w.step().unwrap();
    assert!(w.body("b").is_none());
    assert!(matches!(
        w.submit(WorldCommand::SetVisualPose {
            name: "ground".into(),
            pose: Pose::IDENTITY
        }),
        Err(WorldError::NotVisual(_))
    ));
}

#[test]
fn plane_pairs_are_rejected_up_front() {
    let mut w = world(G);
    w.add_object(ground()).unwrap();
    let mut wall = ground();
    wall.name = "wall".into();
    wall.shape = Shape::Plane {
        normal: Vec3::X,
        offset: -1.0,
    };
    // two static planes never interact, so this is fine
    w.add_object(wall).unwrap();
    let mut bad = dynamic("slab", cube(0.1), Pose::IDENTITY, 1.0);
    bad.shape = Shape::Plane {
        normal: Vec3::Z,
        offset: 0.0,
    };
    assert!(w.add_object(bad).is_err());
}

#[test]
fn non_finite_state_halts_naming_the_body() {
    let mut w = world(G);
    let mut b = dynamic("rocket", sphere(0.1), at(0.0, 0.0, 1.0), 1.0);
    b.twist = Some(Twist::new(Vec3::new(f64::INFINITY, 0.0, 0.0), Vec3::ZERO));
    w.add_object(b).unwrap();
    match w.step() {
        Err(WorldError::NonFinite(name)) => assert_eq!(name, "rocket"),
        other => panic!("{other:?}"),
    }
    assert_eq!(w.halted(), Some("rocket"));
    assert!(matches!(w.step(), Err(WorldError::Halted(_))));
}

#[test]
fn sim_time_is_exact() {
    let mut w = world(G);
    steps(&mut w, 240);
    assert_eq!(w.sim_time_ns(), 1_000_000_000);
}
