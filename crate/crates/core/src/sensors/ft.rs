//! Quasi-static joint force-torque sensing.

use super::SensorError;
use crate::dynamics::{ColliderId, SimWorld};
use crate::math::{transform_wrench, Vec3, Wrench};

/// Reaction wrench the parent side of `joint` exerts on the child side,
/// expressed in the joint frame.
///
/// The child subtree is treated as static: the parent wrench balances the
/// gravity of every distal link plus the contact forces they received during
/// the last step. Inertial terms of the driven arm are ignored.
pub fn ft_read(world: &SimWorld, robot: &str, joint: &str) -> Result<Wrench, SensorError> {
    let r = world
        .robot(robot)
        .ok_or_else(|| SensorError::UnknownRobot(robot.to_string()))?;
    let model = &r.model;
    let j = model
        .joint_index(joint)
        .ok_or_else(|| SensorError::UnknownJoint(joint.to_string()))?;
    let distal = model.distal_links(j);
    let mut is_distal = vec![false; model.links.len()];
    for &l in &distal {
        is_distal[l] = true;
    }

    // external wrench on the subtree, torque about the world origin
    let mut ext = Wrench::ZERO;
    let mut add_force = |f: Vec3, at: Vec3| {
        ext += Wrench::new(f, at.cross(f));
    };
    for &l in &distal {
        let link = &model.links[l];
        if link.mass > 0.0 {
            add_force(world.gravity * link.mass, r.link_poses[l].transform_point(link.com));
        }
    }
    if !r.is_visual {
        let dt = world.dt();
        let on_subtree = |id: ColliderId| match id {
            ColliderId::Link { robot, link, .. } => robot == r.id && is_distal[link as usize],
            ColliderId::Body(_) => false,
        };
        for c in world.contacts() {
            let f_b = c.impulse_on_b() / dt;
            if on_subtree(c.a) {
                add_force(-f_b, c.point);
            }
            if on_subtree(c.b) {
                add_force(f_b, c.point);
            }
        }
    }
    let frame = r.link_poses[model.joints[j].child];
    Ok(transform_wrench(&frame.inverse(), &-ext))
}
