//! Forward kinematics, geometric Jacobians and a registry of inverse
//! kinematics solvers.

mod ik;

use std::collections::HashMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::math::{Pose, Quat, Vec3};
use crate::scene::{Joint, JointType, RobotModel};

pub use ik::{DlsSolver, IkParams, IkProblem, IkRegistry, IkResult, IkSolver};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinError {
    #[error("expected {expected} joint values, got {got}")]
    DofMismatch { expected: usize, got: usize },
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("unknown IK solver `{0}`")]
    UnknownSolver(String),
    #[error("invalid IK parameters: {0}")]
    BadParams(String),
}

/// Displacement produced by a joint at position `q`, in the joint frame.
pub fn joint_motion(joint: &Joint, q: f64) -> Pose {
    match joint.kind {
        JointType::Revolute => Pose::from_rotation(Quat::from_axis_angle(joint.axis, q)),
        JointType::Prismatic => Pose::from_translation(joint.axis * q),
        JointType::Fixed => Pose::IDENTITY,
    }
}

fn check_len(model: &RobotModel, q: &[f64]) -> Result<(), KinError> {
    if q.len() != model.ndof() {
        return Err(KinError::DofMismatch {
            expected: model.ndof(),
            got: q.len(),
        });
    }
    Ok(())
}

/// World pose of every link, indexed like `model.links`.
///
/// Panics if `q` has the wrong length; see [`fk`] for the checked form.
pub fn link_poses(model: &RobotModel, base: &Pose, q: &[f64]) -> Vec<Pose> {
    assert_eq!(q.len(), model.ndof(), "joint vector length");
    let mut poses = vec![Pose::IDENTITY; model.links.len()];
    poses[model.root] = *base;
    for &j in &model.topo_order {
        let joint = &model.joints[j];
        let qj = model.dof_index(j).map_or(0.0, |i| q[i]);
        let frame = poses[joint.parent].compose(&joint.origin);
        poses[joint.child] = frame.compose(&joint_motion(joint, qj));
    }
    poses
}

/// World pose of every link by name.
pub fn fk(model: &RobotModel, base: &Pose, q: &[f64]) -> Result<HashMap<String, Pose>, KinError> {
    check_len(model, q)?;
    Ok(model
        .links
        .iter()
        .zip(link_poses(model, base, q))
        .map(|(l, p)| (l.name.clone(), p))
        .collect())
}

/// Geometric Jacobian (linear rows, then angular rows) of the point `local`
/// fixed in `link`, expressed in the world frame.
pub fn jacobian(
    model: &RobotModel,
    base: &Pose,
    q: &[f64],
    link: usize,
    local: Vec3,
) -> Result<DMatrix<f64>, KinError> {
    check_len(model, q)?;
    if link >= model.links.len() {
        return Err(KinError::UnknownLink(link.to_string()));
    }
    let poses = link_poses(model, base, q);
    Ok(jacobian_from_poses(model, &poses, link, local))
}

pub(crate) fn jacobian_from_poses(model: &RobotModel, poses: &[Pose], link: usize, local: Vec3) -> DMatrix<f64> {
    let p = poses[link].transform_point(local);
    let mut jac = DMatrix::zeros(6, model.ndof());
    for j in model.chain_to(link) {
        let Some(col) = model.dof_index(j) else {
            continue;
        };
        let joint = &model.joints[j];
        let frame = poses[joint.parent].compose(&joint.origin);
        let axis = frame.rotation.rotate(joint.axis);
        let (lin, ang) = match joint.kind {
            JointType::Revolute => (axis.cross(p - frame.translation), axis),
            JointType::Prismatic => (axis, Vec3::ZERO),
            JointType::Fixed => continue,
        };
        for r in 0..3 {
            jac[(r, col)] = lin.get(r);
            jac[(r + 3, col)] = ang.get(r);
        }
    }
    jac
}

pub fn link_by_name(model: &RobotModel, name: &str) -> Result<usize, KinError> {
    model
        .link_index(name)
        .ok_or_else(|| KinError::UnknownLink(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{assets_dir, parse_urdf};
    use std::f64::consts::FRAC_PI_2;

    fn two_link() -> RobotModel {
        parse_urdf(&std::fs::read_to_string(assets_dir().join("two_link_arm.urdf")).unwrap()).unwrap()
    }

    #[test]
    fn planar_fk_matches_closed_form() {
        let m = two_link();
        let tool = m.link_index("tool").unwrap();
        let at = |q1: f64, q2: f64| link_poses(&m, &Pose::IDENTITY, &[q1, q2])[tool].translation;
        // closed form: (l1 c1 + l2 c12, l1 s1 + l2 s12)
        let oracle = |q1: f64, q2: f64| {
            Vec3::new(
                0.5 * q1.cos() + 0.4 * (q1 + q2).cos(),
                0.5 * q1.sin() + 0.4 * (q1 + q2).sin(),
                0.0,
            )
        };
        assert!((at(0.0, 0.0) - Vec3::new(0.9, 0.0, 0.0)).norm() < 1e-12);
        assert!((at(FRAC_PI_2, 0.0) - Vec3::new(0.0, 0.9, 0.0)).norm() < 1e-12);
        for (a, b) in [(0.3, -1.2), (2.0, 0.4), (-2.5, 2.9)] {
            assert!((at(a, b) - oracle(a, b)).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_dof_returns_base() {
        let m = parse_urdf(
            r#"<robot name="r"><link name="a"/><link name="b"/>
            <joint name="j" type="fixed"><parent link="a"/><child link="b"/></joint></robot>"#,
        )
        .unwrap();
        let base = Pose::from_translation(Vec3::new(1.0, 2.0, 3.0));
        let poses = fk(&m, &base, &[]).unwrap();
        assert_eq!(poses["a"], base);
        assert!(matches!(fk(&m, &base, &[0.0]), Err(KinError::DofMismatch { .. })));
    }

    #[test]
    fn revolute_and_prismatic_columns() {
        let m = two_link();
        let tool = m.link_index("tool").unwrap();
        let j = jacobian(&m, &Pose::IDENTITY, &[0.0, 0.0], tool, Vec3::ZERO).unwrap();
        assert_eq!(j.column(0).as_slice(), &[0.0, 0.9, 0.0, 0.0, 0.0, 1.0]);

        let m = parse_urdf(
            r#"<robot name="p"><link name="a"/><link name="b"/>
            <joint name="s" type="prismatic"><parent link="a"/><child link="b"/>
            <axis xyz="0 0 1"/><limit lower="-1" upper="1" velocity="1" effort="1"/></joint></robot>"#,
        )
        .unwrap();
        let j = jacobian(&m, &Pose::IDENTITY, &[0.3], 1, Vec3::new(0.2, 0.0, 0.0)).unwrap();
        assert_eq!(j.column(0).as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }
}
