//! Forward kinematics, the tool Jacobian and an IK round trip on the six-joint arm.

use contact_bridge::kinematics::{fk, jacobian, link_by_name, IkParams, IkProblem, IkRegistry};
use contact_bridge::math::{Pose, Vec3};
use contact_bridge::scene::{assets_dir, parse_urdf};

fn main() -> anyhow::Result<()> {
    let model = parse_urdf(&std::fs::read_to_string(assets_dir().join("six_dof_arm.urdf"))?)?;
    let tool = link_by_name(&model, "tool")?;
    let q = [0.3, 0.5, 1.2, -0.4, 0.8, 0.1];

    let poses = fk(&model, &Pose::IDENTITY, &q)?;
    let target = poses["tool"];
    println!("tool at {:?}", target.translation);

    let jac = jacobian(&model, &Pose::IDENTITY, &q, tool, Vec3::ZERO)?;
    println!("tool Jacobian (rows: vx vy vz wx wy wz){jac:.3}");

    let registry = IkRegistry::default();
    println!("solvers: {:?}", registry.names());
    let problem = IkProblem {
        model: &model,
        base: &Pose::IDENTITY,
        link: tool,
        local: Vec3::ZERO,
        target,
    };
    let start = [0.0, 0.3, 1.0, 0.0, 0.5, 0.0];
    let r = registry.solve("dls", &problem, &start, &IkParams::default())?;
    println!(
        "dls from {start:?}: converged {} in {} iterations, position error {:.2e} m, orientation error {:.2e} rad",
        r.converged, r.iterations, r.pos_error, r.ori_error
    );
    println!("q = {:?}", r.q);
    Ok(())
}
