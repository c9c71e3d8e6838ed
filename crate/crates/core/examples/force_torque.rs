//! Wrist force-torque readings of a static payload at a few wrist angles.

use std::sync::Arc;

use contact_bridge::dynamics::SimWorld;
use contact_bridge::math::Vec3;
use contact_bridge::scene::{parse_urdf, PhysicsParams, RobotSpec};
use contact_bridge::sensors::ft_read;

const WRIST: &str = r#"<robot name="wrist">
  <link name="base"/>
  <link name="hand"/>
  <link name="payload"><inertial><origin xyz="0 0 0"/><mass value="2.0"/></inertial></link>
  <joint name="wrist" type="revolute"><parent link="base"/><child link="hand"/><origin xyz="0 0 0.5"/>
    <axis xyz="0 1 0"/><limit lower="-3" upper="3" velocity="1" effort="10"/></joint>
  <joint name="mount" type="fixed"><parent link="hand"/><child link="payload"/><origin xyz="0.2 0 0"/></joint>
</robot>"#;

fn main() -> anyhow::Result<()> {
    let mut world = SimWorld::new(Vec3::new(0.0, 0.0, -9.81), 1.0 / 240.0, PhysicsParams::default());
    let spec: RobotSpec = serde_yaml::from_str("{name: arm, urdf: wrist.urdf}")?;
    world.add_robot(&spec, Arc::new(parse_urdf(WRIST)?), "robots[0]")?;
    for angle in [-1.0, 0.0, 1.0] {
        world.robot_mut("arm").expect("added above").teleport(&[angle])?;
        world.step()?;
        let w = ft_read(&world, "arm", "wrist")?;
        println!(
            "wrist at {angle:+.1} rad: |F| = {:.3} N, F = {:?}, T = {:?}",
            w.force.norm(),
            w.force,
            w.torque
        );
    }
    Ok(())
}
