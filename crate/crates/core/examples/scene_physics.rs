//! Loads a scene file, lists what it contains and lets the boxes settle.

use contact_bridge::dynamics::SimWorld;
use contact_bridge::scene::{assets_dir, SceneFile};

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| assets_dir().join("pushing_scene.yaml"));
    let scene = SceneFile::load(&path)?;
    let mut world = SimWorld::from_scene(&scene)?;

    for r in world.robots() {
        println!("robot {} with joints {:?}", r.name, r.model.joint_names());
    }
    for b in world.bodies() {
        let kind = if b.is_dynamic() { "dynamic" } else { "fixed" };
        println!("body {:<12} {kind:<8} at {:?}", b.name, b.state.pose.translation);
    }

    // one simulated second
    for _ in 0..240 {
        world.step()?;
    }
    println!(
        "after {:.3} s, {} contact points",
        world.sim_time_ns() as f64 * 1e-9,
        world.contacts().len()
    );
    for b in world.bodies().iter().filter(|b| b.is_dynamic()) {
        let p = b.state.pose.translation;
        println!(
            "{:<12} z = {:.4} m, |v| = {:.2e} m/s",
            b.name,
            p.z,
            b.state.twist.linear.norm()
        );
    }
    Ok(())
}
