//! Screens joint targets against position, velocity, workspace and
//! self-collision limits, then runs the same targets through a guard.

use contact_bridge::math::{Pose, Vec3};
use contact_bridge::safety::{check_target, Guard, GuardMode, SafetyConfig, SafetyLimits, WorkspaceEntry};
use contact_bridge::scene::{assets_dir, parse_urdf};

fn main() -> anyhow::Result<()> {
    let model = parse_urdf(&std::fs::read_to_string(assets_dir().join("six_dof_arm.urdf"))?)?;
    let mut cfg = SafetyConfig::new("arm");
    cfg.workspace.push(WorkspaceEntry {
        link: "tool".into(),
        min: Vec3::new(-0.7, -0.7, 0.05),
        max: Vec3::new(0.7, 0.7, 1.0),
    });
    cfg.min_self_distance = Some(0.01);
    let limits = SafetyLimits::from_config(&model, &cfg)?;

    let current = vec![0.0, 0.5, 1.2, 0.0, 0.6, 0.0];
    let targets = [
        ("small step", vec![0.01, 0.51, 1.19, 0.0, 0.6, 0.0]),
        ("too fast", vec![0.5, 0.5, 1.2, 0.0, 0.6, 0.0]),
        ("past a joint limit", vec![0.0, 0.5, 1.2, 0.0, 0.6, 9.0]),
        ("not a number", vec![0.0, f64::NAN, 1.2, 0.0, 0.6, 0.0]),
    ];
    for (label, q) in &targets {
        let report = check_target(q, &current, &limits, &model, &Pose::IDENTITY)?;
        println!("{label}: {:?}", report.verdict);
        for v in &report.violations {
            println!("    {:?} {} = {:.3} (bound {:.3})", v.kind, v.subject, v.value, v.bound);
        }
    }

    // the guard forwards safe targets and holds the last safe one otherwise
    let mut guard = Guard::new(limits, GuardMode::Hold, Pose::IDENTITY, current);
    for (label, q) in &targets {
        let out = guard.forward(&model, q)?;
        println!("guard on {label}: forwards {:?}", out.command);
    }
    Ok(())
}
