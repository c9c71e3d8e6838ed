//! Scripted demonstrations. Each launches a bundled profile headless, drives
//! it through the bus the way an operator would, and checks the outcome.

use std::fmt;

use serde_json::json;
use thiserror::Error;

use super::profile::{LaunchProfile, ProfileError};
use super::sim::{ft_topic, tf_topic};
use super::system::{LaunchError, LaunchOptions, RunError, System, MPC_ITERATION_TOPIC};
use crate::bus::{BusError, Float64ArrayMsg, NodeHandle, Payload, Subscription};
use crate::math::{Quat, Vec3};
use crate::scene::assets_dir;
use crate::teleop::isometric_inverse;
use crate::teleop::node::AXES_TOPIC;
use crate::utils::exec::{Node, NodeError, RateTimer};
use crate::utils::mpc::STEP_SERVICE;

pub const DEMOS: [&str; 3] = ["interaction", "pushing", "mpc"];

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("unknown demo `{0}` (choose from interaction, pushing, mpc)")]
    Unknown(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Launch(#[from] LaunchError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error("{0}")]
    Script(String),
}

/// Result of a demo run: a pass flag plus the numbers behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub name: &'static str,
    pub passed: bool,
    pub metrics: Vec<(&'static str, f64)>,
}

impl DemoReport {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }
}

impl fmt::Display for DemoReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, if self.passed { "PASS" } else { "FAIL" })?;
        for (k, v) in &self.metrics {
            write!(f, " {k}={v:.4}")?;
        }
        Ok(())
    }
}

pub fn run_demo(name: &str) -> Result<DemoReport, DemoError> {
    match name {
        "interaction" => demo_interaction(),
        "pushing" => demo_pushing(),
        "mpc" => demo_mpc_step(3),
        other => Err(DemoError::Unknown(other.to_string())),
    }
}

fn launch(profile: &str) -> Result<System, DemoError> {
    let p = LaunchProfile::load(assets_dir().join(profile))?;
    Ok(System::launch(&p, LaunchOptions::headless())?)
}

/// Paddle pointing straight down (tool +Z along world −Z), its face normal
/// (tool +X) along world +Y.
pub fn paddle_down() -> Quat {
    Quat::from_matrix(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
}

/// Paddle tip in the tool frame.
pub const PADDLE_TIP: Vec3 = Vec3::new(0.0, 0.0, 0.08);

/// Top face of the interaction scene's fixed block.
const BLOCK_TOP: Vec3 = Vec3::new(0.5, 0.0, 0.1);

fn move_tip(sys: &System, tip: Vec3) -> Result<(), DemoError> {
    let req = json!({
        "pose": {"position": tip.to_array(), "orientation": quat_wxyz(paddle_down())},
        "link": "tool",
        "offset": PADDLE_TIP.to_array(),
    });
    sys.bus()
        .call("rpbi/arm/move_to_eef_state", req)
        .map_err(|e| DemoError::Script(format!("move_to_eef_state: {e}")))?;
    Ok(())
}

fn quat_wxyz(q: Quat) -> [f64; 4] {
    [q.w, q.x, q.y, q.z]
}

/// Largest force magnitude and mean vertical force over the messages seen.
fn force_stats(sub: &Subscription) -> (f64, f64, usize) {
    let mut max = 0.0f64;
    let (mut fz, mut n) = (0.0, 0usize);
    for env in sub.drain() {
        if let Payload::Wrench(w) = env.payload {
            max = max.max(w.wrench.force.norm());
            fz += w.wrench.force.z;
            n += 1;
        }
    }
    (max, if n > 0 { fz / n as f64 } else { 0.0 }, n)
}

/// Hovers the paddle tip 3 cm above a fixed block, then presses it 1 mm in.
/// Passes when the wrist sensor reads under 0.5 N while free and over 5 N
/// vertically while pressing.
pub fn demo_interaction() -> Result<DemoReport, DemoError> {
    let mut sys = launch("interaction.yaml")?;
    let ft = sys
        .bus()
        .node("demo")
        .subscribe_with_depth(&ft_topic("arm", "tool_joint"), 4096);

    move_tip(&sys, BLOCK_TOP + Vec3::new(0.0, 0.0, 0.03))?;
    sys.run_for(2.0)?;
    ft.drain();
    sys.run_for(0.5)?;
    let (free, _, n_free) = force_stats(&ft);

    move_tip(&sys, BLOCK_TOP - Vec3::new(0.0, 0.0, 0.001))?;
    sys.run_for(1.0)?;
    ft.drain();
    sys.run_for(0.5)?;
    let (_, fz, n_press) = force_stats(&ft);
    sys.shutdown()?;

    Ok(DemoReport {
        name: "interaction",
        passed: n_free > 0 && n_press > 0 && free < 0.5 && fz.abs() > 5.0,
        metrics: vec![("free_force_n", free), ("pressing_fz_n", fz)],
    })
}

/// Phase of the scripted pushing operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PushPhase {
    Approach,
    Push { dir: Vec3 },
    Retreat { dir: Vec3, until_ns: u64 },
    Done,
}

/// Closed-loop stand-in for a human at the isometric input device: reads the
/// paddle and box transforms and publishes raw axes that push the box onto
/// the goal.
pub struct ScriptedPusher {
    node: NodeHandle,
    tool: Subscription,
    target: Subscription,
    timer: RateTimer,
    goal: Vec3,
    vmax: f64,
    tool_pos: Option<Vec3>,
    box_pos: Option<Vec3>,
    phase: PushPhase,
}

/// Tool-origin height that keeps the paddle 5 mm above the table.
const PUSH_HEIGHT: f64 = 0.085;
/// Distance from the box centre to the paddle origin while in contact.
const CONTACT_OFFSET: f64 = 0.025 + 0.01;
const STANDOFF: f64 = 0.03;
const GOAL_TOLERANCE: f64 = 0.003;

impl ScriptedPusher {
    pub fn new(node: NodeHandle, target: &str, goal: Vec3, vmax: f64) -> Result<Self, NodeError> {
        node.advertise(AXES_TOPIC)?;
        Ok(Self {
            tool: node.subscribe(&tf_topic("arm/tool")),
            target: node.subscribe(&tf_topic(target)),
            timer: RateTimer::from_hz(50.0),
            node,
            goal,
            vmax,
            tool_pos: None,
            box_pos: None,
            phase: PushPhase::Approach,
        })
    }

    pub fn phase(&self) -> PushPhase {
        self.phase
    }

    fn velocity(&mut self, now_ns: u64, tool: Vec3, obj: Vec3) -> Vec3 {
        let flat = |v: Vec3| Vec3::new(v.x, v.y, 0.0);
        let z_err = PUSH_HEIGHT - tool.z;
        match self.phase {
            PushPhase::Approach => {
                let dir = flat(self.goal - obj)
                    .try_normalize()
                    .unwrap_or(Vec3::new(0.0, 1.0, 0.0));
                let waypoint = obj - dir * (CONTACT_OFFSET + STANDOFF);
                let err = flat(waypoint - tool) + Vec3::new(0.0, 0.0, z_err);
                if err.norm() < 0.004 {
                    self.phase = PushPhase::Push { dir };
                }
                err * 3.0
            }
            PushPhase::Push { dir } => {
                // progress is measured along the line fixed at first contact;
                // sideways drift of the box cannot be undone by a flat paddle
                let remaining = flat(self.goal - obj).dot(dir);
                if remaining < GOAL_TOLERANCE {
                    self.phase = PushPhase::Retreat {
                        dir,
                        until_ns: now_ns + 500_000_000,
                    };
                    return Vec3::ZERO;
                }
                // slow down near the goal so the box does not overshoot
                let speed = (1.5 * remaining).clamp(0.01, 0.06);
                let perp = Vec3::new(-dir.y, dir.x, 0.0);
                let lateral = perp * (perp.dot(flat(self.goal - tool)) * 4.0);
                dir * speed + lateral + Vec3::new(0.0, 0.0, 3.0 * z_err)
            }
            PushPhase::Retreat { dir, until_ns } => {
                if now_ns >= until_ns {
                    self.phase = PushPhase::Done;
                    return Vec3::ZERO;
                }
                -dir * 0.03
            }
            PushPhase::Done => Vec3::ZERO,
        }
    }
}

impl Node for ScriptedPusher {
    fn name(&self) -> &str {
        self.node.name()
    }

    fn poll(&mut self, now_ns: u64) -> Result<(), NodeError> {
        if let Some(env) = self.tool.drain().pop() {
            if let Payload::Transform(t) = env.payload {
                self.tool_pos = Some(t.pose.translation);
            }
        }
        if let Some(env) = self.target.drain().pop() {
            if let Payload::Transform(t) = env.payload {
                self.box_pos = Some(t.pose.translation);
            }
        }
        if !self.timer.due(now_ns) {
            return Ok(());
        }
        let (Some(tool), Some(obj)) = (self.tool_pos, self.box_pos) else {
            return Ok(());
        };
        let before = self.phase;
        let v = self.velocity(now_ns, tool, obj);
        if self.phase != before {
            log::debug!(
                "pusher: {:?} -> {:?} at t={:.2} s, tool {:?}, box {:?}",
                before,
                self.phase,
                now_ns as f64 * 1e-9,
                tool,
                obj
            );
        }
        let axes = isometric_inverse(&v.to_array(), self.vmax);
        self.node.send(
            AXES_TOPIC,
            now_ns,
            Payload::Float64Array(Float64ArrayMsg::new(axes.as_slice().to_vec())),
        )?;
        Ok(())
    }
}

pub const PUSH_GOAL: Vec3 = Vec3::new(0.5, 0.15, 0.025);

/// Pushes the target box onto the goal through operator, Cartesian teleop and
/// safety nodes. Passes when the box ends within 2 cm of the goal.
pub fn demo_pushing() -> Result<DemoReport, DemoError> {
    let mut sys = launch("pushing.yaml")?;
    let pusher = ScriptedPusher::new(sys.bus().node("pusher"), "target", PUSH_GOAL, 0.1)?;
    let done = std::sync::Arc::new(std::sync::atomic::AtomicBool::new(false));
    sys.push_front(Box::new(WatchPusher {
        inner: pusher,
        done: done.clone(),
    }));
    let t0 = sys.sim_time_ns();
    let mut elapsed = 0.0;
    while !done.load(std::sync::atomic::Ordering::Relaxed) && elapsed < 30.0 {
        sys.run_for(0.25)?;
        elapsed = (sys.sim_time_ns() - t0) as f64 * 1e-9;
    }
    sys.run_for(1.0)?;
    let p = super::sim::lock(sys.world())
        .body("target")
        .map(|b| b.state.pose.translation)
        .ok_or_else(|| DemoError::Script("target box vanished".into()))?;
    sys.shutdown()?;
    let err = Vec3::new(p.x - PUSH_GOAL.x, p.y - PUSH_GOAL.y, 0.0).norm();
    Ok(DemoReport {
        name: "pushing",
        passed: err <= 0.02,
        metrics: vec![
            ("goal_error_m", err),
            ("time_s", elapsed),
            ("box_x", p.x),
            ("box_y", p.y),
        ],
    })
}

struct WatchPusher {
    inner: ScriptedPusher,
    done: std::sync::Arc<std::sync::atomic::AtomicBool>,
}

impl Node for WatchPusher {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn poll(&mut self, now_ns: u64) -> Result<(), NodeError> {
        self.inner.poll(now_ns)?;
        if self.inner.phase() == PushPhase::Done {
            self.done.store(true, std::sync::atomic::Ordering::Relaxed);
        }
        Ok(())
    }
}

/// Calls the MPC step service `n` times on a stopped controller and checks
/// that exactly `n` iterations ran and were published.
pub fn demo_mpc_step(n: u64) -> Result<DemoReport, DemoError> {
    let mut sys = launch("minimal.yaml")?;
    let iterations = sys.bus().node("demo").subscribe(MPC_ITERATION_TOPIC);
    for _ in 0..n {
        sys.bus().call(STEP_SERVICE, json!({}))?;
        sys.cycle()?;
    }
    sys.run_for(0.5)?;
    let published: Vec<f64> = iterations
        .drain()
        .into_iter()
        .filter_map(|e| match e.payload {
            Payload::Float64Array(a) => a.data.first().copied(),
            _ => None,
        })
        .collect();
    let count = sys.mpc().map_or(0, |m| m.state().iterations);
    sys.shutdown()?;
    let last = published.last().copied().unwrap_or(0.0);
    Ok(DemoReport {
        name: "mpc",
        passed: count == n && published.len() as u64 == n && last == n as f64,
        metrics: vec![("iterations", count as f64), ("last_published", last)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paddle_orientation() {
        let q = paddle_down();
        assert!((q.rotate(Vec3::new(0.0, 0.0, 1.0)) - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!((q.rotate(Vec3::new(1.0, 0.0, 0.0)) - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn mpc_demo_counts_three() {
        let r = demo_mpc_step(3).unwrap();
        assert!(r.passed, "{r}");
    }

    #[test]
    fn unknown_demo() {
        assert!(matches!(run_demo("juggling"), Err(DemoError::Unknown(_))));
    }
}
