//! Target validation between command sources and the robot: joint position
//! and velocity limits, link workspace boxes and self-collision spheres.

pub mod node;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::link_poses;
use crate::math::{Pose, Vec3};
use crate::scene::RobotModel;

pub use node::SafeRobot;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SafetyError {
    #[error("expected {expected} joint values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("safety config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardMode {
    /// Rejected targets are dropped and the last safe command is repeated.
    #[default]
    Hold,
    /// Rejected targets are clamped into the joint limits first.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointOverride {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub velocity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceEntry {
    pub link: String,
    pub min: Vec3,
    pub max: Vec3,
}

/// YAML form of a guard configuration. Joint limits default to the URDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyConfig {
    pub robot: String,
    #[serde(default = "default_dt_ref")]
    pub dt_ref: f64,
    #[serde(default)]
    pub mode: GuardMode,
    #[serde(default)]
    pub joints: BTreeMap<String, JointOverride>,
    #[serde(default)]
    pub workspace: Vec<WorkspaceEntry>,
    /// Smallest allowed distance between non-adjacent link sphere sets.
    #[serde(default)]
    pub min_self_distance: Option<f64>,
}

fn default_dt_ref() -> f64 {
    0.02
}

impl SafetyConfig {
    pub fn new(robot: &str) -> Self {
        Self {
            robot: robot.into(),
            dt_ref: default_dt_ref(),
            mode: GuardMode::Hold,
            joints: BTreeMap::new(),
            workspace: Vec::new(),
            min_self_distance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointBound {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkspaceBox {
    pub link: usize,
    pub name: String,
    pub min: Vec3,
    pub max: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyLimits {
    pub joints: Vec<JointBound>,
    pub workspace: Vec<WorkspaceBox>,
    pub min_self_distance: Option<f64>,
    pub dt_ref: f64,
}

impl SafetyLimits {
    /// Resolves `cfg` against `model`.
    pub fn from_config(model: &RobotModel, cfg: &SafetyConfig) -> Result<Self, SafetyError> {
        let bad = |m: String| Err(SafetyError::Config(m));
        if !(cfg.dt_ref > 0.0 && cfg.dt_ref.is_finite()) {
            return bad(format!("dt_ref must be positive, got {}", cfg.dt_ref));
        }
        let names = model.joint_names();
        for name in cfg.joints.keys() {
            if !names.contains(name) {
                return bad(format!("no actuated joint `{name}`"));
            }
        }
        let mut joints = Vec::with_capacity(names.len());
        for (name, lim) in names.iter().zip(model.limits()) {
            let o = cfg.joints.get(name);
            let lower = o.and_then(|o| o.lower).unwrap_or(lim.lower);
            let upper = o.and_then(|o| o.upper).unwrap_or(lim.upper);
            let velocity = o.and_then(|o| o.velocity).unwrap_or(lim.velocity);
            if !(lower <= upper) {
                return bad(format!("joint `{name}`: lower {lower} exceeds upper {upper}"));
            }
            if !(velocity > 0.0) {
                return bad(format!("joint `{name}`: velocity limit must be positive"));
            }
            joints.push(JointBound {
                name: name.clone(),
                lower,
                upper,
                velocity,
            });
        }
        let mut workspace = Vec::new();
        for w in &cfg.workspace {
            let Some(link) = model.link_index(&w.link) else {
                return bad(format!("workspace: no link `{}`", w.link));
            };
            if !(w.min.x <= w.max.x && w.min.y <= w.max.y && w.min.z <= w.max.z) {
                return bad(format!("workspace `{}`: min exceeds max", w.link));
            }
            workspace.push(WorkspaceBox {
                link,
                name: w.link.clone(),
                min: w.min,
                max: w.max,
            });
        }
        if cfg.min_self_distance.is_some() && model.links.iter().all(|l| l.spheres.is_empty()) {
            return bad(format!("robot `{}` declares no self-collision spheres", model.name));
        }
        Ok(Self {
            joints,
            workspace,
            min_self_distance: cfg.min_self_distance,
            dt_ref: cfg.dt_ref,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Position,
    Velocity,
    Workspace,
    SelfCollision,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Joint name, `link.axis` for workspace, or `link_a|link_b`.
    pub subject: String,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyReport {
    pub verdict: Verdict,
    pub violations: Vec<Violation>,
}

impl SafetyReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            verdict: if violations.is_empty() {
                Verdict::Pass
            } else {
                Verdict::Reject
            },
            violations,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Smallest surface distance between spheres of non-adjacent links, with the
/// link pair. `None` when fewer than two links carry spheres.
pub fn self_collision_distance(model: &RobotModel, base: &Pose, q: &[f64]) -> Option<(f64, usize, usize)> {
    let poses = link_poses(model, base, q);
    let centers: Vec<Vec<(Vec3, f64)>> = model
        .links
        .iter()
        .zip(&poses)
        .map(|(l, p)| {
            l.spheres
                .iter()
                .map(|s| (p.transform_point(s.center), s.radius))
                .collect()
        })
        .collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for a in 0..centers.len() {
        for b in a + 1..centers.len() {
            if model.adjacent(a, b) {
                continue;
            }
            for &(ca, ra) in &centers[a] {
                for &(cb, rb) in &centers[b] {
                    let d = (ca - cb).norm() - ra - rb;
                    // NaN must not be skipped by the comparison
                    if best.is_none_or(|(m, _, _)| !(d >= m)) {
                        best = Some((d, a, b));
                    }
                }
            }
        }
    }
    best
}

/// Runs every check and collects all violations.
pub fn check_target(
    q_target: &[f64],
    q_current: &[f64],
    limits: &SafetyLimits,
    model: &RobotModel,
    base: &Pose,
) -> Result<SafetyReport, SafetyError> {
    let n = limits.joints.len();
    for got in [q_target.len(), q_current.len()] {
        if got != n {
            return Err(SafetyError::DimensionMismatch { expected: n, got });
        }
    }
    let mut v = Vec::new();
    for (j, &q) in limits.joints.iter().zip(q_target) {
        if !(q >= j.lower) {
            v.push(Violation {
                kind: ViolationKind::Position,
                subject: j.name.clone(),
                value: q,
                bound: j.lower,
            });
        } else if !(q <= j.upper) {
            v.push(Violation {
                kind: ViolationKind::Position,
                subject: j.name.clone(),
                value: q,
                bound: j.upper,
            });
        }
    }
    for ((j, &qt), &qc) in limits.joints.iter().zip(q_target).zip(q_current) {
        let speed = (qt - qc).abs() / limits.dt_ref;
        if !(speed <= j.velocity) {
            v.push(Violation {
                kind: ViolationKind::Velocity,
                subject: j.name.clone(),
                value: speed,
                bound: j.velocity,
            });
        }
    }
    let needs_fk = !limits.workspace.is_empty() || limits.min_self_distance.is_some();
    if needs_fk {
        let poses = link_poses(model, base, q_target);
        for w in &limits.workspace {
            let p = poses[w.link].translation;
            for (axis, value, lo, hi) in [
                ("x", p.x, w.min.x, w.max.x),
                ("y", p.y, w.min.y, w.max.y),
                ("z", p.z, w.min.z, w.max.z),
            ] {
                if !(value >= lo && value <= hi) {
                    v.push(Violation {
                        kind: ViolationKind::Workspace,
                        subject: format!("{}.{axis}", w.name),
                        value,
                        bound: if value < lo { lo } else { hi },
                    });
                }
            }
        }
        if let Some(min) = limits.min_self_distance {
            if let Some((d, a, b)) = self_collision_distance(model, base, q_target) {
                if !(d >= min) {
                    v.push(Violation {
                        kind: ViolationKind::SelfCollision,
                        subject: format!("{}|{}", model.links[a].name, model.links[b].name),
                        value: d,
                        bound: min,
                    });
                }
            }
        }
    }
    Ok(SafetyReport::from_violations(v))
}

/// Result of offering one target to the guard.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardOutput {
    /// What to command now: the target, its clamped form, the held previous
    /// command, or nothing before the first safe target.
    pub command: Option<Vec<f64>>,
    pub report: SafetyReport,
}

/// Stateful filter applying [`check_target`] to a stream of targets.
#[derive(Debug, Clone)]
pub struct Guard {
    pub limits: SafetyLimits,
    pub mode: GuardMode,
    base: Pose,
    reference: Vec<f64>,
    last_safe: Option<Vec<f64>>,
}

impl Guard {
    /// `q_current` seeds the velocity check until the first command is forwarded.
    pub fn new(limits: SafetyLimits, mode: GuardMode, base: Pose, q_current: Vec<f64>) -> Self {
        Self {
            limits,
            mode,
            base,
            reference: q_current,
            last_safe: None,
        }
    }

    pub fn last_safe(&self) -> Option<&[f64]> {
        self.last_safe.as_deref()
    }

    pub fn check(&self, model: &RobotModel, q_target: &[f64]) -> Result<SafetyReport, SafetyError> {
        check_target(q_target, &self.reference, &self.limits, model, &self.base)
    }

    pub fn forward(&mut self, model: &RobotModel, q_target: &[f64]) -> Result<GuardOutput, SafetyError> {
        let report = self.check(model, q_target)?;
        let accepted = if report.passed() {
            Some(q_target.to_vec())
        } else if self.mode == GuardMode::Clamp {
            let clamped: Vec<f64> = self
                .limits
                .joints
                .iter()
                .zip(q_target)
                .zip(&self.reference)
                .map(|((j, &t), &r)| {
                    let step = j.velocity * self.limits.dt_ref;
                    let t = if t.is_nan() { r } else { t };
                    t.clamp(j.lower, j.upper).clamp(r - step, r + step)
                })
                .collect();
            self.check(model, &clamped)?.passed().then_some(clamped)
        } else {
            None
        };
        if let Some(q) = &accepted {
            self.reference = q.clone();
            self.last_safe = Some(q.clone());
        }
        Ok(GuardOutput {
            command: accepted.or_else(|| self.last_safe.clone()),
            report,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{assets_dir, parse_urdf};

    fn two_link() -> RobotModel {
        parse_urdf(&std::fs::read_to_string(assets_dir().join("two_link_arm.urdf")).unwrap()).unwrap()
    }

    fn limits(m: &RobotModel, yaml: &str) -> SafetyLimits {
        let cfg: SafetyConfig = serde_yaml::from_str(yaml).unwrap();
        SafetyLimits::from_config(m, &cfg).unwrap()
    }

    #[test]
    fn clean_target_passes() {
        let m = two_link();
        let l = limits(&m, "{robot: arm, joints: {q1: {lower: -1, upper: 1}}}");
        let r = check_target(&[0.5, 0.2], &[0.49, 0.2], &l, &m, &Pose::IDENTITY).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn every_violation_is_reported() {
        let m = two_link();
        let l = limits(
            &m,
            "{robot: arm, dt_ref: 0.02, joints: {q1: {upper: 1, velocity: 2}},
              workspace: [{link: tool, min: [-2, -2, -1], max: [0.5, 2, 1]}]}",
        );
        let r = check_target(&[1.1, 0.0], &[1.1, 0.0], &l, &m, &Pose::IDENTITY).unwrap();
        assert_eq!(r.verdict, Verdict::Reject);
        assert_eq!(
            r.violations[0],
            Violation {
                kind: ViolationKind::Position,
                subject: "q1".into(),
                value: 1.1,
                bound: 1.0,
            }
        );
        // tool at 0.9·(cos 1.1, sin 1.1): x = 0.408 inside; move it out along x
        let r = check_target(&[11.0, 0.0], &[1.0, 0.0], &l, &m, &Pose::IDENTITY).unwrap();
        let kinds: Vec<_> = r.violations.iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::Position));
        let vel = r.violations.iter().find(|v| v.kind == ViolationKind::Velocity).unwrap();
        assert!((vel.value - 500.0).abs() < 1e-9);
        assert_eq!(vel.bound, 2.0);
        let r = check_target(&[0.0, 0.0], &[0.0, 0.0], &l, &m, &Pose::IDENTITY).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].subject, "tool.x");
        assert!((r.violations[0].value - 0.9).abs() < 1e-12);
    }

    #[test]
    fn sphere_distances() {
        let m = parse_urdf(
            r#"<robot name="pair">
              <link name="a"><self_collision_sphere xyz="0 0 0" radius="0.1"/></link>
              <link name="mid"/>
              <link name="b"><self_collision_sphere xyz="0 0 0" radius="0.1"/></link>
              <joint name="j" type="prismatic"><parent link="a"/><child link="mid"/><axis xyz="1 0 0"/>
                <limit lower="-2" upper="2" velocity="1" effort="1"/></joint>
              <joint name="f" type="fixed"><parent link="mid"/><child link="b"/><origin xyz="1 0 0"/></joint>
            </robot>"#,
        )
        .unwrap();
        let (d, _, _) = self_collision_distance(&m, &Pose::IDENTITY, &[0.0]).unwrap();
        assert!((d - 0.8).abs() < 1e-12);
        let (d, _, _) = self_collision_distance(&m, &Pose::IDENTITY, &[-0.9]).unwrap();
        assert!(d < 0.0);
    }

    #[test]
    fn folded_arm_collides_with_itself() {
        let m = two_link();
        let l = limits(&m, "{robot: arm, min_self_distance: 0.0}");
        let (d, _, _) = self_collision_distance(&m, &Pose::IDENTITY, &[0.0, std::f64::consts::PI]).unwrap();
        // tool folds back to x = 0.1, the base sphere sits at the origin
        assert!(d < 0.0);
        let r = check_target(&[0.0, 3.1], &[0.0, 3.1], &l, &m, &Pose::IDENTITY).unwrap();
        assert!(r.violations.iter().any(|v| v.kind == ViolationKind::SelfCollision));
        let (d, _, _) = self_collision_distance(&m, &Pose::IDENTITY, &[0.0, 0.0]).unwrap();
        assert!(d > 0.0);
    }

    #[test]
    fn config_errors() {
        let m = two_link();
        let cfg: SafetyConfig = serde_yaml::from_str("{robot: arm, joints: {q9: {upper: 1}}}").unwrap();
        assert!(SafetyLimits::from_config(&m, &cfg).is_err());
        let bare = parse_urdf(r#"<robot name="r"><link name="a"/></robot>"#).unwrap();
        let cfg: SafetyConfig = serde_yaml::from_str("{robot: r, min_self_distance: 0.01}").unwrap();
        assert!(SafetyLimits::from_config(&bare, &cfg).is_err());
        let l = limits(&m, "{robot: arm}");
        assert!(matches!(
            check_target(&[0.0], &[0.0, 0.0], &l, &m, &Pose::IDENTITY),
            Err(SafetyError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn hold_policy() {
        let m = two_link();
        let l = limits(&m, "{robot: arm, joints: {q1: {lower: -1, upper: 1}}}");
        let mut g = Guard::new(l, GuardMode::Hold, Pose::IDENTITY, vec![0.0, 0.0]);
        // first target unsafe: nothing to forward yet
        let out = g.forward(&m, &[1.5, 0.0]).unwrap();
        assert_eq!(out.command, None);
        assert_eq!(out.report.verdict, Verdict::Reject);
        let out = g.forward(&m, &[0.01, 0.0]).unwrap();
        assert_eq!(out.command, Some(vec![0.01, 0.0]));
        let out = g.forward(&m, &[1.5, 0.0]).unwrap();
        assert_eq!(out.command, Some(vec![0.01, 0.0]));
        let out = g.forward(&m, &[0.02, 0.01]).unwrap();
        assert_eq!(out.command, Some(vec![0.02, 0.01]));
    }

    #[test]
    fn clamp_mode_limits_position_and_step() {
        let m = two_link();
        let l = limits(
            &m,
            "{robot: arm, dt_ref: 0.1, joints: {q1: {lower: -1, upper: 1, velocity: 1}}}",
        );
        let mut g = Guard::new(l, GuardMode::Clamp, Pose::IDENTITY, vec![0.95, 0.0]);
        let out = g.forward(&m, &[1.5, 0.0]).unwrap();
        assert_eq!(out.report.verdict, Verdict::Reject);
        assert_eq!(out.command, Some(vec![1.0, 0.0]));
        let out = g.forward(&m, &[-1.0, 0.0]).unwrap();
        let q = out.command.unwrap();
        assert!((q[0] - 0.9).abs() < 1e-12);
    }
}
