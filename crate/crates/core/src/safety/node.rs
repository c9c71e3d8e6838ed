//! `safe_robot` node: guards `.../target_joint_state` into
//! `.../commanded_joint_state`, reporting rejections on `.../safety_report`.

use std::sync::Arc;

use super::{Guard, GuardMode, SafetyConfig, SafetyError, SafetyLimits, SafetyReport};
use crate::bus::{JointStateMsg, NodeHandle, Payload, Subscription, TextMsg};
use crate::math::Pose;
use crate::scene::RobotModel;
use crate::utils::exec::{Node, NodeError};

pub struct SafeRobot {
    node: NodeHandle,
    input: Subscription,
    model: Arc<RobotModel>,
    guard: Guard,
    names: Vec<String>,
    command_topic: String,
    report_topic: String,
    reports: u64,
}

impl SafeRobot {
    pub fn new(
        node: NodeHandle,
        cfg: &SafetyConfig,
        model: Arc<RobotModel>,
        base: Pose,
        q_current: Vec<f64>,
    ) -> Result<Self, SafetyError> {
        let limits = SafetyLimits::from_config(&model, cfg)?;
        let robot = &cfg.robot;
        let input = node.subscribe(&format!("rpbi/{robot}/target_joint_state"));
        let command_topic = format!("rpbi/{robot}/commanded_joint_state");
        let report_topic = format!("rpbi/{robot}/safety_report");
        for t in [&command_topic, &report_topic] {
            node.advertise(t).map_err(|e| SafetyError::Config(e.to_string()))?;
        }
        Ok(Self {
            names: model.joint_names(),
            guard: Guard::new(limits, cfg.mode, base, q_current),
            node,
            input,
            model,
            command_topic,
            report_topic,
            reports: 0,
        })
    }

    pub fn mode(&self) -> GuardMode {
        self.guard.mode
    }

    /// Number of rejection reports published so far.
    pub fn reports(&self) -> u64 {
        self.reports
    }

    /// Joint values of `js` in model order, or `None` if a joint is missing.
    fn ordered(&self, js: &JointStateMsg) -> Option<Vec<f64>> {
        self.names.iter().map(|n| js.position(n)).collect()
    }

    fn publish_report(&mut self, stamp: u64, report: &SafetyReport) -> Result<(), NodeError> {
        self.reports += 1;
        let text = serde_json::to_string(report).expect("reports serialize");
        self.node
            .send(&self.report_topic, stamp, Payload::Text(TextMsg { text }))?;
        Ok(())
    }
}

impl Node for SafeRobot {
    fn name(&self) -> &str {
        self.node.name()
    }

    fn poll(&mut self, _now_ns: u64) -> Result<(), NodeError> {
        for env in self.input.drain() {
            let Payload::JointState(js) = &env.payload else {
                log::warn!(
                    "{}: ignoring {} on `{}`",
                    self.node.name(),
                    env.payload.type_name(),
                    env.topic
                );
                continue;
            };
            let Some(q) = self.ordered(js) else {
                log::warn!("{}: target lacks joints of {:?}", self.node.name(), self.names);
                continue;
            };
            let out = self
                .guard
                .forward(&self.model, &q)
                .map_err(|e| NodeError::Failed(e.to_string()))?;
            if !out.report.passed() {
                self.publish_report(env.stamp_ns, &out.report)?;
            }
            if let Some(cmd) = out.command {
                let msg = JointStateMsg::from_positions(self.names.clone(), cmd);
                self.node
                    .send(&self.command_topic, env.stamp_ns, Payload::JointState(msg))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::Bus;
    use crate::scene::{assets_dir, parse_urdf};

    #[test]
    fn forwards_safe_and_reports_unsafe() {
        let bus = Bus::new();
        let model =
            Arc::new(parse_urdf(&std::fs::read_to_string(assets_dir().join("two_link_arm.urdf")).unwrap()).unwrap());
        let cfg: SafetyConfig = serde_yaml::from_str("{robot: arm, joints: {q2: {upper: 0.5}}}").unwrap();
        let mut guard = SafeRobot::new(bus.node("safe_robot"), &cfg, model, Pose::IDENTITY, vec![0.0, 0.0]).unwrap();
        let probe = bus.node("probe");
        let cmds = probe.subscribe("rpbi/arm/commanded_joint_state");
        let reports = probe.subscribe("rpbi/arm/safety_report");
        let src = bus.node("teleop");
        // names out of model order are matched by name
        for (k, q2) in [0.01, 0.9, 0.02].into_iter().enumerate() {
            let js = JointStateMsg::from_positions(vec!["q2".into(), "q1".into()], vec![q2, 0.0]);
            src.send("rpbi/arm/target_joint_state", k as u64, Payload::JointState(js))
                .unwrap();
        }
        guard.poll(0).unwrap();
        let got: Vec<f64> = cmds
            .drain()
            .into_iter()
            .map(|e| match e.payload {
                Payload::JointState(js) => js.positions[1],
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(got, vec![0.01, 0.01, 0.02]);
        let r = reports.drain();
        assert_eq!(r.len(), 1);
        let Payload::Text(t) = &r[0].payload else { panic!() };
        let v: serde_json::Value = serde_json::from_str(&t.text).unwrap();
        assert_eq!(v["verdict"], "reject");
        assert_eq!(v["violations"][0]["subject"], "q2");
    }
}
