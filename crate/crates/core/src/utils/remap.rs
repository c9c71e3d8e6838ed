//! Joint-state remapping for hardware drivers.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::exec::{Node, NodeError};
use crate::bus::{Float64ArrayMsg, JointStateMsg, NodeHandle, Payload, Subscription};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RemapError {
    #[error("joint state has no joint(s) {}", .0.join(", "))]
    MissingJoints(Vec<String>),
    #[error("`{first}` and `{second}` both map to `{target}`")]
    Collision {
        first: String,
        second: String,
        target: String,
    },
}

/// Positions of `js` in the order given by `order`.
pub fn remap_joint_state_to_floatarray(js: &JointStateMsg, order: &[String]) -> Result<Float64ArrayMsg, RemapError> {
    let index: HashMap<&str, usize> = js.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let missing: Vec<String> = order
        .iter()
        .filter(|n| !index.contains_key(n.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(RemapError::MissingJoints(missing));
    }
    Ok(Float64ArrayMsg::new(
        order.iter().map(|n| js.positions[index[n.as_str()]]).collect(),
    ))
}

/// Renames joints through `map`; unmapped names pass through unchanged.
pub fn remap_joint_state(js: &JointStateMsg, map: &BTreeMap<String, String>) -> Result<JointStateMsg, RemapError> {
    let mut owner: HashMap<&str, &str> = HashMap::new();
    let mut names = Vec::with_capacity(js.names.len());
    for n in &js.names {
        let target = map.get(n).unwrap_or(n);
        if let Some(first) = owner.insert(target, n) {
            return Err(RemapError::Collision {
                first: first.to_string(),
                second: n.clone(),
                target: target.clone(),
            });
        }
        names.push(target.clone());
    }
    Ok(JointStateMsg { names, ..js.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RemapConfig {
    /// Joint state to a bare position array in `order`.
    ToFloatArray {
        input: String,
        output: String,
        order: Vec<String>,
    },
    /// Joint state with renamed joints.
    Rename {
        input: String,
        output: String,
        map: BTreeMap<String, String>,
    },
}

/// Republishes every joint state on `input` in remapped form on `output`.
pub struct RemapNode {
    cfg: RemapConfig,
    node: NodeHandle,
    input: Subscription,
}

impl RemapNode {
    pub fn new(node: NodeHandle, cfg: RemapConfig) -> Result<Self, NodeError> {
        let (input, output) = match &cfg {
            RemapConfig::ToFloatArray { input, output, .. } | RemapConfig::Rename { input, output, .. } => {
                (input.clone(), output.clone())
            }
        };
        let input = node.subscribe(&input);
        node.advertise(&output)?;
        Ok(Self { cfg, node, input })
    }
}

impl Node for RemapNode {
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
            let (output, payload) = match &self.cfg {
                RemapConfig::ToFloatArray { output, order, .. } => (
                    output,
                    remap_joint_state_to_floatarray(js, order).map(Payload::Float64Array),
                ),
                RemapConfig::Rename { output, map, .. } => {
                    (output, remap_joint_state(js, map).map(Payload::JointState))
                }
            };
            match payload {
                Ok(p) => self.node.send(output, env.stamp_ns, p)?,
                Err(e) => log::warn!("{}: {e}", self.node.name()),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::Bus;

    fn js() -> JointStateMsg {
        JointStateMsg::from_positions(vec!["a".into(), "b".into()], vec![1.0, 2.0])
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn float_array_order() {
        assert_eq!(
            remap_joint_state_to_floatarray(&js(), &names(&["b", "a"]))
                .unwrap()
                .data,
            vec![2.0, 1.0]
        );
        assert_eq!(
            remap_joint_state_to_floatarray(&js(), &names(&["a", "b"]))
                .unwrap()
                .data,
            vec![1.0, 2.0]
        );
        let err = remap_joint_state_to_floatarray(&js(), &names(&["a", "c"])).unwrap_err();
        assert_eq!(err, RemapError::MissingJoints(names(&["c"])));
        assert!(err.to_string().contains('c'));
    }

    #[test]
    fn rename() {
        assert_eq!(remap_joint_state(&js(), &BTreeMap::new()).unwrap(), js());
        let m = BTreeMap::from([("a".to_string(), "joint_1".to_string())]);
        let out = remap_joint_state(&js(), &m).unwrap();
        assert_eq!(out.names, names(&["joint_1", "b"]));
        assert_eq!(out.positions, js().positions);
        let m = BTreeMap::from([("a".to_string(), "x".to_string()), ("b".to_string(), "x".to_string())]);
        assert!(matches!(
            remap_joint_state(&js(), &m),
            Err(RemapError::Collision { .. })
        ));
        // renaming onto a name that is also passed through collides too
        let m = BTreeMap::from([("a".to_string(), "b".to_string())]);
        assert!(remap_joint_state(&js(), &m).is_err());
    }

    #[test]
    fn node_republishes() {
        let bus = Bus::new();
        let cfg: RemapConfig = serde_yaml::from_str(
            "{kind: to_float_array, input: rpbi/arm/joint_states, output: hw/arm/cmd, order: [b, a]}",
        )
        .unwrap();
        let mut n = RemapNode::new(bus.node("remap"), cfg).unwrap();
        let out = bus.node("driver").subscribe("hw/arm/cmd");
        bus.node("sim")
            .send("rpbi/arm/joint_states", 7, Payload::JointState(js()))
            .unwrap();
        n.poll(0).unwrap();
        let env = out.try_recv().unwrap();
        assert_eq!(env.stamp_ns, 7);
        assert_eq!(env.payload, Payload::Float64Array(Float64ArrayMsg::new(vec![2.0, 1.0])));
    }
}
