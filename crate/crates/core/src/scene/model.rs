//! Articulated fixed-base robot description.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::shape::Shape;
use crate::math::{Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointType {
    pub fn as_str(self) -> &'static str {
        match self {
            JointType::Revolute => "revolute",
            JointType::Prismatic => "prismatic",
            JointType::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub lower: f64,
    pub upper: f64,
    pub velocity: f64,
    pub effort: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointType,
    pub parent: usize,
    pub child: usize,
    /// Child frame in the parent link frame at zero displacement.
    pub origin: Pose,
    /// Unit axis in the joint frame.
    pub axis: Vec3,
    /// Present on revolute and prismatic joints.
    pub limits: Option<JointLimits>,
}

impl Joint {
    pub fn is_actuated(&self) -> bool {
        self.kind != JointType::Fixed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionGeom {
    pub shape: Shape,
    pub origin: Pose,
}

/// Sphere used for self-collision checks, in the link frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSphere {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub parent_joint: Option<usize>,
    pub collisions: Vec<CollisionGeom>,
    pub mass: f64,
    /// Center of mass in the link frame.
    pub com: Vec3,
    pub inertia_diag: Vec3,
    pub spheres: Vec<LinkSphere>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub root: usize,
    /// Actuated joint indices in document order; defines joint-vector layout.
    pub actuated: Vec<usize>,
    /// Joint indices ordered parent before child.
    pub topo_order: Vec<usize>,
}

impl RobotModel {
    pub fn ndof(&self) -> usize {
        self.actuated.len()
    }

    pub fn joint_names(&self) -> Vec<String> {
        self.actuated.iter().map(|&j| self.joints[j].name.clone()).collect()
    }

    pub fn link_names(&self) -> Vec<String> {
        self.links.iter().map(|l| l.name.clone()).collect()
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Position of joint `joint` in the joint vector, if actuated.
    pub fn dof_index(&self, joint: usize) -> Option<usize> {
        self.actuated.iter().position(|&j| j == joint)
    }

    /// Limits of every actuated joint, in joint-vector order.
    pub fn limits(&self) -> Vec<JointLimits> {
        self.actuated
            .iter()
            .map(|&j| self.joints[j].limits.expect("actuated joints carry limits"))
            .collect()
    }

    pub fn clamp_to_limits(&self, q: &mut [f64]) -> usize {
        let mut clamped = 0;
        for (qi, lim) in q.iter_mut().zip(self.limits()) {
            let c = qi.clamp(lim.lower, lim.upper);
            if c != *qi {
                clamped += 1;
                *qi = c;
            }
        }
        clamped
    }

    /// A zero configuration moved inside the limits.
    pub fn neutral_q(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.ndof()];
        self.clamp_to_limits(&mut q);
        q
    }

    pub fn parent_link(&self, link: usize) -> Option<usize> {
        self.links[link].parent_joint.map(|j| self.joints[j].parent)
    }

    /// Links connected directly by a joint (in either direction).
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.parent_link(a) == Some(b) || self.parent_link(b) == Some(a)
    }

    /// True when `ancestor` lies on the path from the root to `link` (inclusive).
    pub fn is_ancestor_or_self(&self, ancestor: usize, link: usize) -> bool {
        let mut cur = Some(link);
        while let Some(l) = cur {
            if l == ancestor {
                return true;
            }
            cur = self.parent_link(l);
        }
        false
    }

    /// Links on the child side of `joint`.
    pub fn distal_links(&self, joint: usize) -> Vec<usize> {
        let child = self.joints[joint].child;
        (0..self.links.len())
            .filter(|&l| self.is_ancestor_or_self(child, l))
            .collect()
    }

    /// Joints between the root and `link`, root first.
    pub fn chain_to(&self, link: usize) -> Vec<usize> {
        let mut chain = Vec::new();
        let mut cur = link;
        while let Some(j) = self.links[cur].parent_joint {
            chain.push(j);
            cur = self.joints[j].parent;
        }
        chain.reverse();
        chain
    }

    /// Name of a leaf link reached by following first children from the root.
    pub fn default_end_effector(&self) -> usize {
        let mut children: HashMap<usize, Vec<usize>> = HashMap::new();
        for j in &self.joints {
            children.entry(j.parent).or_default().push(j.child);
        }
        let mut cur = self.root;
        while let Some(c) = children.get(&cur).and_then(|c| c.first()) {
            cur = *c;
        }
        cur
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }
}
