//! Parser and writer for the URDF subset used by the simulator.
//!
//! Supported: `<link>` with `<inertial>`, `<collision>` (box, sphere,
//! cylinder, capsule); `<joint>` of type revolute, prismatic or fixed with
//! `<origin>`, `<axis>` and `<limit>`. Cylinders become capsules with the same
//! radius and half-length. `<visual>` elements are ignored.
//!
//! Self-collision geometry uses an extension element inside `<link>`:
//! `<self_collision_sphere xyz="0 0 0.1" radius="0.05"/>`.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::model::*;
use super::shape::Shape;
use crate::math::{Pose, Quat, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UrdfError {
    #[error("XML error: {0}")]
    Xml(String),
    #[error("root element must be <robot>")]
    NotRobot,
    #[error("{element}: missing attribute `{attr}`")]
    MissingAttr { element: String, attr: String },
    #[error("{element}: bad value for `{attr}`: {value}")]
    BadValue {
        element: String,
        attr: String,
        value: String,
    },
    #[error("duplicate {kind} name `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("joint `{joint}` references unknown link `{link}`")]
    UnknownLink { joint: String, link: String },
    #[error("joint `{joint}` has unknown type `{kind}`")]
    UnknownJointType { joint: String, kind: String },
    #[error("joint `{0}` needs a <limit> element")]
    MissingLimit(String),
    #[error("joint `{joint}`: lower limit {lower} exceeds upper limit {upper}")]
    InvertedLimit { joint: String, lower: f64, upper: f64 },
    #[error("joint `{0}` has a zero axis")]
    ZeroAxis(String),
    #[error("kinematic cycle through link `{0}`")]
    Cycle(String),
    #[error("link `{0}` has more than one parent joint")]
    MultipleParents(String),
    #[error("expected exactly one root link, found {0}")]
    RootCount(usize),
    #[error("link `{link}`: unsupported geometry `{geometry}`")]
    UnsupportedGeometry { link: String, geometry: String },
    #[error("link `{link}`: {reason}")]
    BadGeometry { link: String, reason: String },
    #[error("robot has no links")]
    Empty,
}

fn attr<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Result<&'a str, UrdfError> {
    node.attribute(name).ok_or_else(|| UrdfError::MissingAttr {
        element: describe(node),
        attr: name.to_string(),
    })
}

fn describe(node: roxmltree::Node<'_, '_>) -> String {
    match node.attribute("name") {
        Some(n) => format!("<{} name=\"{n}\">", node.tag_name().name()),
        None => format!("<{}>", node.tag_name().name()),
    }
}

fn parse_floats(node: roxmltree::Node<'_, '_>, name: &str, text: &str) -> Result<Vec<f64>, UrdfError> {
    text.split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| UrdfError::BadValue {
            element: describe(node),
            attr: name.to_string(),
            value: text.to_string(),
        })
}

fn parse_vec3(node: roxmltree::Node<'_, '_>, name: &str, default: Vec3) -> Result<Vec3, UrdfError> {
    match node.attribute(name) {
        None => Ok(default),
        Some(text) => {
            let v = parse_floats(node, name, text)?;
            if v.len() != 3 {
                return Err(UrdfError::BadValue {
                    element: describe(node),
                    attr: name.to_string(),
                    value: text.to_string(),
                });
            }
            Ok(Vec3::new(v[0], v[1], v[2]))
        }
    }
}

fn parse_f64(node: roxmltree::Node<'_, '_>, name: &str) -> Result<f64, UrdfError> {
    let text = attr(node, name)?;
    text.trim().parse().map_err(|_| UrdfError::BadValue {
        element: describe(node),
        attr: name.to_string(),
        value: text.to_string(),
    })
}

fn child<'a>(node: roxmltree::Node<'a, 'a>, tag: &str) -> Option<roxmltree::Node<'a, 'a>> {
    node.children().find(|c| c.has_tag_name(tag))
}

fn parse_origin(node: roxmltree::Node<'_, '_>) -> Result<Pose, UrdfError> {
    match child(node, "origin") {
        None => Ok(Pose::IDENTITY),
        Some(o) => {
            let xyz = parse_vec3(o, "xyz", Vec3::ZERO)?;
            let rpy = parse_vec3(o, "rpy", Vec3::ZERO)?;
            Ok(Pose::new(xyz, Quat::from_rpy(rpy.x, rpy.y, rpy.z)))
        }
    }
}

fn parse_geometry(link_name: &str, collision: roxmltree::Node<'_, '_>) -> Result<Shape, UrdfError> {
    let geom = child(collision, "geometry").ok_or_else(|| UrdfError::BadGeometry {
        link: link_name.to_string(),
        reason: "<collision> without <geometry>".into(),
    })?;
    let shape_node = geom
        .children()
        .find(|c| c.is_element())
        .ok_or_else(|| UrdfError::BadGeometry {
            link: link_name.to_string(),
            reason: "empty <geometry>".into(),
        })?;
    let shape = match shape_node.tag_name().name() {
        "box" => {
            let size = parse_vec3(shape_node, "size", Vec3::ZERO)?;
            Shape::Box {
                half_extents: size * 0.5,
            }
        }
        "sphere" => Shape::Sphere {
            radius: parse_f64(shape_node, "radius")?,
        },
        "cylinder" | "capsule" => Shape::Capsule {
            radius: parse_f64(shape_node, "radius")?,
            half_length: parse_f64(shape_node, "length")? * 0.5,
        },
        other => {
            return Err(UrdfError::UnsupportedGeometry {
                link: link_name.to_string(),
                geometry: other.to_string(),
            })
        }
    };
    shape.validate().map_err(|reason| UrdfError::BadGeometry {
        link: link_name.to_string(),
        reason,
    })?;
    Ok(shape)
}

pub fn parse_urdf(text: &str) -> Result<RobotModel, UrdfError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| UrdfError::Xml(e.to_string()))?;
    let robot = doc.root_element();
    if !robot.has_tag_name("robot") {
        return Err(UrdfError::NotRobot);
    }
    let robot_name = robot.attribute("name").unwrap_or("robot").to_string();

    let mut links = Vec::new();
    let mut link_ids: HashMap<String, usize> = HashMap::new();
    for node in robot.children().filter(|c| c.has_tag_name("link")) {
        let name = attr(node, "name")?.to_string();
        if link_ids.contains_key(&name) {
            return Err(UrdfError::Duplicate { kind: "link", name });
        }
        let (mut mass, mut com, mut inertia) = (0.0, Vec3::ZERO, Vec3::ZERO);
        if let Some(inertial) = child(node, "inertial") {
            com = parse_origin(inertial)?.translation;
            if let Some(m) = child(inertial, "mass") {
                mass = parse_f64(m, "value")?;
            }
            if let Some(i) = child(inertial, "inertia") {
                inertia = Vec3::new(parse_f64(i, "ixx")?, parse_f64(i, "iyy")?, parse_f64(i, "izz")?);
            }
            if mass < 0.0 {
                return Err(UrdfError::BadValue {
                    element: describe(node),
                    attr: "mass".into(),
                    value: mass.to_string(),
                });
            }
        }
        let mut collisions = Vec::new();
        for c in node.children().filter(|c| c.has_tag_name("collision")) {
            collisions.push(CollisionGeom {
                shape: parse_geometry(&name, c)?,
                origin: parse_origin(c)?,
            });
        }
        let mut spheres = Vec::new();
        for s in node.children().filter(|c| c.has_tag_name("self_collision_sphere")) {
            let radius = parse_f64(s, "radius")?;
            if radius <= 0.0 {
                return Err(UrdfError::BadGeometry {
                    link: name.clone(),
                    reason: format!("self-collision sphere radius {radius} must be positive"),
                });
            }
            spheres.push(LinkSphere {
                center: parse_vec3(s, "xyz", Vec3::ZERO)?,
                radius,
            });
        }
        link_ids.insert(name.clone(), links.len());
        links.push(Link {
            name,
            parent_joint: None,
            collisions,
            mass,
            com,
            inertia_diag: inertia,
            spheres,
        });
    }
    if links.is_empty() {
        return Err(UrdfError::Empty);
    }

    let mut joints = Vec::new();
    let mut joint_names = std::collections::HashSet::new();
    for node in robot.children().filter(|c| c.has_tag_name("joint")) {
        let name = attr(node, "name")?.to_string();
        if !joint_names.insert(name.clone()) {
            return Err(UrdfError::Duplicate { kind: "joint", name });
        }
        let kind_text = attr(node, "type")?;
        let kind = match kind_text {
            "revolute" => JointType::Revolute,
            "prismatic" => JointType::Prismatic,
            "fixed" => JointType::Fixed,
            other => {
                return Err(UrdfError::UnknownJointType {
                    joint: name,
                    kind: other.to_string(),
                })
            }
        };
        let link_ref = |tag: &str| -> Result<usize, UrdfError> {
            let el = child(node, tag).ok_or_else(|| UrdfError::MissingAttr {
                element: describe(node),
                attr: tag.to_string(),
            })?;
            let link = attr(el, "link")?;
            link_ids.get(link).copied().ok_or_else(|| UrdfError::UnknownLink {
                joint: name.clone(),
                link: link.to_string(),
            })
        };
        let parent = link_ref("parent")?;
        let child_link = link_ref("child")?;
        let origin = parse_origin(node)?;
        let axis_raw = match child(node, "axis") {
            Some(a) => parse_vec3(a, "xyz", Vec3::X)?,
            None => Vec3::X,
        };
        let axis = match axis_raw.try_normalize() {
            Some(a) => a,
            None if kind == JointType::Fixed => Vec3::X,
            None => return Err(UrdfError::ZeroAxis(name)),
        };
        let limits = if kind == JointType::Fixed {
            None
        } else {
            let l = child(node, "limit").ok_or_else(|| UrdfError::MissingLimit(name.clone()))?;
            let lim = JointLimits {
                lower: parse_f64(l, "lower")?,
                upper: parse_f64(l, "upper")?,
                velocity: parse_f64(l, "velocity")?,
                effort: l
                    .attribute("effort")
                    .map(|_| parse_f64(l, "effort"))
                    .transpose()?
                    .unwrap_or(0.0),
            };
            if lim.lower > lim.upper {
                return Err(UrdfError::InvertedLimit {
                    joint: name,
                    lower: lim.lower,
                    upper: lim.upper,
                });
            }
            if lim.velocity <= 0.0 {
                return Err(UrdfError::BadValue {
                    element: describe(l),
                    attr: "velocity".into(),
                    value: lim.velocity.to_string(),
                });
            }
            Some(lim)
        };
        joints.push(Joint {
            name,
            kind,
            parent,
            child: child_link,
            origin,
            axis,
            limits,
        });
    }

    build_tree(robot_name, links, joints)
}

fn build_tree(name: String, mut links: Vec<Link>, joints: Vec<Joint>) -> Result<RobotModel, UrdfError> {
    // cycle check over parent → child edges (iterative three-colour DFS)
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
    for (ji, j) in joints.iter().enumerate() {
        children[j.parent].push(ji);
    }
    let mut colour = vec![0u8; links.len()];
    for start in 0..links.len() {
        if colour[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        colour[start] = 1;
        while let Some((node, next)) = stack.pop() {
            if next < children[node].len() {
                stack.push((node, next + 1));
                let c = joints[children[node][next]].child;
                match colour[c] {
                    0 => {
                        colour[c] = 1;
                        stack.push((c, 0));
                    }
                    1 => return Err(UrdfError::Cycle(links[c].name.clone())),
                    _ => {}
                }
            } else {
                colour[node] = 2;
            }
        }
    }

    for (ji, j) in joints.iter().enumerate() {
        let link = &mut links[j.child];
        if link.parent_joint.is_some() {
            return Err(UrdfError::MultipleParents(link.name.clone()));
        }
        link.parent_joint = Some(ji);
    }
    let roots: Vec<usize> = (0..links.len()).filter(|&l| links[l].parent_joint.is_none()).collect();
    if roots.len() != 1 {
        return Err(UrdfError::RootCount(roots.len()));
    }
    let root = roots[0];

    let mut topo_order = Vec::with_capacity(joints.len());
    let mut frontier = vec![root];
    while let Some(l) = frontier.pop() {
        for &ji in children[l].iter().rev() {
            topo_order.push(ji);
            frontier.push(joints[ji].child);
        }
    }
    let actuated = (0..joints.len()).filter(|&j| joints[j].is_actuated()).collect();
    Ok(RobotModel {
        name,
        links,
        joints,
        root,
        actuated,
        topo_order,
    })
}

fn fmt_vec(v: Vec3) -> String {
    format!("{:?} {:?} {:?}", v.x, v.y, v.z)
}

fn fmt_origin(p: &Pose) -> String {
    // rpy from the rotation matrix (Z-Y-X convention matching `Quat::from_rpy`)
    let m = p.rotation.to_matrix();
    let pitch = (-m[2][0]).clamp(-1.0, 1.0).asin();
    let (roll, yaw) = if m[2][0].abs() < 1.0 - 1e-12 {
        (m[2][1].atan2(m[2][2]), m[1][0].atan2(m[0][0]))
    } else {
        (0.0, (-m[0][1]).atan2(m[1][1]))
    };
    format!(
        "<origin xyz=\"{}\" rpy=\"{:?} {:?} {:?}\"/>",
        fmt_vec(p.translation),
        roll,
        pitch,
        yaw
    )
}

/// Writes the model back out in the supported URDF subset.
pub fn to_urdf(model: &RobotModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<robot name=\"{}\">", model.name);
    for link in &model.links {
        let _ = writeln!(out, "  <link name=\"{}\">", link.name);
        if link.mass > 0.0 || link.inertia_diag != Vec3::ZERO {
            let _ = writeln!(
                out,
                "    <inertial><origin xyz=\"{}\"/><mass value=\"{:?}\"/><inertia ixx=\"{:?}\" iyy=\"{:?}\" izz=\"{:?}\"/></inertial>",
                fmt_vec(link.com),
                link.mass,
                link.inertia_diag.x,
                link.inertia_diag.y,
                link.inertia_diag.z
            );
        }
        for c in &link.collisions {
            let geom = match c.shape {
                Shape::Box { half_extents } => format!("<box size=\"{}\"/>", fmt_vec(half_extents * 2.0)),
                Shape::Sphere { radius } => format!("<sphere radius=\"{radius:?}\"/>"),
                Shape::Capsule { radius, half_length } => {
                    format!("<capsule radius=\"{radius:?}\" length=\"{:?}\"/>", half_length * 2.0)
                }
                Shape::Plane { .. } => continue,
            };
            let _ = writeln!(
                out,
                "    <collision>{}<geometry>{geom}</geometry></collision>",
                fmt_origin(&c.origin)
            );
        }
        for s in &link.spheres {
            let _ = writeln!(
                out,
                "    <self_collision_sphere xyz=\"{}\" radius=\"{:?}\"/>",
                fmt_vec(s.center),
                s.radius
            );
        }
        let _ = writeln!(out, "  </link>");
    }
    for j in &model.joints {
        let _ = writeln!(out, "  <joint name=\"{}\" type=\"{}\">", j.name, j.kind.as_str());
        let _ = writeln!(out, "    <parent link=\"{}\"/>", model.links[j.parent].name);
        let _ = writeln!(out, "    <child link=\"{}\"/>", model.links[j.child].name);
        let _ = writeln!(out, "    {}", fmt_origin(&j.origin));
        let _ = writeln!(out, "    <axis xyz=\"{}\"/>", fmt_vec(j.axis));
        if let Some(l) = j.limits {
            let _ = writeln!(
                out,
                "    <limit lower=\"{:?}\" upper=\"{:?}\" velocity=\"{:?}\" effort=\"{:?}\"/>",
                l.lower, l.upper, l.velocity, l.effort
            );
        }
        let _ = writeln!(out, "  </joint>");
    }
    out.push_str("</robot>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE: &str = r#"<robot name="post">
        <link name="base"/>
        <link name="top"/>
        <joint name="weld" type="fixed">
          <parent link="base"/><child link="top"/>
          <origin xyz="0 0 1"/>
        </joint>
      </robot>"#;

    #[test]
    fn fixed_joint_has_zero_dof() {
        let m = parse_urdf(SINGLE).unwrap();
        assert_eq!(m.ndof(), 0);
        assert_eq!(m.root, 0);
        assert!(m.joint_names().is_empty());
    }

    #[test]
    fn cycle_is_detected() {
        let text = r#"<robot name="loop">
            <link name="a"/><link name="b"/><link name="c"/>
            <joint name="j1" type="fixed"><parent link="a"/><child link="b"/></joint>
            <joint name="j2" type="fixed"><parent link="b"/><child link="c"/></joint>
            <joint name="j3" type="fixed"><parent link="c"/><child link="a"/></joint>
          </robot>"#;
        assert!(matches!(parse_urdf(text), Err(UrdfError::Cycle(_))));
        let text = r#"<robot name="loop">
            <link name="a"/><link name="b"/>
            <joint name="j1" type="fixed"><parent link="a"/><child link="b"/></joint>
            <joint name="j2" type="fixed"><parent link="b"/><child link="a"/></joint>
          </robot>"#;
        assert!(matches!(parse_urdf(text), Err(UrdfError::Cycle(_))));
    }

    #[test]
    fn unknown_type_and_missing_limit() {
        let text = r#"<robot name="r"><link name="a"/><link name="b"/>
            <joint name="j" type="floating"><parent link="a"/><child link="b"/></joint></robot>"#;
        assert!(matches!(parse_urdf(text), Err(UrdfError::UnknownJointType { .. })));
        let text = r#"<robot name="r"><link name="a"/><link name="b"/>
            <joint name="j" type="revolute"><parent link="a"/><child link="b"/><axis xyz="0 0 1"/></joint></robot>"#;
        assert_eq!(parse_urdf(text), Err(UrdfError::MissingLimit("j".into())));
    }

    #[test]
    fn cylinder_becomes_capsule() {
        let text = r#"<robot name="r"><link name="a">
            <collision><geometry><cylinder radius="0.05" length="0.4"/></geometry></collision>
          </link></robot>"#;
        let m = parse_urdf(text).unwrap();
        assert_eq!(
            m.links[0].collisions[0].shape,
            Shape::Capsule {
                radius: 0.05,
                half_length: 0.2
            }
        );
    }

    #[test]
    fn mesh_geometry_is_rejected() {
        let text = r#"<robot name="r"><link name="a">
            <collision><geometry><mesh filename="x.stl"/></geometry></collision>
          </link></robot>"#;
        assert!(matches!(parse_urdf(text), Err(UrdfError::UnsupportedGeometry { .. })));
    }
}
