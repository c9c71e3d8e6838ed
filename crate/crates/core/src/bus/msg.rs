use serde::{Deserialize, Serialize};

use crate::math::{Pose, Vec3, Wrench};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JointStateMsg {
    pub names: Vec<String>,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub efforts: Vec<f64>,
}

impl JointStateMsg {
    /// Positions only; velocities and efforts are zero-filled.
    pub fn from_positions(names: Vec<String>, positions: Vec<f64>) -> Self {
        let n = positions.len();
        Self {
            names,
            positions,
            velocities: vec![0.0; n],
            efforts: vec![0.0; n],
        }
    }

    pub fn position(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.positions[i])
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.names.len();
        if self.positions.len() != n || self.velocities.len() != n || self.efforts.len() != n {
            return Err(format!(
                "joint state lists differ in length: names {}, positions {}, velocities {}, efforts {}",
                n,
                self.positions.len(),
                self.velocities.len(),
                self.efforts.len()
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &self.names {
            if !seen.insert(name.as_str()) {
                return Err(format!("duplicate joint name `{name}`"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformMsg {
    pub parent: String,
    pub child: String,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrenchMsg {
    pub frame: String,
    pub wrench: Wrench,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Float64ArrayMsg {
    pub data: Vec<f64>,
}

impl Float64ArrayMsg {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageEncoding {
    Rgb8,
    Depth32f,
}

impl ImageEncoding {
    pub fn channels(self) -> usize {
        match self {
            ImageEncoding::Rgb8 => 3,
            ImageEncoding::Depth32f => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageData {
    Rgb8(Vec<u8>),
    Depth32f(Vec<f32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawImage")]
pub struct ImageMsg {
    pub width: u32,
    pub height: u32,
    pub encoding: ImageEncoding,
    pub data: ImageData,
}

// JSON form: `data` is decoded according to `encoding`.
#[derive(Deserialize)]
struct RawImage {
    width: u32,
    height: u32,
    encoding: ImageEncoding,
    data: Vec<f64>,
}

impl TryFrom<RawImage> for ImageMsg {
    type Error = String;

    fn try_from(raw: RawImage) -> Result<Self, String> {
        let data = match raw.encoding {
            ImageEncoding::Rgb8 => ImageData::Rgb8(
                raw.data
                    .iter()
                    .map(|&v| {
                        if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                            Ok(v as u8)
                        } else {
                            Err(format!("rgb8 sample {v} is not a byte"))
                        }
                    })
                    .collect::<Result<_, _>>()?,
            ),
            ImageEncoding::Depth32f => ImageData::Depth32f(raw.data.iter().map(|&v| v as f32).collect()),
        };
        Ok(ImageMsg {
            width: raw.width,
            height: raw.height,
            encoding: raw.encoding,
            data,
        })
    }
}

impl ImageMsg {
    pub fn rgb8(width: u32, height: u32, data: Vec<u8>) -> Self {
        Self {
            width,
            height,
            encoding: ImageEncoding::Rgb8,
            data: ImageData::Rgb8(data),
        }
    }

    pub fn depth(width: u32, height: u32, data: Vec<f32>) -> Self {
        Self {
            width,
            height,
            encoding: ImageEncoding::Depth32f,
            data: ImageData::Depth32f(data),
        }
    }

    pub fn depth_data(&self) -> Option<&[f32]> {
        match &self.data {
            ImageData::Depth32f(d) => Some(d),
            ImageData::Rgb8(_) => None,
        }
    }

    pub fn rgb_data(&self) -> Option<&[u8]> {
        match &self.data {
            ImageData::Rgb8(d) => Some(d),
            ImageData::Depth32f(_) => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let expected = self.width as usize * self.height as usize * self.encoding.channels();
        let (len, matches) = match (&self.data, self.encoding) {
            (ImageData::Rgb8(d), ImageEncoding::Rgb8) => (d.len(), true),
            (ImageData::Depth32f(d), ImageEncoding::Depth32f) => (d.len(), true),
            (ImageData::Rgb8(d), _) => (d.len(), false),
            (ImageData::Depth32f(d), _) => (d.len(), false),
        };
        if !matches {
            return Err("image data does not match its encoding".into());
        }
        if len != expected {
            return Err(format!("image data length {len}, expected {expected}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraInfoMsg {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloudMsg {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<[u8; 3]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClockMsg {
    pub sim_time_ns: u64,
}

/// Free-form text, used for diagnostics such as safety reports (JSON-encoded).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TextMsg {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum Payload {
    JointState(JointStateMsg),
    Transform(TransformMsg),
    Wrench(WrenchMsg),
    Float64Array(Float64ArrayMsg),
    Image(ImageMsg),
    CameraInfo(CameraInfoMsg),
    PointCloud(PointCloudMsg),
    Clock(ClockMsg),
    Text(TextMsg),
}

impl Payload {
    pub fn type_id(&self) -> u16 {
        match self {
            Payload::JointState(_) => 1,
            Payload::Transform(_) => 2,
            Payload::Wrench(_) => 3,
            Payload::Float64Array(_) => 4,
            Payload::Image(_) => 5,
            Payload::CameraInfo(_) => 6,
            Payload::PointCloud(_) => 7,
            Payload::Clock(_) => 8,
            Payload::Text(_) => 9,
        }
    }

    pub fn type_name(&self) -> &'static str {
        type_name(self.type_id()).expect("every variant has a name")
    }

    /// Checks the per-variant invariants.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Payload::JointState(js) => js.validate(),
            Payload::Transform(t) => {
                if t.parent == t.child {
                    Err(format!("transform parent and child are both `{}`", t.parent))
                } else {
                    Ok(())
                }
            }
            Payload::Wrench(w) if w.frame.is_empty() => Err("wrench frame is empty".into()),
            Payload::Image(img) => img.validate(),
            Payload::CameraInfo(ci) => {
                if ci.fx <= 0.0 || ci.fy <= 0.0 {
                    Err("focal lengths must be positive".into())
                } else {
                    Ok(())
                }
            }
            Payload::PointCloud(pc) => match &pc.colors {
                Some(c) if c.len() != pc.points.len() => Err("point cloud colors differ in length from points".into()),
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

pub fn type_name(type_id: u16) -> Option<&'static str> {
    Some(match type_id {
        1 => "joint_state",
        2 => "transform",
        3 => "wrench",
        4 => "float64_array",
        5 => "image",
        6 => "camera_info",
        7 => "point_cloud",
        8 => "clock",
        9 => "text",
        _ => return None,
    })
}

/// A timestamped message on a named topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub topic: String,
    pub stamp_ns: u64,
    #[serde(flatten)]
    pub payload: Payload,
}

impl Envelope {
    pub fn new(topic: impl Into<String>, stamp_ns: u64, payload: Payload) -> Self {
        Self {
            topic: topic.into(),
            stamp_ns,
            payload,
        }
    }

    pub fn type_id(&self) -> u16 {
        self.payload.type_id()
    }
}

/// Topic and service names are non-empty and contain no whitespace.
pub fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_whitespace)
}
