//! Binary frame codec shared by the TCP transport and the bag format.
//!
//! Frame layout, all integers little-endian:
//!
//! ```text
//! u32  total frame length (including these 4 bytes)
//! u8   version (0x01)
//! u16  type_id
//! u64  stamp_ns
//! u16  topic length, then UTF-8 topic bytes
//! ...  payload, fixed layout per variant
//! ```

use thiserror::Error;

use super::msg::*;
use crate::math::{Pose, Quat, Vec3, Wrench};

pub const WIRE_VERSION: u8 = 0x01;
const HEADER_LEN: usize = 4 + 1 + 2 + 8 + 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("invalid topic `{0}`")]
    InvalidTopic(String),
    #[error("invalid {type_name} payload: {reason}")]
    InvalidPayload { type_name: &'static str, reason: String },
    #[error("field too long for wire encoding: {0}")]
    TooLong(&'static str),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated frame at offset {offset}: need {needed} bytes, have {available}")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("bad magic/version byte {found:#04x} at offset {offset}")]
    BadVersion { offset: usize, found: u8 },
    #[error("unknown type_id {type_id} at offset {offset}")]
    UnknownType { offset: usize, type_id: u16 },
    #[error("invalid UTF-8 at offset {offset}")]
    Utf8 { offset: usize },
    #[error("invalid value at offset {offset}: {reason}")]
    Invalid { offset: usize, reason: String },
    #[error("{extra} trailing bytes at offset {offset}")]
    Trailing { offset: usize, extra: usize },
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn len32(&mut self, n: usize, what: &'static str) -> Result<(), EncodeError> {
        let n = u32::try_from(n).map_err(|_| EncodeError::TooLong(what))?;
        self.u32(n);
        Ok(())
    }
    fn str16(&mut self, s: &str, what: &'static str) -> Result<(), EncodeError> {
        let n = u16::try_from(s.len()).map_err(|_| EncodeError::TooLong(what))?;
        self.u16(n);
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }
    fn vec3(&mut self, v: Vec3) {
        self.f64(v.x);
        self.f64(v.y);
        self.f64(v.z);
    }
    fn pose(&mut self, p: &Pose) {
        self.vec3(p.translation);
        let q = p.rotation;
        self.f64(q.w);
        self.f64(q.x);
        self.f64(q.y);
        self.f64(q.z);
    }
}

/// Cursor over a byte slice; offsets in errors are relative to `base`.
struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.data.len() - self.pos < n {
            return Err(DecodeError::Truncated {
                offset: self.base + self.pos,
                needed: n,
                available: self.data.len() - self.pos,
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32, DecodeError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn offset(&self) -> usize {
        self.base + self.pos
    }
    /// Element count whose items need at least `elem` bytes each.
    fn count(&mut self, elem: usize) -> Result<usize, DecodeError> {
        let at = self.offset();
        let n = self.u32()? as usize;
        let remaining = self.data.len() - self.pos;
        if n.saturating_mul(elem) > remaining {
            return Err(DecodeError::Truncated {
                offset: at,
                needed: n.saturating_mul(elem),
                available: remaining,
            });
        }
        Ok(n)
    }
    fn str16(&mut self) -> Result<String, DecodeError> {
        let n = self.u16()? as usize;
        let at = self.offset();
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| DecodeError::Utf8 { offset: at })
    }
    fn str32(&mut self) -> Result<String, DecodeError> {
        let n = self.count(1)?;
        let at = self.offset();
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| DecodeError::Utf8 { offset: at })
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, DecodeError> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn vec3(&mut self) -> Result<Vec3, DecodeError> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    fn pose(&mut self) -> Result<Pose, DecodeError> {
        let t = self.vec3()?;
        let q = Quat::from_wxyz(self.f64()?, self.f64()?, self.f64()?, self.f64()?);
        // stored verbatim so that decode(encode(x)) is bit-exact
        Ok(Pose {
            translation: t,
            rotation: q,
        })
    }
}

/// Encodes the variant-specific payload bytes (no header).
pub fn encode_payload(payload: &Payload) -> Result<Vec<u8>, EncodeError> {
    payload.validate().map_err(|reason| EncodeError::InvalidPayload {
        type_name: payload.type_name(),
        reason,
    })?;
    let mut w = Writer { buf: Vec::new() };
    write_payload(&mut w, payload)?;
    Ok(w.buf)
}

fn write_payload(w: &mut Writer, payload: &Payload) -> Result<(), EncodeError> {
    match payload {
        Payload::JointState(js) => {
            w.len32(js.names.len(), "joint names")?;
            for n in &js.names {
                w.str16(n, "joint name")?;
            }
            for v in js.positions.iter().chain(&js.velocities).chain(&js.efforts) {
                w.f64(*v);
            }
        }
        Payload::Transform(t) => {
            w.str16(&t.parent, "parent frame")?;
            w.str16(&t.child, "child frame")?;
            w.pose(&t.pose);
        }
        Payload::Wrench(m) => {
            w.str16(&m.frame, "wrench frame")?;
            w.vec3(m.wrench.force);
            w.vec3(m.wrench.torque);
        }
        Payload::Float64Array(a) => {
            w.len32(a.data.len(), "float array")?;
            for v in &a.data {
                w.f64(*v);
            }
        }
        Payload::Image(img) => {
            w.u32(img.width);
            w.u32(img.height);
            match &img.data {
                ImageData::Rgb8(d) => {
                    w.u8(0);
                    w.len32(d.len(), "image data")?;
                    w.buf.extend_from_slice(d);
                }
                ImageData::Depth32f(d) => {
                    w.u8(1);
                    w.len32(d.len(), "image data")?;
                    for v in d {
                        w.f32(*v);
                    }
                }
            }
        }
        Payload::CameraInfo(ci) => {
            w.u32(ci.width);
            w.u32(ci.height);
            w.f64(ci.fx);
            w.f64(ci.fy);
            w.f64(ci.cx);
            w.f64(ci.cy);
        }
        Payload::PointCloud(pc) => {
            w.len32(pc.points.len(), "point cloud")?;
            for p in &pc.points {
                w.vec3(*p);
            }
            match &pc.colors {
                Some(colors) => {
                    w.u8(1);
                    for c in colors {
                        w.buf.extend_from_slice(c);
                    }
                }
                None => w.u8(0),
            }
        }
        Payload::Clock(c) => w.u64(c.sim_time_ns),
        Payload::Text(t) => {
            w.len32(t.text.len(), "text")?;
            w.buf.extend_from_slice(t.text.as_bytes());
        }
    }
    Ok(())
}

/// Decodes payload bytes for `type_id`. `base` is the absolute offset of
/// `bytes` within the enclosing buffer, for error reporting.
pub fn decode_payload(type_id: u16, bytes: &[u8], base: usize) -> Result<Payload, DecodeError> {
    let mut r = Reader {
        data: bytes,
        pos: 0,
        base,
    };
    let payload = read_payload(&mut r, type_id)?;
    if r.pos != bytes.len() {
        return Err(DecodeError::Trailing {
            offset: r.offset(),
            extra: bytes.len() - r.pos,
        });
    }
    Ok(payload)
}

fn read_payload(r: &mut Reader<'_>, type_id: u16) -> Result<Payload, DecodeError> {
    Ok(match type_id {
        1 => {
            let n = r.count(2)?;
            let names = (0..n).map(|_| r.str16()).collect::<Result<Vec<_>, _>>()?;
            let positions = r.f64s(n)?;
            let velocities = r.f64s(n)?;
            let efforts = r.f64s(n)?;
            Payload::JointState(JointStateMsg {
                names,
                positions,
                velocities,
                efforts,
            })
        }
        2 => Payload::Transform(TransformMsg {
            parent: r.str16()?,
            child: r.str16()?,
            pose: r.pose()?,
        }),
        3 => Payload::Wrench(WrenchMsg {
            frame: r.str16()?,
            wrench: Wrench::new(r.vec3()?, r.vec3()?),
        }),
        4 => {
            let n = r.count(8)?;
            Payload::Float64Array(Float64ArrayMsg { data: r.f64s(n)? })
        }
        5 => {
            let width = r.u32()?;
            let height = r.u32()?;
            let at = r.offset();
            let enc = r.u8()?;
            let img = match enc {
                0 => {
                    let n = r.count(1)?;
                    ImageMsg::rgb8(width, height, r.take(n)?.to_vec())
                }
                1 => {
                    let n = r.count(4)?;
                    let d = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
                    ImageMsg::depth(width, height, d)
                }
                other => {
                    return Err(DecodeError::Invalid {
                        offset: at,
                        reason: format!("unknown image encoding {other}"),
                    })
                }
            };
            Payload::Image(img)
        }
        6 => Payload::CameraInfo(CameraInfoMsg {
            width: r.u32()?,
            height: r.u32()?,
            fx: r.f64()?,
            fy: r.f64()?,
            cx: r.f64()?,
            cy: r.f64()?,
        }),
        7 => {
            let n = r.count(24)?;
            let points = (0..n).map(|_| r.vec3()).collect::<Result<Vec<_>, _>>()?;
            let at = r.offset();
            let colors = match r.u8()? {
                0 => None,
                1 => {
                    let raw = r.take(n * 3)?;
                    Some(raw.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
                }
                other => {
                    return Err(DecodeError::Invalid {
                        offset: at,
                        reason: format!("bad color flag {other}"),
                    })
                }
            };
            Payload::PointCloud(PointCloudMsg { points, colors })
        }
        8 => Payload::Clock(ClockMsg { sim_time_ns: r.u64()? }),
        9 => Payload::Text(TextMsg { text: r.str32()? }),
        other => {
            return Err(DecodeError::UnknownType {
                offset: r.offset(),
                type_id: other,
            })
        }
    })
}

pub fn encode_frame(env: &Envelope) -> Result<Vec<u8>, EncodeError> {
    if !valid_name(&env.topic) {
        return Err(EncodeError::InvalidTopic(env.topic.clone()));
    }
    let payload = encode_payload(&env.payload)?;
    let mut w = Writer {
        buf: Vec::with_capacity(HEADER_LEN + env.topic.len() + payload.len()),
    };
    w.u32(0);
    w.u8(WIRE_VERSION);
    w.u16(env.type_id());
    w.u64(env.stamp_ns);
    w.str16(&env.topic, "topic")?;
    w.buf.extend_from_slice(&payload);
    let total = u32::try_from(w.buf.len()).map_err(|_| EncodeError::TooLong("frame"))?;
    w.buf[..4].copy_from_slice(&total.to_le_bytes());
    Ok(w.buf)
}

/// Decodes exactly one frame occupying the whole of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Envelope, DecodeError> {
    let (env, used) = decode_frame_prefix(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::Trailing {
            offset: used,
            extra: bytes.len() - used,
        });
    }
    Ok(env)
}

/// Decodes the frame at the start of `bytes`, returning it and its length.
pub fn decode_frame_prefix(bytes: &[u8]) -> Result<(Envelope, usize), DecodeError> {
    let mut r = Reader {
        data: bytes,
        pos: 0,
        base: 0,
    };
    let total = r.u32()? as usize;
    if total < HEADER_LEN {
        return Err(DecodeError::Invalid {
            offset: 0,
            reason: format!("frame length {total} shorter than header"),
        });
    }
    if total > bytes.len() {
        return Err(DecodeError::Truncated {
            offset: 0,
            needed: total,
            available: bytes.len(),
        });
    }
    let mut r = Reader {
        data: &bytes[..total],
        pos: 4,
        base: 0,
    };
    let version = r.u8()?;
    if version != WIRE_VERSION {
        return Err(DecodeError::BadVersion {
            offset: 4,
            found: version,
        });
    }
    let type_at = r.offset();
    let type_id = r.u16()?;
    if type_name(type_id).is_none() {
        return Err(DecodeError::UnknownType {
            offset: type_at,
            type_id,
        });
    }
    let stamp_ns = r.u64()?;
    let topic = r.str16()?;
    let payload = decode_payload(type_id, &bytes[r.pos..total], r.pos)?;
    Ok((
        Envelope {
            topic,
            stamp_ns,
            payload,
        },
        total,
    ))
}
