//! Operator-signal mapping: axis reordering, deadzones, the isometric
//! cube-to-ball map and a moving window of recent commands.

pub mod node;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use node::{CartesianTeleop, CartesianTeleopConfig, OperatorConfig, OperatorNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeleopError {
    #[error("expected {expected} axes, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid mapping: {0}")]
    BadConfig(String),
}

/// Operator axes, each clamped into [−1, 1]. Non-finite readings become 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAxes(Vec<f64>);

impl RawAxes {
    pub fn new(u: &[f64]) -> Self {
        Self(
            u.iter()
                .map(|&x| if x.is_finite() { x.clamp(-1.0, 1.0) } else { 0.0 })
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Source axis of one output channel; `"-2"` reads axis 2 with its sign flipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AxisRepr", into = "AxisRepr")]
pub struct AxisRef {
    pub axis: usize,
    pub flip: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AxisRepr {
    Index(usize),
    Text(String),
}

impl TryFrom<AxisRepr> for AxisRef {
    type Error = String;

    fn try_from(r: AxisRepr) -> Result<Self, String> {
        match r {
            AxisRepr::Index(axis) => Ok(AxisRef { axis, flip: false }),
            AxisRepr::Text(s) => {
                let t = s.trim();
                let (flip, digits) = match t.strip_prefix('-') {
                    Some(rest) => (true, rest),
                    None => (false, t.strip_prefix('+').unwrap_or(t)),
                };
                let axis = digits
                    .parse()
                    .map_err(|_| format!("axis reference `{s}` is not [+|-]<index>"))?;
                Ok(AxisRef { axis, flip })
            }
        }
    }
}

impl From<AxisRef> for AxisRepr {
    fn from(a: AxisRef) -> Self {
        if a.flip {
            AxisRepr::Text(format!("-{}", a.axis))
        } else {
            AxisRepr::Index(a.axis)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingMode {
    #[default]
    Scale,
    Isometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingConfig {
    #[serde(default)]
    pub mode: MappingMode,
    pub axis_order: Vec<AxisRef>,
    /// Per-output gain, used in scale mode.
    #[serde(default)]
    pub scale: Vec<f64>,
    #[serde(default)]
    pub deadzone: f64,
    /// Largest output norm in isometric mode.
    #[serde(default = "default_vmax")]
    pub vmax: f64,
}

fn default_vmax() -> f64 {
    0.1
}

impl MappingConfig {
    /// Identity order, unit scale, no deadzone.
    pub fn identity(n: usize) -> Self {
        Self {
            mode: MappingMode::Scale,
            axis_order: (0..n).map(|axis| AxisRef { axis, flip: false }).collect(),
            scale: vec![1.0; n],
            deadzone: 0.0,
            vmax: default_vmax(),
        }
    }

    pub fn validate(&self) -> Result<(), TeleopError> {
        let n = self.axis_order.len();
        let mut seen = vec![false; n];
        for a in &self.axis_order {
            if a.axis >= n || std::mem::replace(&mut seen[a.axis], true) {
                return Err(TeleopError::BadConfig(format!(
                    "axis_order must be a permutation of 0..{n}"
                )));
            }
        }
        if self.mode == MappingMode::Scale && self.scale.len() != n {
            return Err(TeleopError::BadConfig(format!(
                "scale has {} entries for {n} axes",
                self.scale.len()
            )));
        }
        if !(0.0..0.5).contains(&self.deadzone) {
            return Err(TeleopError::BadConfig(format!(
                "deadzone {} outside [0, 0.5)",
                self.deadzone
            )));
        }
        if !(self.vmax > 0.0 && self.vmax.is_finite()) {
            return Err(TeleopError::BadConfig(format!(
                "vmax must be positive, got {}",
                self.vmax
            )));
        }
        Ok(())
    }

    fn reorder(&self, u: &RawAxes) -> Result<Vec<f64>, TeleopError> {
        if u.len() != self.axis_order.len() {
            return Err(TeleopError::DimensionMismatch {
                expected: self.axis_order.len(),
                got: u.len(),
            });
        }
        Ok(self
            .axis_order
            .iter()
            .map(|a| {
                let x = u.as_slice()[a.axis];
                if a.flip {
                    -x
                } else {
                    x
                }
            })
            .collect())
    }

    /// Maps raw axes to a command according to `mode`.
    pub fn apply(&self, u: &RawAxes) -> Result<Vec<f64>, TeleopError> {
        match self.mode {
            MappingMode::Scale => scale_map(u, self),
            MappingMode::Isometric => {
                let ordered = RawAxes(self.reorder(u)?);
                Ok(isometric_map(&ordered, self.vmax, self.deadzone))
            }
        }
    }
}

/// Deadzone with renormalisation: continuous, `d(±1) = ±1`.
pub fn deadzone(x: f64, dz: f64) -> f64 {
    if x.abs() < dz {
        0.0
    } else {
        x.signum() * (x.abs() - dz) / (1.0 - dz)
    }
}

/// Reorders, deadzones and scales each axis.
pub fn scale_map(u: &RawAxes, cfg: &MappingConfig) -> Result<Vec<f64>, TeleopError> {
    let ordered = cfg.reorder(u)?;
    if cfg.scale.len() != ordered.len() {
        return Err(TeleopError::DimensionMismatch {
            expected: ordered.len(),
            got: cfg.scale.len(),
        });
    }
    Ok(ordered
        .iter()
        .zip(&cfg.scale)
        .map(|(&x, &s)| s * deadzone(x, cfg.deadzone))
        .collect())
}

/// Cube-to-ball map: the direction of the deadzoned input is kept and its
/// length becomes `vmax · ‖d‖∞`, so every face of the input cube reaches
/// exactly `vmax`.
pub fn isometric_map(u: &RawAxes, vmax: f64, dz: f64) -> Vec<f64> {
    let d: Vec<f64> = u.as_slice().iter().map(|&x| deadzone(x, dz)).collect();
    let inf = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if inf == 0.0 {
        return vec![0.0; d.len()];
    }
    // scale by the largest entry first so the 2-norm cannot underflow
    let two = inf * d.iter().map(|x| (x / inf).powi(2)).sum::<f64>().sqrt();
    let k = vmax * inf / two;
    d.iter().map(|x| x * k).collect()
}

/// Raw input that [`isometric_map`] (without deadzone) sends to `v`. The
/// length of `v` is first capped at `vmax`.
pub fn isometric_inverse(v: &[f64], vmax: f64) -> RawAxes {
    let inf = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if inf == 0.0 {
        return RawAxes::new(&vec![0.0; v.len()]);
    }
    let two = inf * v.iter().map(|x| (x / inf).powi(2)).sum::<f64>().sqrt();
    let speed = two.min(vmax);
    // the map's output length is vmax·‖d‖∞
    let s = speed / (vmax * inf);
    RawAxes::new(&v.iter().map(|x| (x * s).clamp(-1.0, 1.0)).collect::<Vec<_>>())
}

/// The most recent `capacity` commands, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    capacity: usize,
    entries: VecDeque<(u64, Vec<f64>)>,
}

impl SignalWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, stamp_ns: u64, cmd: Vec<f64>) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((stamp_ns, cmd));
    }

    /// The newest `n` entries, newest last. The flag is set when fewer than
    /// `n` were available.
    pub fn get(&self, n: usize) -> (Vec<(u64, Vec<f64>)>, bool) {
        let take = n.min(self.entries.len());
        let out = self.entries.iter().skip(self.entries.len() - take).cloned().collect();
        (out, take < n)
    }
}
