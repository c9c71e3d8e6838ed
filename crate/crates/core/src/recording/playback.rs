//! Republishing recorded envelopes onto a bus.

use std::path::Path;
use std::time::{Duration, Instant};

use super::bag::{read_bag_prefix, BagError};
use crate::bus::{BusError, ClockMsg, Envelope, NodeHandle, Payload};
use crate::utils::exec::{Clock, Node, NodeError};

pub const CLOCK_TOPIC: &str = "rpbi/clock";

#[derive(Debug, Clone)]
pub struct PlayOptions {
    /// Playback speed multiplier; `f64::INFINITY` publishes without waiting.
    pub rate: f64,
    /// With a sim clock, recorded stamps drive the clock and are published on
    /// [`CLOCK_TOPIC`] ahead of each record.
    pub clock: Option<Clock>,
}

impl Default for PlayOptions {
    fn default() -> Self {
        Self { rate: 1.0, clock: None }
    }
}

impl PlayOptions {
    pub fn rate(rate: f64) -> Self {
        Self { rate, clock: None }
    }
}

/// Publishes `records` through `node` with their original stamps, spacing them
/// by the recorded stamp gaps divided by `opts.rate`. Returns the number published.
pub fn play(node: &NodeHandle, records: &[Envelope], opts: &PlayOptions) -> Result<usize, BusError> {
    assert!(opts.rate > 0.0, "playback rate must be positive");
    let Some(first) = records.first().map(|e| e.stamp_ns) else {
        return Ok(0);
    };
    let start = Instant::now();
    let mut last_clock = None;
    for env in records {
        if opts.rate.is_finite() {
            let offset = Duration::from_secs_f64((env.stamp_ns - first) as f64 * 1e-9 / opts.rate);
            if let Some(wait) = offset.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        if let Some(clock) = opts.clock.as_ref().filter(|c| c.is_sim()) {
            if last_clock != Some(env.stamp_ns) && env.topic != CLOCK_TOPIC {
                clock.set(env.stamp_ns);
                node.send(
                    CLOCK_TOPIC,
                    env.stamp_ns,
                    Payload::Clock(ClockMsg {
                        sim_time_ns: env.stamp_ns,
                    }),
                )?;
                last_clock = Some(env.stamp_ns);
            }
        }
        node.send(&env.topic, env.stamp_ns, env.payload.clone())?;
    }
    Ok(records.len())
}

#[derive(Debug, thiserror::Error)]
pub enum PlayError {
    #[error(transparent)]
    Bag(#[from] BagError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("played {played} records, then: {error}")]
    Truncated { played: usize, error: BagError },
}

/// Plays a bag file. A corrupt record ends playback after every valid record
/// before it has been published, and the error names its offset.
pub fn play_file(node: &NodeHandle, path: impl AsRef<Path>, opts: &PlayOptions) -> Result<usize, PlayError> {
    let data = std::fs::read(path.as_ref()).map_err(|e| BagError::io(&path, e))?;
    let (records, err) = read_bag_prefix(&data)?;
    let played = play(node, &records, opts)?;
    match err {
        Some(error) => Err(PlayError::Truncated { played, error }),
        None => Ok(played),
    }
}

/// Lock-step player: on each poll publishes every record stamped at or before
/// `now_ns`. Used to feed a recorded operator stream into the simulator.
pub struct BagPlayer {
    node: NodeHandle,
    records: Vec<Envelope>,
    next: usize,
}

impl BagPlayer {
    pub fn new(node: NodeHandle, records: Vec<Envelope>) -> Self {
        Self { node, records, next: 0 }
    }

    pub fn finished(&self) -> bool {
        self.next == self.records.len()
    }

    pub fn remaining(&self) -> usize {
        self.records.len() - self.next
    }
}

impl Node for BagPlayer {
    fn name(&self) -> &str {
        self.node.name()
    }

    fn poll(&mut self, now_ns: u64) -> Result<(), NodeError> {
        while let Some(env) = self.records.get(self.next) {
            if env.stamp_ns > now_ns {
                break;
            }
            self.node.send(&env.topic, env.stamp_ns, env.payload.clone())?;
            self.next += 1;
        }
        Ok(())
    }
}
