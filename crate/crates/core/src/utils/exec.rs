//! Clocks, rate timers and the cooperative node executor.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::bus::{BusError, Payload, Subscription};

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("{0}")]
    Failed(String),
}

/// A unit of behaviour driven by an executor. `poll` must not block.
pub trait Node: Send {
    fn name(&self) -> &str;
    fn poll(&mut self, now_ns: u64) -> Result<(), NodeError>;
    /// Called once when the executor stops.
    fn shutdown(&mut self) -> Result<(), NodeError> {
        Ok(())
    }
}

/// Time source shared by every node of a process.
#[derive(Debug, Clone)]
pub enum Clock {
    /// Follows the simulator; only advanced by [`Clock::set`].
    Sim(Arc<AtomicU64>),
    Wall(Instant),
}

impl Clock {
    pub fn sim() -> Self {
        Clock::Sim(Arc::new(AtomicU64::new(0)))
    }

    pub fn wall() -> Self {
        Clock::Wall(Instant::now())
    }

    pub fn new(use_sim_time: bool) -> Self {
        if use_sim_time {
            Self::sim()
        } else {
            Self::wall()
        }
    }

    pub fn is_sim(&self) -> bool {
        matches!(self, Clock::Sim(_))
    }

    pub fn now_ns(&self) -> u64 {
        match self {
            Clock::Sim(t) => t.load(Ordering::Acquire),
            Clock::Wall(start) => start.elapsed().as_nanos() as u64,
        }
    }

    /// Advances a sim clock. Never moves backwards; a no-op on wall clocks.
    pub fn set(&self, ns: u64) {
        if let Clock::Sim(t) = self {
            t.fetch_max(ns, Ordering::AcqRel);
        }
    }
}

/// Fires at most once per poll, on a fixed grid anchored at the first poll.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateTimer {
    period_ns: u64,
    next_ns: Option<u64>,
}

impl RateTimer {
    pub fn from_hz(hz: f64) -> Self {
        assert!(hz > 0.0 && hz.is_finite(), "rate must be positive");
        Self::from_period_ns((1e9 / hz).round().max(1.0) as u64)
    }

    pub fn from_period_ns(period_ns: u64) -> Self {
        Self {
            period_ns: period_ns.max(1),
            next_ns: None,
        }
    }

    pub fn period_ns(&self) -> u64 {
        self.period_ns
    }

    pub fn due(&mut self, now_ns: u64) -> bool {
        match self.next_ns {
            None => {
                self.next_ns = Some(now_ns + self.period_ns);
                true
            }
            Some(next) if now_ns >= next => {
                let missed = (now_ns - next) / self.period_ns;
                self.next_ns = Some(next + (missed + 1) * self.period_ns);
                true
            }
            Some(_) => false,
        }
    }
}

/// Keeps a sim [`Clock`] in step with `rpbi/clock` messages from another process.
pub struct ClockFollower {
    clock: Clock,
    sub: Subscription,
}

impl ClockFollower {
    pub fn new(clock: Clock, sub: Subscription) -> Self {
        Self { clock, sub }
    }
}

impl Node for ClockFollower {
    fn name(&self) -> &str {
        "clock_follower"
    }

    fn poll(&mut self, _now_ns: u64) -> Result<(), NodeError> {
        for env in self.sub.drain() {
            if let Payload::Clock(c) = env.payload {
                self.clock.set(c.sim_time_ns);
            }
        }
        Ok(())
    }
}
