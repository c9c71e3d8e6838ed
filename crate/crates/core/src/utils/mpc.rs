//! Start/stop/step control around a periodic controller tick.

use std::sync::{Arc, Mutex};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use super::exec::{Node, NodeError, RateTimer};
use crate::bus::{BusError, NodeHandle, ServiceServer};

pub const START_SERVICE: &str = "rpbi/mpc/start";
pub const STOP_SERVICE: &str = "rpbi/mpc/stop";
pub const STEP_SERVICE: &str = "rpbi/mpc/step";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MpcMode {
    Stopped,
    Running,
    /// A single requested tick is executing.
    StepPending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MpcState {
    pub mode: MpcMode,
    pub iterations: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MpcError {
    #[error("already running")]
    AlreadyRunning,
}

/// Called with the index of the iteration being computed.
pub type TickFn = Box<dyn FnMut(u64) + Send>;

struct Inner {
    state: MpcState,
    timer: RateTimer,
    tick: TickFn,
}

impl Inner {
    fn run_tick(&mut self) {
        (self.tick)(self.state.iterations);
        self.state.iterations += 1;
    }
}

/// Ticks run under one lock, so a tick always completes before the next
/// begins, whichever of `poll` or `step` triggers it.
#[derive(Clone)]
pub struct MpcController {
    inner: Arc<Mutex<Inner>>,
}

impl MpcController {
    pub fn new(rate_hz: f64, tick: TickFn) -> Self {
        Self {
            inner: Arc::new(Mutex::new(Inner {
                state: MpcState {
                    mode: MpcMode::Stopped,
                    iterations: 0,
                },
                timer: RateTimer::from_hz(rate_hz),
                tick,
            })),
        }
    }

    pub fn state(&self) -> MpcState {
        self.inner.lock().unwrap().state
    }

    /// Resumes periodic ticking; the first tick happens at the next poll.
    pub fn start(&self) -> MpcState {
        let mut g = self.inner.lock().unwrap();
        if g.state.mode != MpcMode::Running {
            g.state.mode = MpcMode::Running;
            g.timer = RateTimer::from_period_ns(g.timer.period_ns());
        }
        g.state
    }

    pub fn stop(&self) -> MpcState {
        let mut g = self.inner.lock().unwrap();
        g.state.mode = MpcMode::Stopped;
        g.state
    }

    /// Runs exactly one tick and returns once it has completed.
    pub fn step(&self) -> Result<MpcState, MpcError> {
        let mut g = self.inner.lock().unwrap();
        if g.state.mode == MpcMode::Running {
            return Err(MpcError::AlreadyRunning);
        }
        g.state.mode = MpcMode::StepPending;
        g.run_tick();
        g.state.mode = MpcMode::Stopped;
        Ok(g.state)
    }

    /// Ticks when running and the rate timer is due. Returns whether it ticked.
    pub fn poll(&self, now_ns: u64) -> bool {
        let mut g = self.inner.lock().unwrap();
        if g.state.mode == MpcMode::Running && g.timer.due(now_ns) {
            g.run_tick();
            true
        } else {
            false
        }
    }

    /// Serves `rpbi/mpc/{start,stop,step}`; each replies with the new state.
    pub fn advertise(&self, node: &NodeHandle) -> Result<Vec<ServiceServer>, BusError> {
        let to_json = |s: MpcState| serde_json::to_value(s).expect("state serializes");
        let c = self.clone();
        let start = node.advertise_service(START_SERVICE, move |_: Value| Ok(to_json(c.start())))?;
        let c = self.clone();
        let stop = node.advertise_service(STOP_SERVICE, move |_: Value| Ok(to_json(c.stop())))?;
        let c = self.clone();
        let step = node.advertise_service(STEP_SERVICE, move |_: Value| {
            c.step().map(to_json).map_err(|e| e.to_string())
        })?;
        Ok(vec![start, stop, step])
    }
}

/// Executor adapter for [`MpcController::poll`].
pub struct MpcNode {
    name: String,
    controller: MpcController,
    _services: Vec<ServiceServer>,
}

impl MpcNode {
    pub fn new(node: &NodeHandle, controller: MpcController) -> Result<Self, NodeError> {
        let services = controller.advertise(node)?;
        Ok(Self {
            name: node.name().to_string(),
            controller,
            _services: services,
        })
    }

    pub fn controller(&self) -> &MpcController {
        &self.controller
    }
}

impl Node for MpcNode {
    fn name(&self) -> &str {
        &self.name
    }

    fn poll(&mut self, now_ns: u64) -> Result<(), NodeError> {
        self.controller.poll(now_ns);
        Ok(())
    }
}
