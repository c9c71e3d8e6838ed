//! Live recording of bus topics into a bag.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::bag::{BagError, BagWriter};
use crate::bus::{Bus, Envelope, NodeHandle, Subscription};
use crate::utils::exec::{Node, NodeError};

/// Queue depth of the recorder subscription; large enough that a recorder
/// polled at the executor rate never overflows.
pub const RECORD_QUEUE_DEPTH: usize = 1 << 16;

/// Records older than the newest seen stamp by more than this are written;
/// anything arriving later than its slot is dropped.
pub const DEFAULT_REORDER_WINDOW_NS: u64 = 500_000_000;

/// Subscribes to a topic set and appends every envelope, in stamp order, to a bag.
pub struct Recorder<W: Write> {
    name: String,
    input: Subscription,
    writer: Option<BagWriter<W>>,
    // (stamp, arrival) keeps equal stamps in arrival order
    pending: BTreeMap<(u64, u64), Envelope>,
    arrivals: u64,
    newest: u64,
    window_ns: u64,
    late: u64,
    failed: Option<String>,
}

impl<W: Write + Send> Recorder<W> {
    pub fn new(node: &NodeHandle, topics: &[&str], writer: BagWriter<W>) -> Self {
        Self {
            name: node.name().to_string(),
            input: node.subscribe_many_with_depth(topics, RECORD_QUEUE_DEPTH),
            writer: Some(writer),
            pending: BTreeMap::new(),
            arrivals: 0,
            newest: 0,
            window_ns: DEFAULT_REORDER_WINDOW_NS,
            late: 0,
            failed: None,
        }
    }

    pub fn with_reorder_window(mut self, window_ns: u64) -> Self {
        self.window_ns = window_ns;
        self
    }

    /// Records written so far.
    pub fn count(&self) -> u64 {
        self.writer.as_ref().map_or(0, BagWriter::count)
    }

    /// Envelopes dropped because they arrived after later stamps were written,
    /// or because the subscription overflowed.
    pub fn dropped(&self) -> u64 {
        self.late + self.input.dropped()
    }

    fn ingest(&mut self) {
        for env in self.input.drain() {
            self.newest = self.newest.max(env.stamp_ns);
            self.pending.insert((env.stamp_ns, self.arrivals), env);
            self.arrivals += 1;
        }
    }

    fn write_through(&mut self, horizon: u64) -> Result<(), BagError> {
        let Some(writer) = self.writer.as_mut() else {
            return Ok(());
        };
        while let Some(entry) = self.pending.first_entry() {
            if entry.key().0 > horizon {
                break;
            }
            let env = entry.remove();
            if writer.last_stamp().is_some_and(|last| env.stamp_ns < last) {
                self.late += 1;
                log::warn!(
                    "{}: dropping late record on `{}` at {}",
                    self.name,
                    env.topic,
                    env.stamp_ns
                );
                continue;
            }
            writer.write(&env)?;
        }
        Ok(())
    }

    fn pump(&mut self, flush_all: bool) -> Result<(), NodeError> {
        if let Some(reason) = &self.failed {
            return Err(NodeError::Failed(reason.clone()));
        }
        self.ingest();
        let horizon = if flush_all {
            u64::MAX
        } else {
            self.newest.saturating_sub(self.window_ns)
        };
        if let Err(e) = self.write_through(horizon) {
            // keep what is on disk; stop accepting records
            self.failed = Some(e.to_string());
            self.writer = None;
            return Err(NodeError::Failed(e.to_string()));
        }
        Ok(())
    }

    /// Writes everything buffered, flushes, and returns the writer and record count.
    pub fn finish(mut self) -> Result<(W, u64), BagError> {
        if let Some(reason) = self.failed.take() {
            return Err(BagError::Corrupt {
                offset: 0,
                reason: format!("recording stopped early: {reason}"),
            });
        }
        self.ingest();
        self.write_through(u64::MAX)?;
        let writer = self.writer.take().expect("writer present until finish");
        let count = writer.count();
        Ok((writer.into_inner()?, count))
    }
}

impl<W: Write + Send> Node for Recorder<W> {
    fn name(&self) -> &str {
        &self.name
    }

    fn poll(&mut self, _now_ns: u64) -> Result<(), NodeError> {
        self.pump(false)
    }

    fn shutdown(&mut self) -> Result<(), NodeError> {
        self.pump(true)?;
        if let Some(w) = self.writer.as_mut() {
            w.flush().map_err(|e| NodeError::Failed(e.to_string()))?;
        }
        Ok(())
    }
}

/// A recorder running on its own thread. Used by the `record` command.
pub struct RecordHandle {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<u64, BagError>>>,
}

impl RecordHandle {
    pub fn start(bus: &Bus, topics: &[&str], path: impl AsRef<Path>) -> Result<Self, BagError> {
        let writer = BagWriter::create(path)?;
        let node = bus.node("rpbag_record");
        let mut rec = Recorder::new(&node, topics, writer);
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::spawn(move || {
            let _node = node;
            while !flag.load(Ordering::Acquire) {
                if let Err(e) = rec.poll(0) {
                    log::error!("recorder: {e}");
                    break;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            rec.finish().map(|(_, n)| n)
        });
        Ok(Self {
            stop,
            thread: Some(thread),
        })
    }

    /// Stops recording, flushes the bag and returns the record count.
    pub fn stop(mut self) -> Result<u64, BagError> {
        self.stop.store(true, Ordering::Release);
        self.thread
            .take()
            .expect("joined once")
            .join()
            .expect("recorder thread panicked")
    }
}

impl Drop for RecordHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
