//! Deterministic discrete-event scheduler.
//!
//! Ground-truth simulation time is an integer nanosecond count. Events fire in
//! `(fire_at, sequence)` order, so simultaneous events dispatch in the order
//! they were scheduled.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::NodeId;

/// Nanoseconds since simulation start.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrueTime(pub u64);

impl TrueTime {
    pub const ZERO: TrueTime = TrueTime(0);

    pub const fn from_nanos(ns: u64) -> Self {
        TrueTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        TrueTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        TrueTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        TrueTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond. Negative inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        TrueTime((s * 1e9).round().max(0.0) as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }
}

impl Add<u64> for TrueTime {
    type Output = TrueTime;

    fn add(self, ns: u64) -> TrueTime {
        TrueTime(self.0 + ns)
    }
}

impl Sub for TrueTime {
    type Output = u64;

    fn sub(self, rhs: TrueTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for TrueTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Handle returned by [`Kernel::schedule`]. Also the FIFO tie-breaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub id: EventId,
    pub fire_at: TrueTime,
    pub target: NodeId,
    pub payload: P,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("event scheduled at {fire_at} but simulation time is already {now}")]
    PastEvent { fire_at: TrueTime, now: TrueTime },
    #[error("run_until({t_end}) is earlier than current time {now}")]
    EndBeforeNow { t_end: TrueTime, now: TrueTime },
}

/// One dispatched event as recorded in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub id: EventId,
    pub fire_at: TrueTime,
    pub target: NodeId,
}

pub struct Kernel<P> {
    now: TrueTime,
    next_seq: u64,
    queue: BTreeMap<(TrueTime, u64), (NodeId, P)>,
    fire_times: HashMap<u64, TrueTime>,
    dispatched: u64,
    cancelled: u64,
    trace: Option<Vec<TraceEntry>>,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Kernel<P> {
    pub fn new() -> Self {
        Kernel {
            now: TrueTime::ZERO,
            next_seq: 0,
            queue: BTreeMap::new(),
            fire_times: HashMap::new(),
            dispatched: 0,
            cancelled: 0,
            trace: None,
        }
    }

    /// Keeps a record of every dispatched event (id, time, target).
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn now(&self) -> TrueTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn cancelled(&self) -> u64 {
        self.cancelled
    }

    pub fn scheduled(&self) -> u64 {
        self.next_seq
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn schedule(
        &mut self,
        fire_at: TrueTime,
        target: NodeId,
        payload: P,
    ) -> Result<EventId, KernelError> {
        if fire_at < self.now {
            return Err(KernelError::PastEvent {
                fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.insert((fire_at, seq), (target, payload));
        self.fire_times.insert(seq, fire_at);
        Ok(EventId(seq))
    }

    pub fn cancel(&mut self, id: EventId) -> bool {
        match self.fire_times.remove(&id.0) {
            Some(at) => {
                self.queue.remove(&(at, id.0));
                self.cancelled += 1;
                true
            }
            None => false,
        }
    }

    /// Dispatches every event with `fire_at <= t_end`, then sets the clock to
    /// `t_end`. The handler may schedule further events, including ones that
    /// fall inside the window.
    pub fn run_until<F>(&mut self, t_end: TrueTime, mut handler: F) -> Result<u64, KernelError>
    where
        F: FnMut(&mut Kernel<P>, Event<P>),
    {
        if t_end < self.now {
            return Err(KernelError::EndBeforeNow {
                t_end,
                now: self.now,
            });
        }
        let mut count = 0;
        while let Some(entry) = self.queue.first_entry() {
            let (fire_at, seq) = *entry.key();
            if fire_at > t_end {
                break;
            }
            let (target, payload) = entry.remove();
            self.fire_times.remove(&seq);
            self.now = fire_at;
            self.dispatched += 1;
            count += 1;
            let id = EventId(seq);
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceEntry {
                    id,
                    fire_at,
                    target,
                });
            }
            handler(
                self,
                Event {
                    id,
                    fire_at,
                    target,
                    payload,
                },
            );
        }
        self.now = t_end;
        Ok(count)
    }
}

/// The PRNG used throughout: ChaCha8, seeded from a `u64`, with independent
/// streams for independent consumers (placement, drift draws, runtime noise).
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
