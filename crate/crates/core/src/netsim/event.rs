//! Simulation clock and event queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use crate::aqm::PacketRecord;

/// Simulation time in integer nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(s: f64) -> SimTime {
        debug_assert!(s >= 0.0);
        SimTime((s * 1e9).round() as u64)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1e9
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    FlowStart { flow: u32 },
    FlowStop { flow: u32 },
    /// Packet reaches the bottleneck router.
    Enqueue(PacketRecord),
    /// Bottleneck finished serializing the packet in service.
    ServiceComplete,
    /// Packet reaches its sink.
    Deliver { id: u64, flow: u32, seq: u64 },
    /// Acknowledgement (or loss notice when `lost`) reaches the source.
    AckArrive { flow: u32, seq: u64, send_time: SimTime, lost: bool },
    Sample,
}

#[derive(Debug, Clone, Copy)]
pub struct SimEvent {
    pub time: SimTime,
    pub seq_no: u64,
    pub kind: EventKind,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq_no == other.seq_no
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    // reversed so the max-heap pops the earliest (time, seq_no)
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.cmp(&self.time).then_with(|| other.seq_no.cmp(&self.seq_no))
    }
}

/// Min-heap of events keyed by `(time, seq_no)`. Sequence numbers are
/// handed out at scheduling time, so ties resolve in scheduling order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    next_seq: u64,
    now: SimTime,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(&mut self, time: SimTime, kind: EventKind) {
        assert!(time >= self.now, "event scheduled in the past: {time} < {}", self.now);
        let seq_no = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent { time, seq_no, kind });
    }

    /// Pops the next event if it is not later than `horizon`, advancing the clock.
    pub fn pop_until(&mut self, horizon: SimTime) -> Option<SimEvent> {
        if self.heap.peek()?.time > horizon {
            return None;
        }
        let ev = self.heap.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        Some(ev)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn pending(&self) -> impl Iterator<Item = &SimEvent> {
        self.heap.iter()
    }
}
