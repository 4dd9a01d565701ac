//! Queue-management contract shared by every scheme.
//!
//! A scheme sees each arrival at the bottleneck through
//! [`QueueDiscipline::on_arrival`] and answers with a drop probability (or a
//! hard-limit verdict). The simulator draws the uniform variate and calls
//! [`admit`], so drop logic never touches the random stream directly.
//! Sojourn-based schemes additionally hook [`QueueDiscipline::on_dequeue`].

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub mod baseline;
pub mod beta;

pub use baseline::{
    ared_update, codel_on_dequeue, pie_update, red_drop_probability, Ared, AredConfig, Codel, CodelConfig, CodelState,
    DropTail, Pie, PieConfig, PieState, Red, RedConfig,
};
pub use beta::{
    abetared_update, betared_drop_probability, betared_mu, dbetared_delta, dbetared_update, target_queue_from_delay,
    ABetaRed, AdaptiveBetaConfig, AdaptiveState, BetaDropFunction, BetaRed, BetaRedConfig, DBetaRed,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AqmError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error(transparent)]
    Numeric(#[from] crate::special::SpecialError),
}

impl AqmError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        AqmError::InvalidParameter { field, reason: reason.into() }
    }
}

/// One packet waiting in a router buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    /// Index of the packet in the run's send order.
    pub id: u64,
    pub flow_id: u32,
    pub seq: u64,
    pub size: u32,
    pub enqueue_time: f64,
}

/// Bounded FIFO of packets at a router.
#[derive(Debug, Clone)]
pub struct QueueState {
    capacity: usize,
    packets: VecDeque<PacketRecord>,
}

impl QueueState {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "buffer must hold at least one packet");
        Self { capacity, packets: VecDeque::with_capacity(capacity.min(4096)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn occupancy(&self) -> usize {
        self.packets.len()
    }

    pub fn is_full(&self) -> bool {
        self.packets.len() >= self.capacity
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn pop_front(&mut self) -> Option<PacketRecord> {
        self.packets.pop_front()
    }

    pub fn front(&self) -> Option<&PacketRecord> {
        self.packets.front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PacketRecord> {
        self.packets.iter()
    }

    fn push_back(&mut self, p: PacketRecord) {
        debug_assert!(!self.is_full());
        self.packets.push_back(p);
    }
}

/// Exponentially weighted moving average of the queue length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EwmaState {
    pub q_avg: f64,
    weight: f64,
}

impl EwmaState {
    pub fn new(weight: f64) -> Result<Self, AqmError> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(AqmError::invalid("w", format!("averaging weight must lie in (0, 1], got {weight}")));
        }
        Ok(Self { q_avg: 0.0, weight })
    }

    pub fn with_average(mut self, q_avg: f64) -> Self {
        self.q_avg = q_avg;
        self
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

/// `q_avg <- (1 - w) q_avg + w q_cur`.
pub fn ewma_update(s: EwmaState, q_cur: f64) -> EwmaState {
    EwmaState { q_avg: (1.0 - s.weight) * s.q_avg + s.weight * q_cur, weight: s.weight }
}

/// Periodic timer polled from the packet path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateTimer {
    period: f64,
    pub next_fire: f64,
}

impl UpdateTimer {
    /// Timer whose first firing is one period after `start`.
    pub fn new(period: f64, start: f64) -> Result<Self, AqmError> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(AqmError::invalid("t_update", format!("period must be positive, got {period}")));
        }
        Ok(Self { period, next_fire: start + period })
    }

    pub fn period(&self) -> f64 {
        self.period
    }
}

/// Fires when `t` has reached the scheduled time. A late poll fires once
/// and skips the missed periods, leaving `next_fire` strictly after `t`.
pub fn timer_due(t: f64, timer: UpdateTimer) -> (bool, UpdateTimer) {
    if t < timer.next_fire {
        return (false, timer);
    }
    let skipped = ((t - timer.next_fire) / timer.period).floor();
    let mut next = timer.next_fire + (skipped + 1.0) * timer.period;
    while next <= t {
        next += timer.period;
    }
    (true, UpdateTimer { next_fire: next, ..timer })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropDecision {
    Accept,
    ProbabilisticDrop,
    ForcedDrop,
}

/// Clamp `p` to `[0, 1]`; NaN maps to 0.
pub(crate) fn clamp_probability(p: f64) -> f64 {
    if p.is_nan() {
        0.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

/// Applies an enqueue-side drop probability. On `Accept` the packet is
/// appended to the queue.
pub fn admit(q: &mut QueueState, packet: PacketRecord, p: f64, u: f64) -> DropDecision {
    debug_assert!((0.0..=1.0).contains(&p));
    if q.is_full() {
        DropDecision::ForcedDrop
    } else if u < p {
        DropDecision::ProbabilisticDrop
    } else {
        q.push_back(packet);
        DropDecision::Accept
    }
}

/// What a scheme wants done with an arriving packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalSignal {
    /// Drop with this probability.
    Probability(f64),
    /// The average has crossed the scheme's upper hard limit.
    HardLimit,
}

/// Runs [`admit`] for a signal, mapping the hard-limit branch to a forced drop.
pub fn apply_signal(q: &mut QueueState, packet: PacketRecord, signal: ArrivalSignal, u: f64) -> DropDecision {
    match signal {
        ArrivalSignal::HardLimit => DropDecision::ForcedDrop,
        ArrivalSignal::Probability(p) => admit(q, packet, clamp_probability(p), u),
    }
}

/// An AQM installed at the bottleneck router.
pub trait QueueDiscipline: Send {
    fn scheme(&self) -> Scheme;

    /// Called for every arrival with the occupancy seen by that packet.
    fn on_arrival(&mut self, now: f64, q_cur: usize) -> ArrivalSignal;

    /// Called when the head packet leaves the buffer. Returning `true`
    /// drops it instead of transmitting it.
    fn on_dequeue(&mut self, _now: f64, _sojourn: f64, _backlog: usize) -> bool {
        false
    }

    /// Averaged queue length, for schemes that keep one.
    fn average_queue(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    DropTail,
    Red,
    Ared,
    Codel,
    Pie,
    BetaRed,
    ABetaRed,
    DBetaRed,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::DropTail,
        Scheme::Red,
        Scheme::Ared,
        Scheme::Codel,
        Scheme::Pie,
        Scheme::BetaRed,
        Scheme::ABetaRed,
        Scheme::DBetaRed,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::DropTail => "droptail",
            Scheme::Red => "red",
            Scheme::Ared => "ared",
            Scheme::Codel => "codel",
            Scheme::Pie => "pie",
            Scheme::BetaRed => "betared",
            Scheme::ABetaRed => "abetared",
            Scheme::DBetaRed => "dbetared",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = AqmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| AqmError::invalid("aqm", format!("unknown scheme `{s}`")))
    }
}

/// Fully resolved configuration of one scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum AqmConfig {
    DropTail,
    Red(RedConfig),
    Ared(AredConfig),
    Codel(CodelConfig),
    Pie(PieConfig),
    BetaRed(BetaRedConfig),
    ABetaRed(AdaptiveBetaConfig),
    DBetaRed(AdaptiveBetaConfig),
}

impl AqmConfig {
    pub fn scheme(&self) -> Scheme {
        match self {
            AqmConfig::DropTail => Scheme::DropTail,
            AqmConfig::Red(_) => Scheme::Red,
            AqmConfig::Ared(_) => Scheme::Ared,
            AqmConfig::Codel(_) => Scheme::Codel,
            AqmConfig::Pie(_) => Scheme::Pie,
            AqmConfig::BetaRed(_) => Scheme::BetaRed,
            AqmConfig::ABetaRed(_) => Scheme::ABetaRed,
            AqmConfig::DBetaRed(_) => Scheme::DBetaRed,
        }
    }

    pub fn build(&self) -> Result<Box<dyn QueueDiscipline>, AqmError> {
        Ok(match self {
            AqmConfig::DropTail => Box::new(DropTail),
            AqmConfig::Red(c) => Box::new(Red::new(c.clone())?),
            AqmConfig::Ared(c) => Box::new(Ared::new(c.clone())?),
            AqmConfig::Codel(c) => Box::new(Codel::new(c.clone())?),
            AqmConfig::Pie(c) => Box::new(Pie::new(c.clone())?),
            AqmConfig::BetaRed(c) => Box::new(BetaRed::new(c.clone())?),
            AqmConfig::ABetaRed(c) => Box::new(ABetaRed::new(c.clone())?),
            AqmConfig::DBetaRed(c) => Box::new(DBetaRed::new(c.clone())?),
        })
    }
}
