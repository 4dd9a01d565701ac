//! ACK-clocked window model with CUBIC growth.
//!
//! This is deliberately small: slow start, cubic congestion avoidance with
//! the standard TCP-friendly floor, a single multiplicative decrease per
//! round trip, and no retransmission timer. Lost payload is never resent;
//! the greedy source just keeps emitting new sequence numbers.

/// CUBIC constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicParams {
    /// Scaling constant `C` in packets per second cubed.
    pub c: f64,
    /// Fraction of the window removed on loss.
    pub beta: f64,
    /// Track the Reno-equivalent window and never grow slower than it.
    pub tcp_friendly: bool,
}

impl Default for CubicParams {
    fn default() -> Self {
        Self { c: 0.4, beta: 0.3, tcp_friendly: true }
    }
}

impl CubicParams {
    /// Time for the cubic curve to climb back to `w_max` after a reduction.
    pub fn k(&self, w_max: f64) -> f64 {
        (w_max * self.beta / self.c).cbrt()
    }

    /// Per-ACK additive gain of the Reno-equivalent window.
    fn aimd_gain(&self) -> f64 {
        let m = 1.0 - self.beta;
        3.0 * (1.0 - m) / (1.0 + m)
    }
}

/// `W(t) = C (t - K)^3 + w_max`.
pub fn cubic_window(params: &CubicParams, elapsed: f64, k: f64, w_max: f64) -> f64 {
    params.c * (elapsed - k).powi(3) + w_max
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcState {
    SlowStart,
    CongestionAvoidance,
    Recovery,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub flow_id: u32,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub state: CcState,
    pub inflight: u32,
    /// Smoothed RTT; zero until the first sample.
    pub rtt_estimate: f64,
    pub next_seq: u64,
    pub active_interval: (f64, f64),
    pub cubic_wmax: f64,
    pub cubic_epoch: Option<f64>,
    cubic_k: f64,
    cubic_origin: f64,
    reno_window: f64,
    /// Losses of packets below this sequence number belong to a round trip
    /// that has already been penalized.
    recovery_point: u64,
    params: CubicParams,
}

impl FlowState {
    pub fn new(flow_id: u32, initial_cwnd: f64, active_interval: (f64, f64), params: CubicParams) -> Self {
        Self {
            flow_id,
            cwnd: initial_cwnd.max(1.0),
            ssthresh: f64::INFINITY,
            state: CcState::SlowStart,
            inflight: 0,
            rtt_estimate: 0.0,
            next_seq: 0,
            active_interval,
            cubic_wmax: 0.0,
            cubic_epoch: None,
            cubic_k: 0.0,
            cubic_origin: 0.0,
            reno_window: 0.0,
            recovery_point: 0,
            params,
        }
    }

    /// Packets the window currently allows on top of those in flight.
    pub fn send_allowance(&self) -> u32 {
        let window = self.cwnd.floor().max(1.0) as u32;
        window.saturating_sub(self.inflight)
    }

    /// Records a transmission and returns its sequence number.
    pub fn on_send(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.inflight += 1;
        seq
    }

    fn sample_rtt(&mut self, rtt: f64) {
        if rtt <= 0.0 {
            return;
        }
        self.rtt_estimate = if self.rtt_estimate == 0.0 { rtt } else { 0.875 * self.rtt_estimate + 0.125 * rtt };
    }

    fn start_epoch(&mut self, now: f64) {
        self.cubic_epoch = Some(now);
        if self.cwnd < self.cubic_wmax {
            self.cubic_k = ((self.cubic_wmax - self.cwnd) / self.params.c).cbrt();
            self.cubic_origin = self.cubic_wmax;
        } else {
            self.cubic_k = 0.0;
            self.cubic_origin = self.cwnd;
        }
        self.reno_window = self.cwnd;
    }

    fn congestion_avoidance(&mut self, now: f64) {
        let epoch = match self.cubic_epoch {
            Some(e) => e,
            None => {
                self.start_epoch(now);
                now
            }
        };
        let t = now - epoch + self.rtt_estimate;
        let target = self.params.c * (t - self.cubic_k).powi(3) + self.cubic_origin;
        if target > self.cwnd {
            self.cwnd += (target - self.cwnd) / self.cwnd;
        } else {
            self.cwnd += 0.01 / self.cwnd;
        }
        if self.params.tcp_friendly {
            self.reno_window += self.params.aimd_gain() / self.cwnd;
            if self.reno_window > self.cwnd {
                self.cwnd = self.reno_window;
            }
        }
    }
}

/// Window update for an ACK of new data `seq`, sampled at `now` with the
/// given round-trip sample.
pub fn tcp_on_ack(mut f: FlowState, now: f64, seq: u64, rtt_sample: f64) -> FlowState {
    f.inflight = f.inflight.saturating_sub(1);
    f.sample_rtt(rtt_sample);
    match f.state {
        CcState::SlowStart => {
            f.cwnd += 1.0;
            if f.cwnd >= f.ssthresh {
                f.state = CcState::CongestionAvoidance;
                f.cubic_epoch = None;
            }
        }
        CcState::Recovery => {
            if seq >= f.recovery_point {
                f.state = CcState::CongestionAvoidance;
                f.cubic_epoch = None;
                f.congestion_avoidance(now);
            }
        }
        CcState::CongestionAvoidance => f.congestion_avoidance(now),
    }
    f
}

/// Reaction to the loss of packet `seq`: one multiplicative decrease per
/// round trip.
pub fn tcp_on_loss(mut f: FlowState, _now: f64, seq: u64) -> FlowState {
    f.inflight = f.inflight.saturating_sub(1);
    if seq < f.recovery_point {
        return f;
    }
    f.cubic_wmax = f.cwnd;
    f.cwnd = (f.cwnd * (1.0 - f.params.beta)).max(1.0);
    f.ssthresh = f.cwnd.max(2.0);
    f.state = CcState::Recovery;
    f.cubic_epoch = None;
    f.recovery_point = f.next_seq;
    f
}
