//! Summary statistics over a simulation trace.

use crate::netsim::{PacketFate, QueueSample, Trace};

/// Time-weighted mean of the instantaneous queue over `[from, to)`.
///
/// Samples are treated as a step function: each value holds until the next
/// sample, and the last one holds to `to`. Returns `None` when no sample
/// falls at or before `to` or the window is empty.
pub fn time_weighted_queue(samples: &[QueueSample], from: f64, to: f64) -> Option<f64> {
    step_mean(samples, from, to, |s| s.q_cur as f64)
}

fn step_mean(samples: &[QueueSample], from: f64, to: f64, value: impl Fn(&QueueSample) -> f64) -> Option<f64> {
    if !(to > from) || samples.is_empty() {
        return None;
    }
    let mut area = 0.0;
    let mut covered = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let end = samples.get(i + 1).map_or(to, |n| n.time).min(to);
        let start = s.time.max(from);
        if end > start {
            area += value(s) * (end - start);
            covered += end - start;
        }
    }
    (covered > 0.0).then(|| area / covered)
}

/// Mean queue over the whole run.
pub fn average_queue_length(trace: &Trace) -> f64 {
    time_weighted_queue(&trace.samples, 0.0, trace.duration).unwrap_or(0.0)
}

/// Mean queue over the second half of the run.
pub fn equilibrium_queue_length(trace: &Trace) -> f64 {
    time_weighted_queue(&trace.samples, trace.duration / 2.0, trace.duration).unwrap_or(0.0)
}

/// Dropped over arrived at the bottleneck; zero when nothing arrived.
pub fn drop_rate(trace: &Trace) -> f64 {
    if trace.arrivals == 0 {
        0.0
    } else {
        trace.drops() as f64 / trace.arrivals as f64
    }
}

/// Mean per-sink goodput in bits per second. Each sink is measured between
/// its first and last delivery; sinks with fewer than two deliveries are
/// left out.
pub fn throughput(trace: &Trace) -> f64 {
    let mut first = vec![f64::INFINITY; trace.n_flows];
    let mut last = vec![f64::NEG_INFINITY; trace.n_flows];
    let mut count = vec![0u64; trace.n_flows];
    for p in &trace.packets {
        if let Some(t) = p.deliver_time() {
            let f = p.flow as usize;
            first[f] = first[f].min(t);
            last[f] = last[f].max(t);
            count[f] += 1;
        }
    }
    let bits = 8.0 * f64::from(trace.packet_size);
    let rates: Vec<f64> = (0..trace.n_flows)
        .filter(|&f| count[f] >= 2 && last[f] > first[f])
        .map(|f| (count[f] - 1) as f64 * bits / (last[f] - first[f]))
        .collect();
    if rates.is_empty() {
        0.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    }
}

/// Sum of delivered bits over the run length: the bottleneck utilisation
/// in bits per second.
pub fn aggregate_throughput(trace: &Trace) -> f64 {
    trace.delivered as f64 * 8.0 * f64::from(trace.packet_size) / trace.duration
}

/// Mean one-way delay of delivered packets.
pub fn latency(trace: &Trace) -> f64 {
    let (sum, n) = delivered(trace).fold((0.0, 0u64), |(s, n), (_, d)| (s + d, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean absolute difference between one-way delays of consecutively
/// delivered packets of the same flow, pooled over all flows.
pub fn jitter(trace: &Trace) -> f64 {
    let mut by_delivery: Vec<(f64, u32, f64)> =
        trace.packets.iter().filter_map(|p| p.deliver_time().map(|t| (t, p.flow, t - p.send_time))).collect();
    by_delivery.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut prev = vec![None; trace.n_flows];
    let (mut sum, mut n) = (0.0, 0u64);
    for (_, flow, d) in by_delivery {
        if let Some(p) = prev[flow as usize].replace(d) {
            sum += (d - p).abs();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn delivered(trace: &Trace) -> impl Iterator<Item = (f64, f64)> + '_ {
    trace
        .packets
        .iter()
        .filter(|p| p.fate == PacketFate::Delivered)
        .map(|p| (p.event_time, p.event_time - p.send_time))
}

/// Trailing moving average of the instantaneous queue, evaluated at every
/// sample time. The window is clipped at the start of the trace.
pub fn moving_average_queue(samples: &[QueueSample], window: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(samples.len());
    let t0 = samples.first().map_or(0.0, |s| s.time);
    for (i, s) in samples.iter().enumerate() {
        let value = if s.time > t0 {
            let from = (s.time - window).max(t0);
            let lo = samples[..=i].partition_point(|x| x.time <= from).saturating_sub(1);
            step_mean(&samples[lo..=i], from, s.time, |x| x.q_cur as f64)
                .unwrap_or(s.q_cur as f64)
        } else {
            s.q_cur as f64
        };
        out.push((s.time, value));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub aql: f64,
    pub equilibrium_aql: f64,
    pub drop_rate: f64,
    pub throughput_bps: f64,
    pub utilisation_bps: f64,
    pub latency_s: f64,
    pub jitter_s: f64,
}

impl MetricsReport {
    pub fn from_trace(trace: &Trace) -> Self {
        Self {
            aql: average_queue_length(trace),
            equilibrium_aql: equilibrium_queue_length(trace),
            drop_rate: drop_rate(trace),
            throughput_bps: throughput(trace),
            utilisation_bps: aggregate_throughput(trace),
            latency_s: latency(trace),
            jitter_s: jitter(trace),
        }
    }

    pub const COLUMNS: [&'static str; 7] =
        ["aql", "equilibrium_aql", "drop_rate", "throughput_bps", "utilisation_bps", "latency_s", "jitter_s"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.aql,
            self.equilibrium_aql,
            self.drop_rate,
            self.throughput_bps,
            self.utilisation_bps,
            self.latency_s,
            self.jitter_s,
        ]
    }
}
