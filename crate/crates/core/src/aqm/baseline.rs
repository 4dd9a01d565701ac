//! Comparison schemes: Drop Tail, RED, Adaptive RED, CoDel and PIE.
//!
//! PIE here is the bare PI controller: no burst allowance, no
//! derandomization, no gain auto-scaling. ARED uses the non-gentle RED law.

use super::{
    clamp_probability, ewma_update, timer_due, AqmError, ArrivalSignal, EwmaState, QueueDiscipline, Scheme, UpdateTimer,
};

/// Drops only when the buffer is full, which [`super::admit`] already does.
#[derive(Debug, Clone, Copy, Default)]
pub struct DropTail;

impl QueueDiscipline for DropTail {
    fn scheme(&self) -> Scheme {
        Scheme::DropTail
    }

    fn on_arrival(&mut self, _now: f64, _q_cur: usize) -> ArrivalSignal {
        ArrivalSignal::Probability(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedConfig {
    pub q_min: f64,
    pub q_max: f64,
    pub p_max: f64,
    pub w: f64,
}

impl RedConfig {
    pub fn validate(&self) -> Result<(), AqmError> {
        if !(self.q_min >= 0.0 && self.q_min < self.q_max && self.q_max.is_finite()) {
            return Err(AqmError::invalid(
                "q_max",
                format!("thresholds must satisfy 0 <= q_min < q_max, got q_min={} q_max={}", self.q_min, self.q_max),
            ));
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return Err(AqmError::invalid("p_max", format!("must lie in (0, 1], got {}", self.p_max)));
        }
        if !(self.w > 0.0 && self.w <= 1.0) {
            return Err(AqmError::invalid("w", format!("must lie in (0, 1], got {}", self.w)));
        }
        Ok(())
    }
}

fn red_signal(cfg: &RedConfig, p_max: f64, q_avg: f64) -> ArrivalSignal {
    if q_avg <= cfg.q_min {
        ArrivalSignal::Probability(0.0)
    } else if q_avg >= cfg.q_max {
        ArrivalSignal::HardLimit
    } else {
        ArrivalSignal::Probability(p_max * (q_avg - cfg.q_min) / (cfg.q_max - cfg.q_min))
    }
}

/// The linear RED law.
pub fn red_drop_probability(cfg: &RedConfig, q_avg: f64) -> f64 {
    match red_signal(cfg, cfg.p_max, q_avg) {
        ArrivalSignal::Probability(p) => p,
        ArrivalSignal::HardLimit => 1.0,
    }
}

#[derive(Debug, Clone)]
pub struct Red {
    cfg: RedConfig,
    ewma: EwmaState,
}

impl Red {
    pub fn new(cfg: RedConfig) -> Result<Self, AqmError> {
        cfg.validate()?;
        let ewma = EwmaState::new(cfg.w)?;
        Ok(Self { cfg, ewma })
    }
}

impl QueueDiscipline for Red {
    fn scheme(&self) -> Scheme {
        Scheme::Red
    }

    fn on_arrival(&mut self, _now: f64, q_cur: usize) -> ArrivalSignal {
        self.ewma = ewma_update(self.ewma, q_cur as f64);
        red_signal(&self.cfg, self.cfg.p_max, self.ewma.q_avg)
    }

    fn average_queue(&self) -> Option<f64> {
        Some(self.ewma.q_avg)
    }
}

pub const ARED_P_MAX_FLOOR: f64 = 0.01;
pub const ARED_P_MAX_CEIL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct AredConfig {
    /// `p_max` is the starting value.
    pub red: RedConfig,
    /// Average-queue band in which `p_max` is left alone.
    pub target_band: (f64, f64),
    pub interval: f64,
}

impl AredConfig {
    pub fn validate(&self) -> Result<(), AqmError> {
        self.red.validate()?;
        let (lo, hi) = self.target_band;
        if !(lo <= hi) {
            return Err(AqmError::invalid("target_band", format!("lower bound {lo} exceeds upper bound {hi}")));
        }
        if !(self.interval > 0.0) {
            return Err(AqmError::invalid("t_update", format!("must be positive, got {}", self.interval)));
        }
        Ok(())
    }
}

/// AIMD step on `p_max`: additive increase above the band, multiplicative
/// decrease below it.
pub fn ared_update(p_max: f64, q_avg: f64, target_band: (f64, f64)) -> f64 {
    let next = if q_avg > target_band.1 {
        p_max + (0.01f64).min(p_max / 4.0)
    } else if q_avg < target_band.0 {
        p_max * 0.9
    } else {
        p_max
    };
    next.clamp(ARED_P_MAX_FLOOR, ARED_P_MAX_CEIL)
}

#[derive(Debug, Clone)]
pub struct Ared {
    cfg: AredConfig,
    p_max: f64,
    ewma: EwmaState,
    timer: UpdateTimer,
}

impl Ared {
    pub fn new(cfg: AredConfig) -> Result<Self, AqmError> {
        cfg.validate()?;
        let ewma = EwmaState::new(cfg.red.w)?;
        let timer = UpdateTimer::new(cfg.interval, 0.0)?;
        Ok(Self { p_max: cfg.red.p_max, cfg, ewma, timer })
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }
}

impl QueueDiscipline for Ared {
    fn scheme(&self) -> Scheme {
        Scheme::Ared
    }

    fn on_arrival(&mut self, now: f64, q_cur: usize) -> ArrivalSignal {
        self.ewma = ewma_update(self.ewma, q_cur as f64);
        let (fired, timer) = timer_due(now, self.timer);
        self.timer = timer;
        if fired {
            self.p_max = ared_update(self.p_max, self.ewma.q_avg, self.cfg.target_band);
        }
        red_signal(&self.cfg.red, self.p_max, self.ewma.q_avg)
    }

    fn average_queue(&self) -> Option<f64> {
        Some(self.ewma.q_avg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodelConfig {
    pub target: f64,
    pub interval: f64,
}

impl Default for CodelConfig {
    fn default() -> Self {
        Self { target: 0.005, interval: 0.100 }
    }
}

/// CoDel control-law state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodelState {
    pub target: f64,
    pub interval: f64,
    pub drop_count: u32,
    /// Drop count when the previous dropping episode started.
    pub last_count: u32,
    pub dropping: bool,
    pub next_drop_time: f64,
    /// When the sojourn time first rose above the target in the current
    /// above-target stretch.
    pub first_above_time: Option<f64>,
}

impl CodelState {
    pub fn new(cfg: &CodelConfig) -> Result<Self, AqmError> {
        if !(cfg.interval > 0.0) {
            return Err(AqmError::invalid("interval", format!("must be positive, got {}", cfg.interval)));
        }
        if !(cfg.target >= 0.0) {
            return Err(AqmError::invalid("t_target", format!("must be non-negative, got {}", cfg.target)));
        }
        Ok(Self {
            target: cfg.target,
            interval: cfg.interval,
            drop_count: 0,
            last_count: 0,
            dropping: false,
            next_drop_time: 0.0,
            first_above_time: None,
        })
    }

    fn control_law(&self, t: f64) -> f64 {
        t + self.interval / f64::from(self.drop_count.max(1)).sqrt()
    }
}

/// One CoDel decision for the packet just taken off the head of the queue.
/// `backlog` is the number of packets still queued behind it.
pub fn codel_on_dequeue(st: CodelState, sojourn: f64, now: f64, backlog: usize) -> (bool, CodelState) {
    let mut st = st;

    let ok_to_drop = if sojourn < st.target || backlog <= 1 {
        st.first_above_time = None;
        false
    } else {
        match st.first_above_time {
            None => {
                st.first_above_time = Some(now);
                false
            }
            Some(t0) => now >= t0 + st.interval,
        }
    };

    if st.dropping {
        if !ok_to_drop {
            st.dropping = false;
            return (false, st);
        }
        if now >= st.next_drop_time {
            st.drop_count += 1;
            st.next_drop_time = st.control_law(st.next_drop_time);
            return (true, st);
        }
        return (false, st);
    }

    if ok_to_drop {
        st.dropping = true;
        let delta = st.drop_count.saturating_sub(st.last_count);
        st.drop_count = if delta > 1 && now - st.next_drop_time < 16.0 * st.interval { delta } else { 1 };
        st.next_drop_time = st.control_law(now);
        st.last_count = st.drop_count;
        return (true, st);
    }
    (false, st)
}

#[derive(Debug, Clone)]
pub struct Codel {
    state: CodelState,
}

impl Codel {
    pub fn new(cfg: CodelConfig) -> Result<Self, AqmError> {
        Ok(Self { state: CodelState::new(&cfg)? })
    }

    pub fn state(&self) -> &CodelState {
        &self.state
    }
}

impl QueueDiscipline for Codel {
    fn scheme(&self) -> Scheme {
        Scheme::Codel
    }

    fn on_arrival(&mut self, _now: f64, _q_cur: usize) -> ArrivalSignal {
        ArrivalSignal::Probability(0.0)
    }

    fn on_dequeue(&mut self, now: f64, sojourn: f64, backlog: usize) -> bool {
        let (drop, next) = codel_on_dequeue(self.state, sojourn, now, backlog);
        self.state = next;
        drop
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PieConfig {
    pub target: f64,
    pub t_update: f64,
    /// Per-second gain on the delay error.
    pub alpha: f64,
    /// Per-second gain on the delay trend.
    pub beta: f64,
    /// Drain rate used to turn queue length into a delay estimate.
    pub drain_rate_pkts: f64,
}

impl PieConfig {
    pub fn validate(&self) -> Result<(), AqmError> {
        if !(self.target >= 0.0) {
            return Err(AqmError::invalid("t_target", format!("must be non-negative, got {}", self.target)));
        }
        if !(self.t_update > 0.0) {
            return Err(AqmError::invalid("t_update", format!("must be positive, got {}", self.t_update)));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(AqmError::invalid("alpha", "gains must be non-negative"));
        }
        if !(self.drain_rate_pkts > 0.0) {
            return Err(AqmError::invalid("drain_rate_pkts", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PieState {
    pub drop_prob: f64,
    pub qdelay_old: f64,
    pub alpha_gain: f64,
    pub beta_gain: f64,
    pub timer: UpdateTimer,
}

/// PI update of the PIE drop probability.
pub fn pie_update(st: PieState, qdelay: f64, target: f64) -> PieState {
    let p = st.drop_prob + st.alpha_gain * (qdelay - target) + st.beta_gain * (qdelay - st.qdelay_old);
    PieState { drop_prob: clamp_probability(p), qdelay_old: qdelay, ..st }
}

#[derive(Debug, Clone)]
pub struct Pie {
    cfg: PieConfig,
    state: PieState,
}

impl Pie {
    pub fn new(cfg: PieConfig) -> Result<Self, AqmError> {
        cfg.validate()?;
        let state = PieState {
            drop_prob: 0.0,
            qdelay_old: 0.0,
            alpha_gain: cfg.alpha,
            beta_gain: cfg.beta,
            timer: UpdateTimer::new(cfg.t_update, 0.0)?,
        };
        Ok(Self { cfg, state })
    }

    pub fn state(&self) -> &PieState {
        &self.state
    }
}

impl QueueDiscipline for Pie {
    fn scheme(&self) -> Scheme {
        Scheme::Pie
    }

    fn on_arrival(&mut self, now: f64, q_cur: usize) -> ArrivalSignal {
        let (fired, timer) = timer_due(now, self.state.timer);
        self.state.timer = timer;
        if fired {
            let qdelay = q_cur as f64 / self.cfg.drain_rate_pkts;
            self.state = pie_update(self.state, qdelay, self.cfg.target);
        }
        ArrivalSignal::Probability(self.state.drop_prob)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aqm::{apply_signal, DropDecision, PacketRecord, QueueState};
    use proptest::prelude::*;

    fn red(q_min: f64, q_max: f64, p_max: f64) -> RedConfig {
        RedConfig { q_min, q_max, p_max, w: 0.1 }
    }

    #[test]
    fn red_examples() {
        let c = red(0.0, 1000.0, 0.1);
        assert!((red_drop_probability(&c, 300.0) - 0.03).abs() < 1e-15);
        assert_eq!(red_drop_probability(&red(100.0, 300.0, 0.1), 50.0), 0.0);
        assert_eq!(red_drop_probability(&red(100.0, 300.0, 0.1), 350.0), 1.0);
    }

    #[test]
    fn ared_examples() {
        let band = (225.0, 275.0);
        assert!((ared_update(0.1, 300.0, band) - 0.11).abs() < 1e-15);
        assert!((ared_update(0.1, 200.0, band) - 0.09).abs() < 1e-15);
        assert_eq!(ared_update(0.1, 250.0, band), 0.1);
        assert_eq!(ared_update(0.5, 300.0, band), 0.5);
        assert_eq!(ared_update(0.01, 0.0, band), 0.01);
    }

    fn codel() -> CodelState {
        CodelState::new(&CodelConfig { target: 0.040, interval: 0.100 }).unwrap()
    }

    #[test]
    fn codel_quiet_below_target() {
        let mut st = codel();
        for i in 0..10_000 {
            let (drop, next) = codel_on_dequeue(st, 0.039, i as f64 * 1e-3, 500);
            assert!(!drop);
            st = next;
        }
    }

    #[test]
    fn codel_enters_dropping_after_one_interval() {
        let t0 = 1.0;
        let (drop, st) = codel_on_dequeue(codel(), 0.05, t0, 100);
        assert!(!drop);
        assert_eq!(st.first_above_time, Some(t0));
        let (drop, st) = codel_on_dequeue(st, 0.05, t0 + 0.05, 100);
        assert!(!drop);
        let (drop, st) = codel_on_dequeue(st, 0.05, t0 + 0.100, 100);
        assert!(drop);
        assert!(st.dropping);
        assert_eq!(st.drop_count, 1);
        assert!((st.next_drop_time - (t0 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn codel_spacing_shrinks_with_sqrt_count() {
        let (_, st) = codel_on_dequeue(codel(), 0.05, 0.0, 100);
        let (_, st) = codel_on_dequeue(st, 0.05, 0.1, 100);
        let first_gap = st.next_drop_time - 0.1;
        let at = st.next_drop_time;
        let (drop, st) = codel_on_dequeue(st, 0.05, at, 100);
        assert!(drop);
        assert_eq!(st.drop_count, 2);
        let second_gap = st.next_drop_time - at;
        assert!((second_gap / first_gap - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn codel_leaves_dropping_when_delay_recovers() {
        let (_, st) = codel_on_dequeue(codel(), 0.05, 0.0, 100);
        let (_, st) = codel_on_dequeue(st, 0.05, 0.1, 100);
        assert!(st.dropping);
        let (drop, st) = codel_on_dequeue(st, 0.01, 0.15, 100);
        assert!(!drop);
        assert!(!st.dropping);
    }

    #[test]
    fn pie_examples() {
        let st = PieState {
            drop_prob: 0.2,
            qdelay_old: 0.040,
            alpha_gain: 0.125,
            beta_gain: 1.25,
            timer: UpdateTimer::new(0.015, 0.0).unwrap(),
        };
        assert_eq!(pie_update(st, 0.040, 0.040).drop_prob, 0.2);
        let moved = pie_update(PieState { qdelay_old: 0.050, ..st }, 0.060, 0.040);
        assert!((moved.drop_prob - 0.2 - 0.015).abs() < 1e-15);
        assert_eq!(moved.qdelay_old, 0.060);
        let floor = pie_update(PieState { drop_prob: 0.001, ..st }, 0.0, 0.040);
        assert_eq!(floor.drop_prob, 0.0);
    }

    proptest! {
        #[test]
        fn drop_tail_matches_reference_queue(cap in 1usize..40, ops in prop::collection::vec(any::<bool>(), 0..500)) {
            let mut q = QueueState::new(cap);
            let mut aqm = DropTail;
            let mut reference = 0usize;
            for (i, arrive) in ops.into_iter().enumerate() {
                if arrive {
                    let pkt = PacketRecord { id: i as u64, flow_id: 0, seq: i as u64, size: 1000, enqueue_time: 0.0 };
                    let sig = aqm.on_arrival(0.0, q.occupancy());
                    let d = apply_signal(&mut q, pkt, sig, 0.0);
                    let expect_drop = reference == cap;
                    prop_assert_eq!(d == DropDecision::ForcedDrop, expect_drop);
                    prop_assert!(d != DropDecision::ProbabilisticDrop);
                    if !expect_drop { reference += 1; }
                } else if reference > 0 {
                    q.pop_front();
                    reference -= 1;
                }
            }
        }

        #[test]
        fn ared_and_pie_stay_clamped(qs in prop::collection::vec(0.0f64..1000.0, 1..300)) {
            let mut p = 0.1;
            let mut st = PieState { drop_prob: 0.0, qdelay_old: 0.0, alpha_gain: 0.125, beta_gain: 1.25, timer: UpdateTimer::new(0.015, 0.0).unwrap() };
            for q in qs {
                p = ared_update(p, q, (225.0, 275.0));
                prop_assert!((ARED_P_MAX_FLOOR..=ARED_P_MAX_CEIL).contains(&p));
                st = pie_update(st, q / 6250.0 * 10.0, 0.040);
                prop_assert!((0.0..=1.0).contains(&st.drop_prob));
            }
        }

        #[test]
        fn codel_never_drops_short_queue(sojourns in prop::collection::vec(0.0f64..1.0, 1..300), backlog in 0usize..=1) {
            let mut st = codel();
            for (i, s) in sojourns.into_iter().enumerate() {
                let (drop, next) = codel_on_dequeue(st, s, i as f64 * 0.01, backlog);
                prop_assert!(!drop);
                st = next;
            }
        }
    }
}
