//! BetaRED and its two adaptive variants.
//!
//! All three replace RED's linear drop law with `p_max * I_z(mu, sigma)`,
//! the beta CDF addressed by mean and standard deviation, evaluated at the
//! normalized average queue `z = (q_avg - q_min) / (q_max - q_min)`. The mean
//! sits on the target queue and `sigma = theta * sqrt(mu (1 - mu))`.
//!
//! * [`BetaRed`] keeps the curve fixed.
//! * [`ABetaRed`] rescales `p_max` every `t_update` seconds.
//! * [`DBetaRed`] moves a virtual target (and thus `mu`) every `t_update`
//!   seconds with `p_max = 1`.

use super::{ewma_update, timer_due, AqmError, ArrivalSignal, EwmaState, QueueDiscipline, Scheme, UpdateTimer};
use crate::special::{moments_to_shape, regularized_incomplete_beta, sigma_from_theta, BetaMoments, BetaShape};

/// Lower clamp of the adaptive maximum probability.
pub const ABETARED_P_MAX_FLOOR: f64 = 0.01;
/// Upper clamp of the adaptive maximum probability.
pub const ABETARED_P_MAX_CEIL: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct BetaRedConfig {
    pub q_target: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub p_max: f64,
    pub w: f64,
    pub theta: f64,
}

impl BetaRedConfig {
    pub fn validate(&self) -> Result<(), AqmError> {
        if !(self.q_min >= 0.0 && self.q_min < self.q_max && self.q_max.is_finite()) {
            return Err(AqmError::invalid(
                "q_max",
                format!("thresholds must satisfy 0 <= q_min < q_max, got q_min={} q_max={}", self.q_min, self.q_max),
            ));
        }
        if !(self.q_target > self.q_min && self.q_target < self.q_max) {
            return Err(AqmError::invalid(
                "q_target",
                format!("q_target={} must lie strictly between q_min={} and q_max={}", self.q_target, self.q_min, self.q_max),
            ));
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return Err(AqmError::invalid("p_max", format!("must lie in (0, 1], got {}", self.p_max)));
        }
        if !(self.w > 0.0 && self.w <= 1.0) {
            return Err(AqmError::invalid("w", format!("must lie in (0, 1], got {}", self.w)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(AqmError::invalid("theta", format!("must lie in (0, 1), got {}", self.theta)));
        }
        Ok(())
    }

    fn span(&self) -> f64 {
        self.q_max - self.q_min
    }
}

/// Beta mean matching the target queue: `(q_target - q_min) / (q_max - q_min)`.
pub fn betared_mu(cfg: &BetaRedConfig) -> f64 {
    (cfg.q_target - cfg.q_min) / cfg.span()
}

/// A frozen drop-probability curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaDropFunction {
    mu: f64,
    sigma: f64,
    shape: BetaShape,
    p_max: f64,
    q_min: f64,
    q_max: f64,
}

impl BetaDropFunction {
    /// Curve whose beta mean sits on `center` (in packets).
    pub fn new(q_min: f64, q_max: f64, center: f64, theta: f64, p_max: f64) -> Result<Self, AqmError> {
        let mu = (center - q_min) / (q_max - q_min);
        let sigma = sigma_from_theta(theta, mu)?;
        let shape = moments_to_shape(BetaMoments::new(mu, sigma)?)?;
        Ok(Self { mu, sigma, shape, p_max, q_min, q_max })
    }

    pub fn from_config(cfg: &BetaRedConfig) -> Result<Self, AqmError> {
        Self::new(cfg.q_min, cfg.q_max, cfg.q_target, cfg.theta, cfg.p_max)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn shape(&self) -> BetaShape {
        self.shape
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn with_p_max(self, p_max: f64) -> Self {
        Self { p_max, ..self }
    }

    pub fn signal(&self, q_avg: f64) -> ArrivalSignal {
        if q_avg <= self.q_min {
            ArrivalSignal::Probability(0.0)
        } else if q_avg >= self.q_max {
            ArrivalSignal::HardLimit
        } else {
            let z = ((q_avg - self.q_min) / (self.q_max - self.q_min)).clamp(0.0, 1.0);
            // shape is validated and z is clamped, so the kernel cannot reject it
            let cdf = regularized_incomplete_beta(z, self.shape).unwrap_or(1.0);
            ArrivalSignal::Probability(self.p_max * cdf)
        }
    }

    pub fn probability(&self, q_avg: f64) -> f64 {
        match self.signal(q_avg) {
            ArrivalSignal::Probability(p) => p,
            ArrivalSignal::HardLimit => 1.0,
        }
    }
}

/// Drop probability of a BetaRED configuration at average queue `q_avg`.
pub fn betared_drop_probability(cfg: &BetaRedConfig, q_avg: f64) -> Result<f64, AqmError> {
    cfg.validate()?;
    Ok(BetaDropFunction::from_config(cfg)?.probability(q_avg))
}

/// Target queue in packets for a link of `c_pkts` packets per second and a
/// target delay in seconds.
pub fn target_queue_from_delay(c_pkts: f64, t_target: f64) -> f64 {
    c_pkts * t_target
}

/// Parameters shared by the adaptive variants.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveBetaConfig {
    /// `p_max` here is the initial value for ABetaRED and the fixed value
    /// for DBetaRED.
    pub base: BetaRedConfig,
    pub alpha_gain: f64,
    pub beta_gain: f64,
    pub t_update: f64,
}

impl AdaptiveBetaConfig {
    pub fn validate(&self) -> Result<(), AqmError> {
        self.base.validate()?;
        if !(self.alpha_gain > 0.0 && self.alpha_gain <= 1.0) {
            return Err(AqmError::invalid("alpha", format!("must lie in (0, 1], got {}", self.alpha_gain)));
        }
        if !(self.beta_gain > 0.0 && self.beta_gain <= 1.0) {
            return Err(AqmError::invalid("beta", format!("must lie in (0, 1], got {}", self.beta_gain)));
        }
        if !(self.t_update > 0.0 && self.t_update.is_finite()) {
            return Err(AqmError::invalid("t_update", format!("must be positive, got {}", self.t_update)));
        }
        Ok(())
    }
}

/// Mutable control state of ABetaRED / DBetaRED.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveState {
    /// Current maximum probability (ABetaRED).
    pub p_max: f64,
    /// Virtual target queue in packets (DBetaRED).
    pub q_target_virtual: f64,
    pub timer: UpdateTimer,
    pub alpha_gain: f64,
    pub beta_gain: f64,
}

impl AdaptiveState {
    pub fn initial(cfg: &AdaptiveBetaConfig) -> Result<Self, AqmError> {
        Ok(Self {
            p_max: cfg.base.p_max,
            q_target_virtual: cfg.base.q_target,
            timer: UpdateTimer::new(cfg.t_update, 0.0)?,
            alpha_gain: cfg.alpha_gain,
            beta_gain: cfg.beta_gain,
        })
    }

    /// Beta mean implied by the virtual target.
    pub fn virtual_mu(&self, cfg: &BetaRedConfig) -> f64 {
        (self.q_target_virtual - cfg.q_min) / cfg.span()
    }
}

/// One ABetaRED control step: multiplicative decrease of `p_max` below the
/// target, logistic increase above it.
pub fn abetared_update(st: AdaptiveState, cfg: &BetaRedConfig, q_avg: f64) -> AdaptiveState {
    let span = cfg.span();
    let p_max = if q_avg < cfg.q_target {
        let shrink = 1.0 - (cfg.q_target - q_avg) / span;
        (st.p_max * st.alpha_gain * shrink).max(ABETARED_P_MAX_FLOOR)
    } else if q_avg > cfg.q_target {
        let grow = st.beta_gain * st.p_max * (1.0 - st.p_max) * (q_avg - cfg.q_target) / span;
        (st.p_max + grow).min(ABETARED_P_MAX_CEIL)
    } else {
        st.p_max
    };
    AdaptiveState { p_max, ..st }
}

/// Step of the virtual target: `delta = mu (1 - mu) (q_target - q_avg)`
/// with `mu` taken from the current virtual target.
pub fn dbetared_delta(st: &AdaptiveState, cfg: &BetaRedConfig, q_avg: f64) -> f64 {
    let mu = st.virtual_mu(cfg);
    mu * (1.0 - mu) * (cfg.q_target - q_avg)
}

/// One DBetaRED control step on the virtual target queue.
pub fn dbetared_update(st: AdaptiveState, cfg: &BetaRedConfig, q_avg: f64) -> AdaptiveState {
    let delta = dbetared_delta(&st, cfg, q_avg);
    let q = st.q_target_virtual;
    let q_target_virtual = if q_avg < cfg.q_target {
        (q + st.alpha_gain * delta).min(cfg.q_max - 1.0)
    } else if q_avg > cfg.q_target {
        (q + st.beta_gain * delta).max(cfg.q_min + 1.0)
    } else {
        q
    };
    AdaptiveState { q_target_virtual, ..st }
}

/// Fixed-curve BetaRED.
#[derive(Debug, Clone)]
pub struct BetaRed {
    curve: BetaDropFunction,
    ewma: EwmaState,
}

impl BetaRed {
    pub fn new(cfg: BetaRedConfig) -> Result<Self, AqmError> {
        cfg.validate()?;
        Ok(Self { curve: BetaDropFunction::from_config(&cfg)?, ewma: EwmaState::new(cfg.w)? })
    }

    pub fn curve(&self) -> &BetaDropFunction {
        &self.curve
    }
}

impl QueueDiscipline for BetaRed {
    fn scheme(&self) -> Scheme {
        Scheme::BetaRed
    }

    fn on_arrival(&mut self, _now: f64, q_cur: usize) -> ArrivalSignal {
        self.ewma = ewma_update(self.ewma, q_cur as f64);
        self.curve.signal(self.ewma.q_avg)
    }

    fn average_queue(&self) -> Option<f64> {
        Some(self.ewma.q_avg)
    }
}

/// BetaRED with an adaptive maximum probability.
#[derive(Debug, Clone)]
pub struct ABetaRed {
    cfg: AdaptiveBetaConfig,
    curve: BetaDropFunction,
    ewma: EwmaState,
    state: AdaptiveState,
}

impl ABetaRed {
    pub fn new(cfg: AdaptiveBetaConfig) -> Result<Self, AqmError> {
        cfg.validate()?;
        let curve = BetaDropFunction::from_config(&cfg.base)?;
        let ewma = EwmaState::new(cfg.base.w)?;
        let state = AdaptiveState::initial(&cfg)?;
        Ok(Self { cfg, curve, ewma, state })
    }

    pub fn state(&self) -> &AdaptiveState {
        &self.state
    }
}

impl QueueDiscipline for ABetaRed {
    fn scheme(&self) -> Scheme {
        Scheme::ABetaRed
    }

    fn on_arrival(&mut self, now: f64, q_cur: usize) -> ArrivalSignal {
        self.ewma = ewma_update(self.ewma, q_cur as f64);
        let (fired, timer) = timer_due(now, self.state.timer);
        self.state.timer = timer;
        if fired {
            self.state = abetared_update(self.state, &self.cfg.base, self.ewma.q_avg);
            self.curve = self.curve.with_p_max(self.state.p_max);
        }
        self.curve.signal(self.ewma.q_avg)
    }

    fn average_queue(&self) -> Option<f64> {
        Some(self.ewma.q_avg)
    }
}

/// BetaRED with a moving virtual target queue.
#[derive(Debug, Clone)]
pub struct DBetaRed {
    cfg: AdaptiveBetaConfig,
    curve: BetaDropFunction,
    ewma: EwmaState,
    state: AdaptiveState,
}

impl DBetaRed {
    pub fn new(cfg: AdaptiveBetaConfig) -> Result<Self, AqmError> {
        cfg.validate()?;
        let b = &cfg.base;
        if b.q_target < b.q_min + 1.0 || b.q_target > b.q_max - 1.0 {
            return Err(AqmError::invalid(
                "q_target",
                format!("must lie in [q_min+1, q_max-1] = [{}, {}], got {}", b.q_min + 1.0, b.q_max - 1.0, b.q_target),
            ));
        }
        let curve = BetaDropFunction::from_config(b)?;
        let ewma = EwmaState::new(b.w)?;
        let state = AdaptiveState::initial(&cfg)?;
        Ok(Self { cfg, curve, ewma, state })
    }

    pub fn state(&self) -> &AdaptiveState {
        &self.state
    }

    pub fn curve(&self) -> &BetaDropFunction {
        &self.curve
    }
}

impl QueueDiscipline for DBetaRed {
    fn scheme(&self) -> Scheme {
        Scheme::DBetaRed
    }

    fn on_arrival(&mut self, now: f64, q_cur: usize) -> ArrivalSignal {
        self.ewma = ewma_update(self.ewma, q_cur as f64);
        let (fired, timer) = timer_due(now, self.state.timer);
        self.state.timer = timer;
        if fired {
            let next = dbetared_update(self.state, &self.cfg.base, self.ewma.q_avg);
            if next.q_target_virtual != self.state.q_target_virtual {
                let b = &self.cfg.base;
                // the clamps keep mu inside (0, 1), so rebuilding cannot fail
                if let Ok(curve) = BetaDropFunction::new(b.q_min, b.q_max, next.q_target_virtual, b.theta, b.p_max) {
                    self.curve = curve;
                }
            }
            self.state = next;
        }
        self.curve.signal(self.ewma.q_avg)
    }

    fn average_queue(&self) -> Option<f64> {
        Some(self.ewma.q_avg)
    }
}
