//! Beta-distribution active queue management.
//!
//! [`aqm`] holds the drop laws (BetaRED, ABetaRED, DBetaRED and the RED,
//! ARED, CoDel, PIE, Drop Tail baselines), [`special`] the incomplete beta
//! kernel, [`netsim`] a packet-level dumbbell simulator, [`metrics`] the
//! trace statistics, and [`config`] / [`runner`] the batch experiment driver
//! behind the `betaqm` binary.

pub mod aqm;
pub mod config;
pub mod metrics;
pub mod netsim;
pub mod runner;
pub mod special;
