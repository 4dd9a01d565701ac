//! Experiment spec files.
//!
//! A spec is a TOML document with flat top-level keys, one optional table
//! per scheme, an optional `[topology]` table and an optional `[sweep]`
//! table mapping parameter names to value lists:
//!
//! ```toml
//! scenario = 1
//! aqm = "betared"
//! n_flows = 100
//! duration = 250.0
//! seeds = [1, 2, 3]
//!
//! [betared]
//! p_max = 1.0
//!
//! [sweep]
//! theta = [0.05, 0.1, 0.3]
//! n_flows = [100, 200]
//! ```
//!
//! Sweep keys name either a top-level key (`n_flows`, `n_max`, `aqm`, ...),
//! a parameter of the selected scheme's table, or an explicit
//! `section.key`. Points are the cartesian product of the lists, with keys
//! taken in lexicographic order and the last key varying fastest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aqm::{
    target_queue_from_delay, AdaptiveBetaConfig, AqmConfig, AqmError, AredConfig, BetaRedConfig, CodelConfig,
    PieConfig, RedConfig, Scheme,
};
use crate::netsim::{CubicParams, FlowSchedule, SimError, TopologyConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed spec: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Aqm(#[from] AqmError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSection {
    pub q_target: Option<f64>,
    pub t_target: Option<f64>,
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
    pub p_max: Option<f64>,
    pub theta: Option<f64>,
    pub w: Option<f64>,
    pub t_update: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RedSection {
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
    pub p_max: Option<f64>,
    pub w: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AredSection {
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
    pub p_max: Option<f64>,
    pub w: Option<f64>,
    pub band_low: Option<f64>,
    pub band_high: Option<f64>,
    pub t_update: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodelSection {
    pub t_target: Option<f64>,
    pub interval: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieSection {
    pub t_target: Option<f64>,
    pub t_update: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub bottleneck_rate: Option<f64>,
    pub bottleneck_delay: Option<f64>,
    pub edge_rate: Option<f64>,
    pub edge_delay: Option<f64>,
    pub edge_delay_jitter: Option<f64>,
    pub buffer: Option<usize>,
    pub packet_size: Option<u32>,
    pub initial_cwnd: Option<f64>,
    pub start_spread: Option<f64>,
    pub sample_interval: Option<f64>,
    pub cubic_c: Option<f64>,
    pub cubic_beta: Option<f64>,
    pub tcp_friendly: Option<bool>,
}

/// The spec file as written, before defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub scenario: Option<u8>,
    pub aqm: Option<String>,
    #[serde(alias = "N")]
    pub n_flows: Option<usize>,
    pub n_max: Option<usize>,
    pub s2_low: Option<usize>,
    pub s2_mid: Option<usize>,
    pub s2_interval: Option<f64>,
    pub duration: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<String>,
    /// Also write a per-packet delivery CSV for every run.
    pub deliveries: Option<bool>,
    pub moving_average_window: Option<f64>,
    pub topology: Option<TopologySection>,
    pub betared: Option<BetaSection>,
    pub abetared: Option<BetaSection>,
    pub dbetared: Option<BetaSection>,
    pub red: Option<RedSection>,
    pub ared: Option<AredSection>,
    pub codel: Option<CodelSection>,
    pub pie: Option<PieSection>,
    pub sweep: Option<toml::Table>,
}

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_DURATION: f64 = 250.0;
pub const DEFAULT_T_TARGET: f64 = 0.040;
pub const DEFAULT_MOVING_AVERAGE_WINDOW: f64 = 25.0;

/// One value of a sweep axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<toml::Value>,
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub file: SpecFile,
    pub sweep: Vec<SweepAxis>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub deliveries: bool,
    pub moving_average_window: f64,
}

/// Concrete settings of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub aqm: AqmConfig,
    pub topology: TopologyConfig,
    pub duration: f64,
    pub point: Vec<(String, String)>,
}

impl RunConfig {
    /// Filename-safe label of the sweep point, `default` when there is none.
    pub fn label(&self) -> String {
        if self.point.is_empty() {
            return "default".to_owned();
        }
        let raw: Vec<String> = self.point.iter().map(|(k, v)| format!("{k}-{v}")).collect();
        raw.join("_").chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '-' }).collect()
    }

    /// Human-readable sweep point, e.g. `n_flows=100;theta=0.1`.
    pub fn point_string(&self) -> String {
        self.point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
    }
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let file: SpecFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    ExperimentSpec::from_file(file)
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    parse_spec(&text)
}

impl ExperimentSpec {
    pub fn from_file(file: SpecFile) -> Result<Self, ConfigError> {
        let mut flat = Vec::new();
        if let Some(t) = &file.sweep {
            flatten_sweep("", t, &mut flat);
        }
        let sweep = flat
            .into_iter()
            .map(|(key, v)| match v {
                toml::Value::Array(values) if !values.is_empty() => Ok(SweepAxis { key, values }),
                toml::Value::Array(_) => Err(invalid(format!("sweep.{key}"), "value list is empty")),
                other => Ok(SweepAxis { key, values: vec![other] }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let seeds = file.seeds.clone().unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
        if seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        let moving_average_window = file.moving_average_window.unwrap_or(DEFAULT_MOVING_AVERAGE_WINDOW);
        if !(moving_average_window > 0.0) {
            return Err(invalid("moving_average_window", "must be positive"));
        }
        let spec = ExperimentSpec {
            out: PathBuf::from(file.out.clone().unwrap_or_else(|| "results".to_owned())),
            deliveries: file.deliveries.unwrap_or(false),
            file,
            sweep,
            seeds,
            moving_average_window,
        };
        // resolve every point up front so bad sweep values fail at load time
        spec.runs()?;
        Ok(spec)
    }

    /// Every sweep point, resolved, in deterministic order.
    pub fn runs(&self) -> Result<Vec<RunConfig>, ConfigError> {
        let mut points: Vec<Vec<(usize, usize)>> = vec![vec![]];
        for (a, axis) in self.sweep.iter().enumerate() {
            points = points
                .into_iter()
                .flat_map(|p| {
                    (0..axis.values.len()).map(move |i| {
                        let mut q = p.clone();
                        q.push((a, i));
                        q
                    })
                })
                .collect();
        }
        points
            .iter()
            .map(|p| {
                let assignments: Vec<(&str, &toml::Value)> =
                    p.iter().map(|&(a, i)| (self.sweep[a].key.as_str(), &self.sweep[a].values[i])).collect();
                resolve_point(&self.file, &assignments)
            })
            .collect()
    }
}

/// `[sweep] red.p_max = [...]` parses as a nested table; turn it back into
/// the dotted key.
fn flatten_sweep(prefix: &str, t: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in t {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(inner) => flatten_sweep(&key, inner, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn display_value(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Float(f) => f.to_string(),
        other => other.to_string(),
    }
}

const TOP_LEVEL_KEYS: [&str; 7] = ["scenario", "aqm", "n_flows", "n_max", "s2_low", "s2_mid", "s2_interval"];

fn section_name(scheme: Scheme) -> Option<&'static str> {
    match scheme {
        Scheme::DropTail => None,
        other => Some(other.name()),
    }
}

/// Applies `key = value` overrides to a spec and resolves the result.
fn resolve_point(file: &SpecFile, assignments: &[(&str, &toml::Value)]) -> Result<RunConfig, ConfigError> {
    let mut table = toml::Table::try_from(file).map_err(|e| ConfigError::Parse(e.to_string()))?;
    table.remove("sweep");
    for (key, value) in assignments.iter().filter(|(k, _)| TOP_LEVEL_KEYS.contains(k)) {
        table.insert((*key).to_owned(), (*value).clone());
    }
    let scheme = scheme_of(&table)?;
    for (key, value) in assignments.iter().filter(|(k, _)| !TOP_LEVEL_KEYS.contains(k)) {
        let (section, field) = match key.split_once('.') {
            Some((s, f)) => (s.to_owned(), f),
            None if key == &"duration" => {
                table.insert("duration".into(), (*value).clone());
                continue;
            }
            None => match section_name(scheme) {
                Some(s) => (s.to_owned(), *key),
                None => {
                    return Err(invalid(format!("sweep.{key}"), format!("not a parameter of scheme `{scheme}`")))
                }
            },
        };
        let entry = table.entry(section.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(field.to_owned(), (*value).clone());
            }
            _ => return Err(invalid(format!("sweep.{key}"), format!("`{section}` is not a table"))),
        }
    }
    let mut resolved: SpecFile = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
        let names: Vec<&str> = assignments.iter().map(|(k, _)| *k).collect();
        if names.is_empty() {
            ConfigError::Parse(e.to_string())
        } else {
            invalid(format!("sweep.{}", names.join(",")), e.to_string())
        }
    })?;
    resolved.sweep = None;
    let mut run = resolve(&resolved)?;
    run.point = assignments.iter().map(|(k, v)| ((*k).to_owned(), display_value(v))).collect();
    Ok(run)
}

fn scheme_of(table: &toml::Table) -> Result<Scheme, ConfigError> {
    match table.get("aqm") {
        None => Err(invalid("aqm", "missing; expected one of droptail, red, ared, codel, pie, betared, abetared, dbetared")),
        Some(toml::Value::String(s)) => Ok(s.parse::<Scheme>()?),
        Some(other) => Err(invalid("aqm", format!("expected a scheme name, got {other}"))),
    }
}

fn topology_of(file: &SpecFile) -> Result<TopologyConfig, ConfigError> {
    let d = TopologyConfig::default();
    let t = file.topology.clone().unwrap_or_default();
    let scenario = file.scenario.unwrap_or(1);
    let flows = match scenario {
        1 => {
            if file.n_max.is_some() {
                return Err(invalid("n_max", "only meaningful for scenario 2"));
            }
            FlowSchedule::Constant(file.n_flows.unwrap_or(100))
        }
        2 => {
            if file.n_flows.is_some() {
                return Err(invalid("n_flows", "scenario 2 uses n_max and the s2_* schedule keys"));
            }
            FlowSchedule::Stepped {
                low: file.s2_low.unwrap_or(100),
                mid: file.s2_mid.unwrap_or(200),
                max: file.n_max.unwrap_or(400),
                interval: file.s2_interval.unwrap_or(50.0),
            }
        }
        other => return Err(invalid("scenario", format!("must be 1 or 2, got {other}"))),
    };
    if scenario == 1 && (file.s2_low.is_some() || file.s2_mid.is_some() || file.s2_interval.is_some()) {
        return Err(invalid("s2_low", "schedule keys are only meaningful for scenario 2"));
    }
    let cfg = TopologyConfig {
        flows,
        bottleneck_rate: t.bottleneck_rate.unwrap_or(d.bottleneck_rate),
        bottleneck_delay: t.bottleneck_delay.unwrap_or(d.bottleneck_delay),
        edge_rate: t.edge_rate.unwrap_or(d.edge_rate),
        edge_delay: t.edge_delay.unwrap_or(d.edge_delay),
        edge_delay_jitter: t.edge_delay_jitter.unwrap_or(d.edge_delay_jitter),
        buffer: t.buffer.unwrap_or(d.buffer),
        packet_size: t.packet_size.unwrap_or(d.packet_size),
        initial_cwnd: t.initial_cwnd.unwrap_or(d.initial_cwnd),
        start_spread: t.start_spread.unwrap_or(d.start_spread),
        sample_interval: t.sample_interval.unwrap_or(d.sample_interval),
        cubic: CubicParams {
            c: t.cubic_c.unwrap_or(d.cubic.c),
            beta: t.cubic_beta.unwrap_or(d.cubic.beta),
            tcp_friendly: t.tcp_friendly.unwrap_or(d.cubic.tcp_friendly),
        },
    };
    cfg.validate()?;
    if !(cfg.cubic.c > 0.0) {
        return Err(invalid("topology.cubic_c", "must be positive"));
    }
    if !(cfg.cubic.beta > 0.0 && cfg.cubic.beta < 1.0) {
        return Err(invalid("topology.cubic_beta", "must lie in (0, 1)"));
    }
    Ok(cfg)
}

fn beta_config(s: &BetaSection, topo: &TopologyConfig, default_p_max: f64) -> BetaRedConfig {
    let q_target = s.q_target.unwrap_or_else(|| {
        target_queue_from_delay(topo.capacity_pkts(), s.t_target.unwrap_or(DEFAULT_T_TARGET))
    });
    BetaRedConfig {
        q_target,
        q_min: s.q_min.unwrap_or(0.0),
        q_max: s.q_max.unwrap_or(topo.buffer as f64),
        p_max: s.p_max.unwrap_or(default_p_max),
        w: s.w.unwrap_or(0.1),
        theta: s.theta.unwrap_or(0.1),
    }
}

fn adaptive_config(s: &BetaSection, topo: &TopologyConfig, default_p_max: f64) -> AdaptiveBetaConfig {
    AdaptiveBetaConfig {
        base: beta_config(s, topo, default_p_max),
        alpha_gain: s.alpha.unwrap_or(1.0),
        beta_gain: s.beta.unwrap_or(1.0),
        t_update: s.t_update.unwrap_or(0.5),
    }
}

/// Queue that corresponds to the default delay target on this topology.
fn default_target_queue(topo: &TopologyConfig) -> f64 {
    target_queue_from_delay(topo.capacity_pkts(), DEFAULT_T_TARGET)
}

fn red_config(s: &RedSection, topo: &TopologyConfig) -> RedConfig {
    let qt = default_target_queue(topo);
    RedConfig {
        q_min: s.q_min.unwrap_or(qt / 2.0),
        q_max: s.q_max.unwrap_or(1.5 * qt),
        p_max: s.p_max.unwrap_or(0.1),
        w: s.w.unwrap_or(0.002),
    }
}

fn ared_config(s: &AredSection, topo: &TopologyConfig) -> AredConfig {
    let qt = default_target_queue(topo);
    let red = RedConfig {
        q_min: s.q_min.unwrap_or(qt / 2.0),
        q_max: s.q_max.unwrap_or(1.5 * qt),
        p_max: s.p_max.unwrap_or(0.1),
        w: s.w.unwrap_or_else(|| 1.0 - (-1.0 / topo.capacity_pkts()).exp()),
    };
    let span = red.q_max - red.q_min;
    AredConfig {
        target_band: (
            s.band_low.unwrap_or(red.q_min + 0.4 * span),
            s.band_high.unwrap_or(red.q_min + 0.6 * span),
        ),
        interval: s.t_update.unwrap_or(0.5),
        red,
    }
}

/// Resolves a spec without a sweep into one run, filling defaults.
pub fn resolve(file: &SpecFile) -> Result<RunConfig, ConfigError> {
    let table = toml::Table::try_from(file).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let scheme = scheme_of(&table)?;
    let topology = topology_of(file)?;
    let duration = file.duration.unwrap_or(DEFAULT_DURATION);
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(invalid("duration", format!("must be positive, got {duration}")));
    }
    let aqm = match scheme {
        Scheme::DropTail => AqmConfig::DropTail,
        Scheme::Red => AqmConfig::Red(red_config(&file.red.clone().unwrap_or_default(), &topology)),
        Scheme::Ared => AqmConfig::Ared(ared_config(&file.ared.clone().unwrap_or_default(), &topology)),
        Scheme::Codel => {
            let s = file.codel.clone().unwrap_or_default();
            AqmConfig::Codel(CodelConfig {
                target: s.t_target.unwrap_or(DEFAULT_T_TARGET),
                interval: s.interval.unwrap_or(CodelConfig::default().interval),
            })
        }
        Scheme::Pie => {
            let s = file.pie.clone().unwrap_or_default();
            AqmConfig::Pie(PieConfig {
                target: s.t_target.unwrap_or(DEFAULT_T_TARGET),
                t_update: s.t_update.unwrap_or(0.015),
                alpha: s.alpha.unwrap_or(0.125),
                beta: s.beta.unwrap_or(1.25),
                drain_rate_pkts: topology.capacity_pkts(),
            })
        }
        Scheme::BetaRed => AqmConfig::BetaRed(beta_config(&file.betared.clone().unwrap_or_default(), &topology, 1.0)),
        Scheme::ABetaRed => {
            AqmConfig::ABetaRed(adaptive_config(&file.abetared.clone().unwrap_or_default(), &topology, 0.5))
        }
        Scheme::DBetaRed => {
            AqmConfig::DBetaRed(adaptive_config(&file.dbetared.clone().unwrap_or_default(), &topology, 1.0))
        }
    };
    // surfaces range errors with the offending field name
    aqm.build()?;
    Ok(RunConfig { scheme, aqm, topology, duration, point: Vec::new() })
}

/// Parses `key=v1,v2,...` into a sweep axis. Values that parse as numbers
/// become numbers, anything else stays a string.
pub fn parse_sweep_arg(arg: &str) -> Result<(String, toml::Value), ConfigError> {
    let (key, values) = arg.split_once('=').ok_or_else(|| invalid("sweep", format!("expected key=v1,v2,..., got `{arg}`")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(invalid("sweep", "empty parameter name"));
    }
    let values: Vec<toml::Value> = values.split(',').map(|v| scalar_value(v.trim())).collect();
    if values.iter().any(|v| matches!(v, toml::Value::String(s) if s.is_empty())) {
        return Err(invalid(format!("sweep.{key}"), "empty value"));
    }
    Ok((key.to_owned(), toml::Value::Array(values)))
}

fn scalar_value(v: &str) -> toml::Value {
    if let Ok(i) = v.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = v.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = v.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(v.to_owned())
    }
}

/// Overrides collected from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<u8>,
    pub aqm: Option<String>,
    pub n_flows: Option<usize>,
    pub n_max: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub duration: Option<f64>,
    pub out: Option<String>,
    pub deliveries: bool,
    pub sweep: Vec<(String, toml::Value)>,
}

impl Overrides {
    pub fn apply(&self, mut file: SpecFile) -> SpecFile {
        if let Some(s) = self.scenario {
            file.scenario = Some(s);
        }
        if let Some(a) = &self.aqm {
            file.aqm = Some(a.clone());
        }
        if let Some(n) = self.n_flows {
            file.n_flows = Some(n);
        }
        if let Some(n) = self.n_max {
            file.n_max = Some(n);
        }
        if let Some(s) = &self.seeds {
            file.seeds = Some(s.clone());
        }
        if let Some(d) = self.duration {
            file.duration = Some(d);
        }
        if let Some(o) = &self.out {
            file.out = Some(o.clone());
        }
        if self.deliveries {
            file.deliveries = Some(true);
        }
        if !self.sweep.is_empty() {
            let mut sweep: BTreeMap<String, toml::Value> = file.sweep.take().unwrap_or_default().into_iter().collect();
            sweep.extend(self.sweep.iter().cloned());
            file.sweep = Some(sweep.into_iter().collect());
        }
        file
    }
}

pub fn parse_spec_file(text: &str) -> Result<SpecFile, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}
