//! Batch execution of experiment specs and CSV output.
//!
//! Files written by [`emit_outputs`]:
//!
//! * `metrics.csv`: one row per (sweep point, seed), then one row per sweep
//!   point with `seed = mean`. Columns: `scheme, sweep, seed, aql,
//!   equilibrium_aql, drop_rate, throughput_bps, utilisation_bps,
//!   latency_s, jitter_s, sent, delivered, aqm_drops, forced_drops,
//!   in_flight_at_end`.
//! * `queue_trace_<scheme>_<point>_seed<N>.csv`: `time, q_cur, q_avg,
//!   drops_cum, arrivals_cum`.
//! * `moving_average_<scheme>_<point>_seed<N>.csv`: `time, q_moving_avg`.
//! * `deliveries_<scheme>_<point>_seed<N>.csv` when enabled: `flow, seq,
//!   send_time, deliver_time`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentSpec, RunConfig};
use crate::metrics::{moving_average_queue, MetricsReport};
use crate::netsim::{build_dumbbell, SimError, Trace};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {scheme} [{point}] seed {seed} failed: {source}")]
    Run { scheme: String, point: String, seed: u64, source: SimError },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("nothing to write")]
    Empty,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: RunConfig,
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Per-packet records are kept only when the spec asks for deliveries.
    pub trace: Trace,
    pub moving_average: Vec<(f64, f64)>,
}

impl RunResult {
    pub fn file_stem(&self) -> String {
        format!("{}_{}_seed{}", self.run.scheme, self.run.label(), self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct ResultTable {
    pub results: Vec<RunResult>,
    pub deliveries: bool,
}

impl ResultTable {
    /// Seed means of every metric per sweep point, in run order.
    pub fn seed_means(&self) -> Vec<(&RunConfig, MetricsReport)> {
        let mut out: Vec<(&RunConfig, Vec<&MetricsReport>)> = Vec::new();
        for r in &self.results {
            match out.iter_mut().find(|(run, _)| *run == &r.run) {
                Some((_, v)) => v.push(&r.metrics),
                None => out.push((&r.run, vec![&r.metrics])),
            }
        }
        out.into_iter()
            .map(|(run, ms)| {
                let n = ms.len() as f64;
                let mean = |f: fn(&MetricsReport) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / n;
                (
                    run,
                    MetricsReport {
                        aql: mean(|m| m.aql),
                        equilibrium_aql: mean(|m| m.equilibrium_aql),
                        drop_rate: mean(|m| m.drop_rate),
                        throughput_bps: mean(|m| m.throughput_bps),
                        utilisation_bps: mean(|m| m.utilisation_bps),
                        latency_s: mean(|m| m.latency_s),
                        jitter_s: mean(|m| m.jitter_s),
                    },
                )
            })
            .collect()
    }
}

/// Simulates one sweep point with one seed.
pub fn run_single(run: &RunConfig, seed: u64, moving_window: f64, keep_packets: bool) -> Result<RunResult, RunError> {
    let fail = |source| RunError::Run { scheme: run.scheme.to_string(), point: run.point_string(), seed, source };
    let sim = build_dumbbell(&run.topology, &run.aqm).map_err(fail)?;
    let mut trace = sim.run(run.duration, seed).map_err(fail)?;
    let metrics = MetricsReport::from_trace(&trace);
    let moving_average = moving_average_queue(&trace.samples, moving_window);
    if !keep_packets {
        trace.packets = Vec::new();
    }
    Ok(RunResult { run: run.clone(), seed, metrics, trace, moving_average })
}

/// Runs every (sweep point, seed) pair, in parallel, and returns the results
/// ordered by sweep point then seed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable, RunError> {
    let runs = spec.runs()?;
    let jobs: Vec<(&RunConfig, u64)> = runs.iter().flat_map(|r| spec.seeds.iter().map(move |&s| (r, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(run, seed)| run_single(run, seed, spec.moving_average_window, spec.deliveries))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ResultTable { results, deliveries: spec.deliveries })
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path).map(BufWriter::new).map_err(|source| RunError::Io { path: path.to_owned(), source })
}

fn csv_error(path: &Path, e: csv::Error) -> RunError {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    RunError::Io { path: path.to_owned(), source }
}

const COUNTER_COLUMNS: [&str; 5] = ["sent", "delivered", "aqm_drops", "forced_drops", "in_flight_at_end"];

pub fn write_metrics(table: &ResultTable, path: &Path) -> Result<(), RunError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["scheme", "sweep", "seed"];
    header.extend(MetricsReport::COLUMNS);
    header.extend(COUNTER_COLUMNS);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in &table.results {
        let t = &r.trace;
        let mut row = vec![r.run.scheme.to_string(), r.run.point_string(), r.seed.to_string()];
        row.extend(r.metrics.values().iter().map(f64::to_string));
        row.extend(
            [t.sent, t.delivered, t.aqm_drops, t.forced_drops, t.in_flight_at_end].iter().map(u64::to_string),
        );
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    for (run, m) in table.seed_means() {
        let mut row = vec![run.scheme.to_string(), run.point_string(), "mean".to_owned()];
        row.extend(m.values().iter().map(f64::to_string));
        row.extend(COUNTER_COLUMNS.iter().map(|_| String::new()));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| RunError::Io { path: path.to_owned(), source })
}

pub fn write_queue_trace(trace: &Trace, path: &Path) -> Result<(), RunError> {
    let mut w = create(path)?;
    let io = |source| RunError::Io { path: path.to_owned(), source };
    writeln!(w, "time,q_cur,q_avg,drops_cum,arrivals_cum").map_err(io)?;
    for s in &trace.samples {
        writeln!(w, "{},{},{},{},{}", s.time, s.q_cur, s.q_avg, s.drops_cum, s.arrivals_cum).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_moving_average(series: &[(f64, f64)], path: &Path) -> Result<(), RunError> {
    let mut w = create(path)?;
    let io = |source| RunError::Io { path: path.to_owned(), source };
    writeln!(w, "time,q_moving_avg").map_err(io)?;
    for (t, q) in series {
        writeln!(w, "{t},{q}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_deliveries(trace: &Trace, path: &Path) -> Result<(), RunError> {
    let mut w = create(path)?;
    let io = |source| RunError::Io { path: path.to_owned(), source };
    writeln!(w, "flow,seq,send_time,deliver_time").map_err(io)?;
    for p in &trace.packets {
        if let Some(d) = p.deliver_time() {
            writeln!(w, "{},{},{},{}", p.flow, p.seq, p.send_time, d).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Writes all CSV outputs into `dir`, creating it if needed. Returns the
/// paths written, metrics first.
pub fn emit_outputs(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    if table.results.is_empty() {
        return Err(RunError::Empty);
    }
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_owned(), source })?;
    let metrics = dir.join("metrics.csv");
    write_metrics(table, &metrics)?;
    let mut written = vec![metrics];
    for r in &table.results {
        let stem = r.file_stem();
        let q = dir.join(format!("queue_trace_{stem}.csv"));
        write_queue_trace(&r.trace, &q)?;
        let m = dir.join(format!("moving_average_{stem}.csv"));
        write_moving_average(&r.moving_average, &m)?;
        written.extend([q, m]);
        if table.deliveries {
            let d = dir.join(format!("deliveries_{stem}.csv"));
            write_deliveries(&r.trace, &d)?;
            written.push(d);
        }
    }
    Ok(written)
}
