use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use betaqm::config::{parse_spec_file, parse_sweep_arg, ExperimentSpec, Overrides, SpecFile};
use betaqm::runner::{emit_outputs, run_experiment};

#[derive(Parser)]
#[command(name = "betaqm", version, about = "Beta-distribution AQM experiments on a simulated dumbbell")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SpecArgs {
    /// Experiment spec (TOML). Without one, flags and defaults are used.
    spec: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<u8>,
    #[arg(long)]
    aqm: Option<String>,
    #[arg(long = "n-flows", short = 'n')]
    n_flows: Option<usize>,
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    /// Seeds to run; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    out: Option<String>,
    /// Also write per-packet delivery CSVs.
    #[arg(long)]
    deliveries: bool,
    /// Sweep axis as key=v1,v2,...; may be repeated.
    #[arg(long)]
    sweep: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV results.
    Run(SpecArgs),
    /// Validate a spec and list the runs it expands to.
    Check(SpecArgs),
}

fn load(args: &SpecArgs) -> Result<ExperimentSpec, String> {
    let file = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            parse_spec_file(&text).map_err(|e| e.to_string())?
        }
        None => SpecFile::default(),
    };
    let sweep = args.sweep.iter().map(|s| parse_sweep_arg(s)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let overrides = Overrides {
        scenario: args.scenario,
        aqm: args.aqm.clone(),
        n_flows: args.n_flows,
        n_max: args.n_max,
        seeds: (!args.seed.is_empty()).then(|| args.seed.clone()),
        duration: args.duration,
        out: args.out.clone(),
        deliveries: args.deliveries,
        sweep,
    };
    ExperimentSpec::from_file(overrides.apply(file)).map_err(|e| e.to_string())
}

fn execute(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Check(args) => {
            let spec = load(&args)?;
            let runs = spec.runs().map_err(|e| e.to_string())?;
            for r in &runs {
                println!("{} [{}] duration={} seeds={:?}", r.scheme, r.point_string(), r.duration, spec.seeds);
            }
            println!("{} runs", runs.len() * spec.seeds.len());
            Ok(())
        }
        Command::Run(args) => {
            let spec = load(&args)?;
            let table = run_experiment(&spec).map_err(|e| e.to_string())?;
            let written = emit_outputs(&table, &spec.out).map_err(|e| e.to_string())?;
            for (run, m) in table.seed_means() {
                println!(
                    "{:<9} {:<28} aql={:>7.1} eq_aql={:>7.1} drop={:.4} thr={:.3e} lat={:.4} jit={:.2e}",
                    run.scheme.name(),
                    run.point_string(),
                    m.aql,
                    m.equilibrium_aql,
                    m.drop_rate,
                    m.throughput_bps,
                    m.latency_s,
                    m.jitter_s
                );
            }
            eprintln!("wrote {} files to {}", written.len(), spec.out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
