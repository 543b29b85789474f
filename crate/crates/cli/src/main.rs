use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use caf_core::harness::config::{Engines, SweepSpec};
use caf_core::harness::output::{render, Format};
use caf_core::harness::report::agreement_report;
use caf_core::harness::sweep::{run_sweep, run_sweep_traced, ResultRow};
use caf_core::harness::load_config;
use caf_core::validation;

#[derive(Parser)]
#[command(name = "caf", version, about = "CAF spectrum-sharing models: CTMC analysis, simulation and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Markov chain at every sweep point.
    Analyze(RunArgs),
    /// Simulate every sweep point.
    Simulate(RunArgs),
    /// Run both engines and report their agreement.
    Sweep(RunArgs),
    /// Run the full acceptance suite.
    Validate,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// Sweep configuration (TOML). Defaults to the five reference scenarios.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Result file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutFormat,
    #[arg(long)]
    seed: Option<u64>,
    /// Events per replication, warm-up (a tenth) included.
    #[arg(long)]
    events: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    /// Write a line-delimited JSON event trace next to the output.
    #[arg(long)]
    trace: bool,
    /// Track the per-channel spectrum map and check it after every event.
    #[arg(long)]
    map: bool,
}

impl RunArgs {
    fn spec(&self, engines: Option<Engines>) -> Result<SweepSpec> {
        let mut spec = match &self.config {
            Some(path) => load_config(path)?,
            None => SweepSpec::reference(),
        };
        if let Some(e) = engines {
            spec.engines = e;
        }
        if let Some(seed) = self.seed {
            spec.sim.seed = seed;
        }
        if let Some(n) = self.events {
            spec.sim.set_events(n);
        }
        if let Some(n) = self.replications {
            spec.sim.replications = n;
        }
        if self.map {
            spec.sim.track_spectrum_map = true;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn trace_path(&self) -> PathBuf {
        match &self.out {
            Some(out) => {
                let mut name = out.file_name().unwrap_or_default().to_os_string();
                name.push(".trace.jsonl");
                out.with_file_name(name)
            }
            None => PathBuf::from("caf-trace.jsonl"),
        }
    }
}

fn execute(args: &RunArgs, spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    if args.trace && spec.engines.simulation() {
        let path = args.trace_path();
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        let rows = run_sweep_traced(spec, &mut out)?;
        out.flush().with_context(|| format!("writing {}", path.display()))?;
        eprintln!("trace written to {}", path.display());
        Ok(rows)
    } else {
        Ok(run_sweep(spec))
    }
}

fn write_rows(rows: &[ResultRow], args: &RunArgs) -> Result<()> {
    let format = match args.format {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    };
    let bytes = render(rows, format)?;
    match &args.out {
        Some(path) => write_file(path, &bytes),
        None => io::stdout().write_all(&bytes).context("writing stdout"),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn report_failures(rows: &[ResultRow]) -> bool {
    let failed: Vec<_> = rows.iter().filter(|r| r.failed()).collect();
    for r in &failed {
        eprintln!("failed: {} @ {} ({}): {:?}", r.scenario, r.sweep_value, r.engine.tag(), r.quality);
    }
    !failed.is_empty()
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Analyze(args) => {
            let spec = args.spec(Some(Engines::Analytical))?;
            let rows = execute(&args, &spec)?;
            write_rows(&rows, &args)?;
            Ok(!report_failures(&rows))
        }
        Command::Simulate(args) => {
            let spec = args.spec(Some(Engines::Simulation))?;
            let rows = execute(&args, &spec)?;
            write_rows(&rows, &args)?;
            Ok(!report_failures(&rows))
        }
        Command::Sweep(args) => {
            let spec = args.spec(Some(Engines::Both))?;
            let rows = execute(&args, &spec)?;
            write_rows(&rows, &args)?;
            let any_failed = report_failures(&rows);
            let report = agreement_report(&rows, &spec.agreement);
            eprintln!("{report}");
            Ok(!any_failed && report.passed())
        }
        Command::Validate => {
            let mut ok = true;
            for outcome in validation::run_all() {
                println!("{outcome}");
                ok &= outcome.passed;
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
