use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use platoon_san::measures::AnalyticEvaluator;
use platoon_san::pipeline::{generate, run_scenario, run_sweep, to_json, write_csv, Overrides, PipelineError, ReportRow};
use platoon_san::san::dump_san;
use platoon_san::scenario::{load_scenario_file, Method, Scenario};
use platoon_san::statespace::dump_ctmc;

#[derive(Parser)]
#[command(name = "platoon-san", version, about = "Dependability evaluation of vehicle platoons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file.
    Validate { scenario: PathBuf },
    /// Build the SAN and print it.
    Generate {
        scenario: PathBuf,
        #[arg(long)]
        dump_san: bool,
        /// Also print the reachable CTMC.
        #[arg(long)]
        dump_ctmc: bool,
        #[arg(long)]
        state_limit: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate every measure of a scenario.
    Eval(RunArgs),
    /// Evaluate every measure at each point of the scenario's sweep.
    Sweep(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Analytic,
    Simulation,
    Both,
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    state_limit: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            method: self.method.map(|m| match m {
                MethodArg::Analytic => Method::Analytic,
                MethodArg::Simulation => Method::Simulation,
                MethodArg::Both => Method::Both,
            }),
            seed: self.seed,
            replications: self.reps,
            state_limit: self.state_limit,
        }
    }
}

enum Failure {
    Pipeline(PipelineError),
    Io(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn load(path: &Path) -> Result<Scenario, PipelineError> {
    load_scenario_file(path).map_err(PipelineError::from)
}

fn output(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(rows: &[ReportRow], args: &RunArgs) -> Result<(), Failure> {
    let mut w = output(args.out.as_deref())?;
    if args.json {
        writeln!(w, "{}", to_json(rows))?;
    } else {
        write_csv(rows, &mut w).map_err(|e| Failure::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!("valid: {} ({} vehicles, {} measures)", s.platoon.name, s.platoon.system.vehicle_count, s.measures.len());
        }
        Command::Generate { scenario, dump_san: san, dump_ctmc: ctmc, state_limit, out } => {
            let mut s = load(&scenario)?;
            Overrides { state_limit, ..Overrides::default() }.apply(&mut s)?;
            let generated = generate(&s)?;
            let mut w = output(out.as_deref())?;
            if san || !ctmc {
                writeln!(w, "{}", dump_san(&generated.san))?;
            }
            if ctmc {
                let chain = AnalyticEvaluator::ctmc(&generated, s.state_limit)
                    .map_err(|e| PipelineError::new(7, e.code(), e.to_string()))?;
                write!(w, "{}", dump_ctmc(&chain))?;
            }
            w.flush()?;
        }
        Command::Eval(args) => {
            let mut s = load(&args.scenario)?;
            args.overrides().apply(&mut s)?;
            emit(&run_scenario(&s)?, &args)?;
        }
        Command::Sweep(args) => {
            let mut s = load(&args.scenario)?;
            args.overrides().apply(&mut s)?;
            let report = run_sweep(&s)?;
            for note in &report.notes {
                eprintln!("note: {note}");
            }
            emit(&report.rows, &args)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
