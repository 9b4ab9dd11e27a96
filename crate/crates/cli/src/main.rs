use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ratecov::harness::checks::run_checks;
use ratecov::harness::output::{sim_json, write_csv, write_json, write_sim_csv};
use ratecov::harness::{load_config, run_sweep, Scenario, SweepMode, SweepRow};
use ratecov::{rate_coverage, simulate_coverage, Error, LoadModel};

#[derive(Parser)]
#[command(
    name = "ratecov",
    version,
    about = "Rate coverage of multi-tier networks"
)]
struct Cli {
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario.
    Optimize {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, default_value = "joint")]
        mode: String,
    },
    /// Run the scenario's threshold sweep.
    Sweep {
        #[command(flatten)]
        io: IoArgs,
        /// Comma-separated modes; overrides the scenario file.
        #[arg(long, value_delimiter = ',')]
        mode: Vec<String>,
        /// Skip the Monte Carlo columns even if the scenario configures them.
        #[arg(long)]
        no_simulation: bool,
    },
    /// Monte Carlo coverage at the scenario's allocation, or at the
    /// allocation found by `--mode` when the scenario has none.
    Simulate {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, default_value = "equal_fractions")]
        mode: String,
        #[arg(long)]
        drops: Option<usize>,
    },
    /// Check analytic identities and oracles on a scenario.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        grid_step: Option<f64>,
    },
}

#[derive(Args)]
struct IoArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_step: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Invalid(String),
    NotConverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Invalid(format!("cannot write `{}`: {e}", path.display()))
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| io_failure(p, e))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(io: &IoArgs) -> Result<Scenario, Failure> {
    let mut s = load_config(&io.config)?;
    if let Some(seed) = io.seed {
        s.solve.seed = seed;
        if let Some(sim) = &mut s.simulation {
            sim.seed = seed;
        }
    }
    if let Some(step) = io.grid_step {
        s.solve.grid_step = step;
    }
    s.solve.validate()?;
    Ok(s)
}

fn write_rows(rows: &[SweepRow], k: usize, io: &IoArgs) -> Result<(), Failure> {
    let mut out = open_out(&io.out)?;
    match io.format {
        Format::Csv => write_csv(rows, k, &mut out)?,
        Format::Json => write_json(rows, &mut out)?,
    }
    out.flush().map_err(|e| Failure::Invalid(e.to_string()))
}

fn optimize(io: &IoArgs, mode: &str) -> Result<(), Failure> {
    let s = load(io)?;
    let mode: SweepMode = mode.parse()?;
    let rates = s.config.rate_thresholds();
    let threshold = rates.iter().all(|&r| r == rates[0]).then_some(rates[0]);
    let row = SweepRow::solve(&s.config, mode, threshold, &s.solve, None, &s.hash);
    if let Some(e) = &row.error {
        return Err(Failure::Invalid(e.clone()));
    }
    write_rows(std::slice::from_ref(&row), s.config.num_tiers(), io)?;
    if row.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

fn sweep(io: &IoArgs, modes: &[String], no_simulation: bool) -> Result<(), Failure> {
    let s = load(io)?;
    let mut spec = s.sweep.clone().ok_or_else(|| {
        Failure::Invalid(format!("`{}` has no `sweep` section", io.config.display()))
    })?;
    if !modes.is_empty() {
        spec.modes = modes
            .iter()
            .map(|m| m.parse())
            .collect::<Result<_, Error>>()?;
    }
    let sim = s.simulation.as_ref().filter(|_| !no_simulation);
    let rows = run_sweep(&s.config, &spec, &s.solve, sim, &s.hash)?;
    write_rows(&rows, s.config.num_tiers(), io)
}

fn simulate(io: &IoArgs, mode: &str, drops: Option<usize>) -> Result<(), Failure> {
    let s = load(io)?;
    let mut sim = s.simulation.unwrap_or_default();
    if let Some(seed) = io.seed {
        sim.seed = seed;
    }
    if let Some(d) = drops {
        sim.num_drops = d;
    }
    let alloc = match s.allocation {
        Some(a) => a,
        None => mode.parse::<SweepMode>()?.solve(&s.config, &s.solve)?.alloc,
    };
    let analytic = rate_coverage(&s.config, &alloc, LoadModel::MeanLoad)?.objective;
    let outcome = simulate_coverage(&s.config, &alloc, &sim)?;
    let mut out = open_out(&io.out)?;
    match io.format {
        Format::Csv => write_sim_csv(&outcome, analytic, &mut out)?,
        Format::Json => {
            let doc = sim_json(&outcome, analytic, &alloc);
            writeln!(out, "{doc}").map_err(|e| Failure::Invalid(e.to_string()))?;
        }
    }
    out.flush().map_err(|e| Failure::Invalid(e.to_string()))
}

fn validate(config: &Path, seed: Option<u64>, grid_step: Option<f64>) -> Result<(), Failure> {
    let mut s = load_config(config)?;
    if let Some(seed) = seed {
        s.solve.seed = seed;
    }
    if let Some(step) = grid_step {
        s.solve.grid_step = step;
    }
    s.solve.validate()?;
    let checks = run_checks(&s.config, &s.solve, s.simulation.as_ref());
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{c}");
    }
    println!("{} checks, {failed} failed", checks.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Invalid(format!("{failed} checks failed")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Optimize { io, mode } => optimize(io, mode),
        Command::Sweep {
            io,
            mode,
            no_simulation,
        } => sweep(io, mode, *no_simulation),
        Command::Simulate { io, mode, drops } => simulate(io, mode, *drops),
        Command::Validate {
            config,
            seed,
            grid_step,
        } => validate(config, *seed, *grid_step),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::NotConverged) => {
            eprintln!("error: solver did not converge");
            ExitCode::from(2)
        }
    }
}
