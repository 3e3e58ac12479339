//! Command-line front end for the multimerger toolkit.
//!
//! `mmc` runs simulation and inference experiments and writes tidy CSV
//! plus a JSON metadata sidecar per output directory; rendering plots is
//! left to external tools. Exit codes: 0 on success, 2 for usage and
//! config errors, 1 for runtime failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::{
    read_config, usage, AbcSpec, BetaProvenance, CanningsSpec, DemographySpec, MeasureSpec,
    PshareSpec, SimulateSpec, UsageError,
};

#[derive(Parser)]
#[command(
    name = "mmc",
    version,
    about = "Simulation and inference toolkit for multiple-merger coalescents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate genealogies and per-replicate summary statistics.
    Simulate(SimulateArgs),
    /// Tabulate root-sharing probabilities for nested subsamples.
    Pshare(PshareArgs),
    /// Build a reference table, train a forest and report its accuracy.
    Abc(AbcArgs),
    /// Check convergence of discrete models to their coalescent limit.
    CanningsValidate(CanningsArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file mirroring the flags below; replaces them.
    #[arg(
        long,
        conflicts_with_all = [
            "measure", "params", "beta_provenance", "n", "theta", "s_target",
            "demography", "reps", "seed", "newick",
        ]
    )]
    config: Option<PathBuf>,
    /// Measure family: kingman, bsz, beta, dirac or eldon-wakeley.
    #[arg(long)]
    measure: Option<String>,
    /// JSON object with the family parameters, for example {"alpha":1.5}.
    #[arg(long)]
    params: Option<String>,
    /// How beta parameters are read: alpha for Beta(2-alpha, alpha),
    /// shape for explicit a and b.
    #[arg(long, value_enum)]
    beta_provenance: Option<BetaProvenance>,
    /// Sample size.
    #[arg(long)]
    n: Option<u32>,
    /// Scaled mutation rate; enables the statistics output.
    #[arg(long)]
    theta: Option<f64>,
    /// Expected number of segregating sites; converted to a mutation rate
    /// through the expected tree length.
    #[arg(long, conflicts_with = "theta")]
    s_target: Option<f64>,
    /// JSON description of the size profile and time-scale exponent.
    #[arg(long)]
    demography: Option<String>,
    /// Number of genealogies.
    #[arg(long)]
    reps: Option<u64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write one Newick string per genealogy.
    #[arg(long)]
    newick: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

impl SimulateArgs {
    fn spec(&self) -> Result<SimulateSpec> {
        if let Some(path) = &self.config {
            return read_config(path);
        }
        let name = require(self.measure.as_deref(), "--measure")?;
        Ok(SimulateSpec {
            measure: MeasureSpec::from_flags(name, self.params.as_deref(), self.beta_provenance)?,
            n: require(self.n, "--n")?,
            theta: self.theta,
            s_target: self.s_target,
            demography: self
                .demography
                .as_deref()
                .map(DemographySpec::parse)
                .transpose()?,
            reps: require(self.reps, "--reps")?,
            seed: require(self.seed, "--seed")?,
            newick: self.newick,
        })
    }
}

#[derive(Args)]
struct PshareArgs {
    /// JSON file mirroring the flags below; replaces them.
    #[arg(long, conflicts_with_all = ["measure", "params", "beta_provenance", "n", "m"])]
    config: Option<PathBuf>,
    /// Measure family: kingman, bsz, beta, dirac or eldon-wakeley.
    #[arg(long)]
    measure: Option<String>,
    /// JSON object with the family parameters, for example {"alpha":1.5}.
    #[arg(long)]
    params: Option<String>,
    /// How beta parameters are read: alpha for Beta(2-alpha, alpha),
    /// shape for explicit a and b.
    #[arg(long, value_enum)]
    beta_provenance: Option<BetaProvenance>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u32>>,
    /// Subsample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<u32>>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

impl PshareArgs {
    fn spec(&self) -> Result<PshareSpec> {
        if let Some(path) = &self.config {
            return read_config(path);
        }
        let name = require(self.measure.as_deref(), "--measure")?;
        Ok(PshareSpec {
            measure: MeasureSpec::from_flags(name, self.params.as_deref(), self.beta_provenance)?,
            n: require(self.n.clone(), "--n")?,
            m: require(self.m.clone(), "--m")?,
        })
    }
}

#[derive(Args)]
struct AbcArgs {
    /// JSON run description; see the repository readme for the fields.
    #[arg(long)]
    config: PathBuf,
    /// Rerun with a seed independent of the configured one, for
    /// stability checks of the reported error rates.
    #[arg(long)]
    independent_seed: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CanningsArgs {
    /// JSON run description; see the repository readme for the fields.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("{flag} is required when no --config is given")))
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(threads) = threads {
        if threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|error| usage(format!("cannot configure {threads} threads: {error}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            configure_threads(args.threads)?;
            let spec = args.spec()?;
            commands::run_simulate(&spec, &args.out)
        }
        Command::Pshare(args) => {
            configure_threads(args.threads)?;
            let spec = args.spec()?;
            commands::run_pshare(&spec, &args.out)
        }
        Command::Abc(args) => {
            configure_threads(args.threads)?;
            let spec: AbcSpec = read_config(&args.config)?;
            commands::run_abc(&spec, &args.out, args.independent_seed)
        }
        Command::CanningsValidate(args) => {
            configure_threads(args.threads)?;
            let spec: CanningsSpec = read_config(&args.config)?;
            commands::run_cannings_validate(&spec, &args.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) if error.is::<UsageError>() => {
            eprintln!("usage error: {error:#}");
            ExitCode::from(2)
        }
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(1)
        }
    }
}
