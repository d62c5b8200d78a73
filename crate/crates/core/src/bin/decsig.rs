use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use decsig::cli::{self, Generator, SolveMode, SolveOptions, Suite, VerifyOptions};
use decsig::{Error, Result};

/// Signaling mechanisms for multi-location service systems.
#[derive(Debug, Parser)]
#[command(name = "decsig", version)]
struct Args {
    /// Tolerance for guarantee checks.
    #[arg(long, global = true, default_value_t = decsig::GUARANTEE_TOL)]
    tolerance: f64,
    /// Omit mechanism tables from solve output.
    #[arg(long, global = true)]
    summary: bool,
    /// Write output here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Seed for randomized suites.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance with the chosen mechanism family.
    Solve {
        instance: PathBuf,
        /// centralized | decentralized | heterogeneous | full-info | no-info
        #[arg(long, default_value = "centralized")]
        mode: String,
        /// Maximize payoff-weighted throughput (centralized mode).
        #[arg(long)]
        weighted: bool,
        /// Allow decentralized mode on joint priors via the single-location fallback.
        #[arg(long)]
        fallback: bool,
    },
    /// Compare all mechanism families on one instance (CSV).
    Compare { instance: PathBuf },
    /// Run a randomized property suite.
    Verify {
        /// independent-bound | tightness | correlated-bound | lemmas
        suite: String,
        /// Range of K, e.g. 2..5 (inclusive).
        #[arg(long = "K", alias = "k")]
        k: Option<String>,
        /// Comma-separated X values.
        #[arg(long = "X", alias = "x")]
        x: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Tabulate generated worst-case instances (CSV).
    Sweep {
        /// tightness | correlated
        generator: String,
        #[arg(long = "K", alias = "k", default_value = "2..6")]
        k: String,
        /// Comma-separated X values; required for tightness.
        #[arg(long = "X", alias = "x")]
        x: Option<String>,
    },
}

fn run(args: Args, out: &mut dyn Write) -> Result<i32> {
    match args.command {
        Command::Solve { instance, mode, weighted, fallback } => {
            let system = cli::InstanceFile::load(&instance)?;
            let opts = SolveOptions {
                mode: mode.parse::<SolveMode>()?,
                summary: args.summary,
                weighted,
                fallback,
            };
            cli::cmd_solve(&system, &opts, out)?;
        }
        Command::Compare { instance } => {
            let system = cli::InstanceFile::load(&instance)?;
            cli::cmd_compare(&system, out)?;
        }
        Command::Verify { suite, k, x, trials } => {
            let mut opts = VerifyOptions::new(suite.parse::<Suite>()?);
            opts.k_range = k.as_deref().map(cli::parse_k_range).transpose()?;
            opts.x_list = x.as_deref().map(cli::parse_x_list).transpose()?;
            opts.trials = trials;
            opts.seed = args.seed;
            opts.tolerance = args.tolerance;
            if !cli::cmd_verify(&opts, out)? {
                return Ok(cli::EXIT_VERIFY_FAILED);
            }
        }
        Command::Sweep { generator, k, x } => {
            let generator = generator.parse::<Generator>()?;
            let ks = cli::parse_k_range(&k)?;
            let xs = match x {
                Some(list) => cli::parse_x_list(&list)?,
                None if generator == Generator::Tightness => {
                    return Err(Error::Input("sweep tightness needs --X".into()))
                }
                None => Vec::new(),
            };
            cli::cmd_sweep(generator, ks, &xs, out)?;
        }
    }
    Ok(cli::EXIT_OK)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { cli::EXIT_INPUT as u8 } else { 0 });
        }
    };
    let mut out: Box<dyn Write> = match &args.output {
        Some(path) => match File::create(path) {
            Ok(f) => Box::new(BufWriter::new(f)),
            Err(e) => {
                eprintln!("error: cannot create {}: {e}", path.display());
                return ExitCode::from(cli::EXIT_INPUT as u8);
            }
        },
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let code = match run(args, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }
    };
    if let Err(e) = out.flush() {
        eprintln!("error: {e}");
        return ExitCode::from(cli::EXIT_INTERNAL as u8);
    }
    ExitCode::from(code as u8)
}
