use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use critex_cli::commands::{self, Failure, Globals, EXIT_USAGE};

/// Forced semilinear heat equation laboratory.
///
/// Exit codes: 0 success or horizon reached, 1 a check failed, 2 usage or
/// configuration error, 3 blow-up detected, 4 integration stalled,
/// 5 runtime or I/O error.
#[derive(Debug, Parser)]
#[command(name = "critex", version)]
struct Cli {
    /// Directory receiving every output of the run.
    #[arg(long, global = true, default_value = "critex-out")]
    out: PathBuf,

    /// Field snapshot used as the spatial profile of both u0 and w.
    #[arg(long, global = true)]
    seed_profile: Option<PathBuf>,

    /// Verify invariants (and manifest fingerprints) and exit 1 on failure.
    #[arg(long, global = true)]
    check: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the exponents for (N, p, sigma).
    Exponents {
        #[arg(short = 'N')]
        dim: u32,
        #[arg(short = 'p', allow_negative_numbers = true)]
        p: f64,
        #[arg(long, allow_negative_numbers = true)]
        sigma: f64,
        /// Lebesgue index; defaults to the window midpoint.
        #[arg(short = 'q')]
        q: Option<f64>,
    },
    /// Integrate the equation from a config file.
    Simulate { config: PathBuf },
    /// Solve the weighted fixed-point problem on a time ladder.
    Picard { config: PathBuf },
    /// Evaluate the rescaled test-function certificate.
    Certificate { config: PathBuf },
    /// Classify a (p, sigma, scale) lattice.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let globals = Globals {
        out: cli.out,
        seed_profile: cli.seed_profile,
        check: cli.check,
    };
    let result = match &cli.command {
        Command::Exponents { dim, p, sigma, q } => {
            commands::cmd_exponents(*dim, *p, *sigma, *q, globals.check)
        }
        Command::Simulate { config } => commands::cmd_simulate(config, &globals),
        Command::Picard { config } => commands::cmd_picard(config, &globals),
        Command::Certificate { config } => commands::cmd_certificate(config, &globals),
        Command::Sweep { config, workers } => commands::cmd_sweep(config, *workers, &globals),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
