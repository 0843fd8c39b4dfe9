use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use qvband::cli::{self, Command, Format, RunOptions};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Lattice price, policy summary and optional surface export.
    Price,
    /// Fund the superhedge and audit it on simulated paths.
    Hedge,
    /// Compare the lattice price with Monte Carlo dual bounds.
    Duality,
    /// Capacity estimate with axiom and Markov checks.
    Capacity,
    /// Realized QV containment and the subdivision sweep.
    Qv,
    /// Lattice price over a resolution sweep.
    Converge,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Fmt {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Parser)]
#[command(
    name = "qvband",
    version,
    about = "Superreplication pricing under a quadratic-variation band"
)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// Run configuration (key = value with [sections]).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; falls back to output.dir, then $QVBAND_OUT_DIR, then ".".
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Fmt>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match args.command {
        Cmd::Price => Command::Price,
        Cmd::Hedge => Command::Hedge,
        Cmd::Duality => Command::Duality,
        Cmd::Capacity => Command::Capacity,
        Cmd::Qv => Command::Qv,
        Cmd::Converge => Command::Converge,
    };
    let opts = RunOptions {
        seed: args.seed,
        out_dir: args.out,
        format: args.format.map(|f| match f {
            Fmt::Json => Format::Json,
            Fmt::Csv => Format::Csv,
            Fmt::Text => Format::Text,
        }),
        ..RunOptions::from_env()
    };
    let result = cli::load_config(&args.config).and_then(|cfg| cli::run(command, &cfg, &opts));
    match result {
        Ok(summary) => {
            println!("{}", summary.headline);
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qvband: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
