use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use nhqubit::cli::{run_with_jobs, JOBS_ENV};
use nhqubit::config::{parse_config, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Spectrum,
    Ep,
    Sweep,
    Relax,
    Loop,
    Trajectories,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Spectrum => Command::Spectrum,
            Cmd::Ep => Command::Ep,
            Cmd::Sweep => Command::Sweep,
            Cmd::Relax => Command::Relax,
            Cmd::Loop => Command::Loop,
            Cmd::Trajectories => Command::Trajectories,
        }
    }
}

/// Liouvillian spectra, exceptional points and quantum-jump dynamics of a
/// driven three-level qubit.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    command: Cmd,
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (falls back to `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = JOBS_ENV, default_value_t = 0)]
    jobs: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let wanted = Command::from(args.command);
    if cfg.command() != wanted {
        eprintln!("error: config is for `{}` but `{wanted}` was requested", cfg.command());
        return ExitCode::from(2);
    }
    let Some(out) = args.out.or_else(|| cfg.out.clone().map(PathBuf::from)) else {
        eprintln!("error: no output directory (pass --out or set `out` in the config)");
        return ExitCode::from(2);
    };
    match run_with_jobs(&cfg, &out, args.seed, args.jobs) {
        Ok(s) => {
            eprintln!("wrote {} rows to {} ({:.2} s)", s.rows, s.csv.display(), s.elapsed_seconds);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
